"""Command-line entry point.

Exit status: 0 on success, 1 on a domain failure (infeasible instance, failed
verification), 2 on usage errors (bad arguments, unreadable or malformed input).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import baseline, closed_form, enumeration, experiments, lp, power, schemas
from .channel import NetworkScenario, effective_gains, sample_fading, user_rate_mc

log = logging.getLogger("cachemimo")


class UsageError(Exception):
    pass


def _emit(doc, args) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _with_seed(doc: dict, args) -> dict:
    if args.seed is not None:
        doc["seed"] = args.seed
    return doc


def cmd_enumerate(args) -> int:
    if args.cache + args.dim > args.users:
        raise UsageError("cache + dim must not exceed users")
    _emit(_with_seed(enumeration.counts(args.users, args.cache, args.dim), args), args)
    return 0


def cmd_solve(args) -> int:
    inst = schemas.instance_from_doc(schemas.load_document(args.instance, schemas.INSTANCE_SCHEMA))
    sol = lp.solve(inst, backoff=args.backoff, cap=args.cap)
    _emit(_with_seed(schemas.solution_to_doc(sol), args), args)
    return 0


def cmd_closed_form(args) -> int:
    inst = schemas.instance_from_doc(schemas.load_document(args.instance, schemas.INSTANCE_SCHEMA))
    if inst.U != inst.M + inst.N:
        raise UsageError(f"closed form requires users == cache_copies + antennas_dim, got {inst.U}")
    ok, per_user = closed_form.feasibility_check(inst.rates, inst.N)
    doc = {"instance": schemas.instance_to_doc(inst), "feasible": ok, "feasible_per_user": per_user}
    if not ok:
        _emit(_with_seed(doc, args), args)
        return 1
    schedule, u = closed_form.closed_form_schedule(inst.rates, inst.N, inst.M)
    T, q = closed_form.closed_form_solution(inst.rates, inst.N, inst.M)
    doc.update({
        "T": float(T),
        "net_throughput": float(inst.N / T),
        "u": schemas.sections_doc(inst.U, inst.M, u),
        "q": [float(x) for x in q],
        "schedule": schemas.schedule_doc(schedule),
    })
    _emit(_with_seed(doc, args), args)
    return 0


def _scenario(args) -> NetworkScenario:
    doc = schemas.load_document(args.scenario, schemas.SCENARIO_SCHEMA)
    if args.seed is not None:
        doc["seed"] = args.seed
    return NetworkScenario.from_config(doc)


def cmd_power(args) -> int:
    sc = _scenario(args)
    gains = effective_gains(sc, sample_fading(sc))
    if args.scheme == "optimal":
        alloc = power.constrained_allocation(sc, gains)
    elif args.scheme == "equal_rate":
        alloc = power.equal_rate_allocation(sc, gains)
    else:
        alloc = power.equal_power_allocation(sc, gains)
    doc = alloc.to_dict()
    doc["distance"] = list(sc.distances)
    doc["seed"] = sc.seed
    _emit(doc, args)
    return 0


def cmd_rates(args) -> int:
    sc = _scenario(args)
    fading = sample_fading(sc)
    p_user = sc.total_power / sc.num_users
    rows = [(i, sc.distances[i], p_user, user_rate_mc(sc, fading, i, p_user)) for i in range(sc.num_users)]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        fh.write(f"# seed={sc.seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "distance", "power", "rate"])
        for i, d, p, r in rows:
            w.writerow([i, repr(d), repr(p), repr(r)])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def cmd_compare(args) -> int:
    inst = schemas.instance_from_doc(schemas.load_document(args.instance, schemas.INSTANCE_SCHEMA))
    _emit(_with_seed(baseline.compare(inst), args), args)
    return 0


def cmd_simulate(args) -> int:
    doc = schemas.load_document(args.config, schemas.CONFIG_SCHEMA) if args.config else {}
    cfg = experiments.ExperimentConfig.from_dict(doc)
    if args.full:
        cfg = replace(cfg, realizations=1000)
    if args.realizations is not None:
        cfg = replace(cfg, realizations=args.realizations)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    records = experiments.run_grid(cfg, workers=args.workers)
    paths = experiments.emit_outputs(records, args.out_dir, cfg)
    sys.stdout.write(json.dumps({k: str(v) for k, v in paths.items()}, indent=2) + "\n")
    return 1 if any(r.flagged for r in records) else 0


def cmd_verify(args) -> int:
    doc = schemas.load_document(args.solution, schemas.SOLUTION_SCHEMA)
    inst, u, schedule, backoff = schemas.solution_from_doc(doc)
    report = lp.verify_schedule(schedule, u, inst, allow_excess=backoff)
    total = sum(e.duration for e in schedule)
    out = report.to_dict()
    out["T_schedule"] = total
    if abs(total - doc["T"]) > 1e-6 * max(1.0, doc["T"]):
        out["ok"] = False
        out["T_mismatch"] = {"declared": doc["T"], "schedule_total": total}
    _emit(_with_seed(out, args), args)
    return 0 if out["ok"] else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cachemimo", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None, help="override the RNG seed of any input")
    p.add_argument("--schema", action="store_true", help="print the JSON schemas and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("enumerate", help="LP size for (U, M, N)")
    s.add_argument("--users", type=int, required=True)
    s.add_argument("--cache", type=int, required=True)
    s.add_argument("--dim", type=int, required=True)
    s.set_defaults(func=cmd_enumerate)

    s = sub.add_parser("solve", help="solve the delivery LP for an instance")
    s.add_argument("instance")
    s.add_argument("--backoff", action="store_true", help="allow serving users below their link rate")
    s.add_argument("--cap", type=int, default=enumeration.DEFAULT_VARIABLE_CAP)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("closed-form", help="closed-form solution for U = M + N")
    s.add_argument("instance")
    s.set_defaults(func=cmd_closed_form)

    s = sub.add_parser("power", help="power allocation for a scenario")
    s.add_argument("scenario")
    s.add_argument("--scheme", choices=["optimal", "equal_power", "equal_rate"], default="optimal")
    s.set_defaults(func=cmd_power)

    s = sub.add_parser("rates", help="per-user rates at equal power (CSV)")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_rates)

    s = sub.add_parser("compare", help="optimal LP vs min-rate baseline")
    s.add_argument("instance")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("simulate", help="Monte Carlo throughput study")
    s.add_argument("config", nargs="?", help="experiment config JSON (defaults if omitted)")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--realizations", type=int)
    s.add_argument("--full", action="store_true", help="full-scale run (1000 realizations)")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("verify", help="check a solution file")
    s.add_argument("solution")
    s.set_defaults(func=cmd_verify)

    for name, sp in sub.choices.items():
        if name != "simulate":
            sp.add_argument("--out", help="write output here instead of stdout")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.schema:
        sys.stdout.write(json.dumps(schemas.SCHEMAS, indent=2) + "\n")
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        sys.stderr.write("cachemimo: error: a subcommand is required\n")
        return 2
    try:
        return args.func(args)
    except (schemas.DocumentError, UsageError) as exc:
        sys.stderr.write(f"cachemimo: error: {exc}\n")
        return 2
    except (lp.LPError, closed_form.InfeasibleRatesError, power.ConvergenceError,
            enumeration.TooManyVariablesError, ValueError) as exc:
        sys.stderr.write(f"cachemimo: {type(exc).__name__}: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
