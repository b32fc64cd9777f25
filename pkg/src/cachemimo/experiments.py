"""Monte Carlo throughput study for the ``U = M + N`` setting.

Each realization drops ``U = M + N`` users uniformly on a disc, draws
Rayleigh fading over ``B`` bins, allocates power with one of three schemes and
converts the resulting rates into net throughput ``(U - M) / T`` with
``T = N / sum(R)`` (rates first clipped to the fair-share bound where the
scheme does not already respect it).

The x-axis is the SNR at the cell edge, ``P r_max^-alpha / sigma^2``: the full
transmit power received at distance ``r_max``. Positions and fading depend on
``(seed, M, realization)`` only, so every scheme, path-loss exponent and SNR
point sees the same networks.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .channel import NetworkScenario, area_uniform_distances, effective_gains, sample_fading
from .closed_form import closed_form_solution
from .power import cap_to_fair_share, constrained_allocation, equal_power_allocation, equal_rate_allocation

log = logging.getLogger(__name__)

SCHEMES = ("optimal", "equal_power", "equal_rate")
SNR_CONVENTION = "edge_snr = total_power * cell_radius**-alpha / noise_power"
CSV_COLUMNS = ["scheme", "M", "alpha", "edge_snr_db", "throughput", "stderr", "realizations", "seed"]
FAIL_FRACTION = 0.01


@dataclass(frozen=True)
class ExperimentConfig:
    realizations: int = 100
    cell_radius: float = 1.0
    alphas: Tuple[float, ...] = (2.0, 3.2, 4.0)
    main_alpha: float = 3.2
    cache_sizes: Tuple[int, ...] = (0, 2, 4)
    schemes: Tuple[str, ...] = SCHEMES
    edge_snr_db: Tuple[float, ...] = (-10.0, 0.0, 10.0, 20.0, 30.0, 40.0)
    bins: int = 100
    antennas_dim: int = 4
    user_antennas: int = 1
    symbol_rate: float = 1.0
    noise_power: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("alphas", "cache_sizes", "schemes", "edge_snr_db"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.realizations < 1:
            raise ValueError("realizations must be at least 1")
        if not self.schemes:
            raise ValueError("scheme list is empty")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes: {sorted(unknown)}")
        if not self.cache_sizes or min(self.cache_sizes) < 0:
            raise ValueError("cache sizes must be a nonempty list of nonnegative integers")
        if not self.alphas or not self.edge_snr_db:
            raise ValueError("alphas and edge_snr_db must be nonempty")
        if self.user_antennas != 1:
            raise ValueError("the throughput study supports single-antenna users only")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass(frozen=True)
class ThroughputRecord:
    scheme: str
    M: int
    alpha: float
    edge_snr_db: float
    throughput: float
    stderr: float
    realizations: int
    seed: int
    failures: int = 0

    @property
    def flagged(self) -> bool:
        return self.failures > FAIL_FRACTION * (self.realizations + self.failures)


def generate_positions(num_users: int, cell_radius: float, seed: int) -> np.ndarray:
    """User distances for an area-uniform drop, ``r = r_max sqrt(U(0, 1))``."""
    return area_uniform_distances(num_users, cell_radius, seed)


def _realization_seed(config: ExperimentConfig, M: int, k: int) -> int:
    return int(np.random.SeedSequence([config.seed, M, k]).generate_state(1)[0])


def _draw(config: ExperimentConfig, M: int, k: int) -> Tuple[NetworkScenario, np.ndarray]:
    U = M + config.antennas_dim
    seed = _realization_seed(config, M, k)
    sc = NetworkScenario(
        num_users=U,
        bs_antennas=config.antennas_dim * config.user_antennas,
        user_antennas=config.user_antennas,
        multiplexing_dim=config.antennas_dim,
        bins=config.bins,
        symbol_rate=config.symbol_rate,
        noise_power=config.noise_power,
        total_power=1.0,
        pathloss_exp=config.main_alpha,
        distances=tuple(generate_positions(U, config.cell_radius, seed)),
        seed=seed,
        cell_radius=config.cell_radius,
    )
    return sc, effective_gains(sc, sample_fading(sc))


def edge_snr_to_power(config: ExperimentConfig, alpha: float, snr_db: float) -> float:
    return 10 ** (snr_db / 10) * config.noise_power * config.cell_radius ** alpha


def scheme_rates(scheme: str, scenario: NetworkScenario, gains: np.ndarray) -> np.ndarray:
    """Per-user rates that satisfy the fair-share bound for the given scheme."""
    N = scenario.multiplexing_dim
    if scheme == "optimal":
        return constrained_allocation(scenario, gains).rates
    if scheme == "equal_rate":
        return equal_rate_allocation(scenario, gains).rates
    if scheme == "equal_power":
        return cap_to_fair_share(equal_power_allocation(scenario, gains).rates, N)[0]
    raise ValueError(f"unknown scheme {scheme!r}")


def net_throughput(rates: Sequence[float], N: int, M: int) -> float:
    if not np.sum(rates) > 0:
        return 0.0
    T, _ = closed_form_solution(rates, N, M)
    return (len(rates) - M) / T


def realization_throughputs(config: ExperimentConfig, M: int, k: int,
                            points: Optional[Sequence[Tuple[str, float, float]]] = None) -> Dict[tuple, float]:
    """Throughput of realization ``k`` at every (scheme, alpha, snr) point; NaN on failure."""
    if points is None:
        points = [(s, a, x) for s in config.schemes for a in config.alphas for x in config.edge_snr_db]
    sc, gains = _draw(config, M, k)
    out = {}
    for scheme, alpha, snr_db in points:
        point_sc = replace(sc, pathloss_exp=alpha, total_power=edge_snr_to_power(config, alpha, snr_db))
        try:
            rates = scheme_rates(scheme, point_sc, gains)
            out[(scheme, alpha, snr_db)] = net_throughput(rates, config.antennas_dim, M)
        except (RuntimeError, ValueError) as exc:
            log.warning("realization %d, M=%d, %s: %s", k, M, (scheme, alpha, snr_db), exc)
            out[(scheme, alpha, snr_db)] = math.nan
    return out


def _aggregate(config: ExperimentConfig, M: int, point: tuple, values: np.ndarray) -> ThroughputRecord:
    good = values[np.isfinite(values)]
    n = len(good)
    mean = float(good.mean()) if n else math.nan
    se = float(good.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    scheme, alpha, snr = point
    return ThroughputRecord(scheme, M, float(alpha), float(snr), mean, se, n, config.seed, len(values) - n)


def run_grid(config: ExperimentConfig, points: Optional[Sequence[Tuple[str, float, float]]] = None,
             cache_sizes: Optional[Iterable[int]] = None, workers: int = 1) -> List[ThroughputRecord]:
    """Evaluate all points for every cache size; identical results for any ``workers``."""
    if points is None:
        points = [(s, a, x) for s in config.schemes for a in config.alphas for x in config.edge_snr_db]
    points = list(points)
    records = []
    for M in (config.cache_sizes if cache_sizes is None else cache_sizes):
        fn = partial(realization_throughputs, config, M, points=points)
        ks = range(config.realizations)
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                per_real = list(pool.map(fn, ks))
        else:
            per_real = [fn(k) for k in ks]
        for point in points:
            rec = _aggregate(config, M, point, np.array([r[point] for r in per_real]))
            if rec.flagged:
                log.warning("point %s M=%d: %d of %d realizations failed", point, M,
                            rec.failures, config.realizations)
            records.append(rec)
    return records


def run_point(config: ExperimentConfig, scheme: str, M: int, alpha: float, edge_snr_db: float) -> ThroughputRecord:
    return run_grid(config, [(scheme, alpha, edge_snr_db)], [M])[0]


def normalize(records: Sequence[ThroughputRecord]) -> List[ThroughputRecord]:
    """Divide by the no-cache optimal-power throughput at the same (alpha, SNR)."""
    ref = {(r.alpha, r.edge_snr_db): r.throughput for r in records if r.M == 0 and r.scheme == "optimal"}
    out = []
    for r in records:
        key = (r.alpha, r.edge_snr_db)
        if key not in ref:
            raise KeyError(f"no M=0 optimal reference at alpha={r.alpha}, edge SNR={r.edge_snr_db} dB")
        base = ref[key]
        out.append(replace(r, throughput=r.throughput / base, stderr=r.stderr / base))
    return out


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_csv(records: Sequence[ThroughputRecord], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])


def read_csv(path: Path) -> List[ThroughputRecord]:
    with open(path, newline="") as fh:
        return [
            ThroughputRecord(row["scheme"], int(row["M"]), float(row["alpha"]), float(row["edge_snr_db"]),
                             float(row["throughput"]), float(row["stderr"]), int(row["realizations"]),
                             int(row["seed"]))
            for row in csv.DictReader(fh)
        ]


_STYLE = {"optimal": "-", "equal_power": "--", "equal_rate": ":"}


def _plot(path: Path, series: Dict[str, List[Tuple[float, float]]], ylabel: str, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "cachemimo"
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for label in sorted(series):
        pts = sorted(series[label])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], _STYLE.get(label.split(",")[0], "-"),
                marker="o", markersize=3, label=label)
    ax.set_xlabel("SNR at cell edge [dB]")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def emit_outputs(records: Sequence[ThroughputRecord], out_dir, config: ExperimentConfig) -> Dict[str, Path]:
    """Write throughput/normalized CSVs, three SVG figures and a metadata file."""
    if not records:
        raise ValueError("no records to write")
    normalized = normalize(records)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"cannot write to {out}")
    paths = {name: out / name for name in
             ("throughput.csv", "normalized.csv", "fig2.svg", "fig3.svg", "fig4.svg", "metadata.json")}
    write_csv(records, paths["throughput.csv"])
    write_csv(normalized, paths["normalized.csv"])

    def by_scheme_m(recs, alpha):
        s: Dict[str, list] = {}
        for r in recs:
            if r.alpha == alpha:
                s.setdefault(f"{r.scheme}, M={r.M}", []).append((r.edge_snr_db, r.throughput))
        return s

    alpha = config.main_alpha if config.main_alpha in {r.alpha for r in records} else records[0].alpha
    _plot(paths["fig2.svg"], by_scheme_m(records, alpha), "net throughput [bit/s]",
          f"Throughput vs cell-edge SNR, alpha={alpha:g}")
    _plot(paths["fig3.svg"], by_scheme_m(normalized, alpha), "normalized throughput",
          f"Normalized throughput, alpha={alpha:g}")
    m_top = max(r.M for r in records)
    sweep: Dict[str, list] = {}
    for r in normalized:
        if r.M == m_top:
            sweep.setdefault(f"{r.scheme}, alpha={r.alpha:g}", []).append((r.edge_snr_db, r.throughput))
    _plot(paths["fig4.svg"], sweep, "normalized throughput", f"Path-loss sweep, M={m_top}")
    meta = {"seed": config.seed, "snr_convention": SNR_CONVENTION, "config": config.to_dict(),
            "flagged_points": [asdict(r) for r in records if r.flagged]}
    paths["metadata.json"].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return paths
