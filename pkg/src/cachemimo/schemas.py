"""JSON document schemas and (de)serialization of instances and solutions.

User indices in every document are zero-based.
"""

from __future__ import annotations

import json
from math import comb
from pathlib import Path
from typing import List, Tuple

import jsonschema
import numpy as np

from .lp import DeliverySolution, ProblemInstance, ScheduleEntry, extract_schedule

_pos_int = {"type": "integer", "minimum": 1}
_nonneg_int = {"type": "integer", "minimum": 0}
_pos_num = {"type": "number", "exclusiveMinimum": 0}

INSTANCE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "instance",
    "type": "object",
    "required": ["users", "antennas_dim", "cache_copies", "rates"],
    "properties": {
        "users": _pos_int,
        "antennas_dim": _pos_int,
        "cache_copies": _nonneg_int,
        "files": _pos_int,
        "rates": {"type": "array", "items": _pos_num, "minItems": 1},
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}

SOLUTION_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "solution",
    "type": "object",
    "required": ["instance", "T", "u", "schedule"],
    "properties": {
        "instance": INSTANCE_SCHEMA,
        "T": {"type": "number", "minimum": 0},
        "u": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["support", "length"],
                "properties": {
                    "support": {"type": "array", "items": _nonneg_int},
                    "length": {"type": "number"},
                },
            },
        },
        "q": {"type": "array", "items": {"type": "number"}},
        "schedule": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["combination", "mode_matrix", "duration"],
                "properties": {
                    "combination": {"type": "array", "items": _nonneg_int},
                    "mode_matrix": {
                        "type": "array",
                        "items": {"type": "array", "items": {"enum": [0, 1]}},
                    },
                    "duration": {"type": "number"},
                },
            },
        },
        "backoff": {"type": "boolean"},
        "feasible": {"type": "boolean"},
        "seed": {"type": "integer"},
    },
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "scenario",
    "type": "object",
    "required": ["users", "bs_antennas", "bins", "noise_power", "total_power", "pathloss_exp"],
    "properties": {
        "users": _pos_int,
        "bs_antennas": _pos_int,
        "user_antennas": _pos_int,
        "multiplexing_dim": _pos_int,
        "bins": _pos_int,
        "symbol_rate": _pos_num,
        "noise_power": _pos_num,
        "total_power": _pos_num,
        "pathloss_exp": _pos_num,
        "distances": {"type": "array", "items": _pos_num},
        "cell_radius": _pos_num,
        "seed": {"type": "integer"},
    },
    "oneOf": [{"required": ["distances"]}, {"required": ["cell_radius"]}],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "experiment config",
    "type": "object",
    "properties": {
        "realizations": _pos_int,
        "cell_radius": _pos_num,
        "alphas": {"type": "array", "items": _pos_num, "minItems": 1},
        "main_alpha": _pos_num,
        "cache_sizes": {"type": "array", "items": _nonneg_int, "minItems": 1},
        "schemes": {
            "type": "array",
            "items": {"enum": ["optimal", "equal_power", "equal_rate"]},
            "minItems": 1,
        },
        "edge_snr_db": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "bins": _pos_int,
        "antennas_dim": _pos_int,
        "user_antennas": {"const": 1},
        "symbol_rate": _pos_num,
        "noise_power": _pos_num,
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}

SCHEMAS = {
    "instance": INSTANCE_SCHEMA,
    "solution": SOLUTION_SCHEMA,
    "scenario": SCENARIO_SCHEMA,
    "config": CONFIG_SCHEMA,
}


class DocumentError(ValueError):
    """Malformed or schema-violating input document."""


def load_document(path, schema: dict) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise DocumentError(f"{path}: cannot read file ({exc.strerror})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    validate(doc, schema, str(path))
    return doc


def validate(doc: dict, schema: dict, where: str = "document") -> None:
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise DocumentError(f"{where}: field '{loc}': {exc.message}") from exc


def instance_from_doc(doc: dict) -> ProblemInstance:
    if len(doc["rates"]) != doc["users"]:
        raise DocumentError(f"'rates' has {len(doc['rates'])} entries but 'users' is {doc['users']}")
    return ProblemInstance(tuple(doc["rates"]), N=doc["antennas_dim"], M=doc["cache_copies"],
                           F=doc.get("files"))


def instance_to_doc(instance: ProblemInstance) -> dict:
    return {
        "users": instance.U,
        "antennas_dim": instance.N,
        "cache_copies": instance.M,
        "files": instance.F,
        "rates": list(instance.rates),
    }


def sections_doc(U: int, M: int, lengths) -> list:
    from itertools import combinations

    return [{"support": list(s), "length": float(v)} for s, v in zip(combinations(range(U), M), lengths)]


def schedule_doc(schedule) -> list:
    return [
        {"combination": list(e.combination), "mode_matrix": np.asarray(e.mode).astype(int).tolist(),
         "duration": float(e.duration)}
        for e in schedule
    ]


def solution_to_doc(solution: DeliverySolution) -> dict:
    inst = solution.lp.instance
    return {
        "instance": instance_to_doc(inst),
        "T": float(solution.T),
        "net_throughput": float(solution.net_throughput),
        "u": sections_doc(inst.U, inst.M, solution.u),
        "q": [float(x) for x in solution.q],
        "schedule": schedule_doc(extract_schedule(solution)),
        "backoff": solution.lp.backoff,
        "active_variables": solution.num_active,
    }


def solution_from_doc(doc: dict) -> Tuple[ProblemInstance, np.ndarray, List[ScheduleEntry], bool]:
    """Instance, canonical section lengths, schedule and the backoff flag of a solution document."""
    from itertools import combinations

    inst = instance_from_doc(doc["instance"])
    index = {s: k for k, s in enumerate(combinations(range(inst.U), inst.M))}
    u = np.zeros(comb(inst.U, inst.M))
    for entry in doc["u"]:
        key = tuple(sorted(entry["support"]))
        if key not in index:
            raise DocumentError(f"section support {list(key)} is not a set of {inst.M} users out of {inst.U}")
        u[index[key]] += entry["length"]
    shape = (len(index), inst.U)
    schedule = []
    for k, e in enumerate(doc["schedule"]):
        mat = np.asarray(e["mode_matrix"], dtype=int)
        if mat.shape != shape:
            raise DocumentError(f"schedule/{k}/mode_matrix: shape {mat.shape}, expected {shape}")
        schedule.append(ScheduleEntry(tuple(e["combination"]), mat, float(e["duration"])))
    return inst, u, schedule, bool(doc.get("backoff", False))
