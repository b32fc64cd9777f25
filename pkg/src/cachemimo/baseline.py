"""Rate-oblivious comparison scheme: every active user is served at the group's minimum rate."""

from __future__ import annotations

from math import comb
from typing import List, Tuple

import numpy as np

from .lp import DeliverySolution, ProblemInstance, ScheduleEntry, build_lp, extract_schedule, solve, solve_lp


def _solve_min_rate(instance: ProblemInstance, placement: str) -> DeliverySolution:
    if placement == "symmetric":
        L = comb(instance.U, instance.M)
        fixed = np.full(L, 1.0 / L)
    elif placement == "optimized":
        fixed = None
    else:
        raise ValueError("placement must be 'symmetric' or 'optimized'")
    return solve_lp(build_lp(instance, serve_at_group_min=True, fixed_sections=fixed))


def min_rate_schedule(instance: ProblemInstance, placement: str = "symmetric") -> Tuple[float, List[ScheduleEntry]]:
    """Best schedule when each transmission runs at the slowest active user's rate.

    ``placement='symmetric'`` fixes every section to ``1 / L``; ``'optimized'``
    lets the LP also choose the section sizes. Schedule durations are in time
    units; a user ``i`` in mode ``c`` receives ``duration * min(R_c)`` data.
    """
    sol = _solve_min_rate(instance, placement)
    return sol.T, extract_schedule(sol)


def compare(instance: ProblemInstance) -> dict:
    opt = solve(instance)
    report = {"T_optimal": opt.T}
    for placement in ("symmetric", "optimized"):
        T_b, _ = min_rate_schedule(instance, placement)
        report[f"T_baseline_{placement}"] = T_b
        report[f"ratio_{placement}"] = T_b / opt.T
    report["T_baseline"] = report["T_baseline_symmetric"]
    report["ratio"] = report["ratio_symmetric"]
    return report
