"""Closed-form delivery time and placement when every user is always active (U = M + N)."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import List, Sequence, Tuple

import numpy as np

REL_SLACK = 1e-12


class InfeasibleRatesError(ValueError):
    """Some user's rate exceeds the fair-share bound ``sum(R) / N``."""


def feasibility_check(rates: Sequence[float], N: int) -> Tuple[bool, List[bool]]:
    """Per-user test ``R_i <= sum(R) / N`` and the overall verdict."""
    r = np.asarray(rates, dtype=float)
    if N == 0:
        return True, [True] * len(r)
    bound = r.sum() / N
    per_user = [bool(x <= bound * (1 + REL_SLACK)) for x in r]
    return all(per_user), per_user


def closed_form_solution(rates: Sequence[float], N: int, M: int) -> Tuple[float, np.ndarray]:
    """Minimal delivery time ``T = N / sum(R)`` and cache fractions ``q_u = 1 - T R_u``."""
    r = np.asarray(rates, dtype=float)
    if len(r) != M + N:
        raise ValueError(f"closed form needs U = M + N, got U={len(r)}, M={M}, N={N}")
    if N == 0:
        # every user already stores everything
        return 0.0, np.ones(len(r))
    if np.any(r < 0) or not r.sum() > 0:
        raise ValueError("rates must be nonnegative with a positive sum")
    ok, _ = feasibility_check(r, N)
    if not ok:
        raise InfeasibleRatesError(
            f"max rate {r.max():g} exceeds sum(R)/N = {r.sum() / N:g}; use the capped rates or the LP"
        )
    T = float(N / r.sum())
    q = np.clip(1.0 - T * r, 0.0, 1.0)
    return T, q


@dataclass
class SectionLayout:
    """File layout on ``[0, 1)``.

    ``segments`` holds ``(start, end, caching users)`` for consecutive pieces of
    every file; ``user_intervals[u]`` lists the pieces stored at user ``u``.
    """

    segments: List[Tuple[float, float, Tuple[int, ...]]]
    user_intervals: List[List[Tuple[float, float]]]

    @property
    def q(self) -> np.ndarray:
        return np.array([sum(b - a for a, b in iv) for iv in self.user_intervals])

    def section_lengths(self, U: int, M: int) -> np.ndarray:
        """Lengths ``u_l`` indexed like the LP's canonical section list."""
        index = {s: k for k, s in enumerate(combinations(range(U), M))}
        u = np.zeros(len(index))
        for a, b, users in self.segments:
            u[index[tuple(sorted(users))]] += b - a
        return u


def placement_for_closed_form(q: Sequence[float], M: int, tol: float = 1e-9) -> SectionLayout:
    """Wrap-around tiling: lay the fractions end to end on ``[0, M)`` and fold mod 1.

    Each user's piece has length at most one, so it never overlaps itself, and
    every point of a file ends up stored at exactly ``M`` users.
    """
    q = np.asarray(q, dtype=float)
    if np.any(q < -tol) or np.any(q > 1 + tol) or abs(q.sum() - M) > tol * max(1, len(q)):
        raise ValueError("cache fractions must lie in [0, 1] and sum to M")
    q = np.clip(q, 0.0, 1.0)
    user_intervals: List[List[Tuple[float, float]]] = []
    pos = 0.0
    for qu in q:
        start, end = pos, pos + float(qu)
        pieces = []
        k = float(np.floor(start))
        a, b = start - k, end - k
        if b <= 1.0 + tol:
            if b - a > tol:
                pieces.append((a, min(b, 1.0)))
        else:
            if 1.0 - a > tol:
                pieces.append((a, 1.0))
            if b - 1.0 > tol:
                pieces.append((0.0, b - 1.0))
        user_intervals.append(sorted(pieces))
        pos = end

    cuts = sorted({0.0, 1.0} | {x for iv in user_intervals for p in iv for x in p})
    segments = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a <= tol:
            continue
        mid = 0.5 * (a + b)
        users = tuple(u for u, iv in enumerate(user_intervals) if any(s <= mid < e for s, e in iv))
        if segments and segments[-1][2] == users and abs(segments[-1][1] - a) <= tol:
            segments[-1] = (segments[-1][0], b, users)
        else:
            segments.append((a, b, users))
    return SectionLayout(segments=segments, user_intervals=user_intervals)


def closed_form_schedule(rates: Sequence[float], N: int, M: int):
    """Explicit delivery schedule for the closed-form solution.

    All users are active for the whole time ``T``. User ``u`` is served its
    uncached pieces in file order; the resulting time line is cut wherever any
    user switches section, giving one mode per piece.
    """
    from .enumeration import enumerate_sections
    from .lp import ScheduleEntry

    r = np.asarray(rates, dtype=float)
    U = len(r)
    T, q = closed_form_solution(r, N, M)
    layout = placement_for_closed_form(q, M)
    u = layout.section_lengths(U, M)
    sections = enumerate_sections(U, M)
    # per user: ordered (section index, time needed)
    plans = []
    for i in range(U):
        plans.append([(s.index, u[s.index] / r[i]) for s in sections if s.b[i] == 0 and u[s.index] > 0])
    cuts = {0.0, T}
    for plan in plans:
        t = 0.0
        for _, dt in plan:
            t += dt
            cuts.add(min(t, T))
    cuts = sorted(cuts)
    schedule = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a <= 1e-12:
            continue
        mid = 0.5 * (a + b)
        E = np.zeros((len(sections), U), dtype=np.int8)
        for i, plan in enumerate(plans):
            t = 0.0
            for l, dt in plan:
                if t <= mid < t + dt:
                    E[l, i] = 1
                    break
                t += dt
        schedule.append(ScheduleEntry(tuple(range(U)), E, float(b - a)))
    return schedule, u
