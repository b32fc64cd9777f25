"""Delivery-time minimization LP: joint cache placement and transmission schedule.

Variables are the section lengths ``u_l`` (one per storage pattern) followed
by the mode durations ``T_j^c`` (combinations in canonical order, modes in
canonical order within each). Constraints::

    sum_l u_l = 1
    sum_{c,j} T_j^c E_j^c[l, i] = u_l / R_i      for every (l, i) with b_l(i) = 0
    u, T >= 0

Solved with HiGHS interior point followed by crossover, which ends on a
vertex, so at most ``L (U - M) + 1`` variables are nonzero.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .enumeration import (
    DEFAULT_VARIABLE_CAP,
    SectionVector,
    check_cap,
    column_choices,
    enumerate_combinations,
    enumerate_sections,
    validate_mode,
)

log = logging.getLogger(__name__)

ACTIVE_THRESHOLD = 1e-9
VERIFY_TOL = 1e-6


class LPError(RuntimeError):
    pass


class InfeasibleLPError(LPError):
    pass


@dataclass(frozen=True)
class ProblemInstance:
    """Abstract caching problem: ``U`` users, multiplexing dimension ``N``, ``M`` cache copies."""

    rates: Tuple[float, ...]
    N: int
    M: int
    F: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if self.F is None:
            object.__setattr__(self, "F", self.U)
        if not self.rates:
            raise ValueError("at least one user is required")
        if min(self.rates) <= 0:
            raise ValueError("rates must be strictly positive")
        if self.N < 1 or self.M < 0:
            raise ValueError("need N >= 1 and M >= 0")
        if self.M + self.N > self.U:
            raise ValueError(f"M + N = {self.M + self.N} exceeds the number of users {self.U}")
        if self.F < self.U:
            raise ValueError("number of files must be at least the number of users")

    @property
    def U(self) -> int:
        return len(self.rates)


@dataclass
class DeliveryLp:
    instance: ProblemInstance
    sections: List[SectionVector]
    combinations: List[Tuple[int, ...]]
    mode_combination: np.ndarray  # (n_modes,) index into combinations
    mode_assignment: np.ndarray  # (n_modes, M+N) section received by each active user
    row_keys: List[Tuple[int, int]]  # (section, user) of each delivery row, offset by 1
    A: sp.csr_matrix = field(repr=False)
    b: np.ndarray = field(repr=False)
    cost: np.ndarray = field(repr=False)
    bounds: list = field(repr=False)
    backoff: bool = False

    @property
    def num_sections(self) -> int:
        return len(self.sections)

    @property
    def num_variables(self) -> int:
        return self.A.shape[1]

    @property
    def num_constraints(self) -> int:
        return self.A.shape[0]

    def mode_matrix(self, k: int) -> np.ndarray:
        comb = self.combinations[self.mode_combination[k]]
        e = np.zeros((self.num_sections, self.instance.U), dtype=np.int8)
        e[self.mode_assignment[k], list(comb)] = 1
        return e


@dataclass(frozen=True)
class ScheduleEntry:
    combination: Tuple[int, ...]
    mode: np.ndarray = field(repr=False)
    duration: float = 0.0


@dataclass
class Placement:
    """Cache fractions per user plus the explicit file layout.

    ``intervals`` lists ``(section index, caching users, start, end)``: section
    ``l`` occupies ``[start, end)`` of every file.
    """

    q: np.ndarray
    intervals: List[Tuple[int, Tuple[int, ...], float, float]]


@dataclass
class DeliverySolution:
    lp: DeliveryLp
    u: np.ndarray
    durations: np.ndarray
    T: float

    @property
    def q(self) -> np.ndarray:
        b = np.array([s.b for s in self.lp.sections], dtype=float)
        return b.T @ self.u

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.u, self.durations])

    @property
    def num_active(self) -> int:
        return int(np.count_nonzero(self.x > ACTIVE_THRESHOLD))

    @property
    def net_throughput(self) -> float:
        inst = self.lp.instance
        return (inst.U - inst.M) / self.T if self.T > 0 else float("inf")


def build_lp(instance: ProblemInstance, cap: int = DEFAULT_VARIABLE_CAP, *,
             backoff: bool = False, serve_at_group_min: bool = False,
             fixed_sections: Optional[Sequence[float]] = None) -> DeliveryLp:
    """Assemble the sparse LP for ``instance``.

    ``backoff`` turns the delivery equalities into ``>=`` (a user may be served
    below its link rate), which keeps ``U = M + N`` instances feasible when a
    rate exceeds the fair-share bound. ``serve_at_group_min`` and
    ``fixed_sections`` are used by the min-rate baseline.
    """
    U, M, N = instance.U, instance.M, instance.N
    check_cap(U, M, N, cap)
    rates = np.asarray(instance.rates)
    sections = enumerate_sections(U, M)
    L = len(sections)
    bmat = np.array([s.b for s in sections], dtype=np.int8)

    row_of = np.full((L, U), -1, dtype=np.int64)
    row_keys = []
    for l in range(L):
        for i in range(U):
            if bmat[l, i] == 0:
                row_keys.append((l, i))
                row_of[l, i] = len(row_keys)
    n_rows = len(row_keys) + 1

    rows = [np.zeros(L, dtype=np.int64)]
    cols = [np.arange(L)]
    vals = [np.ones(L)]
    keys = np.array(row_keys)
    rows.append(np.arange(1, n_rows))
    cols.append(keys[:, 0])
    vals.append(-1.0 / rates[keys[:, 1]])

    combinations = enumerate_combinations(U, M + N)
    mode_comb, mode_assign = [], []
    col = L
    for ci, comb in enumerate(combinations):
        assign = np.array(list(itertools.product(*column_choices(comb, sections))), dtype=np.int64)
        J = len(assign)
        users = np.broadcast_to(np.array(comb), assign.shape)
        rows.append(row_of[assign, users].ravel())
        cols.append(np.repeat(np.arange(col, col + J), len(comb)))
        if serve_at_group_min:
            coef = rates[list(comb)].min() / rates[users]
        else:
            coef = np.ones(assign.shape)
        vals.append(coef.ravel())
        mode_comb.append(np.full(J, ci))
        mode_assign.append(assign)
        col += J

    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_rows, col)
    )
    b = np.zeros(n_rows)
    b[0] = 1.0
    cost = np.concatenate([np.zeros(L), np.ones(col - L)])
    bounds = [(0.0, None)] * col
    if fixed_sections is not None:
        if len(fixed_sections) != L:
            raise ValueError(f"expected {L} fixed section lengths")
        bounds[:L] = [(float(v), float(v)) for v in fixed_sections]
    return DeliveryLp(
        instance=instance,
        sections=sections,
        combinations=combinations,
        mode_combination=np.concatenate(mode_comb) if mode_comb else np.zeros(0, np.int64),
        mode_assignment=np.vstack(mode_assign) if mode_assign else np.zeros((0, M + N), np.int64),
        row_keys=row_keys,
        A=A,
        b=b,
        cost=cost,
        bounds=bounds,
        backoff=backoff,
    )


def _linprog(lp: DeliveryLp, method: str):
    opts = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
    if lp.backoff:
        return linprog(lp.cost, A_ub=-lp.A[1:], b_ub=np.zeros(lp.A.shape[0] - 1),
                       A_eq=lp.A[:1], b_eq=lp.b[:1], bounds=lp.bounds, method=method, options=opts)
    return linprog(lp.cost, A_eq=lp.A, b_eq=lp.b, bounds=lp.bounds, method=method, options=opts)


def solve_lp(lp: DeliveryLp) -> DeliverySolution:
    """Solve to a basic optimal solution and check primal feasibility to 1e-8.

    Interior point with crossover first; dual simplex if that stalls, since
    the interior-point code reports some infeasible models as a solve error.
    """
    res = _linprog(lp, "highs-ipm")
    if res.status not in (0, 2):
        log.debug("interior point returned status %d, retrying with dual simplex", res.status)
        res = _linprog(lp, "highs-ds")
    if res.status == 2:
        raise InfeasibleLPError(f"delivery LP infeasible: {res.message}")
    if res.status != 0:
        raise LPError(f"LP solver failed (status {res.status}): {res.message}")
    x = np.where(np.abs(res.x) < 1e-13, 0.0, res.x)
    r = lp.A @ x - lp.b
    resid = np.abs(r[0]) if lp.backoff else np.max(np.abs(r))
    if lp.backoff:
        resid = max(resid, float(np.max(-r[1:], initial=0.0)))
    if resid > 1e-8:
        raise LPError(f"solution violates constraints by {resid:.3e}")
    L = lp.num_sections
    log.debug("LP solved: T=%.10g, %d nonzeros, %d iterations", res.fun, np.count_nonzero(x), res.nit)
    return DeliverySolution(lp=lp, u=x[:L].copy(), durations=x[L:].copy(), T=float(np.sum(x[L:])))


def solve(instance: ProblemInstance, **kwargs) -> DeliverySolution:
    return solve_lp(build_lp(instance, **kwargs))


def extract_placement(solution: DeliverySolution) -> Placement:
    """Per-user cache fractions and the file intervals occupied by each section."""
    intervals = []
    start = 0.0
    for s, u in zip(solution.lp.sections, solution.u):
        if u > ACTIVE_THRESHOLD:
            intervals.append((s.index, s.support, start, start + float(u)))
            start += float(u)
    return Placement(q=solution.q, intervals=intervals)


def extract_schedule(solution: DeliverySolution) -> List[ScheduleEntry]:
    lp = solution.lp
    out = []
    for k in np.flatnonzero(solution.durations > ACTIVE_THRESHOLD):
        comb = lp.combinations[lp.mode_combination[k]]
        out.append(ScheduleEntry(comb, lp.mode_matrix(k), float(solution.durations[k])))
    return out


@dataclass
class VerificationReport:
    ok: bool
    max_error: float
    shortfalls: List[dict] = field(default_factory=list)
    invalid_modes: List[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "max_error": self.max_error,
            "shortfalls": self.shortfalls,
            "invalid_modes": self.invalid_modes,
        }


def verify_schedule(schedule: Sequence[ScheduleEntry], section_lengths: Sequence[float],
                    instance: ProblemInstance, *, allow_excess: bool = False,
                    tol: float = VERIFY_TOL) -> VerificationReport:
    """Check that the schedule delivers every uncached section to every user.

    For each user ``i`` and section ``l`` with ``b_l(i) = 0`` the data received,
    ``sum duration * E[l, i] * R_i``, must equal ``u_l`` within ``tol``
    (or reach it, when ``allow_excess``). Every mode must satisfy C1-C5.
    """
    U, M, N = instance.U, instance.M, instance.N
    sections = enumerate_sections(U, M)
    u = np.asarray(section_lengths, dtype=float)
    if u.shape != (len(sections),):
        raise ValueError(f"expected {len(sections)} section lengths, got {u.shape}")
    rates = np.asarray(instance.rates)
    report = VerificationReport(ok=True, max_error=0.0)

    if abs(u.sum() - 1.0) > tol or np.any(u < -tol):
        report.ok = False
        report.shortfalls.append({"user": None, "section": None,
                                  "error": "section lengths must be nonnegative and sum to 1"})
    delivered = np.zeros((len(sections), U))
    for k, entry in enumerate(schedule):
        E = np.asarray(entry.mode)
        good, why = validate_mode(E, sections, entry.combination, M, N)
        if not good:
            report.ok = False
            report.invalid_modes.append({"entry": k, "combination": list(entry.combination), "reason": why})
            continue
        if entry.duration < -tol:
            report.ok = False
            report.invalid_modes.append({"entry": k, "reason": "negative duration"})
        delivered += entry.duration * E * rates[None, :]

    bmat = np.array([s.b for s in sections])
    for l, i in zip(*np.nonzero(bmat == 0)):
        err = delivered[l, i] - u[l]
        bad = err < -tol or (not allow_excess and err > tol)
        report.max_error = max(report.max_error, abs(err) if not allow_excess else max(-err, 0.0))
        if bad:
            report.ok = False
            report.shortfalls.append({
                "user": int(i), "section": int(l),
                "delivered": float(delivered[l, i]), "required": float(u[l]),
            })
    return report
