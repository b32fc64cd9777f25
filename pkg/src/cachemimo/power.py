"""Inter- and intra-user power allocation for single-antenna users.

All schemes work on the channel-to-noise ratio ``c[i, m] = r_i^-alpha eta[i, m] / sigma^2``
where ``eta`` is the effective (zero-forced) gain. Water-filling at level
``rho`` puts power ``(rho - 1 / c)_+`` on a bin, so ``1 + SNR = max(1, rho c)``;
this makes both rate-from-level and level-from-rate exact, and only the
outer searches (total power, common rate) need bisection.

Power bookkeeping: a user's power ``P_i`` is the bin average of its per-bin
powers and ``p[i, m]`` is the per-bin power divided by ``P_i``, so ``p`` has unit
mean whenever ``P_i > 0``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .channel import FadingRealization, NetworkScenario, effective_gains

log = logging.getLogger(__name__)

MAX_ITER = 200
POWER_RTOL = 1e-9
H_RTOL = 1e-9


class ConvergenceError(RuntimeError):
    pass


@dataclass
class PowerAllocation:
    scheme: str
    powers: np.ndarray
    intra: np.ndarray = field(repr=False)
    rates: np.ndarray
    level: Optional[float] = None
    h: int = 0
    capped: Optional[np.ndarray] = None
    iterations: int = 0

    @property
    def total_power(self) -> float:
        return float(self.powers.sum())

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "power": self.powers.tolist(),
            "rate": self.rates.tolist(),
            "h": int(self.h),
            "rho": self.level,
        }


def _cnr(scenario: NetworkScenario, gains) -> np.ndarray:
    if isinstance(gains, FadingRealization):
        if scenario.user_antennas != 1:
            raise ValueError("power allocation is implemented for single-antenna users only")
        gains = effective_gains(scenario, gains)
    gains = np.asarray(gains, dtype=float)
    if gains.ndim != 2 or gains.shape[0] != scenario.num_users:
        raise ValueError("expected effective gains of shape (users, bins)")
    return scenario.path_gains[:, None] * gains / scenario.noise_power


def _rate_scale(scenario: NetworkScenario) -> float:
    return scenario.bins * scenario.symbol_rate


def level_rates(cnr: np.ndarray, levels, scale: float) -> np.ndarray:
    """Water-filling rate of each row of ``cnr`` at its level."""
    lv = np.broadcast_to(np.asarray(levels, dtype=float), cnr.shape[:1])[:, None]
    return scale * np.mean(np.log2(np.maximum(1.0, lv * cnr)), axis=1)


def level_powers(cnr: np.ndarray, levels) -> np.ndarray:
    """Bin-averaged water-filling power of each row at its level."""
    lv = np.broadcast_to(np.asarray(levels, dtype=float), cnr.shape[:1])[:, None]
    with np.errstate(divide="ignore"):
        return np.mean(np.maximum(lv - 1.0 / cnr, 0.0), axis=1)


def levels_for_rates(cnr: np.ndarray, targets, scale: float) -> np.ndarray:
    """Smallest water level giving each row its target rate (exact inversion).

    With the ``k`` strongest bins active, ``target * B / scale = sum_k log2(rho c_(k))``,
    so ``log2 rho`` is affine in the target; pick the ``k`` whose level keeps
    exactly those bins above water.
    """
    cnr = np.atleast_2d(cnr)
    U, B = cnr.shape
    t = np.broadcast_to(np.asarray(targets, dtype=float), (U,))
    out = np.zeros(U)
    with np.errstate(divide="ignore"):
        logc = np.log2(np.sort(cnr, axis=1)[:, ::-1])
    csum = np.cumsum(logc, axis=1)
    k = np.arange(1, B + 1)
    for i in range(U):
        if t[i] <= 0:
            continue
        loglev = (t[i] * B / scale - csum[i]) / k
        # bin k active: loglev + logc_k >= 0; bin k+1 inactive: loglev + logc_{k+1} < 0
        act = loglev + logc[i] >= -1e-12
        nxt = np.append(loglev[:-1] + logc[i, 1:] < 1e-12, True)
        ok = np.flatnonzero(act & nxt & np.isfinite(loglev))
        if len(ok) == 0:
            raise ConvergenceError(f"no consistent water level for user {i} at rate {t[i]:g}")
        out[i] = 2.0 ** loglev[ok[0]]
    return out


def waterfill_rates(scenario: NetworkScenario, gains, level: float) -> Tuple[np.ndarray, np.ndarray]:
    """Per-bin powers ``(rho - sigma^2 / (r^-alpha eta))_+`` and rates at a common level."""
    if level < 0:
        raise ValueError("water level must be nonnegative")
    cnr = _cnr(scenario, gains)
    with np.errstate(divide="ignore"):
        per_bin = np.maximum(level - 1.0 / cnr, 0.0)
    return per_bin, level_rates(cnr, level, _rate_scale(scenario))


def valid_h_values(rates_sorted: Sequence[float], N: int, rtol: float = H_RTOL) -> List[Tuple[int, float]]:
    """All ``h`` in ``0..N-1`` satisfying both cap inequalities, with ``R_max(h)``.

    Rates must be sorted ascending (nearest/strongest user last). The ``U - h``
    weakest users are uncapped and must not exceed ``R_max(h)``; the ``h``
    strongest must reach it.
    """
    r = np.asarray(rates_sorted, dtype=float)
    U = len(r)
    out = []
    for h in range(0, min(N - 1, U - 1) + 1):
        rmax = r[: U - h].sum() / (N - h)
        slack = rtol * max(rmax, 1e-300)
        if np.all(r[: U - h] <= rmax + slack) and np.all(r[U - h:] >= rmax - slack):
            out.append((h, float(rmax)))
    return out


def find_h(rates_sorted: Sequence[float], N: int) -> Tuple[int, float]:
    """Number of capped users and the cap ``R_max(h) = sum_{u <= U-h} R_u / (N - h)``."""
    r = np.asarray(rates_sorted, dtype=float)
    if np.any(np.diff(r) < -H_RTOL * max(r.max(initial=0.0), 1e-300)):
        raise ValueError("rates must be sorted ascending (strongest user last)")
    found = valid_h_values(r, N)
    if not found:
        raise ValueError(f"no valid h for rates {r.tolist()} and N={N}")
    return found[0]


def cap_to_fair_share(rates: Sequence[float], N: int) -> Tuple[np.ndarray, int, float]:
    """Clip rates at ``R_max(h)`` so that every ``R_k <= sum(R) / N``."""
    r = np.asarray(rates, dtype=float)
    order = np.argsort(r, kind="stable")
    h, rmax = find_h(r[order], N)
    out = r.copy()
    out[order[len(r) - h:]] = rmax
    return out, h, rmax


def _bisect(fn, target: float, lo: float, hi: float, what: str) -> Tuple[float, int]:
    """Find x with fn(x) ~= target for increasing fn; returns (x, iterations)."""
    f_hi = fn(hi)
    while f_hi < target:
        lo, hi = hi, hi * 2.0
        f_hi = fn(hi)
        if hi > 1e300:
            raise ConvergenceError(f"{what}: could not bracket target {target:g}")
    while fn(lo) > target and lo > 1e-300:
        hi, lo = lo, lo / 2.0
    for it in range(1, MAX_ITER + 1):
        mid = 0.5 * (lo + hi)
        f = fn(mid)
        if abs(f - target) <= POWER_RTOL * target:
            return mid, it
        if f < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            if abs(fn(hi) - target) <= 1e-6 * target:
                return hi, it
            if fn(lo) <= target <= fn(hi):
                # the root lies between adjacent floats; stay within budget
                log.debug("%s: target %g not resolvable in x, using lower end", what, target)
                return lo, it
            break
    raise ConvergenceError(f"{what}: bisection stalled with bracket [{lo:.17g}, {hi:.17g}]")


def _allocation(scheme: str, cnr: np.ndarray, levels: np.ndarray, scale: float, **extra) -> PowerAllocation:
    with np.errstate(divide="ignore"):
        per_bin = np.maximum(levels[:, None] - 1.0 / cnr, 0.0)
    powers = per_bin.mean(axis=1)
    intra = np.ones_like(per_bin)
    pos = powers > 0
    intra[pos] = per_bin[pos] / powers[pos, None]
    rates = level_rates(cnr, levels, scale)
    return PowerAllocation(scheme=scheme, powers=powers, intra=intra, rates=rates, **extra)


def constrained_allocation(scenario: NetworkScenario, gains, total_power: Optional[float] = None,
                           N: Optional[int] = None) -> PowerAllocation:
    """Maximize the sum rate subject to ``R_k <= sum(R) / N`` and the power budget.

    Outer bisection on the common water level. At each level the uncapped
    users water-fill, ``h`` is found from their rates and the ``h`` strongest
    users are held at ``R_max(h)`` with the least power that achieves it.
    """
    P = scenario.total_power if total_power is None else float(total_power)
    N = scenario.multiplexing_dim if N is None else int(N)
    cnr = _cnr(scenario, gains)
    U = cnr.shape[0]
    scale = _rate_scale(scenario)

    def state(level):
        rw = level_rates(cnr, level, scale)
        order = np.argsort(rw, kind="stable")
        h, rmax = find_h(rw[order], N)
        levels = np.full(U, level)
        capped = order[U - h:]
        if h:
            levels[capped] = np.minimum(levels_for_rates(cnr[capped], rmax, scale), level)
        return levels, h, rmax, capped

    def power(level):
        return float(level_powers(cnr, state(level)[0]).sum())

    level, iters = _bisect(power, P, 0.0, max(P, 1e-12), "constrained allocation")
    levels, h, rmax, capped = state(level)
    mask = np.zeros(U, dtype=bool)
    mask[capped] = True
    return _allocation("optimal", cnr, levels, scale, level=float(level), h=h, capped=mask,
                       iterations=iters)


def equal_rate_allocation(scenario: NetworkScenario, gains,
                          total_power: Optional[float] = None) -> PowerAllocation:
    """Common rate for all users, each water-filling over its own bins at least power."""
    P = scenario.total_power if total_power is None else float(total_power)
    cnr = _cnr(scenario, gains)
    scale = _rate_scale(scenario)

    def power(rate):
        return float(level_powers(cnr, levels_for_rates(cnr, rate, scale)).sum())

    # rate at equal power and flat allocation is a good starting bracket
    r0 = float(np.min(level_rates(cnr, P / cnr.shape[0], scale))) or 1e-12
    rate, iters = _bisect(power, P, 0.0, r0, "equal-rate allocation")
    levels = levels_for_rates(cnr, rate, scale)
    return _allocation("equal_rate", cnr, levels, scale, level=None, iterations=iters)


def equal_power_allocation(scenario: NetworkScenario, gains=None,
                           total_power: Optional[float] = None) -> PowerAllocation:
    """``P / U`` per user, flat over bins."""
    P = scenario.total_power if total_power is None else float(total_power)
    U, B = scenario.num_users, scenario.bins
    powers = np.full(U, P / U)
    intra = np.ones((U, B))
    if gains is None:
        rates = np.full(U, np.nan)
    else:
        cnr = _cnr(scenario, gains)
        rates = _rate_scale(scenario) * np.mean(np.log2(1.0 + powers[:, None] * cnr), axis=1)
    return PowerAllocation("equal_power", powers, intra, rates)
