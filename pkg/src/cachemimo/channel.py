"""Wideband Rayleigh fading, block-diagonalization projectors and user rates.

Channel of user ``i`` at bin ``m`` is ``H = sqrt(r_i**-alpha) * G`` with ``G``
an ``N_R x N_T`` matrix of i.i.d. unit-variance circular complex normals.
Each user's stream is zero-forced at a set of other users via an orthogonal
projector onto the null space of their stacked channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "NetworkScenario",
    "FadingRealization",
    "ZfProjector",
    "RankDeficientError",
    "make_rng",
    "area_uniform_distances",
    "sample_fading",
    "zf_projector",
    "effective_gain",
    "default_nulled_sets",
    "effective_gains",
    "rate_from_gains",
    "user_rate_mc",
    "user_rate_closed_form",
    "exp_int_ei",
]

EULER_GAMMA = 0.57721566490153286061
RANK_TOL = 1e-10


class RankDeficientError(ValueError):
    """Stacked nulled channels are numerically rank deficient."""


def make_rng(*key: int) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by one or more integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


def area_uniform_distances(num_users: int, cell_radius: float, seed: int) -> np.ndarray:
    """Distances of users dropped uniformly over a disc: ``r_max * sqrt(U(0,1))``."""
    u = make_rng(seed, 0x706F73).random(num_users)
    # r == 0 would make the path gain infinite
    u = np.maximum(u, np.finfo(float).tiny)
    return cell_radius * np.sqrt(u)


@dataclass(frozen=True)
class NetworkScenario:
    """Geometry and radio parameters of a single-cell downlink."""

    num_users: int
    bs_antennas: int
    user_antennas: int
    multiplexing_dim: int
    bins: int
    symbol_rate: float
    noise_power: float
    total_power: float
    pathloss_exp: float
    distances: tuple
    seed: int = 0
    cell_radius: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "distances", tuple(float(d) for d in self.distances))
        for name in ("num_users", "bs_antennas", "user_antennas", "multiplexing_dim", "bins"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.bs_antennas != self.multiplexing_dim * self.user_antennas:
            raise ValueError(
                f"bs_antennas ({self.bs_antennas}) must equal multiplexing_dim * user_antennas "
                f"({self.multiplexing_dim} * {self.user_antennas})"
            )
        if len(self.distances) != self.num_users:
            raise ValueError(f"expected {self.num_users} distances, got {len(self.distances)}")
        if min(self.distances) <= 0:
            raise ValueError("distances must be strictly positive")
        if self.noise_power <= 0 or self.total_power <= 0:
            raise ValueError("noise_power and total_power must be positive")
        if self.pathloss_exp <= 0 or self.symbol_rate <= 0:
            raise ValueError("pathloss_exp and symbol_rate must be positive")

    @property
    def path_gains(self) -> np.ndarray:
        return np.asarray(self.distances) ** (-self.pathloss_exp)

    @classmethod
    def from_config(cls, cfg: dict) -> "NetworkScenario":
        """Build from the JSON scenario document (see ``schemas.SCENARIO_SCHEMA``)."""
        users = int(cfg["users"])
        n_r = int(cfg.get("user_antennas", 1))
        n_t = int(cfg["bs_antennas"])
        if n_t % n_r:
            raise ValueError("bs_antennas must be a multiple of user_antennas")
        seed = int(cfg.get("seed", 0))
        radius = cfg.get("cell_radius")
        if "distances" in cfg:
            distances = cfg["distances"]
        elif radius is not None:
            distances = area_uniform_distances(users, float(radius), seed)
        else:
            raise ValueError("scenario needs either 'distances' or 'cell_radius'")
        return cls(
            num_users=users,
            bs_antennas=n_t,
            user_antennas=n_r,
            multiplexing_dim=int(cfg.get("multiplexing_dim", n_t // n_r)),
            bins=int(cfg["bins"]),
            symbol_rate=float(cfg.get("symbol_rate", 1.0)),
            noise_power=float(cfg["noise_power"]),
            total_power=float(cfg["total_power"]),
            pathloss_exp=float(cfg["pathloss_exp"]),
            distances=tuple(distances),
            seed=seed,
            cell_radius=None if radius is None else float(radius),
        )


@dataclass(frozen=True)
class FadingRealization:
    """Small-scale fading ``G[i, m]`` with shape ``(U, B, N_R, N_T)``."""

    G: np.ndarray = field(repr=False)
    seed: int


@dataclass(frozen=True)
class ZfProjector:
    matrix: np.ndarray
    nulled: frozenset


def sample_fading(scenario: NetworkScenario) -> FadingRealization:
    """Draw i.i.d. CN(0, 1) fading for every user, bin and antenna pair.

    Deterministic in ``scenario.seed``.
    """
    shape = (scenario.num_users, scenario.bins, scenario.user_antennas, scenario.bs_antennas)
    rng = make_rng(scenario.seed, 0x666164)
    g = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    return FadingRealization(G=g, seed=scenario.seed)


def zf_projector(channels_to_null: Sequence[np.ndarray], n_t: int,
                 tol: float = RANK_TOL) -> ZfProjector:
    """Orthogonal projector onto the common null space of the given channels.

    Built from the SVD of the stacked rows, ``P = I - V V^H`` where ``V`` spans
    the row space. Raises :class:`RankDeficientError` if any singular value
    falls below ``tol`` times the largest.
    """
    eye = np.eye(n_t, dtype=complex)
    if len(channels_to_null) == 0:
        return ZfProjector(eye, frozenset())
    rows = np.vstack([np.atleast_2d(np.asarray(h, dtype=complex)) for h in channels_to_null])
    if rows.shape[1] != n_t:
        raise ValueError(f"channel width {rows.shape[1]} != n_t {n_t}")
    if rows.shape[0] >= n_t:
        raise RankDeficientError("nulling as many rows as transmit antennas leaves no null space")
    _, s, vh = np.linalg.svd(rows, full_matrices=False)
    if s[-1] < tol * s[0]:
        raise RankDeficientError(f"stacked channels rank deficient (s_min/s_max = {s[-1] / s[0]:.3e})")
    proj = eye - vh.conj().T @ vh
    return ZfProjector(proj, frozenset(range(rows.shape[0])))


def effective_gain(g: np.ndarray, projector) -> "float | np.ndarray":
    """``G P G^H``; a nonnegative scalar when the user has one antenna."""
    p = projector.matrix if isinstance(projector, ZfProjector) else np.asarray(projector)
    g = np.atleast_2d(np.asarray(g, dtype=complex))
    if g.shape[1] != p.shape[0]:
        raise ValueError(f"channel has {g.shape[1]} columns, projector is {p.shape[0]}x{p.shape[1]}")
    gram = g @ p @ g.conj().T
    if gram.shape == (1, 1):
        return max(float(gram[0, 0].real), 0.0)
    return gram


def default_nulled_sets(num_users: int, multiplexing_dim: int) -> list:
    """User ``i`` is zero-forced at the next ``N - 1`` users (cyclically)."""
    k = min(multiplexing_dim - 1, num_users - 1)
    return [tuple((i + d) % num_users for d in range(1, k + 1)) for i in range(num_users)]


def effective_gains(scenario: NetworkScenario, fading: FadingRealization,
                    nulled_sets: Optional[Sequence[Sequence[int]]] = None) -> np.ndarray:
    """Effective gains ``G P G^H`` for all users and bins (path loss excluded).

    Shape ``(U, B)`` for single-antenna users, else ``(U, B, N_R, N_R)``.
    """
    if nulled_sets is None:
        nulled_sets = default_nulled_sets(scenario.num_users, scenario.multiplexing_dim)
    G = fading.G
    out = np.stack([_user_grams(G, i, nulled_sets[i]) for i in range(G.shape[0])])
    if G.shape[2] == 1:
        return np.maximum(out[:, :, 0, 0].real, 0.0)
    return out


def _user_grams(G: np.ndarray, i: int, nulled: Sequence[int]) -> np.ndarray:
    """Per-bin ``G_i P G_i^H`` with ``P`` nulling the users in ``nulled``."""
    _, B, n_r, n_t = G.shape
    gi = G[i]
    z = list(nulled)
    if not z:
        return gi @ np.conj(np.swapaxes(gi, -1, -2))
    rows = G[z].transpose(1, 0, 2, 3).reshape(B, len(z) * n_r, n_t)
    if rows.shape[1] >= n_t:
        raise RankDeficientError("nulling as many rows as transmit antennas leaves no null space")
    _, s, vh = np.linalg.svd(rows, full_matrices=False)
    if np.any(s[:, -1] < RANK_TOL * s[:, 0]):
        raise RankDeficientError(f"degenerate fading draw while nulling for user {i}")
    # G P G^H = G G^H - (G V)(G V)^H with V spanning the nulled row space
    gv = gi @ np.conj(np.swapaxes(vh, -1, -2))
    return gi @ np.conj(np.swapaxes(gi, -1, -2)) - gv @ np.conj(np.swapaxes(gv, -1, -2))


def rate_from_gains(gains: np.ndarray, snr: float, bins: int, symbol_rate: float,
                    intra_powers: Optional[np.ndarray] = None) -> float:
    """``B * R_S * mean_m log2 det(I + snr * p_m * Gram_m)`` for one user."""
    gains = np.asarray(gains)
    p = np.ones(gains.shape[0]) if intra_powers is None else np.asarray(intra_powers, dtype=float)
    if gains.ndim == 1:
        per_bin = np.log2(1.0 + snr * p * gains)
    else:
        n_r = gains.shape[-1]
        mats = np.eye(n_r) + (snr * p)[:, None, None] * gains
        sign, logdet = np.linalg.slogdet(mats)
        per_bin = logdet.real / math.log(2.0)
    return float(bins * symbol_rate * np.mean(per_bin))


def user_rate_mc(scenario: NetworkScenario, fading: FadingRealization, user: int, power: float,
                 intra_powers: Optional[np.ndarray] = None,
                 nulled_sets: Optional[Sequence[Sequence[int]]] = None) -> float:
    """Finite-bandwidth rate of ``user`` in bits/second.

    ``intra_powers`` must average to one over the bins.
    """
    if power < 0:
        raise ValueError("power must be nonnegative")
    if intra_powers is not None:
        intra_powers = np.asarray(intra_powers, dtype=float)
        if intra_powers.shape != (scenario.bins,):
            raise ValueError("intra_powers needs one entry per bin")
        if np.any(intra_powers < 0) or abs(intra_powers.mean() - 1.0) > 1e-9:
            raise ValueError("intra-user powers must be nonnegative with mean 1")
    if power == 0:
        return 0.0
    if nulled_sets is None:
        nulled_sets = default_nulled_sets(scenario.num_users, scenario.multiplexing_dim)
    grams = _user_grams(fading.G, user, nulled_sets[user])
    gains = np.maximum(grams[:, 0, 0].real, 0.0) if grams.shape[-1] == 1 else grams
    snr = power * scenario.path_gains[user] / scenario.noise_power
    return rate_from_gains(gains, snr, scenario.bins, scenario.symbol_rate, intra_powers)


def _e1(x: float) -> float:
    """Exponential integral ``E1(x) = int_x^inf e^-t / t dt`` for ``x > 0``."""
    if x <= 5.0:
        # alternating power series
        total, term, k = 0.0, 1.0, 1
        while True:
            term *= -x / k
            contrib = term / k
            total += contrib
            if abs(contrib) < 1e-17 * max(abs(total), 1e-300) or k > 200:
                break
            k += 1
        return -EULER_GAMMA - math.log(x) - total
    return math.exp(-x) * _scaled_e1_cf(x)


def _scaled_e1_cf(x: float) -> float:
    """``e^x E1(x)`` by continued fraction (modified Lentz), valid for x > 1."""
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h


def exp_int_ei(x: float) -> float:
    """Exponential integral ``Ei(x)`` for negative ``x``.

    Power series for ``|x| <= 5``, continued fraction beyond.
    """
    x = float(x)
    if not x < 0:
        raise ValueError("exp_int_ei is only defined here for x < 0")
    return -_e1(-x)


def user_rate_closed_form(eta: float, bins: int = 1, symbol_rate: float = 1.0) -> float:
    """Ergodic rate of an Exp(1) effective gain at mean SNR ``eta`` with flat power.

    Equals ``-B R_S log2(e) e^{1/eta} Ei(-1/eta)``.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    x = 1.0 / eta
    scaled = _scaled_e1_cf(x) if x > 5.0 else math.exp(x) * _e1(x)
    return bins * symbol_rate * scaled / math.log(2.0)
