"""File sections, user combinations and transmission-mode matrices.

Ordering is canonical everywhere: sections and combinations follow
``itertools.combinations`` over user indices, and the modes of a combination
are the Cartesian product of per-user section choices, users ascending and
sections in section order. The LP builder relies on this for stable
variable indexing.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

DEFAULT_VARIABLE_CAP = 10_000_000


class TooManyVariablesError(ValueError):
    pass


@dataclass(frozen=True)
class SectionVector:
    """Storage pattern ``b`` of one file section: ``b[i] == 1`` iff user ``i`` caches it."""

    index: int
    b: Tuple[int, ...]

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.b) if v)


@dataclass(frozen=True)
class ModeMatrix:
    """One transmission mode: user ``i`` receives section ``assignment[i]``.

    ``assignment`` maps each active user (in combination order) to a section
    index; :meth:`matrix` expands it to the binary ``L x U`` form.
    """

    combination: Tuple[int, ...]
    assignment: Tuple[int, ...]
    index: int = 0

    def matrix(self, num_sections: int, num_users: int) -> np.ndarray:
        e = np.zeros((num_sections, num_users), dtype=np.int8)
        e[list(self.assignment), list(self.combination)] = 1
        return e


def enumerate_sections(U: int, M: int) -> List[SectionVector]:
    if not 0 <= M <= U:
        raise ValueError(f"need 0 <= M <= U, got M={M}, U={U}")
    out = []
    for idx, supp in enumerate(itertools.combinations(range(U), M)):
        b = [0] * U
        for i in supp:
            b[i] = 1
        out.append(SectionVector(idx, tuple(b)))
    return out


def enumerate_combinations(U: int, k: int) -> List[Tuple[int, ...]]:
    if not 0 <= k <= U:
        raise ValueError(f"combination size {k} exceeds number of users {U}")
    return list(itertools.combinations(range(U), k))


def modes_per_combination(M: int, N: int) -> int:
    return comb(M + N - 1, M) ** (M + N)


def column_choices(combination: Sequence[int], sections: Sequence[SectionVector]) -> List[List[int]]:
    """Allowed sections for each active user: not cached by the user, cached only inside the group."""
    group = set(combination)
    choices = []
    for i in combination:
        others = group - {i}
        choices.append([s.index for s in sections if s.b[i] == 0 and set(s.support) <= others])
    return choices


def enumerate_modes(combination: Sequence[int], sections: Sequence[SectionVector],
                    M: Optional[int] = None) -> Iterator[ModeMatrix]:
    """Lazily yield every valid mode of ``combination``.

    Yields ``C(M+N-1, M) ** (M+N)`` modes where ``M+N = len(combination)``.
    """
    combination = tuple(combination)
    if not sections:
        raise ValueError("no sections given")
    if M is None:
        M = sum(sections[0].b)
    if len(combination) <= M or len(set(combination)) != len(combination):
        raise ValueError(f"combination {combination} must hold more than M={M} distinct users")
    for j, assignment in enumerate(itertools.product(*column_choices(combination, sections))):
        yield ModeMatrix(combination, tuple(assignment), j)


def validate_mode(E: np.ndarray, sections: Sequence[SectionVector],
                  combination: Sequence[int], M: int, N: int) -> Tuple[bool, Optional[str]]:
    """Check conditions C1-C5 on a binary ``L x U`` matrix.

    Returns ``(ok, diagnostic)`` where the diagnostic names the first failed
    condition.
    """
    E = np.asarray(E)
    L = len(sections)
    U = len(sections[0].b) if sections else 0
    if E.shape != (L, U):
        return False, f"shape {E.shape} != ({L}, {U})"
    if not np.all((E == 0) | (E == 1)):
        return False, "C1: entries must be 0 or 1"
    col = E.sum(axis=0)
    if np.any(col > 1):
        return False, f"C2: user {int(np.argmax(col > 1))} receives more than one segment"
    if int(E.sum()) != M + N:
        return False, f"C3: {int(E.sum())} ones, expected {M + N}"
    b = np.array([s.b for s in sections])
    clash = np.argwhere(E * b)
    if len(clash):
        l, i = clash[0]
        return False, f"C4: user {i} already caches section {l}"
    active = col == 1
    used_rows = E.any(axis=1)
    stored = b[used_rows][:, ~active]
    if stored.any():
        return False, "C5: a transmitted section is cached at an inactive user"
    if set(np.flatnonzero(active)) != set(combination):
        return False, f"active users {sorted(np.flatnonzero(active).tolist())} != combination {sorted(combination)}"
    return True, None


def variable_count(U: int, M: int, N: int) -> int:
    if M + N > U:
        raise ValueError("M + N must not exceed U")
    return comb(U, M) + comb(U, M + N) * modes_per_combination(M, N)


def constraint_count(U: int, M: int) -> int:
    return comb(U, M) * (U - M) + 1


def counts(U: int, M: int, N: int) -> dict:
    return {
        "users": U,
        "cache_copies": M,
        "antennas_dim": N,
        "sections": comb(U, M),
        "combinations": comb(U, M + N),
        "modes_per_combination": modes_per_combination(M, N),
        "variables": variable_count(U, M, N),
        "constraints": constraint_count(U, M),
    }


def check_cap(U: int, M: int, N: int, cap: int = DEFAULT_VARIABLE_CAP) -> int:
    n = variable_count(U, M, N)
    if n > cap:
        raise TooManyVariablesError(
            f"LP for U={U}, M={M}, N={N} has {n} variables, above the cap of {cap}"
        )
    return n
