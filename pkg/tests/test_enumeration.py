from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cachemimo.enumeration import (
    TooManyVariablesError,
    check_cap,
    constraint_count,
    counts,
    enumerate_combinations,
    enumerate_modes,
    enumerate_sections,
    modes_per_combination,
    validate_mode,
    variable_count,
)

from oracles import all_valid_modes, is_valid_mode

# the four modes used by the three-user example (rows: sections 100, 010, 001)
EXAMPLE_MODES = [
    np.array([[0, 0, 1], [0, 0, 0], [1, 1, 0]]),
    np.array([[0, 0, 1], [1, 0, 0], [0, 1, 0]]),
    np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]]),
    np.array([[0, 0, 0], [0, 0, 1], [1, 1, 0]]),
]


def small_cases(max_u=4):
    return [(U, M, N) for U in range(1, max_u + 1) for M in range(0, U) for N in range(1, U - M + 1)]


class TestSections:
    def test_three_users_one_copy(self):
        assert [s.b for s in enumerate_sections(3, 1)] == [(1, 0, 0), (0, 1, 0), (0, 0, 1)]

    def test_twelve_users(self):
        assert len(enumerate_sections(12, 2)) == 66

    def test_no_cache(self):
        secs = enumerate_sections(5, 0)
        assert len(secs) == 1 and secs[0].b == (0,) * 5

    def test_rejects_m_above_u(self):
        with pytest.raises(ValueError):
            enumerate_sections(3, 4)

    def test_support_matches_vector(self):
        for s in enumerate_sections(5, 2):
            assert len(s.support) == 2
            assert all(s.b[i] for i in s.support)


class TestCombinations:
    def test_counts(self):
        assert enumerate_combinations(3, 3) == [(0, 1, 2)]
        assert len(enumerate_combinations(12, 4)) == 495

    def test_rejects_oversize(self):
        with pytest.raises(ValueError):
            enumerate_combinations(3, 4)


class TestModes:
    def test_three_user_example_contains_known_modes(self):
        secs = enumerate_sections(3, 1)
        modes = [m.matrix(3, 3) for m in enumerate_modes((0, 1, 2), secs)]
        assert len(modes) == 8
        for E in EXAMPLE_MODES:
            assert sum(np.array_equal(E, m) for m in modes) == 1

    def test_twelve_user_per_combination(self):
        secs = enumerate_sections(12, 2)
        assert sum(1 for _ in enumerate_modes((0, 3, 7, 11), secs)) == 81

    def test_no_cache_single_mode(self):
        secs = enumerate_sections(4, 0)
        modes = list(enumerate_modes((0, 2, 3), secs))
        assert len(modes) == 1
        assert np.array_equal(modes[0].matrix(1, 4), [[1, 0, 1, 1]])

    def test_rejects_bad_combination(self):
        secs = enumerate_sections(4, 2)
        with pytest.raises(ValueError):
            list(enumerate_modes((0, 1), secs))
        with pytest.raises(ValueError):
            list(enumerate_modes((0, 0, 1), secs))

    def test_lazy(self):
        secs = enumerate_sections(12, 2)
        gen = enumerate_modes((0, 1, 2, 3), secs)
        assert next(gen).index == 0

    def test_deterministic_order(self):
        secs = enumerate_sections(5, 2)
        a = [m.assignment for m in enumerate_modes((0, 1, 3, 4), secs)]
        b = [m.assignment for m in enumerate_modes((0, 1, 3, 4), secs)]
        assert a == b
        assert a == sorted(a)

    @pytest.mark.parametrize("U,M,N", small_cases())
    def test_exhaustive_cross_check(self, U, M, N):
        B, oracle = all_valid_modes(U, M, N)
        secs = enumerate_sections(U, M)
        L = len(secs)
        ours = [(c, m.matrix(L, U)) for c in enumerate_combinations(U, M + N) for m in enumerate_modes(c, secs, M)]
        key = lambda pair: (pair[0], pair[1].tobytes())  # noqa: E731
        ours_keys = [key((c, E.astype(int))) for c, E in ours]
        assert len(ours_keys) == len(set(ours_keys))
        assert sorted(ours_keys) == sorted(key((c, E.astype(int))) for c, E in oracle)
        for c, E in ours:
            assert validate_mode(E, secs, c, M, N) == (True, None)

    @pytest.mark.parametrize("U,M,N", small_cases(6))
    def test_counts_match_enumeration(self, U, M, N):
        secs = enumerate_sections(U, M)
        combos = enumerate_combinations(U, M + N)
        total = sum(1 for c in combos for _ in enumerate_modes(c, secs, M))
        assert len(secs) + total == variable_count(U, M, N)
        assert total == len(combos) * modes_per_combination(M, N)


class TestValidate:
    secs = enumerate_sections(3, 1)

    def test_example_valid(self):
        for E in EXAMPLE_MODES:
            assert validate_mode(E, self.secs, (0, 1, 2), 1, 2) == (True, None)
            assert is_valid_mode(E, [s.b for s in self.secs], (0, 1, 2), 1, 2)

    def test_extra_one(self):
        E = EXAMPLE_MODES[0].copy()
        E[1, 0] = 1
        ok, msg = validate_mode(E, self.secs, (0, 1, 2), 1, 2)
        assert not ok and msg.startswith(("C2", "C3"))

    def test_non_binary(self):
        E = EXAMPLE_MODES[0] * 2
        ok, msg = validate_mode(E, self.secs, (0, 1, 2), 1, 2)
        assert not ok and msg.startswith("C1")

    def test_too_few_ones(self):
        E = EXAMPLE_MODES[0].copy()
        E[0, 2] = 0
        ok, msg = validate_mode(E, self.secs, (0, 1, 2), 1, 2)
        assert not ok and msg.startswith("C3")

    def test_cached_section(self):
        E = np.array([[1, 0, 0], [0, 0, 1], [0, 1, 0]])  # user 0 receives section it caches
        ok, msg = validate_mode(E, self.secs, (0, 1, 2), 1, 2)
        assert not ok and msg.startswith("C4")

    def test_inactive_storage(self):
        secs = enumerate_sections(4, 1)
        # users 0, 1, 2 active; user 0 receives section cached at inactive user 3
        E = np.zeros((4, 4), dtype=int)
        E[3, 0] = 1
        E[0, 1] = 1
        E[1, 2] = 1
        ok, msg = validate_mode(E, secs, (0, 1, 2), 1, 2)
        assert not ok and msg.startswith("C5")

    def test_wrong_combination(self):
        secs = enumerate_sections(4, 1)
        E = np.zeros((4, 4), dtype=int)
        E[2, 0] = 1
        E[0, 1] = 1
        E[1, 2] = 1
        assert validate_mode(E, secs, (0, 1, 2), 1, 2)[0]
        ok, msg = validate_mode(E, secs, (0, 1, 3), 1, 2)
        assert not ok and "combination" in msg

    def test_wrong_shape(self):
        ok, msg = validate_mode(np.zeros((2, 3)), self.secs, (0, 1, 2), 1, 2)
        assert not ok and "shape" in msg

    @settings(max_examples=300, deadline=None)
    @given(data=st.data())
    def test_agrees_with_oracle_on_random_matrices(self, data):
        U = data.draw(st.integers(2, 4))
        M = data.draw(st.integers(0, U - 1))
        N = data.draw(st.integers(1, U - M))
        secs = enumerate_sections(U, M)
        E = np.array(data.draw(st.lists(st.lists(st.integers(0, 1), min_size=U, max_size=U),
                                        min_size=len(secs), max_size=len(secs))))
        comb_ = tuple(sorted(data.draw(st.sets(st.integers(0, U - 1), min_size=M + N, max_size=M + N))))
        ours = validate_mode(E, secs, comb_, M, N)[0]
        assert ours == is_valid_mode(E, [s.b for s in secs], comb_, M, N)


class TestCounts:
    def test_twelve_user_example(self):
        c = counts(12, 2, 2)
        assert c["variables"] == 40161
        assert c["constraints"] == 661
        assert (c["sections"], c["combinations"], c["modes_per_combination"]) == (66, 495, 81)

    def test_three_user_example(self):
        assert variable_count(3, 1, 2) == 11
        assert constraint_count(3, 1) == 7

    @pytest.mark.parametrize("U,N", [(3, 1), (6, 2), (10, 4)])
    def test_no_cache(self, U, N):
        assert variable_count(U, 0, N) == comb(U, N) + 1

    def test_formula_over_grid(self):
        for U in range(1, 16):
            for M in range(U):
                for N in range(1, U - M + 1):
                    n = variable_count(U, M, N)
                    if n > 10**6:
                        continue
                    assert n == comb(U, M) + comb(U, M + N) * comb(M + N - 1, M) ** (M + N)

    def test_rejects_oversubscribed(self):
        with pytest.raises(ValueError):
            variable_count(3, 2, 2)

    def test_cap(self):
        assert check_cap(12, 2, 2) == 40161
        with pytest.raises(TooManyVariablesError, match="cap"):
            check_cap(12, 2, 2, cap=40160)
