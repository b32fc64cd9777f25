import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cachemimo.closed_form import (
    InfeasibleRatesError,
    closed_form_schedule,
    closed_form_solution,
    feasibility_check,
    placement_for_closed_form,
)
from cachemimo.enumeration import variable_count
from cachemimo.lp import InfeasibleLPError, ProblemInstance, solve, verify_schedule

from oracles import interval_coverage

# full-group shapes whose LP stays small (U = 6 with M in {2, 3} needs ~1e6 variables)
FULL_SHAPES = [(U, M, U - M) for U in range(2, 7) for M in range(0, U) if variable_count(U, M, U - M) <= 20_000]


def feasible_rates(rng, U, N, lo=0.5, hi=5.0):
    """Random rates, with the fastest users pulled down until R_i <= sum(R) / N."""
    if N == U:
        return np.full(U, rng.uniform(lo, hi))
    r = rng.uniform(lo, hi, U)
    for _ in range(1000):
        if feasibility_check(r, N)[0]:
            return r
        k = int(np.argmax(r))
        r[k] = (r.sum() - r[k]) / (N - 1) * rng.uniform(0.8, 1.0)
    raise AssertionError("could not draw feasible rates")


def infeasible_rates(rng, U, N):
    """One user faster than the others can keep up with: R_0 > sum(others) / (N - 1)."""
    r = rng.uniform(0.5, 5.0, U)
    others = r[1:].sum()
    r[0] = others / (N - 1) * rng.uniform(1.05, 3.0) if N > 1 else others * rng.uniform(1.05, 3.0)
    return r


class TestFeasibility:
    def test_example(self):
        assert feasibility_check([2, 2, 1], 2) == (True, [True, True, True])

    def test_violation(self):
        ok, per_user = feasibility_check([10, 1, 1], 2)
        assert not ok and per_user == [False, True, True]

    def test_equal_rates(self):
        for U in range(1, 8):
            for N in range(1, U + 1):
                assert feasibility_check([3.0] * U, N)[0]

    def test_boundary_with_slack(self):
        # R_0 exactly at sum / N
        assert feasibility_check([2.0, 1.0, 1.0], 2)[0]
        assert not feasibility_check([2.0 + 1e-9, 1.0, 1.0], 2)[0]


class TestSolution:
    def test_example(self):
        T, q = closed_form_solution([2, 2, 1], 2, 1)
        assert T == pytest.approx(0.4, abs=1e-12)
        assert np.allclose(q, [0.2, 0.2, 0.6])

    @pytest.mark.parametrize("U,M", [(3, 1), (5, 2), (6, 0)])
    def test_equal_rates(self, U, M):
        T, q = closed_form_solution([2.5] * U, U - M, M)
        assert T == pytest.approx((U - M) / (U * 2.5))
        assert np.allclose(q, M / U)

    def test_infeasible_raises(self):
        with pytest.raises(InfeasibleRatesError):
            closed_form_solution([10, 1, 1], 2, 1)

    def test_wrong_size(self):
        with pytest.raises(ValueError):
            closed_form_solution([1, 2, 3, 4], 2, 1)

    def test_full_cache(self):
        T, q = closed_form_solution([1.0, 2.0, 3.0], 0, 3)
        assert T == 0.0 and np.all(q == 1)

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), U=st.integers(1, 10), data=st.data())
    def test_fractions_and_throughput(self, seed, U, data):
        M = data.draw(st.integers(0, U - 1))
        N = U - M
        r = feasible_rates(np.random.default_rng(seed), U, N)
        T, q = closed_form_solution(r, N, M)
        assert np.all((q >= 0) & (q <= 1))
        assert q.sum() == pytest.approx(M, abs=1e-9)
        assert np.sum(1 - q) / T == pytest.approx(r.sum(), rel=1e-12)


class TestAgainstLp:
    @pytest.mark.parametrize("shape", FULL_SHAPES)
    def test_feasible_matches(self, shape):
        U, M, N = shape
        rng = np.random.default_rng(U * 10 + M)
        for _ in range(3):
            r = feasible_rates(rng, U, N)
            T, q = closed_form_solution(r, N, M)
            sol = solve(ProblemInstance(tuple(r), N=N, M=M))
            assert sol.T == pytest.approx(T, rel=1e-6)
            assert np.allclose(sol.q, q, atol=1e-6)

    @pytest.mark.parametrize("shape", [s for s in FULL_SHAPES if s[2] >= 2])
    def test_infeasible_exceeds_bound(self, shape):
        U, M, N = shape
        r = infeasible_rates(np.random.default_rng(U * 7 + M), U, N)
        assert not feasibility_check(r, N)[0]
        inst = ProblemInstance(tuple(r), N=N, M=M)
        with pytest.raises(InfeasibleLPError):
            solve(inst)
        assert solve(inst, backoff=True).T > N / r.sum() * (1 + 1e-9)

    def test_single_antenna_infeasible_only_with_n_above_one(self):
        # with N = 1 the bound R_i <= sum(R) always holds
        assert feasibility_check([100.0, 1.0], 1)[0]


class TestPlacement:
    def test_example_layout(self):
        lay = placement_for_closed_form([0.2, 0.2, 0.6], 1)
        assert lay.user_intervals == [[(0.0, 0.2)], [(0.2, pytest.approx(0.4))], [(pytest.approx(0.4), 1.0)]]
        assert np.allclose(lay.section_lengths(3, 1), [0.2, 0.2, 0.6])

    def test_full_cache(self):
        lay = placement_for_closed_form([1.0, 1.0, 1.0], 3)
        assert lay.segments == [(0.0, 1.0, (0, 1, 2))]

    @pytest.mark.parametrize("q,M", [([0.5, 0.6], 1), ([1.2, -0.2], 1), ([0.5, 0.5, 0.5], 1)])
    def test_rejects_bad_fractions(self, q, M):
        with pytest.raises(ValueError):
            placement_for_closed_form(q, M)

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), U=st.integers(2, 9), data=st.data())
    def test_coverage(self, seed, U, data):
        M = data.draw(st.integers(1, U - 1))
        r = feasible_rates(np.random.default_rng(seed), U, U - M)
        _, q = closed_form_solution(r, U - M, M)
        lay = placement_for_closed_form(q, M)
        assert np.allclose(lay.q, q, atol=1e-9)
        # probes away from the cut points
        cuts = np.array(sorted({x for iv in lay.user_intervals for p in iv for x in p}))
        probes = np.random.default_rng(seed).uniform(0, 1, 500)
        probes = probes[np.min(np.abs(probes[:, None] - cuts[None, :]), axis=1) > 1e-7]
        assert np.all(interval_coverage(lay.user_intervals, probes) == M)
        for iv in lay.user_intervals:
            for (a, b), (c, d) in zip(iv, iv[1:]):
                assert b <= c + 1e-12
        assert sum(b - a for a, b, _ in lay.segments) == pytest.approx(1.0)
        assert all(len(users) == M for _, _, users in lay.segments)


class TestSchedule:
    def test_example(self):
        sched, u = closed_form_schedule([2, 2, 1], 2, 1)
        inst = ProblemInstance((2.0, 2.0, 1.0), N=2, M=1)
        assert verify_schedule(sched, u, inst).ok
        assert sum(e.duration for e in sched) == pytest.approx(0.4)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), U=st.integers(2, 6), data=st.data())
    def test_random_schedules_verify(self, seed, U, data):
        M = data.draw(st.integers(0, U - 1))
        N = U - M
        r = feasible_rates(np.random.default_rng(seed), U, N)
        sched, u = closed_form_schedule(r, N, M)
        inst = ProblemInstance(tuple(r), N=N, M=M)
        rep = verify_schedule(sched, u, inst)
        assert rep.ok, rep.to_dict()
        assert sum(e.duration for e in sched) == pytest.approx(closed_form_solution(r, N, M)[0], rel=1e-9)


def test_rejects_all_zero_rates():
    with pytest.raises(ValueError):
        closed_form_solution([0.0, 0.0, 0.0], 2, 1)


def test_zero_rate_user_stores_everything():
    T, q = closed_form_solution([0.0, 2.0, 2.0], 2, 1)
    assert T == pytest.approx(0.5) and q[0] == 1.0
