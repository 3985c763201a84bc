import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mango import pareto
from oracles import fronts_pairwise, hv_inclusion_exclusion, hv_monte_carlo, igd_loops

small_int_pts = lambda m: arrays(float, st.tuples(st.integers(1, 30), st.just(m)), elements=st.integers(0, 5).map(float))


def test_dominates_examples():
    assert pareto.dominates((0, 0), (1, 1))
    assert not pareto.dominates((0, 1), (1, 0)) and not pareto.dominates((1, 0), (0, 1))
    assert not pareto.dominates((1, 1), (1, 1))
    with pytest.raises(ValueError, match="length mismatch"):
        pareto.dominates((0, 0), (0, 0, 0))


@given(arrays(float, (3, 3), elements=st.integers(0, 2).map(float)))
def test_dominance_order_properties(T):
    a, b, c = T
    assert not pareto.dominates(a, a)
    assert not (pareto.dominates(a, b) and pareto.dominates(b, a))
    if pareto.dominates(a, b) and pareto.dominates(b, c):
        assert pareto.dominates(a, c)


def test_sort_examples():
    fa = pareto.non_dominated_sort([[3.0, 3.0]])
    assert fa.front_of.tolist() == [1] and fa.front_count == 1
    fa = pareto.non_dominated_sort([(0, 1), (1, 0), (1, 1)])
    assert fa.front_of.tolist() == [1, 1, 2]
    with pytest.raises(ValueError):
        pareto.non_dominated_sort(np.zeros((0, 2)))


def test_sort_random_3obj_matches_oracle():
    P = np.random.default_rng(0).random((200, 3))
    assert np.array_equal(pareto.non_dominated_sort(P).front_of, fronts_pairwise(P))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4).flatmap(small_int_pts))
def test_sort_with_ties_matches_oracle(P):
    fa = pareto.non_dominated_sort(P)
    assert np.array_equal(fa.front_of, fronts_pairwise(P))
    # duplicates share a front
    _, inv = np.unique(P, axis=0, return_inverse=True)
    for g in np.unique(inv):
        assert len(set(fa.front_of[inv.reshape(-1) == g])) == 1


def test_sort_front_invariants():
    P = np.random.default_rng(1).random((150, 2))
    fa = pareto.non_dominated_sort(P)
    for k in range(1, fa.front_count + 1):
        rest = P[fa.front_of >= k]
        for i in fa.front(k):
            assert not any(pareto.dominates(q, P[i]) for q in rest)


def test_hv_examples():
    assert pareto.hypervolume([(1, 1)], (2, 2)) == 1.0
    assert pareto.hypervolume([(0, 2), (2, 0)], (3, 3)) == pytest.approx(5.0, abs=1e-9)
    assert pareto.hypervolume([(5, 5)], (3, 3)) == 0.0
    assert pareto.hypervolume([[2.0]], [5.0]) == 3.0


def test_hv_fixture_within_mc_band():
    est, se = hv_monte_carlo([(0, 2), (2, 0)], (3, 3), 10**6, seed=0)
    assert abs(pareto.hypervolume([(0, 2), (2, 0)], (3, 3)) - est) <= 3 * se


@settings(max_examples=40, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 7), st.sampled_from([2, 3])), elements=st.floats(0, 1)))
def test_hv_exact_vs_inclusion_exclusion(P):
    ref = np.full(P.shape[1], 1.1)
    exact = hv_inclusion_exclusion(P, ref)
    if P.shape[1] == 2:
        assert pareto.hypervolume(P, ref) == pytest.approx(exact, abs=1e-12)
    else:
        est, se = pareto.hypervolume_mc(P, ref, n_samples=200_000, seed=1)
        assert abs(est - exact) <= 4 * se + 1e-12


@settings(max_examples=30, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 10), st.just(2)), elements=st.floats(0, 1)),
       arrays(float, (2,), elements=st.floats(0, 1)))
def test_hv_monotone(P, q):
    ref = (1.0, 1.0)
    assert pareto.hypervolume(np.vstack([P, q]), ref) >= pareto.hypervolume(P, ref) - 1e-15


def test_igd_examples():
    R = np.array([(0.0, 1.0), (1.0, 0.0)])
    assert pareto.igd(R, R) == 0.0
    assert pareto.igd([(0.0, 1.0)], R) == pytest.approx((0 + np.sqrt(2)) / 2, abs=1e-12)
    assert pareto.igd([(0.0, 1.0)], R) == pytest.approx(0.70711, abs=1e-5)
    with pytest.raises(ValueError):
        pareto.igd(np.zeros((0, 2)), R)


@settings(max_examples=30, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 12), st.just(2)), elements=st.floats(-2, 2)),
       arrays(float, st.tuples(st.integers(1, 12), st.just(2)), elements=st.floats(-2, 2)),
       arrays(float, (2,), elements=st.floats(-2, 2)))
def test_igd_oracle_and_monotone(C, R, extra):
    assert pareto.igd(C, R) == pytest.approx(igd_loops(C, R), rel=1e-12, abs=1e-12)
    assert pareto.igd(np.vstack([C, extra]), R) <= pareto.igd(C, R) + 1e-15


def test_evaluate_normalization():
    Y = np.array([[0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    ref_pf = np.array([[0.0, 0.5], [0.5, 0.0]])
    rp = pareto.reference_point(Y)
    np.testing.assert_allclose(rp, [1.1, 1.1])
    rep = pareto.evaluate(Y[:2], Y, ref_pf)
    assert rep.normalized and rep.normalized_hv == pytest.approx(1.0) and rep.normalized_igd == pytest.approx(1.0)
    rep = pareto.evaluate(ref_pf, Y, ref_pf)
    assert rep.normalized_igd == 0.0 and rep.normalized_hv > 1.0
    assert rep.csv_header().split(",")[:5] == ["hv", "igd", "normalized_hv", "normalized_igd", "k"]
    assert len(rep.csv_row().split(",")) == len(rep.csv_header().split(","))


def test_evaluate_degenerate_denominator():
    Y = np.array([[0.0, 0.0], [1.0, 1.0]])
    rep = pareto.evaluate([[0.5, 0.5]], Y, [[0.0, 0.0]])
    # the training front touches the reference exactly, so IGD normalization is undefined
    assert not rep.normalized and rep.normalized_igd == rep.igd
