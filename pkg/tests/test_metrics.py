import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pardensur.metrics import (
    RunHistory,
    crowding_distance,
    dominates,
    evaluations_to_success,
    gd_plus,
    hypervolume,
    igd_plus,
    nondominated_sort,
    pareto_front,
    quality_indicators,
)

from .oracles import brute_ranks, grid_hypervolume

coords = st.integers(min_value=0, max_value=12).map(float)
point = st.tuples(coords, coords)
point_sets = st.lists(point, min_size=1, max_size=24)


class TestDominates:
    def test_better_in_both(self):
        assert dominates((1, 5), (2, 3))

    def test_incomparable(self):
        assert not dominates((1, 3), (2, 5))
        assert not dominates((2, 5), (1, 3))

    def test_identical(self):
        assert not dominates((1, 3), (1, 3))

    def test_return_is_maximized(self):
        # same risk, more return wins
        assert dominates((1, 4), (1, 3))
        assert not dominates((1, 3), (1, 4))

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            dominates((np.nan, 1), (1, 1))

    @given(point, point, point)
    def test_order_axioms(self, a, b, c):
        assert not dominates(a, a)
        if dominates(a, b):
            assert not dominates(b, a)
        if dominates(a, b) and dominates(b, c):
            assert dominates(a, c)


class TestNondominatedSort:
    def test_small_example(self):
        assert list(nondominated_sort([(1, 5), (3, 6), (2, 3)])) == [0, 0, 1]

    def test_single_and_duplicates(self):
        assert list(nondominated_sort([(4, 4)])) == [0]
        assert list(nondominated_sort([(4, 4), (4, 4)])) == [0, 0]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            nondominated_sort([])

    @settings(max_examples=200)
    @given(point_sets)
    def test_matches_pairwise_oracle(self, pts):
        assert list(nondominated_sort(pts)) == brute_ranks(pts)


class TestCrowding:
    def test_three_point_front(self):
        cd = crowding_distance([(0, 2), (1, 1), (2, 0)], minimize=True)
        assert math.isinf(cd[0]) and math.isinf(cd[2])
        assert cd[1] == pytest.approx(2.0)

    def test_tiny_fronts(self):
        assert np.all(np.isinf(crowding_distance([(0, 1), (1, 0)], minimize=True)))
        assert np.all(np.isinf(crowding_distance([(0, 1)], minimize=True)))

    def test_zero_range_objective(self):
        cd = crowding_distance([(0, 1), (1, 1), (2, 1), (3, 1)], minimize=True)
        # flat second objective adds nothing; first gives gap 2 over range 3
        assert list(cd[1:3]) == [pytest.approx(2 / 3), pytest.approx(2 / 3)]


class TestHypervolume:
    def test_single_rectangle(self):
        assert hypervolume([(10, 20)]) == 600.0

    def test_two_rectangles(self):
        assert hypervolume([(10, 20), (20, 30)]) == 800.0

    def test_outside_reference(self):
        assert hypervolume([(50, 10)]) == 0.0
        assert hypervolume([(10, -1)]) == 0.0

    def test_custom_reference_and_empty(self):
        assert hypervolume([(1, 2)], ref=(2, 0)) == 2.0
        assert hypervolume([]) == 0.0

    def test_nonfinite_reference(self):
        with pytest.raises(ValueError):
            hypervolume([(1, 2)], ref=(np.inf, 0))

    @settings(max_examples=200)
    @given(point_sets)
    def test_matches_grid_oracle(self, pts):
        ref = (12.0, 0.0)
        assert hypervolume(pts, ref) == pytest.approx(grid_hypervolume(pts, ref), abs=1e-9)

    @given(point_sets, point)
    def test_monotone_and_dominated_invariance(self, pts, extra):
        ref = (12.0, 0.0)
        base = hypervolume(pts, ref)
        grown = hypervolume(pts + [extra], ref)
        assert grown >= base
        if any(dominates(p, extra) for p in pts):
            assert grown == base
        assert hypervolume(pareto_front(pts), ref) == base


class TestDistances:
    def test_gd_plus_examples(self):
        assert gd_plus([(0, 0)], [(1, 1)], minimize=True) == 0.0
        assert gd_plus([(2, 2)], [(1, 1)], minimize=True) == pytest.approx(math.sqrt(2))
        Z = [(0, 3), (1, 1), (3, 0)]
        assert gd_plus(Z, Z, minimize=True) == 0.0

    def test_igd_plus_examples(self):
        assert igd_plus([(1, 1)], [(0, 0), (2, 2)], minimize=True) == pytest.approx(
            0.70710678, abs=1e-8)
        A = [(0, 3), (1, 1), (3, 0), (5, 5)]
        assert igd_plus(A, A[:3], minimize=True) == 0.0
        assert igd_plus([(0, 0)], [(1, 4), (2, 2), (0, 0)], minimize=True) == 0.0

    def test_risk_return_orientation(self):
        # higher return is better: (1, 5) already beats the target (1, 4)
        assert gd_plus([(1, 5)], [(1, 4)]) == 0.0
        assert gd_plus([(1, 3)], [(1, 4)]) == pytest.approx(1.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            gd_plus([], [(1, 1)])
        with pytest.raises(ValueError):
            igd_plus([(1, 1)], [])


def _history(seed, hvs, warm=60, step=30):
    h = RunHistory(seed)
    for g, hv in enumerate(hvs):
        h.record(g, warm + g * step, hv)
    return h


class TestQualityIndicators:
    def test_success_rate_counts(self):
        hs = [_history(i, [0.5, 0.96]) for i in range(3)] + [_history(3, [0.5, 0.9])]
        q = quality_indicators(hs, 1.0, 0.95)
        assert q.sr == 75.0

    def test_generation_ten_accounting(self):
        hvs = [0.1] * 10 + [1.0]
        q = quality_indicators([_history(s, hvs) for s in range(4)], 1.0, 0.95)
        assert (q.sr, q.agsr, q.aesr) == (100.0, 10.0, 360.0)

    def test_no_success(self):
        q = quality_indicators([_history(0, [0.1, 0.2])], 1.0, 0.99)
        assert q.sr == 0.0 and q.aesr is None and q.agsr is None

    def test_rejects_bad_threshold(self):
        with pytest.raises(ValueError):
            quality_indicators([_history(0, [1.0])], 1.0, 0.0)
        with pytest.raises(ValueError):
            quality_indicators([_history(0, [1.0])], 1.0, 1.5)

    def test_history_requires_increasing_evaluations(self):
        h = RunHistory(0)
        h.record(0, 60, 1.0)
        with pytest.raises(ValueError):
            h.record(1, 60, 2.0)

    def test_evaluations_to_success(self):
        h = _history(0, [0.2, 0.5, 0.9])
        assert evaluations_to_success(h, 0.5) == 90.0
        assert math.isinf(evaluations_to_success(h, 0.95))
