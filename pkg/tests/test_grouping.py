import numpy as np
import pytest
from hypothesis import given, strategies as st

from groupdir.errors import DegenerateDensityError, InvalidGroupsError, InvalidRangeError, OutOfRangeError
from groupdir.grouping import (
    Shot,
    ShotThresholds,
    group_counts,
    group_distance,
    group_of,
    lds_weights,
    make_grouping,
    sample_lds_weights,
    shot_categories,
)


def test_make_grouping_width():
    s = make_grouping(0, 100, 20)
    assert s.width == 5.0
    assert s.num_groups == 20


@pytest.mark.parametrize("args, exc", [((0, 100, 1), InvalidGroupsError), ((5, 5, 10), InvalidRangeError),
                                       ((6, 5, 10), InvalidRangeError)])
def test_make_grouping_errors(args, exc):
    with pytest.raises(exc):
        make_grouping(*args)


def test_group_of_examples():
    s = make_grouping(0, 100, 20)
    assert group_of(s, 12) == 2
    assert group_of(s, 100) == 19
    assert group_of(s, 0) == 0
    with pytest.raises(OutOfRangeError):
        group_of(s, -1)
    with pytest.raises(OutOfRangeError):
        group_of(s, [1.0, 100.5])


def test_group_of_midpoints():
    s = make_grouping(-3.5, 17.0, 7)
    for g in range(7):
        assert group_of(s, s.midpoint(g)) == g


@given(st.floats(0, 100), st.floats(0, 100), st.integers(2, 50))
def test_group_of_monotone(a, b, k):
    s = make_grouping(0, 100, k)
    lo, hi = sorted((a, b))
    assert group_of(s, hi) >= group_of(s, lo)
    assert 0 <= group_of(s, lo) < k


def test_group_distance():
    assert group_distance(3, 3) == 0
    assert group_distance(1, 4) == 3
    assert group_distance(4, 1) == 3
    np.testing.assert_array_equal(group_distance([0, 5], [2, 1]), [2, 4])


@given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 30))
def test_group_distance_metric(a, b, c):
    assert group_distance(a, b) == group_distance(b, a)
    assert group_distance(a, c) <= group_distance(a, b) + group_distance(b, c)


def test_group_counts():
    s = make_grouping(0, 10, 2)
    np.testing.assert_array_equal(group_counts([], make_grouping(0, 100, 4)), [0, 0, 0, 0])
    np.testing.assert_array_equal(group_counts([1, 2, 7], s), [2, 1])
    np.testing.assert_array_equal(group_counts([0, 0, 0], s), [3, 0])
    with pytest.raises(OutOfRangeError):
        group_counts([11], s)


def test_shot_categories():
    t = ShotThresholds(100, 20)
    assert shot_categories([150, 50, 5], t) == [Shot.MANY, Shot.MEDIAN, Shot.FEW]
    assert shot_categories([100], t) == [Shot.MEDIAN]
    assert shot_categories([0], t) == [Shot.FEW]
    assert shot_categories([20], t) == [Shot.MEDIAN]


@given(st.lists(st.integers(0, 300), min_size=1, max_size=20), st.randoms())
def test_shot_categories_per_bin(counts, rnd):
    perm = list(range(len(counts)))
    rnd.shuffle(perm)
    base = shot_categories(counts)
    assert shot_categories([counts[i] for i in perm]) == [base[i] for i in perm]


def test_shot_thresholds_invalid():
    with pytest.raises(ValueError):
        ShotThresholds(20, 20)


def test_lds_examples():
    np.testing.assert_allclose(lds_weights([4, 4, 4], 2, 1.5), [1, 1, 1], rtol=0, atol=1e-12)
    np.testing.assert_allclose(lds_weights([0, 4, 0], kernel=[0.25, 0.5, 0.25]), [1.2, 0.6, 1.2], atol=1e-12)
    with pytest.raises(DegenerateDensityError):
        lds_weights([0, 0], kernel_radius=0, sigma=1.0)


@given(st.lists(st.integers(0, 500), min_size=1, max_size=30).filter(any),
       st.integers(0, 4), st.floats(0.3, 5.0))
def test_lds_properties(counts, radius, sigma):
    w = lds_weights(counts, radius, sigma)
    assert np.all(w > 0)
    assert abs(w.mean() - 1.0) <= 1e-9


@given(st.integers(1, 100), st.integers(1, 30), st.integers(0, 4), st.floats(0.3, 5.0))
def test_lds_uniform(c, n, radius, sigma):
    np.testing.assert_allclose(lds_weights([c] * n, radius, sigma), np.ones(n), atol=1e-12)


def test_sample_lds_weights_favour_rare_bins():
    s = make_grouping(0, 10, 2)
    y = np.array([1.0] * 9 + [8.0])
    w = sample_lds_weights(y, s, kernel_radius=0, sigma=1.0)
    assert w[-1] > w[0]
    assert w.shape == y.shape
