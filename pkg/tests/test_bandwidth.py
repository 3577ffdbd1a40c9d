import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rmckf.bandwidth import _choose, baseline_bandwidth, jkb, select_bandwidth
from rmckf.config import BandwidthGrid, FilterConfig
from rmckf.core import fpi_update
from rmckf.exceptions import AllCandidatesFailed, ZeroInnovation

from test_core import scalar_fixed_point_oracle

S = np.array


def test_jkb_examples():
    assert jkb([0.0, 0.0, 0.0], 0.3) == 0.0
    assert jkb([1.0, 1.0], 1.0) == pytest.approx(-0.5, rel=1e-15)
    assert jkb([0.0, 2.0], 1.0) == pytest.approx(np.log((1 + np.exp(-2)) / 2), rel=1e-15)
    assert jkb([0.0, 2.0], 1.0) == pytest.approx(-0.56622, abs=1e-5)
    assert np.isfinite(jkb([1e4, 2e4], 1.0))


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=10), st.floats(0.1, 10), st.floats(1.0, 5.0))
def test_jkb_nonpositive_and_monotone_in_sigma_c(errors, sc, factor):
    a, b = jkb(errors, sc), jkb(errors, sc * factor)
    assert a <= 0 and b <= 0
    assert b >= a - 1e-12


def grid_config(values, sigma_c=1.0):
    return FilterConfig(bandwidth=BandwidthGrid(values, sigma_c))


def test_select_zero_innovation_picks_largest():
    cfg = grid_config([0.5, 1, 2, 5, 10])
    sel = select_bandwidth(S([1.0]), S([[1.0]]), S([1.0]), S([[1.0]]), S([[1.0]]), cfg)
    assert sel.sigma == 10 and np.all(sel.jkb == 0)


def test_select_singleton_matches_direct():
    cfg = grid_config([2.0])
    args = (S([0.0, 1.0]), np.eye(2), S([4.0]), S([[1.0, 1.0]]), S([[2.0]]))
    sel = select_bandwidth(*args, cfg)
    direct = fpi_update(*args, FilterConfig(bandwidth=2.0))
    assert sel.sigma == 2.0
    np.testing.assert_allclose(sel.result.mean, direct.mean, rtol=1e-14)
    np.testing.assert_allclose(sel.result.gain, direct.gain, rtol=1e-14)


def test_select_matches_exhaustive_oracle():
    grid = [0.5, 1, 2, 5, 10]
    sel = select_bandwidth(S([0.0]), S([[1.0]]), S([5.0]), S([[1.0]]), S([[1.0]]), grid_config(grid))
    # oracle pass: fixed point reached from the prior (nearest root), then jkb
    scores = []
    for s in grid:
        roots = scalar_fixed_point_oracle(1.0, 1.0, 1.0, 0.0, 5.0, s)
        x = roots[np.argmin(np.abs(roots))]
        scores.append(np.log(np.mean(np.exp(-np.array([-x, 5.0 - x]) ** 2 / 2))))
    scores = np.array(scores)
    best = max(i for i in range(len(grid)) if scores[i] == scores.max())
    assert sel.sigma == grid[best] == 1.0
    # the iterate is only as exact as the stopping tolerance
    np.testing.assert_allclose(sel.jkb, scores, rtol=1e-6)


def test_all_candidates_failed():
    cfg = grid_config([0.01, 0.02])
    with pytest.raises(AllCandidatesFailed):
        select_bandwidth(S([0.0]), S([[1.0]]), S([100.0]), S([[1.0]]), S([[1.0]]), cfg)


def test_failed_candidates_are_skipped():
    cfg = grid_config([0.01, 1.0, 3.0])
    sel = select_bandwidth(S([0.0]), S([[1.0]]), S([30.0]), S([[1.0]]), S([[1.0]]), cfg)
    assert sel.failed[0] and sel.n_failed == 1 and sel.jkb[0] == -np.inf
    assert sel.sigma in (1.0, 3.0)


@given(st.integers(0, 2**32 - 1))
def test_selected_sigma_is_optimal(seed):
    rng = np.random.default_rng(seed)
    cfg = grid_config(np.geomspace(0.5, 50, 8))
    m, y = rng.standard_normal((6, 2)), 10 * rng.standard_normal((6, 1))
    sel = select_bandwidth(m, np.eye(2) * 3, y, S([[1.0, -1.0]]), S([[2.0]]), cfg)
    chosen = np.take_along_axis(sel.jkb, np.searchsorted(cfg.bandwidth.values, sel.sigma)[:, None], 1)
    assert np.all(chosen[:, 0] >= sel.jkb.max(axis=1))


@given(st.lists(st.sampled_from([-3.0, -1.0, -0.5, 0.0]), min_size=2, max_size=8), st.randoms())
def test_choice_independent_of_grid_order(scores, rnd):
    values = np.arange(1.0, len(scores) + 1)
    scores = np.array(scores)
    pick = values[_choose(scores, values)]
    perm = list(range(len(scores)))
    rnd.shuffle(perm)
    assert values[perm][_choose(scores[perm], values[perm])] == pick
    assert pick == values[scores == scores.max()].max()


def test_baseline_rules():
    H, P = S([[1.0, 0.0]]), np.eye(2)
    assert baseline_bandwidth("euclidean", S([3.0, 4.0]), np.eye(2), S([0.0, 0.0]), P, np.eye(2)) == 5.0
    assert baseline_bandwidth("mahalanobis", S([2.0]), S([[1.0]]), S([0.0]), S([[1.0]]), S([[4.0]])) == 1.0
    w = baseline_bandwidth("weighted_innovation", S([3.0]), H, S([1.0, 0.0]), 2 * P, S([[4.0]]))
    assert w == pytest.approx(1 / (1.0 + 2.0))
    with pytest.raises(ZeroInnovation):
        baseline_bandwidth("euclidean", S([1.0]), H, S([1.0, 5.0]), P, S([[1.0]]))
    with pytest.raises(ValueError):
        baseline_bandwidth("silverman", S([1.0]), H, S([0.0, 0.0]), P, S([[1.0]]))


@pytest.mark.parametrize("values", [[], [1.0, 1.0], [2.0, 1.0], [0.0, 1.0], [1.0, np.inf]])
def test_grid_validation(values):
    with pytest.raises(ValueError):
        BandwidthGrid(values)


def test_default_grid():
    g = BandwidthGrid.logspace()
    assert len(g) == 25 and g.values[0] == 0.5 and g.values[-1] == pytest.approx(50.0) and g.sigma_c == 1.0
