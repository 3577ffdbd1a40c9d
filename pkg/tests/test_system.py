import numpy as np
import pytest

from rmckf.noise import GaussianMixture
from rmckf.system import Trajectory, UncertainLinearModel, propagate_deterministic, simulate

UNIT = GaussianMixture.scalar([(1.0, 1.0)])


def scalar_model(F, q=UNIT, r=UNIT):
    return UncertainLinearModel(F=[[F]], deltaF=[[0.0]], G=[[1.0]], H=[[1.0]], q_mix=q, r_mix=r)


def test_propagate_identity_and_scalar():
    m = UncertainLinearModel(F=np.eye(2), deltaF=np.zeros((2, 2)), G=np.eye(2), H=np.eye(2),
                             q_mix=GaussianMixture.independent(UNIT, 2),
                             r_mix=GaussianMixture.independent(UNIT, 2))
    np.testing.assert_array_equal(propagate_deterministic(m, [1, 2], 3), [[1, 2]] * 4)
    np.testing.assert_array_equal(propagate_deterministic(scalar_model(0.5), [8.0], 3)[:, 0], [8, 4, 2, 1])


def test_problem2_one_step(problem1):
    from rmckf.bench import builtin_problem
    m = builtin_problem("problem2").model
    np.testing.assert_allclose(propagate_deterministic(m, [50, 4, 1], 1)[1], [50.405, 4.1, 1.0], rtol=1e-14)


def test_unstable_perturbation_rejected():
    with pytest.raises(ValueError, match="unstable"):
        UncertainLinearModel(F=[[0.99]], deltaF=[[0.2]], G=[[1.0]], H=[[1.0]], q_mix=UNIT, r_mix=UNIT)


def test_dimension_checks():
    with pytest.raises(ValueError):
        UncertainLinearModel(F=np.eye(2), deltaF=np.zeros((2, 2)), G=[[1.0]], H=[[1.0, 0.0]],
                             q_mix=UNIT, r_mix=UNIT)
    with pytest.raises(ValueError):
        UncertainLinearModel(F=np.eye(2), deltaF=np.zeros((2, 2)), G=[[1.0], [0.0]], H=[[1.0]],
                             q_mix=UNIT, r_mix=UNIT)


def test_trajectory_lengths():
    with pytest.raises(ValueError):
        Trajectory(np.zeros((3, 1)), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        simulate(scalar_model(0.5), [0.0], 0, np.random.default_rng(0))


def test_problem1_large_delta_runs_500_steps(problem1):
    m = problem1.model.with_delta(problem1.perturb(0.5))
    tr = simulate(m, [10, 20], 500, np.random.default_rng(1))
    assert tr.states.shape == (501, 2) and tr.measurements.shape == (500, 1)
    assert np.all(np.isfinite(tr.states))


def test_simulate_deterministic():
    m = scalar_model(0.9)
    a = simulate(m, [1.0], 20, np.random.default_rng(3))
    b = simulate(m, [1.0], 20, np.random.default_rng(3))
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.measurements, b.measurements)


def test_filters_never_see_delta(problem1):
    m = problem1.model.with_delta(problem1.perturb(0.3))
    np.testing.assert_array_equal(m.F, problem1.model.F)
    np.testing.assert_array_equal(m.F_true, m.F + [[0, 0.3], [0, 0]])


def test_monte_carlo_mean_tracks_deterministic():
    m = UncertainLinearModel(F=[[0.9, 0.2], [0.0, 0.8]], deltaF=[[0.0, 0.05], [0.0, 0.0]],
                             G=[[1.0], [0.5]], H=[[1.0, 0.0]],
                             q_mix=GaussianMixture.scalar([(0.8, 0.1), (0.2, 2.0)]),
                             r_mix=UNIT)
    rng = np.random.default_rng(11)
    n, steps = 10_000, 5
    states = np.array([simulate(m, [3.0, -2.0], steps, rng).states for _ in range(n)])
    mean = states.mean(axis=0)
    se = states.std(axis=0, ddof=1) / np.sqrt(n)
    ref = propagate_deterministic(m, [3.0, -2.0], steps)
    assert np.all(np.abs(mean - ref) <= 3 * se + 1e-12)


def test_measurement_residual_variance():
    r = GaussianMixture.scalar([(0.8, 1.0), (0.2, 10.0)])
    m = scalar_model(0.5, r=r)
    tr = simulate(m, [0.0], 100_000, np.random.default_rng(4))
    resid = tr.measurements[:, 0] - tr.states[1:, 0]
    assert resid.var() == pytest.approx(m.R[0, 0], rel=0.05)
