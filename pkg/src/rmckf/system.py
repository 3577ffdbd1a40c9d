"""Uncertain linear time-invariant system and ground-truth simulation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .noise import GaussianMixture, equivalent_covariance, sample


def _matrix(a, name):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2:
        raise ValueError(f"{name} must be a matrix")
    a = a.copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class UncertainLinearModel:
    """``X_{k+1} = (F + dF) X_k + G q_k``, ``Y_k = H X_k + r_k``.

    ``deltaF`` drives the truth only; every filter is built from ``F``.
    """

    F: np.ndarray
    deltaF: np.ndarray
    G: np.ndarray
    H: np.ndarray
    q_mix: GaussianMixture
    r_mix: GaussianMixture
    Q: np.ndarray = field(init=False, repr=False)
    R: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        F = _matrix(self.F, "F")
        dF = _matrix(self.deltaF, "deltaF")
        G = _matrix(self.G, "G")
        H = _matrix(self.H, "H")
        n = F.shape[0]
        if F.shape != (n, n) or dF.shape != (n, n):
            raise ValueError("F and deltaF must be square and of equal size")
        if G.shape != (n, self.q_mix.dim):
            raise ValueError(f"G must be {n}x{self.q_mix.dim}, got {G.shape}")
        if H.shape != (self.r_mix.dim, n):
            raise ValueError(f"H must be {self.r_mix.dim}x{n}, got {H.shape}")
        radius = np.max(np.abs(np.linalg.eigvals(F + dF)))
        if radius > 1 + 1e-9:
            raise ValueError(f"perturbed system is unstable: spectral radius {radius:.6g}")
        for name, value in (("F", F), ("deltaF", dF), ("G", G), ("H", H)):
            object.__setattr__(self, name, value)
        Q = G @ equivalent_covariance(self.q_mix) @ G.T
        object.__setattr__(self, "Q", _matrix(0.5 * (Q + Q.T), "Q"))
        object.__setattr__(self, "R", _matrix(equivalent_covariance(self.r_mix), "R"))

    @property
    def n_states(self) -> int:
        return self.F.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.H.shape[0]

    @property
    def F_true(self) -> np.ndarray:
        return self.F + self.deltaF

    def with_delta(self, deltaF) -> UncertainLinearModel:
        return replace(self, deltaF=deltaF)


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # (K+1, n): X_0 .. X_K
    measurements: np.ndarray  # (K, m): Y_1 .. Y_K

    def __post_init__(self):
        if len(self.states) != len(self.measurements) + 1:
            raise ValueError("a trajectory holds K+1 states and K measurements")


def simulate(model: UncertainLinearModel, x0, steps: int, rng: np.random.Generator) -> Trajectory:
    """Simulate the perturbed truth for ``steps`` steps from ``x0``.

    Draw order per call: all ``steps`` process-noise samples, then all
    measurement-noise samples, so a seeded ``rng`` fixes the trajectory.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x0 = np.asarray(x0, dtype=float).reshape(model.n_states)
    q = sample(model.q_mix, rng, size=steps) @ model.G.T
    r = sample(model.r_mix, rng, size=steps)
    A = model.F_true
    states = np.empty((steps + 1, model.n_states))
    states[0] = x0
    for k in range(steps):
        states[k + 1] = A @ states[k] + q[k]
    measurements = states[1:] @ model.H.T + r
    return Trajectory(states, measurements)


def propagate_deterministic(model: UncertainLinearModel, x0, steps: int) -> np.ndarray:
    """Noise-free ``X_{k+1} = (F + dF) X_k``; returns ``steps + 1`` states."""
    x = np.asarray(x0, dtype=float).reshape(model.n_states)
    out = [x]
    for _ in range(steps):
        x = model.F_true @ x
        out.append(x)
    return np.array(out)
