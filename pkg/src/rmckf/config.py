"""Configuration and state containers for the filter recursion."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np


@dataclass(frozen=True, eq=False)
class BandwidthGrid:
    """Candidate kernel bandwidths searched at every step.

    ``values`` must be strictly increasing and positive; ``sigma_c`` is the
    bandwidth of the correntropy cost used to rank candidates.
    """

    values: np.ndarray
    sigma_c: float = 1.0

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        if v.ndim != 1 or v.size == 0:
            raise ValueError("grid needs at least one value")
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise ValueError("grid values must be positive and finite")
        if np.any(np.diff(v) <= 0):
            raise ValueError("grid values must be strictly increasing")
        if not self.sigma_c > 0:
            raise ValueError("sigma_c must be positive")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "sigma_c", float(self.sigma_c))

    @classmethod
    def logspace(cls, lo=0.5, hi=50.0, count=25, sigma_c=1.0):
        if count == 1:
            return cls([lo], sigma_c)
        return cls(np.geomspace(lo, hi, count), sigma_c)

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return (f"BandwidthGrid(lo={self.values[0]:g}, hi={self.values[-1]:g}, "
                f"count={self.values.size}, sigma_c={self.sigma_c:g})")


@dataclass(frozen=True)
class FilterConfig:
    """Tuning of one filter in the family.

    ``bandwidth`` is a positive float for a fixed kernel, ``np.inf`` for the
    Gaussian (Kalman) limit, or a :class:`BandwidthGrid` for per-step
    selection. ``on_risk`` chooses between raising and halving ``mu1`` when
    ``P^-1 - 2 mu1 I`` loses positive definiteness. With halving, ``mu1`` is
    cut until ``2 mu1 lambda_max(P) < risk_ceiling``; a ceiling of 1 is the
    bare positivity condition, smaller values cap the prediction inflation
    ``1 / (1 - 2 mu1 lambda_max)``.
    """

    mu1: float = 0.0
    mu2: float = 1.0
    bandwidth: float | BandwidthGrid = np.inf
    epsilon: float = 1e-6
    t_max: int = 100
    include_past_errors: bool = False
    on_risk: str = "raise"
    risk_ceiling: float = 1.0

    def __post_init__(self):
        if self.mu1 < 0:
            raise ValueError("mu1 must be >= 0")
        if not self.mu2 > 0:
            raise ValueError("mu2 must be > 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if int(self.t_max) < 1:
            raise ValueError("t_max must be >= 1")
        if not isinstance(self.bandwidth, BandwidthGrid) and not float(self.bandwidth) > 0:
            raise ValueError("fixed sigma must be > 0")
        if self.on_risk not in ("raise", "halve"):
            raise ValueError("on_risk must be 'raise' or 'halve'")
        if not 0 < self.risk_ceiling <= 1:
            raise ValueError("risk_ceiling must be in (0, 1]")

    @property
    def selects_bandwidth(self) -> bool:
        return isinstance(self.bandwidth, BandwidthGrid)


@dataclass(frozen=True)
class StepInfo:
    """Per-step bookkeeping attached to the state a step returns."""

    sigma: np.ndarray
    mu1: np.ndarray
    halvings: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    candidate_jkb: np.ndarray | None = None
    candidate_failed: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class FilterState:
    """Posterior ``(mean, cov)`` at time ``k`` plus past-error accumulators.

    Arrays may carry leading batch axes (one filter per batch element).
    """

    mean: np.ndarray
    cov: np.ndarray
    rho_p: np.ndarray
    rho_r: np.ndarray
    k: int = 0
    info: StepInfo | None = field(default=None, compare=False)

    @classmethod
    def initial(cls, mean, cov, n_outputs: int) -> FilterState:
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        batch = mean.shape[:-1]
        state = cls(mean, cov, np.zeros(mean.shape), np.zeros(batch + (n_outputs,)), 0)
        state.check()
        return state

    def check(self, tol: float = 1e-10) -> None:
        """Raise ValueError if the documented invariants do not hold."""
        n = self.mean.shape[-1]
        if self.cov.shape[-2:] != (n, n):
            raise ValueError("cov does not match mean")
        if np.max(np.abs(self.cov - np.swapaxes(self.cov, -1, -2)), initial=0.0) > tol:
            raise ValueError("cov is not symmetric")
        if np.any(np.linalg.eigvalsh(self.cov) <= 0):
            raise ValueError("cov is not positive definite")
        if np.any(self.rho_p > 0) or np.any(self.rho_r > 0):
            raise ValueError("past-error accumulators must be <= 0")

    def replace(self, **changes: Any) -> FilterState:
        return replace(self, **changes)
