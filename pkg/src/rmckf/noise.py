"""Zero-mean Gaussian-mixture noise and Gaussian-kernel correntropy helpers."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Zero-mean mixture ``sum_i a_i N(0, Sigma_i)`` of ``d``-dimensional normals.

    Parameters
    ----------
    weights : array_like, shape (c,)
        Mixing probabilities; must sum to one.
    covariances : array_like, shape (c, d, d)
        Symmetric positive-definite component covariances. Scalars and
        ``(c,)`` arrays are accepted for the one-dimensional case.
    means : array_like, optional
        Accepted only so that non-zero means can be rejected loudly.
    """

    weights: np.ndarray
    covariances: np.ndarray
    means: np.ndarray | None = None

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-D sequence")
        cov = np.asarray(self.covariances, dtype=float)
        if cov.ndim <= 1:
            cov = cov.reshape(-1, 1, 1)
        if cov.ndim != 3 or cov.shape[1] != cov.shape[2]:
            raise ValueError(f"covariances must have shape (c, d, d), got {cov.shape}")
        if cov.shape[0] != w.size:
            raise ValueError("one covariance per weight is required")
        if np.any(w < 0) or np.any(w > 1):
            raise ValueError("weights must lie in [0, 1]")
        if abs(w.sum() - 1.0) > _TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        if np.max(np.abs(cov - np.swapaxes(cov, 1, 2))) > _TOL:
            raise ValueError("component covariances must be symmetric")
        if np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValueError("component covariances must be positive definite")
        if self.means is not None and np.any(np.asarray(self.means) != 0):
            raise ValueError("only zero-mean mixtures are supported")

        w.setflags(write=False)
        cov = cov.copy()
        cov.setflags(write=False)
        chol = np.linalg.cholesky(cov)
        chol.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "covariances", cov)
        object.__setattr__(self, "means", None)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_cdf", np.cumsum(w))

    @classmethod
    def scalar(cls, components):
        """Build a 1-D mixture from ``[(weight, variance), ...]``."""
        weights, variances = zip(*components)
        return cls(np.array(weights), np.array(variances, dtype=float))

    @classmethod
    def independent(cls, marginal: GaussianMixture, dim: int):
        """Product mixture of ``dim`` independent copies of a scalar mixture.

        Each coordinate picks its component independently, so the result
        has ``c**dim`` diagonal components.
        """
        if marginal.dim != 1:
            raise ValueError("marginal must be one-dimensional")
        var = marginal.covariances[:, 0, 0]
        weights, covs = [], []
        for combo in itertools.product(range(marginal.n_components), repeat=dim):
            weights.append(np.prod(marginal.weights[list(combo)]))
            covs.append(np.diag(var[list(combo)]))
        weights = np.array(weights)
        return cls(weights / weights.sum(), np.array(covs))

    @property
    def dim(self) -> int:
        return self.covariances.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.size

    def __repr__(self):
        covs = self.covariances[:, 0, 0] if self.dim == 1 else self.covariances
        parts = ", ".join(
            f"({w:g}, {np.round(c, 12).tolist()})" for w, c in zip(self.weights, covs)
        )
        return f"GaussianMixture([{parts}])"


def equivalent_covariance(mix: GaussianMixture) -> np.ndarray:
    """Second moment ``sum_i a_i Sigma_i`` of a zero-mean mixture."""
    cov = np.einsum("c,cij->ij", mix.weights, mix.covariances)
    return 0.5 * (cov + cov.T)


def sample(mix: GaussianMixture, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw from ``mix``.

    Each draw consumes one uniform (component choice by inverse CDF over the
    cumulative weights) followed by ``d`` standard normals. Returns shape
    ``(d,)`` when ``size`` is None, else ``(size, d)``.
    """
    n = 1 if size is None else int(size)
    u = rng.random(n)
    idx = np.searchsorted(mix._cdf, u, side="right")
    idx = np.minimum(idx, mix.n_components - 1)
    z = rng.standard_normal((n, mix.dim))
    out = np.einsum("nij,nj->ni", mix._chol[idx], z)
    return out[0] if size is None else out


def gaussian_kernel(e, sigma):
    """``exp(-e^2 / (2 sigma^2))``; broadcasts, ``sigma=inf`` gives 1."""
    e = np.asarray(e, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(np.isinf(sigma), 0.0, e**2 / (2.0 * sigma**2))
    return np.exp(-z)


def sample_correntropy(errors, sigma) -> float:
    """Sample-mean correntropy ``(1/L) sum_i G_sigma(e_i)``."""
    errors = np.asarray(errors, dtype=float).ravel()
    if errors.size == 0:
        raise ValueError("correntropy of an empty error vector is undefined")
    return float(np.mean(gaussian_kernel(errors, sigma)))
