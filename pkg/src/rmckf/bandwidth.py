"""Per-step kernel bandwidth selection and heuristic baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import BandwidthGrid, FilterConfig
from .core import AugmentedFactors, FPIResult, FPIStatus, build_augmented, fpi_update
from .exceptions import AllCandidatesFailed, ZeroInnovation

__all__ = [
    "BandwidthGrid",
    "BandwidthSelection",
    "baseline_bandwidth",
    "jkb",
    "select_bandwidth",
]


def jkb(errors, sigma_c):
    """Log mean Gaussian kernel of an error vector (last axis).

    ``log((1/L) sum_i exp(-e_i^2 / (2 sigma_c^2)))``; at most 0, and 0 only
    for an all-zero error. Evaluated with log-sum-exp so large errors stay
    finite.
    """
    errors = np.asarray(errors, dtype=float)
    if errors.shape[-1] < 1:
        raise ValueError("need at least one error")
    z = -(errors**2) / (2.0 * np.asarray(sigma_c, dtype=float) ** 2)
    top = np.max(z, axis=-1)
    return top + np.log(np.mean(np.exp(z - top[..., None]), axis=-1))


@dataclass(frozen=True, eq=False)
class BandwidthSelection:
    sigma: np.ndarray
    result: FPIResult
    jkb: np.ndarray  # (..., G), -inf for failed candidates
    failed: np.ndarray  # (..., G)

    @property
    def n_failed(self):
        return self.failed.sum(axis=-1)


def _choose(scores, values):
    """Index of the best score per row, ties going to the largest value."""
    order = np.argsort(values, kind="stable")
    s = scores[..., order]
    best = np.max(s, axis=-1, keepdims=True)
    hit = s == best
    last = s.shape[-1] - 1 - np.argmax(hit[..., ::-1], axis=-1)
    return order[last]


def select_bandwidth(prior_mean, prior_cov, Y, H, R, config: FilterConfig,
                     grid: BandwidthGrid | None = None, *, rho_p=None, rho_r=None,
                     factors: AugmentedFactors | None = None) -> BandwidthSelection:
    """Grid search for the bandwidth whose converged errors maximize :func:`jkb`.

    Every candidate runs the full fixed-point update; candidates that hit a
    kernel/innovation singularity or ``t_max`` are skipped. The winner's
    update is returned so the caller need not recompute it.

    Raises
    ------
    AllCandidatesFailed
        If no candidate converged (``mask`` marks the affected batch elements).
    """
    grid = grid if grid is not None else config.bandwidth
    if not isinstance(grid, BandwidthGrid):
        raise TypeError("select_bandwidth needs a BandwidthGrid")
    prior_mean = np.asarray(prior_mean, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if factors is None:
        factors = build_augmented(prior_mean, prior_cov, R, H, Y)

    def cand(a, core_ndim):
        return None if a is None else np.expand_dims(np.asarray(a, dtype=float), -core_ndim - 1)

    expanded = AugmentedFactors(cand(factors.B_p, 2), cand(factors.B_r, 2),
                                cand(factors.D, 1), cand(factors.W, 2))
    H = np.asarray(H, dtype=float)
    res = fpi_update(cand(prior_mean, 1), None, cand(Y, 1), cand(H, 2), R, config,
                     sigma=grid.values, rho_p=cand(rho_p, 1), rho_r=cand(rho_r, 1),
                     factors=expanded, errors="flag")
    failed = res.status != FPIStatus.CONVERGED
    scores = np.where(failed, -np.inf, jkb(res.errors, grid.sigma_c))

    all_failed = np.all(failed, axis=-1)
    if np.any(all_failed):
        raise AllCandidatesFailed("every bandwidth candidate failed", mask=all_failed)
    idx = _choose(scores, grid.values)

    def pick(a, core_ndim):
        ix = idx.reshape(idx.shape + (1,) * (core_ndim + 1))
        return np.take_along_axis(a, ix, axis=-core_ndim - 1).squeeze(-core_ndim - 1)

    chosen = FPIResult(pick(res.mean, 1), pick(res.gain, 2), pick(res.e_p, 1),
                       pick(res.e_r, 1), pick(res.iterations, 0), pick(res.status, 0))
    return BandwidthSelection(grid.values[idx], chosen, scores, failed)


def baseline_bandwidth(rule, Y, H, prior_mean, prior_cov, R) -> float:
    """Heuristic bandwidths from the innovation ``nu = Y - H prior_mean``.

    ``euclidean``: ``||nu||``; ``mahalanobis``: ``|nu^T R^-1 nu|``;
    ``weighted_innovation``: ``1 / (sqrt(nu^T R^-1 nu) + ||H P H^T||_2)``.

    Raises
    ------
    ZeroInnovation
        If the rule yields zero; callers usually fall back to the grid minimum.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    nu = np.atleast_1d(np.asarray(Y, dtype=float)) - H @ np.atleast_1d(prior_mean)
    if rule == "euclidean":
        sigma = float(np.linalg.norm(nu))
    elif rule == "mahalanobis":
        sigma = float(abs(nu @ np.linalg.solve(R, nu)))
    elif rule == "weighted_innovation":
        hph = H @ np.atleast_2d(prior_cov) @ H.T
        sigma = 1.0 / (np.sqrt(nu @ np.linalg.solve(R, nu)) + np.linalg.norm(hph, 2))
    else:
        raise ValueError(f"unknown bandwidth rule {rule!r}")
    if sigma == 0:
        raise ZeroInnovation(f"{rule} bandwidth is zero")
    return sigma
