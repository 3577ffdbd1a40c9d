"""The filter recursion and its scikit-learn style estimator.

``step`` advances a :class:`FilterState` by one measurement.
:class:`RobustCorrentropyKalmanFilter` wraps the recursion behind
``fit``/``transform`` so a measurement sequence (or a batch of them) can be
filtered with a single call. The Kalman, risk-sensitive and plain
maximum-correntropy filters are parameter limits of the same estimator;
see :func:`make_filter`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .bandwidth import select_bandwidth
from .config import BandwidthGrid, FilterConfig, FilterState, StepInfo
from .core import (
    FPIStatus,
    build_augmented,
    fpi_update,
    posterior_covariance,
    predict,
    risk_margin,
)
from .exceptions import FilterError, RiskTooLarge

MAX_HALVINGS = 64


def _admissible_mu1(cov, mu1, on_risk, ceiling=1.0):
    """Per-element ``mu1`` after halving until ``2 mu1 lambda_max(P) < ceiling``."""
    batch = cov.shape[:-2]
    mu1 = np.broadcast_to(np.asarray(mu1, dtype=float), batch).copy()
    halvings = np.zeros(batch, dtype=int)
    if np.all(mu1 == 0):
        return mu1, halvings
    bad = risk_margin(cov, mu1) <= 0
    if on_risk == "raise":
        if np.any(bad):
            raise RiskTooLarge("P^-1 - 2*mu1*I is not positive definite; reduce mu1", mask=bad)
        return mu1, halvings
    top = np.linalg.eigvalsh(cov)[..., -1]
    bad = 2.0 * mu1 * top >= ceiling
    for _ in range(MAX_HALVINGS):
        if not np.any(bad):
            return mu1, halvings
        mu1[bad] *= 0.5
        halvings[bad] += 1
        bad = bad & (2.0 * mu1 * top >= ceiling)
    raise RiskTooLarge(f"mu1 still inadmissible after {MAX_HALVINGS} halvings", mask=bad)


def step(state: FilterState, Y, F, H, Q, R, config: FilterConfig,
         record_candidates: bool = False) -> FilterState:
    """One prediction/update cycle.

    Prediction with the (possibly halved) risk parameter, Cholesky whitening,
    bandwidth selection when the config carries a grid, the fixed-point
    update and the Joseph covariance update. With ``include_past_errors``
    the accumulators gain ``-mu1 e^2 / (2 sigma^2)`` from the converged errors.
    Errors are re-raised tagged with the new time index.
    """
    k = state.k + 1
    try:
        mu1, halvings = _admissible_mu1(state.cov, config.mu1, config.on_risk,
                                         config.risk_ceiling)
        prior_mean, prior_cov = predict(state.mean, state.cov, F, Q, mu1)
        factors = build_augmented(prior_mean, prior_cov, R, H, Y)
        rho_p = state.rho_p if config.include_past_errors else None
        rho_r = state.rho_r if config.include_past_errors else None
        jkb_table = failed = None
        if config.selects_bandwidth:
            sel = select_bandwidth(prior_mean, prior_cov, Y, H, R, config, rho_p=rho_p,
                                   rho_r=rho_r, factors=factors)
            result, sigma = sel.result, sel.sigma
            if record_candidates:
                jkb_table, failed = sel.jkb, sel.failed
        else:
            result = fpi_update(prior_mean, prior_cov, Y, H, R, config, rho_p=rho_p,
                                rho_r=rho_r, factors=factors)
            sigma = np.broadcast_to(float(config.bandwidth), result.iterations.shape)
        cov = posterior_covariance(prior_cov, result.gain, H, R)
    except FilterError as err:
        raise err.at(k) from err

    new_rho_p, new_rho_r = state.rho_p, state.rho_r
    if config.include_past_errors:
        with np.errstate(divide="ignore"):
            scale = np.where(np.isinf(sigma), 0.0, mu1 / (2.0 * np.asarray(sigma) ** 2))[..., None]
        new_rho_p = state.rho_p - scale * result.e_p**2
        new_rho_r = state.rho_r - scale * result.e_r**2
    info = StepInfo(sigma=np.asarray(sigma), mu1=mu1, halvings=halvings,
                    iterations=result.iterations,
                    converged=result.status == FPIStatus.CONVERGED,
                    candidate_jkb=jkb_table, candidate_failed=failed)
    return FilterState(result.mean, cov, new_rho_p, new_rho_r, k, info)


@dataclass
class FilterRun:
    """Output of :func:`run_filter` for a batch of measurement sequences."""

    means: np.ndarray  # (B, K, n)
    covariances: np.ndarray  # (B, K, n, n)
    sigmas: np.ndarray  # (B, K)
    mu1: np.ndarray  # (B, K) effective risk parameter
    halvings: np.ndarray  # (B, K)
    iterations: np.ndarray  # (B, K)
    converged: np.ndarray  # (B, K)
    failed: np.ndarray  # (B,)
    failure: list  # (B,) exception or None
    candidate_jkb: np.ndarray | None = None  # (B, K, G)
    candidate_failed: np.ndarray | None = None


def run_filter(Y, F, H, Q, R, x0, P0, config: FilterConfig,
               record_candidates: bool = False) -> FilterRun:
    """Filter a batch ``Y`` of shape ``(B, K, m)``.

    A numerical failure in one sequence marks that sequence failed (with
    the exception kept in ``failure``) and drops it from the batch so the
    remaining sequences proceed; failed rows hold NaN.
    """
    Y = np.asarray(Y, dtype=float)
    B, K, m = Y.shape
    n = np.asarray(F).shape[0]
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (B, n))
    P0 = np.broadcast_to(np.asarray(P0, dtype=float), (B, n, n))
    state = FilterState.initial(x0.copy(), P0.copy(), m)
    G = len(config.bandwidth) if config.selects_bandwidth and record_candidates else 0

    out = FilterRun(
        means=np.full((B, K, n), np.nan),
        covariances=np.full((B, K, n, n), np.nan),
        sigmas=np.full((B, K), np.nan),
        mu1=np.full((B, K), np.nan),
        halvings=np.zeros((B, K), dtype=int),
        iterations=np.zeros((B, K), dtype=int),
        converged=np.zeros((B, K), dtype=bool),
        failed=np.zeros(B, dtype=bool),
        failure=[None] * B,
        candidate_jkb=np.full((B, K, G), np.nan) if G else None,
        candidate_failed=np.zeros((B, K, G), dtype=bool) if G else None,
    )
    alive = np.arange(B)
    for k in range(K):
        while alive.size:
            try:
                new = step(state, Y[alive, k], F, H, Q, R, config, record_candidates)
                break
            except FilterError as err:
                mask = None if err.mask is None else np.asarray(err.mask)
                if mask is None or mask.shape != alive.shape or not mask.any():
                    raise
                for b in alive[mask]:
                    out.failure[b] = err
                out.failed[alive[mask]] = True
                keep = ~mask
                alive = alive[keep]
                state = state.replace(mean=state.mean[keep], cov=state.cov[keep],
                                      rho_p=state.rho_p[keep], rho_r=state.rho_r[keep])
        if not alive.size:
            break
        state = new
        info = state.info
        out.means[alive, k] = state.mean
        out.covariances[alive, k] = state.cov
        out.sigmas[alive, k] = info.sigma
        out.mu1[alive, k] = info.mu1
        out.halvings[alive, k] = info.halvings
        out.iterations[alive, k] = info.iterations
        out.converged[alive, k] = info.converged
        if G:
            out.candidate_jkb[alive, k] = info.candidate_jkb
            out.candidate_failed[alive, k] = info.candidate_failed
    out.means[out.failed] = np.nan
    out.covariances[out.failed] = np.nan
    return out


class RobustCorrentropyKalmanFilter(TransformerMixin, BaseEstimator):
    """Robust maximum-correntropy Kalman filter with optional bandwidth search.

    Parameters
    ----------
    F, H, Q, R : array_like
        Nominal transition, measurement, process- and measurement-noise
        covariance matrices.
    x0, P0 : array_like
        Initial posterior mean and covariance.
    mu1 : float, default=0
        Risk parameter on past errors; inflates the predicted covariance.
    mu2 : float, default=1
        Risk parameter on the present error.
    sigma : float or "select", default=inf
        Fixed kernel bandwidth, ``np.inf`` for the Gaussian limit, or
        ``"select"`` to search ``sigma_grid`` at every step.
    sigma_grid : BandwidthGrid, optional
        Candidates for ``sigma="select"``; defaults to 25 log-spaced values
        in [0.5, 50] with ``sigma_c = 1``.
    epsilon, t_max : float, int
        Fixed-point stopping tolerance and iteration cap.
    include_past_errors : bool, default=False
        Feed accumulated past errors into the kernel weights.
    on_risk : {"raise", "halve"}, default="raise"
        What to do when ``mu1`` violates the positivity condition.
    risk_ceiling : float, default=1
        Halving target for ``2 mu1 lambda_max(P)``; see :class:`FilterConfig`.
    record_candidates : bool, default=False
        Keep the per-candidate cost table of the bandwidth search.

    Attributes
    ----------
    means_ : ndarray of shape (K, n) or (B, K, n)
        Posterior means for the last ``fit`` input.
    covariances_ : ndarray
        Posterior covariances, ``(..., K, n, n)``.
    sigmas_ : ndarray
        Bandwidth used at every step.
    run_ : FilterRun
        Full batched output including diagnostics.
    """

    def __init__(self, F, H, Q, R, x0, P0, mu1=0.0, mu2=1.0, sigma=np.inf, sigma_grid=None,
                 epsilon=1e-6, t_max=100, include_past_errors=False, on_risk="raise",
                 risk_ceiling=1.0, record_candidates=False):
        self.F = F
        self.H = H
        self.Q = Q
        self.R = R
        self.x0 = x0
        self.P0 = P0
        self.mu1 = mu1
        self.mu2 = mu2
        self.sigma = sigma
        self.sigma_grid = sigma_grid
        self.epsilon = epsilon
        self.t_max = t_max
        self.include_past_errors = include_past_errors
        self.on_risk = on_risk
        self.risk_ceiling = risk_ceiling
        self.record_candidates = record_candidates

    def config(self) -> FilterConfig:
        if isinstance(self.sigma, str):
            if self.sigma != "select":
                raise ValueError(f"sigma must be a number or 'select', got {self.sigma!r}")
            bandwidth = self.sigma_grid if self.sigma_grid is not None else BandwidthGrid.logspace()
        else:
            bandwidth = float(self.sigma)
        return FilterConfig(mu1=float(self.mu1), mu2=float(self.mu2), bandwidth=bandwidth,
                            epsilon=float(self.epsilon), t_max=int(self.t_max),
                            include_past_errors=bool(self.include_past_errors),
                            on_risk=self.on_risk, risk_ceiling=float(self.risk_ceiling))

    def _validate(self, Y):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        n, m = F.shape[0], H.shape[0]
        if F.shape != (n, n) or Q.shape != (n, n) or H.shape[1] != n or R.shape != (m, m):
            raise ValueError("inconsistent system matrix shapes")
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1 and m == 1:
            Y = Y[:, None]
        if Y.ndim not in (2, 3) or Y.shape[-1] != m or Y.shape[-2] < 1:
            raise ValueError(f"Y must have shape (K, {m}) or (B, K, {m}), got {Y.shape}")
        if not np.all(np.isfinite(Y)):
            raise ValueError("Y contains NaN or inf")
        return F, H, Q, R, Y

    def fit(self, Y, y=None):
        """Filter ``Y`` and store the estimates.

        A single sequence ``(K, m)`` raises on numerical failure; in a batch
        ``(B, K, m)`` failed sequences are flagged in ``run_.failed``.
        """
        F, H, Q, R, Y = self._validate(Y)
        single = Y.ndim == 2
        batch = Y[None] if single else Y
        run = run_filter(batch, F, H, Q, R, self.x0, self.P0, self.config(),
                         record_candidates=self.record_candidates)
        if single and run.failed[0]:
            raise run.failure[0]
        self.run_ = run
        squeeze = (lambda a: a[0]) if single else (lambda a: a)
        self.means_ = squeeze(run.means)
        self.covariances_ = squeeze(run.covariances)
        self.sigmas_ = squeeze(run.sigmas)
        self.n_features_in_ = H.shape[0]
        return self

    def transform(self, Y):
        """Posterior means for ``Y`` (the filter is re-run on the input)."""
        check_is_fitted(self, "run_")
        return self.fit(Y).means_

    def fit_transform(self, Y, y=None):
        return self.fit(Y).means_


FAMILY = {
    # name: (uses mu1, bandwidth kind)
    "kf": (False, "inf"),
    "rskf": (True, "inf"),
    "mckf": (False, "fixed"),
    "rmckf-fk": (True, "fixed"),
    "mckf-sk": (False, "select"),
    "rmckf-sk": (True, "select"),
}


def make_filter(name, F, H, Q, R, x0, P0, *, mu1=0.01, mu2=1.0, sigma=5.0, grid=None,
                **kwargs) -> RobustCorrentropyKalmanFilter:
    """Estimator for one member of the family by its short name (see ``FAMILY``)."""
    try:
        robust, kind = FAMILY[name]
    except KeyError:
        raise ValueError(f"unknown filter {name!r}; choose from {sorted(FAMILY)}") from None
    bandwidth = {"inf": np.inf, "fixed": sigma, "select": "select"}[kind]
    return RobustCorrentropyKalmanFilter(
        F, H, Q, R, x0, P0, mu1=mu1 if robust else 0.0, mu2=mu2, sigma=bandwidth,
        sigma_grid=grid, **kwargs)
