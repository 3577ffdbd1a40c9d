"""Building blocks of the robust maximum-correntropy Kalman recursion.

Every function accepts arrays with arbitrary leading batch axes: vectors are
``(..., n)`` and matrices ``(..., n, n)``. System matrices ``F``, ``H``, ``Q``
may be shared (unbatched). Failures on batched input raise with ``mask``
set to the offending elements.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .config import FilterConfig
from .exceptions import (
    FactorizationFailed,
    InnovationSingular,
    PiSingular,
    RiskTooLarge,
)

#: Kernel weights below this are treated as a singular Pi.
PI_FLOOR = 1e-300
#: Below this iterate norm the relative FPI stopping rule switches to absolute.
NORM_FLOOR = 1e-12


class FPIStatus(enum.IntEnum):
    CONVERGED = 0
    MAX_ITERATIONS = 1
    PI_SINGULAR = 2
    INNOVATION_SINGULAR = 3


def _t(a):
    return np.swapaxes(a, -1, -2)


def _sym(a):
    return 0.5 * (a + _t(a))


def _mv(a, x):
    return (a @ x[..., None])[..., 0]


def _solve(a, b):
    return np.linalg.solve(a, b)


def _solve_vec(a, b):
    return np.linalg.solve(a, b[..., None])[..., 0]


def _cholesky(a):
    """Lower Cholesky factor plus a per-element success mask.

    Failed elements get an identity factor so downstream algebra stays finite.
    """
    a = np.asarray(a, dtype=float)
    try:
        chol = np.linalg.cholesky(a)
        ok = np.all(np.isfinite(chol), axis=(-2, -1))
        if ok.all():
            return chol, ok
    except np.linalg.LinAlgError:
        pass
    n = a.shape[-1]
    flat = a.reshape(-1, n, n)
    out = np.empty_like(flat)
    ok = np.ones(flat.shape[0], dtype=bool)
    for i, block in enumerate(flat):
        try:
            out[i] = np.linalg.cholesky(block)
            ok[i] = np.all(np.isfinite(out[i]))
        except np.linalg.LinAlgError:
            ok[i] = False
        if not ok[i]:
            out[i] = np.eye(n)
    return out.reshape(a.shape), ok.reshape(a.shape[:-2])


def risk_margin(cov, mu1):
    """Minimum eigenvalue of ``P^-1 - 2 mu1 I``; positive means ``mu1`` is admissible.

    Evaluated as ``1 / lambda_max(P) - 2 mu1`` so ``P`` is never inverted.
    """
    cov = np.asarray(cov, dtype=float)
    mu1 = np.asarray(mu1, dtype=float)
    top = np.linalg.eigvalsh(cov)[..., -1]
    with np.errstate(divide="ignore"):
        return np.where(top > 0, 1.0 / top, -np.inf) - 2.0 * mu1


def predict(mean, cov, F, Q, mu1=0.0):
    """Risk-sensitive time update.

    Returns ``(F mean, F (P^-1 - 2 mu1 I)^-1 F^T + Q)``. The inflated
    covariance is formed as ``(I - 2 mu1 P)^-1 P``; with ``mu1 == 0`` the
    covariance is propagated directly.

    Raises
    ------
    RiskTooLarge
        If ``P^-1 - 2 mu1 I`` is not positive definite.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    mu1 = np.asarray(mu1, dtype=float)
    F = np.asarray(F, dtype=float)
    if np.all(mu1 == 0):
        inflated = cov
    else:
        bad = risk_margin(cov, mu1) <= 0
        if np.any(bad):
            raise RiskTooLarge("P^-1 - 2*mu1*I is not positive definite; reduce mu1", mask=bad)
        n = cov.shape[-1]
        shrink = np.eye(n) - 2.0 * mu1[..., None, None] * cov
        inflated = np.where((mu1 == 0)[..., None, None], cov, _sym(_solve(shrink, cov)))
    prior_mean = _mv(F, mean)
    prior_cov = _sym(F @ inflated @ _t(F) + Q)
    return prior_mean, prior_cov


@dataclass(frozen=True, eq=False)
class AugmentedFactors:
    """Whitened regression form ``D = W x + e`` of one measurement update.

    ``B_p`` and ``B_r`` are the lower Cholesky factors of the prior covariance
    and of ``R``; ``D = B^-1 [prior_mean; Y]`` and ``W = B^-1 [I; H]``.
    """

    B_p: np.ndarray
    B_r: np.ndarray
    D: np.ndarray
    W: np.ndarray

    @property
    def n(self) -> int:
        return self.B_p.shape[-1]

    @property
    def D_p(self):
        return self.D[..., : self.n]

    @property
    def D_r(self):
        return self.D[..., self.n :]

    @property
    def W_p(self):
        return self.W[..., : self.n, :]

    @property
    def W_r(self):
        return self.W[..., self.n :, :]


def _concat(a, b, core_ndim):
    batch = np.broadcast_shapes(a.shape[: a.ndim - core_ndim], b.shape[: b.ndim - core_ndim])
    a = np.broadcast_to(a, batch + a.shape[a.ndim - core_ndim :])
    b = np.broadcast_to(b, batch + b.shape[b.ndim - core_ndim :])
    return np.concatenate([a, b], axis=-core_ndim)


def build_augmented(prior_mean, prior_cov, R, H, Y) -> AugmentedFactors:
    """Factor the prior and measurement covariances and whiten the regression."""
    prior_mean = np.asarray(prior_mean, dtype=float)
    Y = np.asarray(Y, dtype=float)
    H = np.asarray(H, dtype=float)
    B_p, ok_p = _cholesky(prior_cov)
    B_r, ok_r = _cholesky(R)
    ok = ok_p & ok_r
    if not np.all(ok):
        raise FactorizationFailed("covariance is not numerically positive definite", mask=~ok)
    n = B_p.shape[-1]
    D = _concat(_solve_vec(B_p, prior_mean), _solve_vec(B_r, Y), 1)
    W = _concat(np.broadcast_to(_solve(B_p, np.eye(n)), B_p.shape), _solve(B_r, H), 2)
    return AugmentedFactors(B_p, B_r, D, W)


def weighted_errors(candidate, prior_mean, Y, H, B_p, B_r):
    """Whitened process and measurement errors at a candidate posterior mean.

    ``e_p = -B_p^-1 (x - prior_mean)`` and ``e_r = B_r^-1 (Y - H x)``.
    """
    candidate = np.asarray(candidate, dtype=float)
    e_p = -_solve_vec(B_p, candidate - prior_mean)
    e_r = _solve_vec(B_r, Y - _mv(np.asarray(H, dtype=float), candidate))
    return e_p, e_r


def _kernel_exponent(e, mu2, sigma):
    sigma = np.asarray(sigma, dtype=float)[..., None]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return np.where(np.isinf(sigma), 0.0, mu2 * e**2 / (2.0 * sigma**2))


def _pi(e, rho, mu2, sigma):
    with np.errstate(under="ignore"):
        return np.exp(rho - _kernel_exponent(e, mu2, sigma))


def compute_pi(e, rho, mu2, sigma):
    """Diagonal of the kernel weight matrix, ``exp(rho_i - mu2 e_i^2 / (2 sigma^2))``.

    ``sigma`` may be ``np.inf``. Returned as the vector of diagonal entries;
    use ``np.diag`` (or ``x[..., None] * I``) for the matrix.

    Raises
    ------
    PiSingular
        If any entry falls below ``PI_FLOOR``.
    """
    e = np.asarray(e, dtype=float)
    rho = np.zeros_like(e) if rho is None else np.asarray(rho, dtype=float)
    if np.any(np.asarray(sigma) <= 0):
        raise ValueError("sigma must be positive")
    pi = _pi(e, rho, mu2, sigma)
    bad = np.any(pi < PI_FLOOR, axis=-1)
    if np.any(bad):
        raise PiSingular("kernel weight underflow; sigma too small for the error", mask=bad)
    return pi


def _gain(B_p, B_r, pi_p, pi_r, H):
    with np.errstate(over="ignore", invalid="ignore"):
        P_bar = (B_p / pi_p[..., None, :]) @ _t(B_p)
        R_bar = (B_r / pi_r[..., None, :]) @ _t(B_r)
        HP = H @ P_bar
        S = _sym(HP @ _t(H) + R_bar)
    finite = np.all(np.isfinite(S), axis=(-2, -1)) & np.all(np.isfinite(HP), axis=(-2, -1))
    S = np.where(finite[..., None, None], S, np.eye(S.shape[-1]))
    L, ok = _cholesky(S)
    ok &= finite
    HP = np.where(ok[..., None, None], HP, 0.0)
    K = _t(_solve(_t(L), _solve(L, HP)))
    return K, ok


def gain(B_p, B_r, pi_p, pi_r, H):
    """Correntropy-weighted gain ``P_bar H^T (H P_bar H^T + R_bar)^-1``.

    ``P_bar = B_p diag(pi_p)^-1 B_p^T`` and likewise for ``R_bar``. The
    innovation covariance is inverted through its Cholesky factor.
    """
    pi_p = np.asarray(pi_p, dtype=float)
    pi_r = np.asarray(pi_r, dtype=float)
    if np.any(pi_p <= 0) or np.any(pi_r <= 0):
        raise PiSingular("kernel weights must be positive")
    K, ok = _gain(np.asarray(B_p, float), np.asarray(B_r, float), pi_p, pi_r, np.asarray(H, float))
    if not np.all(ok):
        raise InnovationSingular("weighted innovation covariance is singular", mask=~ok)
    return K


@dataclass(frozen=True, eq=False)
class FPIResult:
    mean: np.ndarray
    gain: np.ndarray
    e_p: np.ndarray
    e_r: np.ndarray
    iterations: np.ndarray
    status: np.ndarray

    @property
    def converged(self):
        return self.status == FPIStatus.CONVERGED

    @property
    def errors(self):
        """Stacked ``[e_p; e_r]``."""
        return np.concatenate([self.e_p, self.e_r], axis=-1)


def fpi_update(prior_mean, prior_cov, Y, H, R, config: FilterConfig, *, sigma=None,
               rho_p=None, rho_r=None, factors: AugmentedFactors | None = None,
               errors: str = "raise") -> FPIResult:
    """Fixed-point iteration for the posterior mean.

    Starting from the prior mean, alternate between the whitened errors at
    the current iterate, the kernel weights, the gain and the update
    ``x = prior_mean + K (Y - H prior_mean)`` until the relative step is at
    most ``config.epsilon`` (absolute when the iterate norm is below
    ``NORM_FLOOR``) or ``config.t_max`` gains have been evaluated.

    ``sigma`` defaults to ``config.bandwidth`` and may be an array that
    broadcasts against the batch axes. The returned errors are re-evaluated
    at the final iterate. Elements that stop at ``t_max`` are flagged
    ``MAX_ITERATIONS`` but never raise; with ``errors="raise"`` kernel or
    innovation singularities raise, with ``errors="flag"`` they are only
    recorded in ``status``.
    """
    prior_mean = np.asarray(prior_mean, dtype=float)
    Y = np.asarray(Y, dtype=float)
    H = np.asarray(H, dtype=float)
    m, n = H.shape[-2:]
    if factors is None:
        factors = build_augmented(prior_mean, prior_cov, R, H, Y)
    if sigma is None:
        if config.selects_bandwidth:
            raise ValueError("a grid-selected config needs an explicit sigma")
        sigma = config.bandwidth
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    rho_p = np.zeros(n) if rho_p is None else np.asarray(rho_p, dtype=float)
    rho_r = np.zeros(m) if rho_r is None else np.asarray(rho_r, dtype=float)

    batch = np.broadcast_shapes(prior_mean.shape[:-1], Y.shape[:-1], H.shape[:-2],
                                factors.B_p.shape[:-2],
                                factors.B_r.shape[:-2], sigma.shape, rho_p.shape[:-1],
                                rho_r.shape[:-1])
    N = int(np.prod(batch, dtype=int))

    def flat(a, core):
        return np.broadcast_to(a, batch + core).reshape((N,) + core)

    pm = flat(prior_mean, (n,))
    y = flat(Y, (m,))
    Bp = flat(factors.B_p, (n, n))
    Br = flat(factors.B_r, (m, m))
    sig = flat(sigma, ())
    rp = flat(rho_p, (n,))
    rr = flat(rho_r, (m,))
    Hf = flat(H, (m, n))
    nu = y - _mv(Hf, pm)

    x = pm.copy()
    K = np.zeros((N, n, m))
    iterations = np.zeros(N, dtype=int)
    status = np.full(N, FPIStatus.MAX_ITERATIONS, dtype=int)
    active = np.arange(N)
    for _ in range(int(config.t_max)):
        xa = x[active]
        e_p, e_r = weighted_errors(xa, pm[active], y[active], Hf[active], Bp[active], Br[active])
        pi_p = _pi(e_p, rp[active], config.mu2, sig[active])
        pi_r = _pi(e_r, rr[active], config.mu2, sig[active])
        pi_bad = np.any(pi_p < PI_FLOOR, axis=-1) | np.any(pi_r < PI_FLOOR, axis=-1)
        pi_p = np.where(pi_bad[:, None], 1.0, pi_p)
        pi_r = np.where(pi_bad[:, None], 1.0, pi_r)
        Ka, ok = _gain(Bp[active], Br[active], pi_p, pi_r, Hf[active])
        x_new = pm[active] + _mv(Ka, nu[active])
        iterations[active] += 1

        status[active[pi_bad]] = FPIStatus.PI_SINGULAR
        status[active[~ok & ~pi_bad]] = FPIStatus.INNOVATION_SINGULAR
        good = ok & ~pi_bad
        step = np.linalg.norm(x_new - xa, axis=-1)
        base = np.linalg.norm(xa, axis=-1)
        done = np.where(base < NORM_FLOOR, step <= config.epsilon, step <= config.epsilon * base)

        x[active[good]] = x_new[good]
        K[active[good]] = Ka[good]
        status[active[good & done]] = FPIStatus.CONVERGED
        active = active[good & ~done]
        if active.size == 0:
            break

    e_p, e_r = weighted_errors(x, pm, y, Hf, Bp, Br)
    status = status.reshape(batch)
    result = FPIResult(
        mean=x.reshape(batch + (n,)),
        gain=K.reshape(batch + (n, m)),
        e_p=e_p.reshape(batch + (n,)),
        e_r=e_r.reshape(batch + (m,)),
        iterations=iterations.reshape(batch),
        status=status,
    )
    if errors == "raise":
        bad = status == FPIStatus.PI_SINGULAR
        if np.any(bad):
            raise PiSingular("kernel weight underflow during fixed-point iteration", mask=bad)
        bad = status == FPIStatus.INNOVATION_SINGULAR
        if np.any(bad):
            raise InnovationSingular("weighted innovation covariance is singular", mask=bad)
    return result


def posterior_covariance(prior_cov, K, H, R):
    """Joseph-form ``(I - K H) P (I - K H)^T + K R K^T``, symmetrized.

    Uses the nominal prior covariance and ``R``, valid for any gain.
    """
    K = np.asarray(K, dtype=float)
    H = np.asarray(H, dtype=float)
    A = np.eye(K.shape[-2]) - K @ H
    return _sym(A @ prior_cov @ _t(A) + K @ R @ _t(K))
