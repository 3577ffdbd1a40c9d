"""Runtime checks from the stability and fixed-point convergence analysis.

Everything here is advisory: the filter never consults these functions,
the benchmark only records their output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import risk_margin
from .exceptions import GramSingular, ObservabilityDegenerate
from .noise import gaussian_kernel
from .system import UncertainLinearModel

__all__ = [
    "ContractionReport",
    "GrammianReport",
    "contraction_bounds",
    "grammians",
    "risk_positivity_audit",
    "stability_condition",
]

# relative eigenvalue floor below which a Grammian counts as singular
RANK_TOL = 1e-12


def _powers(A, count):
    out = [np.eye(A.shape[0])]
    for _ in range(count - 1):
        out.append(A @ out[-1])
    return out


def _eig_bounds(M):
    ev = np.linalg.eigvalsh(0.5 * (M + M.T))
    return float(ev[0]), float(ev[-1])


@dataclass(frozen=True, eq=False)
class GrammianReport:
    controllability: np.ndarray
    observability: np.ndarray
    window: int
    controllability_bounds: tuple[float, float]
    observability_bounds: tuple[float, float]

    @property
    def observable(self) -> bool:
        lo, hi = self.observability_bounds
        return lo > RANK_TOL * max(hi, 1.0)

    @property
    def controllable(self) -> bool:
        lo, hi = self.controllability_bounds
        return lo > RANK_TOL * max(hi, 1.0)


def grammians(model: UncertainLinearModel, R_equiv=None, Q_equiv=None, k: int | None = None,
              l: int = 1) -> GrammianReport:
    """Windowed controllability and observability Grammians of the true system.

    With ``A = F + dF`` time invariant, the transition over ``j`` steps is
    ``A^j``, so::

        C = sum_{j=0}^{l-1} (A^j)^T Q A^j
        O = sum_{j=0}^{l}   (A^j)^T H^T R^-1 H A^j

    ``k`` only has to satisfy ``k >= l``; it does not change the result.
    ``R_equiv``/``Q_equiv`` default to the model's equivalent covariances.
    """
    l = int(l)
    if l < 1:
        raise ValueError("window l must be >= 1")
    if k is not None and k < l:
        raise ValueError("need k >= l")
    R = model.R if R_equiv is None else np.atleast_2d(np.asarray(R_equiv, dtype=float))
    Q = model.Q if Q_equiv is None else np.atleast_2d(np.asarray(Q_equiv, dtype=float))
    H = model.H
    info = H.T @ np.linalg.solve(R, H)
    powers = _powers(model.F_true, l + 1)
    C = sum(P.T @ Q @ P for P in powers[:l])
    O = sum(P.T @ info @ P for P in powers)
    C = 0.5 * (C + C.T)
    O = 0.5 * (O + O.T)
    return GrammianReport(C, O, l, _eig_bounds(C), _eig_bounds(O))


def _delta_observability(F, dF, info, l):
    """First-order change of the observability sum when ``F -> F + dF``.

    ``sum_j (F^j)^T H^T R^-1 H dPhi_j`` with
    ``dPhi_j = sum_{a<j} F^a dF F^(j-1-a)``.
    """
    powers = _powers(F, l + 1)
    total = np.zeros_like(F)
    for j in range(1, l + 1):
        dphi = sum(powers[a] @ dF @ powers[j - 1 - a] for a in range(j))
        total += powers[j].T @ info @ dphi
    return total


def stability_condition(model: UncertainLinearModel, R_equiv=None, k: int | None = None,
                        l: int = 1) -> tuple[bool, float]:
    """Perturbation condition on the observability Grammian.

    Returns ``(holds, radius)`` where ``radius`` is the spectral radius of
    ``O^-1 dO``, ``O`` is the nominal (``dF = 0``) Grammian and ``dO`` its
    first-order perturbation. The condition holds when ``radius < 1``.
    Because ``dO`` is linear in ``dF``, scaling ``dF`` by ``s`` scales the
    radius by ``|s|``.

    Raises
    ------
    ObservabilityDegenerate
        If the nominal Grammian is singular.
    """
    l = int(l)
    if l < 1:
        raise ValueError("window l must be >= 1")
    if k is not None and k < l:
        raise ValueError("need k >= l")
    R = model.R if R_equiv is None else np.atleast_2d(np.asarray(R_equiv, dtype=float))
    info = model.H.T @ np.linalg.solve(R, model.H)
    nominal = grammians(model.with_delta(np.zeros_like(model.F)), R, k=k, l=l)
    if not nominal.observable:
        raise ObservabilityDegenerate(
            f"observability Grammian is singular (eigenvalues {nominal.observability_bounds})")
    dO = _delta_observability(model.F, model.deltaF, info, l)
    M = np.linalg.solve(nominal.observability, dO)
    radius = float(np.max(np.abs(np.linalg.eigvals(M))))
    return radius < 1.0, radius


def risk_positivity_audit(P_trace, mu1) -> np.ndarray:
    """Per-covariance check that ``P^-1 - 2 mu1 I`` is positive definite.

    ``P_trace`` has shape ``(..., n, n)``; ``mu1`` broadcasts against the
    leading axes.
    """
    P_trace = np.asarray(P_trace, dtype=float)
    if np.all(np.asarray(mu1) == 0):
        return np.ones(P_trace.shape[:-2], dtype=bool)
    return risk_margin(P_trace, mu1) > 0


@dataclass(frozen=True)
class ContractionReport:
    phi: float
    psi: float
    beta: float
    alpha: float
    contraction_ok: bool
    phi_limit: float  # value of phi as sigma -> inf


def contraction_bounds(D, W, beta: float, mu2: float, sigma: float,
                       alpha: float | None = None) -> ContractionReport:
    """Bounds on the fixed-point map and its Jacobian for whitened rows ``(d_i, w_i)``.

    With ``a_i = beta ||w_i||_1 + |d_i|``, ``g_i = G_sigma(a_i)`` and
    ``lam = lambda_min(sum_i g_i w_i w_i^T)``::

        phi = sqrt(L) sum_i |d_i| ||w_i||_1 / lam
        psi = sqrt(L) sum_i mu2 a_i ||w_i||_1 (beta ||w_i w_i^T||_1 + |d_i| ||w_i||_1)
              / (sigma^2 lam)

    ``alpha`` defaults to ``psi``; ``contraction_ok`` is
    ``phi <= beta and psi <= alpha < 1``.

    Raises
    ------
    GramSingular
        If the weighted Gram matrix is not positive definite.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    D = np.asarray(D, dtype=float).reshape(-1)
    if W.shape[0] != D.size:
        raise ValueError("D and W must have the same number of rows")
    if not beta > 0:
        raise ValueError("beta must be > 0")
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    L = D.size
    w1 = np.abs(W).sum(axis=1)
    winf = np.abs(W).max(axis=1)
    d = np.abs(D)
    a = beta * w1 + d
    g = gaussian_kernel(a, sigma)

    def lam_min(weights):
        gram = (W.T * weights) @ W
        return float(np.linalg.eigvalsh(0.5 * (gram + gram.T))[0])

    lam = lam_min(g)
    if not lam > 0:
        raise GramSingular(f"weighted Gram matrix has minimum eigenvalue {lam:.3g}")
    root_l = np.sqrt(L)
    top = float(np.sum(d * w1))
    phi = root_l * top / lam
    # ||w w^T||_1 is the largest column sum, ||w||_1 * ||w||_inf
    terms = mu2 * a * w1 * (beta * w1 * winf + d * w1)
    psi = root_l * float(np.sum(terms)) / (sigma**2 * lam)
    lam_inf = lam_min(np.ones(L))
    phi_limit = root_l * top / lam_inf if lam_inf > 0 else np.inf
    alpha = psi if alpha is None else float(alpha)
    ok = bool(phi <= beta and psi <= alpha < 1.0)
    return ContractionReport(float(phi), float(psi), float(beta), float(alpha), ok,
                             float(phi_limit))
