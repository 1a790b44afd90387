"""RBF scenario kernel and kernel-ridge smoothing of scenario scores.

Smoothed scores are ``r = G (G + lam I)^-1 nu`` where ``G`` is the RBF Gram
matrix over the scalar scenario descriptors. Two independent routes compute
``r``: a Cholesky solve of ``(G + lam I) a = nu`` followed by ``r = G a``,
and a spectral filter ``U diag(s / (s + lam)) U^T nu`` on a cyclic Jacobi
eigendecomposition of ``G``. They must agree to round-off.
"""

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_positive, check_vector
from .exceptions import ConfigurationError, DimensionError, NumericalError

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
EIGEN_CLAMP = 1e-10


@dataclass(frozen=True)
class KernelConfig:
    sigma: float = 1.0
    lam: float = 1e-3

    def __post_init__(self):
        check_positive(self.sigma, "sigma")
        check_positive(self.lam, "lambda")


@dataclass(frozen=True, eq=False)
class KernelSystem:
    """Gram matrix with its eigendecomposition (eigenvalues descending)."""

    gram: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int

    @property
    def K(self):
        return self.gram.shape[0]


@dataclass(frozen=True, eq=False)
class ScoreVector:
    r: np.ndarray
    coefficients: np.ndarray


def rbf_kernel(eta_p, eta_q, sigma):
    check_positive(sigma, "sigma")
    d = eta_p - eta_q
    return math.exp(-(d * d) / (2.0 * sigma * sigma))


def rbf_gram(eta, sigma):
    check_positive(sigma, "sigma")
    eta = check_vector(eta, "eta")
    d = eta[:, None] - eta[None, :]
    G = np.exp(-(d * d) / (2.0 * sigma * sigma))
    # d is exactly antisymmetric, so G is exactly symmetric with unit diagonal
    return G


def jacobi_eigh(A, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns ``(eigenvalues, eigenvectors, sweeps)`` with eigenvalues sorted
    descending. Converged once the off-diagonal Frobenius norm drops to
    ``tol * ||A||_F``.
    """
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    V = np.eye(n)
    target = tol * np.linalg.norm(A)
    off_mask = ~np.eye(n, dtype=bool)

    sweeps = 0
    while math.sqrt(float(np.sum(A[off_mask] ** 2))) > target:
        if sweeps == max_sweeps:
            raise NumericalError(f"Jacobi did not converge in {max_sweeps} sweeps")
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0

                v_p = V[:, p].copy()
                V[:, p] = c * v_p - s * V[:, q]
                V[:, q] = s * v_p + c * V[:, q]

    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order], sweeps


def build_gram(eta, config):
    G = rbf_gram(eta, config.sigma)
    w, U, sweeps = jacobi_eigh(G)
    return KernelSystem(G, w, U, sweeps)


def cholesky(A):
    """Lower Cholesky factor; raises :class:`NumericalError` on a non-positive pivot."""
    n = A.shape[0]
    L = np.zeros_like(A, dtype=np.float64)
    for j in range(n):
        pivot = A[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > 0.0:
            raise NumericalError(
                f"Cholesky pivot {pivot!r} at column {j} is not positive; lambda too small?"
            )
        L[j, j] = math.sqrt(pivot)
        L[j + 1 :, j] = (A[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def cholesky_solve(L, b):
    n = L.shape[0]
    y = np.zeros(n)
    for i in range(n):
        y[i] = (b[i] - L[i, :i] @ y[:i]) / L[i, i]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - L[i + 1 :, i] @ x[i + 1 :]) / L[i, i]
    return x


def _check_target(system, nu):
    nu = check_vector(nu, "nu")
    if nu.shape[0] != system.K:
        raise DimensionError(f"nu has length {nu.shape[0]}, kernel system has K={system.K}")
    return nu


def smooth_direct(system, nu, lam):
    check_positive(lam, "lambda")
    nu = _check_target(system, nu)
    L = cholesky(system.gram + lam * np.eye(system.K))
    a = cholesky_solve(L, nu)
    return ScoreVector(system.gram @ a, a)


def spectral_filter(eigenvalues, lam):
    """Filter factors ``s / (s + lam)``, after clamping round-off negatives to 0."""
    w = np.asarray(eigenvalues, dtype=np.float64)
    if (w < -EIGEN_CLAMP).any():
        raise NumericalError(f"Gram matrix has eigenvalue {w.min()!r} below -{EIGEN_CLAMP}")
    w = np.maximum(w, 0.0)
    return w, w / (w + lam)


def smooth_spectral(system, nu, lam):
    check_positive(lam, "lambda")
    nu = _check_target(system, nu)
    w, factors = spectral_filter(system.eigenvalues, lam)
    U = system.eigenvectors
    proj = U.T @ nu
    r = U @ (factors * proj)
    a = U @ (proj / (w + lam))
    return ScoreVector(r, a)


_SOLVERS = {"cholesky": smooth_direct, "spectral": smooth_spectral}


class KernelScoreSmoother(BaseEstimator):
    """Kernel-ridge smoother over scalar scenario descriptors.

    Parameters
    ----------
    sigma : float
        RBF bandwidth.
    lam : float
        Ridge regularization added to the Gram diagonal.
    solver : {"cholesky", "spectral"}
        Which of the two equivalent routes produces ``scores_``.

    Attributes
    ----------
    system_ : KernelSystem
    gram_ : ndarray of shape (K, K)
    dual_coef_ : ndarray of shape (K,)
        Representer coefficients ``a``.
    scores_ : ndarray of shape (K,)
        Smoothed scores evaluated at the fitted descriptors.
    """

    def __init__(self, sigma=1.0, lam=1e-3, solver="cholesky"):
        self.sigma = sigma
        self.lam = lam
        self.solver = solver

    def fit(self, X, y=None):
        """Fit on descriptors ``X``; the target defaults to the descriptors themselves."""
        if self.solver not in _SOLVERS:
            raise ConfigurationError(f"unknown solver {self.solver!r}")
        config = KernelConfig(self.sigma, self.lam)
        eta = check_vector(X, "X", allow_column=True)
        nu = eta if y is None else check_vector(y, "y")
        self.system_ = build_gram(eta, config)
        scores = _SOLVERS[self.solver](self.system_, nu, config.lam)
        self.gram_ = self.system_.gram
        self.dual_coef_ = scores.coefficients
        self.scores_ = scores.r
        self.n_features_in_ = 1
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X, y).scores_
