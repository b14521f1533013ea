"""GLRT sensing receiver under residual self-interference.

The SI-plus-noise covariance of vec(Y_s) is K^T kron I with

    K = sigma_si2 F_nt^H X^H X F_nt + sigma_s2 I   (N x N),

so whitening only ever needs solves against K; the MN x MN matrix is
never built. For a steering direction theta the statistic is

    L(theta) = 2 |a^H Y_s K^-1 F^H X^H a*|^2 / (M a^T X F K^-1 F^H X^H a*),

which is chi2_2 under H0 and chi2_2(rho) under H1 with
rho = 2 M |beta|^2 a^T X F K^-1 F^H X^H a*. The factor 2 turns the
unit-variance complex projection into a two-DoF chi-squared variable.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .signal_model import delay_shift_matrix, dft_matrix, steering_vector
from .statkit import DomainError, marcum_q1

# smallest admissible a^T X F K^-1 F^H X^H a*
DEGENERATE_CUTOFF = 1e-30
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class DegenerateIlluminationError(ArithmeticError):
    """The precoder puts no energy toward the probed direction."""


@dataclass(frozen=True)
class WhitenedStatCache:
    """Per-precoder quantities shared by every GLRT evaluation.

    ``G = K^-1 F^H X^H`` (N x M) and ``B = X F G`` (M x M, Hermitian PSD)
    so that the numerator is ``a^H (Y_s G) a*`` and the denominator
    ``M a^T B a*``.
    """

    K_mat: np.ndarray
    chol: tuple
    XF: np.ndarray
    G: np.ndarray
    B: np.ndarray
    spacing_ratio: float = 0.5

    @property
    def M(self):
        return self.XF.shape[0]

    def quad_form(self, theta):
        """``a^T(theta) B a*(theta)``; vectorised over ``theta``."""
        A = steering_vector(theta, self.M, self.spacing_ratio)
        return np.real(np.einsum("...i,ij,...j->...", A, self.B, A.conj()))


def si_matrix(X, n_t, sigma_si2, sigma_s2):
    """The N x N matrix K for precoder ``X``."""
    M, N = X.shape
    XF_nt = X @ dft_matrix(N) @ delay_shift_matrix(N, n_t)
    Kmat = sigma_si2 * (XF_nt.conj().T @ XF_nt) + sigma_s2 * np.eye(N)
    return 0.5 * (Kmat + Kmat.conj().T)


def si_covariance(X, n_t, sigma_si2, sigma_s2, spacing_ratio=0.5):
    if not sigma_s2 > 0:
        raise DomainError("radar noise variance must be positive")
    X = np.asarray(X, dtype=complex)
    Kmat = si_matrix(X, n_t, sigma_si2, sigma_s2)
    try:
        chol = cho_factor(Kmat, lower=True)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - sigma_s2 floor
        raise ArithmeticError("SI covariance is not positive definite") from exc
    XF = X @ dft_matrix(X.shape[1])
    G = cho_solve(chol, XF.conj().T)
    B = XF @ G
    B = 0.5 * (B + B.conj().T)
    return WhitenedStatCache(K_mat=Kmat, chol=chol, XF=XF, G=G, B=B,
                             spacing_ratio=spacing_ratio)


def _denominator(cache, theta):
    den = cache.quad_form(theta)
    if np.any(den < DEGENERATE_CUTOFF):
        raise DegenerateIlluminationError(
            "precoder places no energy toward the probed direction"
        )
    return cache.M * den


def glrt_statistic(Y_s, X, theta, cache):
    """GLRT value ``L(theta)``.

    ``Y_s`` may carry leading batch axes and ``theta`` may be a 1-D grid,
    in which case the result has shape ``Y_s.shape[:-2] + theta.shape``.
    ``X`` is accepted for interface symmetry; everything needed is cached.
    """
    theta = np.asarray(theta, dtype=float)
    den = _denominator(cache, theta)
    A = steering_vector(theta, cache.M, cache.spacing_ratio)
    Z = np.asarray(Y_s) @ cache.G
    if theta.ndim == 0:
        num = np.einsum("i,...ij,j->...", A.conj(), Z, A.conj())
    else:
        num = np.einsum("ti,...ij,tj->...t", A.conj(), Z, A.conj())
    return 2.0 * np.abs(num) ** 2 / den


def _per_trial_statistic(Z, cache, theta):
    """L for trial-specific angles: ``Z`` is (B, M, M), ``theta`` is (B,)."""
    A = steering_vector(theta, cache.M, cache.spacing_ratio)
    num = np.einsum("bi,bij,bj->b", A.conj(), Z, A.conj())
    den = cache.M * np.real(np.einsum("bi,ij,bj->b", A, cache.B, A.conj()))
    return 2.0 * np.abs(num) ** 2 / den


def doa_search(Y_s, X, cache, grid, refine=False, refine_iters=30):
    """Grid maximiser of the GLRT over candidate directions.

    With ``refine`` a golden-section search runs inside the cell pair
    around the best grid point. Works on a single block or a batch; for
    a batch both outputs are arrays over the leading axis.

    Returns
    -------
    theta_hat, L_star
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("DoA grid is empty")
    Y_s = np.asarray(Y_s)
    single = Y_s.ndim == 2
    Yb = Y_s[None] if single else Y_s.reshape((-1,) + Y_s.shape[-2:])
    L = glrt_statistic(Yb, X, grid, cache)
    best = np.argmax(L, axis=-1)
    rows = np.arange(Yb.shape[0])
    theta_hat = grid[best]
    L_star = L[rows, best]
    if refine and grid.size > 1:
        Z = Yb @ cache.G
        lo = grid[np.maximum(best - 1, 0)]
        hi = grid[np.minimum(best + 1, grid.size - 1)]
        x1 = hi - _GOLDEN * (hi - lo)
        x2 = lo + _GOLDEN * (hi - lo)
        f1 = _per_trial_statistic(Z, cache, x1)
        f2 = _per_trial_statistic(Z, cache, x2)
        for _ in range(refine_iters):
            left = f1 > f2
            # keep [lo, x2] where f1 wins, else [x1, hi]
            hi = np.where(left, x2, hi)
            lo = np.where(left, lo, x1)
            new_x1 = hi - _GOLDEN * (hi - lo)
            new_x2 = lo + _GOLDEN * (hi - lo)
            x2n = np.where(left, x1, new_x2)
            x1n = np.where(left, new_x1, x2)
            f2n = np.where(left, f1, np.nan)
            f1n = np.where(left, np.nan, f2)
            todo1 = np.isnan(f1n)
            todo2 = np.isnan(f2n)
            f1n[todo1] = _per_trial_statistic(Z[todo1], cache, x1n[todo1])
            f2n[todo2] = _per_trial_statistic(Z[todo2], cache, x2n[todo2])
            x1, x2, f1, f2 = x1n, x2n, f1n, f2n
        cand = np.where(f1 > f2, x1, x2)
        f_cand = np.maximum(f1, f2)
        better = f_cand > L_star
        theta_hat = np.where(better, cand, theta_hat)
        L_star = np.where(better, f_cand, L_star)
    if single:
        return float(theta_hat[0]), float(L_star[0])
    shape = Y_s.shape[:-2]
    return theta_hat.reshape(shape), L_star.reshape(shape)


def np_threshold(P_FA):
    """Neyman-Pearson threshold ``-2 ln P_FA`` for the 2-DoF statistic."""
    P_FA = float(P_FA)
    if not 0.0 < P_FA < 1.0:
        raise DomainError(f"P_FA must lie in (0, 1), got {P_FA!r}")
    return -2.0 * math.log(P_FA)


def calibrate_threshold(L_h0, P_FA):
    """Empirical threshold from H0 samples of the statistic."""
    if not 0.0 < P_FA < 1.0:
        raise DomainError(f"P_FA must lie in (0, 1), got {P_FA!r}")
    return float(np.quantile(np.asarray(L_h0), 1.0 - P_FA))


def noncentrality(X, theta, beta, cache):
    """``2 M |beta|^2 a^T X F K^-1 F^H X^H a*`` at direction ``theta``."""
    den = _denominator(cache, theta)
    return 2.0 * abs(beta) ** 2 * den


def predict_pd(rho, P_FA):
    """Closed-form detection probability ``Q_1(sqrt(rho), sqrt(delta))``."""
    rho = float(rho)
    if rho < 0:
        raise DomainError("noncentrality must be nonnegative")
    return marcum_q1(math.sqrt(rho), math.sqrt(np_threshold(P_FA)))


@dataclass(frozen=True)
class DetectionReport:
    L_star: float
    theta_hat: float
    decided_H1: bool
    delta: float
    rho: float | None = None
    p_d_theory: float | None = None


def detect(Y_s, X, cache, grid, P_FA, beta=None, refine=False, delta=None):
    """Search, threshold and (when ``beta`` is known) attach the theory.

    ``delta`` overrides the analytic threshold, e.g. with one from
    :func:`calibrate_threshold`.
    """
    theta_hat, L_star = doa_search(Y_s, X, cache, grid, refine=refine)
    if delta is None:
        delta = np_threshold(P_FA)
    rho = p_d = None
    if beta is not None:
        rho = float(noncentrality(X, theta_hat, beta, cache))
        p_d = predict_pd(rho, P_FA)
    return DetectionReport(L_star=float(L_star), theta_hat=float(theta_hat),
                           decided_H1=bool(L_star > delta), delta=delta,
                           rho=rho, p_d_theory=p_d)
