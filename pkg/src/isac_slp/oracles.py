"""Independent reference computations used for cross-checks.

Each function here deliberately takes the slow, generic route
(quadrature, dense matrices, brute-force candidate search) so it shares
no code path with the routines it checks.
"""

import math

import numpy as np
from scipy import integrate, special, stats


def marcum_q1_quadrature(a, b):
    """Q_1(a, b) as the Rician tail integral, scaled Bessel for stability."""
    if b == 0:
        return 1.0

    def pdf(x):
        return x * math.exp(-0.5 * (x - a) ** 2) * special.i0e(a * x)

    # integrate the smaller tail and complement if needed
    upper = max(a, b) + 40.0
    peak = math.sqrt(a * a + 1.0)
    if b >= a:
        pts = [p for p in (peak,) if b < p < upper]
        val, _ = integrate.quad(pdf, b, upper, points=pts or None,
                                epsabs=1e-14, epsrel=1e-13, limit=400)
        return val
    pts = [p for p in (peak,) if 0 < p < b]
    val, _ = integrate.quad(pdf, 0.0, b, points=pts or None,
                            epsabs=1e-14, epsrel=1e-13, limit=400)
    return 1.0 - val


def marcum_q1_bessel(a, b, terms=400):
    """Q_1(a, b) from the modified-Bessel series (exponentially scaled)."""
    if b == 0:
        return 1.0
    if a == 0:
        return math.exp(-0.5 * b * b)
    z = a * b
    scale = math.exp(-0.5 * (a - b) ** 2)
    k = np.arange(terms)
    if a < b:
        return float(scale * np.sum((a / b) ** k * special.ive(k, z)))
    k = k[1:]
    return float(1.0 - scale * np.sum((b / a) ** k * special.ive(k, z)))


def ncx2_2_cdf_series(x, rho, tail=1e-14):
    """Noncentral chi2_2 CDF as a Poisson mixture of central chi2 CDFs."""
    if rho == 0:
        return float(stats.chi2.cdf(x, 2))
    mu = rho / 2.0
    j_max = int(mu + 20.0 * math.sqrt(mu) + 50)
    j = np.arange(j_max + 1)
    w = stats.poisson.pmf(j, mu)
    assert 1.0 - w.sum() < tail
    return float(np.sum(w * stats.chi2.cdf(x, 2 + 2 * j)))


def dense_x_update(y, Lambda, varrho, eta, prob):
    """Solve the stationarity system of the X-subproblem by a dense solve."""
    M, K, N = prob.dims
    F = prob.F
    F_nt = prob.F_nt
    y_nt = math.sqrt(prob.sigma_si2) * (F_nt @ y)
    A = np.kron(np.outer(y_nt.conj(), y_nt), np.eye(M))
    Hbd = np.zeros((K * N, M * N), dtype=complex)
    for n in range(N):
        Hbd[n * K:(n + 1) * K, n * M:(n + 1) * M] = prob.H[n]
    A = A + varrho * Hbd.conj().T @ Hbd + eta * np.eye(M * N)
    a = prob.a
    lam_s = (Lambda * prob.s).reshape(-1, order="F")
    omega = np.outer(a.conj(), (F @ y).conj()).reshape(-1, order="F")
    omega = omega + varrho * Hbd.conj().T @ lam_s
    x = np.linalg.solve(A, omega)
    return x.reshape(M, N, order="F")


def project_cone_candidates(lam, t, phi):
    """Nearest point of the constructive cone by enumerating candidates.

    Candidates: the point itself (if feasible) and its projections onto
    the two closed boundary rays from the apex. The cone is convex, so the
    projection is the nearest feasible candidate.
    """
    p = np.array([lam.real, lam.imag])
    apex = np.array([t, 0.0])
    cands = []
    if abs(lam.imag) <= math.tan(phi) * (lam.real - t):
        cands.append(p)
    for sgn in (1.0, -1.0):
        d = np.array([math.cos(phi), sgn * math.sin(phi)])
        s = max(0.0, float(np.dot(p - apex, d)))
        cands.append(apex + s * d)
    best = min(cands, key=lambda c: np.sum((c - p) ** 2))
    return complex(best[0], best[1])


def glrt_dense(Y_s, X, theta, n_t, sigma_si2, sigma_s2, spacing_ratio=0.5):
    """GLRT through explicit whitening of vec(Y_s) with the full MN x MN covariance."""
    from .signal_model import delay_shift_matrix, dft_matrix, steering_vector

    M, N = X.shape
    F = dft_matrix(N)
    F_nt = F @ delay_shift_matrix(N, n_t)
    XF_nt = X @ F_nt
    Kmat = sigma_si2 * XF_nt.conj().T @ XF_nt + sigma_s2 * np.eye(N)
    C = np.kron(Kmat.T, np.eye(M))
    a = steering_vector(theta, M, spacing_ratio)
    sig = np.outer(a, a @ (X @ F)).reshape(-1, order="F")
    y = Y_s.reshape(-1, order="F")
    Ci = np.linalg.inv(C)
    num = abs(sig.conj() @ Ci @ y) ** 2
    den = np.real(sig.conj() @ Ci @ sig)
    return 2.0 * num / den


def glrt_dense_inverse(Y_s, X, theta, n_t, sigma_si2, sigma_s2, spacing_ratio=0.5):
    """Closed-form GLRT with an explicit inverse of the N x N matrix K."""
    from .signal_model import delay_shift_matrix, dft_matrix, steering_vector

    M, N = X.shape
    F = dft_matrix(N)
    F_nt = F @ delay_shift_matrix(N, n_t)
    XF = X @ F
    XF_nt = X @ F_nt
    Ki = np.linalg.inv(sigma_si2 * XF_nt.conj().T @ XF_nt + sigma_s2 * np.eye(N))
    a = steering_vector(theta, M, spacing_ratio)
    num = abs(a.conj() @ Y_s @ Ki @ XF.conj().T @ a.conj()) ** 2
    den = M * np.real(a @ XF @ Ki @ XF.conj().T @ a.conj())
    return 2.0 * num / den
