"""Scalar statistical kernels for the 2-DoF chi-squared detector, plus bisection."""

import math

import numpy as np
from scipy.special import gammainc, gammaincc, gammaln


class DomainError(ValueError):
    """Argument outside the domain of a statistical kernel."""


class BracketError(RuntimeError):
    """No sign change could be found for a root search."""


class ConvergenceError(RuntimeError):
    """Iteration limit reached; ``best`` holds the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


# poisson tail mass that may be dropped from the marcum series
_TRUNCATION_BOUND = 1e-13


def _check_nonneg(name, value):
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value!r}")
    if value < 0:
        raise DomainError(f"{name} must be nonnegative, got {value!r}")


def chi2_2_cdf(x):
    """CDF of a central chi-squared variable with two degrees of freedom."""
    x = float(x)
    _check_nonneg("x", x)
    return -math.expm1(-0.5 * x)


def chi2_2_inv_cdf(p):
    """Inverse of :func:`chi2_2_cdf`, i.e. ``-2 ln(1 - p)``."""
    p = float(p)
    if not (0.0 <= p < 1.0):
        raise DomainError(f"p must lie in [0, 1), got {p!r}")
    return -2.0 * math.log1p(-p)


def _poisson_window(mu):
    """Index window holding all but a negligible part of Poisson(mu) mass."""
    if mu == 0.0:
        return 0, 0
    width = 12.0 * math.sqrt(mu) + 30.0
    return max(0, int(math.floor(mu - width))), int(math.ceil(mu + width))


def _log_poisson_pmf(j, mu):
    if mu == 0.0:
        return np.where(j == 0, 0.0, -np.inf)
    return j * math.log(mu) - mu - gammaln(j + 1.0)


def marcum_q1(a, b):
    """First-order Marcum Q-function ``Q_1(a, b)``.

    Uses the mixture representation of the noncentral chi-squared law,

        Q_1(a, b) = sum_j Pois(j; a^2/2) * P(Pois(b^2/2) <= j),

    with both Poisson laws evaluated in log space. The outer sum is
    truncated to a window whose dropped Poisson mass is checked against
    ``_TRUNCATION_BOUND``; since every inner factor lies in [0, 1], that
    mass bounds the truncation error. When ``b < a`` the complementary
    sum is used so the smaller of ``Q_1`` and ``1 - Q_1`` is the one
    accumulated.

    Parameters
    ----------
    a, b : float
        Nonnegative arguments (``a = sqrt(rho)``, ``b = sqrt(delta)``).

    Returns
    -------
    float
        ``P(chi2_2(a^2) > b^2)``.
    """
    a = float(a)
    b = float(b)
    _check_nonneg("a", a)
    _check_nonneg("b", b)
    if b == 0.0:
        return 1.0
    mu_sig = 0.5 * a * a
    mu_thr = 0.5 * b * b
    lo, hi = _poisson_window(mu_sig)
    j = np.arange(lo, hi + 1, dtype=float)
    w = np.exp(_log_poisson_pmf(j, mu_sig))
    # exact tail masses; 1 - sum(w) would only measure rounding for large mu
    dropped = gammainc(hi + 1.0, mu_sig) + (gammaincc(lo, mu_sig) if lo > 0 else 0.0)
    if dropped > _TRUNCATION_BOUND:
        raise ConvergenceError(f"marcum series window lost {dropped:.3e} mass")

    # P(Pois(mu) <= j) = Q(j+1, mu), P(Pois(mu) > j) = P(j+1, mu)
    if b >= a:
        return float(min(1.0, max(0.0, np.dot(w, gammaincc(j + 1.0, mu_thr)))))
    cdf = np.dot(w, gammainc(j + 1.0, mu_thr))
    return float(min(1.0, max(0.0, 1.0 - cdf)))


def noncentral_chi2_2_cdf(x, rho):
    """CDF of a noncentral chi-squared variable with 2 DoF and noncentrality ``rho``."""
    x = float(x)
    rho = float(rho)
    _check_nonneg("x", x)
    _check_nonneg("rho", rho)
    if rho == 0.0:
        return chi2_2_cdf(x)
    return 1.0 - marcum_q1(math.sqrt(rho), math.sqrt(x))


def bisect(f, lo, hi, tol=1e-10, max_iter=200, xtol=None, hi_cap=1e300, points=1):
    """Root of a monotone function by bisection.

    If ``f(lo)`` and ``f(hi)`` share a sign, ``hi`` is doubled (and ``lo``
    moved up to the old ``hi``) until a sign change appears or ``hi``
    exceeds ``hi_cap``.

    Stops when ``|f(mid)| <= tol`` or the bracket width is at most
    ``xtol * max(1, |mid|)`` (``xtol`` defaults to ``tol``; pass ``0`` to
    stop only on the residual or on floating-point exhaustion).

    With ``points > 1`` each iteration evaluates ``points`` equispaced
    interior nodes in a single call (``f`` must then accept an array) and
    keeps the sub-interval holding the sign change, shrinking the bracket
    by ``points + 1`` per call instead of 2.

    Raises
    ------
    BracketError
        No sign change within the cap.
    ConvergenceError
        ``max_iter`` exceeded; ``.best`` is the iterate with the smallest
        ``|f|``.
    """
    if xtol is None:
        xtol = tol
    lo = float(lo)
    hi = float(hi)
    f_lo = float(f(lo))
    f_hi = float(f(hi))
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    while np.sign(f_lo) == np.sign(f_hi):
        if hi > hi_cap:
            raise BracketError(f"no sign change on [{lo}, {hi}]")
        lo, f_lo = hi, f_hi
        hi = 2.0 * hi if hi > 0 else 1.0
        f_hi = float(f(hi))
        if f_hi == 0:
            return hi
    best, f_best = (lo, f_lo) if abs(f_lo) < abs(f_hi) else (hi, f_hi)
    frac = np.arange(1, points + 1) / (points + 1.0)
    for _ in range(max_iter):
        if points == 1:
            nodes = np.array([0.5 * (lo + hi)])
            vals = np.array([f(nodes[0])], dtype=float)
        else:
            nodes = np.unique(lo + (hi - lo) * frac)
            nodes = nodes[(nodes > lo) & (nodes < hi)]
            if nodes.size == 0:
                return best
            vals = np.asarray(f(nodes), dtype=float)
        if nodes[0] <= lo or nodes[-1] >= hi:
            return best
        i = int(np.argmin(np.abs(vals)))
        if abs(vals[i]) < abs(f_best):
            best, f_best = float(nodes[i]), float(vals[i])
        if abs(vals[i]) <= tol:
            return float(nodes[i])
        flip = np.flatnonzero(np.sign(vals) != np.sign(f_lo))
        if flip.size:
            j = flip[0]
            hi, f_hi = float(nodes[j]), float(vals[j])
            if j > 0:
                lo, f_lo = float(nodes[j - 1]), float(vals[j - 1])
        else:
            lo, f_lo = float(nodes[-1]), float(vals[-1])
        if hi - lo <= xtol * max(1.0, abs(best)):
            return best
    raise ConvergenceError(f"bisection did not converge in {max_iter} iterations", best=best)
