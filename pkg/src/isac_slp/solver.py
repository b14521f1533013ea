"""Penalty / block-coordinate-descent solver for SI-aware symbol-level precoding.

Problem: maximise a^T X F K^-1 F^H X^H a* over the precoder X (M x N)
and slacks Lambda (K x N) subject to ||X||_F^2 <= P_T, H_n x_n =
lambda_n * s_n and the constructive-region cone on every lambda_{k,n}.

The equality constraints are moved into a quadratic penalty with weight
varrho, and the fractional objective is replaced through the quadratic
transform by the minimisation form

    varrho sum_n ||H_n x_n - lambda_n * s_n||^2 - 2 Re{y^H F^H X^H a*}
        + y^H K(X) y,

which is solved by cycling exact minimisations over y, X and Lambda.
The outer loop grows varrho until the equality residual is small.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .detector import si_covariance
from .signal_model import (
    crandn,
    delay_shift_matrix,
    dft_matrix,
    steering_vector,
)
from .statkit import bisect

# absolute slack for monotone-descent checks, relative to 1 + |objective|
MONOTONE_SLACK = 1e-12


class InvariantViolation(RuntimeError):
    """A property that holds in exact arithmetic failed beyond its slack."""


@dataclass(frozen=True)
class SolverOptions:
    """Solver knobs.

    ``varrho0`` is expressed in normalised units (P_T = 1, sigma_s2 = 1,
    min Gamma = 1); ``eps_p`` is relative to min Gamma.
    """

    varrho0: float = 1.0
    c_varrho: float = 5.0
    eps_p: float = 1e-4
    max_outer: int = 12
    bcd_tol: float = 1e-7
    max_bcd: int = 300
    eta_tol: float = 1e-10
    init_mode: str = "matched-beam"
    normalize: bool = True

    def __post_init__(self):
        if not self.c_varrho > 1:
            raise ValueError("c_varrho must exceed 1")
        for name in ("varrho0", "eps_p", "bcd_tol", "eta_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.init_mode not in ("matched-beam", "zero-forcing", "random"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")


@dataclass
class Problem:
    """Data of one precoding instance (physical units)."""

    H: np.ndarray  # (N, K, M)
    s: np.ndarray  # (K, N)
    theta: float
    n_t: int
    sigma_si2: float
    sigma_s2: float
    P_T: float
    Gamma: np.ndarray  # (K,)
    phi: float = math.pi / 4
    spacing_ratio: float = 0.5
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=complex)
        self.s = np.asarray(self.s, dtype=complex)
        self.Gamma = np.asarray(self.Gamma, dtype=float)
        N, K, M = self.H.shape
        if self.s.shape != (K, N):
            raise ValueError(f"symbols must be {K} x {N}, got {self.s.shape}")
        if self.Gamma.shape != (K,):
            raise ValueError("need one Gamma per user")

    @classmethod
    def from_instance(cls, config, channels, symbols, n_t, sigma_si2=None, theta=None):
        return cls(
            H=channels.H,
            s=symbols.s,
            theta=config.theta_true if theta is None else theta,
            n_t=n_t,
            sigma_si2=config.sigma_si2 if sigma_si2 is None else sigma_si2,
            sigma_s2=config.sigma_s2,
            P_T=config.P_T,
            Gamma=config.Gamma,
            phi=config.phi,
            spacing_ratio=config.antenna_spacing_ratio,
        )

    @property
    def dims(self):
        N, K, M = self.H.shape
        return M, K, N

    @property
    def a(self):
        if "a" not in self._cache:
            self._cache["a"] = steering_vector(self.theta, self.dims[0], self.spacing_ratio)
        return self._cache["a"]

    @property
    def F(self):
        if "F" not in self._cache:
            self._cache["F"] = dft_matrix(self.dims[2])
        return self._cache["F"]

    @property
    def F_nt(self):
        if "F_nt" not in self._cache:
            N = self.dims[2]
            self._cache["F_nt"] = self.F @ delay_shift_matrix(N, self.n_t)
        return self._cache["F_nt"]

    @property
    def gram_eig(self):
        """Eigenpairs of every H_n^H H_n, ``(e (N, M), V (N, M, M))``."""
        if "eig" not in self._cache:
            gram = np.einsum("nki,nkj->nij", self.H.conj(), self.H)
            e, V = np.linalg.eigh(gram)
            self._cache["eig"] = (np.clip(e, 0.0, None), V)
        return self._cache["eig"]

    def with_sigma_si2(self, sigma_si2):
        return replace(self, sigma_si2=sigma_si2, _cache={})

    def scaled(self):
        """Equivalent problem in units with P_T = sigma_s2 = min Gamma = 1.

        Returns the scaled problem and the factors ``(x, lam, y, obj)``
        mapping scaled quantities back: X = x X~, Lambda = lam Lambda~,
        y = y_f y~ and objective = obj * objective~.
        """
        g = float(self.Gamma.min())
        x = math.sqrt(self.P_T)
        y_f = x / self.sigma_s2
        obj = self.P_T / self.sigma_s2
        prob = replace(
            self,
            H=self.H * (x / g),
            sigma_si2=self.sigma_si2 * self.P_T / self.sigma_s2,
            sigma_s2=1.0,
            P_T=1.0,
            Gamma=self.Gamma / g,
            _cache={},
        )
        return prob, (x, g, y_f, obj)


@dataclass
class PrecodeSolution:
    X: np.ndarray
    Lambda: np.ndarray
    y: np.ndarray
    objective_trace: list
    feasibility_residual: float
    rho_value: float
    final_varrho: float
    feasible: bool = True
    residual_history: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)


@dataclass
class BCDResult:
    X: np.ndarray
    Lambda: np.ndarray
    y: np.ndarray
    objective_trace: list
    iterations: int


def received(X, prob):
    """Noiseless per-subcarrier receive values H_n x_n as a K x N array."""
    return np.einsum("nkm,mn->kn", prob.H, X)


def constraint_residuals(X, Lambda, prob):
    return received(X, prob) - Lambda * prob.s


def feasibility_residual(X, Lambda, prob):
    """max_n ||H_n x_n - lambda_n * s_n||."""
    R = constraint_residuals(X, Lambda, prob)
    return float(np.sqrt(np.max(np.sum(np.abs(R) ** 2, axis=0))))


def penalty_term(X, Lambda, prob):
    return float(np.sum(np.abs(constraint_residuals(X, Lambda, prob)) ** 2))


def _k_matrix(X, prob):
    """Same matrix as :func:`detector.si_matrix`, reusing the cached operators."""
    XF_nt = X @ prob.F_nt
    Kmat = prob.sigma_si2 * (XF_nt.conj().T @ XF_nt)
    Kmat[np.diag_indices_from(Kmat)] += prob.sigma_s2
    return 0.5 * (Kmat + Kmat.conj().T)


def objective_13a(X, Lambda, y, varrho, prob):
    """Quadratic-transform objective (minimisation form)."""
    Kmat = _k_matrix(X, prob)
    cross = np.vdot(prob.F @ y, X.conj().T @ prob.a.conj())
    quad = np.real(np.vdot(y, Kmat @ y))
    return varrho * penalty_term(X, Lambda, prob) - 2.0 * np.real(cross) + quad


def rho_objective(X, prob, sigma_si2=None):
    """Fractional sensing objective ``a^T X F K^-1 F^H X^H a*``.

    ``sigma_si2`` overrides the problem's SI level, which is how a design
    is evaluated under a different SI world than it was built for.
    """
    if sigma_si2 is None:
        sigma_si2 = prob.sigma_si2
    if not np.any(X):
        return 0.0
    cache = si_covariance(X, prob.n_t, sigma_si2, prob.sigma_s2, prob.spacing_ratio)
    return float(cache.quad_form(prob.theta))


def update_y(X, prob):
    """Closed-form minimiser ``K^-1 F^H X^H a*`` of the objective over y."""
    Kmat = _k_matrix(X, prob)
    rhs = prob.F.conj().T @ (X.conj().T @ prob.a.conj())
    return cho_solve(cho_factor(Kmat, lower=True), rhs)


class _XSystem:
    """x(eta) = [(y_nt* y_nt^T) kron I + varrho H^H H + eta I]^-1 omega.

    The system is D + U U^H with D block diagonal (blocks varrho H_n^H H_n
    + eta I, diagonal in the eigenbasis of H_n^H H_n) and U = conj(y_nt)
    kron I_M, so each solve costs one M x M Woodbury capacitance system.
    """

    def __init__(self, y, Lambda, varrho, prob):
        e, V = prob.gram_eig
        self.V = V
        self.VH = prob._cache.setdefault("VH", np.ascontiguousarray(V.conj().transpose(0, 2, 1)))
        self.De = varrho * e  # (N, M)
        y_nt = math.sqrt(prob.sigma_si2) * (prob.F_nt @ y)
        self.u = y_nt.conj()
        self.u2 = np.abs(self.u) ** 2
        w = prob.F @ y
        b = Lambda * prob.s  # (K, N)
        omega = np.outer(w.conj(), prob.a.conj())  # row n: a* conj(w_n)
        omega = omega + varrho * np.einsum("nkm,kn->nm", prob.H.conj(), b)
        self.omega = omega
        self.omega_hat = (self.VH @ omega[:, :, None])[:, :, 0]
        self.capacitance_perturbation = 0.0

    def singular_at(self, eta):
        d = self.De + eta
        return np.min(d) <= 1e-13 * max(1.0, np.max(d))

    def _capacitance(self, d):
        # C = I + sum_n |u_n|^2 V_n diag(1/d_n) V_n^H as one Gram product
        N, M = self.De.shape
        W = self.V * np.sqrt(self.u2[:, None] / d)[..., None, :]
        W = np.swapaxes(W, -3, -2).reshape(d.shape[:-2] + (M, N * M))
        C = W @ np.swapaxes(W, -1, -2).conj()
        C += (1.0 + self.capacitance_perturbation) * np.eye(M)
        return C

    def _apply(self, d, C, rhs_hat):
        """A^-1 r in eigenbasis coordinates, given D + eta and C."""
        z_hat = rhs_hat / d
        # U^H D^-1 r = sum_n conj(u_n) V_n z_hat_n
        r = (self.V @ (z_hat * self.u.conj()[:, None])[..., None]).sum(axis=-3)
        c = np.linalg.solve(C, r)  # (..., M, 1)
        c_hat = (self.VH @ c[..., None, :, :])[..., 0]
        return (rhs_hat - self.u[:, None] * c_hat) / d

    def solve_hat(self, eta):
        """Eigenbasis coordinates of every x_n for multiplier(s) ``eta``.

        A 1-D ``eta`` adds a leading axis to the result.
        """
        eta = np.asarray(eta, dtype=float)
        d = self.De + eta[..., None, None]  # (..., N, M)
        return self._apply(d, self._capacitance(d), self.omega_hat)

    def norm2(self, eta):
        x_hat = self.solve_hat(eta)
        return np.sum(np.abs(x_hat) ** 2, axis=(-2, -1))

    def norm2_slope(self, eta):
        """``||x(eta)||^2`` and its derivative ``-2 x^H A(eta)^-1 x``."""
        d = self.De + float(eta)
        C = self._capacitance(d)
        x_hat = self._apply(d, C, self.omega_hat)
        w_hat = self._apply(d, C, x_hat)
        f = float(np.sum(np.abs(x_hat) ** 2))
        fp = -2.0 * float(np.real(np.vdot(x_hat, w_hat)))
        return f, fp, x_hat

    def to_x(self, x_hat):
        return (self.V @ x_hat[:, :, None])[:, :, 0].T

    def solve(self, eta):
        return self.to_x(self.solve_hat(eta))


# interior nodes per bisection call when solving for the power multiplier
ETA_SECTIONS = 31


def update_x(y, Lambda, varrho, prob, eta_tol=1e-10, return_eta=False,
             eta_hint=None, _perturb=0.0):
    """Exact minimiser over X under the power budget.

    eta = 0 is kept when the unconstrained minimiser fits the budget;
    otherwise eta solves ||x(eta)||^2 = P_T by safeguarded Newton, landing
    on the side 0 <= ||x||^2 / P_T - 1 <= eta_tol. That side makes x(eta) the exact
    minimiser over a ball containing the budget ball, so the update never
    raises the objective. If the system is
    singular at eta = 0 the smallest usable eta (relative 1e-14 of the
    system scale) stands in for zero. ``eta_hint`` (e.g. the multiplier
    from the previous sweep) is tried as the starting point.
    """
    if not varrho > 0:
        raise ValueError("varrho must be positive")
    sys_ = _XSystem(y, Lambda, varrho, prob)
    sys_.capacitance_perturbation = _perturb
    P_T = prob.P_T
    scale = max(1.0, float(np.max(sys_.De)), float(np.sum(sys_.u2)))
    eta_min = 0.0 if not sys_.singular_at(0.0) else 1e-14 * scale

    def excess(t):
        return sys_.norm2(t) / P_T - 1.0 - 0.5 * eta_tol

    f0, fp0, x_hat = sys_.norm2_slope(eta_min)
    if f0 / P_T - 1.0 <= 0.0:
        X = sys_.to_x(x_hat)
        return (X, eta_min) if return_eta else X
    eta, x_hat = _newton_eta(sys_, P_T, eta_min, (f0, fp0, x_hat), eta_tol, eta_hint)
    if x_hat is None:
        # safeguarded Newton gave up; fall back to k-section
        eta = bisect(excess, eta_min, max(1.0, 2.0 * eta_min), tol=0.5 * eta_tol,
                     max_iter=400, xtol=0.0, points=ETA_SECTIONS)
        x_hat = sys_.solve_hat(eta)
    X = sys_.to_x(x_hat)
    if return_eta:
        return X, eta
    return X


def _newton_eta(sys_, P_T, eta_min, first, eta_tol, eta_hint, max_iter=100):
    """Newton on ``1/||x(eta)|| - 1/sqrt(P_T)``, safeguarded by a bracket.

    ``1/||x(eta)||`` is concave and increasing, so Newton iterates started
    left of the root stay there; any step leaving the bracket is replaced
    by bisection. Returns
    ``(eta, x_hat)`` with ``0 <= ||x||^2/P_T - 1 <= eta_tol``, or
    ``(None, None)`` if it does not settle.
    """
    lo, hi = eta_min, math.inf
    eta = eta_min
    f, fp, x_hat = first
    if eta_hint is not None and eta_hint > eta_min:
        fh, fph, xh = sys_.norm2_slope(eta_hint)
        if fh / P_T - 1.0 >= 0.0:
            eta, f, fp, x_hat = eta_hint, fh, fph, xh
            lo = eta_hint
        else:
            hi = eta_hint
    for _ in range(max_iter):
        ex = f / P_T - 1.0
        if 0.0 <= ex <= eta_tol:
            return _polish(sys_, P_T, eta, f, fp, x_hat, ex)
        if ex > eta_tol:
            lo = max(lo, eta)
        else:
            hi = min(hi, eta)
        g = 1.0 / math.sqrt(f) - 1.0 / math.sqrt(P_T)
        gp = -0.5 * fp / f**1.5
        step = eta - g / gp if gp > 0 else math.nan
        if not lo < step < hi:
            step = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * max(eta, 1.0)
        if step == eta:
            break
        eta = step
        f, fp, x_hat = sys_.norm2_slope(eta)
    return None, None


def _polish(sys_, P_T, eta, f, fp, x_hat, ex, steps=4):
    """Extra Newton steps that shrink the excess toward rounding level.

    Successive X-updates each land in the accepted band; keeping the excess
    near zero keeps the previous iterate inside the next update's ball, so
    descent holds to rounding. A step is taken if it strictly reduces the
    excess without undershooting by more than rounding; Newton often lands
    one ulp below the budget, which must not strand the excess higher up.
    """
    floor = 4.0 * np.finfo(float).eps
    for _ in range(steps):
        if abs(ex) <= floor:
            break
        g = 1.0 / math.sqrt(f) - 1.0 / math.sqrt(P_T)
        gp = -0.5 * fp / f**1.5
        if not gp > 0:
            break
        eta_n = eta - g / gp
        f_n, fp_n, x_n = sys_.norm2_slope(eta_n)
        ex_n = f_n / P_T - 1.0
        if not -floor <= ex_n < ex:
            break
        eta, f, fp, x_hat, ex = eta_n, f_n, fp_n, x_n, ex_n
    return eta, x_hat


def project_lambda(lambda_hat, t, phi):
    """Euclidean projection onto {lambda : |Im| <= tan(phi) (Re - t)}.

    Four cases: inside the cone (unchanged), nearest point on the upper
    or lower boundary ray, or the apex ``t``. Vectorised over array
    inputs; ``t`` broadcasts against ``lambda_hat``.
    """
    lam = np.asarray(lambda_hat, dtype=complex)
    t = np.broadcast_to(np.asarray(t, dtype=float), lam.shape)
    re = lam.real - t
    im = lam.imag
    c, s_ = math.cos(phi), math.sin(phi)
    inside = np.abs(im) * c <= re * s_
    apex = re * c + np.abs(im) * s_ <= 0.0
    upper = ~inside & ~apex & (im > 0)
    lower = ~inside & ~apex & (im <= 0)

    out = lam.copy()
    lr, li = lam.real, lam.imag
    up_re = lr * c * c + li * c * s_ + t * s_ * s_
    up_im = (lr - t) * c * s_ + li * s_ * s_
    lo_re = lr * c * c - li * c * s_ + t * s_ * s_
    lo_im = (t - lr) * c * s_ + li * s_ * s_
    out = np.where(upper, up_re + 1j * up_im, out)
    out = np.where(lower, lo_re + 1j * lo_im, out)
    out = np.where(apex, t + 0j, out)
    if out.ndim == 0:
        return complex(out)
    return out


def update_lambda(X, prob):
    lam_hat = received(X, prob) * prob.s.conj()
    return project_lambda(lam_hat, prob.Gamma[:, None], prob.phi)


def initial_point(prob, mode="matched-beam", rng=None):
    M, K, N = prob.dims
    if mode == "matched-beam":
        X = np.repeat(prob.a.conj()[:, None], N, axis=1)
    elif mode == "zero-forcing":
        target = prob.Gamma[:, None] * prob.s
        X = np.stack([np.linalg.pinv(prob.H[n]) @ target[:, n] for n in range(N)], axis=1)
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        X = crandn(rng, (M, N))
    norm2 = np.sum(np.abs(X) ** 2)
    if mode == "matched-beam" or norm2 > prob.P_T:
        X = X * math.sqrt(prob.P_T / norm2)
    return X, update_lambda(X, prob)


def _check_descent(prev, new, where):
    if new > prev + MONOTONE_SLACK * (1.0 + abs(prev)):
        raise InvariantViolation(
            f"objective increased at {where}: {prev!r} -> {new!r}"
        )


def bcd_solve(prob, options, varrho, X0, Lambda0, callback=None):
    """Cyclic exact minimisation over (y, X, Lambda) at fixed varrho.

    ``objective_trace[0]`` is the objective at the warm start (with its
    optimal y); each further entry follows one full sweep. ``callback``,
    if given, is called as ``callback(stage, X, Lambda, y, objective, varrho)``
    once with stage ``"start"`` and then after every block update.
    """
    X, Lam = X0, Lambda0
    y = update_y(X, prob)
    obj = objective_13a(X, Lam, y, varrho, prob)
    if callback:
        callback("start", X, Lam, y, obj, varrho)
    trace = [obj]
    it = 0
    eta = None
    for it in range(1, options.max_bcd + 1):
        prev = obj
        y = update_y(X, prob)
        obj_y = objective_13a(X, Lam, y, varrho, prob)
        _check_descent(prev, obj_y, f"y-update {it}")
        if callback:
            callback("y", X, Lam, y, obj_y, varrho)
        X, eta = update_x(y, Lam, varrho, prob, eta_tol=options.eta_tol,
                          return_eta=True, eta_hint=eta)
        obj_x = objective_13a(X, Lam, y, varrho, prob)
        _check_descent(obj_y, obj_x, f"X-update {it}")
        if callback:
            callback("x", X, Lam, y, obj_x, varrho)
        Lam = update_lambda(X, prob)
        obj = objective_13a(X, Lam, y, varrho, prob)
        _check_descent(obj_x, obj, f"lambda-update {it}")
        if callback:
            callback("lambda", X, Lam, y, obj, varrho)
        trace.append(obj)
        if abs(prev - obj) <= options.bcd_tol * max(abs(prev), 1e-300):
            break
    return BCDResult(X=X, Lambda=Lam, y=y, objective_trace=trace, iterations=it)


def _enforce_power(X, P_T):
    norm2 = float(np.sum(np.abs(X) ** 2))
    if norm2 > P_T:
        X = X * math.sqrt(P_T / norm2)
    return X


def penalty_solve(prob, options=None, callback=None, rng=None):
    """Quadratic-penalty outer loop around :func:`bcd_solve`.

    varrho starts at ``options.varrho0`` and is multiplied by
    ``options.c_varrho`` after each warm-started inner run until the
    equality residual drops to ``eps_p * min(Gamma)``. When
    ``options.normalize`` is set (default) the iterations run on the
    rescaled problem from :meth:`Problem.scaled` and are mapped back;
    ``callback`` (see :func:`bcd_solve`) then sees the rescaled iterates.
    """
    options = options or SolverOptions()
    if options.normalize:
        work, (xs, ls, ys, os_) = prob.scaled()
    else:
        work, (xs, ls, ys, os_) = prob, (1.0, 1.0, 1.0, 1.0)
    tol = options.eps_p * float(work.Gamma.min())
    X, Lam = initial_point(work, options.init_mode, rng)
    varrho = options.varrho0
    trace, history, inner = [], [], []
    feasible = False
    res = None
    for _ in range(options.max_outer):
        res = bcd_solve(work, options, varrho, X, Lam, callback=callback)
        X, Lam = res.X, res.Lambda
        trace.extend(res.objective_trace)
        inner.append(res.iterations)
        history.append(feasibility_residual(X, Lam, work))
        if history[-1] <= tol:
            feasible = True
            break
        varrho *= options.c_varrho
    else:
        varrho /= options.c_varrho

    X_out = _enforce_power(X * xs, prob.P_T)
    Lam_out = Lam * ls
    # post-hoc check in physical units
    residual = feasibility_residual(X_out, Lam_out, prob)
    feasible = feasible and residual <= options.eps_p * float(prob.Gamma.min()) * (1 + 1e-9)
    return PrecodeSolution(
        X=X_out,
        Lambda=Lam_out,
        y=res.y * ys,
        objective_trace=[v * os_ for v in trace],
        feasibility_residual=residual,
        rho_value=rho_objective(X_out, prob),
        final_varrho=varrho * os_ / ls**2,
        feasible=feasible,
        residual_history=[h * ls for h in history],
        inner_iterations=inner,
    )
