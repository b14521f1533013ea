"""Seeded Monte Carlo experiments: precoding schemes, ROC and distance sweeps.

Randomness is keyed per trial: every stream is a ``SeedSequence`` with
``spawn_key = (trial, purpose, ...)`` under the master seed, so results
do not depend on worker count or on which schemes are run, and every
scheme in a trial sees the same channels, symbols, noise and beta.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..detector import (
    calibrate_threshold,
    doa_search,
    noncentrality,
    np_threshold,
    predict_pd,
    si_covariance,
)
from ..signal_model import (
    attenuation,
    crandn,
    normalized_delay,
    sample_channels,
    sample_symbols,
    synthesize_radar_rx,
)
from ..solver import Problem, penalty_solve, rho_objective
from .config import SCHEMES, ConfigError
from .table import ExperimentTable

# stream purposes
CHANNEL, THETA, NOISE, INIT, H0_NOISE, BETA = range(6)

# Monte Carlo draws generated per block, bounds memory at reference scale
MC_CHUNK = 500


class ExperimentFailure(RuntimeError):
    """A trial failed; ``table`` holds the partial results and a marker row."""

    def __init__(self, message, table):
        super().__init__(message)
        self.table = table


def stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def worker_count(threads=None):
    env = os.environ.get("ISAC_SLP_THREADS")
    if env:
        return max(1, int(env))
    if threads:
        return max(1, int(threads))
    return os.cpu_count() or 1


def _map(fn, items, threads):
    n = worker_count(threads)
    if n == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass
class Instance:
    """One channel realisation with its geometry."""

    trial: int
    channels: object
    symbols: object
    theta: float
    d_t: float
    n_t: int
    beta: complex


def draw_instance(spec, trial, d_t=None):
    cfg = spec.config
    rng = stream(spec.seed, trial, CHANNEL)
    channels = sample_channels(cfg, rng)
    symbols = sample_symbols(cfg, rng)
    if spec.draw_theta:
        lo, hi = cfg.theta_prior
        theta = float(stream(spec.seed, trial, THETA).uniform(lo, hi))
    else:
        theta = cfg.theta_true
    d_t = cfg.d_t if d_t is None else d_t
    n_t = normalized_delay(d_t, cfg)
    beta = 0.0 if spec.h0 else attenuation(d_t, cfg, stream(spec.seed, trial, BETA))
    return Instance(trial, channels, symbols, theta, d_t, n_t, beta)


def design_sigma_si2(scheme, config):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    return config.sigma_si2 if scheme == "proposed" else 0.0


def evaluation_sigma_si2(scheme, config):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    return 0.0 if scheme == "wosi" else config.sigma_si2


class SchemeError(RuntimeError):
    """Solver failure annotated with the scheme that hit it."""


def run_scheme(scheme, instance, spec, designs=None):
    """Precode ``instance`` with one scheme.

    The design always targets the nominal direction ``config.theta_true``.
    ``rho_value`` of the returned solution is the sensing objective in the
    scheme's evaluation world, so WiSI reports its SI-blind design under
    the true SI. ``designs`` (a dict) memoises solves keyed by the design
    SI level; WoSI and WiSI share one.
    """
    cfg = spec.config
    s_design = design_sigma_si2(scheme, cfg)
    s_eval = evaluation_sigma_si2(scheme, cfg)
    prob = Problem.from_instance(cfg, instance.channels, instance.symbols,
                                 instance.n_t, sigma_si2=s_design)
    key = (s_design, instance.n_t)
    if designs is not None and key in designs:
        sol = designs[key]
    else:
        try:
            sol = penalty_solve(prob, spec.solver,
                                rng=stream(spec.seed, instance.trial, INIT))
        except (ArithmeticError, RuntimeError, ValueError) as exc:
            raise SchemeError(f"{scheme}: {exc}") from exc
        if designs is not None:
            designs[key] = sol
    if s_eval != s_design:
        sol = replace(sol, rho_value=rho_objective(sol.X, prob, sigma_si2=s_eval))
    return sol


def doa_grid(spec, theta):
    """Candidate angles: the true one, or the prior interval at ``grid_step``."""
    if spec.roc_grid == "point":
        return np.array([theta])
    return prior_grid(spec)


def prior_grid(spec):
    lo, hi = spec.config.theta_prior
    n = int(math.floor((hi - lo) / spec.grid_step + 1e-9)) + 1
    return lo + spec.grid_step * np.arange(n)


def _glrt_draws(spec, X, instance, s_eval, rng, h0, grid, refine):
    """(theta_hat, L_star) for ``mc_glrt_trials`` blocks, generated in chunks.

    The SI innovations are always drawn (and scaled afterwards) so every
    scheme consumes the same random numbers.
    """
    cfg = spec.config
    M = cfg.M
    cache = si_covariance(X, instance.n_t, s_eval,
                          cfg.sigma_s2, cfg.antenna_spacing_ratio)
    th, Ls = [], []
    left = spec.mc_glrt_trials
    while left > 0:
        b = min(MC_CHUNK, left)
        left -= b
        G = crandn(rng, (b, M, M))
        if spec.noiseless:
            H_SI = np.zeros_like(G)
            sig2, noise_rng = 0.0, None
        else:
            H_SI = math.sqrt(s_eval) * G
            sig2, noise_rng = cfg.sigma_s2, rng
        snap = synthesize_radar_rx(X, 0.0 if h0 else instance.beta, instance.theta,
                                   instance.n_t, H_SI, sig2, rng=noise_rng,
                                   spacing_ratio=cfg.antenna_spacing_ratio, h0=h0)
        t, L = doa_search(snap.Y_s, X, cache, grid, refine=refine)
        th.append(np.atleast_1d(t))
        Ls.append(np.atleast_1d(L))
    return np.concatenate(th), np.concatenate(Ls), cache


def _roc_trial(spec, trial):
    inst = draw_instance(spec, trial)
    designs = {}
    out = {}
    grid = doa_grid(spec, inst.theta)
    for scheme in spec.schemes:
        sol = run_scheme(scheme, inst, spec, designs)
        s_eval = evaluation_sigma_si2(scheme, spec.config)
        _, L, cache = _glrt_draws(spec, sol.X, inst, s_eval, stream(spec.seed, trial, NOISE),
                                  h0=spec.h0, grid=grid, refine=False)
        rho = float(noncentrality(sol.X, inst.theta, inst.beta, cache))
        if spec.calibrate:
            _, L0, _ = _glrt_draws(spec, sol.X, inst, s_eval,
                                   stream(spec.seed, trial, H0_NOISE), h0=True,
                                   grid=grid, refine=False)
            deltas = [calibrate_threshold(L0, p) for p in spec.pfa_grid]
        else:
            deltas = [np_threshold(p) for p in spec.pfa_grid]
        hits = [int(np.sum(L > d)) for d in deltas]
        theory = [predict_pd(rho, p) for p in spec.pfa_grid]
        out[scheme] = {"hits": hits, "theory": theory, "rho": rho}
    return out


def _run_trials(spec, fn, threads):
    """Run ``fn(spec, trial)`` over all trials; on failure keep the finished ones."""
    results = [None] * spec.trials
    error = None

    def safe(trial):
        try:
            return trial, fn(spec, trial), None
        except Exception as exc:  # noqa: BLE001 - reported through the marker row
            return trial, None, exc

    for trial, res, exc in _map(safe, range(spec.trials), threads):
        if exc is not None and error is None:
            error = (trial, exc)
        results[trial] = res
    return results, error


def _finish(table, results, error):
    if error is not None:
        trial, exc = error
        done = sum(r is not None for r in results)
        table.add("*", math.nan, "failed", trial, math.nan, done)
        raise ExperimentFailure(f"trial {trial} failed: {exc}", table) from exc
    return table


def _binomial_se(p, n):
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return float(np.mean(v)), se


def run_roc(spec, threads=None):
    """ROC rows per scheme and P_FA: ``pd_theory`` and ``pd_empirical``.

    Theory is the closed-form P_D at each realisation's noncentrality,
    averaged over realisations (stderr: sample sigma over sqrt(trials)).
    Empirical P_D pools all GLRT draws (binomial stderr).
    """
    results, error = _run_trials(spec, _roc_trial, threads)
    done = [r for r in results if r is not None]
    table = ExperimentTable()
    for scheme in spec.schemes:
        if not done:
            break
        n = len(done) * spec.mc_glrt_trials
        for i, p in enumerate(spec.pfa_grid):
            hits = sum(r[scheme]["hits"][i] for r in done)
            pd = hits / n
            table.add(scheme, p, "pd_empirical", pd, _binomial_se(pd, n), n)
            mean, se = _mean_se([r[scheme]["theory"][i] for r in done])
            table.add(scheme, p, "pd_theory", mean, se, len(done))
    return _finish(table, results, error)


def _sweep_trial(spec, trial):
    out = {}
    grid = prior_grid(spec)
    delta = np_threshold(spec.sweep_pfa)
    for j, d in enumerate(spec.distance_grid):
        inst = draw_instance(spec, trial, d_t=d)
        designs = {}
        for scheme in spec.schemes:
            sol = run_scheme(scheme, inst, spec, designs)
            s_eval = evaluation_sigma_si2(scheme, spec.config)
            th, L, cache = _glrt_draws(spec, sol.X, inst, s_eval,
                                       stream(spec.seed, trial, NOISE, j),
                                       h0=False, grid=grid, refine=spec.refine)
            err = np.degrees(th - inst.theta)
            rho = float(noncentrality(sol.X, inst.theta, inst.beta, cache))
            out[(scheme, j)] = {
                "mse": float(np.mean(err**2)),
                "hits": int(np.sum(L > delta)),
                "theory": predict_pd(rho, spec.sweep_pfa),
            }
    return out


def run_distance_sweep(spec, threads=None):
    """Per distance and scheme: DoA RMSE in degrees and P_D at ``sweep_pfa``.

    ``rmse_deg`` pools squared errors over all draws; its stderr is the
    sample sigma of the per-realisation RMSE over sqrt(trials).
    """
    spec.check_distances()
    results, error = _run_trials(spec, _sweep_trial, threads)
    done = [r for r in results if r is not None]
    table = ExperimentTable()
    for scheme in spec.schemes:
        if not done:
            break
        n = len(done) * spec.mc_glrt_trials
        for j, d in enumerate(spec.distance_grid):
            mses = [r[(scheme, j)]["mse"] for r in done]
            _, se = _mean_se(np.sqrt(mses))
            table.add(scheme, d, "rmse_deg", math.sqrt(float(np.mean(mses))), se, len(done))
            pd = sum(r[(scheme, j)]["hits"] for r in done) / n
            table.add(scheme, d, "pd_empirical", pd, _binomial_se(pd, n), n)
            mean, se = _mean_se([r[(scheme, j)]["theory"] for r in done])
            table.add(scheme, d, "pd_theory", mean, se, len(done))
    return _finish(table, results, error)


def _solve_trial(spec, trial):
    inst = draw_instance(spec, trial)
    designs = {}
    out = {}
    for scheme in spec.schemes:
        sol = run_scheme(scheme, inst, spec, designs)
        out[scheme] = sol
    return out


def run_solve(spec, threads=None):
    """Solver diagnostics per trial (``sweep_value`` is the trial index)."""
    results, error = _run_trials(spec, _solve_trial, threads)
    table = ExperimentTable()
    gmin = float(spec.config.Gamma.min())
    for trial, res in enumerate(results):
        if res is None:
            continue
        for scheme, sol in res.items():
            table.add(scheme, trial, "rho", sol.rho_value)
            table.add(scheme, trial, "residual_rel", sol.feasibility_residual / gmin)
            table.add(scheme, trial, "power_ratio",
                      float(np.sum(np.abs(sol.X) ** 2)) / spec.config.P_T)
            table.add(scheme, trial, "feasible", float(sol.feasible))
            table.add(scheme, trial, "outer_iterations", len(sol.inner_iterations))
    return _finish(table, results, error)


def run_experiment(spec, threads=None):
    from .validate import run_validate

    runners = {"roc": run_roc, "sweep": run_distance_sweep, "solve": run_solve,
               "validate": run_validate}
    if spec.experiment not in runners:
        raise ConfigError(f"unknown experiment {spec.experiment!r}", key="experiment")
    return runners[spec.experiment](spec, threads=threads)
