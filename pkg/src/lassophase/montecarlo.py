"""Finite-p experiments: instances, empirical transitions, MSE curves.

Instance generation is exactly reproducible from (seed, spec): independent
generator streams produce beta0, the Gaussian design factor G, and the noise,
and X = G Sigma^{1/2} / sqrt(n). The 1/sqrt(n) scaling makes X'X concentrate
around Sigma, which is the normalization the asymptotic risk, calibration,
and message-passing recursions are stated in: with it, E|y_i|^2 = sigma_w^2
+ E|beta0|^2_Sigma / (p delta) and the lambda in solve_lasso is directly the
lambda of the theory. The empirical phase transition runs noiseless basis
pursuit over a delta-grid and fits a binomial logistic model in delta by
Newton-scored MLE; complete separation falls back to a midpoint rule and is
flagged. extrapolate_limit is the sqrt(p)-weighted average used everywhere a
p -> infinity value is quoted.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import rng as _rng
from .covariance import CovarianceModel, CovarianceSpec, build
from .errors import ConvergenceError, FitError, ParameterError
from .lasso import basis_pursuit, solve_lasso
from .priors import MagnitudeLaw, SignalPrior
from .state_evolution import MCConfig, risk_curve

__all__ = [
    "Instance",
    "TransitionFit",
    "sample_signal",
    "sample_instance",
    "empirical_transition",
    "logistic_fit",
    "extrapolate_limit",
    "mse_experiment",
]

log = logging.getLogger(__name__)

DEFAULT_M = 100
SUCCESS_TOL = 1e-4


@dataclass
class Instance:
    X: np.ndarray
    y: np.ndarray
    beta0: np.ndarray
    sigma_w: float
    seed: object


@dataclass
class TransitionFit:
    """Logistic fit logit(pi) = a + b delta; delta_hat = -a/b.

    grid holds (delta_i, successes_i, trials_i). separated marks the midpoint
    fallback used when the MLE does not exist or is mis-oriented (b <= 0).
    """

    a: float
    b: float
    delta_hat: float
    grid: list
    separated: bool = False


def sample_signal(p: int, prior: SignalPrior, seed: int) -> np.ndarray:
    if p < 1:
        raise ParameterError(f"p must be positive, got {p}")
    g = _rng.stream(seed, _rng.SIGNAL_STREAM, p)
    return prior.sample(g, p)


def _seed_parts(seed) -> tuple:
    if isinstance(seed, (tuple, list)):
        return tuple(int(s) for s in seed)
    return (int(seed),)


def sample_instance(p: int, delta: float, prior: SignalPrior,
                    model: CovarianceModel, sigma_w: float, seed) -> Instance:
    """y = X beta0 + sigma_w w with X = G Sigma^{1/2} / sqrt(n), n = round(delta p).

    Rows of X have covariance Sigma/n, so the Gram X'X concentrates around
    Sigma. seed may be an int or a tuple of ints (experiments pass structured
    keys so every (grid point, replicate) owns an independent stream).
    """
    if model.dim != p:
        raise ParameterError(f"model dim {model.dim} != p = {p}")
    n = int(round(delta * p))
    if n < 1:
        raise ParameterError(f"round(delta p) = {n} must be positive")
    if sigma_w < 0:
        raise ParameterError(f"sigma_w must be nonnegative, got {sigma_w}")
    parts = _seed_parts(seed)
    beta0 = prior.sample(_rng.stream(*parts, _rng.INSTANCE_STREAM, 0), p)
    G = _rng.stream(*parts, _rng.INSTANCE_STREAM, 1).standard_normal((n, p))
    w = _rng.stream(*parts, _rng.INSTANCE_STREAM, 2).standard_normal(n)
    with threadpool_limits(limits=1):
        X = (G @ model.sqrt) / math.sqrt(n)
        y = X @ beta0 + sigma_w * w
    return Instance(X=X, y=y, beta0=beta0, sigma_w=float(sigma_w), seed=seed)


def logistic_fit(grid) -> tuple:
    """Binomial MLE of logit(pi_i) = a + b delta_i; returns (a, b).

    Newton-Raphson on the score, tolerance 1e-10 on its norm, at most 100
    iterations. Raises FitError (trace attached) on breakdown: singular
    Hessian or runaway coefficients. Completely separated grids either
    trip that guard or saturate to an extreme slope whose crossing -a/b is
    the midpoint of the separation gap; callers treat both as degenerate.
    """
    d = np.array([row[0] for row in grid], dtype=float)
    s = np.array([row[1] for row in grid], dtype=float)
    m = np.array([row[2] for row in grid], dtype=float)
    if len(d) < 2:
        raise ParameterError("need at least 2 grid points")
    if np.any(s < 0) or np.any(s > m) or np.any(m <= 0):
        raise ParameterError("successes must lie in [0, trials] with trials > 0")
    theta = np.zeros(2)
    trace = []
    for it in range(100):
        eta = theta[0] + theta[1] * d
        # clip to keep pi away from exact 0/1 under separation-driven blowup
        eta = np.clip(eta, -500.0, 500.0)
        pi = 1.0 / (1.0 + np.exp(-eta))
        score = np.array([np.sum(s - m * pi), np.sum((s - m * pi) * d)])
        trace.append((it, theta.copy(), float(np.linalg.norm(score))))
        if np.linalg.norm(score) <= 1e-10:
            return float(theta[0]), float(theta[1])
        wgt = m * pi * (1.0 - pi)
        h00 = np.sum(wgt)
        h01 = np.sum(wgt * d)
        h11 = np.sum(wgt * d * d)
        det = h00 * h11 - h01 * h01
        if not np.isfinite(det) or abs(det) < 1e-300:
            raise FitError("singular Hessian in logistic fit", trace=trace)
        step = np.array([
            (h11 * score[0] - h01 * score[1]) / det,
            (h00 * score[1] - h01 * score[0]) / det,
        ])
        theta = theta + step
        if not np.all(np.isfinite(theta)) or abs(theta[1]) > 1e4 or abs(theta[0]) > 1e6:
            raise FitError("diverging coefficients (separated data?)", trace=trace)
    raise FitError("logistic fit did not converge in 100 iterations", trace=trace)


def _midpoint_fallback(grid) -> float:
    deltas = [row[0] for row in grid]
    all_fail = [row[0] for row in grid if row[1] == 0]
    all_succ = [row[0] for row in grid if row[1] == row[2]]
    lo = max(all_fail) if all_fail else min(deltas)
    hi = min(all_succ) if all_succ else max(deltas)
    return 0.5 * (lo + hi)


def empirical_transition(epsilon: float, d_epsilon: float,
                         cov_spec: CovarianceSpec, p: int, delta_grid,
                         m: int = DEFAULT_M, seed: int = 0,
                         success_tol: float = SUCCESS_TOL,
                         magnitude_law: MagnitudeLaw | None = None) -> TransitionFit:
    """Noiseless recovery experiment over delta_grid, m instances per point.

    Success means ||bp(X, y) - beta0|| / ||beta0|| <= success_tol. The fit is
    the binomial logistic MLE; with fewer than two mixed-outcome grid points
    (or a non-positive fitted slope) the midpoint fallback applies, flagged
    via `separated`.
    """
    if m < 1:
        raise ParameterError(f"m must be positive, got {m}")
    law = magnitude_law if magnitude_law is not None else MagnitudeLaw()
    prior = SignalPrior(epsilon, d_epsilon, law)
    model = build(cov_spec.with_dim(p))
    grid = []
    for di, delta in enumerate(delta_grid):
        succ = 0
        for rep in range(m):
            inst = sample_instance(p, float(delta), prior, model, 0.0,
                                   seed=(seed, _rng.TRANSITION_STREAM, di, rep))
            nb0 = float(np.linalg.norm(inst.beta0))
            if nb0 == 0.0:
                succ += 1
                continue
            res = basis_pursuit(inst.X, inst.y)
            err = float(np.linalg.norm(res.beta - inst.beta0)) / nb0
            if err <= success_tol:
                succ += 1
        grid.append((float(delta), int(succ), int(m)))
        log.info("delta=%.4f: %d/%d recovered", delta, succ, m)

    mixed = {row[0] for row in grid if 0 < row[1] < row[2]}
    if len(mixed) < 2:
        mid = _midpoint_fallback(grid)
        return TransitionFit(a=float("nan"), b=float("nan"), delta_hat=mid,
                             grid=grid, separated=True)
    try:
        a, b = logistic_fit(grid)
    except FitError:
        mid = _midpoint_fallback(grid)
        return TransitionFit(a=float("nan"), b=float("nan"), delta_hat=mid,
                             grid=grid, separated=True)
    if b <= 0:
        mid = _midpoint_fallback(grid)
        return TransitionFit(a=a, b=b, delta_hat=mid, grid=grid, separated=True)
    return TransitionFit(a=a, b=b, delta_hat=-a / b, grid=grid, separated=False)


def extrapolate_limit(samples) -> float:
    """sqrt(p)-weighted average of (p, value) pairs."""
    samples = list(samples)
    if not samples:
        raise ParameterError("samples must be nonempty")
    num = 0.0
    den = 0.0
    for p, v in samples:
        w = math.sqrt(p)
        num += w * v
        den += w
    return num / den


def mse_experiment(lams, epsilon: float, d_epsilon: float,
                   cov_spec: CovarianceSpec, delta: float, sigma_w: float,
                   p: int, m: int, seed: int = 0,
                   mc: MCConfig | None = None,
                   magnitude_law: MagnitudeLaw | None = None) -> list:
    """Empirical vs predicted ||betahat(lambda) - beta0||^2 / p over a lambda grid.

    Per lambda: m fresh instances, each solved by coordinate descent; rows
    carry (lambda, alpha, theory_mse, theory_stderr, emp_mean, emp_stderr,
    n_ok). Solver failures drop the replicate and reduce n_ok.
    """
    law = magnitude_law if magnitude_law is not None else MagnitudeLaw()
    prior = SignalPrior(epsilon, d_epsilon, law)
    mc = mc if mc is not None else MCConfig()
    theory = risk_curve(list(lams), prior, cov_spec, delta, sigma_w ** 2, mc)
    model = build(cov_spec.with_dim(p))
    rows = []
    for li, (lam, trow) in enumerate(zip(lams, theory)):
        vals = []
        for rep in range(m):
            inst = sample_instance(p, delta, prior, model, sigma_w,
                                   seed=(seed, _rng.MSE_STREAM, li, rep))
            try:
                sol = solve_lasso(inst.X, inst.y, float(lam))
            except ConvergenceError:
                log.warning("lasso failed at lambda=%.4g rep=%d; dropped", lam, rep)
                continue
            vals.append(float(np.sum((sol.beta - inst.beta0) ** 2) / p))
        n_ok = len(vals)
        emp_mean = float(np.mean(vals)) if n_ok else float("nan")
        emp_stderr = float(np.std(vals, ddof=1) / math.sqrt(n_ok)) if n_ok > 1 else float("nan")
        rows.append({
            "lambda": float(lam),
            "alpha": trow["alpha"],
            "theory_mse": trow["mse"],
            "theory_stderr": trow["stderr"],
            "emp_mean": emp_mean,
            "emp_stderr": emp_stderr,
            "n_ok": n_ok,
        })
        log.info("lambda=%.4g: theory %.5g, empirical %.5g (n_ok=%d)",
                 lam, trow["mse"], emp_mean, n_ok)
    return rows
