"""Phase boundary delta_c(epsilon, d_epsilon) = inf_alpha M(epsilon, alpha).

M is estimated per replicate by the reduced construction: draw the sign
pattern of beta0 and z ~ N(0, I); with B the signal support, u = Sigma^{1/2}z,
and W = Sigma_{CB} Sigma_{BB}^{-1}, solve the lasso with penalty alpha on the
Schur-complement Gram system (S, u_C - W u_B + alpha W s_B) to get the active
complement set Bbar and its signs; then with A = B u Bbar and d_A = u_A -
alpha s_A (signs from beta0 on B, from the reduced solution on Bbar) the
replicate value is d_A' Sigma_{AA}^{-1} d_A / p. Only signs of beta0 enter,
matching the scale-free boundary. Everything is sampled once per (p,
replicate) and shared across the whole alpha search (common random numbers),
so the minimization sees a smooth surface.

Identity covariance admits closed forms (identity_m, identity_phase_curve,
identity_delta_c) used as oracles and for the undersampling-sparsity curve.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr
from threadpoolctl import threadpool_limits

from . import _kernels
from . import rng as _rng
from .covariance import CovarianceModel, CovarianceSpec, build
from .errors import ParameterError, PhaseEstimateError
from .priors import MagnitudeLaw, SignalPrior

__all__ = [
    "PhasePoint",
    "SignalPrior",
    "m_estimate",
    "delta_c",
    "identity_m",
    "identity_phase_curve",
    "identity_delta_c",
]

log = logging.getLogger(__name__)

PROX_TOL = 1e-10
COARSE_GRID_SIZE = 40
COARSE_ALPHA_LO = 0.01
COARSE_ALPHA_HI = 10.0
GOLDEN_XTOL = 1e-3
MAX_FAIL_FRACTION = 0.01

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass
class PhasePoint:
    epsilon: float
    d_epsilon: float
    alpha_star: float
    delta_c: float
    per_p: list
    stderr: float
    fail_fraction: float = 0.0
    delta_c_unclipped: float = float("nan")


def identity_m(epsilon, alpha):
    """Closed-form M(epsilon, alpha) for identity covariance."""
    a = np.asarray(alpha, dtype=float)
    one_plus = 1.0 + a * a
    phi = _INV_SQRT_2PI * np.exp(-0.5 * a * a)
    tail = ndtr(-a)
    val = epsilon * one_plus + 2.0 * (1.0 - epsilon) * (one_plus * tail - a * phi)
    return val if val.ndim else float(val)


def identity_phase_curve(alpha):
    """Parametric (delta, epsilon) of the identity-covariance boundary."""
    a = np.asarray(alpha, dtype=float)
    if np.any(a < 0):
        raise ParameterError("alpha must be nonnegative")
    phi = _INV_SQRT_2PI * np.exp(-0.5 * a * a)
    tail = ndtr(-a)
    denom = a + 2.0 * phi - 2.0 * a * tail
    delta = 2.0 * phi / denom
    eps = (2.0 * phi - 2.0 * a * tail) / denom
    if a.ndim:
        return delta, eps
    return float(delta), float(eps)


def identity_delta_c(epsilon: float) -> float:
    """Exact boundary at sparsity epsilon via the parametric curve."""
    if not (0.0 < epsilon <= 1.0):
        raise ParameterError(f"epsilon must lie in (0, 1], got {epsilon}")
    if epsilon == 1.0:
        return 1.0

    def eps_at(a):
        return identity_phase_curve(a)[1] - epsilon

    a_star = brentq(eps_at, 1e-8, 40.0, xtol=1e-12, rtol=8.881784197001252e-16)
    return identity_phase_curve(a_star)[0]


class _Draws:
    """Per-p replicate draws shared across every alpha query."""

    def __init__(self, model: CovarianceModel, prior: SignalPrior,
                 replicates: int, seed: int):
        p = model.dim
        R = replicates
        self.p = p
        self.R = R
        self.Sig = np.ascontiguousarray(model.matrix)
        Z = np.empty((R, p))
        self.NB = np.empty(R, dtype=np.int64)
        self.IDX = np.empty((R, p), dtype=np.int64)
        self.SGN = np.zeros((R, p))
        for r in range(R):
            g = _rng.stream(seed, _rng.PHASE_STREAM, p, r)
            beta = prior.sample(g, p)
            Z[r] = g.standard_normal(p)
            supp = np.flatnonzero(beta)
            nb = supp.size
            self.NB[r] = nb
            mask = np.ones(p, dtype=bool)
            mask[supp] = False
            self.IDX[r, :nb] = supp
            self.IDX[r, nb:] = np.flatnonzero(mask)
            self.SGN[r, :nb] = np.sign(beta[supp])
        with threadpool_limits(limits=1):
            self.U = np.ascontiguousarray(Z @ model.sqrt)

    def eval(self, alphas: np.ndarray):
        """(means, vars_of_mean, n_ok, n_fail) per alpha; alphas ascending."""
        R = self.R
        nA = alphas.shape[0]
        out_m = np.zeros((R, nA))
        out_fail = np.zeros((R, nA), dtype=np.uint8)
        out_nbar = np.zeros((R, nA), dtype=np.int64)
        _kernels.m_eval(self.Sig, self.U, self.NB, self.IDX, self.SGN,
                        np.ascontiguousarray(alphas, dtype=float),
                        PROX_TOL, 50 * self.p, out_m, out_fail, out_nbar)
        means = np.empty(nA)
        vmean = np.empty(nA)
        n_ok = np.empty(nA, dtype=np.int64)
        for ai in range(nA):
            ok = out_fail[:, ai] == 0
            k = int(ok.sum())
            n_ok[ai] = k
            if k == 0:
                means[ai] = np.nan
                vmean[ai] = np.nan
                continue
            vals = out_m[ok, ai]
            means[ai] = float(vals.mean())
            vmean[ai] = float(vals.var(ddof=1) / k) if k > 1 else 0.0
        return means, vmean, n_ok, int(out_fail.sum()), out_nbar


def m_estimate(epsilon: float, d_epsilon: float, alpha: float,
               model: CovarianceModel, replicates: int, seed: int,
               magnitude_law: MagnitudeLaw | None = None) -> tuple:
    """(M_hat, stderr) at a single alpha for the covariance in `model`.

    Replicates whose reduced solve or Schur factorization fails are dropped
    and counted; a fail fraction above 1% aborts.
    """
    if alpha < 0:
        raise ParameterError(f"alpha must be nonnegative, got {alpha}")
    if not (0.0 < epsilon <= 1.0):
        raise ParameterError(f"epsilon must lie in (0, 1], got {epsilon}")
    if replicates < 2:
        raise ParameterError("need at least 2 replicates")
    law = magnitude_law if magnitude_law is not None else MagnitudeLaw()
    prior = SignalPrior(epsilon, d_epsilon, law)
    draws = _Draws(model, prior, replicates, seed)
    means, vmean, n_ok, n_fail, _ = draws.eval(np.array([float(alpha)]))
    if n_fail > MAX_FAIL_FRACTION * replicates:
        raise PhaseEstimateError(
            f"{n_fail}/{replicates} replicates failed at alpha={alpha:g}"
        )
    return float(means[0]), float(math.sqrt(vmean[0]))


def _combine(per_p_means, per_p_vars, p_grid):
    w = np.sqrt(np.asarray(p_grid, dtype=float))
    den = w.sum()
    val = float(np.dot(w, per_p_means) / den)
    var = float(np.dot(w * w, per_p_vars) / (den * den))
    return val, math.sqrt(var)


class _Surface:
    """Extrapolated M(epsilon, alpha) over mc.p_grid with failure accounting."""

    def __init__(self, cov_spec, prior, mc):
        self.p_grid = list(mc.p_grid)
        self.blocks = [
            _Draws(build(cov_spec.with_dim(int(p))), prior, mc.replicates, mc.base_seed)
            for p in self.p_grid
        ]
        self.n_fail = 0
        self.n_evals = 0

    def eval_grid(self, alphas: np.ndarray):
        """Extrapolated means and stderrs for an ascending alpha grid."""
        nA = alphas.shape[0]
        per_means = np.empty((len(self.blocks), nA))
        per_vars = np.empty((len(self.blocks), nA))
        for bi, blk in enumerate(self.blocks):
            means, vmean, n_ok, n_fail, _ = blk.eval(alphas)
            per_means[bi] = means
            per_vars[bi] = vmean
            self.n_fail += n_fail
            self.n_evals += blk.R * nA
        vals = np.empty(nA)
        errs = np.empty(nA)
        for ai in range(nA):
            vals[ai], errs[ai] = _combine(per_means[:, ai], per_vars[:, ai], self.p_grid)
        return vals, errs, per_means

    def eval_one(self, alpha: float) -> float:
        vals, _, _ = self.eval_grid(np.array([float(alpha)]))
        return float(vals[0])

    @property
    def fail_fraction(self) -> float:
        return self.n_fail / max(self.n_evals, 1)


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(f, lo: float, hi: float, xtol: float) -> float:
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc = f(c)
    fd = f(d)
    while hi - lo > xtol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLDEN * (hi - lo)
            fd = f(d)
    return 0.5 * (lo + hi)


def delta_c(epsilon: float, d_epsilon: float, cov_spec: CovarianceSpec,
            mc, magnitude_law: MagnitudeLaw | None = None) -> PhasePoint:
    """Minimize the extrapolated M(epsilon, .) over alpha.

    Coarse pass on 40 log-spaced alphas in [0.01, 10] (one retry with an
    extended decade on a boundary hit), then golden-section refinement to
    width 1e-3 between the coarse neighbors of the minimum. delta_c is
    clipped to (0, 1]; the raw minimum is kept in delta_c_unclipped.
    """
    if not (0.0 < epsilon < 1.0):
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    law = magnitude_law if magnitude_law is not None else MagnitudeLaw()
    prior = SignalPrior(epsilon, d_epsilon, law)
    surface = _Surface(cov_spec, prior, mc)

    lo, hi = COARSE_ALPHA_LO, COARSE_ALPHA_HI
    alphas = np.logspace(math.log10(lo), math.log10(hi), COARSE_GRID_SIZE)
    vals, _, _ = surface.eval_grid(alphas)
    i = int(np.nanargmin(vals))
    if i == 0 or i == len(alphas) - 1:
        if i == 0:
            lo = lo / 10.0
        else:
            hi = hi * 10.0
        log.warning(
            "delta_c minimizer at alpha-grid edge (alpha=%.4g); extending to [%g, %g]",
            alphas[i], lo, hi,
        )
        alphas = np.logspace(math.log10(lo), math.log10(hi), COARSE_GRID_SIZE + 8)
        vals, _, _ = surface.eval_grid(alphas)
        i = int(np.nanargmin(vals))
    bl = alphas[max(i - 1, 0)]
    bh = alphas[min(i + 1, len(alphas) - 1)]
    alpha_star = _golden_min(surface.eval_one, float(bl), float(bh), GOLDEN_XTOL)

    a_arr = np.array([alpha_star])
    final_vals, final_errs, per_means = surface.eval_grid(a_arr)
    m_star = float(final_vals[0])
    stderr = float(final_errs[0])
    if surface.fail_fraction > MAX_FAIL_FRACTION:
        raise PhaseEstimateError(
            f"fail fraction {surface.fail_fraction:.3%} exceeds {MAX_FAIL_FRACTION:.0%} "
            f"at (epsilon={epsilon}, d_epsilon={d_epsilon})"
        )
    return PhasePoint(
        epsilon=float(epsilon),
        d_epsilon=float(d_epsilon),
        alpha_star=float(alpha_star),
        delta_c=float(min(max(m_star, 1e-12), 1.0)),
        per_p=[(p, float(per_means[bi, 0])) for bi, p in enumerate(surface.p_grid)],
        stderr=stderr,
        fail_fraction=float(surface.fail_fraction),
        delta_c_unclipped=m_star,
    )
