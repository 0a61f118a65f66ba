"""State evolution: psi, fixed points, alpha_min, calibration, lasso risk.

The asymptotic quantities are expectations over (beta0, z) of functionals of
eta_theta(beta0 + tau Sigma^{-1/2} z). They are estimated by Monte Carlo at
each p in mc.p_grid and combined by the sqrt(p)-weighted average (the limit
extrapolation used throughout the experiments), with these variance-control
rules:

- one draw set per (p, replicate), reused for every (tau, theta, alpha)
  query against the same configuration (common random numbers), so root
  finders and the tau recursion see smooth deterministic functions;
- per-replicate prox solves warm-start from the previous query;
- for exact-identity covariance and point-mass magnitudes the whole machinery
  collapses to one-dimensional Gaussian integrals evaluated in closed form
  (mc.use_quadrature=None auto-enables this; True forces it, raising when it
  does not apply; False forces sampling).

delta enters the formulas only as a scalar; no design matrices are sampled
here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from threadpoolctl import threadpool_limits

from . import _kernels
from . import rng as _rng
from .covariance import CovarianceModel, CovarianceSpec, build
from .errors import (
    CalibrationError,
    ConvergenceError,
    FixedPointError,
    ParameterError,
)
from .priors import SignalPrior, expected_weighted_norm_sq

__all__ = [
    "MCConfig",
    "SEPoint",
    "psi",
    "fixed_point_tau",
    "alpha_min",
    "calibrate_lambda",
    "invert_calibration",
    "lasso_risk",
    "risk_curve",
    "tau_sequence",
]

PROX_TOL = 1e-10
FIXED_POINT_RTOL = 1e-9
FIXED_POINT_MAXITER = 1000


@dataclass(frozen=True)
class MCConfig:
    p_grid: tuple = (100, 200, 400)
    replicates: int = 200
    base_seed: int = 0
    use_quadrature: bool | None = None

    def __post_init__(self):
        if len(self.p_grid) == 0:
            raise ParameterError("mc.p_grid must be nonempty")
        if any(p <= 0 for p in self.p_grid):
            raise ParameterError(f"mc.p_grid entries must be positive, got {self.p_grid}")
        if list(self.p_grid) != sorted(set(self.p_grid)):
            raise ParameterError(f"mc.p_grid must be strictly increasing, got {self.p_grid}")
        if self.replicates < 1:
            raise ParameterError(f"mc.replicates must be >= 1, got {self.replicates}")
        if self.base_seed < 0:
            raise ParameterError(f"mc.base_seed must be >= 0, got {self.base_seed}")

    def to_dict(self) -> dict:
        return {
            "p_grid": list(self.p_grid),
            "replicates": self.replicates,
            "base_seed": self.base_seed,
            "use_quadrature": self.use_quadrature,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MCConfig":
        kwargs = dict(d)
        if "p_grid" in kwargs:
            kwargs["p_grid"] = tuple(int(p) for p in kwargs["p_grid"])
        return cls(**kwargs)


@dataclass
class SEPoint:
    """One point of the calibration: alpha paired with its fixed point.

    lam is the lasso penalty lambda(alpha); nan when not yet calibrated.
    mc_stderr is the Monte-Carlo standard error of tau_star_sq (0 under
    quadrature). psi_slope is the finite-difference d psi / d tau^2 at the
    fixed point, a contraction diagnostic.
    """

    alpha: float
    tau_star_sq: float
    theta_star: float
    lam: float
    delta: float
    sigma_w_sq: float
    mc_stderr: float
    psi_slope: float = float("nan")


def _as_spec(cov) -> CovarianceSpec:
    if isinstance(cov, CovarianceSpec):
        return cov
    if isinstance(cov, CovarianceModel):
        if cov.spec is not None:
            return cov.spec
        return CovarianceSpec(family="explicit", dim=cov.dim, matrix=cov.matrix)
    raise ParameterError(f"expected CovarianceSpec or CovarianceModel, got {type(cov)!r}")


def _check_delta(delta: float):
    if not (0.0 < delta <= 1.0):
        raise ParameterError(f"delta must lie in (0, 1], got {delta}")


# ----------------------------------------------------------------------
# scalar Gaussian pieces (quadrature path and oracles)

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _phi(x: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def _Phi(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / _SQRT2))


def soft_threshold_second_moment(mu: float, tau: float, theta: float) -> float:
    """E (eta_theta(mu + tau Z) - mu)^2 for scalar standard normal Z."""
    if tau <= 0.0:
        raise ParameterError("tau must be positive")
    a = (theta - mu) / tau
    b = (-theta - mu) / tau
    up = tau * tau * ((1.0 - _Phi(a)) + a * _phi(a)) - 2.0 * tau * theta * _phi(a) \
        + theta * theta * (1.0 - _Phi(a))
    lo = tau * tau * (_Phi(b) - b * _phi(b)) - 2.0 * tau * theta * _phi(b) \
        + theta * theta * _Phi(b)
    mid = mu * mu * (_Phi(a) - _Phi(b))
    return up + lo + mid


def soft_threshold_support_prob(mu: float, tau: float, theta: float) -> float:
    """P(|mu + tau Z| > theta)."""
    if tau <= 0.0:
        raise ParameterError("tau must be positive")
    a = (theta - mu) / tau
    b = (-theta - mu) / tau
    return (1.0 - _Phi(a)) + _Phi(b)


def f_identity(alpha: float, delta: float) -> float:
    """Closed-form f(alpha) for identity covariance."""
    return 2.0 * ((1.0 + alpha * alpha) * _Phi(-alpha) - alpha * _phi(alpha)) / delta


@dataclass
class _EvalStats:
    psi: float
    psi_stderr: float
    risk: float
    risk_stderr: float
    supp: float
    supp_stderr: float


def _combine(triples) -> tuple:
    # sqrt(p)-weighted average of per-p means; matching stderr
    num = 0.0
    den = 0.0
    var = 0.0
    for p, mean, v in triples:
        w = math.sqrt(p)
        num += w * mean
        den += w
        var += w * w * v
    return num / den, math.sqrt(var) / den


class _QuadEngine:
    """Exact scalar-integral engine for Sigma = I with point-mass magnitudes."""

    is_quadrature = True

    def __init__(self, prior: SignalPrior | None, delta: float, sigma_w_sq: float):
        self.prior = prior
        self.delta = float(delta)
        self.sigma_w_sq = float(sigma_w_sq)
        if prior is not None and prior.magnitude_law.kind != "point":
            raise ParameterError("quadrature path needs a point-mass magnitude law")

    def tau0_sq(self) -> float:
        eb2 = self.prior.second_moment_entry if self.prior is not None else 0.0
        return self.sigma_w_sq + eb2 / self.delta

    def eval(self, tau_sq: float, theta: float) -> _EvalStats:
        tau = math.sqrt(tau_sq)
        if self.prior is None:
            eps = 0.0
            m = 1.0
        else:
            eps = self.prior.epsilon
            m = self.prior.magnitude_law.value
        if theta <= 0.0:
            # prox is the identity: eta - beta0 = tau z
            r0 = tau_sq
            s0 = 1.0
            risk = r0
            supp = s0 / self.delta
        else:
            r_zero = soft_threshold_second_moment(0.0, tau, theta)
            s_zero = soft_threshold_support_prob(0.0, tau, theta)
            if eps > 0.0:
                r_sig = soft_threshold_second_moment(m, tau, theta)
                s_sig = soft_threshold_support_prob(m, tau, theta)
            else:
                r_sig = 0.0
                s_sig = 0.0
            risk = (1.0 - eps) * r_zero + eps * r_sig
            supp = ((1.0 - eps) * s_zero + eps * s_sig) / self.delta
        return _EvalStats(
            psi=self.sigma_w_sq + risk / self.delta,
            psi_stderr=0.0,
            risk=risk,
            risk_stderr=0.0,
            supp=supp,
            supp_stderr=0.0,
        )

    def f_value(self, alpha: float) -> tuple:
        return f_identity(alpha, self.delta), 0.0


class _MCEngine:
    """Sampled engine over mc.p_grid with persistent draws and warm starts."""

    is_quadrature = False

    def __init__(self, cov_spec: CovarianceSpec, prior: SignalPrior | None,
                 delta: float, sigma_w_sq: float, mc: MCConfig, stream_id: int):
        self.delta = float(delta)
        self.sigma_w_sq = float(sigma_w_sq)
        self.mc = mc
        self.prior = prior
        if cov_spec.family == "explicit":
            dim = cov_spec.dim or (np.asarray(cov_spec.matrix).shape[0]
                                   if cov_spec.matrix is not None else 0)
            if tuple(mc.p_grid) != (dim,):
                raise ParameterError(
                    f"explicit covariance fixes p; set mc.p_grid to ({dim},), got {mc.p_grid}"
                )
        self.blocks = []
        R = mc.replicates
        for p in mc.p_grid:
            model = build(cov_spec.with_dim(int(p)))
            B0 = np.zeros((R, p))
            Z = np.empty((R, p))
            for r in range(R):
                g = _rng.stream(mc.base_seed, stream_id, p, r)
                if prior is not None:
                    B0[r] = prior.sample(g, p)
                Z[r] = g.standard_normal(p)
            with threadpool_limits(limits=1):
                A0 = B0 @ model.matrix if prior is not None else np.zeros((R, p))
                A1 = Z @ model.sqrt
                A2 = Z @ model.inv_sqrt
            self.blocks.append({
                "p": int(p),
                "model": model,
                "G": np.ascontiguousarray(model.matrix),
                "diag": np.ascontiguousarray(np.diagonal(model.matrix)),
                "B0": B0,
                "A0": np.ascontiguousarray(A0),
                "A1": np.ascontiguousarray(A1),
                "A2": np.ascontiguousarray(A2),
                "Beta": np.zeros((R, p)),
                "Grad": np.zeros((R, p)),
                "se": np.zeros(R),
                "risk": np.zeros(R),
                "supp": np.zeros(R, dtype=np.int64),
                "fail": np.zeros(R, dtype=np.uint8),
            })

    def tau0_sq(self) -> float:
        if self.prior is None:
            return self.sigma_w_sq
        triples = []
        for blk in self.blocks:
            p = blk["p"]
            v = expected_weighted_norm_sq(self.prior, blk["model"].matrix) / (p * self.delta)
            triples.append((p, v, 0.0))
        val, _ = _combine(triples)
        return self.sigma_w_sq + val

    def eval(self, tau_sq: float, theta: float) -> _EvalStats:
        tau = math.sqrt(tau_sq)
        R = self.mc.replicates
        psi_t, risk_t, supp_t = [], [], []
        for blk in self.blocks:
            p = blk["p"]
            _kernels.se_eval(
                blk["G"], blk["diag"], blk["B0"], blk["A0"], blk["A1"], blk["A2"],
                float(tau), float(theta), blk["Beta"], blk["Grad"],
                PROX_TOL, 50 * p, blk["se"], blk["risk"], blk["supp"], blk["fail"],
            )
            if blk["fail"].any():
                bad = int(blk["fail"].sum())
                raise ConvergenceError(
                    f"prox failed to converge in {bad}/{R} replicates at p={p}, "
                    f"tau_sq={tau_sq:g}, theta={theta:g}"
                )
            se_vals = blk["se"] / (p * self.delta)
            risk_vals = blk["risk"] / p
            supp_vals = blk["supp"] / (p * self.delta)
            psi_t.append((p, float(se_vals.mean()), float(se_vals.var(ddof=1) / R)))
            risk_t.append((p, float(risk_vals.mean()), float(risk_vals.var(ddof=1) / R)))
            supp_t.append((p, float(supp_vals.mean()), float(supp_vals.var(ddof=1) / R)))
        pv, ps = _combine(psi_t)
        rv, rs = _combine(risk_t)
        sv, ss = _combine(supp_t)
        return _EvalStats(self.sigma_w_sq + pv, ps, rv, rs, sv, ss)

    def f_value(self, alpha: float) -> tuple:
        # zero-prior engine evaluated at tau = 1, theta = alpha
        stats = self.eval(1.0, float(alpha))
        return stats.psi - self.sigma_w_sq, stats.psi_stderr


def _quadrature_applicable(cov_spec: CovarianceSpec, prior: SignalPrior | None) -> bool:
    if cov_spec.family != "identity":
        if cov_spec.family == "explicit" and cov_spec.matrix is not None:
            m = np.asarray(cov_spec.matrix)
            if not np.array_equal(m, np.eye(m.shape[0])):
                return False
        else:
            return False
    if prior is not None and prior.magnitude_law.kind != "point":
        return False
    return True


# engines are cached so repeated public calls share draws and warm starts
_ENGINES: dict = {}
_ENGINE_CACHE_LIMIT = 32


def _cov_key(spec: CovarianceSpec):
    if spec.family == "explicit":
        mid = spec.matrix_path if spec.matrix_path is not None else id(spec.matrix)
        return ("explicit", spec.dim, mid)
    return (spec.family, spec.rho, tuple(spec.spikes), spec.noise_var, spec.v_seed)


def _prior_key(prior: SignalPrior | None):
    if prior is None:
        return None
    return (prior.epsilon, prior.d_epsilon, prior.magnitude_law.kind, prior.magnitude_law.value)


def _engine_for(cov, prior, delta, sigma_w_sq, mc: MCConfig, stream_id: int = _rng.SE_STREAM):
    spec = _as_spec(cov)
    quad_ok = _quadrature_applicable(spec, prior)
    use_quad = mc.use_quadrature
    if use_quad is None:
        use_quad = quad_ok
    elif use_quad and not quad_ok:
        raise ParameterError(
            "use_quadrature=True needs identity covariance and a point-mass magnitude law"
        )
    key = (
        _cov_key(spec), _prior_key(prior), float(delta), float(sigma_w_sq),
        tuple(mc.p_grid), mc.replicates, mc.base_seed, bool(use_quad), stream_id,
    )
    eng = _ENGINES.get(key)
    if eng is None:
        if len(_ENGINES) >= _ENGINE_CACHE_LIMIT:
            _ENGINES.clear()
        if use_quad:
            eng = _QuadEngine(prior, delta, sigma_w_sq)
        else:
            eng = _MCEngine(spec, prior, delta, sigma_w_sq, mc, stream_id)
        # lazy per-engine caches used by the calibration scan
        eng._fp_cache = {}
        eng._lam_cache = {}
        eng._alpha_min = None
        _ENGINES[key] = eng
    return eng


# ----------------------------------------------------------------------
# public operations


def psi(tau_sq: float, theta: float, prior: SignalPrior, cov, delta: float,
        sigma_w_sq: float, mc: MCConfig) -> tuple:
    """(value, stderr) of sigma_w^2 + E||eta_theta(beta0 + tau S^{-1/2}z) - beta0||^2_S / (p delta).

    tau_sq = 0 short-circuits to sigma_w^2 exactly: the recursion only visits
    tau = 0 together with theta = alpha tau = 0, where the prox is the
    identity and the expectation vanishes.
    """
    if tau_sq < 0 or theta < 0:
        raise ParameterError("tau_sq and theta must be nonnegative")
    _check_delta(delta)
    if tau_sq == 0.0:
        return float(sigma_w_sq), 0.0
    eng = _engine_for(cov, prior, delta, sigma_w_sq, mc)
    stats = eng.eval(float(tau_sq), float(theta))
    return stats.psi, stats.psi_stderr


def _run_recursion(eng, alpha: float, tol: float = FIXED_POINT_RTOL,
                   maxiter: int = FIXED_POINT_MAXITER, tau0_sq: float | None = None,
                   record: list | None = None):
    """Iterate tau^2 <- psi(tau^2, alpha tau) to convergence.

    Returns (tau_star_sq, trace). Damps by half on sign oscillation of the
    update. Raises FixedPointError on divergence (alpha at or below
    alpha_min has no fixed point) or when maxiter is exhausted.
    """
    t_nat = eng.tau0_sq()
    tau_sq = t_nat if tau0_sq is None else float(tau0_sq)
    guard = 1e6 * max(t_nat, 1.0)
    # below this the iterate is treated as the zero fixed point (noiseless
    # recovery regime, where the decay is geometric and never meets rtol)
    zero_floor = 1e-13 * max(t_nat, 1.0)
    trace = [tau_sq]
    prev_delta = 0.0
    hist = []
    for _ in range(maxiter):
        if tau_sq <= zero_floor:
            return max(tau_sq, 0.0), trace
        target = eng.eval(tau_sq, alpha * math.sqrt(tau_sq)).psi
        delta_t = target - tau_sq
        oscillating = prev_delta * delta_t < 0.0
        if oscillating:
            new_tau = tau_sq + 0.5 * delta_t
        else:
            new_tau = target
        prev_delta = delta_t
        trace.append(new_tau)
        if new_tau > guard:
            raise FixedPointError(
                f"tau recursion diverged at alpha={alpha:g} (alpha <= alpha_min?)",
                trace=trace,
            )
        done = abs(delta_t) <= max(tol * max(new_tau, tau_sq), 1e-16)
        tau_sq = new_tau
        if done:
            return tau_sq, trace
        # Aitken handling of monotone stretches: near alpha_min (and near the
        # noiseless stability edge) the slope approaches 1 and the plain
        # recursion crawls; the extrapolated limit also identifies geometric
        # decay to the zero fixed point
        if oscillating:
            hist.clear()
        else:
            hist.append(new_tau)
            if len(hist) == 3:
                d1 = hist[2] - hist[1]
                d0 = hist[1] - hist[0]
                den = d1 - d0
                if den != 0.0 and d0 != 0.0:
                    jump = hist[2] - d1 * d1 / den
                    ratio = d1 / d0
                    if (d1 < 0.0 and d0 < 0.0 and 0.0 < ratio < 1.0
                            and jump <= zero_floor):
                        trace.append(0.0)
                        return 0.0, trace
                    if math.isfinite(jump) and zero_floor < jump < guard:
                        if abs(jump - hist[2]) <= tol * hist[2]:
                            # the extrapolated limit coincides with the
                            # iterate: converged, even though the raw steps
                            # still exceed rtol (slope close to 1)
                            return jump, trace
                        tau_sq = jump
                        trace.append(jump)
                        prev_delta = 0.0
                        hist.clear()
                        continue
                del hist[0]
    if tau_sq <= zero_floor:
        return max(tau_sq, 0.0), trace
    raise FixedPointError(
        f"tau recursion did not settle within {maxiter} iterations at alpha={alpha:g}",
        trace=trace,
    )


def _fixed_point(eng, alpha: float, delta: float, sigma_w_sq: float) -> SEPoint:
    cached = eng._fp_cache.get(alpha)
    if cached is not None:
        return cached
    hint = None
    if eng._fp_cache:
        nearest = min(eng._fp_cache, key=lambda a: abs(a - alpha))
        hint = eng._fp_cache[nearest].tau_star_sq
        # a near-zero tau carries no warmth and sits in the wrong basin when
        # the zero fixed point is unstable at this alpha; start cold instead
        if hint <= max(1e-3 * eng.tau0_sq(), 1e-10):
            hint = None
    tau_star_sq, _ = _run_recursion(eng, alpha, tau0_sq=hint)
    # contraction slope and stderr at the fixed point
    slope = float("nan")
    stderr = 0.0
    if tau_star_sq > 1e-12:
        h = 0.05 * tau_star_sq
        up = eng.eval(tau_star_sq + h, alpha * math.sqrt(tau_star_sq + h))
        dn = eng.eval(tau_star_sq - h, alpha * math.sqrt(tau_star_sq - h))
        slope = (up.psi - dn.psi) / (2.0 * h)
        at = eng.eval(tau_star_sq, alpha * math.sqrt(tau_star_sq))
        if slope < 1.0:
            stderr = at.psi_stderr / max(1.0 - slope, 1e-3)
        else:
            stderr = at.psi_stderr
    point = SEPoint(
        alpha=float(alpha),
        tau_star_sq=float(tau_star_sq),
        theta_star=float(alpha * math.sqrt(max(tau_star_sq, 0.0))),
        lam=float("nan"),
        delta=float(delta),
        sigma_w_sq=float(sigma_w_sq),
        mc_stderr=float(stderr),
        psi_slope=float(slope),
    )
    eng._fp_cache[alpha] = point
    return point


def fixed_point_tau(alpha: float, prior: SignalPrior, cov, delta: float,
                    sigma_w_sq: float, mc: MCConfig) -> SEPoint:
    """Solve tau^2 = psi(tau^2, alpha tau); requires alpha > alpha_min."""
    _check_delta(delta)
    eng = _engine_for(cov, prior, delta, sigma_w_sq, mc)
    return _fixed_point(eng, float(alpha), delta, sigma_w_sq)


def tau_sequence(alpha: float, prior: SignalPrior, cov, delta: float,
                 sigma_w_sq: float, mc: MCConfig, length: int) -> np.ndarray:
    """tau_t^2 for t = 0..length-1 along the recursion, padded once settled.

    This is the literal recursion, undamped and unaccelerated, because the
    values are consumed as a threshold schedule theta_t = alpha tau_t and as
    the reference trajectory for finite-p tracking checks. In particular the
    sequence never touches 0 exactly: a zero threshold turns the prox into
    the identity and puts the support count at p, which breaks the residual
    recursion whenever delta < 1.
    """
    _check_delta(delta)
    if length < 1:
        raise ParameterError("length must be >= 1")
    alpha = float(alpha)
    eng = _engine_for(cov, prior, delta, sigma_w_sq, mc)
    tau_sq = eng.tau0_sq()
    guard = 1e6 * max(tau_sq, 1.0)
    seq = np.empty(length)
    seq[0] = tau_sq
    for t in range(1, length):
        new_tau = eng.eval(tau_sq, alpha * math.sqrt(tau_sq)).psi
        if new_tau > guard:
            raise FixedPointError(
                f"tau recursion diverged at alpha={alpha:g} (alpha <= alpha_min?)",
                trace=list(seq[:t]),
            )
        seq[t] = new_tau
        settled = abs(new_tau - tau_sq) <= max(
            FIXED_POINT_RTOL * max(new_tau, tau_sq), 1e-16)
        tau_sq = new_tau
        if settled:
            seq[t + 1:] = new_tau
            break
    return seq


def alpha_min(delta: float, cov, mc: MCConfig, xtol: float = 1e-4) -> float:
    """Root of f(alpha) = 1, f(alpha) = E||eta_alpha(S^{-1/2}z)||^2_S/(p delta).

    f is strictly decreasing from f(0) = 1/delta to 0, so the root exists for
    delta < 1 and is 0 at delta = 1.
    """
    _check_delta(delta)
    eng = _engine_for(cov, None, delta, 0.0, mc, stream_id=_rng.ALPHA_MIN_STREAM)
    if eng._alpha_min is not None:
        return eng._alpha_min
    if eng.is_quadrature:
        if f_identity(0.0, delta) <= 1.0 + 1e-12:
            eng._alpha_min = 0.0
            return 0.0
        root = brentq(lambda a: f_identity(a, delta) - 1.0, 0.0, 20.0, xtol=min(xtol, 1e-10))
        eng._alpha_min = float(root)
        return eng._alpha_min
    evals = []

    def fhat(a: float) -> float:
        v, _ = eng.f_value(a)
        evals.append((a, v))
        return v

    if fhat(0.0) <= 1.0:
        eng._alpha_min = 0.0
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(60):
        if fhat(hi) < 1.0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise CalibrationError(f"no upper bracket for f(alpha)=1; evaluations: {evals}")
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if fhat(mid) >= 1.0:
            lo = mid
        else:
            hi = mid
    eng._alpha_min = 0.5 * (lo + hi)
    return eng._alpha_min


def _calibrate(eng, alpha: float, delta: float, sigma_w_sq: float) -> SEPoint:
    cached = eng._lam_cache.get(alpha)
    if cached is not None:
        return cached
    point = _fixed_point(eng, alpha, delta, sigma_w_sq)
    if point.tau_star_sq <= 1e-12:
        lam = 0.0
    else:
        stats = eng.eval(point.tau_star_sq, point.theta_star)
        lam = point.theta_star * (1.0 - stats.supp)
    point = SEPoint(
        alpha=point.alpha,
        tau_star_sq=point.tau_star_sq,
        theta_star=point.theta_star,
        lam=float(lam),
        delta=point.delta,
        sigma_w_sq=point.sigma_w_sq,
        mc_stderr=point.mc_stderr,
        psi_slope=point.psi_slope,
    )
    eng._lam_cache[alpha] = point
    return point


def calibrate_lambda(alpha: float, prior: SignalPrior, cov, delta: float,
                     sigma_w_sq: float, mc: MCConfig) -> SEPoint:
    """lambda(alpha) = alpha tau_star (1 - E supp fraction / delta ... ).

    Concretely: theta_star (1 - E||eta||_0 / (p delta)) at the fixed point.
    Negative values are legitimate just above alpha_min.
    """
    _check_delta(delta)
    eng = _engine_for(cov, prior, delta, sigma_w_sq, mc)
    return _calibrate(eng, float(alpha), delta, sigma_w_sq)


# geometric scan used to bracket the smallest root of lambda(alpha) = lam
_SCAN_RATIO = 1.25
_SCAN_LIMIT = 60


def _bisect_crossing(val, lo: float, hi: float, xtol: float = 1e-5) -> float:
    """Leftmost sign change of val on [lo, hi]; val(hi) >= 0, val(lo) < 0/None.

    None marks alphas whose recursion diverges (effectively lambda = -inf),
    which bisection treats the same as a negative value.
    """
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        v = val(mid)
        if v is not None and v >= 0.0:
            hi = mid
        else:
            lo = mid
    return float(hi)


def invert_calibration(lam: float, prior: SignalPrior, cov, delta: float,
                       sigma_w_sq: float, mc: MCConfig) -> float:
    """Smallest alpha with lambda(alpha) = lam, by upward geometric scan.

    The scan starts just above alpha_min (where lambda -> -inf) with ratio
    1.25 and bisects inside the first sign-change bracket, so roots finer
    than the scan resolution are resolved to the leftmost crossing. alpha_min
    is itself a Monte-Carlo estimate from an independent stream, so scan
    points near it may sit below the risk engine's own divergence edge; those
    evaluations fail and count as lambda = -inf rather than aborting.
    """
    if not (lam > 0):
        raise ParameterError(f"lam must be positive, got {lam}")
    if prior.epsilon == 0.0:
        raise ParameterError("calibration needs epsilon > 0 (P(beta0 != 0) > 0)")
    _check_delta(delta)
    eng = _engine_for(cov, prior, delta, sigma_w_sq, mc)
    a_min = alpha_min(delta, cov, mc)

    def val(a: float):
        try:
            return _calibrate(eng, a, delta, sigma_w_sq).lam - lam
        except FixedPointError:
            return None

    a = max(a_min * 1.05, a_min + 5e-3, 0.05)
    v = val(a)
    if v is not None and v >= 0.0:
        # already above target at the anchor: the crossing sits between
        # alpha_min (lambda -> -inf) and the anchor
        lo = max(a_min * 1.005, a_min + 5e-4)
        lo_v = val(lo)
        if lo_v is not None and lo_v >= 0.0:
            return float(lo)
        return _bisect_crossing(val, lo, a)
    prev_a = a
    for _ in range(_SCAN_LIMIT):
        a = a * _SCAN_RATIO
        v = val(a)
        if v is not None and v >= 0.0:
            return _bisect_crossing(val, prev_a, a)
        prev_a = a
    raise CalibrationError(
        f"lambda(alpha) never reached {lam:g} after {_SCAN_LIMIT} expansions "
        f"(last alpha {prev_a:g})"
    )


def lasso_risk(lam: float, prior: SignalPrior, cov, delta: float,
               sigma_w_sq: float, mc: MCConfig) -> tuple:
    """(mse, stderr): E||eta_{theta*}(beta0 + tau* S^{-1/2}z) - beta0||^2 / p."""
    alpha = invert_calibration(lam, prior, cov, delta, sigma_w_sq, mc)
    eng = _engine_for(cov, prior, delta, sigma_w_sq, mc)
    point = _fixed_point(eng, alpha, delta, sigma_w_sq)
    if point.tau_star_sq <= 1e-12:
        return 0.0, 0.0
    stats = eng.eval(point.tau_star_sq, point.theta_star)
    return stats.risk, stats.risk_stderr


def risk_curve(lams, prior: SignalPrior, cov, delta: float, sigma_w_sq: float,
               mc: MCConfig) -> list:
    """Rows (lambda, alpha, tau_star_sq, mse, stderr) for a positive lam grid.

    All rows share one engine, so the calibration scan and fixed points are
    reused across the grid.
    """
    rows = []
    for lam in lams:
        alpha = invert_calibration(float(lam), prior, cov, delta, sigma_w_sq, mc)
        eng = _engine_for(cov, prior, delta, sigma_w_sq, mc)
        point = _fixed_point(eng, alpha, delta, sigma_w_sq)
        if point.tau_star_sq > 1e-12:
            stats = eng.eval(point.tau_star_sq, point.theta_star)
            mse, stderr = stats.risk, stats.risk_stderr
        else:
            mse, stderr = 0.0, 0.0
        rows.append({
            "lambda": float(lam),
            "alpha": float(alpha),
            "tau_star_sq": float(point.tau_star_sq),
            "mse": float(mse),
            "stderr": float(stderr),
        })
    return rows
