"""AMP iteration for correlated Gaussian designs, thresholds theta_t = alpha tau_t.

The update is

    beta^{t+1} = eta_{theta_t}(Sigma^{-1} X' z^t + beta^t)
    z^{t+1}    = y - X beta^{t+1} + z^t ||beta^{t+1}||_0 / (p delta)

initialized at beta^0 = 0, z^0 = y (no memory term on the first step). The
threshold schedule is deterministic: tau_t^2 follows the state-evolution
recursion computed by state_evolution.tau_sequence, never estimated from the
data. At a fixed point the iterate solves the lasso with penalty
lambda = theta (1 - ||beta||_0/(p delta)), which amp_fixed_point_lambda
reports for a converged state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .covariance import CovarianceModel
from .errors import DivergenceError, ParameterError
from .priors import SignalPrior
from .prox import prox_weighted_l1
from .state_evolution import MCConfig, tau_sequence

__all__ = ["AmpState", "AmpTrace", "amp_run", "amp_fixed_point_lambda"]

DEFAULT_TOL = 1e-8
DEFAULT_MAXITER = 500

# divergence trip: monitored scale grew this much over this many iterations
_DIVERGE_FACTOR = 10.0
_DIVERGE_WINDOW = 20


@dataclass
class AmpState:
    beta: np.ndarray
    residual: np.ndarray
    tau_sq: float
    theta: float
    iteration: int


@dataclass
class AmpTrace:
    """Per-iteration records; entry t-1 describes the state after update t."""

    mse: list = field(default_factory=list)
    dbeta: list = field(default_factory=list)
    dz: list = field(default_factory=list)
    tau_sq: list = field(default_factory=list)
    support: list = field(default_factory=list)
    status: str = "running"
    final: AmpState | None = None

    def __len__(self) -> int:
        return len(self.dbeta)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("iteration,mse,dbeta,dz,tau_sq,support\n")
            for i in range(len(self.dbeta)):
                fields = (
                    str(i + 1),
                    format(self.mse[i], ".17g"),
                    format(self.dbeta[i], ".17g"),
                    format(self.dz[i], ".17g"),
                    format(self.tau_sq[i], ".17g"),
                    str(self.support[i]),
                )
                fh.write(",".join(fields) + "\n")


def _resolve_schedule(alpha, model, delta, sigma_w_sq, prior, mc, tau0_sq,
                      tau_schedule, maxiter) -> np.ndarray:
    need = maxiter + 2
    if tau_schedule is not None:
        sched = np.asarray(tau_schedule, dtype=float).ravel()
        if sched.size == 0 or np.any(sched < 0):
            raise ParameterError("tau_schedule must be nonempty and nonnegative")
        if sched.size < need:
            sched = np.concatenate([sched, np.full(need - sched.size, sched[-1])])
        return sched
    if prior is None:
        raise ParameterError(
            "the threshold policy needs a tau_sq schedule: pass prior (state "
            "evolution is run for you) or tau_schedule"
        )
    mc = mc if mc is not None else MCConfig()
    sched = tau_sequence(alpha, prior, model, delta, sigma_w_sq, mc, need)
    if tau0_sq is not None:
        # caller-supplied starting value; the rest of the recursion is reused
        sched = sched.copy()
        sched[0] = float(tau0_sq)
    return sched


def amp_run(X, y, model: CovarianceModel, alpha: float, sigma_w_sq: float,
            prior: SignalPrior | None = None, mc: MCConfig | None = None,
            tau0_sq: float | None = None, tau_schedule=None,
            maxiter: int = DEFAULT_MAXITER, tol: float = DEFAULT_TOL,
            beta_true=None, prox_tol: float = 1e-10) -> AmpTrace:
    """Run AMP on one instance; returns the trace with the final state.

    Stops when both ||beta^{t+1}-beta^t||^2/p and ||z^{t+1}-z^t||^2/p fall
    below tol. Raises DivergenceError when the monitored error scale (mse to
    the truth when beta_true is given, else ||z||^2/n) grows 10x over a
    20-iteration window; alpha at or below alpha_min behaves this way.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise ParameterError(f"X must be 2-D, got shape {X.shape}")
    n, p = X.shape
    if y.shape[0] != n:
        raise ParameterError(f"y has length {y.shape[0]}, X has {n} rows")
    if model.dim != p:
        raise ParameterError(f"model dim {model.dim} != number of columns {p}")
    if beta_true is not None:
        beta_true = np.asarray(beta_true, dtype=float).ravel()
        if beta_true.shape[0] != p:
            raise ParameterError("beta_true length mismatch")
    if alpha <= 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    delta = n / p
    sched = _resolve_schedule(alpha, model, delta, sigma_w_sq, prior, mc,
                              tau0_sq, tau_schedule, maxiter)

    trace = AmpTrace()
    beta = np.zeros(p)
    z = y.copy()
    monitor = []
    theta = alpha * math.sqrt(sched[0])
    with threadpool_limits(limits=1):
        for t in range(maxiter):
            theta = alpha * math.sqrt(sched[t])
            v = beta + model.inv @ (X.T @ z)
            res = prox_weighted_l1(v, model, theta, tol=prox_tol, warm_start=beta)
            beta_new = res.value
            supp = len(res.active)
            z_new = y - X @ beta_new + z * (supp / (p * delta))
            dbeta = float(np.sum((beta_new - beta) ** 2) / p)
            dz = float(np.sum((z_new - z) ** 2) / p)
            beta, z = beta_new, z_new
            mse = float(np.sum((beta - beta_true) ** 2) / p) if beta_true is not None else float("nan")
            trace.mse.append(mse)
            trace.dbeta.append(dbeta)
            trace.dz.append(dz)
            trace.tau_sq.append(float(sched[t + 1]))
            trace.support.append(int(supp))
            scale = mse if beta_true is not None else float(np.sum(z ** 2) / n)
            monitor.append(scale)
            if (len(monitor) > _DIVERGE_WINDOW
                    and scale > _DIVERGE_FACTOR * monitor[-1 - _DIVERGE_WINDOW]
                    and scale > 1e-12):
                trace.status = "diverged"
                raise DivergenceError(
                    f"monitored error grew {scale / monitor[-1 - _DIVERGE_WINDOW]:.2f}x "
                    f"over {_DIVERGE_WINDOW} iterations at t={t + 1} (alpha <= alpha_min?)"
                )
            if dbeta <= tol and dz <= tol:
                trace.status = "converged"
                break
        else:
            trace.status = "maxiter"
    trace.final = AmpState(
        beta=beta, residual=z,
        tau_sq=float(sched[len(trace)]),
        theta=float(theta),
        iteration=len(trace),
    )
    return trace


def amp_fixed_point_lambda(state: AmpState, model: CovarianceModel) -> float:
    """Penalty the fixed point solves: theta (1 - ||beta||_0 / (p delta)).

    delta is read off the state as len(residual)/len(beta).
    """
    p = state.beta.shape[0]
    n = state.residual.shape[0]
    if model.dim != p:
        raise ParameterError(f"model dim {model.dim} != state dim {p}")
    supp = int(np.count_nonzero(state.beta))
    delta = n / p
    return float(state.theta * (1.0 - supp / (p * delta)))
