"""The Sigma-weighted soft-thresholding operator.

eta_theta(v) = argmin_b 0.5 ||b - v||^2_Sigma + theta ||b||_1, solved by
cyclic coordinate descent on the equivalent quadratic. For diagonal Sigma the
minimizer separates and is evaluated in closed form. The divergence of the
map (trace of its Jacobian) equals the support size of the output, which is
what the calibration and AMP correction consume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .covariance import CovarianceModel
from .errors import ConvergenceError, ParameterError

__all__ = ["ActiveSet", "ProxResult", "prox_weighted_l1", "divergence", "DEFAULT_TOL"]

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class ActiveSet:
    indices: np.ndarray
    signs: np.ndarray

    @classmethod
    def from_vector(cls, beta: np.ndarray) -> "ActiveSet":
        idx = np.flatnonzero(beta)
        return cls(indices=idx, signs=np.sign(beta[idx]).astype(np.int8))

    def __len__(self) -> int:
        return int(self.indices.size)


@dataclass
class ProxResult:
    value: np.ndarray
    active: ActiveSet
    kkt_residual: float
    iterations: int


def _kkt_weighted(grad: np.ndarray, beta: np.ndarray, theta: float) -> float:
    # grad = Sigma (beta - v)
    on = beta != 0
    worst = 0.0
    if on.any():
        worst = float(np.max(np.abs(grad[on] + theta * np.sign(beta[on]))))
    if (~on).any():
        worst = max(worst, float(max(np.max(np.abs(grad[~on])) - theta, 0.0)))
    return worst


def prox_weighted_l1(
    v: np.ndarray,
    model: CovarianceModel,
    theta: float,
    tol: float = DEFAULT_TOL,
    maxiter: int | None = None,
    warm_start: np.ndarray | None = None,
) -> ProxResult:
    """Evaluate eta_theta(v) for the given covariance model.

    maxiter counts coordinate sweeps (default 50 p). Raises ConvergenceError
    carrying the last iterate if the KKT residual never reaches tol.
    """
    v = np.ascontiguousarray(v, dtype=np.float64)
    if theta < 0:
        raise ParameterError(f"theta must be nonnegative, got {theta}")
    p = model.dim
    if v.shape != (p,):
        raise ParameterError(f"v has shape {v.shape}, model dim is {p}")
    if theta == 0.0:
        beta = v.copy()
        return ProxResult(beta, ActiveSet.from_vector(beta), 0.0, 0)
    if maxiter is None:
        maxiter = 50 * p

    if model.is_diagonal:
        d = np.diagonal(model.matrix)
        beta = np.sign(v) * np.maximum(np.abs(v) - theta / d, 0.0)
        grad = d * (beta - v)
        return ProxResult(beta, ActiveSet.from_vector(beta), _kkt_weighted(grad, beta, theta), 0)

    if warm_start is not None:
        if warm_start.shape != (p,):
            raise ParameterError(f"warm start has shape {warm_start.shape}, expected ({p},)")
        beta = np.ascontiguousarray(warm_start, dtype=np.float64).copy()
    else:
        beta = np.zeros(p)
    grad = np.empty(p)
    c = model.matrix @ v
    kkt, sweeps, ok = _kernels.cd_gram(
        model.matrix, np.ascontiguousarray(np.diagonal(model.matrix)), c,
        float(theta), beta, grad, float(tol), int(maxiter),
    )
    if not ok:
        raise ConvergenceError(
            f"prox did not reach tol={tol:g} within {maxiter} sweeps (kkt={kkt:.3e})",
            last_iterate=beta, kkt_residual=float(kkt),
        )
    return ProxResult(beta, ActiveSet.from_vector(beta), float(kkt), int(sweeps))


def divergence(result: ProxResult) -> int:
    """div eta_theta(v): the Jacobian trace, equal to the support size."""
    return len(result.active)
