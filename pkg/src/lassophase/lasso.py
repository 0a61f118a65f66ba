"""Coordinate-descent lasso and a basis-pursuit front end.

solve_lasso minimizes 0.5 ||y - X b||^2 + lam ||b||_1 by cyclic coordinate
descent, either on the cached Gram system (p <= 2000, or when a precomputed
Gram matrix is supplied) or with residual updates for wide problems.
basis_pursuit approximates min ||b||_1 s.t. y = X b by geometric lambda
continuation down to a floor, warm-starting every stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConvergenceError, ParameterError
from .prox import ActiveSet

__all__ = ["LassoSolution", "BasisPursuitResult", "solve_lasso", "lasso_path", "basis_pursuit"]

DEFAULT_TOL = 1e-9
GRAM_DIM_LIMIT = 2000


@dataclass
class LassoSolution:
    beta: np.ndarray
    active: ActiveSet
    objective: float
    kkt_residual: float
    lam: float
    sweeps: int = 0


@dataclass
class BasisPursuitResult:
    beta: np.ndarray
    rel_residual: float
    feasible: bool
    lam_final: float
    stages: int


def _check_dims(X, y):
    if X.ndim != 2:
        raise ParameterError(f"X must be 2-D, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise ParameterError(f"y has shape {y.shape}, expected ({X.shape[0]},)")


def _solve_gram(gram, xty, ynorm2, lam, beta, tol, max_sweeps):
    grad = np.empty(gram.shape[0])
    kkt, sweeps, ok = _kernels.cd_gram(
        gram, np.ascontiguousarray(np.diagonal(gram)), xty,
        float(lam), beta, grad, float(tol), int(max_sweeps),
    )
    obj = 0.5 * beta @ (grad + xty) - xty @ beta + 0.5 * ynorm2 + lam * np.abs(beta).sum()
    return beta, float(kkt), int(sweeps), bool(ok), float(obj)


def _solve_resid(XF, y, colnorm2, lam, beta, tol, max_sweeps):
    resid = np.empty(y.shape[0])
    kkt, sweeps, ok = _kernels.cd_residual(
        XF, y, float(lam), beta, resid, colnorm2, float(tol), int(max_sweeps),
    )
    obj = 0.5 * resid @ resid + lam * np.abs(beta).sum()
    return beta, float(kkt), int(sweeps), bool(ok), float(obj)


def solve_lasso(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    tol: float = DEFAULT_TOL,
    max_sweeps: int | None = None,
    warm_start: np.ndarray | None = None,
    gram: np.ndarray | None = None,
    xty: np.ndarray | None = None,
    mode: str = "auto",
) -> LassoSolution:
    """Minimize 0.5 ||y - X b||^2 + lam ||b||_1 to KKT residual <= tol.

    Pass gram/xty to reuse X'X and X'y across calls at the same design.
    Raises ConvergenceError (with the last iterate attached) when the sweep
    cap is hit first.
    """
    if lam < 0:
        raise ParameterError(f"lam must be nonnegative, got {lam}")
    X = np.asarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    _check_dims(X, y)
    n, p = X.shape
    if max_sweeps is None:
        max_sweeps = 50 * p
    if mode not in ("auto", "gram", "residual"):
        raise ParameterError(f"mode must be auto/gram/residual, got {mode!r}")
    use_gram = gram is not None or mode == "gram" or (mode == "auto" and p <= GRAM_DIM_LIMIT)

    if warm_start is not None:
        if warm_start.shape != (p,):
            raise ParameterError(f"warm start has shape {warm_start.shape}, expected ({p},)")
        beta = np.ascontiguousarray(warm_start, dtype=np.float64).copy()
    else:
        beta = np.zeros(p)

    if use_gram:
        if gram is None:
            gram = np.ascontiguousarray(X.T @ X)
        if xty is None:
            xty = X.T @ y
        beta, kkt, sweeps, ok, obj = _solve_gram(
            gram, np.ascontiguousarray(xty), float(y @ y), lam, beta, tol, max_sweeps
        )
    else:
        XF = np.asfortranarray(X)
        colnorm2 = np.ascontiguousarray(np.einsum("ij,ij->j", X, X))
        beta, kkt, sweeps, ok, obj = _solve_resid(XF, y, colnorm2, lam, beta, tol, max_sweeps)
    if not ok:
        raise ConvergenceError(
            f"lasso did not reach tol={tol:g} within {max_sweeps} sweeps (kkt={kkt:.3e})",
            last_iterate=beta, kkt_residual=kkt,
        )
    return LassoSolution(beta, ActiveSet.from_vector(beta), obj, kkt, float(lam), sweeps)


def lasso_path(X, y, lams, **opts) -> list:
    """Solutions along a lambda path, warm-started from large to small lam.

    Results are returned in the order of `lams`.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    _check_dims(X, y)
    order = np.argsort(np.asarray(lams))[::-1]
    if "gram" not in opts and X.shape[1] <= GRAM_DIM_LIMIT and opts.get("mode", "auto") != "residual":
        opts = dict(opts)
        opts["gram"] = np.ascontiguousarray(X.T @ X)
        opts["xty"] = X.T @ y
    out: list = [None] * len(lams)
    warm = opts.pop("warm_start", None)
    for i in order:
        sol = solve_lasso(X, y, float(np.asarray(lams)[i]), warm_start=warm, **opts)
        warm = sol.beta
        out[i] = sol
    return out


def basis_pursuit(
    X: np.ndarray,
    y: np.ndarray,
    kappa: float = 0.5,
    lam_floor_ratio: float = 1e-7,
    feas_tol: float = 1e-6,
    tol: float = DEFAULT_TOL,
    max_sweeps: int | None = None,
) -> BasisPursuitResult:
    """Approximate min ||b||_1 s.t. y = X b by lambda continuation.

    Stages lam_k = lam0 * kappa^k from lam0 = ||X'y||_inf down to
    lam0 * lam_floor_ratio; each stage warm-starts from the last. Infeasible
    endings are flagged, not raised (the caller's success criterion decides).
    """
    if not (0 < kappa < 1):
        raise ParameterError(f"kappa must lie in (0, 1), got {kappa}")
    X = np.asarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    _check_dims(X, y)
    n, p = X.shape
    lam0 = float(np.max(np.abs(X.T @ y))) if y.any() else 0.0
    if lam0 == 0.0:
        return BasisPursuitResult(np.zeros(p), 0.0, True, 0.0, 0)
    if max_sweeps is None:
        max_sweeps = 50 * p
    n_stages = int(np.ceil(np.log(lam_floor_ratio) / np.log(kappa)))
    lams = lam0 * kappa ** np.arange(1, n_stages)
    lams = np.append(lams, lam0 * lam_floor_ratio)

    use_gram = p <= GRAM_DIM_LIMIT
    beta = np.zeros(p)
    if use_gram:
        gram = np.ascontiguousarray(X.T @ X)
        xty = X.T @ y
        ynorm2 = float(y @ y)
    else:
        XF = np.asfortranarray(X)
        colnorm2 = np.ascontiguousarray(np.einsum("ij,ij->j", X, X))
    for k, lam in enumerate(lams):
        last = k == len(lams) - 1
        # intermediate stages only need to hand over a decent warm start
        stage_tol = tol if last else max(tol, 1e-5 * lam)
        if use_gram:
            beta, kkt, sweeps, ok, _ = _solve_gram(gram, xty, ynorm2, lam, beta, stage_tol, max_sweeps)
        else:
            beta, kkt, sweeps, ok, _ = _solve_resid(XF, y, colnorm2, lam, beta, stage_tol, max_sweeps)
    resid = y - X @ beta
    rel = float(np.linalg.norm(resid) / np.linalg.norm(y))
    return BasisPursuitResult(beta, rel, rel <= feas_tol, float(lams[-1]), len(lams))
