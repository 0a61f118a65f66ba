import numpy as np
import numba
import pytest

from lassophase import (
    ConvergenceError,
    basis_pursuit,
    lasso_path,
    solve_lasso,
)


def _objective(X, y, beta, lam):
    r = y - X @ beta
    return 0.5 * r @ r + lam * np.abs(beta).sum()


@numba.njit(cache=True)
def _subgradient_descent(X, y, lam, steps, lr):
    # projected-subgradient reference: slow but independent of the
    # coordinate-descent code path under test
    p = X.shape[1]
    beta = np.zeros(p)
    best = beta.copy()
    r = y - X @ beta
    best_obj = 0.5 * r @ r
    for t in range(steps):
        r = y - X @ beta
        g = -X.T @ r + lam * np.sign(beta)
        # subgradient at zero coordinates: shrink toward the feasible slab
        for j in range(p):
            if beta[j] == 0.0:
                gj = -(X[:, j] @ r)
                if gj > lam:
                    g[j] = gj - lam
                elif gj < -lam:
                    g[j] = gj + lam
                else:
                    g[j] = 0.0
        step = lr / np.sqrt(t + 1.0)
        beta = beta - step * g
        r = y - X @ beta
        obj = 0.5 * r @ r + lam * np.abs(beta).sum()
        if obj < best_obj:
            best_obj = obj
            best = beta.copy()
    return best, best_obj


def test_large_lambda_gives_zero(rng):
    X = rng.standard_normal((30, 50)) / np.sqrt(30)
    y = rng.standard_normal(30)
    lam = float(np.abs(X.T @ y).max())
    sol = solve_lasso(X, y, lam * 1.0000001)
    assert np.all(sol.beta == 0)


def test_orthonormal_design_soft_thresholds(rng):
    q, _ = np.linalg.qr(rng.standard_normal((40, 10)))
    y = rng.standard_normal(40)
    lam = 0.3
    sol = solve_lasso(q, y, lam, tol=1e-12)
    c = q.T @ y
    expect = np.sign(c) * np.maximum(np.abs(c) - lam, 0.0)
    assert np.allclose(sol.beta, expect, atol=1e-10)


def test_beats_subgradient_oracle(rng):
    X = rng.standard_normal((20, 50)) / np.sqrt(20)
    beta0 = np.zeros(50)
    beta0[:5] = rng.standard_normal(5)
    y = X @ beta0 + 0.05 * rng.standard_normal(20)
    lam = 0.05
    sol = solve_lasso(X, y, lam, tol=1e-12)
    _, oracle_obj = _subgradient_descent(X, y, lam, 1_000_000, 0.05)
    assert sol.objective <= oracle_obj + 1e-8


def test_gram_and_residual_modes_agree(rng):
    X = rng.standard_normal((40, 25)) / np.sqrt(40)
    y = rng.standard_normal(40)
    a = solve_lasso(X, y, 0.1, tol=1e-12, mode="gram").beta
    b = solve_lasso(X, y, 0.1, tol=1e-12, mode="residual").beta
    assert np.allclose(a, b, atol=1e-9)


def test_objective_nonincreasing_in_sweeps(rng):
    # capping sweeps at 1..k traces the optimizer's progress; the objective
    # must be nonincreasing along that sequence
    X = rng.standard_normal((30, 40)) / np.sqrt(30)
    y = rng.standard_normal(30)
    objs = []
    for cap in range(1, 8):
        try:
            sol = solve_lasso(X, y, 0.08, tol=1e-12, max_sweeps=cap)
        except ConvergenceError as e:
            sol = None
            beta = e.last_iterate
            objs.append(_objective(X, y, beta, 0.08))
        if sol is not None:
            objs.append(sol.objective)
    for a, b in zip(objs, objs[1:]):
        assert b <= a + 1e-12


def test_kkt_residual_honest(rng):
    X = rng.standard_normal((50, 30)) / np.sqrt(50)
    y = rng.standard_normal(50)
    sol = solve_lasso(X, y, 0.2, tol=1e-11)
    grad = X.T @ (X @ sol.beta - y)
    on = sol.beta != 0
    worst = 0.0
    if on.any():
        worst = np.max(np.abs(grad[on] + 0.2 * np.sign(sol.beta[on])))
    if (~on).any():
        worst = max(worst, max(np.max(np.abs(grad[~on])) - 0.2, 0.0))
    assert worst <= 1e-10
    assert sol.kkt_residual <= 1e-11


def test_path_continuity(rng):
    # the solution path is piecewise linear in lambda: halving the grid step
    # should roughly halve the largest move between neighbouring solutions
    X = rng.standard_normal((40, 30)) / np.sqrt(40)
    y = rng.standard_normal(40)

    def max_step(k):
        lams = np.linspace(0.05, 0.5, k)
        sols = lasso_path(X, y, lams, tol=1e-11)
        assert [s.lam for s in sols] == list(lams)
        return max(
            np.linalg.norm(a.beta - b.beta) for a, b in zip(sols, sols[1:])
        )

    coarse = max_step(6)
    fine = max_step(11)
    assert fine <= 0.75 * coarse


def test_path_matches_individual_solves(rng):
    X = rng.standard_normal((30, 20)) / np.sqrt(30)
    y = rng.standard_normal(30)
    lams = [0.3, 0.1]
    sols = lasso_path(X, y, lams, tol=1e-12)
    for lam, sol in zip(lams, sols):
        direct = solve_lasso(X, y, lam, tol=1e-12)
        assert np.allclose(sol.beta, direct.beta, atol=1e-9)


def test_basis_pursuit_exact_system(rng):
    # overdetermined consistent system: unique solution, recovered exactly
    X = rng.standard_normal((30, 10)) / np.sqrt(30)
    beta0 = rng.standard_normal(10)
    y = X @ beta0
    res = basis_pursuit(X, y)
    assert res.feasible
    assert np.linalg.norm(res.beta - beta0) / np.linalg.norm(beta0) <= 1e-5


def test_basis_pursuit_zero_rhs(rng):
    X = rng.standard_normal((20, 30)) / np.sqrt(20)
    res = basis_pursuit(X, np.zeros(20))
    assert res.feasible
    assert np.all(res.beta == 0)


def test_basis_pursuit_sparse_recovery():
    # 10-sparse signal in an 80 x 100 Gaussian design sits well inside the
    # recoverable region; expect >= 95/100 exact recoveries
    wins = 0
    for trial in range(100):
        g = np.random.default_rng(1000 + trial)
        X = g.standard_normal((80, 100)) / np.sqrt(80)
        beta0 = np.zeros(100)
        support = g.choice(100, size=10, replace=False)
        beta0[support] = g.choice([-1.0, 1.0], size=10)
        y = X @ beta0
        res = basis_pursuit(X, y)
        err = np.linalg.norm(res.beta - beta0) / np.linalg.norm(beta0)
        wins += err <= 1e-4
    assert wins >= 95


def test_dimension_check(rng):
    X = rng.standard_normal((10, 5))
    with pytest.raises(Exception):
        solve_lasso(X, np.zeros(11), 0.1)
