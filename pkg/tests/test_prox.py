import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lassophase import (
    CovarianceSpec,
    build,
    divergence,
    prox_weighted_l1,
    solve_lasso,
)

AR2 = build(CovarianceSpec(family="ar1", rho=0.5).with_dim(2))
AR6 = build(CovarianceSpec(family="ar1", rho=0.5).with_dim(6))
ID4 = build(CovarianceSpec(family="identity").with_dim(4))


def _objective(beta, v, model, theta):
    d = beta - v
    return 0.5 * d @ model.matrix @ d + theta * np.abs(beta).sum()


def test_identity_is_soft_thresholding():
    v = np.array([2.0, -0.5, 0.3, -3.0])
    out = prox_weighted_l1(v, ID4, 1.0).value
    assert np.allclose(out, [1.0, 0.0, 0.0, -2.0])


def test_theta_zero_returns_input(ar_model_8, rng):
    v = rng.standard_normal(8)
    out = prox_weighted_l1(v, ar_model_8, 0.0).value
    assert np.array_equal(out, v)


def test_two_dim_fine_grid_oracle():
    # brute force the 2-d objective on a fine grid around the analytic
    # optimum; symmetric v = (1, 1) under ar1(0.5) solves to (0.8, 0.8)
    # at theta = 0.3: stationarity 1.5 (b - 1) + 0.3 = 0 per coordinate
    v = np.array([1.0, 1.0])
    out = prox_weighted_l1(v, AR2, 0.3).value
    assert np.allclose(out, [0.8, 0.8], atol=1e-8)
    grid = np.linspace(0.5, 1.1, 121)
    best = min(
        ((a, b) for a in grid for b in grid),
        key=lambda ab: _objective(np.array(ab), v, AR2, 0.3),
    )
    assert np.allclose(out, best, atol=1e-2)
    f_opt = _objective(out, v, AR2, 0.3)
    f_grid = _objective(np.array(best), v, AR2, 0.3)
    assert f_opt <= f_grid + 1e-10


def test_kkt_residual_reported_small(rng):
    v = rng.standard_normal(6) * 2
    res = prox_weighted_l1(v, AR6, 0.4, tol=1e-12)
    assert res.kkt_residual <= 1e-12


def test_matches_lasso_reduction(rng):
    # eta_theta(v) = argmin 1/2||S^{1/2} b - S^{1/2} v||^2 + theta ||b||_1,
    # which is a lasso with design S^{1/2} and response S^{1/2} v
    v = rng.standard_normal(6)
    theta = 0.35
    out = prox_weighted_l1(v, AR6, theta, tol=1e-12).value
    ls = solve_lasso(AR6.sqrt, AR6.sqrt @ v, theta, tol=1e-12).beta
    assert np.allclose(out, ls, atol=1e-8)


def test_divergence_is_support_size(rng):
    v = rng.standard_normal(6) * 1.5
    res = prox_weighted_l1(v, AR6, 0.5)
    assert divergence(res) == np.count_nonzero(res.value)


def test_divergence_matches_fd_jacobian_trace(rng):
    # trace of the Jacobian by central differences, avoiding kinks: skip
    # coordinates whose |entry| sits within h of the threshold boundary
    theta = 0.45
    h = 1e-5
    for _ in range(10):
        v = rng.standard_normal(6) * 1.2
        base = prox_weighted_l1(v, AR6, theta, tol=1e-13)
        tr = 0.0
        ok = True
        for j in range(6):
            vp = v.copy()
            vp[j] += h
            vm = v.copy()
            vm[j] -= h
            up = prox_weighted_l1(vp, AR6, theta, tol=1e-13).value
            dn = prox_weighted_l1(vm, AR6, theta, tol=1e-13).value
            if np.count_nonzero(up) != np.count_nonzero(dn):
                ok = False  # stepped across a kink; the trace jumps there
                break
            tr += (up[j] - dn[j]) / (2 * h)
        if ok:
            assert abs(tr - divergence(base)) < 0.01


@given(st.integers(0, 2 ** 32 - 1))
def test_nonexpansive_in_weighted_norm(seed):
    # ||eta(v) - eta(w)||_S <= ||v - w||_S
    g = np.random.default_rng(seed)
    v = g.standard_normal(6) * 2
    w = g.standard_normal(6) * 2
    theta = float(g.uniform(0.05, 1.5))
    ev = prox_weighted_l1(v, AR6, theta, tol=1e-12).value
    ew = prox_weighted_l1(w, AR6, theta, tol=1e-12).value
    lhs = (ev - ew) @ AR6.matrix @ (ev - ew)
    rhs = (v - w) @ AR6.matrix @ (v - w)
    assert lhs <= rhs + 1e-9


@given(st.integers(0, 2 ** 32 - 1))
def test_l1_norm_nonincreasing_in_theta(seed):
    g = np.random.default_rng(seed)
    v = g.standard_normal(6) * 2
    thetas = np.sort(g.uniform(0.01, 2.0, size=3))
    norms = [
        np.abs(prox_weighted_l1(v, AR6, float(t), tol=1e-12).value).sum()
        for t in thetas
    ]
    assert norms[0] >= norms[1] - 1e-9
    assert norms[1] >= norms[2] - 1e-9


def test_large_theta_returns_zero(rng):
    v = rng.standard_normal(6)
    # theta above max |(Sigma v)_j| forces 0 by the KKT conditions
    theta = float(np.abs(AR6.matrix @ v).max()) * 1.01
    out = prox_weighted_l1(v, AR6, theta).value
    assert np.all(out == 0)


def test_warm_start_agrees(rng):
    v = rng.standard_normal(6) * 2
    cold = prox_weighted_l1(v, AR6, 0.3, tol=1e-12).value
    warm = prox_weighted_l1(v, AR6, 0.3, tol=1e-12, warm_start=cold + 0.1).value
    assert np.allclose(cold, warm, atol=1e-9)
