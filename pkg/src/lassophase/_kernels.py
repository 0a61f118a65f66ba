"""Compiled numerical kernels.

Coordinate-descent cores plus the replicated Monte-Carlo inner loops.
Conventions that matter for reproducibility:

- parallel kernels write per-replicate output slots and never reduce across
  replicates, so results are bit-identical for any numba thread count;
- the only BLAS calls inside a parallel region are the dense products in
  m_eval, and the Python-side wrapper pins BLAS to one thread around them;
- factorizations are hand-rolled (no np.linalg inside prange bodies), so a
  non-SPD block signals failure through a flag instead of an exception.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange
from threadpoolctl import threadpool_limits


@njit(cache=True, inline="always")
def _soft(x, t):
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


@njit(cache=True)
def _refresh_grad(G, beta, c, grad):
    # grad <- G @ beta - c, exploiting sparsity of beta
    p = G.shape[0]
    for k in range(p):
        grad[k] = -c[k]
    for j in range(p):
        bj = beta[j]
        if bj != 0.0:
            Gj = G[j]
            for k in range(p):
                grad[k] += bj * Gj[k]


@njit(cache=True)
def _kkt_gram(grad, beta, lam):
    p = beta.shape[0]
    worst = 0.0
    for j in range(p):
        bj = beta[j]
        if bj > 0.0:
            r = abs(grad[j] + lam)
        elif bj < 0.0:
            r = abs(grad[j] - lam)
        else:
            r = abs(grad[j]) - lam
            if r < 0.0:
                r = 0.0
        if r > worst:
            worst = r
    return worst


@njit(cache=True)
def cd_gram(G, diag, c, lam, beta, grad, tol, max_sweeps):
    """Cyclic coordinate descent for min 0.5 b'Gb - c'b + lam * |b|_1.

    beta is updated in place (warm starts respected). On exit grad holds the
    exact G @ beta - c. Returns (kkt_residual, sweeps, converged). The
    incremental gradient is refreshed before any success is declared, so the
    reported residual is never stale.
    """
    p = G.shape[0]
    _refresh_grad(G, beta, c, grad)
    kkt = _kkt_gram(grad, beta, lam)
    if kkt <= tol:
        return kkt, 0, True
    sweeps = 0
    for sweep in range(1, max_sweeps + 1):
        sweeps = sweep
        for j in range(p):
            dj = diag[j]
            if dj <= 0.0:
                continue
            bj = beta[j]
            t = dj * bj - grad[j]
            nb = _soft(t, lam) / dj
            if nb != bj:
                d = nb - bj
                beta[j] = nb
                Gj = G[j]
                for k in range(p):
                    grad[k] += d * Gj[k]
        kkt = _kkt_gram(grad, beta, lam)
        if kkt <= tol:
            _refresh_grad(G, beta, c, grad)
            kkt = _kkt_gram(grad, beta, lam)
            if kkt <= tol:
                return kkt, sweeps, True
        elif sweep % 64 == 0:
            # bound incremental drift on long runs
            _refresh_grad(G, beta, c, grad)
    _refresh_grad(G, beta, c, grad)
    kkt = _kkt_gram(grad, beta, lam)
    return kkt, sweeps, kkt <= tol


@njit(cache=True)
def _refresh_resid(XF, y, beta, r):
    n, p = XF.shape
    for i in range(n):
        r[i] = y[i]
    for j in range(p):
        bj = beta[j]
        if bj != 0.0:
            for i in range(n):
                r[i] -= bj * XF[i, j]


@njit(cache=True)
def _kkt_resid(XF, r, beta, lam):
    n, p = XF.shape
    worst = 0.0
    for j in range(p):
        g = 0.0
        for i in range(n):
            g += XF[i, j] * r[i]
        bj = beta[j]
        if bj > 0.0:
            v = abs(g - lam)
        elif bj < 0.0:
            v = abs(g + lam)
        else:
            v = abs(g) - lam
            if v < 0.0:
                v = 0.0
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def cd_residual(XF, y, lam, beta, resid, colnorm2, tol, max_sweeps):
    """Residual-update coordinate descent for 0.5 ||y - X b||^2 + lam |b|_1.

    XF must be Fortran-ordered so column access is contiguous. beta and resid
    are updated in place; resid holds y - X beta on exit.
    """
    n, p = XF.shape
    _refresh_resid(XF, y, beta, resid)
    kkt = _kkt_resid(XF, resid, beta, lam)
    if kkt <= tol:
        return kkt, 0, True
    sweeps = 0
    for sweep in range(1, max_sweeps + 1):
        sweeps = sweep
        moved = 0.0
        for j in range(p):
            nj = colnorm2[j]
            if nj <= 0.0:
                continue
            bj = beta[j]
            g = 0.0
            for i in range(n):
                g += XF[i, j] * resid[i]
            t = nj * bj + g
            nbv = _soft(t, lam) / nj
            if nbv != bj:
                d = nbv - bj
                beta[j] = nbv
                for i in range(n):
                    resid[i] -= d * XF[i, j]
                ad = abs(d)
                if ad > moved:
                    moved = ad
        if moved == 0.0 or sweep % 8 == 0:
            _refresh_resid(XF, y, beta, resid)
            kkt = _kkt_resid(XF, resid, beta, lam)
            if kkt <= tol:
                return kkt, sweeps, True
    _refresh_resid(XF, y, beta, resid)
    kkt = _kkt_resid(XF, resid, beta, lam)
    return kkt, sweeps, kkt <= tol


@njit(cache=True)
def _chol(a):
    # in-place lower-triangular Cholesky; False when not numerically SPD
    n = a.shape[0]
    for j in range(n):
        s = a[j, j]
        for k in range(j):
            s -= a[j, k] * a[j, k]
        if s <= 0.0 or not np.isfinite(s):
            return False
        d = np.sqrt(s)
        a[j, j] = d
        for i in range(j + 1, n):
            t = a[i, j]
            for k in range(j):
                t -= a[i, k] * a[j, k]
            a[i, j] = t / d
    return True


@njit(cache=True)
def _chol_solve_vec(L, b):
    # solve L L' x = b in place
    n = L.shape[0]
    for i in range(n):
        t = b[i]
        for k in range(i):
            t -= L[i, k] * b[k]
        b[i] = t / L[i, i]
    for i in range(n - 1, -1, -1):
        t = b[i]
        for k in range(i + 1, n):
            t -= L[k, i] * b[k]
        b[i] = t / L[i, i]


@njit(cache=True)
def _rows_solve(L, B):
    # solve L L' x = B[i] for every row of B, in place
    for i in range(B.shape[0]):
        _chol_solve_vec(L, B[i])


@njit(parallel=True, cache=True)
def se_eval(G, diag, B0, A0, A1, A2, tau, theta, Beta, Grad, tol, max_sweeps,
            se_num, risk_num, supp, fail):
    """One state-evolution functional pass over replicates.

    Per replicate r the prox input is v = beta0 + tau * Sigma^{-1/2} z, fed
    through precomputed products: A0 = beta0 Sigma, A1 = z Sigma^{1/2},
    A2 = z Sigma^{-1/2} (rows per replicate), so c = Sigma v = A0 + tau A1
    and Sigma (eta - beta0) = grad + tau A1. Outputs per replicate:
    ||eta - beta0||^2_Sigma, ||eta - beta0||^2, |supp(eta)|.
    Beta/Grad are persistent warm-start workspaces.
    """
    R, p = B0.shape
    for r in prange(R):
        beta = Beta[r]
        grad = Grad[r]
        if theta <= 0.0:
            # prox is the identity
            sse = 0.0
            sr = 0.0
            ns = 0
            for k in range(p):
                vk = B0[r, k] + tau * A2[r, k]
                beta[k] = vk
                dk = tau * A2[r, k]
                sr += dk * dk
                sse += dk * (tau * A1[r, k])
                if vk != 0.0:
                    ns += 1
            se_num[r] = sse
            risk_num[r] = sr
            supp[r] = ns
            fail[r] = 0
            continue
        c = np.empty(p)
        for k in range(p):
            c[k] = A0[r, k] + tau * A1[r, k]
        kkt, sw, ok = cd_gram(G, diag, c, theta, beta, grad, tol, max_sweeps)
        if not ok:
            fail[r] = 1
            continue
        fail[r] = 0
        sse = 0.0
        sr = 0.0
        ns = 0
        for k in range(p):
            d = beta[k] - B0[r, k]
            sr += d * d
            sse += d * (grad[k] + tau * A1[r, k])
            if beta[k] != 0.0:
                ns += 1
        se_num[r] = sse
        risk_num[r] = sr
        supp[r] = ns


@njit(parallel=True, cache=True)
def _m_eval(Sig, U, NB, IDX, SGN, alphas, tol, max_sweeps, out_m, out_fail, out_nbar):
    """Phase-boundary quadratic form, all replicates x all alphas.

    Inputs per replicate r: U[r] = Sigma^{1/2} z; IDX[r] lists the support B
    (first NB[r] entries, sorted) then its complement (sorted); SGN[r, :NB[r]]
    are the signs on B. alphas must be ascending; the alpha loop runs
    descending so the reduced-lasso warm start tracks a growing active set.
    """
    R = U.shape[0]
    p = Sig.shape[0]
    n_alpha = alphas.shape[0]
    for rrep in prange(R):
        nb = NB[rrep]
        nc = p - nb
        idx = IDX[rrep]
        u = U[rrep]
        if nc == 0:
            # everything is signal: M = (u - a s)' Sigma^{-1} (u - a s) / p
            A = Sig.copy()
            if not _chol(A):
                for ai in range(n_alpha):
                    out_fail[rrep, ai] = 1
                continue
            d = np.empty(p)
            dd = np.empty(p)
            for ai in range(n_alpha):
                a = alphas[ai]
                for i in range(p):
                    d[i] = u[idx[i]] - a * SGN[rrep, i]
                    dd[i] = d[i]
                _chol_solve_vec(A, dd)
                q = 0.0
                for i in range(p):
                    q += d[i] * dd[i]
                out_m[rrep, ai] = q / p
                out_nbar[rrep, ai] = 0
            continue
        uB = np.empty(nb)
        sB = np.empty(nb)
        uC = np.empty(nc)
        for i in range(nb):
            uB[i] = u[idx[i]]
            sB[i] = SGN[rrep, i]
        for i in range(nc):
            uC[i] = u[idx[nb + i]]
        S = np.empty((nc, nc))
        for i in range(nc):
            gi = idx[nb + i]
            for j in range(nc):
                S[i, j] = Sig[gi, idx[nb + j]]
        c0 = uC.copy()
        c1 = np.zeros(nc)
        if nb > 0:
            SBB = np.empty((nb, nb))
            for i in range(nb):
                gi = idx[i]
                for j in range(nb):
                    SBB[i, j] = Sig[gi, idx[j]]
            SCB = np.empty((nc, nb))
            for i in range(nc):
                gi = idx[nb + i]
                for j in range(nb):
                    SCB[i, j] = Sig[gi, idx[j]]
            if not _chol(SBB):
                for ai in range(n_alpha):
                    out_fail[rrep, ai] = 1
                continue
            W = SCB.copy()
            _rows_solve(SBB, W)
            # Schur complement of the B block, symmetrized against drift
            WS = np.dot(W, SCB.T)
            for i in range(nc):
                S[i, i] -= WS[i, i]
                for j in range(i + 1, nc):
                    v = 0.5 * (WS[i, j] + WS[j, i])
                    S[i, j] -= v
                    S[j, i] -= v
            c0 -= np.dot(W, uB)
            c1 = np.dot(W, sB)
        diagS = np.empty(nc)
        for i in range(nc):
            diagS[i] = S[i, i]
        beta = np.zeros(nc)
        grad = np.empty(nc)
        c = np.empty(nc)
        dvec = np.empty(p)
        aidx = np.empty(p, dtype=np.int64)
        for ai in range(n_alpha - 1, -1, -1):
            a = alphas[ai]
            for i in range(nc):
                c[i] = c0[i] + a * c1[i]
            kkt, sw, ok = cd_gram(S, diagS, c, a, beta, grad, tol, max_sweeps)
            if not ok:
                out_fail[rrep, ai] = 1
                continue
            nbar = 0
            for i in range(nb):
                aidx[i] = idx[i]
                dvec[i] = uB[i] - a * sB[i]
            k2 = nb
            for i in range(nc):
                if beta[i] != 0.0:
                    nbar += 1
                    aidx[k2] = idx[nb + i]
                    s = 1.0 if beta[i] > 0.0 else -1.0
                    dvec[k2] = uC[i] - a * s
                    k2 += 1
            out_nbar[rrep, ai] = nbar
            na = nb + nbar
            if na == 0:
                out_m[rrep, ai] = 0.0
                continue
            SAA = np.empty((na, na))
            for i in range(na):
                gi = aidx[i]
                for j in range(na):
                    SAA[i, j] = Sig[gi, aidx[j]]
            if not _chol(SAA):
                out_fail[rrep, ai] = 1
                continue
            sol = dvec[:na].copy()
            _chol_solve_vec(SAA, sol)
            q = 0.0
            for i in range(na):
                q += dvec[i] * sol[i]
            out_m[rrep, ai] = q / p


def m_eval(Sig, U, NB, IDX, SGN, alphas, tol, max_sweeps, out_m, out_fail, out_nbar):
    """Wrapper for _m_eval pinning BLAS to one thread (see module docstring)."""
    with threadpool_limits(limits=1):
        _m_eval(Sig, U, NB, IDX, SGN, alphas, tol, max_sweeps, out_m, out_fail, out_nbar)
