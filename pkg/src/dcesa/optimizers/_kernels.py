"""Numba kernels for per-draw low-rank information updates.

A choice set with coded rows ``x_1..x_J`` contributes ``D' A D`` to the
information matrix, where ``D`` holds the differences ``x_j - x_J`` (j < J) and
``A = diag(q) - q q'`` with ``q`` the first J-1 choice probabilities. Swapping
one set is a rank-2(J-1) update ``M + U' C U``; its determinant ratio is
``det(I + C U M^{-1} U')``, evaluated with the Cholesky factor of ``M``.
"""

import math

import numpy as np
from numba import njit

# determinant ratios below this are re-checked with a direct Cholesky
RATIO_FLOOR = 1e-8
PIVOT_RTOL = 1e-12
# fast-math without the no-inf/no-nan assumptions: -inf marks singular draws
FASTMATH = {"nsz", "arcp", "contract", "afn", "reassoc"}


@njit(cache=True)
def _set_weights(Dm, beta, u, A):
    # A <- diag(q) - q q' for the set whose difference rows are Dm
    r = Dm.shape[0]
    m = Dm.shape[1]
    umax = 0.0
    for j in range(r):
        s = 0.0
        for a in range(m):
            s += Dm[j, a] * beta[a]
        u[j] = s
        if s > umax:
            umax = s
    u[r] = 0.0
    tot = 0.0
    for j in range(r + 1):
        u[j] = math.exp(u[j] - umax)
        tot += u[j]
    for i in range(r):
        qi = u[i] / tot
        for j in range(r):
            A[i, j] = -qi * u[j] / tot
        A[i, i] += qi


@njit(cache=True)
def _fill_C(Dold, Dnew, beta, u, A, C):
    # C = blockdiag(-A_old, A_new)
    r = Dold.shape[0]
    C[:, :] = 0.0
    _set_weights(Dold, beta, u, A)
    for i in range(r):
        for j in range(r):
            C[i, j] = -A[i, j]
    _set_weights(Dnew, beta, u, A)
    for i in range(r):
        for j in range(r):
            C[r + i, r + j] = A[i, j]


@njit(cache=True)
def _small_det(K):
    # LU with partial pivoting, K is overwritten
    n = K.shape[0]
    if n == 2:
        return K[0, 0] * K[1, 1] - K[0, 1] * K[1, 0]
    det = 1.0
    for c in range(n):
        p = c
        best = abs(K[c, c])
        for i in range(c + 1, n):
            if abs(K[i, c]) > best:
                best = abs(K[i, c])
                p = i
        if p != c:
            det = -det
            for j in range(n):
                tmp = K[c, j]
                K[c, j] = K[p, j]
                K[p, j] = tmp
        d = K[c, c]
        det *= d
        if d == 0.0:
            return 0.0
        for i in range(c + 1, n):
            f = K[i, c] / d
            for j in range(c + 1, n):
                K[i, j] -= f * K[c, j]
    return det


@njit(cache=True)
def _chol_inplace(Mw, L):
    # L <- chol(Mw); returns log|Mw| or -inf when a pivot is <= PIVOT_RTOL * trace/m
    m = Mw.shape[0]
    tr = 0.0
    for a in range(m):
        tr += Mw[a, a]
    if not tr > 0.0:
        return -np.inf
    thresh = PIVOT_RTOL * tr / m
    total = 0.0
    for j in range(m):
        s = Mw[j, j]
        for t in range(j):
            s -= L[j, t] * L[j, t]
        if not s > thresh:
            return -np.inf
        total += math.log(s)
        ljj = math.sqrt(s)
        L[j, j] = ljj
        for i in range(j + 1, m):
            v = Mw[i, j]
            for t in range(j):
                v -= L[i, t] * L[j, t]
            L[i, j] = v / ljj
        for i in range(j):
            L[i, j] = 0.0
    return total


@njit(cache=True)
def _add_update(M_d, U, C, out):
    # out = M_d + U' C U
    R = U.shape[0]
    m = U.shape[1]
    for a in range(m):
        for b in range(a, m):
            s = M_d[a, b]
            for i in range(R):
                ua = U[i, a]
                if ua == 0.0:
                    continue
                for j in range(R):
                    s += ua * C[i, j] * U[j, b]
            out[a, b] = s
            out[b, a] = s


@njit(cache=True)
def propose_chol(L, logdet, betas, Dold, Dnew, out):
    """Candidate per-draw log-determinants from the current Cholesky factors.

    ``out[d]`` is NaN where the draw is singular now or the ratio is too small
    to trust; the caller handles those draws with :func:`propose_direct`.
    """
    n_draws = betas.shape[0]
    r = Dold.shape[0]
    m = Dold.shape[1]
    R = 2 * r
    U = np.empty((R, m))
    U[:r] = Dold
    U[r:] = Dnew
    C = np.empty((R, R))
    A = np.empty((r, r))
    u = np.empty(r + 1)
    Y = np.empty((R, m))
    G = np.empty((R, R))
    K = np.empty((R, R))
    for d in range(n_draws):
        if logdet[d] == -np.inf:
            out[d] = np.nan
            continue
        _fill_C(Dold, Dnew, betas[d], u, A, C)
        Ld = L[d]
        # Y rows: L^{-1} U_i'
        for i in range(R):
            for a in range(m):
                v = U[i, a]
                for t in range(a):
                    v -= Ld[a, t] * Y[i, t]
                Y[i, a] = v / Ld[a, a]
        for i in range(R):
            for j in range(i, R):
                s = 0.0
                for a in range(m):
                    s += Y[i, a] * Y[j, a]
                G[i, j] = s
                G[j, i] = s
        for i in range(R):
            for j in range(R):
                s = 0.0
                for t in range(R):
                    s += C[i, t] * G[t, j]
                K[i, j] = s
            K[i, i] += 1.0
        ratio = _small_det(K)
        if ratio > RATIO_FLOOR:
            out[d] = logdet[d] + math.log(ratio)
        else:
            out[d] = np.nan


@njit(cache=True)
def propose_direct(M, betas, Dold, Dnew, idx, out):
    """Candidate log-determinants by explicit update and Cholesky, for draws ``idx``."""
    r = Dold.shape[0]
    m = Dold.shape[1]
    R = 2 * r
    U = np.empty((R, m))
    U[:r] = Dold
    U[r:] = Dnew
    C = np.empty((R, R))
    A = np.empty((r, r))
    u = np.empty(r + 1)
    Mw = np.empty((m, m))
    Lw = np.empty((m, m))
    for t in range(idx.shape[0]):
        d = idx[t]
        _fill_C(Dold, Dnew, betas[d], u, A, C)
        _add_update(M[d], U, C, Mw)
        out[d] = _chol_inplace(Mw, Lw)


@njit(cache=True)
def commit_update(M, L, logdet, betas, Dold, Dnew):
    """Apply the swap to every draw's ``M`` and refactor."""
    n_draws = betas.shape[0]
    r = Dold.shape[0]
    m = Dold.shape[1]
    R = 2 * r
    U = np.empty((R, m))
    U[:r] = Dold
    U[r:] = Dnew
    C = np.empty((R, R))
    A = np.empty((r, r))
    u = np.empty(r + 1)
    Mw = np.empty((m, m))
    for d in range(n_draws):
        _fill_C(Dold, Dnew, betas[d], u, A, C)
        _add_update(M[d], U, C, Mw)
        M[d] = Mw
        logdet[d] = _chol_inplace(M[d], L[d])


@njit(cache=True)
def full_information(Dall, betas, M, L, logdet):
    """Rebuild ``M``, its Cholesky factors and log-determinants from scratch.

    ``Dall`` is ``(S, J-1, m)``: per choice set the differences to its last row.
    """
    n_draws = betas.shape[0]
    S = Dall.shape[0]
    r = Dall.shape[1]
    m = Dall.shape[2]
    A = np.empty((r, r))
    u = np.empty(r + 1)
    for d in range(n_draws):
        Md = M[d]
        Md[:, :] = 0.0
        for s in range(S):
            Ds = Dall[s]
            _set_weights(Ds, betas[d], u, A)
            for i in range(r):
                for j in range(r):
                    w = A[i, j]
                    for a in range(m):
                        va = w * Ds[i, a]
                        if va == 0.0:
                            continue
                        for b in range(m):
                            Md[a, b] += va * Ds[j, b]
        for a in range(m):
            for b in range(a + 1, m):
                v = 0.5 * (Md[a, b] + Md[b, a])
                Md[a, b] = v
                Md[b, a] = v
        logdet[d] = _chol_inplace(Md, L[d])


@njit(cache=True, fastmath=FASTMATH)
def _pair_weight(d, beta):
    # p1 * p2 for a two-alternative set with difference row d
    s = 0.0
    for a in range(d.shape[0]):
        s += d[a] * beta[a]
    if s > 0.0:
        e = math.exp(-s)
    else:
        e = math.exp(s)
    return e / ((1.0 + e) * (1.0 + e))


@njit(cache=True, fastmath=FASTMATH)
def propose_pair(L, logdet, betas, d_old, d_new, out):
    """Two-alternative special case of :func:`propose_chol`; returns the number of NaN draws.

    Up to the first column where ``d_new`` and ``d_old`` differ the two
    triangular solves coincide, so only one is done there.
    """
    n_draws = betas.shape[0]
    m = d_old.shape[0]
    first = m
    for a in range(m):
        if d_old[a] != d_new[a]:
            first = a
            break
    y_o = np.empty(m)
    y_n = np.empty(m)
    n_bad = 0
    for d in range(n_draws):
        if logdet[d] == -np.inf:
            out[d] = np.nan
            n_bad += 1
            continue
        Ld = L[d]
        beta = betas[d]
        a_o = _pair_weight(d_old, beta)
        a_n = _pair_weight(d_new, beta)
        g_oo = 0.0
        g_on = 0.0
        g_nn = 0.0
        for a in range(m):
            vo = d_old[a]
            vn = d_new[a]
            if a < first:
                for t in range(a):
                    vo -= Ld[a, t] * y_o[t]
                vo /= Ld[a, a]
                vn = vo
            else:
                for t in range(a):
                    lt = Ld[a, t]
                    vo -= lt * y_o[t]
                    vn -= lt * y_n[t]
                vo /= Ld[a, a]
                vn /= Ld[a, a]
            y_o[a] = vo
            y_n[a] = vn
            g_oo += vo * vo
            g_on += vo * vn
            g_nn += vn * vn
        ratio = (1.0 - a_o * g_oo) * (1.0 + a_n * g_nn) + a_o * a_n * g_on * g_on
        if ratio > RATIO_FLOOR:
            out[d] = logdet[d] + math.log(ratio)
        else:
            out[d] = np.nan
            n_bad += 1
    return n_bad


@njit(cache=True, fastmath=FASTMATH)
def commit_pair(M, L, logdet, betas, d_old, d_new):
    """Two-alternative special case of :func:`commit_update`."""
    n_draws = betas.shape[0]
    m = d_old.shape[0]
    for d in range(n_draws):
        beta = betas[d]
        a_o = _pair_weight(d_old, beta)
        a_n = _pair_weight(d_new, beta)
        Md = M[d]
        for a in range(m):
            ao = a_o * d_old[a]
            an = a_n * d_new[a]
            for b in range(a, m):
                v = Md[a, b] - ao * d_old[b] + an * d_new[b]
                Md[a, b] = v
                Md[b, a] = v
        logdet[d] = _chol_inplace(Md, L[d])
