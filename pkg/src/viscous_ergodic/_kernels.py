"""Compiled recurrences for symmetric tridiagonal and cyclic tridiagonal matrices.

Every matrix here has the form diag = 2k + v_i, off-diagonal = -k with k > 0,
i.e. k times a discrete Laplacian plus a potential.  For fine grids k is
many orders of magnitude larger than v, and forming 2k + v in floating point
would round the potential away.  The LDL^T pivots are therefore carried in
differential form d_i = k + e_i with

    e_0 = k + (v_0 - sigma),    e_i = (v_i - sigma) + k e_{i-1} / (k + e_{i-1}),

which never adds v to a large number.

Linear solves run in log space: for a positive definite M-matrix and a
positive right-hand side every term of the substitution is positive, so
log of the solution is accumulated with logaddexp and never underflows,
however small the tunnelling tail of the eigenvector gets.
"""

import math

import numpy as np
from numba import njit

NEG_INF = -np.inf
PIVMIN = 1e-300


@njit(cache=True)
def _lae(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def _next_e(e_prev, vi, k, sigma):
    d = k + e_prev
    if abs(d) < PIVMIN * k:
        d = -PIVMIN * k
    return (vi - sigma) + k * (e_prev / d)


@njit(cache=True)
def negcount_tridiag(v, k, sigma):
    """Number of eigenvalues of the tridiagonal matrix strictly below ``sigma``."""
    n = v.shape[0]
    e = k + (v[0] - sigma)
    count = 1 if k + e < 0.0 else 0
    for i in range(1, n):
        e = _next_e(e, v[i], k, sigma)
        if k + e < 0.0:
            count += 1
    return count


@njit(cache=True)
def negcount_cyclic(v, k, sigma):
    """Sturm count for the cyclic matrix via the Haynsworth inertia formula.

    The last node is split off; the count is the inertia of the leading
    tridiagonal block plus the sign of the scalar Schur complement.
    """
    n = v.shape[0]
    m = n - 1
    piv = np.empty(m)
    e = k + (v[0] - sigma)
    count = 0
    for i in range(m):
        if i > 0:
            e = _next_e(e, v[i], k, sigma)
        d = k + e
        if abs(d) < PIVMIN * k:
            d = -PIVMIN * k
        piv[i] = d
        if d < 0.0:
            count += 1
    # z = (T - sigma)^{-1} c, c = k (e_0 + e_{m-1}); off-diagonal of T is -k
    y = np.zeros(m)
    y[0] = k
    for i in range(1, m):
        y[i] = (k / piv[i - 1]) * y[i - 1]
    y[m - 1] += k
    z = np.empty(m)
    z[m - 1] = y[m - 1] / piv[m - 1]
    for i in range(m - 2, -1, -1):
        z[i] = (y[i] + k * z[i + 1]) / piv[i]
    s = (2.0 * k - k * (z[0] + z[m - 1])) + (v[m] - sigma)
    if s < 0.0:
        count += 1
    return count


@njit(cache=True)
def bisect_min(v, k, cyclic, lo, hi, tol, max_iter):
    """Bracket the smallest eigenvalue between ``lo`` and ``hi`` by bisection.

    Requires count(lo) == 0 and count(hi) >= 1.  Stops once the bracket is no
    wider than ``tol`` or when the midpoint no longer splits it.
    """
    it = 0
    while it < max_iter:
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if cyclic:
            c = negcount_cyclic(v, k, mid)
        else:
            c = negcount_tridiag(v, k, mid)
        if c >= 1:
            hi = mid
        else:
            lo = mid
        it += 1
    return lo, hi, it


@njit(cache=True)
def _log_factor(v, k, sigma, m, logpiv, logratio):
    """Pivots of the leading m x m block; logratio[i] = log(k / d_i)."""
    logk = math.log(k)
    e = k + (v[0] - sigma)
    for i in range(m):
        if i > 0:
            e = _next_e(e, v[i], k, sigma)
        if not k + e > 0.0:
            return False
        lp = math.log1p(e / k)
        logpiv[i] = logk + lp
        logratio[i] = -lp
    return True


@njit(cache=True)
def _log_subst(logpiv, logratio, logb, out):
    m = logpiv.shape[0]
    y = np.empty(m)
    y[0] = logb[0]
    for i in range(1, m):
        y[i] = _lae(logb[i], logratio[i - 1] + y[i - 1])
    out[m - 1] = y[m - 1] - logpiv[m - 1]
    for i in range(m - 2, -1, -1):
        out[i] = _lae(y[i] - logpiv[i], logratio[i] + out[i + 1])


@njit(cache=True)
def log_solve_tridiag(v, k, sigma, logb):
    """log of (T - sigma I)^{-1} b for positive b given as ``logb``.

    Returns (ok, logx); ok is False when T - sigma I is not positive definite.
    """
    n = v.shape[0]
    logpiv = np.empty(n)
    logratio = np.empty(n)
    out = np.empty(n)
    if not _log_factor(v, k, sigma, n, logpiv, logratio):
        return False, out
    _log_subst(logpiv, logratio, logb, out)
    return True, out


@njit(cache=True)
def log_solve_cyclic(v, k, sigma, logb):
    """Cyclic analogue of :func:`log_solve_tridiag` via a bordered solve.

    With the last node split off, x_T = T^{-1} b_T + T^{-1}|c| x_last and both
    terms are positive, so the bordering keeps the log-space recursion exact
    in sign.  The scalar Schur complement is the only subtraction.
    """
    n = v.shape[0]
    m = n - 1
    logpiv = np.empty(m)
    logratio = np.empty(m)
    out = np.empty(n)
    if not _log_factor(v, k, sigma, m, logpiv, logratio):
        return False, out
    logk = math.log(k)
    p = np.empty(m)
    _log_subst(logpiv, logratio, logb[:m], p)
    cvec = np.full(m, NEG_INF)
    cvec[0] = logk
    cvec[m - 1] = _lae(cvec[m - 1], logk)
    g = np.empty(m)
    _log_subst(logpiv, logratio, cvec, g)
    if m == 1:
        gsum = math.exp(g[0])
        lognum = _lae(logb[m], logk + p[0])
    else:
        gsum = math.exp(g[0]) + math.exp(g[m - 1])
        lognum = _lae(logb[m], logk + _lae(p[0], p[m - 1]))
    s = k * (2.0 - gsum) + (v[m] - sigma)
    if not s > 0.0:
        return False, out
    loglast = lognum - math.log(s)
    for i in range(m):
        out[i] = _lae(p[i], g[i] + loglast)
    out[m] = loglast
    return True, out


@njit(cache=True)
def _log_normalize(logx, logh):
    mx = logx[0]
    for i in range(logx.shape[0]):
        if logx[i] > mx:
            mx = logx[i]
    acc = 0.0
    for i in range(logx.shape[0]):
        acc += math.exp(2.0 * (logx[i] - mx))
    lognorm = mx + 0.5 * (math.log(acc) + logh)
    for i in range(logx.shape[0]):
        logx[i] -= lognorm


@njit(cache=True)
def log_inverse_iteration(v, k, cyclic, sigma, logh, logx0, tol, max_iter):
    """Shifted inverse iteration in log space, L2-normalized with weight h.

    Convergence is declared once the componentwise change of log(x) drops
    below ``tol * (1 + |log x|)``, so the exponentially small tail converges
    as tightly as the bulk.

    Returns (status, logx, iterations, last_change); status is 0 on
    convergence, 1 when max_iter is exhausted and 2 when the shift is not
    below the spectrum.
    """
    n = v.shape[0]
    logx = logx0.copy()
    _log_normalize(logx, logh)
    change = np.inf
    for it in range(1, max_iter + 1):
        if cyclic:
            ok, new = log_solve_cyclic(v, k, sigma, logx)
        else:
            ok, new = log_solve_tridiag(v, k, sigma, logx)
        if not ok:
            return 2, logx, it, change
        _log_normalize(new, logh)
        change = 0.0
        for i in range(n):
            if logx[i] == NEG_INF:
                change = np.inf
                continue
            c = abs(new[i] - logx[i]) / (1.0 + abs(new[i]))
            if c > change:
                change = c
        logx = new
        if change < tol:
            return 0, logx, it, change
    return 1, logx, max_iter, change
