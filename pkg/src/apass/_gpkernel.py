"""Compiled primal-dual interior-point kernel for the condensed GP.

Variables ``x = [q (slot-major, M*K), beta]``. Constraint order: K user
constraints, M per-slot budgets, M*K power floors. The Newton system is
dense, (M*K + 1) square, solved by Cholesky.
"""

import numpy as np
from numba import njit

CONVERGED = 0
STALLED_ACCEPTED = 1
STALLED = 2
MAX_ITER = 3
INFEASIBLE_START = 4

# Near-active user constraints drive cond(H) toward 1e19; past that point
# Newton steps shrink without converging. Iterates within this factor of
# the tolerances are accepted when the line search or the budget runs out.
ACCEPT_FACTOR = 1e3


@njit(cache=True)
def evaluate(G, e, W, const, offset, qmin, x, f, JF, s, pi):
    """Fill constraint values ``f``, user Jacobian ``JF``, ratios ``s`` and softmax ``pi``.

    Returns False if any exponential overflowed.
    """
    M, K = G.shape
    d = M * K + 1
    beta = x[d - 1]
    for k in range(K):
        f[k] = offset[k] - beta
        for c in range(d - 1):
            JF[k, c] = 0.0
        JF[k, d - 1] = -1.0
    p = np.empty(K)
    for n in range(M):
        base = n * K
        qmax = x[base]
        for j in range(1, K):
            if x[base + j] > qmax:
                qmax = x[base + j]
        if qmax > 700.0:
            return False
        tot = 0.0
        for j in range(K):
            p[j] = np.exp(x[base + j])
            pi[n, j] = np.exp(x[base + j] - qmax)
            tot += pi[n, j]
        for j in range(K):
            pi[n, j] /= tot
        f[K + n] = qmax + np.log(tot)
        for k in range(K):
            # Sum the interferers directly: ptot - p[k] cancels when k dominates.
            other = 0.0
            for j in range(K):
                if j != k:
                    other += p[j]
            gam = G[n, k] * other + 1.0
            lin = 0.0
            for j in range(K):
                lin += W[n, k, j] * x[base + j]
            f[k] += e[n] * (np.log(gam) - lin - const[n, k])
            for j in range(K):
                s[n, k, j] = 0.0 if j == k else G[n, k] * p[j] / gam
                JF[k, base + j] = e[n] * (s[n, k, j] - W[n, k, j])
        for j in range(K):
            f[K + M + base + j] = qmin - x[base + j]
    return True


@njit(cache=True)
def dual_residual(JF, pi, lam, K, M, r):
    d = M * K + 1
    for c in range(d):
        acc = 0.0
        for k in range(K):
            acc += JF[k, c] * lam[k]
        r[c] = acc
    for n in range(M):
        for j in range(K):
            c = n * K + j
            r[c] += lam[K + n] * pi[n, j] - lam[K + M + c]
    r[d - 1] += 1.0


@njit(cache=True)
def hessian(e, f, JF, s, pi, lam, K, M, H):
    d = M * K + 1
    H[:, :] = 0.0
    for n in range(M):
        base = n * K
        lh = lam[K + n]
        wh = lh / -f[K + n]
        for k in range(K):
            cu = lam[k] * e[n]
            if cu == 0.0:
                continue
            for i in range(K):
                si = s[n, k, i]
                if si == 0.0:
                    continue
                H[base + i, base + i] += cu * si
                for j in range(K):
                    H[base + i, base + j] -= cu * si * s[n, k, j]
        for i in range(K):
            H[base + i, base + i] += lh * pi[n, i] + lam[K + M + base + i] / -f[K + M + base + i]
            for j in range(K):
                H[base + i, base + j] += (wh - lh) * pi[n, i] * pi[n, j]
    for k in range(K):
        wu = lam[k] / -f[k]
        for a in range(d):
            va = wu * JF[k, a]
            if va == 0.0:
                continue
            for b in range(d):
                H[a, b] += va * JF[k, b]


@njit(cache=True)
def jac_vec(JF, pi, dx, K, M, out):
    d = M * K + 1
    for k in range(K):
        acc = 0.0
        for c in range(d):
            acc += JF[k, c] * dx[c]
        out[k] = acc
    for n in range(M):
        acc = 0.0
        for j in range(K):
            acc += pi[n, j] * dx[n * K + j]
        out[K + n] = acc
    for c in range(M * K):
        out[K + M + c] = -dx[c]


@njit(cache=True)
def cho_solve(L, b, out):
    d = b.shape[0]
    for i in range(d):
        acc = b[i]
        for j in range(i):
            acc -= L[i, j] * out[j]
        out[i] = acc / L[i, i]
    for i in range(d - 1, -1, -1):
        acc = out[i]
        for j in range(i + 1, d):
            acc -= L[j, i] * out[j]
        out[i] = acc / L[i, i]


@njit(cache=True)
def _norm2(a):
    acc = 0.0
    for v in a:
        acc += v * v
    return acc


@njit(cache=True)
def pdip(G, e, W, const, offset, qmin, x0, tol, feas_tol, max_iter, mu):
    """Primal-dual interior point from a strictly feasible ``x0``.

    The centring target is ``gap / (mu * m)``; steps backtrack on the
    residual norm. Returns ``(x, lam, iterations, gap, dual_norm, status)``.
    """
    M, K = G.shape
    d = M * K + 1
    m = K + M + M * K
    x = x0.copy()
    f = np.empty(m)
    JF = np.empty((K, d))
    s = np.empty((M, K, K))
    pi = np.empty((M, K))
    fn = np.empty(m)
    JFn = np.empty((K, d))
    sn = np.empty((M, K, K))
    pin = np.empty((M, K))
    rd = np.empty(d)
    rdn = np.empty(d)
    H = np.empty((d, d))
    rhs = np.empty(d)
    dx = np.empty(d)
    df = np.empty(m)
    v = np.empty(m)
    dlam = np.empty(m)
    rc = np.empty(m)
    lam_new = np.empty(m)
    xn = np.empty(d)

    lam = np.empty(m)
    ok = evaluate(G, e, W, const, offset, qmin, x, f, JF, s, pi)
    for i in range(m):
        if f[i] >= 0.0:
            ok = False
    if not ok:
        return x, lam, 0, np.inf, np.inf, INFEASIBLE_START
    for i in range(m):
        lam[i] = 1.0 / -f[i]

    gap = 0.0
    rdnorm = 0.0
    for it in range(max_iter + 1):
        gap = 0.0
        for i in range(m):
            gap -= f[i] * lam[i]
        dual_residual(JF, pi, lam, K, M, rd)
        rdnorm = np.sqrt(_norm2(rd))
        if gap <= tol and rdnorm <= feas_tol:
            return x, lam, it, gap, rdnorm, CONVERGED
        if it == max_iter:
            break
        target = gap / (mu * m)
        for i in range(m):
            rc[i] = -lam[i] * f[i] - target
            v[i] = rc[i] / f[i]
        # Reduced system H dx = -rd - Df^T v
        for c in range(d):
            acc = -rd[c]
            for k in range(K):
                acc -= JF[k, c] * v[k]
            rhs[c] = acc
        for n in range(M):
            for j in range(K):
                c = n * K + j
                rhs[c] -= v[K + n] * pi[n, j] - v[K + M + c]
        hessian(e, f, JF, s, pi, lam, K, M, H)
        L = np.linalg.cholesky(H)
        cho_solve(L, rhs, dx)
        jac_vec(JF, pi, dx, K, M, df)
        step = 1.0
        for i in range(m):
            dlam[i] = v[i] - lam[i] / f[i] * df[i]
            if dlam[i] < 0.0:
                cap = -0.99 * lam[i] / dlam[i]
                if cap < step:
                    step = cap
        rnorm = np.sqrt(_norm2(rd) + _norm2(rc))
        while True:
            for c in range(d):
                xn[c] = x[c] + step * dx[c]
            ok = evaluate(G, e, W, const, offset, qmin, xn, fn, JFn, sn, pin)
            if ok:
                for i in range(m):
                    if fn[i] >= 0.0:
                        ok = False
                        break
            if ok:
                acc = 0.0
                for i in range(m):
                    lam_new[i] = lam[i] + step * dlam[i]
                    r = -lam_new[i] * fn[i] - target
                    acc += r * r
                dual_residual(JFn, pin, lam_new, K, M, rdn)
                if np.sqrt(acc + _norm2(rdn)) <= (1.0 - 0.01 * step) * rnorm:
                    break
            step *= 0.5
            if step < 1e-14:
                if gap <= ACCEPT_FACTOR * tol and rdnorm <= ACCEPT_FACTOR * feas_tol:
                    return x, lam, it, gap, rdnorm, STALLED_ACCEPTED
                return x, lam, it, gap, rdnorm, STALLED
        x, xn = xn, x
        f, fn = fn, f
        JF, JFn = JFn, JF
        s, sn = sn, s
        pi, pin = pin, pi
        lam, lam_new = lam_new, lam
    if gap <= ACCEPT_FACTOR * tol and rdnorm <= ACCEPT_FACTOR * feas_tol:
        return x, lam, max_iter, gap, rdnorm, STALLED_ACCEPTED
    return x, lam, max_iter, gap, rdnorm, MAX_ITER
