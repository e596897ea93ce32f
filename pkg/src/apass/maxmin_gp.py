"""Max-min power allocation by successive geometric programming.

The max-min rate problem is rewritten as minimizing ``b`` subject to

    prod_n (interference-plus-noise / total-received-plus-noise)^(e_n) <= b

for every user, where ``e_n`` are slot exponents. The denominator posynomial
``zeta`` is condensed to a monomial by the weighted AM-GM inequality around
an anchor allocation, which turns each iteration into a geometric program.
That program is solved in the log domain (``q = log p``, ``beta = log b``)
with a primal-dual interior-point method.

Internally powers are normalized by the budget and gains by ``sigma2 /
p_total``, so every slot has unit budget and unit noise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls
from scipy.special import xlogy

from . import _gpkernel
from .linkmodel import PowerMatrix, rate_matrix

log = logging.getLogger(__name__)

LN2 = np.log(2.0)


class GpSolverError(RuntimeError):
    """Interior-point solve failed; carries the last iterate and residuals."""

    def __init__(self, message, iterate=None, dual_residual=None, gap=None):
        super().__init__(message)
        self.iterate = iterate
        self.dual_residual = dual_residual
        self.gap = gap


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances for the SCA loop and the inner GP solve.

    epsilon
        Stop when the relative Frobenius change of the allocation drops below this.
    inner_tol
        Duality-gap target of each GP solve, in units of ``log b``.
    p_floor
        Lower bound on every power as a fraction of the budget.
    truncate
        Powers below this fraction of the budget are reported as exactly zero.
    """

    epsilon: float = 1e-4
    max_sca_iters: int = 50
    inner_tol: float = 1e-9
    p_floor: float = 1e-12
    truncate: float = 1e-9
    max_newton_iters: int = 200

    def __post_init__(self):
        if self.epsilon <= 0 or self.inner_tol <= 0:
            raise ValueError("epsilon and inner_tol must be positive")
        if self.p_floor < 0 or self.truncate < self.p_floor:
            raise ValueError("need 0 <= p_floor <= truncate")


@dataclass(frozen=True)
class GpInstance:
    """One condensed geometric program.

    g, sigma2
        Gains and noise powers of the optimized slots, shape (K, M).
    slot_weights
        Objective weight of each optimized slot in the (weighted) rate.
    anchor
        Expansion point of the AM-GM condensation, strictly positive.
    fixed_rate
        Per-user weighted rate already earned in committed slots.
    horizon
        Scale ``e_n = horizon * slot_weights[n]`` of the slot exponents.
    """

    g: np.ndarray
    sigma2: np.ndarray
    p_total: float
    slot_weights: np.ndarray
    anchor: np.ndarray
    fixed_rate: np.ndarray = None
    horizon: float = None

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.g, dtype=float))
        K, M = g.shape
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "sigma2", np.broadcast_to(np.asarray(self.sigma2, dtype=float), (K, M)))
        object.__setattr__(self, "slot_weights", np.broadcast_to(np.asarray(self.slot_weights, dtype=float), (M,)))
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=float).reshape(K, M))
        if self.fixed_rate is None:
            object.__setattr__(self, "fixed_rate", np.zeros(K))
        if self.horizon is None:
            object.__setattr__(self, "horizon", float(M))
        if np.any(g <= 0) or np.any(self.sigma2 <= 0):
            raise ValueError("gains and noise powers must be positive")
        if np.any(self.slot_weights <= 0):
            raise ValueError("slot weights must be positive")
        if np.any(self.anchor <= 0):
            raise ValueError("anchor must be strictly positive (see SolverConfig.p_floor)")

    @property
    def exponents(self) -> np.ndarray:
        return self.horizon * self.slot_weights


# -- posynomial pieces, in the original (unnormalized) power domain ----------

def _arr(P):
    return P.p if isinstance(P, PowerMatrix) else np.asarray(P, dtype=float)


def _s2(sigma2, k, n):
    s = np.asarray(sigma2, dtype=float)
    return float(s[k, n]) if s.ndim == 2 else float(s)


def zeta(P, g, sigma2, k, n) -> float:
    """Total received power plus noise for user k in slot n."""
    P = _arr(P)
    return float(g[k, n] * P[:, n].sum() + _s2(sigma2, k, n))


def agm_weights(anchor, g, sigma2, k, n) -> np.ndarray:
    """Share of each monomial term of ``zeta`` at the anchor (last entry: noise)."""
    A = _arr(anchor)
    if np.any(A[:, n] <= 0):
        raise ValueError("anchor must be strictly positive to form AM-GM weights")
    terms = np.append(g[k, n] * A[:, n], _s2(sigma2, k, n))
    return terms / terms.sum()


def condense_zeta(P, weights, g, sigma2, k, n) -> float:
    """Monomial lower bound prod_m (u_m / w_m)^w_m of ``zeta``."""
    P = _arr(P)
    u = np.append(g[k, n] * P[:, n], _s2(sigma2, k, n))
    w = np.asarray(weights, dtype=float)
    with np.errstate(divide="ignore"):
        logs = np.where(w > 0, w * (np.log(u) - np.log(np.where(w > 0, w, 1.0))), 0.0)
    return float(np.exp(logs.sum()))


def _interference(P, g, sigma2, k, n):
    return g[k, n] * (P[:, n].sum() - P[k, n]) + _s2(sigma2, k, n)


def isnr_hat(P, anchor, g, sigma2, k, slot_weights=None) -> float:
    """Condensed ISNR of user k: prod_n (interference / condensed zeta)^(N w_n)."""
    P, A = _arr(P), _arr(anchor)
    N = P.shape[1]
    c = np.full(N, 1.0 / N) if slot_weights is None else np.asarray(slot_weights, dtype=float)
    out = 1.0
    for n in range(N):
        w = agm_weights(A, g, sigma2, k, n)
        out *= (_interference(P, g, sigma2, k, n) / condense_zeta(P, w, g, sigma2, k, n)) ** (N * c[n])
    return out


def exact_isnr(P, g, sigma2, k, slot_weights=None) -> float:
    P = _arr(P)
    N = P.shape[1]
    c = np.full(N, 1.0 / N) if slot_weights is None else np.asarray(slot_weights, dtype=float)
    out = 1.0
    for n in range(N):
        out *= (_interference(P, g, sigma2, k, n) / zeta(P, g, sigma2, k, n)) ** (N * c[n])
    return out


# -- the log-domain program ---------------------------------------------------

def _lse_rows(q):
    m = q.max(axis=1)
    return m + np.log(np.exp(q - m[:, None]).sum(axis=1))


@dataclass
class _Eval:
    f: np.ndarray        # all constraint values: users, budgets, bounds
    JF: np.ndarray       # (K, d) user-constraint Jacobian
    s: np.ndarray        # (M, K, K) interference softmax weights
    pi: np.ndarray       # (M, K) budget softmax weights


class LogDomainGp:
    """Condensed GP in the variables ``x = [q (slot-major, M*K), beta]``.

    Constraints ``f(x) <= 0`` are ordered as K user constraints, M budget
    constraints, then M*K power floors.
    """

    def __init__(self, inst: GpInstance, p_floor: float = 1e-12):
        K, M = inst.g.shape
        self.K, self.M = K, M
        self.d = M * K + 1
        self.G = (inst.g * inst.p_total / inst.sigma2).T          # (M, K)
        self.e = inst.exponents.copy()                              # (M,)
        fixed = np.zeros(K) if inst.fixed_rate is None else inst.fixed_rate
        self.offset = np.ascontiguousarray(-inst.horizon * LN2 * np.broadcast_to(fixed, (K,)), dtype=float)
        # A zero floor still needs a finite barrier; exp(-700) is near the smallest normal double.
        self.qmin = np.log(p_floor) if p_floor > 0 else -700.0
        self.offdiag = np.ones((K, K)) - np.eye(K)
        self.set_anchor(inst.anchor / inst.p_total)

    def set_anchor(self, anchor_norm):
        """AM-GM weights W[n, k, j] and constants at a normalized (K, M) anchor."""
        A = np.asarray(anchor_norm, dtype=float).T                 # (M, K)
        u = self.G[:, :, None] * A[:, None, :]                      # (M, K, K)
        z = u.sum(axis=2) + 1.0
        self.W = u / z[:, :, None]
        w_noise = 1.0 / z
        # log zeta_tilde = sum_j W (log G + q_j) - sum_m W_m log W_m
        self.const = (self.W.sum(axis=2) * np.log(self.G)
                      - xlogy(self.W, self.W).sum(axis=2) - xlogy(w_noise, w_noise))

    def user_values(self, q):
        p = np.exp(q)
        gam = self.G * (p @ self.offdiag) + 1.0
        lin = np.einsum("nkj,nj->nk", self.W, q)
        F = (self.e[:, None] * (np.log(gam) - lin - self.const)).sum(axis=0) + self.offset
        return F, p, gam

    def evaluate(self, x) -> _Eval:
        M, K = self.M, self.K
        q = x[:-1].reshape(M, K)
        F, p, gam = self.user_values(q)
        s = self.G[:, :, None] * p[:, None, :] / gam[:, :, None]
        s[:, np.arange(K), np.arange(K)] = 0.0
        JF = np.empty((K, self.d))
        JF[:, :-1] = (self.e[:, None, None] * (s - self.W)).transpose(1, 0, 2).reshape(K, M * K)
        JF[:, -1] = -1.0
        h = _lse_rows(q)
        pi = np.exp(q - h[:, None])
        f = np.concatenate([F - x[-1], h, (self.qmin - q).ravel()])
        return _Eval(f, JF, s, pi)

    def constraints(self, x):
        """Values and Jacobian of the user and budget constraints (no floors)."""
        ev = self.evaluate(x)
        Jh = np.zeros((self.M, self.d))
        for n in range(self.M):
            Jh[n, n * self.K:(n + 1) * self.K] = ev.pi[n]
        return ev.f[:self.K + self.M], np.vstack([ev.JF, Jh])

    def _dual_residual(self, ev, lam):
        K, M = self.K, self.M
        lu, lh, lb = lam[:K], lam[K:K + M], lam[K + M:]
        r = ev.JF.T @ lu
        r[:-1] += (lh[:, None] * ev.pi).ravel() - lb
        r[-1] += 1.0
        return r

    def _hessian(self, ev, lam):
        K, M, d = self.K, self.M, self.d
        f = ev.f
        lu, lh, lb = lam[:K], lam[K:K + M], lam[K + M:]
        cu = lu[None, :] * self.e[:, None]                          # (M, K)
        blocks = -np.einsum("nk,nkj,nki->nji", cu, ev.s, ev.s)
        diag = np.einsum("nk,nkj->nj", cu, ev.s) + lh[:, None] * ev.pi
        wh = lh / -f[K:K + M]
        blocks += np.einsum("n,nj,ni->nji", wh - lh, ev.pi, ev.pi)
        diag += (lb / -f[K + M:]).reshape(M, K)
        idx = np.arange(K)
        blocks[:, idx, idx] += diag

        H = np.zeros((d, d))
        for n in range(M):
            sl = slice(n * K, (n + 1) * K)
            H[sl, sl] = blocks[n]
        wu = lu / -f[:K]
        H += (ev.JF.T * wu) @ ev.JF
        return H

    def _jac_vec(self, ev, dx):
        """Df @ dx for all constraints."""
        K, M = self.K, self.M
        dq = dx[:-1].reshape(M, K)
        return np.concatenate([ev.JF @ dx, (ev.pi * dq).sum(axis=1), -dx[:-1]])

    def start_point(self, anchor_norm):
        """Strictly feasible x0 near the anchor."""
        A = np.asarray(anchor_norm, dtype=float).T
        q = np.log(np.maximum(A, np.exp(self.qmin + 1.0)))
        # A well-centred start keeps the initial multipliers moderate.
        colmax = _lse_rows(q) - np.log(0.9)
        q = q - np.maximum(colmax, 0.0)[:, None]
        F, _, _ = self.user_values(q)
        return np.append(q.ravel(), F.max() + 1.0)

    def solve(self, x0, tol=1e-9, max_iter=200, mu=2.0, feas_tol=1e-8):
        """Primal-dual interior-point iterations from a strictly feasible ``x0``.

        ``mu`` divides the duality gap to set each centring target; small
        values keep Newton steps short enough for the exponentials.
        Returns ``(x, lam, iterations, gap)``.
        """
        x0 = np.ascontiguousarray(x0, dtype=float)
        try:
            x, lam, it, gap, rd, status = _gpkernel.pdip(
                self.G, self.e, self.W, self.const, self.offset, float(self.qmin), x0,
                float(tol), float(feas_tol), int(max_iter), float(mu))
        except np.linalg.LinAlgError as exc:
            raise GpSolverError(f"Newton system not positive definite: {exc}", iterate=x0) from None
        if status == _gpkernel.INFEASIBLE_START:
            raise GpSolverError("start point is not strictly feasible", iterate=x0)
        if status == _gpkernel.STALLED:
            raise GpSolverError("line search stalled", iterate=x, dual_residual=rd, gap=gap)
        if status == _gpkernel.MAX_ITER:
            raise GpSolverError(f"no convergence in {max_iter} Newton iterations", iterate=x,
                                dual_residual=rd, gap=gap)
        return x, lam, int(it), float(gap)


def _solve_normalized(prog: LogDomainGp, anchor_norm, cfg: SolverConfig):
    """Re-anchor ``prog`` and solve; returns (normalized powers (K, M), beta, Newton iterations)."""
    prog.set_anchor(anchor_norm)
    x, _, iters, gap = prog.solve(prog.start_point(anchor_norm), tol=cfg.inner_tol,
                                  max_iter=cfg.max_newton_iters)
    p = np.exp(x[:-1].reshape(prog.M, prog.K)).T
    # Interior iterates satisfy the budget strictly; guard against rounding.
    p /= np.maximum(p.sum(axis=0) / (1.0 - 1e-15), 1.0)
    return p, float(x[-1]), iters


def solve_gp(instance: GpInstance, cfg: SolverConfig = SolverConfig()) -> PowerMatrix:
    """Solve one condensed GP and return the untruncated allocation."""
    prog = LogDomainGp(instance, cfg.p_floor)
    p, _, _ = _solve_normalized(prog, instance.anchor / instance.p_total, cfg)
    return PowerMatrix(p * instance.p_total, instance.p_total)


# -- successive convex approximation -----------------------------------------

def weighted_rates(p, g, sigma2, slot_weights, fixed_rate=None) -> np.ndarray:
    """Per-user objective sum_n w_n R_{k,n} + fixed_k."""
    r = rate_matrix(p, g, sigma2) @ np.asarray(slot_weights, dtype=float)
    return r if fixed_rate is None else r + fixed_rate


def truncate_powers(p, p_total, cfg: SolverConfig) -> np.ndarray:
    return np.where(p < cfg.truncate * p_total, 0.0, p)


@dataclass
class ScaResult:
    power: PowerMatrix              # truncated for reporting
    raw: np.ndarray = field(repr=False)  # untruncated final iterate
    objective: float = 0.0          # weighted min-rate of ``power``
    min_rate: float = 0.0           # same as objective for the genie problem
    iterations: int = 0
    converged: bool = False
    b_history: list = field(default_factory=list)
    trace: list = field(default_factory=list)  # (iteration, b, min_rate, delta)
    newton_iters: int = 0


def sca_maxmin(g, sigma2, p_total, slot_weights=None, cfg: SolverConfig = SolverConfig(),
               init=None, fixed_rate=None, horizon=None) -> ScaResult:
    """Max-min allocation over all slots of ``g`` by successive GP condensation.

    Starts from equal power unless ``init`` is given. With default weights the
    objective is the horizon-average rate; ``fixed_rate`` adds committed history.
    """
    g = np.atleast_2d(np.asarray(g, dtype=float))
    K, M = g.shape
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (K, M))
    w = np.full(M, 1.0 / M) if slot_weights is None else np.asarray(slot_weights, dtype=float)
    horizon = float(M) if horizon is None else float(horizon)
    fixed = np.zeros(K) if fixed_rate is None else np.asarray(fixed_rate, dtype=float)

    floor = cfg.p_floor * p_total
    P = np.full((K, M), p_total / K) if init is None else np.maximum(np.asarray(init, dtype=float), floor)
    prog = LogDomainGp(GpInstance(g, sigma2, p_total, w, P, fixed, horizon), cfg.p_floor)
    offdiag = np.ones((K, K)) - np.eye(K)

    def min_rate(p):
        r = np.log2(1 + g * p / (g * (offdiag @ p) + sigma2)) @ w + fixed
        return float(r.min())

    r0 = min_rate(P)
    b_hist = [float(2.0 ** (-horizon * r0))]
    trace = [(0, b_hist[0], r0, float("nan"))]
    converged = False
    newton = 0
    it = 0
    for it in range(1, cfg.max_sca_iters + 1):
        p_norm, _, n_it = _solve_normalized(prog, np.maximum(P, floor) / p_total, cfg)
        newton += n_it
        P_new = p_norm * p_total
        delta = float(np.linalg.norm(P_new - P) / np.linalg.norm(P))
        P = P_new
        r = min_rate(P)
        b_hist.append(float(2.0 ** (-horizon * r)))
        trace.append((it, b_hist[-1], r, delta))
        log.debug("sca iter %d b=%.12g delta=%.3g", it, b_hist[-1], delta)
        if delta < cfg.epsilon:
            converged = True
            break

    p_rep = truncate_powers(P, p_total, cfg)
    obj = float(weighted_rates(p_rep, g, sigma2, w, fixed).min())
    return ScaResult(PowerMatrix(p_rep, p_total), P, obj, obj, it, converged, b_hist, trace, newton)


# -- optimality diagnostics -------------------------------------------------

@dataclass
class KktReport:
    stationarity: float            # norm of the Lagrangian gradient in log domain
    complementarity: float         # norm of multiplier-weighted slacks
    residual: float                # combined norm of the two
    budget_slack: np.ndarray       # log(P_total) - log(sum_k p) per slot, >= 0
    user_gap: np.ndarray           # beta - F_k per user, >= 0; 0 for binding users
    user_multipliers: np.ndarray
    budget_multipliers: np.ndarray


def kkt_residual(P, g, sigma2, p_total, slot_weights=None, cfg: SolverConfig = SolverConfig(),
                 fixed_rate=None, horizon=None) -> KktReport:
    """First-order optimality residual of the exact (uncondensed) log-domain problem.

    Multipliers are fitted by non-negative least squares on stationarity plus
    complementary slackness, with user multipliers summing to one.
    """
    P = _arr(P)
    g = np.atleast_2d(np.asarray(g, dtype=float))
    K, M = g.shape
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (K, M))
    w = np.full(M, 1.0 / M) if slot_weights is None else np.asarray(slot_weights, dtype=float)
    horizon = float(M) if horizon is None else float(horizon)
    fixed = np.zeros(K) if fixed_rate is None else np.asarray(fixed_rate, dtype=float)
    e = horizon * w

    Gn = (g * p_total / sigma2).T                                 # (M, K)
    p = np.maximum(P / p_total, cfg.p_floor).T                    # (M, K)
    gam = Gn * (p @ (np.ones((K, K)) - np.eye(K))) + 1.0
    zet = Gn * p.sum(axis=1, keepdims=True) + 1.0
    F = (e[:, None] * (np.log(gam) - np.log(zet))).sum(axis=0) - horizon * LN2 * fixed
    beta = F.max()

    s = Gn[:, :, None] * p[:, None, :] / gam[:, :, None]
    s[:, np.arange(K), np.arange(K)] = 0.0
    t = Gn[:, :, None] * p[:, None, :] / zet[:, :, None]
    JF = (e[:, None, None] * (s - t)).transpose(1, 0, 2).reshape(K, M * K)
    pi = p / p.sum(axis=1, keepdims=True)
    Jh = np.zeros((M, M * K))
    for n in range(M):
        Jh[n, n * K:(n + 1) * K] = pi[n]

    user_gap = beta - F
    budget_slack = -np.log(p.sum(axis=1))
    # Unknowns [lambda (K), mu (M)], all >= 0.
    A = np.vstack([
        np.hstack([JF.T, Jh.T]),
        np.hstack([np.diag(user_gap), np.zeros((K, M))]),
        np.hstack([np.zeros((M, K)), np.diag(budget_slack)]),
        np.hstack([np.ones((1, K)), np.zeros((1, M))]),
    ])
    rhs = np.zeros(A.shape[0])
    rhs[-1] = 1.0
    mult, _ = nnls(A, rhs, maxiter=50 * A.shape[1])
    res = A @ mult - rhs
    n_st = M * K
    stat = float(np.linalg.norm(res[:n_st]))
    comp = float(np.linalg.norm(res[n_st:n_st + K + M]))
    return KktReport(stat, comp, float(np.linalg.norm(res)), budget_slack, user_gap, mult[:K], mult[K:])
