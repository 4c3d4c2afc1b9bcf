"""Regression Monte Carlo for the contract-value BSDE.

Two drivers are supported:

``DriftKind.NEW``
    the BVE-coupled driver, which depends on the path integral ``I_t`` of the
    discounted running cash flows and on the martingale ``M1 + M2``. It is
    solved by a Picard loop that alternates backward sweeps with re-estimation
    of ``(I, M1 + M2)`` from the latest value surface.
``DriftKind.BFP``
    the conditional-independence baseline, a Markov driver in ``(t, S_t)``.

The backward step is explicit in the driver::

    Y_k = Y_{k+1} - drift(t_k, S_k, E[Y_{k+1} | state_k], Z_k) * dt_k

with pathwise ``Y`` (so ``v0`` is a plain sample mean with an honest
standard error) and regressed conditional expectations inside the driver.
"""

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations_with_replacement

import numpy as np

from .bve import sample as sample_bve
from .cashflows import StateSnapshot, funding_A, pos, theta_tilde
from .cox import (cumulate, default_times_batch, k_from_rates,
                  survival_from_cumulative)
from .errors import ConvergenceError, DomainError
from .paths import cumulative_rate


class DriftKind(str, Enum):
    NEW = "new_bve"
    BFP = "bfp_baseline"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"new": cls.NEW, "new_bve": cls.NEW, "bfp": cls.BFP, "bfp_baseline": cls.BFP}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise DomainError(f"unknown drift kind {value!r}") from None


# --------------------------------------------------------------------------
# drivers
# --------------------------------------------------------------------------

def running_source(terms, intensity, market, snap):
    """``A + theta_tilde + b LGD_I lam2 ((1 - alpha) v)^+``: the discounted-flow integrand."""
    alpha = terms.alpha_coll(snap.t)
    return (funding_A(terms, market, snap) + theta_tilde(terms, intensity, snap)
            + terms.b * terms.lgd_i * snap.lam2 * pos((1.0 - alpha) * snap.v))


def k_of(intensity, snap):
    return k_from_rates(snap.lam1, snap.lam2, snap.big_lambda1, snap.big_lambda2,
                        intensity.sign_mode)


def drift_new_terms(terms, intensity, market, snap, accumulator_I, m_sum, growth):
    """The BVE driver split into ``(local, k_integral, k_martingale)`` parts.

    ``local`` is ``(r + lam) v - source / G``; the other two are the terms
    proportional to ``K`` that the baseline lacks.
    """
    g = snap.g
    if np.any(np.asarray(g) <= 0):
        raise DomainError("survival process must be positive")
    r = market.r(snap.t)
    source = running_source(terms, intensity, market, snap)
    k = k_of(intensity, snap)
    local = (r + snap.lam) * snap.v - source / g
    k_integral = -growth * accumulator_I * k / g
    k_martingale = -growth * m_sum * k / g
    return local, k_integral, k_martingale


def drift_new(terms, intensity, market, snap, accumulator_I, m_sum, growth):
    """Drift of ``dV`` under the BVE-coupled dynamics.

    ``growth`` is ``exp(int_0^t (r + lam))``, ``accumulator_I`` the running
    integral of discounted flows and ``m_sum`` the value of ``M1 + M2``.
    """
    local, k_int, k_mart = drift_new_terms(terms, intensity, market, snap,
                                           accumulator_I, m_sum, growth)
    return local + k_int + k_mart


def drift_bfp(terms, intensity, market, snap):
    """Drift of ``dV`` under the conditional-independence baseline."""
    t = snap.t
    alpha = terms.alpha_coll(t)
    v = snap.v
    ind = (np.asarray(v) > 0).astype(float)
    th = theta_tilde(terms, intensity, snap)
    coef = ((1.0 - alpha) * (terms.b * terms.lgd_i * ind * snap.lam2 - terms.f(t))
            - snap.lam - terms.c(t) * alpha)
    h = terms.hedge(t, snap.x, v, snap.z)
    return -(market.pi(t, snap.x) + th + coef * v - (market.r(t) - terms.h(t)) * h)


def credit_curves(intensity, market, grid, lam1, lam2, big_lambda1, big_lambda2, kind):
    """Survival ``g``, first-to-default intensity ``lam`` and ``growth`` on a grid.

    The BVE driver uses the coupled survival and ``(lam1 + lam2) / g``; the
    baseline uses the product survival and ``lam1 + lam2``.
    """
    kind = DriftKind.parse(kind)
    if kind is DriftKind.NEW:
        g = survival_from_cumulative(big_lambda1, big_lambda2, intensity.alpha_bar)
        lam = (lam1 + lam2) / g
    else:
        g = np.exp(-(big_lambda1 + big_lambda2))
        lam = lam1 + lam2
    r = np.broadcast_to(market.r(grid), np.shape(grid)).astype(float)
    growth = np.exp(cumulate(grid, r + lam))
    return g, lam, growth


# --------------------------------------------------------------------------
# regression
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RegressionBasis:
    """Total-degree polynomials in standardised state variables (cross terms included)."""

    degree: int = 3
    family: str = "polynomial"

    def __post_init__(self):
        if self.degree < 1:
            raise DomainError("regression degree must be >= 1")
        if self.family != "polynomial":
            raise DomainError("only the polynomial family is available")

    @staticmethod
    def _standardise(cols, n):
        out = []
        for c in cols:
            c = np.broadcast_to(np.asarray(c, dtype=float), (n,))
            sd = c.std()
            if sd > 1e-12 * (1.0 + abs(c.mean())):
                out.append((c - c.mean()) / sd)
        return out

    @staticmethod
    def _design(z, degree):
        n = z[0].shape[0] if z else None
        cols = [np.ones(n)]
        for d in range(1, degree + 1):
            for combo in combinations_with_replacement(range(len(z)), d):
                col = z[combo[0]].copy()
                for j in combo[1:]:
                    col *= z[j]
                cols.append(col)
        return np.column_stack(cols)

    def fit(self, y, cols):
        """Least-squares projection of ``y`` (``(n,)`` or ``(n, k)``) on the basis.

        Returns ``(fitted, info)`` with ``info = {"degree", "cond"}``. A
        rank-deficient design triggers a warning and a lower degree.
        """
        y = np.asarray(y, dtype=float)
        n = y.shape[0]
        if np.all(y == y[:1]):
            # a constant target is reproduced exactly
            return np.broadcast_to(y[:1], y.shape).copy(), {"degree": 0, "cond": 1.0}
        z = self._standardise(cols, n)
        if not z:
            mean = y.mean(axis=0)
            return np.broadcast_to(mean, y.shape).copy(), {"degree": 0, "cond": 1.0}
        degree = self.degree
        while True:
            X = self._design(z, degree)
            coef, _, rank, sv = np.linalg.lstsq(X, y, rcond=None)
            if rank == X.shape[1] or degree == 1:
                break
            warnings.warn(f"regression design rank {rank} < {X.shape[1]}; "
                          f"reducing degree {degree} -> {degree - 1}", RuntimeWarning)
            degree -= 1
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
        return X @ coef, {"degree": degree, "cond": cond}


# --------------------------------------------------------------------------
# path context
# --------------------------------------------------------------------------

class _PathContext:
    """Per-bundle credit curves and snapshot construction for one driver."""

    def __init__(self, bundle, terms, intensity, market, kind):
        if abs(bundle.grid[-1] - terms.T) > 1e-12 * max(1.0, terms.T):
            raise DomainError("path grid must end at the contract maturity")
        self.bundle, self.terms, self.intensity, self.market = bundle, terms, intensity, market
        self.kind = DriftKind.parse(kind)
        b = bundle
        self.g, self.lam, self.growth = credit_curves(
            intensity, market, b.grid, b.lam1, b.lam2, b.big_lambda1, b.big_lambda2, self.kind)
        self.dt = np.diff(b.grid)

    @staticmethod
    def _col(a, k):
        return a[:, k] if a.shape[0] > 1 else a[0, k]

    def snapshot(self, k, v, z):
        b = self.bundle
        c = self._col
        return StateSnapshot(t=float(b.grid[k]), x=b.s[:, k], v=v, z=z, g=c(self.g, k),
                             lam1=c(b.lam1, k), lam2=c(b.lam2, k), lam=c(self.lam, k),
                             big_lambda1=c(b.big_lambda1, k), big_lambda2=c(b.big_lambda2, k))

    def drift(self, k, v, z, acc_k, m_k):
        snap = self.snapshot(k, v, z)
        if self.kind is DriftKind.NEW:
            return drift_new(self.terms, self.intensity, self.market, snap,
                             acc_k, m_k, self._col(self.growth, k))
        return drift_bfp(self.terms, self.intensity, self.market, snap)

    def source(self, k, v, z):
        snap = self.snapshot(k, v, z)
        return running_source(self.terms, self.intensity, self.market, snap)


# --------------------------------------------------------------------------
# M1 + M2
# --------------------------------------------------------------------------

@dataclass
class MSumEstimate:
    m_sum: np.ndarray
    accumulator: np.ndarray
    step_drift: np.ndarray     # mean increment of m_sum per step
    step_stderr: np.ndarray

    @property
    def max_drift_z(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(self.step_stderr > 0, np.abs(self.step_drift) / self.step_stderr,
                         np.where(self.step_drift == 0, 0.0, np.inf))
        return float(z.max()) if z.size else 0.0


def _estimate_m_sum(ctx, v, z, basis):
    b = ctx.bundle
    n, m1 = b.s.shape
    M = m1 - 1
    growth = np.broadcast_to(ctx.growth, (n, m1)) if ctx.growth.shape[0] > 1 else None
    acc = np.zeros((n, m1))
    flows = np.empty((n, M))
    for k in range(M):
        gk = growth[:, k] if growth is not None else ctx.growth[0, k]
        flows[:, k] = ctx.source(k, v[:, k], z[:, k]) / gk * ctx.dt[k]
        acc[:, k + 1] = acc[:, k] + flows[:, k]
    gM = growth[:, M] if growth is not None else ctx.growth[0, M]
    tail = ctx.market.phi(b.s[:, M]) / gM
    m_sum = np.empty((n, m1))
    m_sum[:, M] = acc[:, M] + tail
    for k in range(M - 1, -1, -1):
        tail = tail + flows[:, k]
        fitted, _ = basis.fit(tail, [b.s[:, k], acc[:, k]])
        m_sum[:, k] = acc[:, k] + fitted
    inc = np.diff(m_sum, axis=1)
    drift = inc.mean(axis=0)
    se = inc.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(M)
    return MSumEstimate(m_sum, acc, drift, se)


def estimate_m_sum(bundle, terms, intensity, market, current_v, current_z, basis=None):
    """Estimate ``M1 + M2`` along paths from a candidate value/volatility surface.

    ``current_v`` and ``current_z`` are ``(n, M+1)`` per-path values. The
    estimate is ``I_t`` plus a regression of the remaining discounted flows
    and payoff on ``(S_t, I_t)``; a per-step martingale-drift check is attached.
    """
    ctx = _PathContext(bundle, terms, intensity, market, DriftKind.NEW)
    return _estimate_m_sum(ctx, np.asarray(current_v, dtype=float),
                           np.asarray(current_z, dtype=float), basis or RegressionBasis())


# --------------------------------------------------------------------------
# backward solver
# --------------------------------------------------------------------------

@dataclass
class BackwardSolution:
    kind: DriftKind
    v0: float
    stderr: float
    v: np.ndarray
    z: np.ndarray
    accumulator: np.ndarray = None
    m_sum: np.ndarray = None
    picard_trace: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def picard_iters(self):
        return len(self.picard_trace)

    def summary(self):
        return {
            "drift": self.kind.value,
            "v0": self.v0,
            "stderr": self.stderr,
            "picard_iters": self.picard_iters,
            "diagnostics": self.diagnostics,
        }

    def profile(self, grid):
        """Rows ``(t, mean V, mean Z)``."""
        return np.column_stack([grid, self.v.mean(axis=0), self.z.mean(axis=0)])


def _sweep(ctx, basis, acc, m_sum):
    b = ctx.bundle
    n, m1 = b.s.shape
    M = m1 - 1
    Y = np.array(ctx.market.phi(b.s[:, M]), dtype=float)
    Y = np.broadcast_to(Y, (n,)).copy()
    v = np.empty((n, m1))
    z = np.empty((n, m1))
    v[:, M] = Y
    conds, degrees = [], []
    for k in range(M - 1, -1, -1):
        cols = [b.s[:, k]] if acc is None else [b.s[:, k], acc[:, k]]
        target = np.column_stack([Y, v[:, k + 1] * b.dw[:, k] / ctx.dt[k]])
        fitted, info = basis.fit(target, cols)
        conds.append(info["cond"])
        degrees.append(info["degree"])
        cont, zk = fitted[:, 0], fitted[:, 1]
        if acc is None:
            d = ctx.drift(k, cont, zk, None, None)
        else:
            d = ctx.drift(k, cont, zk, acc[:, k], m_sum[:, k])
        Y -= d * ctx.dt[k]
        v[:, k] = cont - d * ctx.dt[k]
        z[:, k] = zk
    z[:, M] = z[:, M - 1]
    return v, z, Y, {"max_cond": float(np.max(conds)), "min_degree": int(np.min(degrees))}


def solve_bsde_mc(bundle, terms, intensity, market, drift, basis=None, picard_iters=20, tol=1e-4):
    """Backward induction on a path bundle.

    For the BVE driver the Picard loop stops once successive ``v0`` iterates
    differ by less than ``tol * |v0|``; failure to do so within
    ``picard_iters`` sweeps raises :class:`ConvergenceError` with the trace.
    """
    basis = basis or RegressionBasis()
    ctx = _PathContext(bundle, terms, intensity, market, drift)
    n = bundle.n_paths

    def finish(v, z, Y, info, acc=None, m_sum=None, trace=(), extra=None):
        diag = dict(info)
        diag["floored_states"] = bundle.floored
        diag.update(extra or {})
        se = float(Y.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return BackwardSolution(ctx.kind, float(Y.mean()), se, v, z, acc, m_sum,
                                list(trace) or [float(Y.mean())], diag)

    if ctx.kind is DriftKind.BFP:
        v, z, Y, info = _sweep(ctx, basis, None, None)
        return finish(v, z, Y, info)

    acc = np.zeros_like(bundle.s)
    m_sum = np.zeros_like(bundle.s)
    trace = []
    for it in range(int(picard_iters)):
        v, z, Y, info = _sweep(ctx, basis, acc, m_sum)
        v0 = float(Y.mean())
        trace.append(v0)
        if it > 0 and abs(trace[-1] - trace[-2]) < tol * max(abs(v0), 1e-8):
            est = _estimate_m_sum(ctx, v, z, basis)
            extra = {"m_sum_max_drift_z": est.max_drift_z,
                     "picard_deltas": [abs(a - b) for a, b in zip(trace[1:], trace[:-1])]}
            return finish(v, z, Y, info, acc, m_sum, trace, extra)
        est = _estimate_m_sum(ctx, v, z, basis)
        acc, m_sum = est.accumulator, est.m_sum
    raise ConvergenceError(f"Picard loop did not converge in {picard_iters} iterations", trace)


# --------------------------------------------------------------------------
# filtering identities
# --------------------------------------------------------------------------

@dataclass
class IdentityReport:
    """Two-sided Monte Carlo check; ``rhs`` and ``z_score`` are keyed by intensity candidate."""

    name: str
    lhs: float
    lhs_stderr: float
    rhs: dict
    rhs_stderr: dict
    z_score: dict
    n: int

    def passed(self, candidate="reference", k=3.0):
        return self.z_score[candidate] < k

    def as_dict(self):
        return {"name": self.name, "lhs": self.lhs, "lhs_stderr": self.lhs_stderr,
                "rhs": self.rhs, "rhs_stderr": self.rhs_stderr, "z_score": self.z_score, "n": self.n}


def _mean_se(a):
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def _z(lhs, lse, rhs, rse):
    comb = math.hypot(lse, rse)
    if comb == 0:
        return 0.0 if lhs == rhs else math.inf
    return abs(lhs - rhs) / comb


def _identity_setup(bundle, intensity, market, seed, zero_rate):
    grid = bundle.grid
    n = bundle.n_paths
    z = sample_bve(intensity.bve, seed, n, stream="diagnostics")
    scen = default_times_batch(bundle.hazards, z)
    r_cum = np.zeros(len(grid)) if zero_rate else cumulative_rate(market, grid)
    L1, L2 = bundle.big_lambda1, bundle.big_lambda2
    g = survival_from_cumulative(L1, L2, intensity.alpha_bar)
    cum_lambda = {
        "reference": L1 + L2 + intensity.alpha_bar * np.maximum(L1, L2),
        "ratio": cumulate(grid, (bundle.lam1 + bundle.lam2) / g),
    }
    return scen, r_cum, cum_lambda


def lando_identity_check(bundle, intensity, market, X_fn, seed=0, zero_rate=False):
    """Compare ``E[D(0,T) X 1{tau > T}]`` with ``E[X exp(-int_0^T (r + lam))]`` at ``t = 0``.

    ``X_fn`` maps terminal prices to payoffs. With ``zero_rate`` the discount
    is dropped on both sides. The right-hand side is reported for the hazard
    of ``-log G`` (``reference``) and for ``(lambda1 + lambda2) / G`` (``ratio``).
    """
    scen, r_cum, cum_lambda = _identity_setup(bundle, intensity, market, seed, zero_rate)
    T = bundle.grid[-1]
    X = np.broadcast_to(np.asarray(X_fn(bundle.s[:, -1]), dtype=float), (bundle.n_paths,))
    lhs, lse = _mean_se(np.exp(-r_cum[-1]) * X * (scen.tau > T))
    rhs, rse, zs = {}, {}, {}
    for name, cum in cum_lambda.items():
        disc = np.exp(-(r_cum[-1] + cum[:, -1]))
        rhs[name], rse[name] = _mean_se(np.broadcast_to(X * disc, X.shape))
        zs[name] = _z(lhs, lse, rhs[name], rse[name])
    return IdentityReport("lando" if not zero_rate else "lando_zero_rate", lhs, lse, rhs, rse, zs,
                          bundle.n_paths)


def continuous_payout_check(bundle, intensity, market, g_fn, seed=0):
    """Compare discounted payout streams ``int g(S_s) 1{tau > s} D(0, s) ds`` on both sides.

    Integrals are left-endpoint sums on the bundle grid.
    """
    scen, r_cum, cum_lambda = _identity_setup(bundle, intensity, market, seed, False)
    grid = bundle.grid
    dt = np.diff(grid)
    gx = np.broadcast_to(np.asarray(g_fn(bundle.s[:, :-1]), dtype=float), (bundle.n_paths, len(dt)))
    alive = scen.tau[:, None] > grid[None, :-1]
    lhs, lse = _mean_se(np.sum(gx * alive * np.exp(-r_cum[:-1]) * dt, axis=1))
    rhs, rse, zs = {}, {}, {}
    for name, cum in cum_lambda.items():
        disc = np.exp(-(r_cum[None, :-1] + cum[:, :-1]))
        rhs[name], rse[name] = _mean_se(np.sum(gx * disc * dt, axis=1))
        zs[name] = _z(lhs, lse, rhs[name], rse[name])
    return IdentityReport("continuous_payout", lhs, lse, rhs, rse, zs, bundle.n_paths)

