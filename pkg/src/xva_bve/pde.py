"""Finite-difference solver for the semilinear pricing PDE

    u_t + 1/2 sigma(x, t)^2 u_xx + r(t) x u_x = drift(t, x, u, sigma u_x),   u(T, x) = phi(x)

where ``drift`` is the drift of ``dV`` (so the usual generator is its
negative).

The baseline driver is Markov in ``(t, x)``. The BVE driver also depends on
the running integral ``I`` of discounted cash flows and on ``M1 + M2``, so it
is solved on an augmented ``(x, I)`` grid with a Picard loop: each iteration
freezes the previous surface to define the ``I`` velocity and solves an
auxiliary linear equation for ``w = E[remaining flows + discounted payoff]``,
giving ``M1 + M2 = I + w``.

Discretisation: theta-scheme in time on a uniform ``x`` grid, central
differences, linear-extrapolation boundaries (``u_xx = 0``), Rannacher
start-up, the nonlinear driver iterated to a fixed point within each step,
and first-order upwind transport in ``I`` in characteristic form.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .bsde import DriftKind, credit_curves, drift_bfp, drift_new, running_source
from .cashflows import StateSnapshot
from .cox import cumulate
from .errors import ConvergenceError, DomainError, ModelError
from .paths import simulate_paths, uniform_grid


@dataclass(frozen=True)
class PdeGrid:
    x_min: float
    x_max: float
    n_x: int = 400
    n_t: int = 400
    theta: float = 0.5
    n_i: int = 50
    i_min: Optional[float] = None
    i_max: Optional[float] = None
    rannacher: int = 2
    fixed_point_tol: float = 1e-10
    fixed_point_max: int = 50
    picard_tol: float = 1e-4
    picard_max: int = 20
    pilot_paths: int = 4000
    pilot_steps: int = 50
    align_s0: bool = True

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise DomainError("x_min must be below x_max")
        if self.n_x < 3:
            raise DomainError("n_x must be >= 3")
        if self.n_t < 1 or self.n_i < 1:
            raise DomainError("n_t and n_i must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise DomainError("theta must lie in [0, 1]")


@dataclass
class ValueSurface:
    """``u`` on ``(t, x, I)``; the ``I`` axis has length 1 for Markov drivers."""

    t: np.ndarray
    x: np.ndarray
    i: np.ndarray
    u: np.ndarray
    v0: float = float("nan")
    picard_trace: list = field(default_factory=list)
    grid_report: dict = field(default_factory=dict)

    @property
    def du_dx(self):
        return np.gradient(self.u, self.x, axis=1)

    def _check(self, t, x, i):
        if not (self.t[0] <= t <= self.t[-1] and self.x[0] <= x <= self.x[-1]):
            raise DomainError(f"({t}, {x}) outside the grid hull")
        if len(self.i) > 1 and not self.i[0] <= i <= self.i[-1]:
            raise DomainError(f"I={i} outside the grid hull")

    def _interp(self, arr, t, x, i):
        self._check(t, x, i)
        kt = min(np.searchsorted(self.t, t, side="right") - 1, len(self.t) - 2)
        wt = (t - self.t[kt]) / (self.t[kt + 1] - self.t[kt])
        out = 0.0
        for kk, wk in ((kt, 1 - wt), (kt + 1, wt)):
            if wk == 0:
                continue
            layer = arr[kk]
            if len(self.i) > 1:
                col = np.array([np.interp(i, self.i, row) for row in layer])
            else:
                col = layer[:, 0]
            out += wk * np.interp(x, self.x, col)
        return float(out)

    def value(self, t, x, i=0.0):
        return self._interp(self.u, t, x, i)

    def write_csv(self, path, every=1):
        """Long-format dump ``t,x,I,u`` (every ``every``-th time level)."""
        tt, xx, ii = np.meshgrid(self.t[::every], self.x, self.i, indexing="ij")
        table = np.column_stack([tt.ravel(), xx.ravel(), ii.ravel(), self.u[::every].ravel()])
        np.savetxt(path, table, delimiter=",", header="t,x,I,u", comments="", fmt="%.17g")


def z_from_surface(surface, market, t, x, i=0.0):
    """``sigma(x, t) * du/dx`` interpolated off-node."""
    return market.sigma(x, t) * surface._interp(surface.du_dx, t, x, i)


# --------------------------------------------------------------------------
# spatial operator
# --------------------------------------------------------------------------

class _XOperator:
    def __init__(self, x, market):
        self.x = x
        self.dx = x[1] - x[0]
        self.market = market

    def coeffs(self, t):
        x, dx = self.x, self.dx
        sig = np.broadcast_to(self.market.sigma(x, t), x.shape)
        r = float(self.market.r(t))
        diff = 0.5 * sig ** 2 / dx ** 2
        conv = r * x / (2 * dx)
        return diff - conv, -2 * diff, diff + conv

    def apply(self, u, t):
        lo, di, up = self.coeffs(t)
        out = np.zeros_like(u)
        out[1:-1] = (lo[1:-1, None] * u[:-2] + di[1:-1, None] * u[1:-1] + up[1:-1, None] * u[2:])
        return out

    def matrix(self, t, dt, theta):
        lo, di, up = self.coeffs(t)
        n = len(self.x)
        ab = np.zeros((5, n))
        ab[3, :-1] = -theta * dt * lo[1:]
        ab[2, :] = 1.0 - theta * dt * di
        ab[1, 1:] = -theta * dt * up[:-1]
        # linear extrapolation rows: u0 - 2 u1 + u2 = 0 and mirror at the top
        ab[2, 0], ab[1, 1], ab[0, 2] = 1.0, -2.0, 1.0
        ab[4, n - 3], ab[3, n - 2], ab[2, n - 1] = 1.0, -2.0, 1.0
        return ab

    def max_explicit_dt(self, t, theta):
        _, di, _ = self.coeffs(t)
        rate = np.max(-di[1:-1])
        if theta >= 0.5 or rate == 0:
            return math.inf
        return 1.0 / ((1.0 - 2.0 * theta) * rate)


def _shift_I(U, a, i_grid, dt):
    """``U`` evaluated at ``I + a dt`` (linear in ``I``, extrapolating at the edges)."""
    if len(i_grid) == 1:
        return U
    di = i_grid[1] - i_grid[0]
    pos = (i_grid[None, :] + a * dt - i_grid[0]) / di
    idx = np.clip(np.floor(pos).astype(int), 0, len(i_grid) - 2)
    w = pos - idx
    lo = np.take_along_axis(U, idx, axis=1)
    hi = np.take_along_axis(U, idx + 1, axis=1)
    return lo * (1 - w) + hi * w


def _bilinear(x_grid, i_grid, U, xq, iq):
    """Scatter evaluation of ``U[x, I]``; flat outside ``x`` range, clamped in ``I``."""
    xq = np.clip(xq, x_grid[0], x_grid[-1])
    kx = np.clip(np.searchsorted(x_grid, xq, side="right") - 1, 0, len(x_grid) - 2)
    wx = (xq - x_grid[kx]) / (x_grid[kx + 1] - x_grid[kx])
    if len(i_grid) == 1:
        return U[kx, 0] * (1 - wx) + U[kx + 1, 0] * wx
    iq = np.clip(iq, i_grid[0], i_grid[-1])
    ki = np.clip(np.searchsorted(i_grid, iq, side="right") - 1, 0, len(i_grid) - 2)
    wi = (iq - i_grid[ki]) / (i_grid[ki + 1] - i_grid[ki])
    return ((U[kx, ki] * (1 - wi) + U[kx, ki + 1] * wi) * (1 - wx)
            + (U[kx + 1, ki] * (1 - wi) + U[kx + 1, ki + 1] * wi) * wx)


# --------------------------------------------------------------------------
# solver
# --------------------------------------------------------------------------

class _Problem:
    """Grids, deterministic credit curves and driver evaluation for one solve."""

    def __init__(self, market, terms, intensity, kind, grid):
        if intensity.state_dependent:
            raise ModelError("the PDE solver needs intensities that do not depend on the asset price")
        s0 = market.s0
        if not grid.x_min < s0 < grid.x_max:
            raise DomainError("x_min < s0 < x_max is required")
        x_min, x_max = grid.x_min, grid.x_max
        dx = (x_max - x_min) / (grid.n_x - 1)
        if grid.align_s0:
            j = round((s0 - x_min) / dx)
            x_min = s0 - j * dx
            x_max = x_min + (grid.n_x - 1) * dx
        self.x = x_min + dx * np.arange(grid.n_x)
        self.T = terms.T
        self.t = np.linspace(0.0, terms.T, grid.n_t + 1)
        self.market, self.terms, self.intensity, self.grid = market, terms, intensity, grid
        self.kind = DriftKind.parse(kind)
        self.op = _XOperator(self.x, market)
        self.fixed_point_iters = 0
        # credit curves on a half-step grid so Rannacher midpoints are nodes
        fine = np.linspace(0.0, terms.T, 2 * grid.n_t + 1)
        ones = np.ones_like(fine)
        l1 = np.broadcast_to(intensity.lambda1(fine, ones), fine.shape).astype(float)
        l2 = np.broadcast_to(intensity.lambda2(fine, ones), fine.shape).astype(float)
        L1, L2 = cumulate(fine, l1)[0], cumulate(fine, l2)[0]
        self._fine = fine
        self._curves = {"lam1": l1, "lam2": l2, "L1": L1, "L2": L2}
        for kind_ in (DriftKind.NEW, DriftKind.BFP):
            g, lam, growth = credit_curves(intensity, market, fine, l1, l2, L1, L2, kind_)
            self._curves[kind_] = tuple(np.atleast_2d(a)[0] for a in (g, lam, growth))

    def curve(self, t, kind):
        g, lam, growth = self._curves[kind]
        f = self._fine
        c = self._curves
        ev = lambda a: float(np.interp(t, f, a))  # noqa: E731
        return ev(g), ev(lam), ev(growth), ev(c["lam1"]), ev(c["lam2"]), ev(c["L1"]), ev(c["L2"])

    def snapshot(self, t, u, kind, x=None, z=None):
        """Snapshot on the grid, or at scattered ``x`` when ``x`` and ``z`` are given."""
        g, lam, growth, l1, l2, L1, L2 = self.curve(t, kind)
        if x is None:
            x = self.x[:, None]
            z = np.asarray(self.market.sigma(self.x, t))[:, None] * np.gradient(u, self.x, axis=0)
        snap = StateSnapshot(t=float(t), x=x, v=u, z=z, g=g, lam1=l1, lam2=l2,
                             lam=lam, big_lambda1=L1, big_lambda2=L2)
        return snap, growth

    def generator(self, t, u, i_grid=None, m_sum=None):
        """Minus the drift of ``dV`` (the PDE's zeroth-order term)."""
        snap, growth = self.snapshot(t, u, self.kind)
        if self.kind is DriftKind.BFP:
            return -drift_bfp(self.terms, self.intensity, self.market, snap)
        return -drift_new(self.terms, self.intensity, self.market, snap,
                          i_grid[None, :], m_sum, growth)

    def velocity(self, t, u):
        """``dI/dt`` implied by a frozen surface ``u`` at time ``t``."""
        snap, growth = self.snapshot(t, u, DriftKind.NEW)
        return running_source(self.terms, self.intensity, self.market, snap) / growth

    def step(self, u_next, t_next, t_now, theta, gen, gen_next, adv_next):
        """One theta-step from ``t_next`` back to ``t_now``.

        ``gen(u)`` evaluates the zeroth-order term at ``t_now``; ``gen_next``
        and ``adv_next`` are its value and the ``I``-transport increment at
        ``t_next``.
        """
        dt = t_next - t_now
        if theta < 0.5:
            limit = self.op.max_explicit_dt(t_now, theta)
            if dt > limit:
                raise DomainError(f"explicit step dt={dt:.3g} exceeds stability limit {limit:.3g}")
        ab = self.op.matrix(t_now, dt, theta)
        explicit = u_next + adv_next
        if theta < 1.0:
            explicit = explicit + (1 - theta) * dt * (self.op.apply(u_next, t_next) + gen_next)
        u = u_next
        trace = []
        for it in range(self.grid.fixed_point_max):
            rhs = explicit + theta * dt * gen(u) if theta > 0 else explicit.copy()
            rhs[0] = 0.0
            rhs[-1] = 0.0
            new = solve_banded((2, 2), ab, rhs)
            delta = float(np.max(np.abs(new - u)))
            trace.append(delta)
            u = new
            if delta < self.grid.fixed_point_tol or theta == 0:
                self.fixed_point_iters = max(self.fixed_point_iters, it + 1)
                return u
        raise ConvergenceError(f"fixed point did not converge at t={t_now:.6g}", trace)

    def schedule(self):
        """Backward list of ``(t_next, t_now, theta, k_now)`` with Rannacher start-up."""
        out = []
        t = self.t
        nt = len(t) - 1
        for k in range(nt - 1, -1, -1):
            if k == nt - 1 and self.grid.rannacher > 0:
                h = (t[k + 1] - t[k]) / self.grid.rannacher
                for j in range(self.grid.rannacher):
                    t_next = t[k + 1] - j * h
                    t_now = t[k] if j == self.grid.rannacher - 1 else t_next - h
                    out.append((t_next, t_now, 1.0, k if j == self.grid.rannacher - 1 else None))
            else:
                out.append((t[k + 1], t[k], self.grid.theta, k))
        return out

    def terminal(self, n_i):
        phi = np.broadcast_to(self.market.phi(self.x), self.x.shape).astype(float)
        return np.repeat(phi[:, None], n_i, axis=1)

    def level_of(self, t):
        return int(round(t / (self.t[1] - self.t[0])))


def _sweep_markov(prob, n_i=1):
    """Single backward sweep for a driver without path dependence."""
    nt = len(prob.t) - 1
    u = prob.terminal(n_i)
    out = np.empty((nt + 1, len(prob.x), n_i))
    out[nt] = u
    gen_next = prob.generator(prob.t[-1], u)
    zero = np.zeros_like(u)
    for t_next, t_now, theta, k in prob.schedule():
        u = prob.step(u, t_next, t_now, theta, lambda v, tn=t_now: prob.generator(tn, v),
                      gen_next, zero)
        gen_next = prob.generator(t_now, u)
        if k is not None:
            out[k] = u
    return out


def _sweep_coupled(prob, i_grid, frozen):
    """One Picard sweep: auxiliary ``w`` and the updated ``u`` marched together.

    ``frozen`` is the previous surface on the same ``(t, x, I)`` grid; it
    defines the ``I`` velocity. Returns the new surface.
    """
    nt = len(prob.t) - 1
    n_i = len(i_grid)
    D_T = prob.curve(prob.T, DriftKind.NEW)[2]
    u = prob.terminal(n_i)
    w = u / D_T
    out = np.empty_like(frozen)
    out[nt] = u

    def velocity(t):
        k = prob.level_of(t)
        # midpoint levels reuse the later node of the frozen surface
        k = min(k, nt) if abs(prob.t[min(k, nt)] - t) < 1e-12 else min(k + 1, nt)
        return prob.velocity(t, frozen[k])

    a_next = velocity(prob.t[-1])
    m_next = i_grid[None, :] + w
    gen_u_next = prob.generator(prob.t[-1], u, i_grid, m_next)
    for t_next, t_now, theta, k in prob.schedule():
        dt = t_next - t_now
        a_now = velocity(t_now)
        # auxiliary linear equation: w_t + L w + a w_I + a = 0
        adv_w = _shift_I(w, a_next, i_grid, dt) - w
        w = prob.step(w, t_next, t_now, theta, lambda _v, a=a_now: a, a_next, adv_w)
        m_now = i_grid[None, :] + w
        adv_u = _shift_I(u, a_next, i_grid, dt) - u
        u = prob.step(u, t_next, t_now, theta,
                      lambda v, tn=t_now, m=m_now: prob.generator(tn, v, i_grid, m),
                      gen_u_next, adv_u)
        gen_u_next = prob.generator(t_now, u, i_grid, m_now)
        a_next = a_now
        if k is not None:
            out[k] = u
    return out


def _pilot_bounds(prob, surface, i_grid, seed):
    """0.1% / 99.9% quantiles of ``I_T`` along pilot paths under a frozen surface."""
    g = prob.grid
    pgrid = uniform_grid(prob.T, g.pilot_steps)
    bundle = simulate_paths(prob.market, prob.intensity, pgrid, g.pilot_paths, seed, stream="pde_pilot")
    I = np.zeros(bundle.n_paths)
    dx_surface = np.gradient(surface, prob.x, axis=1)
    for k in range(len(pgrid) - 1):
        t = pgrid[k]
        lvl = prob.level_of(t)
        x = bundle.s[:, k]
        u = _bilinear(prob.x, i_grid, surface[lvl], x, I)
        du = _bilinear(prob.x, i_grid, dx_surface[lvl], x, I)
        z = np.asarray(prob.market.sigma(x, t)) * du
        snap, growth = prob.snapshot(t, u, DriftKind.NEW, x=x, z=z)
        a = running_source(prob.terms, prob.intensity, prob.market, snap) / growth
        I = I + a * (pgrid[k + 1] - pgrid[k])
    lo, hi = np.quantile(I, [0.001, 0.999])
    return min(lo, 0.0), max(hi, 0.0)


def _make_i_grid(lo, hi, n_i, pad=0.25):
    width = hi - lo
    if width < 1e-12:
        lo, hi, width = -0.5, 0.5, 1.0
    return np.linspace(lo - pad * width, hi + pad * width, n_i)


def _regrid_I(surface, old, new):
    """Re-interpolate along ``I`` (linear, extrapolating at the edges)."""
    if len(old) == 1:
        return np.repeat(surface, len(new), axis=2)
    di = old[1] - old[0]
    pos = (new - old[0]) / di
    idx = np.clip(np.floor(pos).astype(int), 0, len(old) - 2)
    w = pos - idx
    return surface[:, :, idx] * (1 - w) + surface[:, :, idx + 1] * w


def solve_pde(market, terms, intensity, drift, grid, seed=0):
    """Solve for the value surface under ``drift`` (``"new"`` or ``"bfp"``).

    Raises :class:`ConvergenceError` if the per-step fixed point or the outer
    Picard loop fails, carrying the residual / value trace.
    """
    prob = _Problem(market, terms, intensity, drift, grid)
    s0 = market.s0
    report = {
        "x_min": float(prob.x[0]), "x_max": float(prob.x[-1]), "dx": float(prob.op.dx),
        "n_x": grid.n_x, "n_t": grid.n_t, "dt": float(prob.t[1] - prob.t[0]),
        "theta": grid.theta, "rannacher_half_steps": grid.rannacher,
    }
    if grid.theta < 0.5:
        report["explicit_dt_limit"] = min(prob.op.max_explicit_dt(t, grid.theta) for t in prob.t)

    i0 = np.zeros(1)
    if prob.kind is DriftKind.BFP:
        # the baseline ignores I; an explicit I range still yields an (x, I) surface
        i_grid = i0
        if grid.i_min is not None and grid.i_max is not None and grid.n_i > 1:
            i_grid = np.linspace(grid.i_min, grid.i_max, grid.n_i)
        u = _sweep_markov(prob, len(i_grid))
        v0 = float(np.interp(s0, prob.x, u[0, :, 0]))
        report["fixed_point_iters_max"] = prob.fixed_point_iters
        return ValueSurface(prob.t, prob.x, i_grid, u, v0, [v0], report)

    # Picard iteration 0: I and M1 + M2 frozen at zero, a one-slice problem
    u = _sweep_zero(prob)
    trace = [float(np.interp(s0, prob.x, u[0, :, 0]))]
    if grid.i_min is not None and grid.i_max is not None:
        i_grid = np.linspace(grid.i_min, grid.i_max, grid.n_i)
    else:
        lo, hi = _pilot_bounds(prob, u, i0, seed)
        i_grid = _make_i_grid(lo, hi, grid.n_i)
    u = _regrid_I(u, i0, i_grid)
    regrids = 0
    for _ in range(grid.picard_max - 1):
        new = _sweep_coupled(prob, i_grid, u)
        v0 = _bilinear(prob.x, i_grid, new[0], np.array([s0]), np.array([0.0]))[0]
        trace.append(float(v0))
        u = new
        if abs(trace[-1] - trace[-2]) < grid.picard_tol * max(abs(v0), 1e-8):
            break
        if grid.i_min is None or grid.i_max is None:
            lo, hi = _pilot_bounds(prob, u, i_grid, seed)
            if lo < i_grid[0] or hi > i_grid[-1]:
                new_grid = _make_i_grid(min(lo, i_grid[0]), max(hi, i_grid[-1]), grid.n_i, pad=0.1)
                u = _regrid_I(u, i_grid, new_grid)
                i_grid = new_grid
                regrids += 1
    else:
        raise ConvergenceError(f"Picard loop did not converge in {grid.picard_max} iterations", trace)
    report.update({"n_i": len(i_grid), "i_min": float(i_grid[0]), "i_max": float(i_grid[-1]),
                   "i_regrids": regrids, "fixed_point_iters_max": prob.fixed_point_iters})
    return ValueSurface(prob.t, prob.x, i_grid, u, trace[-1], trace, report)


def _sweep_zero(prob):
    """BVE driver with ``I`` and ``M1 + M2`` set to zero on a single ``I = 0`` slice."""
    nt = len(prob.t) - 1
    i0 = np.zeros(1)
    zero = np.zeros((len(prob.x), 1))
    u = prob.terminal(1)
    out = np.empty((nt + 1, len(prob.x), 1))
    out[nt] = u
    gen_next = prob.generator(prob.t[-1], u, i0, zero)
    for t_next, t_now, theta, k in prob.schedule():
        u = prob.step(u, t_next, t_now, theta,
                      lambda v, tn=t_now: prob.generator(tn, v, i0, zero), gen_next, zero)
        gen_next = prob.generator(t_now, u, i0, zero)
        if k is not None:
            out[k] = u
    return out
