"""Forward simulation of the asset, the cumulative intensities and discounting."""

import math
from dataclasses import dataclass

import numpy as np

from . import _rng
from .cox import HazardPaths, cumulate, deterministic_hazards
from .errors import DomainError
from .registry import constant


def _zero_dividend():
    return constant(0.0, "state")


@dataclass(frozen=True)
class MarketModel:
    """Risk-neutral asset dynamics ``dS = r(t) S dt + sigma(S, t) dW``.

    ``phi`` is the terminal payoff and ``pi(t, x)`` the contractual dividend
    stream paid continuously until default or maturity.
    """

    r: object
    sigma: object
    s0: float
    phi: object
    pi: object = None

    def __post_init__(self):
        if self.pi is None:
            object.__setattr__(self, "pi", _zero_dividend())
        object.__setattr__(self, "s0", float(self.s0))


@dataclass(frozen=True)
class PathBundle:
    """Simulated paths on a shared time grid.

    ``s`` and ``dw`` are ``(n, M+1)`` and ``(n, M)``. Intensity arrays are
    ``(n, M+1)`` for asset-dependent intensities and ``(1, M+1)`` otherwise.
    """

    grid: np.ndarray
    s: np.ndarray
    dw: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray
    big_lambda1: np.ndarray
    big_lambda2: np.ndarray
    seed: int
    floored: int = 0

    @property
    def n_paths(self):
        return self.s.shape[0]

    @property
    def dt(self):
        return np.diff(self.grid)

    @property
    def hazards(self):
        return HazardPaths(self.grid, self.lam1, self.lam2, self.big_lambda1, self.big_lambda2)

    def permuted(self, order):
        """Same bundle with paths reordered (hazard rows follow when per-path)."""
        def pick(a):
            return a[order] if a.shape[0] == self.n_paths and self.n_paths > 1 else a
        return PathBundle(self.grid, self.s[order], self.dw[order], pick(self.lam1), pick(self.lam2),
                          pick(self.big_lambda1), pick(self.big_lambda2), self.seed, self.floored)

    def write_csv(self, path):
        """Long-format dump ``path_id,t,s,Lambda1,Lambda2``."""
        n, m1 = self.s.shape
        ids = np.repeat(np.arange(n), m1)
        t = np.tile(self.grid, n)
        L1 = np.broadcast_to(self.big_lambda1, self.s.shape).ravel()
        L2 = np.broadcast_to(self.big_lambda2, self.s.shape).ravel()
        table = np.column_stack([ids, t, self.s.ravel(), L1, L2])
        np.savetxt(path, table, delimiter=",", header="path_id,t,s,Lambda1,Lambda2", comments="",
                   fmt=["%d", "%.17g", "%.17g", "%.17g", "%.17g"])


def check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2:
        raise DomainError("time grid needs at least two points")
    if grid[0] != 0.0:
        raise DomainError("time grid must start at 0")
    if np.any(np.diff(grid) <= 0):
        raise DomainError("time grid steps must be positive")
    return grid


def uniform_grid(T, n_steps):
    return np.linspace(0.0, float(T), int(n_steps) + 1)


def simulate_paths(market, intensity, grid, n, seed, stream="paths"):
    """Euler-Maruyama paths of the asset plus left-endpoint cumulative intensities.

    Negative prices are floored at 0; the number of floored states is kept in
    ``PathBundle.floored``.
    """
    grid = check_grid(grid)
    n = int(n)
    if n < 1:
        raise DomainError("need at least one path")
    dt = np.diff(grid)
    m = len(dt)
    dw = _rng.normals(seed, stream, n, m) * np.sqrt(dt)
    s = np.empty((n, m + 1))
    s[:, 0] = market.s0
    floored = 0
    r = np.broadcast_to(market.r(grid), grid.shape)
    for k in range(m):
        x = s[:, k]
        nxt = x + r[k] * x * dt[k] + market.sigma(x, grid[k]) * dw[:, k]
        neg = nxt < 0
        if neg.any():
            floored += int(neg.sum())
            nxt[neg] = 0.0
        s[:, k + 1] = nxt
    if intensity.state_dependent:
        t = grid[None, :]
        lam1 = np.broadcast_to(intensity.lambda1(t, s), s.shape).astype(float)
        lam2 = np.broadcast_to(intensity.lambda2(t, s), s.shape).astype(float)
        L1, L2 = cumulate(grid, lam1), cumulate(grid, lam2)
    else:
        h = deterministic_hazards(intensity, grid)
        lam1, lam2, L1, L2 = h.lam1, h.lam2, h.big_lambda1, h.big_lambda2
    return PathBundle(grid, s, dw, lam1, lam2, L1, L2, int(seed), floored)


def cumulative_rate(market, grid):
    """``int_0^{t_k} r`` on ``grid`` (left-endpoint)."""
    grid = np.asarray(grid, dtype=float)
    r = np.broadcast_to(market.r(grid), grid.shape).astype(float)
    return cumulate(grid, r)[0]


_QUAD_STEP = 1.0 / 1024.0


def discount(market, s, t):
    """``D(s, t) = exp(-int_s^t r)`` by left-endpoint quadrature.

    Quadrature nodes are ``{s, t}`` plus the global lattice ``k / 1024``
    inside ``(s, t)``, so discount factors over adjacent intervals multiply
    exactly up to rounding.
    """
    s, t = float(s), float(t)
    if s > t:
        raise DomainError(f"discount needs s <= t, got s={s}, t={t}")
    if s == t:
        return 1.0
    lo = math.floor(s / _QUAD_STEP) + 1
    hi = math.ceil(t / _QUAD_STEP) - 1
    inner = np.arange(lo, hi + 1) * _QUAD_STEP
    nodes = np.concatenate([[s], inner[(inner > s) & (inner < t)], [t]])
    r = np.broadcast_to(market.r(nodes[:-1]), nodes[:-1].shape)
    return float(np.exp(-np.sum(r * np.diff(nodes))))
