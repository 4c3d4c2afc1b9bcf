"""Cox construction of the two default times and the quantities derived from it.

``tau_i = inf{t : Lambda_i(t) >= Z_i}`` where ``Lambda_i`` is the cumulative
intensity and ``(Z1, Z2)`` is a standard BVE draw (unit idiosyncratic rates,
common-shock rate ``alpha_bar``). ``tau = min(tau1, tau2)``.

A default that does not happen within the simulated horizon is recorded as
``math.inf``; no finite stand-in value is ever used.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .bve import BveParams, BveSamples
from .errors import DomainError, ModelError

SIGN_MODES = ("instantaneous", "integrated")


@dataclass(frozen=True)
class IntensityModel:
    """Intensities ``lambda1(t, x)``, ``lambda2(t, x)`` and the common-shock weight.

    ``lambda_max`` and ``lipschitz`` are the bounds the user declares; they
    are checked by :func:`xva_bve.engine.validate_assumptions`, not here.
    """

    lambda1: object
    lambda2: object
    alpha_bar: float = 0.0
    lambda_min: float = 0.0
    lambda_max: float = math.inf
    lipschitz: float = math.inf
    sign_mode: str = "instantaneous"

    def __post_init__(self):
        if self.alpha_bar < 0:
            raise ModelError("alpha_bar must be >= 0")
        if self.sign_mode not in SIGN_MODES:
            raise ModelError(f"sign_mode must be one of {SIGN_MODES}")

    @property
    def bve(self):
        return BveParams.standard(self.alpha_bar)

    @property
    def state_dependent(self):
        """True when either intensity depends on the asset price."""
        flags = [getattr(f, "uses_x", None) for f in (self.lambda1, self.lambda2)]
        if None not in flags:
            return any(flags)
        ts = np.array([0.0, 0.5, 1.0])[:, None]
        xs = np.array([1e-3, 1.0, 100.0, 1e4])[None, :]
        for f in (self.lambda1, self.lambda2):
            vals = np.broadcast_to(f(ts, xs), (3, 4))
            if np.ptp(vals, axis=1).max() > 0:
                return True
        return False

    def rates(self, t, x):
        return self.lambda1(t, x), self.lambda2(t, x)


@dataclass(frozen=True)
class HazardPaths:
    """Instantaneous and cumulative intensities on a time grid.

    Arrays have shape ``(n_paths, n_grid)``; deterministic models use a
    single row that broadcasts against path arrays.
    """

    grid: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray
    big_lambda1: np.ndarray
    big_lambda2: np.ndarray

    def __post_init__(self):
        for name in ("lam1", "lam2", "big_lambda1", "big_lambda2"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
        for arr in (self.big_lambda1, self.big_lambda2):
            if np.any(np.diff(arr, axis=1) < 0):
                raise ModelError("cumulative hazard path is not non-decreasing")

    @property
    def horizon(self):
        return float(self.grid[-1])


def cumulate(grid, lam):
    """Left-endpoint Riemann integral of ``lam`` along the last axis, starting at 0."""
    lam = np.atleast_2d(lam)
    dt = np.diff(grid)
    out = np.zeros(lam.shape)
    np.cumsum(lam[:, :-1] * dt, axis=1, out=out[:, 1:])
    return out


def deterministic_hazards(model, grid):
    """Hazard paths for intensities that do not depend on the asset price."""
    grid = np.asarray(grid, dtype=float)
    if model.state_dependent:
        raise ModelError("intensities depend on the asset price; simulate paths instead")
    x = np.ones_like(grid)
    lam1 = np.broadcast_to(model.lambda1(grid, x), grid.shape).astype(float)
    lam2 = np.broadcast_to(model.lambda2(grid, x), grid.shape).astype(float)
    return HazardPaths(grid, lam1, lam2, cumulate(grid, lam1), cumulate(grid, lam2))


def constant_hazards(lam1, lam2, horizon, n_steps=1):
    """Exact hazard paths for constant intensities."""
    grid = np.linspace(0.0, horizon, n_steps + 1)
    l1 = np.full_like(grid, lam1)
    l2 = np.full_like(grid, lam2)
    return HazardPaths(grid, l1, l2, lam1 * grid, lam2 * grid)


# --------------------------------------------------------------------------
# default times
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DefaultScenario:
    tau1: float
    tau2: float
    tau: float
    simultaneous: bool
    big_lambda1: np.ndarray = field(repr=False)
    big_lambda2: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class DefaultScenarios:
    """Batch of default times; ``inf`` marks no default within the horizon."""

    tau1: np.ndarray
    tau2: np.ndarray
    simultaneous: np.ndarray

    @property
    def tau(self):
        return np.minimum(self.tau1, self.tau2)

    def __len__(self):
        return len(self.tau1)

    def write_csv(self, path):
        table = np.column_stack([self.tau1, self.tau2, self.tau, self.simultaneous.astype(float)])
        np.savetxt(path, table, delimiter=",", header="tau1,tau2,tau,simultaneous",
                   comments="", fmt=["%.17g", "%.17g", "%.17g", "%d"])


def _invert(grid, big_lambda, z):
    """First crossing of level ``z`` by each row of ``big_lambda`` (linear in-step)."""
    big_lambda = np.atleast_2d(big_lambda)
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    if big_lambda.shape[0] == 1:
        row = big_lambda[0]
        idx = np.searchsorted(row, z, side="left")
        lo_val = row[np.clip(idx - 1, 0, None)]
        hi_val = row[np.clip(idx, None, len(row) - 1)]
    else:
        if big_lambda.shape[0] != n:
            raise ModelError("hazard matrix rows must match the number of draws")
        crossed = big_lambda >= z[:, None]
        idx = np.where(crossed.any(axis=1), crossed.argmax(axis=1), big_lambda.shape[1])
        rows = np.arange(n)
        lo_val = big_lambda[rows, np.clip(idx - 1, 0, None)]
        hi_val = big_lambda[rows, np.clip(idx, None, big_lambda.shape[1] - 1)]
    never = idx >= len(grid)
    k = np.clip(idx, 1, len(grid) - 1)
    t_lo = grid[k - 1]
    t_hi = grid[k]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(hi_val > lo_val, (z - lo_val) / (hi_val - lo_val), 1.0)
    tau = t_lo + frac * (t_hi - t_lo)
    tau = np.where(idx == 0, grid[0], tau)
    return np.where(never, np.inf, tau)


def default_times_batch(hazards, z):
    """Vectorised Cox inversion for a batch of BVE draws.

    A draw flagged ``simultaneous`` whose two hazard rows are identical
    defaults both names at the same instant; ``tau2`` is then set from the
    same inversion as ``tau1`` rather than recomputed. The output flag marks
    simultaneous defaults that occur within the horizon.
    """
    grid = np.asarray(hazards.grid, dtype=float)
    tau1 = _invert(grid, hazards.big_lambda1, z.z1)
    tau2 = _invert(grid, hazards.big_lambda2, z.z2)
    b1, b2 = hazards.big_lambda1, hazards.big_lambda2
    if b1.shape == b2.shape:
        same = np.all(b1 == b2, axis=1)
    else:
        same = np.zeros(1, dtype=bool)
    same = np.broadcast_to(same, tau1.shape)
    simultaneous = np.asarray(z.simultaneous, dtype=bool) & same & np.isfinite(tau1)
    tau2 = np.where(simultaneous, tau1, tau2)
    return DefaultScenarios(tau1, tau2, simultaneous)


def default_times(hazards, z):
    """Default times for a single draw ``z`` (a :class:`BveSample`)."""
    if hazards.big_lambda1.shape[0] != 1:
        raise ModelError("default_times expects a single hazard path; use default_times_batch")
    one = BveSamples(np.array([z.z1]), np.array([z.z2]), np.array([bool(z.simultaneous)]))
    batch = default_times_batch(hazards, one)
    t1, t2 = float(batch.tau1[0]), float(batch.tau2[0])
    return DefaultScenario(t1, t2, min(t1, t2), bool(batch.simultaneous[0]),
                           hazards.big_lambda1[0], hazards.big_lambda2[0])


# --------------------------------------------------------------------------
# survival process and intensities
# --------------------------------------------------------------------------

def survival_from_cumulative(big_lambda1, big_lambda2, alpha_bar):
    """``G = exp(-(L1 + L2 + alpha_bar * max(L1, L2)))`` elementwise."""
    return np.exp(-(big_lambda1 + big_lambda2 + alpha_bar * np.maximum(big_lambda1, big_lambda2)))


def _at(hazards, t):
    grid = hazards.grid
    t = float(t)
    if t < grid[0] or t > grid[-1] * (1 + 1e-12):
        raise DomainError(f"t={t} outside hazard horizon [{grid[0]}, {grid[-1]}]")
    L1 = np.array([np.interp(t, grid, row) for row in hazards.big_lambda1])
    L2 = np.array([np.interp(t, grid, row) for row in hazards.big_lambda2])
    k = min(np.searchsorted(grid, t, side="right") - 1, len(grid) - 1)
    return L1, L2, hazards.lam1[:, k], hazards.lam2[:, k]


def _squeeze(a):
    a = np.asarray(a)
    return float(a[0]) if a.size == 1 else a


def survival_G(model, hazards, t):
    """Survival process ``P(tau > t | F_t)`` of the first-to-default time."""
    L1, L2, _, _ = _at(hazards, t)
    return _squeeze(survival_from_cumulative(L1, L2, model.alpha_bar))


def hazard_lambda(model, hazards, t):
    """``(lambda1 + lambda2) / G`` evaluated at ``t``."""
    L1, L2, l1, l2 = _at(hazards, t)
    g = survival_from_cumulative(L1, L2, model.alpha_bar)
    if np.any(g <= 0):
        raise DomainError("survival process underflowed to 0")
    return _squeeze((l1 + l2) / g)


def reference_hazard(model, lam1, lam2, big_lambda1, big_lambda2):
    """Hazard rate of ``-log G``: ``l1 + l2 + alpha_bar * l_argmax(L1, L2)``.

    Ties in the cumulative hazards take the larger instantaneous rate
    (right derivative of the max).
    """
    lead = np.where(big_lambda1 > big_lambda2, lam1,
                    np.where(big_lambda2 > big_lambda1, lam2, np.maximum(lam1, lam2)))
    return lam1 + lam2 + model.alpha_bar * lead


def k_from_rates(lam1, lam2, big_lambda1=None, big_lambda2=None, sign_mode="instantaneous"):
    """``1.5 (l1 + l2) + 0.5 (l1 - l2) sign(.)``, with ``sign(0) = 0``.

    ``sign_mode="integrated"`` takes the sign from the cumulative hazards
    instead of the instantaneous rates.
    """
    diff = np.asarray(lam1) - np.asarray(lam2)
    if sign_mode == "integrated":
        if big_lambda1 is None or big_lambda2 is None:
            raise ModelError("integrated sign mode needs cumulative hazards")
        sgn = np.sign(np.asarray(big_lambda1) - np.asarray(big_lambda2))
    else:
        sgn = np.sign(diff)
    return 1.5 * (np.asarray(lam1) + np.asarray(lam2)) + 0.5 * diff * sgn


def k_process(model, t, x, big_lambda1=None, big_lambda2=None):
    l1, l2 = model.rates(t, x)
    out = k_from_rates(l1, l2, big_lambda1, big_lambda2, model.sign_mode)
    return float(out) if np.ndim(out) == 0 else out


def d_inv_G(model, hazards, t):
    """Time derivative of ``1/G`` in the ``K / G`` form."""
    L1, L2, l1, l2 = _at(hazards, t)
    g = survival_from_cumulative(L1, L2, model.alpha_bar)
    if np.any(g <= 0):
        raise DomainError("survival process underflowed to 0")
    k = k_from_rates(l1, l2, L1, L2, model.sign_mode)
    return _squeeze(k / g)


# --------------------------------------------------------------------------
# compensator diagnostic
# --------------------------------------------------------------------------

def interp_rows(grid, values, s):
    """Evaluate each row of ``values`` (piecewise linear on ``grid``) at ``s[i]``.

    ``values`` may have a single broadcasting row. ``s`` is clipped to the grid.
    """
    values = np.atleast_2d(values)
    s = np.clip(np.asarray(s, dtype=float), grid[0], grid[-1])
    if values.shape[0] == 1:
        return np.interp(s, grid, values[0])
    k = np.clip(np.searchsorted(grid, s, side="right") - 1, 0, len(grid) - 2)
    w = (s - grid[k]) / (grid[k + 1] - grid[k])
    rows = np.arange(len(s))
    return values[rows, k] * (1 - w) + values[rows, k + 1] * w


@dataclass
class CompensatorReport:
    """Martingale drift of ``1{tau<=t} - int_0^{t^tau} lambda ds`` per candidate."""

    times: np.ndarray
    rows: dict  # candidate -> array (n_times, 5): t, emp_jump, emp_integral, drift, stderr
    n: int

    def max_abs_z(self, candidate):
        r = self.rows[candidate]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(r[:, 4] > 0, np.abs(r[:, 3]) / r[:, 4], np.where(r[:, 3] == 0, 0.0, np.inf))
        return float(z.max())

    def write_csv(self, path_prefix):
        paths = []
        for name, table in self.rows.items():
            path = f"{path_prefix}_{name}.csv"
            np.savetxt(path, table, delimiter=",", header="t,emp_jump,emp_integral,drift,stderr",
                       comments="", fmt="%.17g")
            paths.append(path)
        return paths


def compensator_diagnostic(model, hazards, scenarios, times):
    """Monte Carlo drift of the compensated default indicator for two intensities.

    ``ratio``: ``(lambda1 + lambda2) / G``. ``reference``: hazard rate of ``-log G``.
    ``hazards`` must be the paths the scenarios were generated from.
    """
    n = len(scenarios)
    if n == 0:
        raise DomainError("compensator diagnostic needs at least one scenario")
    grid = hazards.grid
    times = np.asarray(times, dtype=float)
    L1, L2 = hazards.big_lambda1, hazards.big_lambda2
    g = survival_from_cumulative(L1, L2, model.alpha_bar)
    lam_sum = hazards.lam1 + hazards.lam2
    cumulative = {
        "ratio": cumulate(grid, lam_sum / g),
        "reference": L1 + L2 + model.alpha_bar * np.maximum(L1, L2),
    }
    tau = scenarios.tau
    rows = {}
    for name, cum in cumulative.items():
        table = np.empty((len(times), 5))
        for j, t in enumerate(times):
            jump = (tau <= t).astype(float)
            integral = interp_rows(grid, cum, np.minimum(tau, t))
            if integral.ndim == 0 or integral.shape != jump.shape:
                integral = np.broadcast_to(integral, jump.shape)
            m = jump - integral
            table[j] = (t, jump.mean(), integral.mean(), m.mean(),
                        m.std(ddof=1) / math.sqrt(n) if n > 1 else 0.0)
        rows[name] = table
    return CompensatorReport(times, rows, n)
