"""Marshall-Olkin bivariate exponential (BVE) law.

Joint survival::

    P(Z1 > s, Z2 > t) = exp(-a1*s - a2*t - ab*max(s, t))

The law has a singular component on the diagonal, so ``P(Z1 == Z2) > 0``
whenever ``ab > 0``. Sampling uses the common-shock construction, which
reproduces that atom exactly.
"""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from . import _rng
from .errors import DomainError, ModelError


@dataclass(frozen=True)
class BveParams:
    """Rates of the two idiosyncratic shocks and of the common shock."""

    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha_bar: float = 0.0

    def __post_init__(self):
        a1, a2, ab = float(self.alpha1), float(self.alpha2), float(self.alpha_bar)
        if min(a1, a2, ab) < 0 or not np.isfinite([a1, a2, ab]).all():
            raise ModelError(f"BVE rates must be finite and >= 0, got {(a1, a2, ab)}")
        if a1 + ab <= 0 or a2 + ab <= 0:
            raise ModelError("both BVE marginals must have a positive rate")
        object.__setattr__(self, "alpha1", a1)
        object.__setattr__(self, "alpha2", a2)
        object.__setattr__(self, "alpha_bar", ab)

    @classmethod
    def standard(cls, alpha_bar):
        """Unit idiosyncratic rates, as used by the Cox construction."""
        return cls(1.0, 1.0, alpha_bar)

    def mu(self):
        return self.alpha1 + self.alpha2 + self.alpha_bar


@dataclass(frozen=True)
class BveSample:
    z1: float
    z2: float
    simultaneous: bool


@dataclass(frozen=True)
class BveSamples(Sequence):
    """Column-oriented batch of draws; indexing yields :class:`BveSample`."""

    z1: np.ndarray
    z2: np.ndarray
    simultaneous: np.ndarray

    def __len__(self):
        return len(self.z1)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return BveSamples(self.z1[i], self.z2[i], self.simultaneous[i])
        return BveSample(float(self.z1[i]), float(self.z2[i]), bool(self.simultaneous[i]))


def _check_args(s, t):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("survival arguments must be non-negative")
    return s, t


def survival(params, s, t):
    """Joint survival ``P(Z1 > s, Z2 > t)``; vectorised over ``s`` and ``t``."""
    s, t = _check_args(s, t)
    out = np.exp(-params.alpha1 * s - params.alpha2 * t - params.alpha_bar * np.maximum(s, t))
    return out if out.ndim else float(out)


def decompose(params, s, t):
    """Split the survival function into absolutely continuous and singular parts.

    Returns ``(weight_ac, F_a, weight_sing, F_s)`` with
    ``weight_ac * F_a + weight_sing * F_s == survival(params, s, t)``.
    When ``alpha1 + alpha2 == 0`` the law is purely singular and ``F_a`` is
    reported as 0 with zero weight.
    """
    s, t = _check_args(s, t)
    a1, a2, ab = params.alpha1, params.alpha2, params.alpha_bar
    mu = params.mu()
    w_ac = (a1 + a2) / mu
    w_s = ab / mu
    m = np.maximum(s, t)
    F_s = np.exp(-mu * m)
    if a1 + a2 > 0:
        joint = np.exp(-a1 * s - a2 * t - ab * m)
        F_a = (mu * joint - ab * F_s) / (a1 + a2)
    else:
        F_a = np.zeros_like(F_s)
    if F_s.ndim == 0:
        return w_ac, float(F_a), w_s, float(F_s)
    return w_ac, F_a, w_s, F_s


def atom_probability(params):
    """Mass of the diagonal ``{Z1 == Z2}``."""
    return params.alpha_bar / params.mu()


def sample(params, seed, n, stream="bve"):
    """Draw ``n`` pairs via independent shocks ``E1, E2, E3``.

    ``Z1 = min(E1, E3)``, ``Z2 = min(E2, E3)``; a draw is flagged simultaneous
    exactly when the common shock ``E3`` arrives first. Deterministic in
    ``(seed, stream)``.
    """
    n = int(n)
    if n < 0:
        raise DomainError("sample size must be >= 0")
    if n == 0:
        empty = np.empty(0)
        return BveSamples(empty, empty.copy(), np.empty(0, dtype=bool))
    u = _rng.uniforms(seed, stream, n, 3)
    e1 = _rng.exponentials(u[:, 0], params.alpha1)
    e2 = _rng.exponentials(u[:, 1], params.alpha2)
    e3 = _rng.exponentials(u[:, 2], params.alpha_bar)
    simultaneous = e3 < np.minimum(e1, e2)
    z1 = np.where(simultaneous, e3, np.minimum(e1, e3))
    z2 = np.where(simultaneous, e3, np.minimum(e2, e3))
    return BveSamples(z1, z2, simultaneous)


def write_csv(samples, path):
    """Write ``z1,z2,simultaneous`` rows."""
    table = np.column_stack([samples.z1, samples.z2, samples.simultaneous.astype(float)])
    np.savetxt(path, table, delimiter=",", header="z1,z2,simultaneous", comments="",
               fmt=["%.17g", "%.17g", "%d"])
