"""Contract cash-flow functionals: funding/collateral/hedging carry, closeout, and the
intensity-weighted closeout stream.

All functions broadcast over array-valued snapshots.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ModelError
from .registry import constant

DEFAULT_TYPES = ("counterparty", "investor", "simultaneous")
SIMULTANEOUS_RULES = ("both", "counterparty_first")


def pos(x):
    return np.maximum(x, 0.0)


def neg(x):
    """Negative part, ``max(-x, 0) >= 0`` so that ``x == pos(x) - neg(x)``."""
    return np.maximum(-np.asarray(x), 0.0)


@dataclass(frozen=True)
class ContractTerms:
    """Rates, loss fractions and collateral rule of the bilateral contract.

    ``c``, ``f``, ``h`` and ``alpha_coll`` are deterministic functions of time;
    collateral is ``C_t = alpha_coll(t) * V_t``. ``hedge(t, x, v, z)`` is the
    hedge functional ``H``.
    """

    T: float
    c: object = None
    f: object = None
    h: object = None
    lgd_i: float = 0.0
    lgd_c: float = 0.0
    alpha_coll: object = None
    bilateral: bool = True
    hedge: object = None
    simultaneous_rule: str = "both"

    def __post_init__(self):
        for name in ("c", "f", "h"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, constant(0.0, "time"))
        if self.alpha_coll is None:
            object.__setattr__(self, "alpha_coll", constant(0.0, "time"))
        if self.hedge is None:
            object.__setattr__(self, "hedge", constant(0.0, "hedge"))
        if not 0.0 <= self.lgd_i <= 1.0 or not 0.0 <= self.lgd_c <= 1.0:
            raise ModelError("loss-given-default values must lie in [0, 1]")
        if self.T <= 0:
            raise ModelError("maturity T must be positive")
        if self.simultaneous_rule not in SIMULTANEOUS_RULES:
            raise ModelError(f"simultaneous_rule must be one of {SIMULTANEOUS_RULES}")

    @property
    def b(self):
        return 1.0 if self.bilateral else 0.0


@dataclass(frozen=True)
class StateSnapshot:
    """Everything the drivers need at one ``(t, x)``; fields may be arrays.

    ``g`` is the survival process and ``lam`` the first-to-default intensity
    used by the drift under evaluation (they differ between the two drifts).
    """

    t: float
    x: object
    v: object
    z: object
    g: object
    lam1: object
    lam2: object
    lam: object
    big_lambda1: Optional[object] = None
    big_lambda2: Optional[object] = None


def hedge_value(terms, snap):
    return terms.hedge(snap.t, snap.x, snap.v, snap.z)


def funding_A(terms, market, snap):
    """``pi + (f - c) C + (r - f) V + (r - h) H`` with ``C = alpha V``."""
    t = snap.t
    r, f, c, h = market.r(t), terms.f(t), terms.c(t), terms.h(t)
    alpha = terms.alpha_coll(t)
    return (market.pi(t, snap.x) + (f - c) * alpha * snap.v + (r - f) * snap.v
            + (r - h) * hedge_value(terms, snap))


def closeout_theta(terms, snap, which_default):
    """Closeout amount when the first default is of type ``which_default``.

    The closeout value is the contract value itself. On a simultaneous
    default both loss terms apply under ``simultaneous_rule="both"``; with
    ``"counterparty_first"`` only the counterparty's.
    """
    if which_default not in DEFAULT_TYPES:
        raise ModelError(f"which_default must be one of {DEFAULT_TYPES}")
    eps = snap.v
    exposure = (1.0 - terms.alpha_coll(snap.t)) * eps
    cp = which_default in ("counterparty", "simultaneous")
    inv = which_default == "investor" or (
        which_default == "simultaneous" and terms.simultaneous_rule == "both")
    out = eps
    if cp:
        out = out - terms.lgd_c * pos(exposure)
    if inv:
        out = out + terms.b * terms.lgd_i * neg(exposure)
    return out


def theta_tilde(terms, intensity, snap):
    """``G (lam * eps - lam1 LGD_C (eps - C)^+ + b lam2 LGD_I (eps - C)^-)``."""
    eps = snap.v
    exposure = (1.0 - terms.alpha_coll(snap.t)) * eps
    return snap.g * (snap.lam * eps - snap.lam1 * terms.lgd_c * pos(exposure)
                     + terms.b * snap.lam2 * terms.lgd_i * neg(exposure))
