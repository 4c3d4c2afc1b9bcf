"""Named function families used by configuration files.

A config value such as ``geometric(0.2)`` or ``piecewise(0.01, 0.5, 0.02)`` is
parsed into a vectorised callable for one of the roles below:

========  ======================  ==========================================
role      signature               used for
========  ======================  ==========================================
time      f(t)                    r, c, f, h, collateral fraction
state     f(t, x)                 intensities, dividend stream pi
vol       f(x, t)                 diffusion coefficient sigma
payoff    f(x)                    terminal payoff phi
hedge     f(t, x, v, z)           hedge functional H
========  ======================  ==========================================

Every returned callable carries ``spec`` (the normalised text) and
``uses_x`` (whether it depends on the asset price).
"""

import re

import numpy as np

ROLES = ("time", "state", "vol", "payoff", "hedge")

_CALL = re.compile(r"^\s*([a-z_][a-z0-9_]*)\s*\(\s*(.*?)\s*\)\s*$")


class RegistryError(ValueError):
    pass


def _piecewise_t(args):
    if len(args) % 2 != 1:
        raise RegistryError("piecewise needs v0, t1, v1, ..., tk, vk")
    values = np.asarray(args[0::2], dtype=float)
    breaks = np.asarray(args[1::2], dtype=float)
    if np.any(np.diff(breaks) <= 0):
        raise RegistryError("piecewise breakpoints must be strictly increasing")

    def f(t):
        return values[np.searchsorted(breaks, np.asarray(t, dtype=float), side="right")]

    return f


def _nargs(name, args, *allowed):
    if len(args) not in allowed:
        raise RegistryError(f"{name}() takes {' or '.join(map(str, allowed))} arguments, got {len(args)}")


def _build(name, args, role):
    """Return ``(callable, uses_x)`` for one family in one role."""
    if name == "constant":
        _nargs(name, args, 1)
        a = args[0]
        if role == "time":
            return (lambda t: np.full(np.shape(t), a) if np.ndim(t) else a), False
        if role in ("state", "vol"):
            return (lambda p, q: np.full(np.broadcast(p, q).shape, a) if np.ndim(p) or np.ndim(q) else a), False
        if role == "payoff":
            return (lambda x: np.full(np.shape(x), a) if np.ndim(x) else a), False
        return (lambda t, x, v, z: a + 0.0 * (np.asarray(v, dtype=float) + np.asarray(z, dtype=float))), False

    if name == "zero":
        _nargs(name, args, 0)
        return _build("constant", [0.0], role)

    if name == "affine":
        _nargs(name, args, 2)
        a, b = args
        if role == "time":
            return (lambda t: a + b * np.asarray(t, dtype=float)), False
        if role == "state":
            return (lambda t, x: a + b * np.asarray(x, dtype=float) + 0.0 * np.asarray(t, dtype=float)), True
        if role == "vol":
            return (lambda x, t: a + b * np.asarray(x, dtype=float) + 0.0 * np.asarray(t, dtype=float)), True
        if role == "payoff":
            return (lambda x: a + b * np.asarray(x, dtype=float)), True

    if name == "geometric" and role in ("vol", "state"):
        _nargs(name, args, 1)
        s = args[0]
        if role == "vol":
            return (lambda x, t: s * np.asarray(x, dtype=float) + 0.0 * np.asarray(t, dtype=float)), True
        return (lambda t, x: s * np.asarray(x, dtype=float) + 0.0 * np.asarray(t, dtype=float)), True

    if name == "piecewise" and role in ("time", "state"):
        g = _piecewise_t(args)
        if role == "time":
            return g, False
        return (lambda t, x: g(t) + 0.0 * np.asarray(x, dtype=float)), False

    if name == "logistic" and role == "state":
        _nargs(name, args, 1, 3)
        a, k, x0 = (args[0], 1.0, 0.0) if len(args) == 1 else args
        return (lambda t, x: a / (1.0 + np.exp(-k * (np.asarray(x, dtype=float) - x0))) + 0.0 * np.asarray(t, dtype=float)), True

    if role == "payoff" and name in ("call", "put"):
        _nargs(name, args, 1)
        k = args[0]
        if name == "call":
            return (lambda x: np.maximum(np.asarray(x, dtype=float) - k, 0.0)), True
        return (lambda x: np.maximum(k - np.asarray(x, dtype=float), 0.0)), True

    if role == "payoff" and name == "forward":
        _nargs(name, args, 1)
        k = args[0]
        return (lambda x: np.asarray(x, dtype=float) - k), True

    if role == "hedge" and name == "z":
        _nargs(name, args, 0, 1)
        scale = args[0] if args else 1.0
        return (lambda t, x, v, z: scale * np.asarray(z, dtype=float) + 0.0 * np.asarray(v, dtype=float)), False

    if role == "hedge" and name == "quadratic_v":
        _nargs(name, args, 0, 1)
        scale = args[0] if args else 1.0
        return (lambda t, x, v, z: scale * np.asarray(v, dtype=float) ** 2 + 0.0 * np.asarray(z, dtype=float)), False

    raise RegistryError(f"unknown function family '{name}' for role '{role}'")


def parse_function(text, role):
    """Parse ``name(arg, ...)`` into a callable for ``role``."""
    if role not in ROLES:
        raise RegistryError(f"unknown role {role!r}")
    m = _CALL.match(str(text))
    if m is None:
        # bare numbers are shorthand for constant(...)
        try:
            value = float(text)
        except ValueError:
            raise RegistryError(f"cannot parse function spec {text!r}") from None
        name, args = "constant", [value]
    else:
        name = m.group(1)
        raw = [a for a in re.split(r"\s*,\s*", m.group(2)) if a != ""]
        try:
            args = [float(a) for a in raw]
        except ValueError:
            raise RegistryError(f"non-numeric argument in {text!r}") from None
    fn, uses_x = _build(name, args, role)
    fn.spec = f"{name}({', '.join(repr(a) for a in args)})"
    fn.uses_x = uses_x
    return fn


def constant(value, role):
    return parse_function(f"constant({float(value)!r})", role)
