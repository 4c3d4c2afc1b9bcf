"""Configuration, assumption checks, drift comparison, diagnostics and run orchestration.

Config files are sectioned ``key = value`` text::

    [meta]          schema_version
    [market]        r, sigma, s0, payoff, pi, lipschitz_bound, growth_bound
    [intensity]     lambda1, lambda2, alpha_bar, lambda_min, lambda_max,
                    lipschitz_bound, sign_mode
    [contract]      T, c, f, h, lgd_i, lgd_c, alpha_coll, bilateral, hedge,
                    simultaneous_rule, hedge_lipschitz_bound
    [solver.mc]     n, seed, n_steps, degree, picard_max, picard_tol
    [solver.pde]    n_x, n_t, n_i, theta, x_min, x_max, rannacher,
                    picard_max, picard_tol, pilot_paths
    [output]        directory, diagnostics, diagnostic_n, compensator_times

Function-valued keys take registry specs such as ``geometric(0.2)``.
Unknown sections or keys are errors.
"""

import configparser
import dataclasses
import hashlib
import json
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .bsde import (DriftKind, RegressionBasis, continuous_payout_check, credit_curves, drift_bfp,
                   drift_new_terms, lando_identity_check, solve_bsde_mc)
from .bve import atom_probability
from .bve import sample as sample_bve
from .cashflows import ContractTerms, StateSnapshot
from .cox import (IntensityModel, compensator_diagnostic, cumulate, default_times_batch,
                  deterministic_hazards)
from .errors import ConfigError, OutputError
from .paths import MarketModel, simulate_paths, uniform_grid
from .pde import PdeGrid, solve_pde
from .registry import RegistryError, parse_function

SCHEMA_VERSION = 1
DIAGNOSTICS = ("compensator", "lando", "payout", "orthogonality")

_REQUIRED = object()

# section -> key -> (kind, default)
_SCHEMA = {
    "meta": {"schema_version": ("int", _REQUIRED)},
    "market": {
        "r": ("time", _REQUIRED),
        "sigma": ("vol", _REQUIRED),
        "s0": ("float", _REQUIRED),
        "payoff": ("payoff", _REQUIRED),
        "pi": ("state", "0"),
        "lipschitz_bound": ("float", "inf"),
        "growth_bound": ("float", "inf"),
    },
    "intensity": {
        "lambda1": ("state", _REQUIRED),
        "lambda2": ("state", _REQUIRED),
        "alpha_bar": ("float", "0"),
        "lambda_min": ("float", "0"),
        "lambda_max": ("float", "inf"),
        "lipschitz_bound": ("float", "inf"),
        "sign_mode": ("choice:instantaneous,integrated", "instantaneous"),
    },
    "contract": {
        "T": ("float", _REQUIRED),
        "c": ("time", "0"),
        "f": ("time", "0"),
        "h": ("time", "0"),
        "lgd_i": ("float", "0"),
        "lgd_c": ("float", "0"),
        "alpha_coll": ("time", "0"),
        "bilateral": ("bool", "true"),
        "hedge": ("hedge", "0"),
        "simultaneous_rule": ("choice:both,counterparty_first", "both"),
        "hedge_lipschitz_bound": ("float", "inf"),
    },
    "solver.mc": {
        "n": ("int", "200000"),
        "seed": ("int", "0"),
        "n_steps": ("int", "50"),
        "degree": ("int", "3"),
        "picard_max": ("int", "20"),
        "picard_tol": ("float", "1e-4"),
    },
    "solver.pde": {
        "n_x": ("int", "400"),
        "n_t": ("int", "400"),
        "n_i": ("int", "50"),
        "theta": ("float", "0.5"),
        "x_min": ("float?", ""),
        "x_max": ("float?", ""),
        "rannacher": ("int", "2"),
        "picard_max": ("int", "20"),
        "picard_tol": ("float", "1e-4"),
        "pilot_paths": ("int", "4000"),
    },
    "output": {
        "directory": ("str", "out"),
        "diagnostics": ("list", ""),
        "diagnostic_n": ("int", "100000"),
        "compensator_times": ("int", "10"),
    },
}


@dataclass(frozen=True)
class McSettings:
    n: int = 200000
    seed: int = 0
    n_steps: int = 50
    degree: int = 3
    picard_max: int = 20
    picard_tol: float = 1e-4


@dataclass(frozen=True)
class PdeSettings:
    n_x: int = 400
    n_t: int = 400
    n_i: int = 50
    theta: float = 0.5
    x_min: Optional[float] = None
    x_max: Optional[float] = None
    rannacher: int = 2
    picard_max: int = 20
    picard_tol: float = 1e-4
    pilot_paths: int = 4000


@dataclass(frozen=True)
class OutputSettings:
    directory: str = "out"
    diagnostics: tuple = ()
    diagnostic_n: int = 100000
    compensator_times: int = 10


@dataclass(frozen=True)
class RunConfig:
    market: MarketModel
    intensity: IntensityModel
    terms: ContractTerms
    mc: McSettings
    pde: PdeSettings
    output: OutputSettings
    bounds: dict
    raw: dict
    schema_version: int = SCHEMA_VERSION

    @property
    def config_hash(self):
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def pde_grid(self, n_x=None, n_t=None, n_i=None):
        p, s0 = self.pde, self.market.s0
        return PdeGrid(
            x_min=p.x_min if p.x_min is not None else 0.2 * s0,
            x_max=p.x_max if p.x_max is not None else 3.0 * s0,
            n_x=n_x or p.n_x, n_t=n_t or p.n_t, theta=p.theta, n_i=n_i or p.n_i,
            rannacher=p.rannacher, picard_tol=p.picard_tol, picard_max=p.picard_max,
            pilot_paths=p.pilot_paths)

    def with_alpha_bar(self, alpha_bar):
        raw = {k: dict(v) for k, v in self.raw.items()}
        raw["intensity"]["alpha_bar"] = repr(float(alpha_bar))
        return dataclasses.replace(
            self, intensity=dataclasses.replace(self.intensity, alpha_bar=float(alpha_bar)), raw=raw)


# --------------------------------------------------------------------------
# loading
# --------------------------------------------------------------------------

def _convert(kind, text):
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "float?":
        return None if text == "" else float(text)
    if kind == "str":
        return text
    if kind == "bool":
        states = configparser.ConfigParser.BOOLEAN_STATES
        if text.lower() not in states:
            raise ValueError(f"not a boolean: {text!r}")
        return states[text.lower()]
    if kind == "list":
        return tuple(p.strip() for p in text.split(",") if p.strip())
    if kind.startswith("choice:"):
        options = kind[len("choice:"):].split(",")
        if text not in options:
            raise ValueError(f"must be one of {options}")
        return text
    return parse_function(text, kind)


def _read(source):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(source)
    except configparser.Error as exc:
        raise ConfigError([("", f"cannot parse config: {exc}")]) from None
    return parser


def parse_config(source):
    """Validate config text; raises :class:`ConfigError` listing every problem."""
    parser = _read(source)
    errors = []
    values, raw = {}, {}
    for section in parser.sections():
        if section not in _SCHEMA:
            errors.append((section, "unknown section"))
    for section, keys in _SCHEMA.items():
        present = parser[section] if parser.has_section(section) else {}
        for key in present:
            if key not in keys:
                errors.append((f"{section}.{key}", "unknown key"))
        values[section], raw[section] = {}, {}
        for key, (kind, default) in keys.items():
            path = f"{section}.{key}"
            if key in present:
                text = present[key].strip()
            elif default is _REQUIRED:
                errors.append((path, "missing required key"))
                continue
            else:
                text = default
            raw[section][key] = text
            try:
                values[section][key] = _convert(kind, text)
            except (ValueError, RegistryError) as exc:
                errors.append((path, str(exc)))
    if errors:
        raise ConfigError(errors)
    errors.extend(_semantic_errors(values))
    if errors:
        raise ConfigError(errors)
    return _assemble(values, raw)


def _semantic_errors(v):
    errors = []
    meta, mk, it, ct = v["meta"], v["market"], v["intensity"], v["contract"]
    if meta["schema_version"] != SCHEMA_VERSION:
        errors.append(("meta.schema_version", f"unsupported version (expected {SCHEMA_VERSION})"))
    T = ct["T"]
    if not T > 0:
        errors.append(("contract.T", "maturity must be positive"))
        return errors
    s0 = mk["s0"]
    if not s0 > 0:
        errors.append(("market.s0", "initial price must be positive"))
        return errors
    ts = np.linspace(0.0, T, 201)
    xs = np.linspace(0.25 * s0, 4.0 * s0, 201)
    tt, xx = np.meshgrid(ts, xs, indexing="ij")
    alpha = np.broadcast_to(ct["alpha_coll"](ts), ts.shape)
    if np.any(alpha < 0) or np.any(alpha > 1):
        errors.append(("contract.alpha_coll", "collateral fraction must lie in [0, 1] on [0, T]"))
    for key in ("lgd_i", "lgd_c"):
        if not 0.0 <= ct[key] <= 1.0:
            errors.append((f"contract.{key}", "loss given default must lie in [0, 1]"))
    sig = np.broadcast_to(mk["sigma"](xx, tt), xx.shape)
    if np.any(sig <= 0):
        errors.append(("market.sigma", "volatility vanishes or is negative; the forward diffusion "
                                       "must be non-degenerate (sigma never vanishes)"))
    if it["alpha_bar"] < 0:
        errors.append(("intensity.alpha_bar", "common-shock weight must be >= 0"))
    if not 0 <= it["lambda_min"] <= it["lambda_max"]:
        errors.append(("intensity.lambda_max", "need 0 <= lambda_min <= lambda_max"))
    for key in ("lambda1", "lambda2"):
        lam = np.broadcast_to(it[key](tt, xx), xx.shape)
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            errors.append((f"intensity.{key}", "intensity must be finite and non-negative"))
    for key in ("r",):
        if not np.all(np.isfinite(mk[key](ts))):
            errors.append((f"market.{key}", "rate must be finite"))
    mc, pde = v["solver.mc"], v["solver.pde"]
    if mc["n"] < 2:
        errors.append(("solver.mc.n", "need at least 2 paths"))
    if mc["n_steps"] < 1:
        errors.append(("solver.mc.n_steps", "need at least one step"))
    if mc["degree"] < 1:
        errors.append(("solver.mc.degree", "degree must be >= 1"))
    if pde["n_x"] < 3:
        errors.append(("solver.pde.n_x", "need at least 3 nodes"))
    if not 0 <= pde["theta"] <= 1:
        errors.append(("solver.pde.theta", "theta must lie in [0, 1]"))
    for key in ("x_min", "x_max"):
        if pde[key] is not None and (key == "x_min") == (pde[key] >= s0):
            errors.append((f"solver.pde.{key}", "need x_min < s0 < x_max"))
    unknown = [d for d in v["output"]["diagnostics"] if d not in DIAGNOSTICS + ("all",)]
    if unknown:
        errors.append(("output.diagnostics", f"unknown diagnostics {unknown}"))
    return errors


def _assemble(v, raw):
    mk, it, ct = v["market"], v["intensity"], v["contract"]
    market = MarketModel(r=mk["r"], sigma=mk["sigma"], s0=mk["s0"], phi=mk["payoff"], pi=mk["pi"])
    intensity = IntensityModel(it["lambda1"], it["lambda2"], it["alpha_bar"], it["lambda_min"],
                               it["lambda_max"], it["lipschitz_bound"], it["sign_mode"])
    terms = ContractTerms(T=ct["T"], c=ct["c"], f=ct["f"], h=ct["h"], lgd_i=ct["lgd_i"],
                          lgd_c=ct["lgd_c"], alpha_coll=ct["alpha_coll"], bilateral=ct["bilateral"],
                          hedge=ct["hedge"], simultaneous_rule=ct["simultaneous_rule"])
    out = dict(v["output"])
    diags = out["diagnostics"]
    out["diagnostics"] = DIAGNOSTICS if "all" in diags else tuple(diags)
    bounds = {"market_lipschitz": mk["lipschitz_bound"], "market_growth": mk["growth_bound"],
              "hedge_lipschitz": ct["hedge_lipschitz_bound"]}
    return RunConfig(market, intensity, terms, McSettings(**v["solver.mc"]),
                     PdeSettings(**v["solver.pde"]), OutputSettings(**out), bounds, raw,
                     v["meta"]["schema_version"])


def load_config(path):
    """Read and validate a config file."""
    try:
        source = Path(path).read_text()
    except OSError as exc:
        raise OutputError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(source)


def shipped_config(name):
    """Path of a config shipped with the package (``benchmark``, ``degenerate``, ...)."""
    return Path(__file__).parent / "configs" / f"{name}.cfg"


# --------------------------------------------------------------------------
# assumption probes
# --------------------------------------------------------------------------

@dataclass
class AssumptionCheck:
    name: str
    empirical: float
    declared: float
    passed: bool
    note: str = ""


@dataclass
class AssumptionReport:
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self):
        return {"passed": self.passed,
                "checks": [_jsonable(dataclasses.asdict(c)) for c in self.checks]}


def _lipschitz(values, grid):
    """Largest adjacent-difference slope along the last axis."""
    return float(np.max(np.abs(np.diff(values, axis=-1)) / np.diff(grid)))


def validate_assumptions(config, n_probe=200):
    """Probe Lipschitz and growth constants on a ``n_probe``-point grid.

    ``x`` ranges over ``[s0 / 2, 2 s0]``; hedge sensitivities to ``v`` and
    ``z`` are probed on two nested ranges and flagged when the slope keeps
    growing with the range (no global Lipschitz constant).
    """
    mk, it, tm = config.market, config.intensity, config.terms
    s0, T = mk.s0, tm.T
    x = np.linspace(0.5 * s0, 2.0 * s0, n_probe)
    ts = np.linspace(0.0, T, 5)[:, None]
    X = np.broadcast_to(x, (len(ts), n_probe))
    checks = []

    def add(name, emp, declared, ok=None, note=""):
        ok = emp <= declared if ok is None else ok
        checks.append(AssumptionCheck(name, float(emp), float(declared), bool(ok), note))

    r = np.broadcast_to(mk.r(ts), ts.shape)
    b = r * X
    sig = np.broadcast_to(mk.sigma(X, ts), X.shape)
    lip_b, lip_s = _lipschitz(b, x), _lipschitz(sig, x)
    market_bound = config.bounds["market_lipschitz"]
    add("drift_lipschitz", lip_b, market_bound)
    add("sigma_lipschitz", lip_s, market_bound)
    add("b_plus_sigma_lipschitz", _lipschitz(b + sig, x), market_bound)
    add("sigma_nonvanishing", float(sig.min()), 0.0, ok=bool(sig.min() > 0),
        note="minimum of sigma on the probe grid")
    phi = np.broadcast_to(mk.phi(x), x.shape)
    pi = np.broadcast_to(mk.pi(ts, X), X.shape)
    growth = float(np.max((np.abs(phi) + np.abs(pi)) / (1.0 + np.abs(X))))
    add("growth", growth, config.bounds["market_growth"], note="max (|phi|+|pi|)/(1+|x|)")
    add("pi_lipschitz", _lipschitz(pi, x), market_bound)
    for i, lam_fn in ((1, it.lambda1), (2, it.lambda2)):
        lam = np.broadcast_to(lam_fn(ts, X), X.shape)
        add(f"lambda{i}_max", float(lam.max()), it.lambda_max)
        add(f"lambda{i}_min", float(lam.min()), it.lambda_min, ok=bool(lam.min() >= it.lambda_min))
        add(f"lambda{i}_lipschitz", _lipschitz(lam, x), it.lipschitz)
    rates = [np.broadcast_to(fn(ts[:, 0]), (len(ts),)) for fn in (mk.r, tm.c, tm.f, tm.h)]
    add("rates_bounded", float(max(np.max(np.abs(q)) for q in rates)), math.inf,
        ok=all(np.all(np.isfinite(q)) for q in rates))
    hb = config.bounds["hedge_lipschitz"]
    for arg in ("v", "z"):
        consts = []
        for scale in (10.0, 100.0):
            grid = np.linspace(-scale * s0, scale * s0, n_probe)
            zeros = np.zeros_like(grid)
            vals = [np.broadcast_to(tm.hedge(t, s0, grid if arg == "v" else zeros,
                                             grid if arg == "z" else zeros), grid.shape)
                    for t in ts[:, 0]]
            consts.append(max(_lipschitz(v, grid) for v in vals))
        bounded = consts[1] <= 1.01 * consts[0] + 1e-12
        add(f"hedge_lipschitz_{arg}", consts[1], hb, ok=bounded and consts[1] <= hb,
            note="" if bounded else "slope grows with the probe range")
    return AssumptionReport(checks)


# --------------------------------------------------------------------------
# pricing entry points
# --------------------------------------------------------------------------

def simulate(config, n=None, seed=None, n_steps=None):
    mc = config.mc
    grid = uniform_grid(config.terms.T, n_steps or mc.n_steps)
    return simulate_paths(config.market, config.intensity, grid, n or mc.n,
                          mc.seed if seed is None else seed)


def price_mc(config, drift, n=None, seed=None, n_steps=None, bundle=None):
    """Regression MC price; returns ``(BackwardSolution, PathBundle)``."""
    bundle = bundle or simulate(config, n, seed, n_steps)
    sol = solve_bsde_mc(bundle, config.terms, config.intensity, config.market, drift,
                        RegressionBasis(config.mc.degree), config.mc.picard_max, config.mc.picard_tol)
    return sol, bundle


def price_pde(config, drift, n_x=None, n_t=None, n_i=None):
    return solve_pde(config.market, config.terms, config.intensity, drift,
                     config.pde_grid(n_x, n_t, n_i), seed=config.mc.seed)


def simulate_defaults(config, n=None, seed=None):
    """Default times on the config horizon; deterministic intensities skip asset paths."""
    mc = config.mc
    n = n or mc.n
    seed = mc.seed if seed is None else seed
    grid = uniform_grid(config.terms.T, mc.n_steps)
    if config.intensity.state_dependent:
        hazards = simulate(config, n, seed).hazards
    else:
        hazards = deterministic_hazards(config.intensity, grid)
    z = sample_bve(config.intensity.bve, seed, n)
    return default_times_batch(hazards, z), hazards


# --------------------------------------------------------------------------
# drift comparison
# --------------------------------------------------------------------------

def drift_decomposition(config, t, x, v, z, accumulator_I, m_sum):
    """Split ``drift_new - drift_bfp`` at one state into the three structural differences.

    ``g_division`` is the local part (rates and flows divided by the coupled
    survival, coupled intensity) minus the baseline drift; ``k_integral`` and
    ``k_martingale`` are the two terms proportional to ``K``.
    """
    it, mk, tm = config.intensity, config.market, config.terms
    fine = np.linspace(0.0, t, 1025) if t > 0 else np.zeros(1)
    xs = np.full_like(fine, x)
    l1 = np.broadcast_to(it.lambda1(fine, xs), fine.shape).astype(float)
    l2 = np.broadcast_to(it.lambda2(fine, xs), fine.shape).astype(float)
    L1, L2 = cumulate(fine, l1)[0], cumulate(fine, l2)[0]
    snaps = {}
    for kind in (DriftKind.NEW, DriftKind.BFP):
        g, lam, growth = credit_curves(it, mk, fine, l1, l2, L1, L2, kind)
        g, lam, growth = (np.atleast_2d(a)[0][-1] for a in (g, lam, growth))
        snaps[kind] = (StateSnapshot(t=t, x=x, v=v, z=z, g=g, lam1=l1[-1], lam2=l2[-1], lam=lam,
                                     big_lambda1=L1[-1], big_lambda2=L2[-1]), growth)
    snap_new, growth = snaps[DriftKind.NEW]
    local, k_int, k_mart = drift_new_terms(tm, it, mk, snap_new, accumulator_I, m_sum, growth)
    bfp = float(drift_bfp(tm, it, mk, snaps[DriftKind.BFP][0]))
    new = float(local + k_int + k_mart)
    return {"t": float(t), "x": float(x), "v": float(v), "z": float(z),
            "accumulator_I": float(accumulator_I), "m_sum": float(m_sum),
            "drift_new": new, "drift_bfp": bfp, "difference": new - bfp,
            "g_division": float(local) - bfp, "k_integral": float(k_int),
            "k_martingale": float(k_mart)}


@dataclass
class ComparisonReport:
    v0_new: float
    v0_bfp: float
    delta: float
    solver: str
    table: dict
    diagnostics: dict
    decomposition: dict
    sweep: list = field(default_factory=list)

    def as_dict(self):
        return _jsonable({"v0_new": self.v0_new, "v0_bfp": self.v0_bfp, "delta": self.delta,
                          "solver": self.solver, "table": self.table,
                          "diagnostics": self.diagnostics, "decomposition": self.decomposition,
                          "sweep": self.sweep})


def _compare_point(config, solvers):
    """v0 for both drifts under each requested solver."""
    table, diags, sols = {}, {}, {}
    if "mc" in solvers:
        bundle = simulate(config)
        row = {}
        for kind in (DriftKind.NEW, DriftKind.BFP):
            sol, _ = price_mc(config, kind, bundle=bundle)
            sols[kind] = sol
            row[kind.value] = {"v0": sol.v0, "stderr": sol.stderr}
            diags.setdefault("mc", {})[kind.value] = sol.summary()
        row["delta"] = row[DriftKind.NEW.value]["v0"] - row[DriftKind.BFP.value]["v0"]
        table["mc"] = row
    if "pde" in solvers:
        row = {}
        for kind in (DriftKind.NEW, DriftKind.BFP):
            surf = price_pde(config, kind)
            row[kind.value] = {"v0": surf.v0}
            diags.setdefault("pde", {})[kind.value] = {"picard_trace": surf.picard_trace,
                                                       "grid_report": surf.grid_report}
        row["delta"] = row[DriftKind.NEW.value]["v0"] - row[DriftKind.BFP.value]["v0"]
        table["pde"] = row
    if "mc" in table and "pde" in table:
        se = math.hypot(table["mc"][DriftKind.NEW.value]["stderr"],
                        table["mc"][DriftKind.BFP.value]["stderr"])
        table["delta_gap_in_stderr"] = abs(table["mc"]["delta"] - table["pde"]["delta"]) / se if se else 0.0
    return table, diags, sols


def compare_drifts(config, alpha_bar_sweep=None, parallel=False, solvers=("mc", "pde")):
    """Price both drifts with each solver and decompose the drift difference at ``(0, s0)``.

    With ``alpha_bar_sweep`` one row per common-shock weight is added; the
    points are independent and may run on worker threads when ``parallel``.
    """
    solvers = tuple(solvers)
    if not solvers or not set(solvers) <= {"mc", "pde"}:
        raise ConfigError([("solvers", "choose from mc, pde")])
    table, diags, sols = _compare_point(config, solvers)
    primary = solvers[0]
    v_new = table[primary][DriftKind.NEW.value]["v0"]
    v_bfp = table[primary][DriftKind.BFP.value]["v0"]
    if DriftKind.NEW in sols:
        sol = sols[DriftKind.NEW]
        z0, m0 = float(sol.z[:, 0].mean()), float(sol.m_sum[:, 0].mean())
    else:
        z0, m0 = 0.0, v_new
    decomp = drift_decomposition(config, 0.0, config.market.s0, v_new, z0, 0.0, m0)
    sweep = []
    if alpha_bar_sweep is not None:
        def point(ab):
            cfg = config.with_alpha_bar(ab)
            tab, _, _ = _compare_point(cfg, solvers)
            row = {"alpha_bar": float(ab), "atom_probability": atom_probability(cfg.intensity.bve)}
            for s in solvers:
                row[f"{s}_v0_new"] = tab[s][DriftKind.NEW.value]["v0"]
                row[f"{s}_v0_bfp"] = tab[s][DriftKind.BFP.value]["v0"]
                row[f"{s}_delta"] = tab[s]["delta"]
            return row
        if parallel:
            with ThreadPoolExecutor() as pool:
                sweep = list(pool.map(point, alpha_bar_sweep))
        else:
            sweep = [point(ab) for ab in alpha_bar_sweep]
    return ComparisonReport(v_new, v_bfp, v_new - v_bfp, primary, table, diags, decomp, sweep)


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------

def compensator_report(config, n=None, seed=None, n_times=None):
    """Compensator drift table at ``n_times`` equally spaced times in ``(0, T]``."""
    n = n or config.output.diagnostic_n
    n_times = n_times or config.output.compensator_times
    scen, hazards = simulate_defaults(config, n, seed)
    T = config.terms.T
    times = T * np.arange(1, n_times + 1) / n_times
    return compensator_diagnostic(config.intensity, hazards, scen, times)


def identity_reports(config, n=None, seed=None):
    """Filtering identities: discounted payoff, undiscounted unit claim, payout stream."""
    n = n or config.output.diagnostic_n
    seed = config.mc.seed if seed is None else seed
    bundle = simulate(config, n, seed)
    mk, it = config.market, config.intensity
    return [
        lando_identity_check(bundle, it, mk, mk.phi, seed=seed),
        lando_identity_check(bundle, it, mk, lambda x: np.ones_like(x), seed=seed, zero_rate=True),
        continuous_payout_check(bundle, it, mk, lambda x: x, seed=seed),
    ]


@dataclass
class OrthogonalityReport:
    estimate: float
    stderr: float
    n: int
    n_defaults: int

    @property
    def z_score(self):
        if self.stderr == 0:
            return 0.0 if self.estimate == 0 else math.inf
        return abs(self.estimate) / self.stderr

    def passed(self, k=3.0):
        return self.z_score < k

    def as_dict(self):
        return _jsonable({"estimate": self.estimate, "stderr": self.stderr, "z_score": self.z_score,
                          "n": self.n, "n_defaults": self.n_defaults})


def orthogonality_diagnostic(config, n=None, seed=None):
    """Mean jump of the payoff martingale at the first default.

    ``Y_t = E[Phi(S_T) exp(-int_0^T (r + lam)) | S_t]`` is fitted by regression
    on ``S_t`` at each grid time; the jump at ``tau`` is the change of the
    fitted process across the grid interval containing ``tau`` (zero when
    ``tau > T``).
    """
    n = n or config.output.diagnostic_n
    seed = config.mc.seed if seed is None else seed
    bundle = simulate(config, n, seed)
    mk, it = config.market, config.intensity
    grid = bundle.grid
    g, lam, growth = credit_curves(it, mk, grid, bundle.lam1, bundle.lam2,
                                   bundle.big_lambda1, bundle.big_lambda2, DriftKind.NEW)
    target = np.broadcast_to(mk.phi(bundle.s[:, -1]), (n,)) / np.broadcast_to(growth, bundle.s.shape)[:, -1]
    basis = RegressionBasis(config.mc.degree)
    Y = np.empty_like(bundle.s)
    Y[:, -1] = target
    for k in range(len(grid) - 2, -1, -1):
        Y[:, k] = basis.fit(target, [bundle.s[:, k]])[0]
    z = sample_bve(it.bve, seed, n, stream="diagnostics")
    scen = default_times_batch(bundle.hazards, z)
    tau = scen.tau
    hit = np.isfinite(tau) & (tau <= grid[-1])
    k = np.clip(np.searchsorted(grid, tau, side="left") - 1, 0, len(grid) - 2)
    rows = np.arange(n)
    jump = np.where(hit, Y[rows, k + 1] - Y[rows, k], 0.0)
    se = float(jump.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return OrthogonalityReport(float(jump.mean()), se, n, int(hit.sum()))


# --------------------------------------------------------------------------
# orchestration
# --------------------------------------------------------------------------

def _jsonable(obj):
    """Plain-JSON copy: non-finite floats become ``None``, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(obj):
    """Stable JSON text: sorted keys, non-finite floats as ``null``."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(obj, path):
    text = dumps_json(obj)
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None
    return text


def versions():
    return {"xva_bve": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _guard_io(fn, path, *args):
    try:
        return fn(*args)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None


@dataclass
class RunArtifacts:
    directory: Path
    summary: dict
    files: list


def run_scenario(config, diagnostics=None, out_dir=None, solvers=("mc", "pde"),
                 drifts=(DriftKind.NEW, DriftKind.BFP)):
    """Run solvers and diagnostics, writing ``summary.json`` plus CSV tables to ``out_dir``.

    The summary holds no timestamps, so identical (config, seed) runs produce
    identical files.
    """
    out = Path(out_dir if out_dir is not None else config.output.directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {out}: {exc.strerror}") from None
    if diagnostics is None:
        diagnostics = config.output.diagnostics
    diagnostics = DIAGNOSTICS if "all" in diagnostics else tuple(diagnostics)
    results, diag_out, files = {}, {}, []

    if "mc" in solvers:
        bundle = simulate(config)
        for kind in map(DriftKind.parse, drifts):
            sol, _ = price_mc(config, kind, bundle=bundle)
            results.setdefault("mc", {})[kind.value] = sol.summary()
            path = out / f"mc_profile_{kind.value}.csv"
            _guard_io(np.savetxt, path, path, sol.profile(bundle.grid), "%.17g", ",", "\n",
                      "t,mean_v,mean_z", "", "")
            files.append(path.name)
    if "pde" in solvers:
        for kind in map(DriftKind.parse, drifts):
            surf = price_pde(config, kind)
            results.setdefault("pde", {})[kind.value] = {
                "v0": surf.v0, "picard_iters": len(surf.picard_trace),
                "picard_trace": surf.picard_trace, "grid_report": surf.grid_report}
            path = out / f"pde_surface_t0_{kind.value}.csv"
            t0 = dataclasses.replace(surf, t=surf.t[:1], u=surf.u[:1])
            _guard_io(t0.write_csv, path, path)
            files.append(path.name)

    if "compensator" in diagnostics:
        rep = compensator_report(config)
        prefix = out / "compensator"
        _guard_io(rep.write_csv, prefix, prefix)
        files += [f"compensator_{c}.csv" for c in rep.rows]
        diag_out["compensator"] = {c: {"max_abs_z": rep.max_abs_z(c)} for c in rep.rows}
    if "lando" in diagnostics or "payout" in diagnostics:
        for rep in identity_reports(config):
            tag = "payout" if rep.name == "continuous_payout" else "lando"
            if tag in diagnostics:
                diag_out[rep.name] = rep.as_dict()
    if "orthogonality" in diagnostics:
        diag_out["orthogonality"] = orthogonality_diagnostic(config).as_dict()

    summary = {"schema_version": config.schema_version, "config_hash": config.config_hash,
               "seed": config.mc.seed, "versions": versions(), "results": results,
               "diagnostics": diag_out, "files": sorted(files)}
    write_json(summary, out / "summary.json")
    files.append("summary.json")
    return RunArtifacts(out, _jsonable(summary), sorted(files))


__all__ = [
    "SCHEMA_VERSION", "DIAGNOSTICS", "McSettings", "PdeSettings", "OutputSettings", "RunConfig",
    "parse_config", "load_config", "shipped_config", "AssumptionCheck", "AssumptionReport",
    "validate_assumptions", "simulate", "price_mc", "price_pde", "simulate_defaults",
    "drift_decomposition", "ComparisonReport", "compare_drifts", "compensator_report",
    "identity_reports", "OrthogonalityReport", "orthogonality_diagnostic", "dumps_json", "write_json",
    "versions", "RunArtifacts", "run_scenario",
]
