import math

import numpy as np
import pytest
from hypothesis import settings
from scipy.stats import norm

from xva_bve import engine
from xva_bve.cashflows import ContractTerms
from xva_bve.cox import IntensityModel
from xva_bve.paths import MarketModel
from xva_bve.registry import parse_function

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("repo")


def bs_call(s, k, r, sigma, T):
    d1 = (math.log(s / k) + (r + 0.5 * sigma ** 2) * T) / (sigma * math.sqrt(T))
    d2 = d1 - sigma * math.sqrt(T)
    return s * norm.cdf(d1) - k * math.exp(-r * T) * norm.cdf(d2)


def bs_delta(s, k, r, sigma, T):
    d1 = (math.log(s / k) + (r + 0.5 * sigma ** 2) * T) / (sigma * math.sqrt(T))
    return norm.cdf(d1)


def fn(text, role):
    return parse_function(text, role)


def market(r="0.02", sigma="geometric(0.2)", s0=100.0, payoff="call(100)", pi="0"):
    return MarketModel(fn(r, "time"), fn(sigma, "vol"), s0, fn(payoff, "payoff"), fn(pi, "state"))


def intensity(l1="0", l2="0", alpha_bar=0.0, **kw):
    return IntensityModel(fn(l1, "state"), fn(l2, "state"), alpha_bar, **kw)


def terms(T=1.0, c="0", f="0", h="0", alpha="0", hedge="0", **kw):
    return ContractTerms(T=T, c=fn(c, "time"), f=fn(f, "time"), h=fn(h, "time"),
                         alpha_coll=fn(alpha, "time"), hedge=fn(hedge, "hedge"), **kw)


def edit(name, **changes):
    """Shipped config text with ``section__key=value`` overrides (``None`` deletes)."""
    lines, section = [], None
    for line in engine.shipped_config(name).read_text().splitlines():
        s = line.strip()
        if s.startswith("["):
            section = s[1:-1].replace(".", "_")
        elif "=" in s:
            key = s.split("=")[0].strip()
            tag = f"{section}__{key}"
            if tag in changes:
                val = changes.pop(tag)
                if val is None:
                    continue
                line = f"{key} = {val}"
        lines.append(line)
    assert not changes, f"no such keys: {sorted(changes)}"
    text = "\n".join(lines) + "\n"
    return text


SMALL = dict(solver_mc__n="4000", solver_mc__n_steps="10", solver_pde__n_x="60",
             solver_pde__n_t="20", solver_pde__n_i="6", solver_pde__pilot_paths="500",
             output__diagnostic_n="4000", output__compensator_times="3")


def small(name="benchmark", **kw):
    return engine.parse_config(edit(name, **{**SMALL, **kw}))


def binomial_se(p, n):
    return math.sqrt(p * (1 - p) / n)


def _cfg(name):
    return engine.load_config(engine.shipped_config(name))


@pytest.fixture(scope="session")
def benchmark_cfg():
    return _cfg("benchmark")


@pytest.fixture(scope="session")
def degenerate_cfg():
    return _cfg("degenerate")


@pytest.fixture(scope="session")
def single_name_cfg():
    return _cfg("single_name")


@pytest.fixture(scope="session")
def hedged_cfg():
    return _cfg("hedged")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
