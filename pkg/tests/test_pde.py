import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xva_bve import engine
from xva_bve.errors import ConvergenceError, DomainError, ModelError
from xva_bve.pde import PdeGrid, solve_pde, z_from_surface

from conftest import bs_call, bs_delta, intensity, market, terms

DEGEN = dict(c="0.02", f="0.02", h="0.02")


def grid(n_x=400, n_t=400, **kw):
    return PdeGrid(20.0, 300.0, n_x=n_x, n_t=n_t, **kw)


@pytest.fixture(scope="module")
def bs_surface():
    return solve_pde(market(), terms(**DEGEN), intensity(), "bfp", grid())


def test_black_scholes_price_and_delta(bs_surface):
    exact = bs_call(100, 100, 0.02, 0.2, 1.0)
    assert abs(bs_surface.v0 - exact) < 0.005 * exact
    z = z_from_surface(bs_surface, market(), 0.0, 100.0)
    z_exact = 0.2 * 100 * bs_delta(100, 100, 0.02, 0.2, 1.0)
    assert z_exact == pytest.approx(11.59, abs=0.01)
    assert abs(z - z_exact) < 0.01 * z_exact


@pytest.mark.parametrize("kind", ["new", "bfp"])
def test_both_drifts_agree_without_credit(kind, bs_surface):
    s = solve_pde(market(), terms(**DEGEN), intensity(), kind, grid(n_i=5))
    assert s.v0 == pytest.approx(bs_surface.v0, rel=1e-12)


def test_terminal_layer_is_payoff(bs_surface):
    assert np.array_equal(bs_surface.u[-1, :, 0], market().phi(bs_surface.x))


def test_s0_is_node(bs_surface):
    assert np.any(bs_surface.x == 100.0)


def test_constant_payoff_discounting():
    mk = market(r="0.03", payoff="constant(5)")
    s = solve_pde(mk, terms(c="0.03", f="0.03", h="0.03"), intensity(), "bfp", grid(100, 200))
    assert s.v0 == pytest.approx(5 * math.exp(-0.03), rel=1e-6)
    assert np.max(np.abs(s.du_dx)) < 1e-10


def test_grid_refinement():
    coarse = solve_pde(market(), terms(**DEGEN), intensity(), "bfp", grid(400, 400)).v0
    fine = solve_pde(market(), terms(**DEGEN), intensity(), "bfp", grid(800, 800)).v0
    assert abs(fine - coarse) < 1e-3 * fine


@settings(max_examples=10)
@given(st.floats(60, 140), st.floats(0, 30))
def test_comparison_principle(k, gap):
    mk_lo = market(payoff=f"call({k + gap!r})")
    mk_hi = market(payoff=f"call({k!r})")
    tm = terms(c="0.01", f="0.03", h="0.02", lgd_c=0.6, lgd_i=0.4, alpha="0.5")
    it = intensity("0.02", "0.03", 1.0)
    g = grid(80, 40, theta=1.0, rannacher=0)
    lo = solve_pde(mk_lo, tm, it, "bfp", g).u
    hi = solve_pde(mk_hi, tm, it, "bfp", g).u
    # edge nodes are linear extrapolations, not scheme unknowns
    assert np.all(lo[:, 1:-1] <= hi[:, 1:-1] + 1e-12)


def test_one_and_two_dimensional_agree():
    tm = terms(c="0.01", f="0.03", h="0.02", lgd_c=0.6, lgd_i=0.4, alpha="0.5")
    it = intensity("0.02", "0.03", 1.0)
    flat = solve_pde(market(), tm, it, "bfp", grid(200, 100))
    full = solve_pde(market(), tm, it, "bfp", grid(200, 100, n_i=5, i_min=-1.0, i_max=2.0))
    assert full.u.shape[2] == 5
    assert np.max(np.abs(full.u - flat.u)) < 1e-8


def test_explicit_scheme_limits():
    g = grid(200, 10, theta=0.0, rannacher=0)
    with pytest.raises(DomainError):
        solve_pde(market(), terms(**DEGEN), intensity(), "bfp", g)
    ok = solve_pde(market(), terms(**DEGEN), intensity(), "bfp", grid(30, 400, theta=0.0, rannacher=0))
    assert ok.grid_report["dt"] <= ok.grid_report["explicit_dt_limit"]
    assert ok.v0 == pytest.approx(bs_call(100, 100, 0.02, 0.2, 1.0), rel=0.05)


def test_state_dependent_intensity_rejected():
    with pytest.raises(ModelError):
        solve_pde(market(), terms(), intensity("affine(0.01,0.0001)"), "bfp", grid(50, 20))


def test_grid_validation():
    with pytest.raises(DomainError):
        PdeGrid(10, 5)
    with pytest.raises(DomainError):
        PdeGrid(0, 1, n_x=2)
    with pytest.raises(DomainError):
        PdeGrid(0, 1, theta=1.5)
    with pytest.raises(DomainError):
        solve_pde(market(), terms(), intensity(), "bfp", PdeGrid(150, 300, n_x=50, n_t=10))


def test_interpolation_hull(bs_surface):
    with pytest.raises(DomainError):
        bs_surface.value(0.0, 10.0)
    with pytest.raises(DomainError):
        bs_surface.value(1.5, 100.0)
    assert bs_surface.value(0.0, 100.0) == pytest.approx(bs_surface.v0, rel=1e-12)
    assert bs_surface.value(1.0, 150.0) == pytest.approx(50.0, rel=1e-12)


def test_surface_csv(tmp_path):
    s = solve_pde(market(), terms(**DEGEN), intensity(), "bfp", grid(20, 10))
    path = tmp_path / "surface.csv"
    s.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x,I,u"
    table = np.loadtxt(path, delimiter=",", skiprows=1)
    assert table.shape == (len(s.t) * len(s.x), 4)
    assert np.array_equal(table[:, 3], s.u.ravel())


@pytest.fixture(scope="module")
def benchmark_new(benchmark_cfg):
    return engine.price_pde(benchmark_cfg, "new", n_x=200, n_t=100, n_i=20)


def test_benchmark_picard_converges(benchmark_new, benchmark_cfg):
    trace = benchmark_new.picard_trace
    assert len(trace) >= 2
    assert abs(trace[-1] - trace[-2]) < benchmark_cfg.pde.picard_tol * abs(trace[-1])
    rep = benchmark_new.grid_report
    assert rep["i_min"] <= 0.0 <= rep["i_max"] and rep["n_i"] == 20
    assert rep["fixed_point_iters_max"] >= 1


def test_coupling_raises_value(benchmark_new, benchmark_cfg):
    bfp = engine.price_pde(benchmark_cfg, "bfp", n_x=200, n_t=100)
    assert benchmark_new.v0 > bfp.v0


def test_picard_failure_has_trace(benchmark_cfg):
    g = PdeGrid(20, 300, n_x=60, n_t=20, n_i=5, picard_max=2, picard_tol=1e-300)
    cfg = benchmark_cfg
    with pytest.raises(ConvergenceError) as err:
        solve_pde(cfg.market, cfg.terms, cfg.intensity, "new", g)
    assert len(err.value.trace) == 2


@pytest.mark.slow
@pytest.mark.parametrize("name", ["degenerate", "single_name", "hedged"])
@pytest.mark.parametrize("kind", ["new", "bfp"])
def test_mc_pde_cross_check(name, kind):
    cfg = engine.load_config(engine.shipped_config(name))
    sol, _ = engine.price_mc(cfg, kind, n=50000)
    pde = engine.price_pde(cfg, kind, n_x=200, n_t=100, n_i=20)
    assert abs(sol.v0 - pde.v0) < 3 * sol.stderr + 2e-3 * abs(pde.v0)
