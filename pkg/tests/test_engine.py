import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xva_bve import engine
from xva_bve.bve import BveParams, atom_probability
from xva_bve.errors import ConfigError, OutputError
from xva_bve.registry import parse_function

from conftest import small, edit


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["benchmark", "degenerate", "single_name", "hedged"])
def test_shipped_configs_load_and_validate(name):
    cfg = engine.load_config(engine.shipped_config(name))
    assert cfg.schema_version == engine.SCHEMA_VERSION
    rep = engine.validate_assumptions(cfg)
    assert rep.passed, [c for c in rep.checks if not c.passed]


def test_collateral_range_error_names_key():
    with pytest.raises(ConfigError) as err:
        engine.parse_config(edit("benchmark", contract__alpha_coll="constant(1.5)"))
    assert [k for k, _ in err.value.errors] == ["contract.alpha_coll"]


def test_vanishing_sigma_rejected():
    with pytest.raises(ConfigError) as err:
        engine.parse_config(edit("benchmark", market__sigma="constant(0)"))
    (key, msg), = err.value.errors
    assert key == "market.sigma" and "never vanishes" in msg


def test_unknown_and_missing_keys_listed_together():
    text = edit("benchmark", market__s0=None).replace("[contract]", "[contract]\nfund = 0.1")
    with pytest.raises(ConfigError) as err:
        engine.parse_config(text)
    keys = {k for k, _ in err.value.errors}
    assert {"contract.fund", "market.s0"} <= keys


def test_unknown_section_and_bad_values():
    with pytest.raises(ConfigError) as err:
        engine.parse_config(edit("benchmark") + "\n[extra]\na = 1\n")
    assert err.value.errors[0][0] == "extra"
    for change in ({"market__sigma": "wiggle(1)"}, {"solver_mc__n": "many"},
                   {"contract__bilateral": "perhaps"}, {"meta__schema_version": "9"},
                   {"contract__T": "0"}, {"contract__lgd_c": "1.2"},
                   {"intensity__lambda1": "constant(-0.1)"}, {"output__diagnostics": "tarot"}):
        with pytest.raises(ConfigError):
            engine.parse_config(edit("benchmark", **change))


def test_unparsable_text():
    with pytest.raises(ConfigError):
        engine.parse_config("no section header")


def test_load_missing_file(tmp_path):
    with pytest.raises(OutputError):
        engine.load_config(tmp_path / "absent.cfg")


def test_config_hash_tracks_content():
    a, b = small(), small()
    assert a.config_hash == b.config_hash
    assert small(market__s0="101").config_hash != a.config_hash
    assert a.with_alpha_bar(0.5).config_hash != a.config_hash
    assert a.with_alpha_bar(0.5).intensity.alpha_bar == 0.5


# --------------------------------------------------------------------------
# assumption probes
# --------------------------------------------------------------------------

def test_geometric_sigma_lipschitz_constant(benchmark_cfg):
    rep = engine.validate_assumptions(benchmark_cfg)
    assert rep["sigma_lipschitz"].empirical == pytest.approx(0.2, rel=1e-9)
    assert rep["sigma_nonvanishing"].passed


def test_logistic_intensity_bounded():
    cfg = small(intensity__lambda1="logistic(0.05)")
    rep = engine.validate_assumptions(cfg)
    assert rep["lambda1_max"].empirical <= 0.05 and rep["lambda1_max"].passed
    assert rep["lambda1_lipschitz"].passed


def test_quadratic_hedge_fails():
    rep = engine.validate_assumptions(small(contract__hedge="quadratic_v()"))
    assert not rep["hedge_lipschitz_v"].passed and not rep.passed
    assert "grows" in rep["hedge_lipschitz_v"].note
    assert rep["hedge_lipschitz_z"].passed


def test_report_lookup_and_dict(benchmark_cfg):
    rep = engine.validate_assumptions(benchmark_cfg)
    with pytest.raises(KeyError):
        rep["nothing"]
    d = rep.as_dict()
    assert d["passed"] and {c["name"] for c in d["checks"]} >= {"growth", "rates_bounded"}


# --------------------------------------------------------------------------
# drift comparison
# --------------------------------------------------------------------------

@settings(max_examples=30)
@given(st.floats(0.0, 1.0), st.floats(50, 200), st.floats(-20, 40), st.floats(-30, 30),
       st.floats(-2, 2), st.floats(-20, 40))
def test_decomposition_sums_to_difference(t, x, v, z, acc, m):
    cfg = engine.load_config(engine.shipped_config("benchmark"))
    d = engine.drift_decomposition(cfg, t, x, v, z, acc, m)
    parts = d["g_division"] + d["k_integral"] + d["k_martingale"]
    assert abs(parts - d["difference"]) < 1e-10
    assert d["difference"] == d["drift_new"] - d["drift_bfp"]


def test_decomposition_vanishes_when_degenerate(degenerate_cfg):
    d = engine.drift_decomposition(degenerate_cfg, 0.5, 110.0, 12.0, 3.0, 0.4, 12.0)
    assert d["difference"] == pytest.approx(0.0, abs=1e-12)
    assert d["k_integral"] == 0 and d["k_martingale"] == 0


def test_degenerate_delta_zero():
    rep = engine.compare_drifts(small("degenerate"))
    assert rep.delta == rep.v0_new - rep.v0_bfp
    assert abs(rep.table["mc"]["delta"]) < 1e-9
    assert abs(rep.table["pde"]["delta"]) < 1e-9
    assert set(rep.decomposition) >= {"g_division", "k_integral", "k_martingale"}


def test_alpha_sweep_rows():
    cfg = small(solver_mc__n="2000")
    sweep = [0.0, 0.5, 1.0, 2.0]
    rep = engine.compare_drifts(cfg, sweep, solvers=("pde",))
    rows = rep.sweep
    assert [r["alpha_bar"] for r in rows] == sweep
    p = [r["atom_probability"] for r in rows]
    assert all(b > a for a, b in zip(p, p[1:]))
    assert p == [atom_probability(cfg.with_alpha_bar(ab).intensity.bve) for ab in sweep]
    par = engine.compare_drifts(cfg, sweep, parallel=True, solvers=("pde",))
    assert par.sweep == rows


def test_compare_rejects_unknown_solver(benchmark_cfg):
    with pytest.raises(ConfigError):
        engine.compare_drifts(benchmark_cfg, solvers=("lattice",))


def test_atom_probability_examples():
    assert atom_probability(BveParams(1, 1, 1)) == pytest.approx(1 / 3)
    assert atom_probability(BveParams(1, 1, 0)) == 0


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------

def test_orthogonality_deterministic_path_is_zero(benchmark_cfg):
    mk = dataclasses.replace(benchmark_cfg.market, sigma=parse_function("constant(0)", "vol"))
    cfg = dataclasses.replace(benchmark_cfg, market=mk)
    rep = engine.orthogonality_diagnostic(cfg, n=5000, seed=1)
    assert rep.estimate == 0.0 and rep.z_score == 0.0 and rep.passed()
    assert rep.n_defaults > 0


def test_orthogonality_state_dependent_still_reports():
    cfg = small(intensity__lambda1="affine(0.0,0.001)", intensity__lambda_max="1.0",
                intensity__lipschitz_bound="1")
    rep = engine.orthogonality_diagnostic(cfg, n=3000, seed=2)
    d = rep.as_dict()
    assert set(d) == {"estimate", "stderr", "z_score", "n", "n_defaults"}
    assert math.isfinite(d["estimate"])


def test_orthogonality_report_edge_cases():
    assert engine.OrthogonalityReport(1.0, 0.0, 10, 1).z_score == math.inf
    assert engine.OrthogonalityReport(1.0, 0.5, 10, 1).z_score == 2.0


def test_identity_reports_names():
    names = [r.name for r in engine.identity_reports(small(), n=2000)]
    assert names == ["lando", "lando_zero_rate", "continuous_payout"]


# --------------------------------------------------------------------------
# orchestration
# --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny():
    return small(solver_mc__n="2000", output__diagnostic_n="2000")


def test_run_scenario_creates_directory_and_files(tiny, tmp_path):
    out = tmp_path / "a" / "b"
    art = engine.run_scenario(tiny, ["all"], out)
    assert out.is_dir()
    expect = {"summary.json", "mc_profile_new_bve.csv", "mc_profile_bfp_baseline.csv",
              "pde_surface_t0_new_bve.csv", "pde_surface_t0_bfp_baseline.csv",
              "compensator_reference.csv", "compensator_ratio.csv"}
    assert set(art.files) == expect
    assert expect <= {p.name for p in out.iterdir()}
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["diagnostics"]) == {"compensator", "lando", "lando_zero_rate",
                                           "continuous_payout", "orthogonality"}
    assert summary["config_hash"] == tiny.config_hash and summary["seed"] == tiny.mc.seed
    assert set(summary["versions"]) == {"xva_bve", "numpy", "scipy", "python"}


def test_run_scenario_bit_identical(tiny, tmp_path):
    a = engine.run_scenario(tiny, ["orthogonality"], tmp_path / "a", solvers=("mc",))
    b = engine.run_scenario(tiny, ["orthogonality"], tmp_path / "b", solvers=("mc",))
    for f in a.files:
        assert (a.directory / f).read_bytes() == (b.directory / f).read_bytes()


def test_run_scenario_unwritable(tiny, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OutputError) as err:
        engine.run_scenario(tiny, [], blocker / "sub", solvers=())
    assert str(blocker / "sub") in str(err.value)


def test_json_is_stable():
    text = engine.dumps_json({"b": np.float64(1.5), "a": [np.inf, np.int64(3), np.bool_(True)]})
    assert text == '{\n  "a": [\n    null,\n    3,\n    true\n  ],\n  "b": 1.5\n}\n'
