import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from xva_bve.bve import (BveParams, BveSamples, atom_probability, decompose, sample, survival,
                         write_csv)
from xva_bve.errors import DomainError, ModelError

from conftest import binomial_se

rates = st.floats(0.0, 3.0)
times = st.floats(0.0, 5.0)


@st.composite
def params(draw):
    a1, a2, ab = draw(rates), draw(rates), draw(rates)
    assume(a1 + ab > 1e-3 and a2 + ab > 1e-3)
    return BveParams(a1, a2, ab)


def test_survival_standard_unit_point():
    assert survival(BveParams.standard(1.0), 1.0, 1.0) == pytest.approx(math.exp(-3), rel=1e-15)
    assert math.exp(-3) == pytest.approx(0.0497871, abs=1e-7)


def test_survival_origin_is_one():
    assert survival(BveParams(0.3, 2.0, 0.7), 0.0, 0.0) == 1.0


def test_survival_half_shock():
    assert survival(BveParams.standard(0.5), 2.0, 1.0) == pytest.approx(math.exp(-4), rel=1e-15)


def test_survival_rejects_negative():
    with pytest.raises(DomainError):
        survival(BveParams.standard(1.0), -0.1, 1.0)
    with pytest.raises(DomainError):
        decompose(BveParams.standard(1.0), 1.0, -1.0)


def test_params_validation():
    with pytest.raises(ModelError):
        BveParams(-1.0, 1.0, 1.0)
    with pytest.raises(ModelError):
        BveParams(0.0, 1.0, 0.0)
    assert BveParams(0.0, 0.0, 1.0).mu() == 1.0


def test_decompose_standard_weights():
    w_ac, f_a, w_s, f_s = decompose(BveParams.standard(1.0), 1.0, 1.0)
    assert (w_ac, w_s) == pytest.approx((2 / 3, 1 / 3))
    assert f_s == pytest.approx(math.exp(-3))


def test_decompose_independent_limit():
    p = BveParams(0.7, 1.3, 0.0)
    w_ac, f_a, w_s, f_s = decompose(p, 0.4, 2.0)
    assert w_s == 0.0
    assert w_ac * f_a == pytest.approx(math.exp(-0.7 * 0.4) * math.exp(-1.3 * 2.0), rel=1e-14)


def test_decompose_recombines_off_diagonal():
    p = BveParams.standard(1.0)
    w_ac, f_a, w_s, f_s = decompose(p, 1.0, 2.0)
    # absolutely continuous part written out by hand
    mu = 3.0
    joint = math.exp(-1 - 2 - 2)
    assert f_a == pytest.approx((mu * joint - 1.0 * math.exp(-mu * 2)) / 2.0, rel=1e-14)
    assert w_ac * f_a + w_s * f_s == pytest.approx(joint, rel=1e-14)


def test_recombination_grid():
    p = BveParams(0.8, 1.4, 0.6)
    s, t = np.meshgrid(np.linspace(0, 4, 12), np.linspace(0, 4, 12))
    w_ac, f_a, w_s, f_s = decompose(p, s, t)
    assert np.max(np.abs(w_ac * f_a + w_s * f_s - survival(p, s, t))) < 1e-12


@given(params(), times, times)
def test_recombination_property(p, s, t):
    w_ac, f_a, w_s, f_s = decompose(p, s, t)
    assert abs(w_ac * f_a + w_s * f_s - survival(p, s, t)) < 1e-12


@given(params(), times, times, st.floats(0.0, 2.0))
def test_survival_non_increasing(p, s, t, ds):
    base = survival(p, s, t)
    assert 0.0 < base <= 1.0 or base == 0.0
    assert survival(p, s + ds, t) <= base + 1e-15
    assert survival(p, s, t + ds) <= base + 1e-15


@given(params(), times)
def test_survival_marginal(p, s):
    assert survival(p, s, 0.0) == pytest.approx(math.exp(-(p.alpha1 + p.alpha_bar) * s), rel=1e-14)


def test_atom_probability_values():
    assert atom_probability(BveParams.standard(1.0)) == pytest.approx(1 / 3)
    assert atom_probability(BveParams.standard(0.0)) == 0.0
    assert atom_probability(BveParams.standard(2.0)) == pytest.approx(0.5)


def test_sample_independent_case_never_simultaneous():
    z = sample(BveParams.standard(0.0), 5, 50000)
    assert not z.simultaneous.any()


def test_sample_zero_is_empty():
    z = sample(BveParams.standard(1.0), 5, 0)
    assert len(z) == 0


def test_sample_deterministic_and_structural_flag():
    p = BveParams.standard(1.0)
    a, b = sample(p, 11, 20000), sample(p, 11, 20000)
    assert np.array_equal(a.z1, b.z1) and np.array_equal(a.simultaneous, b.simultaneous)
    assert np.all(a.z1[a.simultaneous] == a.z2[a.simultaneous])
    assert np.all(a.z1 > 0) and np.all(a.z2 > 0)
    one = a[3]
    assert one.z1 == a.z1[3] and one.simultaneous == a.simultaneous[3]
    assert isinstance(a[:5], BveSamples) and len(a[:5]) == 5


def test_sample_prefix_stable_across_sizes():
    p = BveParams.standard(1.0)
    small, big = sample(p, 2, 1000), sample(p, 2, 70000)
    assert np.array_equal(small.z1, big.z1[:1000])


def test_empirical_half_shock_survival():
    p = BveParams.standard(0.5)
    z = sample(p, 21, 1_000_000)
    emp = np.mean((z.z1 > 2.0) & (z.z2 > 1.0))
    exact = math.exp(-4)
    assert abs(emp - exact) < 3 * binomial_se(exact, len(z))


@pytest.mark.parametrize("alpha_bar", [1.0, 2.0])
def test_empirical_atom_mass(alpha_bar):
    p = BveParams.standard(alpha_bar)
    z = sample(p, 8, 1_000_000)
    q = atom_probability(p)
    assert abs(z.simultaneous.mean() - q) < 3 * binomial_se(q, len(z))


def test_marginal_rate_is_one_plus_shock():
    z = sample(BveParams.standard(1.0), 9, 1_000_000)
    se = z.z1.std(ddof=1) / math.sqrt(len(z))
    assert abs(z.z1.mean() - 0.5) < 3 * se


def test_empirical_joint_survival_grid():
    p = BveParams.standard(1.0)
    z = sample(p, 13, 1_000_000)
    pts = np.linspace(0.05, 1.2, 5)
    for s in pts:
        for t in pts:
            exact = survival(p, s, t)
            emp = np.mean((z.z1 > s) & (z.z2 > t))
            assert abs(emp - exact) < 3 * binomial_se(exact, len(z)) + 1e-12


def test_independence_when_no_shock():
    z = sample(BveParams.standard(0.0), 17, 1_000_000)
    a, b = (z.z1 > 0.5).astype(float), (z.z2 > 0.5).astype(float)
    rho = np.corrcoef(a, b)[0, 1]
    assert abs(rho) < 3 / math.sqrt(len(z))


def test_write_csv(tmp_path):
    z = sample(BveParams.standard(1.0), 1, 50)
    path = tmp_path / "z.csv"
    write_csv(z, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "z1,z2,simultaneous"
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 0], z.z1)
    assert np.array_equal(data[:, 2].astype(bool), z.simultaneous)
