import math
import warnings

import pytest
from hypothesis import given, settings, strategies as st

from oracles import p_function_direct
from rabi_lattice.errors import InvalidParams, NoRootInBracket
from rabi_lattice.exact import ground_space
from rabi_lattice.model import ModelParams
from rabi_lattice.perturbative import (
    crossing_estimate,
    energy_dressed_ferro,
    energy_ferro,
    p_function,
    perturbative_energies,
)


@pytest.mark.parametrize("alpha", [0.05, 0.3, 0.7, 1.0, 2.0, 4.0])
def test_p_function_matches_direct_sum(alpha):
    assert p_function(alpha) == pytest.approx(p_function_direct(alpha), rel=1e-11)


def test_p_function_zero_and_negative():
    assert p_function(0.0) == 0.0
    with pytest.raises(InvalidParams):
        p_function(-0.1)


def test_p_function_large_argument_is_finite():
    val = p_function(40.0)
    assert math.isfinite(val)
    assert val * 8 * 40.0**2 == pytest.approx(1.0, abs=1e-3)


@settings(max_examples=50, deadline=None)
@given(alpha=st.floats(0.0, 30.0))
def test_p_function_bounded_by_one(alpha):
    val = p_function(alpha)
    assert 0.0 <= val <= 1.0


@settings(max_examples=50, deadline=None)
@given(alpha=st.floats(2.6, 30.0))
def test_p_function_asymptotic_bound(alpha):
    # 1/(8 alpha^2) times (1 + O(1/alpha^2)); the 2% envelope holds from alpha ~ 2.6 on
    assert p_function(alpha) <= 1.02 / (8 * alpha**2)


def test_ferro_energy_at_zero_coupling():
    assert energy_ferro(ModelParams(5, 1.0, 0.0)) == -4.0


@pytest.mark.parametrize("g", [0.02, 0.05])
def test_ferro_energy_against_ed(g):
    p = ModelParams(4, delta=1.0, g=g, n_fock=6)
    e_ed = ground_space(p, k=1).energies[0]
    assert abs(e_ed - energy_ferro(p)) <= 10 * g**4


def test_ferro_energy_warns_outside_validity():
    with pytest.warns(UserWarning):
        energy_ferro(ModelParams(4, delta=1.0, g=2.0))


def test_dressed_energy_against_ed_for_fast_bosons():
    p = ModelParams(3, delta=6.0, g=3.0, n_fock=14)
    e_ed = ground_space(p, k=1).energies[0]
    # third-order terms ~ (N-1) J^3 / delta^2
    assert abs(e_ed - energy_dressed_ferro(p)) <= 2 * 1 / 6.0**2


def test_dressed_energy_large_coupling_limit():
    p = ModelParams(10, delta=0.5, g=5.0)
    assert energy_dressed_ferro(p) == pytest.approx(-10 * 5.0**2 / 0.5, rel=1e-3)


def test_dressed_energy_needs_delta():
    with pytest.raises(InvalidParams):
        energy_dressed_ferro(ModelParams(3, delta=0.0, g=1.0))


def test_crossing_none_for_fast_bosons():
    with pytest.warns(UserWarning):
        assert crossing_estimate(1.5, 1.0, 50) is None


def test_default_bracket_misses_low_delta_root():
    with pytest.raises(NoRootInBracket):
        crossing_estimate(0.3, 1.0, 50)


@pytest.mark.parametrize("delta", [0.3, 0.5, 0.7, 0.9])
def test_scanned_crossing_is_a_root(delta):
    g = crossing_estimate(delta, 1.0, 50, bracket="scan")
    p = ModelParams(50, delta, g)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        diff = energy_ferro(p) - energy_dressed_ferro(p)
    assert abs(diff) <= 1e-7
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        above = ModelParams(50, delta, g + 0.01)
        assert energy_dressed_ferro(above) < energy_ferro(above)


def test_crossing_grows_with_delta():
    gs = [crossing_estimate(d, 1.0, 50, bracket="scan") for d in (0.2, 0.4, 0.6, 0.8)]
    assert all(b > a for a, b in zip(gs, gs[1:]))


def test_explicit_bracket():
    g = crossing_estimate(0.3, 1.0, 50, bracket=(0.4, 0.7))
    assert g == pytest.approx(crossing_estimate(0.3, 1.0, 50, bracket="scan"), abs=1e-8)


def test_perturbative_bundle():
    res = perturbative_energies(ModelParams(50, 0.5, 0.7))
    assert res.alpha == pytest.approx(1.4)
    assert res.crossing_g == pytest.approx(crossing_estimate(0.5, 1.0, 50, bracket="scan"))
