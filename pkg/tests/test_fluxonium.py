import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fluxmech import fluxonium as fx
from fluxmech.quantum import TruncationWarning
from conftest import DEVICE

HARMONIC = fx.FluxoniumParams(0.8, 1e-12, 0.8)


def test_harmonic_limit_spacing_and_charge_element():
    s = fx.qudit_spectrum(HARMONIC, 0.3, 6, 80)
    assert np.allclose(np.diff(s.energies), HARMONIC.plasma_ghz, atol=1e-9)
    assert s.charge_elements[0, 1] == pytest.approx(HARMONIC.n_zpf, rel=1e-9)


def test_rejects_nonpositive_energies():
    with pytest.raises(ValueError):
        fx.FluxoniumParams(0.8, 0.0, 0.8)


def test_half_flux_qubit_below_mechanics():
    assert fx.transition_frequency(DEVICE, 0.5) * 1e3 < 691.75


def test_truncation_doubling_below_1khz():
    f100 = fx.transition_frequency(DEVICE, 0.4751, n_fock=100)
    f200 = fx.transition_frequency(DEVICE, 0.4751, n_fock=200)
    assert abs(f100 - f200) < 1e-6
    assert fx.check_convergence(DEVICE, 0.4751) < 1e-6


def test_small_basis_warns():
    with pytest.warns(TruncationWarning):
        fx.build_fluxonium_hamiltonian(DEVICE, 0.5, 10)


def test_charge_elements_near_half_flux():
    s = fx.qudit_spectrum(DEVICE, 0.5, 4)
    n = s.charge_elements
    assert n[0, 1] == pytest.approx(13.56 / 66.6, abs=0.02)
    assert n[0, 2] < 1e-6  # parity
    assert n[0, 3] == pytest.approx(0.3, abs=0.1)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 0.2))
def test_symmetric_about_half_flux(d):
    a = fx.transition_frequency(DEVICE, 0.5 + d, n_fock=60)
    b = fx.transition_frequency(DEVICE, 0.5 - d, n_fock=60)
    assert abs(a - b) < 1e-6


def test_tuning_curve_shape():
    grid = np.linspace(0.47, 0.5, 13)
    f = np.array([v for _, v in fx.tuning_curve(DEVICE, grid)])
    assert np.all(np.diff(f) < 0)  # rising away from half flux
    assert np.argmin(f) == len(grid) - 1
    with pytest.raises(ValueError):
        fx.tuning_curve(DEVICE, [])


@pytest.mark.parametrize("flux, slope", [(0.4751, 10.67), (0.4726, 11.34)])
def test_flux_slope_at_bias_points(flux, slope):
    assert abs(fx.flux_slope(DEVICE, flux)) == pytest.approx(slope, rel=0.05)


def test_slope_vanishes_at_sweet_spot():
    assert abs(fx.flux_slope(DEVICE, 0.5)) < 1e-3


def test_flux_from_volts():
    assert fx.FluxBias.from_volts(7.540).phi_e_over_phi0 == pytest.approx(0.5)
    b = fx.FluxBias.from_volts(7.540 + 25.56)
    assert b.phi_e_over_phi0 == pytest.approx(1.5)
    with pytest.raises(ValueError):
        fx.FluxBias.from_volts(1.0, v_period=0)
