import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fluxmech import dynamics as dy
from fluxmech import quantum as q
from fluxmech.coupled import FockSpaceSpec
from fluxmech.pulses import ModulationPulse


def test_rate_split():
    r = dy.RateSet.from_device()
    down, up = r.split(0.85, 0.57)
    assert down == pytest.approx(1.57 / 2.14 / 0.85, rel=1e-12)
    assert down == pytest.approx(0.863, abs=1e-3)
    assert up / down == pytest.approx(0.57 / 1.57, rel=1e-12)
    assert r.split(0.85, 0.0)[1] == 0.0
    with pytest.raises(ValueError):
        dy.RateSet(0.0, 0.5, 1.0, 0.0, 1.0)


def _single_qubit(kappa):
    sm = np.array([[0, 1], [0, 0]], complex)
    return dy.LindbladModel(np.diag([0.0, 0.8]).astype(complex), np.zeros((2, 2), complex),
                            [np.sqrt(kappa) * sm], FockSpaceSpec(2, 2, 1))


def test_single_qubit_decay_is_exponential():
    kappa = 0.7  # 1/us
    m = _single_qubit(kappa)
    t = np.linspace(0, 3000, 31)
    res = dy.integrate_lindblad(m, np.diag([0.0, 1.0]).astype(complex), t, dt=1.0)
    assert np.allclose(res.p_e, np.exp(-kappa * res.times), atol=1e-6)


def test_thermal_fixed_point():
    nm, n_th, kappa = 10, 0.57, 1.0
    b = q.ladder_operators(nm)[0]
    ops = [np.sqrt(kappa * (1 + n_th)) * b, np.sqrt(kappa * n_th) * b.conj().T]
    m = dy.LindbladModel(np.zeros((nm, nm), complex), np.zeros((nm, nm), complex), ops,
                         FockSpaceSpec(1, 1, nm))
    rho0 = np.zeros((nm, nm), complex)
    rho0[0, 0] = 1
    out = dy.steady_state_check(m, rho0, 25000.0, dt_free=5.0)
    f = 690e6
    temp = q.H_PLANCK * f / (q.K_BOLTZMANN * np.log1p(1 / n_th))
    ref = q.thermal_density_matrix(f, temp, nm, tol=1.0)
    assert q.trace_distance(out, ref) < 1e-6


def _closed(model):
    return dy.LindbladModel(model.h0, model.drive_op, [], model.dims, model.levels, model.vecs,
                            model.energies)


def test_closed_evolution_keeps_purity(small_model):
    m = _closed(small_model)
    psi = np.zeros(m.dim, complex)
    psi[m.dressed_index(("e", 0))] = 1
    rho = m.vecs @ np.outer(psi, psi.conj()) @ m.vecs.conj().T
    out = dy.evolve_magnus(m, rho, [ModulationPulse(v0=300.0)], 0.0, 100.0, 0.1)
    assert q.purity(out) == pytest.approx(1.0, abs=1e-8)


def test_pi_pulse_properties(small_model):
    m = small_model
    u = dy.ideal_pi_pulse(m)
    assert np.linalg.norm(u.conj().T @ u - np.eye(m.dim)) < 1e-12
    assert np.allclose(u @ u, np.eye(m.dim), atol=1e-12)
    rho = dy.thermal_joint_state(m, 0.033)
    out = dy.apply_unitary(u, rho)
    (q0, m0), (q1, m1) = m.marginals(rho), m.marginals(out)
    assert q1[0] == pytest.approx(q0[1], abs=1e-12) and q1[1] == pytest.approx(q0[0], abs=1e-12)
    assert np.allclose(m0, m1, atol=1e-12)


def test_readout_signal_bounds(small_model):
    m = small_model
    rho = dy.thermal_joint_state(m, 0.033)
    assert dy.readout_signal(rho, rho, m) == 0.0
    k = m.dressed_index(("g", 0))
    g0 = np.outer(m.vecs[:, k], m.vecs[:, k].conj())
    flipped = dy.apply_unitary(dy.ideal_pi_pulse(m), g0)
    assert dy.readout_signal(flipped, g0, m) == pytest.approx(2.0, abs=1e-12)


@settings(max_examples=8, deadline=None)
@given(st.floats(0.0, 600.0), st.floats(130.0, 180.0), st.floats(0, 2 * np.pi))
def test_driven_evolution_hygiene(small_model, v0, f_mod, theta):
    m = small_model
    rho = dy.prepared_state(m)
    out = dy.evolve_magnus(m, rho, [ModulationPulse(v0=v0, f_mod=f_mod, theta=theta)], 0.0, 100.0)
    assert abs(np.trace(out) - 1) < 1e-7
    assert np.abs(out - out.conj().T).max() < 1e-9
    assert np.linalg.eigvalsh(out).min() > -1e-9


def test_step_halving_convergence(small_model):
    res = dy.integrate_lindblad(small_model, dy.prepared_state(small_model), [0.0, 50.0, 100.0],
                                ModulationPulse(v0=300.0), dt=0.1, step_check=True)
    assert res.diagnostics["step_change"] < 1e-6


def test_magnus_agrees_with_rk4(small_model):
    rho = dy.prepared_state(small_model)
    p = ModulationPulse(v0=300.0)
    a = dy.integrate_lindblad(small_model, rho, [0.0, 100.0], p, dt=0.05)
    b = dy.integrate_lindblad(small_model, rho, [0.0, 100.0], p, method="rk4")
    assert np.allclose(a.qubit_populations, b.qubit_populations, atol=1e-5)


def test_integrate_rejects_bad_grid(small_model):
    with pytest.raises(ValueError):
        dy.integrate_lindblad(small_model, dy.prepared_state(small_model), [10.0, 0.0])
    with pytest.raises(ValueError):
        dy.integrate_lindblad(small_model, np.eye(2), [0.0, 1.0])


def test_zero_amplitude_column_is_flat(small_model):
    # without collapse operators an undriven window leaves dressed populations alone
    sweep = dy.rabi_amplitude_sweep(_closed(small_model), ModulationPulse(), [0.0], [150.0, 155.6])
    assert np.abs(sweep.signal).max() < 1e-6
    # with dissipation the same window only shows slow qubit relaxation
    open_ = dy.rabi_amplitude_sweep(small_model, ModulationPulse(), [0.0], [155.6])
    assert open_.signal.max() < 0.1


def test_swap_sequence_validation(small_model):
    with pytest.raises(ValueError):
        dy.swap_sequence(small_model, ModulationPulse(v0=300.0), [1.0, 0.5])
    with pytest.raises(ValueError):
        dy.swap_sequence(small_model, ModulationPulse(v0=300.0), [0.0], prep="x")


SWAP = ModulationPulse(v0=292.3, f_mod=155.6)


def _poly_residual(t, y, deg=3):
    return float(np.std(y - np.polyval(np.polyfit(t, y, deg), t)))


def test_swap_t1m_single_rate_oracle():
    from conftest import FLUX_SWAP, MECH, DEVICE
    from fluxmech.decoherence import stretched_exp_fit

    # cold mode and bath, qubit decoherence off: one decay channel left
    rates = dy.RateSet(0.85, 0.0, 1e6, 0.0, np.inf)
    m = dy.build_lindblad_model(DEVICE, FLUX_SWAP, MECH, rates, FockSpaceSpec(60, 4, 6))
    d = np.linspace(0, 4, 13)
    res = dy.swap_sequence(m, SWAP, d, temp=0.002)
    fit = stretched_exp_fit(d, res.mean_p_e, constrained=True, offset=True)
    assert fit.one_over_e == pytest.approx(0.85, rel=0.15)


def test_four_phase_average_cancels_fast_oscillation(small_model):
    d = np.linspace(0, 1, 31)
    four = dy.swap_sequence(small_model, SWAP, d)
    one = dy.swap_sequence(small_model, SWAP, d, phases=(0.0,))
    assert _poly_residual(d, four.mean_p_e) < 0.2 * _poly_residual(d, one.mean_p_e)
    assert four.signal[0] > 0.3  # the round trip keeps a sizable share of the excitation
