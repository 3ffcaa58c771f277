"""Acceptance run: one PASS/FAIL line per criterion, at the stated tolerances."""

import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

from fluxmech import circuit as cq
from fluxmech import coupled as cp
from fluxmech import decoherence as dc
from fluxmech import dynamics as dy
from fluxmech import fluxonium as fx
from fluxmech import quantum as q
from fluxmech import spectra as sp
from fluxmech.pulses import ModulationPulse
from conftest import FLUX_COHERENT, FLUX_SWAP, MECH, NS_NBAR, NS_TWO_CHI, DEVICE, closure_trial

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "scripts"))
import chevron  # noqa: E402


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail, elapsed=None, limit=None):
        if limit is not None:
            ok = ok and elapsed < limit
            detail += f"; {elapsed:.1f} s (limit {limit:g} s)"
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail
    return report


def test_criterion_01_avoided_crossing(verdict):
    t = time.perf_counter()
    gap, flux = cp.avoided_crossing_gap(DEVICE, MECH, np.linspace(0.48, 0.5, 21))
    verdict(1, abs(gap - 27.1) <= 0.5, f"gap {gap:.2f} MHz at {flux:.4f} (27.1 +- 0.5)",
            time.perf_counter() - t, 10)


def test_criterion_02_dispersive_shift(verdict):
    t = time.perf_counter()
    dims = cp.FockSpaceSpec(100, 6, 6)
    exact = {}
    for f in (FLUX_COHERENT, FLUX_SWAP):
        exact[f] = cp.dispersive_shift_exact(cp.build_joint_hamiltonian(DEVICE, f, MECH, dims=dims), dims)
    dev_e, dev_f = [], []
    for f in np.linspace(0.47, 0.478, 9):
        s = fx.qudit_spectrum(DEVICE, f, 6)
        ex = cp.dispersive_shift_exact(cp.build_joint_hamiltonian(DEVICE, f, MECH, dims=dims), dims)
        dev_e.append(abs(cp.dispersive_shift_pt(s, MECH.g, MECH.omega0, 1).two_chi / ex - 1))
        dev_f.append(abs(cp.dispersive_shift_pt(s, MECH.g, MECH.omega0, 2).two_chi / ex - 1))
    ok = (abs(exact[FLUX_COHERENT] - 2.23) <= 0.1 and abs(exact[FLUX_SWAP] - 1.67) <= 0.1
          and max(dev_f) < 0.1 and np.mean(dev_e) > np.mean(dev_f))
    verdict(2, ok, f"exact {exact[FLUX_COHERENT]:.3f}/{exact[FLUX_SWAP]:.3f} MHz; "
                   f"PT-f max dev {max(dev_f):.3f}, PT-e mean dev {np.mean(dev_e):.3f} "
                   f"vs PT-f {np.mean(dev_f):.3f}", time.perf_counter() - t, 30)


def test_criterion_03_thermal_occupation(verdict):
    t = time.perf_counter()
    temp = sp.effective_temperature(0.57, 690e6)
    n_back = sp.occupation_from_temperature(0.033, 690e6)
    ok = abs(temp / 0.033 - 1) < 0.03 and abs(n_back / 0.57 - 1) < 0.03
    verdict(3, ok, f"T(0.57) = {temp * 1e3:.2f} mK, n(33 mK) = {n_back:.4f}",
            time.perf_counter() - t, 1)


def test_criterion_04_cooperativities(verdict):
    t = time.perf_counter()
    c1, c2 = dc.cooperativities(1.67, 3.57, 0.85, 0.33, 3.93)
    ok = abs(c1 / 330 - 1) <= 0.05 and abs(c2 / 570 - 1) <= 0.05
    verdict(4, ok, f"C_T1 {c1:.1f} (330), C_T2 {c2:.1f} (570)", time.perf_counter() - t, 1)


def test_criterion_05_one_over_f(verdict):
    t = time.perf_counter()
    noise = dc.OneOverFNoise(1.0, 1.0, 2 * np.pi / 600.0, 5e-6)
    parts, ok = [], True
    for slope, w1, w0 in ((10.67, 18.0, 3.6), (11.34, 17.0, 3.4)):
        t1 = dc.dephasing_time_1f(noise, slope, 1)
        t0 = dc.dephasing_time_1f(noise, slope, 0)
        ok &= abs(t1 / w1 - 1) <= 0.1 and abs(t0 / w0 - 1) <= 0.1 and abs(t1 / t0 / 4.9 - 1) <= 0.1
        parts.append(f"{slope}: {t1:.2f}/{t0:.3f} us ratio {t1 / t0:.2f}")
    verdict(5, ok, "; ".join(parts), time.perf_counter() - t, 1)


def test_criterion_06_thermal_dephasing(verdict):
    t = time.perf_counter()
    inv = 1 / dc.thermal_dephasing_rate(1 / 0.85, -11.2 / 2, 0.57)
    verdict(6, abs(inv / 1.5 - 1) <= 0.1, f"1/Gamma = {inv:.3f} us (1.5)", time.perf_counter() - t, 1)


@pytest.mark.slow
def test_criterion_07_swap_chevron(verdict):
    sweep, elapsed = chevron.run(40, jobs=4)
    s = sweep.summary(155.6)
    slope = chevron.ridge_slope(sweep)
    ok = abs(s["P1_at_max_signal"] - 0.45) <= 0.05 and abs(s["max_P1"] - 0.54) <= 0.05 and slope > 0
    verdict(7, ok, f"P1 at max signal {s['P1_at_max_signal']:.3f} (0.45), max P1 {s['max_P1']:.3f} "
                   f"(0.54), ridge slope {slope:+.4f} MHz/mVpp", elapsed, 1200)


def test_criterion_08_circuit(verdict):
    t = time.perf_counter()
    lc = cq.LcParams(1.45, 9.42, 5.21)
    bvd = cq.bvd_from_lc(lc)
    back = cq.lc_from_bvd(bvd)
    dev_tab = max(abs(g / w - 1) for g, w in zip((bvd.c0, bvd.c_m, bvd.l_m), (1.26, 0.193, 293.0)))
    dev_rt = max(abs(g / w - 1) for g, w in zip((back.c_in, back.c1, back.l1), (1.45, 9.42, 5.21)))
    k2 = cq.k2_from_capacitances(1.45, 9.42)
    beta = cq.ideal_beta_from_k2(0.05)
    ok = dev_tab <= 0.05 and dev_rt <= 0.05 and abs(k2 / 0.16 - 1) <= 0.03 and beta > 0.2
    verdict(8, ok, f"LC->BVD dev {dev_tab:.3f}, round trip dev {dev_rt:.1e}, K2 {k2:.4f}, "
                   f"beta(0.05) {beta:.3f}", time.perf_counter() - t, 1)


def test_criterion_09_pipeline_closure(verdict):
    t = time.perf_counter()
    hits = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for seed in range(20):
            peaks, dist, _ = closure_trial(seed)
            e = dist.errors
            hits.append([abs(peaks.two_chi - NS_TWO_CHI) < 2 * peaks.errors["two_chi"],
                         abs(dist.n_bar_th - NS_NBAR) < 2 * e["n_bar_th"],
                         abs(dist.alpha_sq - 1.5) < 2 * e["alpha_sq"]])
        pts = []
        for i, a in enumerate((0.0, 0.25, 0.6, 1.1, 1.7, 2.5)):
            _, dist, _ = closure_trial(100 + i, alpha_sq=a)
            # drive power axis: alpha^2 grows linearly with the squared drive amplitude
            pts.append((a / 2.5 * 200.0**2, dist.mean_n, dist.errors["mean_n"]))
    n0, _, err = sp.calibration_fit(pts)
    counts = np.sum(hits, axis=0)
    # 2-sigma intervals cover ~95%: 18 of 20 is the expected count
    ok = np.all(counts >= 18) and abs(n0 - NS_NBAR) < 2 * err["n_bar_th"]
    verdict(9, ok, f"within 2 se over 20 seeds (2chi, n_th, alpha2) = {tuple(int(c) for c in counts)}; "
                   f"intercept {n0:.3f} +- {err['n_bar_th']:.3f}", time.perf_counter() - t, 120)


def test_criterion_10_hygiene(verdict, small_model):
    t = time.perf_counter()
    rng = np.random.default_rng(10)
    worst = dict(trace=0.0, herm=0.0, step=0.0, eig=0.0, voigt=0.0, pn=0.0)
    m = small_model
    rho0 = dy.prepared_state(m)
    for _ in range(6):
        p = ModulationPulse(v0=rng.uniform(0, 600), f_mod=rng.uniform(140, 170), theta=rng.uniform(0, 2 * np.pi))
        out = dy.evolve_magnus(m, rho0, [p], 0.0, 100.0)
        worst["trace"] = max(worst["trace"], abs(np.trace(out) - 1))
        worst["herm"] = max(worst["herm"], np.abs(out - out.conj().T).max())
    for v0 in (150.0, 450.0):
        res = dy.integrate_lindblad(m, rho0, [0.0, 50.0, 100.0], ModulationPulse(v0=v0), dt=0.1,
                                    step_check=True)
        worst["step"] = max(worst["step"], res.diagnostics["step_change"])
    dims = cp.FockSpaceSpec(60, 5, 5)
    for flux in rng.uniform(0.45, 0.55, 4):
        h = cp.build_joint_hamiltonian(DEVICE, flux, MECH, dims=dims)
        worst["herm"] = max(worst["herm"], q.hermiticity_error(h))
        vals, vecs = q.hermitian_eigensystem(h)
        worst["eig"] = max(worst["eig"], np.linalg.norm(h @ vecs - vecs * vals) / np.linalg.norm(h))
    for _ in range(6):
        sig, gam = rng.uniform(0.01, 2.0, 2)
        area = integrate.quad(lambda x: sp.voigt_profile(x, sig, gam), -np.inf, np.inf,
                              epsabs=1e-12, limit=500)[0]
        worst["voigt"] = max(worst["voigt"], abs(area - 1))
        n_bar, a2 = rng.uniform(0, 3), rng.uniform(0, 6)
        worst["pn"] = max(worst["pn"], abs(sp.displaced_thermal_pn(n_bar, a2, np.arange(200)).sum() - 1))
    limits = dict(trace=1e-7, herm=1e-9, step=1e-6, eig=1e-9, voigt=1e-6, pn=1e-8)
    ok = all(worst[k] < limits[k] for k in limits)
    verdict(10, ok, ", ".join(f"{k} {worst[k]:.1e} (<{limits[k]:.0e})" for k in limits),
            time.perf_counter() - t, 120)
