"""40x40 swap chevron at the swap bias: timing, P(1) summary and ridge trend.

usage: python scripts/chevron.py [--jobs N] [--n 40] [--out out/chevron.npz]
"""
import argparse
import json
import time
from pathlib import Path

import numpy as np

from fluxmech import dynamics, fluxonium
from fluxmech.config import load_config


def run(n=40, jobs=1, v0_max=600.0, f_lo=140.0, f_hi=170.0, dt=0.1):
    cfg = load_config()
    dev = cfg.device
    flux = dev.flux_swap
    f_q = fluxonium.transition_frequency(dev.fluxonium, flux, (0, 1), cfg.dims.n_qudit_fock)
    rates = dynamics.RateSet.from_device(dev.t1m_us[0], dev.n_th_m, dev.t1q_us, dev.t2q_us,
                                         f_q, dev.temp_eff_k)
    model = dynamics.build_lindblad_model(dev.fluxonium, flux, dev.mechanics, rates, cfg.dims)
    v0s = np.linspace(0.0, v0_max, n)
    fms = np.linspace(f_lo, f_hi, n)
    t0 = time.perf_counter()
    sweep = dynamics.rabi_amplitude_sweep(model, cfg.pulse, v0s, fms, dev.temp_eff_k, dt, jobs)
    return sweep, time.perf_counter() - t0


def ridge_slope(sweep):
    r = sweep.ridge()
    ok = np.isfinite(r)
    if ok.sum() < 3:
        return np.nan
    return float(np.polyfit(sweep.v0_grid[ok], r[ok], 1)[0])


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=40)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="out/chevron.npz")
    a = ap.parse_args()
    sweep, elapsed = run(a.n, a.jobs)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savez(out, v0=sweep.v0_grid, f_mod=sweep.f_mod_grid, signal=sweep.signal, p1=sweep.p1)
    s = sweep.summary(155.6)
    s["ridge_slope_mhz_per_mvpp"] = ridge_slope(sweep)
    s["elapsed_s"] = elapsed
    s["grid"] = [a.n, a.n]
    s["jobs"] = a.jobs
    print(json.dumps(s, indent=2))
