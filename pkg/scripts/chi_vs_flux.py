"""Exact and perturbative 2chi across flux, written to CSV.

usage: python scripts/chi_vs_flux.py [--lo 0.47] [--hi 0.478] [--n 17] [--out out/chi_vs_flux.csv]
"""
import argparse

import numpy as np

from fluxmech import coupled as cp
from fluxmech import fluxonium as fx
from fluxmech import io
from fluxmech.config import load_config

ap = argparse.ArgumentParser()
ap.add_argument("--lo", type=float, default=0.47)
ap.add_argument("--hi", type=float, default=0.478)
ap.add_argument("--n", type=int, default=17)
ap.add_argument("--out", default="out/chi_vs_flux.csv")
a = ap.parse_args()

dev = load_config().device
dims = cp.FockSpaceSpec(100, 6, 6)
rows = []
for f in np.linspace(a.lo, a.hi, a.n):
    s = fx.qudit_spectrum(dev.fluxonium, f, 6)
    exact = cp.dispersive_shift_exact(cp.build_joint_hamiltonian(dev.fluxonium, f, dev.mechanics, dims=dims), dims)
    pt = [cp.dispersive_shift_pt(s, dev.g_m_mhz, dev.omega_m0_mhz, k).two_chi for k in (1, 2, 3)]
    rows.append([f, exact, *pt])
    print(f"{f:.4f}  exact {exact:7.3f}  pt_e {pt[0]:7.3f}  pt_f {pt[1]:7.3f}  pt_h {pt[2]:7.3f}")
io.write_csv(a.out, ["flux_phi0", "exact", "pt_e", "pt_f", "pt_h"], rows)
