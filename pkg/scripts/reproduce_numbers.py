"""Headline device numbers from the measured device parameters.

usage: python scripts/reproduce_numbers.py
"""
import json

import numpy as np

from fluxmech import circuit as cq
from fluxmech import coupled as cp
from fluxmech import decoherence as dc
from fluxmech import spectra as sp
from fluxmech.config import load_config

MEASURED_TWO_CHI_SWAP = 1.67  # MHz


def main():
    dev = load_config().device
    p, mech = dev.fluxonium, dev.mechanics
    dims = cp.FockSpaceSpec(100, 6, 6)
    gap, gap_flux = cp.avoided_crossing_gap(p, mech, np.linspace(0.48, 0.5, 21))
    two_chi = {f: cp.dispersive_shift_exact(cp.build_joint_hamiltonian(p, f, mech, dims=dims), dims)
               for f in (dev.flux_coherent, dev.flux_swap)}
    noise = dc.OneOverFNoise()
    # cooperativities use the measured 2chi at the swap bias
    c1, c2 = dc.cooperativities(MEASURED_TWO_CHI_SWAP, dev.t1q_us, dev.t1m_us[0], dev.t2q_us,
                                dev.t2m_us)
    bvd = cq.bvd_from_lc(cq.LcParams(1.45, 9.42, 5.21))
    out = {
        "gap_mhz": gap, "gap_flux_phi0": gap_flux,
        "two_chi_coherent_mhz": two_chi[dev.flux_coherent],
        "two_chi_swap_mhz": two_chi[dev.flux_swap],
        "t_eff_mk": sp.effective_temperature(dev.n_th_m, 690e6) * 1e3,
        "c_t1": c1, "c_t2": c2,
        "t_phi_us": {s: {"ramsey": dc.dephasing_time_1f(noise, s, 0),
                         "echo": dc.dephasing_time_1f(noise, s, 1)} for s in (10.67, 11.34)},
        "thermal_one_over_gamma_us": 1 / dc.thermal_dephasing_rate(1 / dev.t1m_us[0], -11.2 / 2,
                                                                   dev.n_th_m),
        "bvd": {"c0_ff": bvd.c0, "c_m_ff": bvd.c_m, "l_m_uh": bvd.l_m},
        "k2": cq.k2_from_capacitances(1.45, 9.42),
        "beta_ideal_k2_0.05": cq.ideal_beta_from_k2(0.05),
    }
    print(json.dumps(out, indent=2, default=float))


if __name__ == "__main__":
    main()
