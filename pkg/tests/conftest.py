import numpy as np
import pytest

from fluxmech import dynamics, spectra
from fluxmech.coupled import FockSpaceSpec, ModeParams
from fluxmech.fluxonium import FluxoniumParams

DEVICE = FluxoniumParams(0.8016, 2.6349, 0.7966)
MECH = ModeParams(691.75, 66.6)
FLUX_COHERENT, FLUX_SWAP = 0.4751, 0.4726

# number-splitting closure setup shared by the spectra tests and the acceptance run
NS_GRID = np.arange(-4, 16, 0.05) + 815.0
NS_TWO_CHI, NS_NBAR = 2.23, 0.57


def closure_trial(seed, alpha_sq=1.5, n_traces=20, snr=20.0, anomaly=7):
    """synth -> drift -> anomaly -> align -> fit. SNR refers to the averaged trace."""
    rng = np.random.default_rng(seed)
    dist = spectra.PhononDistribution.displaced_thermal(NS_NBAR, alpha_sq, 5)
    probe = spectra.PhononDistribution(dist.p)
    clean = spectra.synth_number_splitting(815.0, NS_TWO_CHI, probe, (0.3, 0.3), NS_GRID)
    noise = clean.amplitude.max() / snr * np.sqrt(n_traces)
    drift = np.cumsum(rng.normal(0, 0.05, n_traces))
    traces = [spectra.add_noise(
        spectra.synth_number_splitting(815.0 + d, NS_TWO_CHI, probe, (0.3, 0.3), NS_GRID), noise, rng)
        for d in drift]
    if anomaly is not None:
        traces[anomaly] = spectra.SpectrumTrace(NS_GRID, traces[anomaly].amplitude * 10)
    aligned = spectra.drift_align(traces, bin=2, reference_window=(813.5, 816.5))
    peaks, fitted = spectra.fit_number_splitting(aligned, 6, dict(f_eg=815.0, two_chi=2.2))
    return peaks, fitted, aligned


@pytest.fixture(scope="session")
def small_model():
    """4 x 4 joint model at the swap bias; fast enough for property tests."""
    rates = dynamics.RateSet.from_device()
    return dynamics.build_lindblad_model(DEVICE, FLUX_SWAP, MECH, rates, FockSpaceSpec(60, 4, 4))

