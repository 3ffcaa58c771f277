"""Flux-modulation pulses and the Bessel sideband coupling rate."""

from dataclasses import dataclass

import numpy as np
from scipy import special

TAU_D_FACTOR = 1.0 / (2 * np.arcsin(2 ** -0.25))


@dataclass(frozen=True)
class ModulationPulse:
    v0: float = 0.0  # mVpp
    f_mod: float = 155.6  # MHz
    theta: float = 0.0  # rad
    tau_mod: float = 100.0  # ns
    tau_r: float = 10.0  # ns
    gain_k: float = 1.7e-5  # Phi_0 per mVpp

    def __post_init__(self):
        if self.tau_r <= 0 or self.tau_mod < 2 * self.tau_r:
            raise ValueError(f"need tau_mod >= 2 tau_r > 0, got {self.tau_mod}, {self.tau_r}")
        if self.v0 < 0:
            raise ValueError("v0 must be non-negative")

    @property
    def tau_d(self):
        return self.tau_r * TAU_D_FACTOR

    @property
    def peak_flux(self):
        """Peak flux excursion in Phi_0."""
        return self.gain_k * self.v0

    def with_(self, **kw):
        vals = dict(self.__dict__)
        vals.update(kw)
        return ModulationPulse(**vals)


def sin4_ramp_envelope(pulse, t):
    """sin^4 up-ramp, flat top, mirrored down-ramp; zero outside ``[0, tau_mod]``."""
    t = np.asarray(t, dtype=float)
    tr, td = pulse.tau_r, pulse.tau_d
    s = np.where(t > 0.5 * pulse.tau_mod, pulse.tau_mod - t, t)  # distance from nearest edge
    up = np.where(s < 0.5 * tr, np.sin(s / td) ** 4, 1.0 - np.sin((tr - np.minimum(s, tr)) / td) ** 4)
    env = np.where(s >= tr, 1.0, up)
    env = np.where((t < 0) | (t > pulse.tau_mod), 0.0, env)
    return env if env.ndim else float(env)


def sample_envelope(pulse, dt=0.01):
    times = np.linspace(0, pulse.tau_mod, int(round(pulse.tau_mod / dt)) + 1)
    return times, sin4_ramp_envelope(pulse, times)


def flux_drive_waveform(pulse, t):
    """Flux in Phi_0: ``k v0 env(t) cos(2 pi f_mod t + theta)``, ``t`` in ns."""
    t = np.asarray(t, dtype=float)
    w = pulse.peak_flux * sin4_ramp_envelope(pulse, t) * np.cos(2 * np.pi * pulse.f_mod * 1e-3 * t
                                                                 + pulse.theta)
    return w if w.ndim else float(w)


def bessel_j1(x):
    return special.j1(x)


def bessel_j0(x):
    return special.j0(x)


def bessel_j2(x):
    return special.jv(2, x)


def sideband_coupling_rate(g_eg, eps_mod, f_mod):
    """``g_eg J1(eps_mod / f_mod)`` in the units of ``g_eg``; 2 pi cancels in the ratio."""
    if f_mod <= 0:
        raise ValueError("f_mod must be positive")
    return g_eg * bessel_j1(eps_mod / f_mod)


def eps_mod_from_pulse(pulse, slope_ghz_per_phi0):
    """Frequency-modulation depth in MHz from the flux gain and the static slope."""
    return pulse.peak_flux * abs(slope_ghz_per_phi0) * 1e3
