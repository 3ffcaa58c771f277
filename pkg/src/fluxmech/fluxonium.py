"""Bare fluxonium Hamiltonian, spectrum, tuning curves and flux slopes.

The Hamiltonian is built in the harmonic-oscillator basis of the inductive
(E_L, E_C) oscillator. We use the shifted phase variable ``phi' = phi + phi_e``
so that

    H = 4 E_C n^2 - E_J cos(phi' - phi_e) + E_L phi'^2 / 2,

which has the same spectrum as the textbook form but keeps the low-lying
wavefunctions centred in the truncated basis. ``cos`` is taken from the
unitary ``exp(i phi')`` computed through the eigendecomposition of the
truncated phase operator.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .quantum import TruncationWarning, hermitian_eigensystem, ladder_operators

FLUX_STEP = 1e-5  # Phi_0, for flux_slope


@dataclass(frozen=True)
class FluxoniumParams:
    e_c: float  # GHz
    e_j: float  # GHz
    e_l: float  # GHz

    def __post_init__(self):
        if min(self.e_c, self.e_j, self.e_l) <= 0:
            raise ValueError(f"fluxonium energies must be positive: {self}")

    @property
    def phi_zpf(self):
        return (2 * self.e_c / self.e_l) ** 0.25

    @property
    def n_zpf(self):
        return (self.e_l / (32 * self.e_c)) ** 0.25

    @property
    def plasma_ghz(self):
        return np.sqrt(8 * self.e_l * self.e_c)


@dataclass(frozen=True)
class FluxBias:
    """External flux in units of the flux quantum, optionally from a voltage."""

    phi_e_over_phi0: float
    volts: float = None
    v_period: float = None
    v_half: float = None

    def __post_init__(self):
        if self.v_period is not None and self.v_period <= 0:
            raise ValueError("v_period must be positive")

    @classmethod
    def from_volts(cls, volts, v_period=25.56, v_half=7.540):
        """Half flux sits at ``v_half``; one flux quantum per ``v_period`` volts."""
        if v_period <= 0:
            raise ValueError("v_period must be positive")
        phi = 0.5 + (volts - v_half) / v_period
        return cls(phi, volts=volts, v_period=v_period, v_half=v_half)

    @property
    def phase(self):
        return 2 * np.pi * self.phi_e_over_phi0


def _as_flux(flux):
    return flux if isinstance(flux, FluxBias) else FluxBias(float(flux))


@dataclass
class QuditSpectrum:
    energies: np.ndarray  # GHz, ground at 0
    charge_elements: np.ndarray  # |<j|n|k>|
    charge_matrix: np.ndarray = None  # signed/complex <j|n|k>
    phase_matrix: np.ndarray = None  # <j|phi|k> (shifted variable)
    vectors: np.ndarray = None

    def frequency(self, j, k):
        return self.energies[k] - self.energies[j]


def fluxonium_operators(p, n_fock):
    """Return ``(n, phi)`` in the harmonic basis of the inductive oscillator."""
    a, adag, _ = ladder_operators(n_fock)
    phi = p.phi_zpf * (a + adag)
    n = 1j * p.n_zpf * (adag - a)
    return n, phi


def build_fluxonium_hamiltonian(p, flux, n_fock=100):
    """Fluxonium Hamiltonian (GHz) with ``n_fock`` oscillator states."""
    if n_fock < 20:
        warnings.warn(f"n_fock={n_fock} is too small for a converged fluxonium spectrum",
                      TruncationWarning, stacklevel=2)
    flux = _as_flux(flux)
    n, phi = fluxonium_operators(p, n_fock)
    # phi is real symmetric, so cos(phi - phi_e) is real symmetric too
    w, v = np.linalg.eigh(phi.real)
    cos_term = (v * np.cos(w - flux.phase)) @ v.T
    h = 4 * p.e_c * (n @ n).real - p.e_j * cos_term + 0.5 * p.e_l * (phi @ phi).real
    return 0.5 * (h + h.T)


def qudit_spectrum(p, flux, n_levels=6, n_fock=100):
    """Lowest ``n_levels`` energies plus charge and phase matrix elements."""
    if n_levels > n_fock // 4:
        raise ValueError(f"n_levels={n_levels} exceeds n_fock/4 for n_fock={n_fock}")
    h = build_fluxonium_hamiltonian(p, flux, n_fock)
    vals, vecs = hermitian_eigensystem(h)
    vecs = vecs[:, :n_levels]
    n, phi = fluxonium_operators(p, n_fock)
    n_mat = vecs.conj().T @ n @ vecs
    phi_mat = vecs.conj().T @ phi @ vecs
    return QuditSpectrum(
        energies=vals[:n_levels] - vals[0],
        charge_elements=np.abs(n_mat),
        charge_matrix=n_mat,
        phase_matrix=phi_mat,
        vectors=vecs,
    )


def transition_frequency(p, flux, transition=(0, 1), n_fock=100):
    j, k = transition
    vals = np.linalg.eigvalsh(build_fluxonium_hamiltonian(p, flux, n_fock))
    return vals[k] - vals[j]


def tuning_curve(p, flux_grid, transition=(0, 1), n_fock=100):
    """List of ``(phi_e/Phi_0, f_kj in GHz)`` over ``flux_grid``."""
    flux_grid = np.atleast_1d(np.asarray(flux_grid, dtype=float))
    if flux_grid.size == 0:
        raise ValueError("flux grid is empty")
    return [(float(f), float(transition_frequency(p, f, transition, n_fock))) for f in flux_grid]


def flux_slope(p, flux, transition=(0, 1), n_fock=100, step=FLUX_STEP):
    """d f_kj / d(Phi_e/Phi_0) in GHz per flux quantum (no 2 pi).

    Central difference with ``step``; a Richardson estimate with ``2 step``
    is compared and a warning raised if they disagree by more than 1e-3
    relative (and 1 MHz/Phi_0 absolute).
    """
    f0 = _as_flux(flux).phi_e_over_phi0

    def diff(h):
        return (transition_frequency(p, f0 + h, transition, n_fock)
                - transition_frequency(p, f0 - h, transition, n_fock)) / (2 * h)

    d1 = diff(step)
    d2 = diff(2 * step)
    if abs(d1 - d2) > max(1e-3 * abs(d1), 1e-3):
        warnings.warn(f"flux slope not converged at {f0}: {d1:.6g} vs {d2:.6g}", stacklevel=2)
    return float((4 * d1 - d2) / 3)


def check_convergence(p, flux, n_fock=100, n_levels=6, tol_ghz=1e-6):
    """Max change of the lowest energies when the basis is doubled, in GHz."""
    e1 = qudit_spectrum(p, flux, n_levels, n_fock).energies
    e2 = qudit_spectrum(p, flux, n_levels, 2 * n_fock).energies
    change = float(np.max(np.abs(e1 - e2)))
    if change > tol_ghz:
        warnings.warn(f"fluxonium spectrum changes by {change * 1e6:.3g} kHz on doubling n_fock",
                      TruncationWarning, stacklevel=2)
    return change
