"""Modelling tools for a fluxonium qudit coupled to mechanical modes."""

from .coupled import (FockSpaceSpec, ModeParams, dispersive_shift_exact, dispersive_shift_pt,
                      joint_system)
from .config import load_config
from .fitting import FitError
from .fluxonium import FluxoniumParams, qudit_spectrum, transition_frequency
from .pulses import ModulationPulse
from .spectra import PhononDistribution, SpectrumTrace, fit_number_splitting

__version__ = "0.1.0"

__all__ = [
    "FitError", "FluxoniumParams", "FockSpaceSpec", "ModeParams", "ModulationPulse",
    "PhononDistribution", "SpectrumTrace", "dispersive_shift_exact", "dispersive_shift_pt",
    "fit_number_splitting", "joint_system", "load_config", "qudit_spectrum",
    "transition_frequency",
]
