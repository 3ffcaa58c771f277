"""Coherence-time models: thermal-phonon and 1/f flux-noise dephasing, the
dispersive Ramsey model, decay fits and dispersive cooperativities.

Frequencies and dispersive shifts are passed in cycles (MHz, GHz/Phi_0); the
2 pi is applied inside each formula. Times are in microseconds unless a name
says otherwise.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .fitting import FitError, FitProblem, least_squares

EULER_GAMMA = np.euler_gamma
TWO_PI = 2 * np.pi


class ValidityError(ValueError):
    pass


@dataclass(frozen=True)
class OneOverFNoise:
    """``S(omega) = A^2 (2 pi 1 Hz / |omega|)^gamma``."""

    a_phi: float = 1.0  # micro Phi_0 / sqrt(Hz)
    gamma_exp: float = 1.0
    omega_c: float = TWO_PI / 600.0  # rad/s
    t_ref: float = 5e-6  # s

    def __post_init__(self):
        if self.a_phi <= 0:
            raise ValueError("a_phi must be positive")
        if self.gamma_exp != 1.0:
            raise NotImplementedError("only gamma_exp = 1 is supported")
        if self.omega_c <= 0 or self.t_ref <= 0:
            raise ValueError("omega_c and t_ref must be positive")

    @property
    def valid(self):
        return self.omega_c * self.t_ref < 1.0

    @property
    def a_phi0(self):
        """Amplitude in Phi_0/sqrt(Hz)."""
        return self.a_phi * 1e-6

    def psd(self, omega):
        return self.a_phi0**2 * (TWO_PI / np.abs(omega)) ** self.gamma_exp


@dataclass
class CoherenceTimes:
    t1q: float
    t2q: float
    t2eq: float
    t1m: tuple
    t2m: float
    errors: dict = field(default_factory=dict)
    stretch_n: float = None

    def __post_init__(self):
        times = [self.t1q, self.t2q, self.t2eq, self.t2m, *self.t1m]
        if min(times) <= 0:
            raise ValueError("coherence times must be positive")
        if self.stretch_n is not None and not 0.5 <= self.stretch_n <= 2.5:
            raise ValueError("stretching index outside [0.5, 2.5]")

    @classmethod
    def device(cls):
        """Measured device values (microseconds)."""
        return cls(t1q=3.57, t2q=0.33, t2eq=1.35, t1m=(0.85, 4.11, 29.6), t2m=3.93)


def thermal_dephasing_rate(kappa_m, chi, n_bar):
    """Dephasing from thermal phonon-number fluctuations, in 1/us.

    ``kappa_m`` is the mode energy decay rate (1/us), ``chi`` the dispersive
    shift in MHz (half the number-splitting ``2 chi``), ``n_bar`` the thermal
    occupation. Order-of-magnitude estimate; it assumes single-rate mode decay
    and times long compared with ``1/kappa_m``.
    """
    if kappa_m <= 0:
        raise ValueError("kappa_m must be positive")
    if n_bar < 0:
        raise ValueError("n_bar must be non-negative")
    c = TWO_PI * chi
    root = np.sqrt((1 + 2j * c / kappa_m) ** 2 + 8j * c * n_bar / kappa_m + 0j)
    return max(float(0.5 * kappa_m * (root - 1).real), 0.0)


def filter_function(n_pulses, omega, t):
    """Ramsey (0) or single-echo (1) filter function; ``omega`` rad/s, ``t`` s."""
    if t <= 0:
        raise ValueError("t must be positive")
    x = np.asarray(omega, dtype=float) * t
    if n_pulses == 0:
        out = np.sinc(x / (2 * np.pi)) ** 2
    elif n_pulses == 1:
        out = np.sin(x / 4) ** 2 * np.sinc(x / (4 * np.pi)) ** 2
    else:
        raise NotImplementedError("only n_pulses in {0, 1}")
    return out if out.ndim else float(out)


def dephasing_factor(noise, n_pulses):
    """Dimensionless bracket multiplying ``t^2 A^2 (d omega / d Phi)^2``."""
    if n_pulses == 0:
        if not noise.valid:
            raise ValidityError(f"omega_c t_ref = {noise.omega_c * noise.t_ref:.3g} is not << 1")
        return 1.5 - EULER_GAMMA + np.log(1.0 / (noise.omega_c * noise.t_ref))
    if n_pulses == 1:
        return np.log(2.0)
    raise NotImplementedError("only n_pulses in {0, 1}")


def dephasing_time_1f(noise, slope, n_pulses):
    """Gaussian pure-dephasing time in us; ``slope`` is d f_eg/d Phi in GHz/Phi_0."""
    domega = TWO_PI * abs(slope) * 1e9
    if domega == 0:
        return np.inf
    t_s = 1.0 / (noise.a_phi0 * domega * np.sqrt(dephasing_factor(noise, n_pulses)))
    return t_s * 1e6


def dephasing_factor_numeric(noise, n_pulses, t=None):
    """The same bracket from direct quadrature of ``g_N(omega, t) / omega``.

    With ``S = A^2 2 pi / omega`` the decay exponent reduces to
    ``t^2 A^2 (d omega)^2 int_{omega_c}^inf g_N(omega, t) d omega / omega``.
    Used as an independent check of the closed forms.
    """
    t = noise.t_ref if t is None else t
    lo = noise.omega_c * t if n_pulses == 0 else 1e-12  # integrate in x = omega t
    edges = np.concatenate([[lo], np.arange(1, 4001) * np.pi])
    edges = edges[edges >= lo]

    def f(x):
        return filter_function(n_pulses, x, 1.0) / x

    total = integrate.quad(f, lo, min(1.0, edges[1]), limit=200)[0] if lo < 1.0 else 0.0
    if lo < 1.0:
        total += integrate.quad(f, 1.0, edges[1], limit=200)[0]
    for a, b in zip(edges[1:-1], edges[2:]):
        total += integrate.quad(f, a, b, limit=50)[0]
    x_end = edges[-1]
    # averaged tail: sin^2 -> 1/2 (Ramsey), sin^2 sin^2 -> 3/8 over sinc argument x/4 (echo)
    tail = 2.0 / x_end**2 if n_pulses == 0 else 16 * 3 / 8 / (2 * x_end**2)
    return total + tail


# -- Ramsey with thermal phonons ---------------------------------------------

def ramsey_dispersive_model(t, amps, t2q, f0, two_chi, t_d, phases_n=None):
    """``sum_n A_n exp(-t/T2) cos(2 pi (f0 + n two_chi) t + phi_n)``.

    ``t``, ``t2q``, ``t_d`` in us; ``f0``, ``two_chi`` in MHz; ``n_max`` is
    ``len(amps) - 1``. ``phi_n = 2 pi two_chi n t_d`` unless given.
    """
    t = np.asarray(t, dtype=float)
    amps = np.atleast_1d(amps)
    n = np.arange(amps.size)
    phi = TWO_PI * two_chi * n * t_d if phases_n is None else np.asarray(phases_n)
    arg = TWO_PI * np.outer(t, f0 + n * two_chi) + phi
    return np.exp(-t / t2q) * (np.cos(arg) @ amps)


RAMSEY_TD = 1.13 * 0.050  # us, pulse-shape delay for 50 ns pi/2 pulses


@dataclass
class RamseyFit:
    amps: np.ndarray
    t2q: float
    f0: float
    two_chi: float
    errors: dict
    outcome: object = None


def ramsey_dispersive_fit(t, y, init, n_max=2, t_d=RAMSEY_TD):
    """Fit the dispersive Ramsey model; ``init`` holds ``t2q``, ``f0``, ``two_chi`` and
    optionally ``amps``."""
    t = np.asarray(t, dtype=float)
    amps0 = np.asarray(init.get("amps", np.full(n_max + 1, np.ptp(y) / 2 / (n_max + 1))), float)
    if amps0.size != n_max + 1:
        raise ValueError("need n_max + 1 initial amplitudes")
    p0 = np.concatenate([[init["t2q"], init["f0"], init["two_chi"]], amps0])

    def model(p, x):
        return ramsey_dispersive_model(x, p[3:], p[0], p[1], p[2], t_d)
    lo = np.concatenate([[1e-6, -np.inf, -np.inf], np.full(n_max + 1, -np.inf)])
    out = least_squares(FitProblem(model, t, y, p0, bounds=(lo, np.inf), max_iterations=500))
    if not out.converged:
        raise FitError(f"Ramsey fit did not converge: {out.message}", out)
    e = out.stderr
    return RamseyFit(out.params[3:], out.params[0], out.params[1], out.params[2],
                     {"t2q": e[0], "f0": e[1], "two_chi": e[2], "amps": e[3:]}, out)


# -- decay fits ----------------------------------------------------------------

@dataclass
class DecayFit:
    times: np.ndarray  # T or T_i, us
    amps: np.ndarray
    offset: float
    stretch_n: float
    one_over_e: float
    errors: dict
    flags: tuple = ()
    outcome: object = None


def _check_decay_data(t, y):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.size < 8:
        raise ValueError("need at least 8 (t, y) samples")
    return t, y


def stretched_exp_fit(t, y, constrained=True, offset=False):
    """Fit ``A exp(-(t/T)^n) [+ c]``; ``constrained`` keeps ``n >= 1``."""
    t, y = _check_decay_data(t, y)
    n_lo = 1.0 if constrained else 0.5
    a0 = y[0] - (y[-1] if offset else 0.0)
    target = (y[-1] if offset else 0.0) + a0 / np.e
    below = np.flatnonzero((y - target) * np.sign(a0) < 0)
    t0 = t[below[0]] if below.size else t[-1]
    p0 = [a0, max(t0, 1e-9), max(1.2, n_lo)] + ([y[-1]] if offset else [])
    lo = [-np.inf, 1e-9, n_lo] + ([-np.inf] if offset else [])
    hi = [np.inf, np.inf, 2.5] + ([np.inf] if offset else [])

    def model(p, x):
        return p[0] * np.exp(-(x / p[1]) ** p[2]) + (p[3] if offset else 0.0)
    out = least_squares(FitProblem(model, t, y, p0, bounds=(lo, hi), max_iterations=500))
    if not out.converged:
        raise FitError(f"stretched exponential fit did not converge: {out.message}", out)
    a, tt, n = out.params[:3]
    e = out.stderr
    flags = ("n_at_bound",) if np.isclose(n, n_lo) or np.isclose(n, 2.5) else ()
    return DecayFit(np.array([tt]), np.array([a]), out.params[3] if offset else 0.0, float(n),
                    float(tt), {"T": e[1], "n": e[2], "A": e[0]}, flags, out)


def _one_over_e(times, amps):
    total = amps.sum()
    if total <= 0:
        return np.nan

    def f(x):
        return np.exp(-x / times) @ amps - total / np.e
    hi = times.max() * 2
    while f(hi) > 0:
        hi *= 2
    return float(optimize.brentq(f, 0.0, hi))


def multi_exp_fit(t, y, k=3, init=None, offset=False):
    """Sum of ``k`` exponentials, components sorted by ascending time constant."""
    t, y = _check_decay_data(t, y)
    pos = t[t > 0]
    if pos.size < 2 or np.log10(pos.max() / pos.min()) < 2:
        raise ValueError("delays must span at least two decades for a multi-exponential fit")
    a0 = (y[0] - (y[-1] if offset else 0.0)) / k
    if init is None:
        # a few spreads of starting time constants; keep the best converged fit
        starts = [(np.geomspace(pos.min() * f, pos.max() / f, k), np.full(k, a0)) for f in (3, 10, 30)]
    else:
        starts = [(np.asarray(init[0], float), np.asarray(init[1], float))]
    lo = np.concatenate([np.full(k, 1e-9), np.full(k, -np.inf)] + ([[-np.inf]] if offset else []))

    def model(p, x):
        return np.exp(-np.outer(x, 1.0 / p[:k])) @ p[k:2 * k] + (p[-1] if offset else 0.0)
    out = None
    for times0, amps0 in starts:
        p0 = np.concatenate([times0, amps0] + ([[y[-1]]] if offset else []))
        cand = least_squares(FitProblem(model, t, y, p0, bounds=(lo, np.inf), max_iterations=2000))
        if cand.converged and (out is None or cand.cost < out.cost):
            out = cand
    if out is None:
        raise FitError(f"multi-exponential fit did not converge: {cand.message}", cand)
    order = np.argsort(out.params[:k])
    times = out.params[:k][order]
    amps = out.params[k:2 * k][order]
    e = out.stderr
    flags = []
    if k > 1 and np.min(times[1:] / times[:-1]) < 2:
        flags.append("components_not_identifiable")
        warnings.warn("multi-exponential time constants differ by less than 2x", stacklevel=2)
    return DecayFit(times, amps, out.params[-1] if offset else 0.0, 1.0, _one_over_e(times, amps),
                    {"T": e[:k][order], "A": e[k:2 * k][order]}, tuple(flags), out)


def pure_dephasing(t2, t1):
    """``1 / (1/T2 - 1/(2 T1))``."""
    if t2 <= 0 or t1 <= 0:
        raise ValueError("times must be positive")
    rate = 1.0 / t2 - 0.5 / t1
    if rate <= 0:
        raise ValueError("T2 exceeds 2 T1: no pure dephasing")
    return 1.0 / rate


def cooperativities(two_chi, t1q, t1m1, t2q, t2m):
    """``((2 chi)^2 T1q T1m, (4 chi)^2 T2q T2m)`` with ``two_chi`` in MHz, times in us."""
    if min(abs(two_chi), t1q, t1m1, t2q, t2m) <= 0:
        raise ValueError("inputs must be positive")
    w = TWO_PI * two_chi  # rad/us
    return float(w**2 * t1q * t1m1), float((2 * w) ** 2 * t2q * t2m)
