"""Qudit-mechanics(-readout) Hamiltonian, dressed labels and dispersive shifts.

Sign convention for the dispersive shift, used by every module: ``two_chi`` is
the change of the dressed qubit (g0 -> e0) frequency per added phonon,

    two_chi = [E(e1) - E(g1)] - [E(e0) - E(g0)] = chi_e - chi_g,

so for the measured device (qubit above the mechanics) it is positive and
number-split peaks sit at ``f_eg + n * two_chi``.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .fitting import FitError, FitProblem, least_squares
from .fluxonium import FluxoniumParams, qudit_spectrum
from .quantum import hermitian_eigensystem, hermitize, ladder_operators

LEVEL_LETTERS = "gefhijklmnop"
HYBRID_WEIGHT = 0.75  # squared overlap below this flags a level as hybridized
TIE_TOL = 1e-6


class ResonanceError(ValueError):
    pass


class LabelError(KeyError):
    pass


@dataclass(frozen=True)
class ModeParams:
    omega0: float  # MHz
    g: float  # MHz

    def __post_init__(self):
        if self.omega0 <= 0:
            raise ValueError("mode frequency must be positive")
        if self.g < 0:
            raise ValueError("coupling must be non-negative")


@dataclass(frozen=True)
class FockSpaceSpec:
    n_qudit_fock: int = 100
    n_qudit_kept: int = 6
    n_phonon: int = 10
    n_readout: int = None

    def __post_init__(self):
        sizes = [self.n_qudit_fock, self.n_qudit_kept, self.n_phonon]
        if self.n_readout is not None:
            sizes.append(self.n_readout)
        if min(sizes) < 1:
            raise ValueError(f"all dimensions must be >= 1: {self}")
        if self.n_qudit_kept > self.n_qudit_fock:
            raise ValueError("n_qudit_kept exceeds n_qudit_fock")

    @property
    def shape(self):
        s = (self.n_qudit_kept, self.n_phonon)
        return s + (self.n_readout,) if self.n_readout else s

    @property
    def dim(self):
        return int(np.prod(self.shape))


@dataclass
class DressedLevel:
    index: int
    energy: float  # GHz
    label: tuple  # (letter, n) or (letter, n, r)
    overlap: float  # squared overlap with the bare product state
    flags: tuple = ()

    @property
    def name(self):
        return self.label[0] + "".join(str(x) for x in self.label[1:])

    @property
    def hybridized(self):
        return "hybridized" in self.flags


@dataclass
class JointSystem:
    h: np.ndarray  # GHz, bare product basis qudit (x) mechanics (x) readout
    dims: FockSpaceSpec
    spectrum: object  # QuditSpectrum of the kept levels
    n_kept: np.ndarray
    phi_kept: np.ndarray

    def qudit_operator(self, op):
        """Embed a kept-subspace qudit operator into the joint space."""
        rest = int(np.prod(self.dims.shape[1:]))
        return np.kron(op, np.eye(rest))


def _mode_terms(dim, mode):
    b, bdag, num = ladder_operators(dim)
    return mode.omega0 * 1e-3 * num, mode.g * 1e-3 * (b - bdag)


def joint_system(p, flux, mech, readout=None, dims=None):
    """Build the joint Hamiltonian and keep the pieces the dynamics needs."""
    dims = dims or FockSpaceSpec()
    if readout is not None and not dims.n_readout:
        raise ValueError("readout mode given but dims.n_readout is not set")
    spec = qudit_spectrum(p, flux, dims.n_qudit_kept, dims.n_qudit_fock)
    nq, nm = dims.n_qudit_kept, dims.n_phonon
    n_k = hermitize(spec.charge_matrix)
    phi_k = hermitize(spec.phase_matrix)
    iq = np.eye(nq)
    hm, cm = _mode_terms(nm, mech) if nm > 1 else (np.zeros((1, 1)), np.zeros((1, 1)))
    h = np.kron(np.diag(spec.energies), np.eye(nm)) + np.kron(iq, hm) - 1j * np.kron(n_k, cm)
    if readout is not None and dims.n_readout:
        nr = dims.n_readout
        hr, cr = _mode_terms(nr, readout)
        h = (np.kron(h, np.eye(nr)) + np.kron(np.kron(iq, np.eye(nm)), hr)
             - 1j * np.kron(np.kron(n_k, np.eye(nm)), cr))
    return JointSystem(hermitize(h), dims, spec, n_k, phi_k)


def build_joint_hamiltonian(p, flux, mech, readout=None, dims=None):
    """Joint Hamiltonian in GHz on the kept-qudit (x) Fock product basis."""
    return joint_system(p, flux, mech, readout, dims).h


def _bare_label(flat, shape):
    idx = np.unravel_index(flat, shape)
    return (LEVEL_LETTERS[idx[0]],) + tuple(int(i) for i in idx[1:])


def label_dressed_states(h, dims, hybrid_weight=HYBRID_WEIGHT, eigensystem=None):
    """Greedy maximum-overlap labels, assigned in ascending dressed energy.

    Each bare product state is used at most once. ``overlap`` is the squared
    overlap; levels below ``hybrid_weight`` are flagged "hybridized", and
    near-ties (within 1e-6) are resolved towards the lower bare index and
    flagged "ambiguous".
    """
    shape = dims.shape if isinstance(dims, FockSpaceSpec) else tuple(dims)
    vals, vecs = eigensystem if eigensystem is not None else hermitian_eigensystem(h)
    weights = np.abs(vecs) ** 2
    used = np.zeros(vals.size, bool)
    levels = []
    for k in range(vals.size):
        w = np.where(used, -1.0, weights[:, k])
        best = int(np.argmax(w))  # argmax returns the lowest index among exact ties
        flags = []
        runner = np.sort(w)[-2] if w.size > 1 else -1
        if w[best] - runner < TIE_TOL:
            flags.append("ambiguous")
        if w[best] < hybrid_weight:
            flags.append("hybridized")
        used[best] = True
        levels.append(DressedLevel(k, float(vals[k]), _bare_label(best, shape), float(w[best]),
                                   tuple(flags)))
    return levels


def _parse_label(label):
    """``"g0"`` -> ``("g", 0)``; ``"e1,2"`` -> ``("e", 1, 2)``."""
    if isinstance(label, str):
        return (label[0],) + tuple(int(c) for c in label[1:].split(","))
    return tuple(label)


def level_lookup(levels):
    return {lv.label: lv for lv in levels}


def transition_table(levels, pairs):
    """Frequencies in MHz for each ``(from, to)`` label pair."""
    table = level_lookup(levels)
    out = []
    for a, b in pairs:
        la, lb = _parse_label(a), _parse_label(b)
        for lab in (la, lb):
            if lab not in table:
                raise LabelError(f"no dressed level labelled {lab}")
        out.append(((la, lb), (table[lb].energy - table[la].energy) * 1e3))
    return out


def jc_qubitlike_frequency(omega_eg0, omega_m0, g_eg, return_flag=False):
    """Qubit-like branch of the Jaynes-Cummings pair, all in MHz.

    At zero detuning the upper branch ``omega_m0 + g_eg`` is returned and the
    point is flagged as branch-ambiguous.
    """
    weg = np.asarray(omega_eg0, dtype=float)
    d0 = weg - omega_m0
    sgn = np.where(d0 >= 0, 1.0, -1.0)
    f = 0.5 * (weg + omega_m0 + sgn * np.sqrt(d0**2 + 4 * np.asarray(g_eg) ** 2))
    amb = d0 == 0
    if np.any(amb) and not return_flag:
        warnings.warn("zero detuning: upper JC branch returned", stacklevel=2)
    if f.ndim == 0:
        f = float(f)
        amb = bool(amb)
    return (f, amb) if return_flag else f


@dataclass
class TuningFitResult:
    params: FluxoniumParams
    omega_m0: float  # MHz
    g_m: float  # MHz
    stderr: dict = field(default_factory=dict)
    residual_rms: float = np.nan  # MHz
    converged: bool = True
    n_points: int = 0
    excluded: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def as_dict(self):
        return {
            "e_c_ghz": self.params.e_c, "e_j_ghz": self.params.e_j, "e_l_ghz": self.params.e_l,
            "omega_m0_mhz": self.omega_m0, "g_m_mhz": self.g_m,
            "stderr": dict(self.stderr), "residual_rms_mhz": self.residual_rms,
            "converged": self.converged, "n_points": self.n_points,
            "excluded": [list(map(float, e)) for e in self.excluded], "flags": list(self.flags),
        }


_TUNING_NAMES = ("e_c", "e_j", "e_l", "omega_m0", "g_m")


def _qubit_bare(params, phis, n_fock):
    weg, nge = [], []
    for phi in phis:
        s = qudit_spectrum(params, phi, 2, n_fock)
        weg.append(s.energies[1] * 1e3)
        nge.append(s.charge_elements[0, 1])
    return np.array(weg), np.array(nge)


def tuning_model(values, phis, n_fock=60, observed=None):
    """Qubit-like JC branch in MHz.

    With ``observed`` each point takes whichever JC branch lies nearer the
    measured frequency. Near the crossing the qubit-like branch jumps by
    ``2 g_eg`` as the bare detuning changes sign, which leaves step-like
    local minima in a least-squares cost; the nearest-branch residual is
    continuous in the parameters.
    """
    e_c, e_j, e_l, wm, gm = values
    weg, nge = _qubit_bare(FluxoniumParams(e_c, e_j, e_l), phis, n_fock)
    if observed is None:
        return jc_qubitlike_frequency(weg, wm, gm * nge, return_flag=True)[0]
    mid = 0.5 * (weg + wm)
    half = 0.5 * np.sqrt((weg - wm) ** 2 + 4 * (gm * nge) ** 2)
    up, lo = mid + half, mid - half
    return np.where(np.abs(observed - up) <= np.abs(observed - lo), up, lo)


def fit_tuning_spectrum(peaks, init, other_modes=(), n_fock=60, max_iterations=100,
                        override=None):
    """Fit the JC-truncated qubit-like tuning curve to measured peaks.

    ``peaks`` holds ``(phi_e/Phi_0, freq MHz)`` pairs of the (g, e)-like line.
    Points within ``3 g_eg`` of any frequency in ``other_modes`` (non-target
    mechanical modes, MHz) are dropped before fitting. ``override`` may
    replace ``omega_m0`` and/or ``g_m`` after the fit, e.g. for a by-eye
    adjustment; the raw fitted values stay in ``stderr['raw']``.
    """
    pts = np.asarray(peaks, dtype=float)
    if pts.ndim != 2 or pts.shape[1] < 2:
        raise ValueError("peaks must be (phi_e, freq_mhz) pairs")
    g_eg0 = init.g_m * 0.2
    keep = np.ones(len(pts), bool)
    for f_other in other_modes:
        keep &= np.abs(pts[:, 1] - f_other) >= 3 * g_eg0
    excluded = [tuple(p) for p in pts[~keep]]
    pts = pts[keep]
    if len(pts) < 5:
        raise ValueError("need at least 5 usable peaks")
    p0 = np.array([init.params.e_c, init.params.e_j, init.params.e_l, init.omega_m0, init.g_m])
    side = np.sign(pts[:, 1] - init.omega_m0)
    flags = []
    if not (np.any(side > 0) and np.any(side < 0)):
        flags.append("one-sided: peaks do not straddle the mechanical frequency")
    lo = np.array([0.05, 0.05, 0.05, 1.0, 0.0])
    hi = np.array([20.0, 50.0, 20.0, 1e5, 1e3])
    # stage 1: qudit energies from points well away from the crossing, mode held fixed
    far = np.abs(pts[:, 1] - init.omega_m0) > 4 * g_eg0
    if far.sum() >= 5:
        mode = p0[3:]
        pre = least_squares(FitProblem(
            model=lambda v, x: tuning_model(np.r_[v, mode], x, n_fock, pts[far, 1]),
            x=pts[far, 0], y=pts[far, 1], p0=p0[:3], bounds=(lo[:3], hi[:3]),
            max_iterations=max_iterations))
        if np.all(np.isfinite(pre.params)):
            p0 = np.r_[pre.params, mode]
    problem = FitProblem(
        model=lambda v, x: tuning_model(v, x, n_fock, pts[:, 1]), x=pts[:, 0], y=pts[:, 1], p0=p0,
        bounds=(lo, hi), max_iterations=max_iterations,
    )
    out = least_squares(problem)
    if not np.all(np.isfinite(out.params)):
        raise FitError("tuning fit diverged", outcome=out)
    if not out.converged:
        flags.append("not converged")
    err = dict(zip(_TUNING_NAMES, map(float, out.stderr)))
    v = out.params
    wm, gm = float(v[3]), float(v[4])
    if override:
        err["raw"] = {"omega_m0": wm, "g_m": gm}
        wm = float(override.get("omega_m0", wm))
        gm = float(override.get("g_m", gm))
        flags.append("manual override")
    return TuningFitResult(FluxoniumParams(*map(float, v[:3])), wm, gm, err, out.residual_rms,
                           out.converged, len(pts), excluded, flags)


def dispersive_shift_exact(h, dims, eigensystem=None):
    """``two_chi`` in MHz from exact diagonalization (see module docstring)."""
    levels = label_dressed_states(h, dims, eigensystem=eigensystem)
    table = level_lookup(levels)
    extra = (0,) * (len(dims.shape) - 2) if isinstance(dims, FockSpaceSpec) else ()
    need = [("g", 0) + extra, ("g", 1) + extra, ("e", 0) + extra, ("e", 1) + extra]
    for lab in need:
        if lab not in table:
            raise LabelError(f"no dressed level labelled {lab}")
        if table[lab].hybridized:
            raise ResonanceError(f"level {table[lab].name} is hybridized "
                                 f"(overlap {table[lab].overlap:.3f})")
    g0, g1, e0, e1 = (table[lab].energy for lab in need)
    return float(((e1 - g1) - (e0 - g0)) * 1e3)


@dataclass
class PerturbativeShift:
    chi_g: float  # MHz
    chi_e: float
    two_chi: float  # chi_e - chi_g
    vacuum_shift: float  # (chi_e + chi_g) / 2

    @property
    def chi(self):
        return 0.5 * self.two_chi


def _chi_level(spec, g_m, omega_m0, j, k_max, validity):
    e = spec.energies * 1e3
    nmat = spec.charge_elements
    total = 0.0
    for k in range(min(k_max, len(e) - 1) + 1):
        if k == j:
            continue
        w_kj = e[k] - e[j]
        g_jk = g_m * nmat[j, k]
        if g_jk == 0:
            continue
        if abs(omega_m0 - abs(w_kj)) <= validity * g_jk:
            raise ResonanceError(f"transition {LEVEL_LETTERS[j]}-{LEVEL_LETTERS[k]} at "
                                 f"{w_kj:.2f} MHz is within {validity} g of the mode")
        total += g_jk**2 * 2 * w_kj / (omega_m0**2 - w_kj**2)
    return total


def chi_level(spectrum, g_m, omega_m0, j, k_max, validity=5.0):
    """Second-order shift of qudit level ``j`` per phonon (MHz), counter-rotating terms included."""
    return _chi_level(spectrum, g_m, omega_m0, j, k_max, validity)


def dispersive_shift_pt(spectrum, g_m, omega_m0, k_max, validity=5.0):
    """Perturbative ``two_chi`` summing qudit levels up to ``k_max``.

    ``k_max=1`` truncates at e, ``k_max=2`` includes f. Raises
    :class:`ResonanceError` if any included transition is within
    ``validity * g_jk`` of the mode frequency.
    """
    if k_max >= len(spectrum.energies):
        raise ValueError(f"k_max={k_max} exceeds the {len(spectrum.energies)} available levels")
    cg = _chi_level(spectrum, g_m, omega_m0, 0, k_max, validity)
    ce = _chi_level(spectrum, g_m, omega_m0, 1, k_max, validity)
    return PerturbativeShift(cg, ce, ce - cg, 0.5 * (ce + cg))


def avoided_crossing_gap(p, mech, flux_grid, dims=None):
    """Minimum splitting (MHz) between the two lowest excited joint levels over ``flux_grid``.

    Returns ``(gap_mhz, flux_at_min)``; the grid is refined once around the
    coarse minimum with a bounded scalar search.
    """
    from scipy.optimize import minimize_scalar

    dims = dims or FockSpaceSpec(n_phonon=4)

    def gap(phi):
        e = np.linalg.eigvalsh(build_joint_hamiltonian(p, phi, mech, dims=dims))
        return (e[2] - e[1]) * 1e3

    grid = np.asarray(flux_grid, dtype=float)
    g = np.array([gap(f) for f in grid])
    i = int(np.argmin(g))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    if hi > lo:
        res = minimize_scalar(gap, bounds=(lo, hi), method="bounded", options={"xatol": 1e-7})
        if res.fun < g[i]:
            return float(res.fun), float(res.x)
    return float(g[i]), float(grid[i])
