"""Lumped-circuit reduction: capacitance networks with potential edges,
conserved-charge elimination, coupling factors and the piezoelectric
LC / Butterworth-van Dyke equivalents.

Capacitances are in fF, inductances in uH, energies and frequencies in GHz
unless noted. Node 0 is ground.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import constants

E_CHARGE = constants.e
H_PLANCK = constants.h
FEMTO = 1e-15
KAPPA = 8 / np.pi**2  # lowest-mode share of the piezoelectric response
KINDS = ("junction", "inductor")


class DegenerateNetworkError(ValueError):
    pass


class PreconditionError(ValueError):
    pass


def charging_energy_ghz(inv_cap_per_ff):
    """``e^2/2 * (C^-1)`` in GHz for an inverse capacitance in 1/fF."""
    return E_CHARGE**2 / 2 * inv_cap_per_ff / FEMTO / H_PLANCK * 1e-9


@dataclass
class CapacitanceNetwork:
    """Capacitance matrix over generalized flux coordinates.

    ``cap`` is the (non-ground) Maxwell block in fF; ``basis`` writes each
    coordinate as a combination of node fluxes (column 0 is ground and stays
    zero). Potential edges are ``(node_a, node_b, kind, energy_GHz)``.
    """

    cap: np.ndarray
    names: list
    basis: np.ndarray
    potential_edges: list = field(default_factory=list)

    def __post_init__(self):
        self.cap = np.asarray(self.cap, dtype=float)
        n = self.cap.shape[0]
        if self.cap.shape != (n, n) or not np.allclose(self.cap, self.cap.T, atol=1e-12):
            raise ValueError("capacitance matrix must be square and symmetric")
        if len(self.names) != n or self.basis.shape[0] != n:
            raise ValueError("names and basis must match the matrix size")
        for a, b, kind, _ in self.potential_edges:
            if kind not in KINDS:
                raise ValueError(f"unknown potential kind {kind!r}")

    @property
    def n_nodes(self):
        return self.basis.shape[1]

    @classmethod
    def from_edges(cls, cap_edges, potential_edges=(), n_nodes=None):
        """Build from ``(node_a, node_b, C_fF)`` branch capacitances."""
        cap_edges = list(cap_edges)
        nodes = [a for a, b, _ in cap_edges] + [b for a, b, _ in cap_edges]
        nodes += [a for a, b, _, _ in potential_edges] + [b for a, b, _, _ in potential_edges]
        n = (max(nodes) + 1) if n_nodes is None else n_nodes
        m = np.zeros((n, n))
        for a, b, c in cap_edges:
            if c < 0 or a == b:
                raise ValueError(f"bad capacitor {a}-{b}: {c}")
            m[a, a] += c
            m[b, b] += c
            m[a, b] -= c
            m[b, a] -= c
        block = m[1:, 1:]
        if n > 1 and np.any(np.linalg.eigvalsh(block) <= 1e-12 * max(np.abs(block).max(), 1e-30)):
            raise DegenerateNetworkError("capacitance matrix is singular: a node floats")
        basis = np.eye(n)[1:]
        return cls(block, [f"n{i}" for i in range(1, n)], basis, list(potential_edges))

    @classmethod
    def parse(cls, text):
        """Parse ``[capacitance]`` (``a b C_fF``) and ``[potential]`` (``a b kind E_GHz``) sections."""
        section, caps, pots = None, [], []
        for ln, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip().lower()
                if section not in ("capacitance", "potential"):
                    raise ValueError(f"line {ln}: unknown section [{section}]")
                continue
            tok = line.split()
            try:
                if section == "capacitance" and len(tok) == 3:
                    caps.append((int(tok[0]), int(tok[1]), float(tok[2])))
                elif section == "potential" and len(tok) == 4:
                    pots.append((int(tok[0]), int(tok[1]), tok[2].lower(), float(tok[3])))
                else:
                    raise ValueError
            except ValueError:
                raise ValueError(f"line {ln}: cannot parse {raw!r}") from None
        if not caps:
            raise ValueError("no [capacitance] entries")
        return cls.from_edges(caps, pots)

    def node_vector(self, a, b):
        v = np.zeros(self.n_nodes)
        v[a] += 1.0
        v[b] -= 1.0
        v[0] = 0.0
        return v

    def express(self, a, b):
        """Row ``r`` with ``r @ coords = Phi_a - Phi_b``; raises if not representable."""
        target = self.node_vector(a, b)
        r, *_ = np.linalg.lstsq(self.basis.T, target, rcond=None)
        if np.linalg.norm(self.basis.T @ r - target) > 1e-9:
            raise PreconditionError(f"Phi_{a} - Phi_{b} is not expressible in the remaining coordinates")
        return r

    def kinetic_energy(self, coord_velocities):
        v = np.asarray(coord_velocities, dtype=float)
        return 0.5 * v @ self.cap @ v


def eliminate_free_node(net, subgraph):
    """Remove the common-mode coordinate of a node set with conserved charge.

    Potentials inside ``subgraph`` depend only on flux differences, so the
    common mode is cyclic and its conjugate charge (taken as zero) is
    conserved. The common mode replaces one coordinate and is integrated out
    by a Schur complement, leaving one fewer coordinate.
    """
    sub = sorted(set(int(s) for s in subgraph))
    if not sub or 0 in sub:
        raise PreconditionError("subgraph must be a non-empty set of non-ground nodes")
    for a, b, kind, _ in net.potential_edges:
        if (a in sub) != (b in sub):
            raise PreconditionError(f"{kind} edge {a}-{b} connects the subgraph to the rest")
    ones = np.zeros(net.n_nodes)
    ones[sub] = 1.0
    # shifting every subgraph node flux by one moves the coordinates along col
    col = net.basis @ ones
    if np.linalg.norm(col) < 1e-12:
        raise PreconditionError("subgraph common mode was already eliminated")
    n = net.cap.shape[0]
    # swap the coordinate with the largest overlap for the common mode
    k = int(np.argmax(np.abs(col)))
    t = np.eye(n)
    t[:, k] = col  # old coords = t @ new coords
    c_new = t.T @ net.cap @ t
    keep = [i for i in range(n) if i != k]
    c_rr = c_new[np.ix_(keep, keep)]
    c_rk = c_new[keep, k]
    c_kk = c_new[k, k]
    if c_kk <= 0:
        raise DegenerateNetworkError("subgraph has no capacitance to eliminate")
    reduced = c_rr - np.outer(c_rk, c_rk) / c_kk
    tinv = np.linalg.inv(t)
    basis = (tinv @ net.basis)[keep]
    names = [net.names[i] for i in keep]
    return CapacitanceNetwork(0.5 * (reduced + reduced.T), names, basis, list(net.potential_edges))


@dataclass
class ReducedCircuit:
    coordinates: list
    inv_cap: np.ndarray  # 1/fF

    def __post_init__(self):
        self.inv_cap = np.asarray(self.inv_cap, dtype=float)
        if np.any(np.linalg.eigvalsh(self.inv_cap) <= 0):
            raise DegenerateNetworkError("reduced inverse capacitance is not positive definite")

    def _i(self, name):
        return self.coordinates.index(name)

    def e_c(self, name="q"):
        i = self._i(name)
        return charging_energy_ghz(self.inv_cap[i, i])

    def c_sigma(self, name="q"):
        i = self._i(name)
        return 1.0 / self.inv_cap[i, i]

    def beta(self, a="q", b="m"):
        i, j = self._i(a), self._i(b)
        return float(self.inv_cap[i, j] / np.sqrt(self.inv_cap[i, i] * self.inv_cap[j, j]))

    def coupling_rate(self, f_mode_mhz, a="q", b="m"):
        """``g = 2 beta sqrt(f_mode E_C)`` in MHz."""
        return coupling_rate(self.beta(a, b), f_mode_mhz, self.e_c(a) * 1e3)


def reduce_to_dynamical(net, coordinate_defs):
    """Change to named coordinates ``(name, node_a, node_b)`` and invert the capacitance.

    The definitions must span the remaining coordinates exactly.
    """
    names = [d[0] for d in coordinate_defs]
    a = np.array([net.express(d[1], d[2]) for d in coordinate_defs])
    n = net.cap.shape[0]
    if a.shape != (n, n) or abs(np.linalg.det(a)) < 1e-12:
        raise DegenerateNetworkError(f"{len(names)} coordinate definitions do not span {n} coordinates")
    try:
        inv = np.linalg.inv(net.cap)
    except np.linalg.LinAlgError as exc:
        raise DegenerateNetworkError("singular capacitance matrix") from exc
    inv_red = a @ inv @ a.T
    return ReducedCircuit(names, 0.5 * (inv_red + inv_red.T))


def coupling_rate(beta, f_mode_mhz, e_c_mhz):
    return 2 * beta * np.sqrt(f_mode_mhz * e_c_mhz)


def charge_coupling(beta, f_mode_mhz, e_c_mhz, charge_element):
    """``g_eg = 2 beta sqrt(f_m E_C) |<g|n|e>|`` in MHz."""
    return coupling_rate(beta, f_mode_mhz, e_c_mhz) * abs(charge_element)


def coupling_bound(beta, f_mode_mhz, f_eg_mhz):
    """Upper bound ``beta sqrt(f_m f_eg) / 2`` on ``g_eg`` (MHz)."""
    return 0.5 * abs(beta) * np.sqrt(f_mode_mhz * f_eg_mhz)


def ideal_beta_from_k2(k_squared):
    if not 0 < k_squared < 1:
        raise ValueError("K^2 must lie in (0, 1)")
    return float(np.sqrt(KAPPA * k_squared / (1 - (1 - KAPPA) * k_squared)))


def k2_from_beta(beta):
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    b2 = beta**2
    return float(b2 / (KAPPA + (1 - KAPPA) * b2))


def ideal_beta_from_capacitances(c_in, c1, c_q=0.0):
    return float(c_in / np.sqrt((c_q + c_in) * (c1 + c_in)))


def k2_from_capacitances(c_in, c1):
    """K^2 from the LC equivalent, inverting the ideal-coupling relation at ``C_q = 0``."""
    if c_in <= 0 or c1 <= 0:
        raise ValueError("capacitances must be positive")
    return k2_from_beta(ideal_beta_from_capacitances(c_in, c1))


@dataclass(frozen=True)
class LcParams:
    """``C_in`` in series with a parallel ``L1 || C1`` tank."""

    c_in: float  # fF
    c1: float  # fF
    l1: float  # uH

    def __post_init__(self):
        if min(self.c_in, self.c1, self.l1) <= 0:
            raise ValueError("LC parameters must be positive")

    @property
    def k_squared(self):
        return k2_from_capacitances(self.c_in, self.c1)

    @property
    def zero_hz(self):
        return 1 / (2 * np.pi * np.sqrt(self.l1 * 1e-6 * self.c1 * FEMTO))

    @property
    def pole_hz(self):
        # series resonance, where the impedance vanishes
        return 1 / (2 * np.pi * np.sqrt(self.l1 * 1e-6 * (self.c1 + self.c_in) * FEMTO))


@dataclass(frozen=True)
class BvdParams:
    """Static ``C0`` shunting a motional ``Lm``-``Cm`` branch."""

    c0: float  # fF
    c_m: float  # fF
    l_m: float  # uH

    def __post_init__(self):
        if min(self.c0, self.c_m, self.l_m) <= 0:
            raise ValueError("BVD parameters must be positive")

    @property
    def k_squared(self):
        return k2_from_capacitances(*_lc_caps(self))

    @property
    def series_hz(self):
        return 1 / (2 * np.pi * np.sqrt(self.l_m * 1e-6 * self.c_m * FEMTO))

    @property
    def parallel_hz(self):
        cs = self.c0 * self.c_m / (self.c0 + self.c_m)
        return 1 / (2 * np.pi * np.sqrt(self.l_m * 1e-6 * cs * FEMTO))


def _lc_caps(bvd):
    c_in = bvd.c0 + bvd.c_m
    return c_in, bvd.c0 * c_in / bvd.c_m


def bvd_from_lc(lc):
    """Match the static and high-frequency capacitances and the admittance pole/zero."""
    c0 = lc.c_in * lc.c1 / (lc.c_in + lc.c1)
    c_m = lc.c_in - c0
    l_m = lc.l1 * (lc.c1 + lc.c_in) / c_m
    return BvdParams(c0, c_m, l_m)


def lc_from_bvd(bvd):
    c_in, c1 = _lc_caps(bvd)
    l1 = bvd.l_m * bvd.c_m / (c1 + c_in)
    return LcParams(c_in, c1, l1)


def admittance(params, f_hz):
    """Complex admittance (S) of either equivalent circuit."""
    w = 2 * np.pi * np.asarray(f_hz, dtype=float)
    if isinstance(params, LcParams):
        c_in, c1, l1 = params.c_in * FEMTO, params.c1 * FEMTO, params.l1 * 1e-6
        z = 1 / (1j * w * c_in) + 1j * w * l1 / (1 - w**2 * l1 * c1)
        return 1 / z
    c0, cm, lm = params.c0 * FEMTO, params.c_m * FEMTO, params.l_m * 1e-6
    return 1j * w * c0 + 1 / (1j * w * lm + 1 / (1j * w * cm))
