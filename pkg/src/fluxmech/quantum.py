"""Dense Fock-space primitives shared by the physics modules.

Matrices are plain complex ``numpy`` arrays. Hamiltonians are expressed as
ordinary frequencies (GHz unless stated otherwise); angular factors only
appear where something is propagated in time.
"""

import warnings

import numpy as np
from scipy import constants
from scipy.linalg import expm

H_PLANCK = constants.h
K_BOLTZMANN = constants.k

HERMITIAN_RTOL = 1e-12


class DimensionError(ValueError):
    pass


class NotHermitianError(ValueError):
    pass


class TruncationWarning(UserWarning):
    pass


def ladder_operators(dim):
    """Return ``(a, a_dag, n)`` truncated to ``dim`` Fock states."""
    if int(dim) != dim or dim < 2:
        raise DimensionError(f"ladder operators need dim >= 2, got {dim}")
    dim = int(dim)
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)
    return a, a.conj().T.copy(), np.diag(np.arange(dim, dtype=float)).astype(complex)


def tensor_product(*ops):
    """Kronecker product in the artifact-wide order qudit (x) mechanics (x) readout."""
    out = np.asarray(ops[0])
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op))
    return out


def hermiticity_error(h):
    h = np.asarray(h)
    scale = np.linalg.norm(h)
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(h - h.conj().T) / scale)


def is_hermitian(h, rtol=1e-9):
    return hermiticity_error(h) <= rtol


def hermitize(h):
    h = np.asarray(h)
    return 0.5 * (h + h.conj().T)


def hermitian_eigensystem(h, rtol=1e-9):
    """Ascending eigenvalues and orthonormal eigenvectors (columns).

    Each eigenvector is phase-fixed so that its first component with magnitude
    above 1e-10 is real and positive, which makes degenerate-free output
    reproducible across LAPACK builds.
    """
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {h.shape}")
    if not is_hermitian(h, rtol):
        raise NotHermitianError(f"matrix is not Hermitian (rel. error {hermiticity_error(h):.2e})")
    values, vectors = np.linalg.eigh(hermitize(h))
    return values, fix_phases(vectors)


def fix_phases(vectors, tol=1e-10):
    vectors = np.array(vectors, dtype=complex)
    for k in range(vectors.shape[1]):
        col = vectors[:, k]
        nz = np.flatnonzero(np.abs(col) > tol)
        if nz.size:
            ph = col[nz[0]] / abs(col[nz[0]])
            vectors[:, k] = col / ph
    return vectors


def bose_occupation(freq_hz, temp_kelvin):
    """Mean Bose-Einstein occupation of a mode at ``freq_hz``."""
    if temp_kelvin <= 0:
        raise ValueError("temperature must be positive")
    x = H_PLANCK * freq_hz / (K_BOLTZMANN * temp_kelvin)
    return 1.0 / np.expm1(x)


def thermal_density_matrix(freq_hz, temp_kelvin, dim, tol=1e-6):
    """Truncated thermal state of a harmonic mode.

    Populations are ``(1 - tau) tau**n`` with ``tau = exp(-h f / k T)``,
    renormalized over ``dim`` levels. A :class:`TruncationWarning` is emitted if
    the discarded weight ``tau**dim`` exceeds ``tol``.
    """
    if temp_kelvin <= 0:
        raise ValueError("temperature must be positive")
    if freq_hz <= 0:
        raise ValueError("frequency must be positive")
    tau = np.exp(-H_PLANCK * freq_hz / (K_BOLTZMANN * temp_kelvin))
    n = np.arange(dim)
    p = (1 - tau) * tau**n
    lost = tau**dim
    if lost > tol:
        warnings.warn(f"thermal state truncated at {dim} levels loses weight {lost:.2e}",
                      TruncationWarning, stacklevel=2)
    p = p / p.sum()
    return np.diag(p).astype(complex)


def displacement_operator(alpha, dim):
    """``expm(alpha b^dag - conj(alpha) b)`` in a ``dim``-level truncation."""
    alpha = complex(alpha)
    if abs(alpha) ** 2 + 3 * abs(alpha) >= dim:
        warnings.warn(f"displacement |alpha|={abs(alpha):.3g} is large for dim={dim}",
                      TruncationWarning, stacklevel=2)
    a, adag, _ = ladder_operators(dim)
    return expm(alpha * adag - np.conj(alpha) * a)


def fock_populations(rho):
    return np.real(np.diag(rho)).copy()


def purity(rho):
    return float(np.real(np.trace(rho @ rho)))


def trace_distance(rho, sigma):
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(hermitize(rho - sigma)))))


def check_density_matrix(rho, trace_tol=1e-9, herm_tol=1e-9, eig_tol=1e-9):
    """Raise ``ValueError`` if ``rho`` is not a valid density matrix."""
    rho = np.asarray(rho)
    if abs(np.trace(rho) - 1) > trace_tol:
        raise ValueError(f"trace {np.trace(rho):.12g} != 1")
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise ValueError("density matrix is not Hermitian")
    if np.linalg.eigvalsh(hermitize(rho)).min() < -eig_tol:
        raise ValueError("density matrix has negative eigenvalues")
    return rho
