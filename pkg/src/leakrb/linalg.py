"""Dense linear algebra for small qudit registers.

Everything here works on explicit numpy arrays; the register is at most
three qutrits (dimension 27, superoperators 729 x 729). Basis convention:
each qubit occupies three levels |0>, |1>, |2> and the register index of a
level tuple is sum(level_k * 3**(n_qubits - 1 - k)), i.e. the first tensor
factor is the most significant digit.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache

import numpy as np

from .exceptions import NumericalError

# Tolerance policy, loosest to tightest use: algebraic identities are checked
# at 1e-12, stochastic-matrix properties at 1e-9, spectral quantities at 1e-8.
ATOL_ALGEBRA = 1e-12
ATOL_STOCHASTIC = 1e-9
ATOL_SPECTRAL = 1e-8
ATOL_UNITARY = 1e-10

LEVELS = 3  # levels per physical qubit: |0>, |1> computational, |2> leakage


def kron(*factors: np.ndarray) -> np.ndarray:
    """Kronecker product with the first factor most significant."""
    out = np.asarray(factors[0])
    for f in factors[1:]:
        out = np.kron(out, np.asarray(f))
    return out


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conjugate(np.swapaxes(m, -1, -2))


def matrix_hash(m: np.ndarray) -> str:
    """Short content hash used in numerical-failure diagnostics."""
    return hashlib.sha256(np.ascontiguousarray(m).tobytes()).hexdigest()[:16]


def is_unitary(m: np.ndarray, atol: float = ATOL_UNITARY) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return bool(np.allclose(m @ dagger(m), np.eye(m.shape[0]), atol=atol))


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a Haar-distributed unitary of the given dimension.

    QR decomposition of a complex Ginibre matrix with the R diagonal phases
    folded back into Q, which makes the distribution exactly Haar and the
    result a deterministic function of the generator state.
    """
    if dim < 1:
        raise ValueError(f"dimension must be positive, got {dim}")
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def eig(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a general square matrix.

    Returns (values, vectors) with eigenvalues sorted by descending modulus
    and vectors as columns, so m @ vectors ~= vectors @ diag(values).

    Raises
    ------
    NumericalError
        If the QR iteration fails to converge; the message carries a content
        hash of the offending matrix.
    """
    m = np.asarray(m)
    try:
        vals, vecs = np.linalg.eig(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigendecomposition failed to converge (matrix sha256 {matrix_hash(m)}): {exc}"
        ) from exc
    order = np.argsort(-np.abs(vals), kind="stable")
    return vals[order], vecs[:, order]


def partial_trace_env(m: np.ndarray, sys_dim: int, env_dim: int) -> np.ndarray:
    """Trace out the environment factor of a system (x) environment matrix.

    Index convention matches kron(): the system is the most significant
    factor, so the joint index is s * env_dim + e.
    """
    m = np.asarray(m)
    d = sys_dim * env_dim
    if m.shape != (d, d):
        raise ValueError(f"expected shape {(d, d)}, got {m.shape}")
    return np.einsum("iaja->ij", m.reshape(sys_dim, env_dim, sys_dim, env_dim))


def probability_vector(values: np.ndarray, atol_negative: float = ATOL_ALGEBRA) -> np.ndarray:
    """Validate and clamp a population vector.

    Entries may dip to -1e-12 from roundoff and are clamped to zero; anything
    more negative, or a total away from 1 beyond the stochastic tolerance, is
    an error.
    """
    v = np.asarray(values, dtype=float)
    if np.any(v < -atol_negative):
        raise ValueError(f"negative probability beyond tolerance: min={v.min():.3e}")
    v = np.clip(v, 0.0, None)
    total = v.sum()
    if abs(total - 1.0) > ATOL_STOCHASTIC:
        raise ValueError(f"probabilities sum to {total!r}, expected 1")
    return v


# ---------------------------------------------------------------------------
# register indexing

@lru_cache(maxsize=None)
def comp_indices(n_qubits: int) -> tuple[int, ...]:
    """Register indices whose base-3 digits are all in {0, 1}."""
    dim = LEVELS**n_qubits
    keep = []
    for i in range(dim):
        digits, x = [], i
        for _ in range(n_qubits):
            digits.append(x % 3)
            x //= 3
        if all(d < 2 for d in digits):
            keep.append(i)
    return tuple(keep)


@lru_cache(maxsize=None)
def leak_indices(n_qubits: int) -> tuple[int, ...]:
    comp = set(comp_indices(n_qubits))
    return tuple(i for i in range(LEVELS**n_qubits) if i not in comp)


@lru_cache(maxsize=None)
def leak_patterns(n_qubits: int) -> np.ndarray:
    """Per register index, the bitmask of qubits sitting in the leakage level."""
    dim = LEVELS**n_qubits
    pattern = np.zeros(dim, dtype=np.int64)
    for i in range(dim):
        x = i
        for k in range(n_qubits - 1, -1, -1):
            if x % 3 == 2:
                pattern[i] |= 1 << k
            x //= 3
    return pattern


def basis_state(dim: int, index: int) -> np.ndarray:
    rho = np.zeros((dim, dim), dtype=complex)
    rho[index, index] = 1.0
    return rho


# ---------------------------------------------------------------------------
# Hermitian operator basis and superoperator matrices
#
# Superoperators of Hermiticity-preserving maps are real matrices in an
# orthonormal Hermitian basis. The basis is ordered with the d diagonal
# projectors first, so population dynamics occupy the leading d coordinates.

@lru_cache(maxsize=None)
def hermitian_basis(dim: int) -> np.ndarray:
    """Orthonormal Hermitian basis of dim x dim operators, shape (dim^2, dim, dim)."""
    mats = []
    for a in range(dim):
        e = np.zeros((dim, dim), dtype=complex)
        e[a, a] = 1.0
        mats.append(e)
    s = 1.0 / np.sqrt(2.0)
    for a in range(dim):
        for b in range(a + 1, dim):
            x = np.zeros((dim, dim), dtype=complex)
            x[a, b] = s
            x[b, a] = s
            mats.append(x)
            y = np.zeros((dim, dim), dtype=complex)
            y[a, b] = -1j * s
            y[b, a] = 1j * s
            mats.append(y)
    return np.stack(mats)


def to_hermitian_coords(m: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Coordinates of (a batch of) operators in the Hermitian basis."""
    coords = np.einsum("mij,...ij->...m", basis.conj(), m)
    return coords.real


def from_hermitian_coords(coords: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return np.einsum("...m,mij->...ij", coords, basis)


def superoperator(apply_fn, dim: int) -> np.ndarray:
    """Real matrix of a Hermiticity-preserving map in the Hermitian basis.

    apply_fn takes a batch of operators, shape (dim^2, dim, dim), and returns
    their images with the same shape.
    """
    basis = hermitian_basis(dim)
    images = apply_fn(basis)
    full = np.einsum("mij,nij->mn", hermitian_basis(dim).conj(), images)
    if np.max(np.abs(full.imag)) > 1e-10:
        raise NumericalError("map is not Hermiticity-preserving within tolerance")
    return full.real


def conjugation_superoperator(u: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> u rho u^dagger in the Hermitian basis."""
    u = np.asarray(u)
    return superoperator(lambda batch: np.einsum("ij,njk,lk->nil", u, batch, u.conj()), u.shape[0])
