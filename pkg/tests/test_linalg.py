"""Checks for the dense linear-algebra layer."""

import numpy as np
import pytest

from leakrb.linalg import (
    comp_indices,
    conjugation_superoperator,
    dagger,
    eig,
    from_hermitian_coords,
    haar_unitary,
    hermitian_basis,
    is_unitary,
    kron,
    leak_indices,
    leak_patterns,
    matrix_hash,
    partial_trace_env,
    probability_vector,
    superoperator,
    to_hermitian_coords,
)


def random_density(dim, rng):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ dagger(g)
    return rho / np.trace(rho)


def test_kron_first_factor_most_significant():
    a = np.diag([1.0, 2.0, 3.0])
    b = np.diag([10.0, 20.0, 30.0])
    joint = kron(a, b)
    for i in range(3):
        for j in range(3):
            assert joint[3 * i + j, 3 * i + j] == a[i, i] * b[j, j]


def test_dagger():
    m = np.array([[1.0, 2.0j], [3.0, 4.0]])
    assert np.array_equal(dagger(m), m.conj().T)


@pytest.mark.parametrize("dim", [2, 3, 9])
def test_haar_unitary_is_unitary(dim):
    u = haar_unitary(dim, np.random.default_rng(0))
    assert is_unitary(u)


def test_haar_unitary_deterministic():
    u1 = haar_unitary(3, np.random.default_rng(42))
    u2 = haar_unitary(3, np.random.default_rng(42))
    u3 = haar_unitary(3, np.random.default_rng(43))
    assert np.array_equal(u1, u2)
    assert not np.allclose(u1, u3)


def test_haar_trace_moment():
    # E|tr U|^2 = 1 for the Haar measure on U(d); the plain QR distribution
    # without phase correction would not satisfy this.
    rng = np.random.default_rng(5)
    vals = [abs(np.trace(haar_unitary(3, rng))) ** 2 for _ in range(3000)]
    assert abs(np.mean(vals) - 1.0) < 0.08


def test_eig_sorted_by_descending_modulus():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(6, 6))
    vals, vecs = eig(m)
    moduli = np.abs(vals)
    assert np.all(moduli[:-1] >= moduli[1:] - 1e-12)
    assert np.allclose(m @ vecs, vecs @ np.diag(vals), atol=1e-10)


def test_partial_trace_env_recovers_system():
    rng = np.random.default_rng(2)
    rho_s = random_density(3, rng)
    rho_e = random_density(2, rng)
    assert np.allclose(partial_trace_env(kron(rho_s, rho_e), 3, 2), rho_s, atol=1e-12)
    with pytest.raises(ValueError):
        partial_trace_env(np.eye(5), 3, 2)


def test_probability_vector_clamps_roundoff():
    v = probability_vector(np.array([0.5, 0.5 + 1e-13, -1e-13]))
    assert v[2] == 0.0
    with pytest.raises(ValueError):
        probability_vector(np.array([0.5, 0.5, -1e-6]))
    with pytest.raises(ValueError):
        probability_vector(np.array([0.6, 0.6]))


def test_register_index_partition():
    assert comp_indices(1) == (0, 1)
    assert leak_indices(1) == (2,)
    assert comp_indices(2) == (0, 1, 3, 4)
    assert leak_indices(2) == (2, 5, 6, 7, 8)
    assert set(comp_indices(2)) | set(leak_indices(2)) == set(range(9))


def test_leak_patterns_flag_leaked_qubits():
    p = leak_patterns(2)
    assert p[0] == 0  # |00>
    assert p[2] == 0b10  # |02>: second tensor factor leaked
    assert p[6] == 0b01  # |20>: first tensor factor leaked
    assert p[8] == 0b11  # |22>
    assert all(p[i] == 0 for i in comp_indices(2))


def test_hermitian_basis_orthonormal():
    basis = hermitian_basis(3)
    assert basis.shape == (9, 3, 3)
    gram = np.einsum("aij,bij->ab", basis.conj(), basis)
    assert np.allclose(gram, np.eye(9), atol=1e-12)
    # diagonal projectors lead, so population dynamics sit in the first d slots
    for a in range(3):
        expected = np.zeros((3, 3))
        expected[a, a] = 1.0
        assert np.allclose(basis[a], expected)


def test_hermitian_coords_round_trip():
    rng = np.random.default_rng(3)
    basis = hermitian_basis(3)
    rho = random_density(3, rng)
    coords = to_hermitian_coords(rho, basis)
    assert np.allclose(from_hermitian_coords(coords, basis), rho, atol=1e-12)


def test_conjugation_superoperator_is_orthogonal_homomorphism():
    rng = np.random.default_rng(4)
    u = haar_unitary(3, rng)
    v = haar_unitary(3, rng)
    su, sv = conjugation_superoperator(u), conjugation_superoperator(v)
    assert np.allclose(su @ su.T, np.eye(9), atol=1e-10)
    assert np.allclose(conjugation_superoperator(u @ v), su @ sv, atol=1e-10)


def test_superoperator_matches_direct_action():
    rng = np.random.default_rng(6)
    u = haar_unitary(3, rng)
    s = superoperator(lambda batch: np.einsum("ij,njk,lk->nil", u, batch, u.conj()), 3)
    assert np.allclose(s, conjugation_superoperator(u), atol=1e-12)
    basis = hermitian_basis(3)
    rho = random_density(3, rng)
    out = from_hermitian_coords(s @ to_hermitian_coords(rho, basis), basis)
    assert np.allclose(out, u @ rho @ dagger(u), atol=1e-12)


def test_matrix_hash_stable_and_content_sensitive():
    m = np.arange(9.0).reshape(3, 3)
    h = matrix_hash(m)
    assert len(h) == 16
    assert h == matrix_hash(m.copy())
    assert h != matrix_hash(m + 1e-12)


def test_is_unitary_rejects_bad_shapes():
    assert not is_unitary(np.ones((2, 3)))
    assert not is_unitary(2.0 * np.eye(3))
    assert is_unitary(np.eye(4))
