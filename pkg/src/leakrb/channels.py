"""Error channels on the qutrit register and their averaged dynamics.

Channels are Kraus families validated for trace preservation at
construction. Three views of a channel matter downstream:

* the full superoperator, a real matrix acting on Hermitian-basis
  coordinates of density matrices, used for exact sequence averages;
* the level-population transition matrix (restriction to diagonal
  density matrices), a column-stochastic real matrix;
* the twirl over an extended Clifford set, which is again a transition
  matrix and carries the decay rates the benchmarking protocol measures.

The SequenceAverageMap implements the exact average over one random
set element (optionally followed by a fixed interleaved gate): applying
it y times to the identity superoperator and bracketing with the initial
state reproduces the protocol's expected survival with an ideal final
inverter. Averaging over the phase masks reduces to an elementwise 0/1
mask on superoperator coordinates, so the element sum is all that is
ever iterated.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .cliffords import ExtendedCliffordSet, PhaseMask, QutritUnitary
from .exceptions import ConfigError, IntegrityError, NumericalError, TwirlWarning
from .linalg import (
    ATOL_SPECTRAL,
    ATOL_STOCHASTIC,
    LEVELS,
    comp_indices,
    conjugation_superoperator,
    dagger,
    eig,
    haar_unitary,
    hermitian_basis,
    matrix_hash,
    to_hermitian_coords,
)


@dataclass(frozen=True, eq=False)
class Channel:
    """CPTP map in Kraus form on a 3^N-dimensional register."""

    kraus: np.ndarray  # (m, d, d) complex
    label: str = ""

    def __post_init__(self):
        kraus = np.asarray(self.kraus, dtype=complex)
        if kraus.ndim != 3 or kraus.shape[1] != kraus.shape[2]:
            raise ValueError(f"kraus stack must be (m, d, d), got {kraus.shape}")
        object.__setattr__(self, "kraus", kraus)
        ident = np.eye(self.dim)
        total = np.einsum("kji,kjl->il", kraus.conj(), kraus)
        residual = np.abs(total - ident).max()
        if residual > ATOL_STOCHASTIC:
            raise IntegrityError(
                f"channel {self.label!r} violates completeness: residual {residual:.2e}"
            )

    @property
    def dim(self) -> int:
        return self.kraus.shape[1]

    @property
    def n_kraus(self) -> int:
        return self.kraus.shape[0]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return apply_channel(self, rho)

    def superoperator(self) -> np.ndarray:
        """Real matrix acting on Hermitian-basis coordinates."""
        return _superop_from_kraus(self.kraus)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "dim": self.dim,
            "kraus": [
                [[[float(v.real), float(v.imag)] for v in row] for row in k]
                for k in self.kraus
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Channel":
        kraus = np.array(
            [[[complex(re, im) for re, im in row] for row in k] for k in doc["kraus"]]
        )
        ch = cls(kraus=kraus, label=str(doc.get("label", "")))
        if ch.dim != int(doc["dim"]):
            raise IntegrityError("serialized channel dim disagrees with kraus shape")
        return ch


def identity_channel(dim: int, label: str = "identity") -> Channel:
    return Channel(kraus=np.eye(dim, dtype=complex)[None], label=label)


def apply_channel(ch: Channel, rho: np.ndarray) -> np.ndarray:
    """Σₖ Kₖ ρ Kₖ†. Accepts a single density matrix or a stack (..., d, d)."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-1] != ch.dim or rho.shape[-2] != ch.dim:
        raise ValueError(f"state dim {rho.shape[-2:]} does not match channel dim {ch.dim}")
    return np.einsum("kij,...jl,kml->...im", ch.kraus, rho, ch.kraus.conj(), optimize=True)


def unitary_error(dim: int, delta: float, rng: np.random.Generator) -> Channel:
    """Coherent error: exponential of a small random Hamiltonian.

    A Haar rotation of exp(-i*delta*D), with D real diagonal, entries
    uniform in [-1,1] scaled to unit max-norm. Infidelity grows as delta²,
    so delta is the tuning knob for figure-scale error magnitudes.
    """
    if not 0 <= delta < 1:
        raise ValueError(f"delta must be small and non-negative, got {delta}")
    diag = rng.uniform(-1.0, 1.0, size=dim)
    diag /= np.abs(diag).max()
    v = haar_unitary(dim, rng)
    u = (v * np.exp(-1j * delta * diag)[None, :]) @ dagger(v)
    return Channel(kraus=u[None], label=f"unitary(delta={delta:g})")


def dilated_error(sys_dim: int, env_dim: int, delta: float, rng: np.random.Generator) -> Channel:
    """Generic CPTP error from a joint rotation with an environment.

    Kraus operators are the environment blocks ⟨E_k| exp(-i*delta*H) |E_0⟩
    of a Gaussian Hermitian H on system⊗environment scaled to unit
    spectral norm. delta = 0 gives the identity channel exactly.
    """
    if env_dim < 2:
        raise ValueError(f"env_dim must be at least 2, got {env_dim}")
    n = sys_dim * env_dim
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    h = (g + dagger(g)) / 2.0
    h /= np.abs(np.linalg.eigvalsh(h)).max()
    u = _expm_hermitian(-delta, h)
    blocks = u.reshape(sys_dim, env_dim, sys_dim, env_dim)
    kraus = blocks[:, :, :, 0].transpose(1, 0, 2)  # (env_dim, sys, sys)
    return Channel(kraus=kraus, label=f"dilated(delta={delta:g},env={env_dim})")


def _expm_hermitian(scale: float, h: np.ndarray) -> np.ndarray:
    """exp(1j*scale*H) for Hermitian H via its eigenbasis."""
    vals, vecs = np.linalg.eigh(h)
    return (vecs * np.exp(1j * scale * vals)[None, :]) @ dagger(vecs)


def _pauli_stack(n_qubits: int) -> np.ndarray:
    """All 4^N Pauli words on 2^N dims, identity first."""
    paulis = [
        np.eye(2, dtype=complex),
        np.array([[0, 1], [1, 0]], dtype=complex),
        np.array([[0, -1j], [1j, 0]], dtype=complex),
        np.array([[1, 0], [0, -1]], dtype=complex),
    ]
    words = [np.eye(1, dtype=complex)]
    for _ in range(n_qubits):
        words = [np.kron(w, p) for w in words for p in paulis]
    return np.stack(words)


def depolarizing_comp(n_qubits: int, p: float) -> Channel:
    """Depolarize the computational subspace, leave leakage populations alone.

    Acts as (1-p)·rho + p·(maximally mixed comp state)·tr(rho) on the
    computational block; every Kraus operator is identity outside it.
    """
    if not 0 <= p <= 1:
        raise ValueError(f"p must be a probability, got {p}")
    dim = LEVELS**n_qubits
    comp = np.array(comp_indices(n_qubits))
    four_n = 4**n_qubits
    weights = np.full(four_n, p / four_n)
    weights[0] = 1.0 - (four_n - 1) * p / four_n
    kraus = np.tile(np.eye(dim, dtype=complex), (four_n, 1, 1))
    kraus[:, comp[:, None], comp[None, :]] = _pauli_stack(n_qubits)
    kraus *= np.sqrt(weights)[:, None, None]
    return Channel(kraus=kraus, label=f"depolarizing(p={p:g})")


# ---------------------------------------------------------------------------
# population dynamics

@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Column-stochastic map on level populations: M[i][j] = P(j -> i)."""

    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"transition matrix must be square, got {m.shape}")
        if m.min() < -1e-12:
            raise IntegrityError(
                f"transition matrix {self.label!r} has entry {m.min():.2e} below -1e-12"
            )
        col_residual = np.abs(m.sum(axis=0) - 1.0).max()
        if col_residual > ATOL_STOCHASTIC:
            raise IntegrityError(
                f"transition matrix {self.label!r} columns deviate from 1 by {col_residual:.2e}"
            )
        moduli = np.abs(np.linalg.eigvals(m))
        if moduli.max() > 1 + ATOL_SPECTRAL or abs(moduli.max() - 1.0) > ATOL_SPECTRAL:
            raise IntegrityError(
                f"transition matrix {self.label!r} top eigenvalue modulus {moduli.max():.10f}"
            )

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        vals, _ = eig(self.matrix)
        return vals

    def power(self, y: int) -> np.ndarray:
        return np.linalg.matrix_power(self.matrix, y)

    def evolve(self, populations: np.ndarray, steps: int = 1) -> np.ndarray:
        return self.power(steps) @ np.asarray(populations, dtype=float)

    def bracket(self, y: int, init: np.ndarray, meas: np.ndarray) -> float:
        """meas^T · M^y · init, the survival predicted for diagonal states."""
        return float(np.asarray(meas, float) @ self.power(y) @ np.asarray(init, float))


def restrict_to_diagonal(ch: Channel) -> TransitionMatrix:
    """Population-transfer matrix M[i][j] = ⟨i| ch(|j⟩⟨j|) |i⟩."""
    m = np.einsum("kij,kij->ij", ch.kraus, ch.kraus.conj()).real
    return TransitionMatrix(matrix=m, label=f"diag[{ch.label}]")


def twirl(ch: Channel, ext_set: ExtendedCliffordSet) -> TransitionMatrix:
    """Exact average of restrict_to_diagonal(C† ∘ ch ∘ C) over the whole set.

    Conjugation by any diagonal-phase leakage action or phase mask leaves
    the restricted matrix unchanged entrywise, so the sum runs over the
    Clifford elements only; the mask factor cancels exactly.
    """
    if not ext_set.twirl_design:
        warnings.warn(
            "twirl over a set that is not a twirl design; eigenvalues need not "
            "reflect protocol decay rates",
            TwirlWarning,
            stacklevel=2,
        )
    if ch.dim != ext_set.dim:
        raise ValueError(f"channel dim {ch.dim} does not match set dim {ext_set.dim}")
    fulls = ext_set.full_stack
    total = np.zeros((ch.dim, ch.dim))
    chunk = max(1, 2**22 // (ch.n_kraus * ch.dim * ch.dim))
    for start in range(0, fulls.shape[0], chunk):
        f = fulls[start : start + chunk]
        conj = np.einsum("nai,kab,nbj->nkij", f.conj(), ch.kraus, f, optimize=True)
        total += np.einsum("nkij,nkij->ij", conj, conj.conj(), optimize=True).real
    return TransitionMatrix(
        matrix=total / fulls.shape[0], label=f"twirl[{ch.label}]"
    )


# ---------------------------------------------------------------------------
# error model

@dataclass(frozen=True, eq=False)
class ErrorModel:
    """Channel assignment for a simulated protocol.

    Exactly one of gate (gate-independent) or per_element (one channel per
    Clifford element, index-aligned) must be set. A gate-dependent model
    must name its inverter channel explicitly; a gate-independent one
    reuses the single gate channel everywhere unless overridden.
    """

    gate: Channel | None = None
    per_element: tuple[Channel, ...] | None = None
    inverter: Channel | None = None
    interleaved: Channel | None = None
    prep: Channel | None = None
    meas: Channel | None = None

    def __post_init__(self):
        if (self.gate is None) == (self.per_element is None):
            raise ConfigError("set exactly one of gate or per_element")
        dims = {c.dim for c in self.all_channels()}
        if len(dims) > 1:
            raise ConfigError(f"channels have inconsistent dims {sorted(dims)}")

    def all_channels(self):
        named = [self.gate, self.inverter, self.interleaved, self.prep, self.meas]
        return [c for c in named if c is not None] + list(self.per_element or ())

    @property
    def dim(self) -> int:
        return self.all_channels()[0].dim

    @property
    def gate_dependent(self) -> bool:
        return self.per_element is not None

    def channel_for(self, element_index: int) -> Channel:
        if self.per_element is not None:
            return self.per_element[element_index]
        return self.gate

    @property
    def inverter_channel(self) -> Channel:
        ch = self.inverter if self.inverter is not None else self.gate
        if ch is None:
            raise ConfigError("gate-dependent model has no inverter channel")
        return ch

    def validate_for(self, ext_set: ExtendedCliffordSet, needs_interleaved: bool = False):
        if self.dim != ext_set.dim:
            raise ConfigError(
                f"model dim {self.dim} does not match set dim {ext_set.dim}"
            )
        if self.per_element is not None and len(self.per_element) != len(ext_set.elements):
            raise ConfigError(
                f"gate-dependent model covers {len(self.per_element)} elements, "
                f"set has {len(ext_set.elements)}"
            )
        if self.per_element is not None:
            self.inverter_channel  # raises when unassigned
        if needs_interleaved and self.interleaved is None:
            raise ConfigError("interleaved run requires an interleaved-gate channel")


# ---------------------------------------------------------------------------
# average gate fidelity on the computational subspace

@dataclass(frozen=True)
class FidelityEstimate:
    value: float
    stderr: float
    n_samples: int


def exact_average_fidelity_comp(ch: Channel, n_qubits: int) -> float:
    """Average fidelity over computational-subspace pure states, closed form.

    Uses the two-design identity: F = (Σₖ |tr Aₖ|² + Σₖ tr AₖAₖ†) / (d(d+1))
    with Aₖ the computational block of each Kraus operator and d = 2^N.
    """
    comp = np.array(comp_indices(n_qubits))
    blocks = ch.kraus[:, comp[:, None], comp[None, :]]
    d = blocks.shape[1]
    traces = np.einsum("kii->k", blocks)
    gram = np.einsum("kij,kij->", blocks, blocks.conj()).real
    return float(((np.abs(traces) ** 2).sum() + gram) / (d * (d + 1)))


def average_fidelity_comp(
    ch: Channel,
    n_qubits: int,
    n_samples: int = 100_000,
    rng: np.random.Generator | None = None,
) -> FidelityEstimate:
    """Monte Carlo average fidelity over Haar-random computational states."""
    rng = np.random.default_rng(0) if rng is None else rng
    comp = np.array(comp_indices(n_qubits))
    blocks = ch.kraus[:, comp[:, None], comp[None, :]]
    d = blocks.shape[1]
    psi = rng.normal(size=(n_samples, d)) + 1j * rng.normal(size=(n_samples, d))
    psi /= np.linalg.norm(psi, axis=1, keepdims=True)
    amps = np.einsum("si,kij,sj->ks", psi.conj(), blocks, psi, optimize=True)
    fids = (np.abs(amps) ** 2).sum(axis=0)
    return FidelityEstimate(
        value=float(fids.mean()),
        stderr=float(fids.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0,
        n_samples=n_samples,
    )


# ---------------------------------------------------------------------------
# exact sequence-averaged dynamics

def _superop_from_kraus(kraus: np.ndarray) -> np.ndarray:
    d = kraus.shape[1]
    basis = hermitian_basis(d)
    out = np.einsum("kij,bjl,kml->bim", kraus, basis, kraus.conj(), optimize=True)
    s = np.einsum("aim,bmi->ab", basis, out, optimize=True)
    residual = np.abs(s.imag).max()
    if residual > 1e-10:
        raise NumericalError(f"superoperator has imaginary residual {residual:.2e}")
    return s.real


def _conjugation_superop_stack(us: np.ndarray) -> np.ndarray:
    """Conjugation superoperators of a stack of unitaries, real orthogonal."""
    d = us.shape[-1]
    basis = hermitian_basis(d)
    out = np.einsum("nij,bjl,nml->nbim", us, basis, us.conj(), optimize=True)
    return np.einsum("aim,nbmi->nab", basis, out, optimize=True).real


@lru_cache(maxsize=None)
def _mask_character(masks: tuple[PhaseMask, ...]) -> np.ndarray:
    """Entrywise factor left by averaging S ↦ L̂ᵀ S L̂ over the given masks.

    Mask conjugation superoperators are diagonal (entries ±1) in the
    Hermitian basis, so the average multiplies entry (a, b) by the mean of
    d_a·d_b; characters either match (1) or cancel (0).
    """
    diags = np.stack(
        [np.diagonal(conjugation_superoperator(m.operator())) for m in masks]
    )
    mask = np.einsum("na,nb->ab", diags, diags) / len(masks)
    rounded = np.round(mask)
    if np.abs(mask - rounded).max() > 1e-9 or not set(np.unique(rounded)) <= {0.0, 1.0}:
        raise NumericalError("phase-mask average did not reduce to a 0/1 mask")
    return rounded


def coherence_mask(n_qubits: int) -> np.ndarray:
    """0/1 matrix: which superoperator entries survive the full mask average."""
    masks = tuple(
        PhaseMask(tuple(-1 if m >> k & 1 else 1 for k in range(n_qubits)))
        for m in range(2**n_qubits)
    )
    return _mask_character(masks)


class SequenceAverageMap:
    """Exact average of one sequence-extension step over the extended set.

    One application takes the superoperator S accumulated for a length-y
    experiment to the length-(y+1) average: conjugate by a set element on
    the outside, apply its error channel (and optionally a fixed
    interleaved gate with its own error) on the inside, average. Bracketing
    the iterate with an initial computational state yields the expected
    survival probability with an ideal final inverter; eigenvalues of the
    map are the candidate decay rates of that curve.

    For one qubit the map is materialized as a dense real matrix on
    superoperator coordinates (81×81). For two qubits that matrix has side
    6561 and a dense build over 11520 elements is out of scale, so the map
    is applied operator-style in chunks; expect seconds per application.
    """

    def __init__(
        self,
        ext_set: ExtendedCliffordSet,
        model: ErrorModel,
        interleaved_gate: QutritUnitary | None = None,
        interleaved_channel: Channel | None = None,
    ):
        if (interleaved_gate is None) != (interleaved_channel is None):
            raise ConfigError("interleaved gate and its channel come together")
        model.validate_for(ext_set)
        self.ext_set = ext_set
        self.model = model
        self.dim = ext_set.dim
        self._d2 = self.dim * self.dim
        self._mask = _mask_character(ext_set.masks)
        self._lam = None if model.gate_dependent else model.gate.superoperator()
        self._v_left = None
        self._v_right = None
        if interleaved_gate is not None:
            if interleaved_gate.full.shape[0] != self.dim:
                raise ConfigError("interleaved gate dim does not match the set")
            vhat = conjugation_superoperator(interleaved_gate.full)
            self._v_left = vhat.T
            self._v_right = vhat @ interleaved_channel.superoperator()
        self._stacks = self._build_stacks() if ext_set.n_qubits == 1 else None
        self._transfer: np.ndarray | None = None

    def _element_superops(self, start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
        """Left/right factor stacks for elements [start, stop)."""
        conj = _conjugation_superop_stack(self.ext_set.full_stack[start:stop])
        left = conj.transpose(0, 2, 1)
        if self._v_left is not None:
            left = left @ self._v_left
        if self._lam is not None:
            right = self._lam @ conj
        else:
            lams = [self.model.per_element[i].superoperator() for i in range(start, stop)]
            right = np.stack(lams) @ conj
        if self._v_right is not None:
            right = self._v_right @ right
        return left, right

    def _build_stacks(self) -> tuple[np.ndarray, np.ndarray]:
        return self._element_superops(0, len(self.ext_set.elements))

    @property
    def transfer_matrix(self) -> np.ndarray:
        """Dense real matrix of the map on vectorized superoperators."""
        if self._transfer is None:
            if self._stacks is None:
                raise NumericalError(
                    "dense transfer matrix is only materialized for one qubit; "
                    "use apply/spectral_radius for larger registers"
                )
            left, right = self._stacks
            theta = np.einsum("nab,ndc->acbd", left, right, optimize=True) / left.shape[0]
            theta = theta.reshape(self._d2 * self._d2, self._d2 * self._d2)
            self._transfer = self._mask.ravel()[:, None] * theta
        return self._transfer

    def apply(self, s: np.ndarray) -> np.ndarray:
        """One averaging step on a superoperator in Hermitian coordinates."""
        if s.shape != (self._d2, self._d2):
            raise ValueError(f"expected shape {(self._d2, self._d2)}, got {s.shape}")
        n = len(self.ext_set.elements)
        if self._stacks is not None:
            left, right = self._stacks
            out = np.einsum("nab,bc,ncd->ad", left, s, right, optimize=True) / n
        else:
            out = np.zeros_like(s)
            chunk = 512
            for start in range(0, n, chunk):
                left, right = self._element_superops(start, min(n, start + chunk))
                out += np.einsum("nab,bc,ncd->ad", left, s, right, optimize=True)
            out /= n
        return self._mask * out

    def iterate(self, length: int) -> np.ndarray:
        """Superoperator of the averaged length-y experiment (ideal inverter)."""
        s = np.eye(self._d2)
        for _ in range(length):
            s = self.apply(s)
        return s

    def eigenvalues(self) -> np.ndarray:
        vals, _ = eig(self.transfer_matrix)
        return vals

    def spectral_radius(
        self, rng: np.random.Generator | None = None, iterations: int = 24
    ) -> float:
        """Power-iteration estimate of the largest eigenvalue modulus."""
        rng = np.random.default_rng(0) if rng is None else rng
        s = rng.normal(size=(self._d2, self._d2))
        s /= np.linalg.norm(s)
        ratios = []
        for _ in range(iterations):
            s = self.apply(s)
            norm = np.linalg.norm(s)
            if norm == 0.0:
                return 0.0
            ratios.append(norm)
            s /= norm
        tail = ratios[len(ratios) // 2 :]
        return float(np.exp(np.mean(np.log(tail))))

    def _bracket_vectors(
        self,
        initial_state: np.ndarray | None,
        include_inverter_error: bool,
        include_spam: bool,
    ) -> tuple[np.ndarray, np.ndarray]:
        rho0 = initial_state
        if rho0 is None:
            rho0 = np.zeros((self.dim, self.dim), dtype=complex)
            rho0[0, 0] = 1.0
        r0 = to_hermitian_coords(rho0, hermitian_basis(self.dim))
        r_in, r_out = r0, r0
        if include_spam and self.model.prep is not None:
            r_in = self.model.prep.superoperator() @ r_in
        if include_inverter_error:
            r_out = self.model.inverter_channel.superoperator().T @ r_out
        if include_spam and self.model.meas is not None:
            r_out = self.model.meas.superoperator().T @ r_out
        return r_out, r_in

    def survival(
        self,
        length: int,
        initial_state: np.ndarray | None = None,
        include_inverter_error: bool = False,
        include_spam: bool = False,
    ) -> float:
        """Expected survival probability of the averaged length-y experiment."""
        r_out, r_in = self._bracket_vectors(initial_state, include_inverter_error, include_spam)
        return float(r_out @ self.iterate(length) @ r_in)

    def survival_curve(self, lengths, **kwargs) -> np.ndarray:
        """Survivals at several lengths, sharing one incremental iteration."""
        lengths = sorted(int(y) for y in lengths)
        r_out, r_in = self._bracket_vectors(
            kwargs.get("initial_state"),
            kwargs.get("include_inverter_error", False),
            kwargs.get("include_spam", False),
        )
        out = []
        s = np.eye(self._d2)
        done = 0
        for y in lengths:
            for _ in range(y - done):
                s = self.apply(s)
            done = y
            out.append(float(r_out @ s @ r_in))
        return np.array(out)

    def decay_modes(
        self,
        initial_state: np.ndarray | None = None,
        include_inverter_error: bool = False,
        amplitude_floor: float = 1e-12,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Exact (amplitude, rate) pairs of the survival curve, one qubit only.

        Decomposes survival(y) = Σᵢ aᵢ·λᵢ^y over eigenvalues of the dense
        transfer matrix. Complex modes appear in conjugate pairs.
        """
        theta = self.transfer_matrix
        vals, vecs = eig(theta)
        cond = np.linalg.cond(vecs)
        if cond > 1e12:
            raise NumericalError(
                f"transfer matrix eigenbasis is ill-conditioned (cond {cond:.2e}), "
                f"hash {matrix_hash(theta)}"
            )
        r_out, r_in = self._bracket_vectors(initial_state, include_inverter_error, False)
        v0 = np.eye(self._d2).ravel()
        w = np.kron(r_out, r_in)
        amps = (w @ vecs) * np.linalg.solve(vecs, v0)
        keep = np.abs(amps) > amplitude_floor
        return amps[keep], vals[keep]


def build_sequence_map(
    model: ErrorModel,
    ext_set: ExtendedCliffordSet,
    interleaved_gate: QutritUnitary | None = None,
    interleaved_channel: Channel | None = None,
) -> SequenceAverageMap:
    """Averaged sequence-extension map; pass an interleaved gate for its variant."""
    if interleaved_gate is not None and interleaved_channel is None:
        interleaved_channel = model.interleaved
        if interleaved_channel is None:
            raise ConfigError("no channel supplied for the interleaved gate")
    return SequenceAverageMap(ext_set, model, interleaved_gate, interleaved_channel)
