"""Extended Clifford sets on leaky qubits.

The qubit Clifford groups (N = 1, 2) are enumerated by closing the standard
generators under multiplication, deduplicating up to global phase. Each
element is then realized as a unitary on the full qutrit register: the
recorded generator word is replayed with every generator embedded according
to a leakage policy, so the action on the non-computational subspace is
whatever the compiled gates produce. Phase masks (a ±1 sign on each qubit's
leakage level) extend the group by a factor 2^N.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .exceptions import IntegrityError
from .linalg import (
    ATOL_ALGEBRA,
    ATOL_UNITARY,
    LEVELS,
    comp_indices,
    dagger,
    is_unitary,
    leak_indices,
    leak_patterns,
)

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
PHASE_S = np.array([[1, 0], [0, 1j]], dtype=complex)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)

CLIFFORD_ORDER = {1: 24, 2: 11520}

_FP_SCALE = 10**6  # fingerprint quantization; entry gaps are ~0.07 or larger


def _canonical(m: np.ndarray) -> tuple[np.ndarray, bytes]:
    """Phase-normalize a unitary and fingerprint it.

    The first entry above threshold in row-major order is rotated to the
    positive real axis; the fingerprint quantizes all entries. Distinct
    group elements differ structurally by far more than the quantum.
    """
    flat = m.ravel()
    for entry in flat:
        if abs(entry) > 1e-6:
            canon = m * (entry.conjugate() / abs(entry))
            break
    else:
        raise ValueError("zero matrix cannot be canonicalized")
    ints = np.round(
        np.stack([canon.real, canon.imag], axis=-1) * _FP_SCALE
    ).astype(np.int64)
    return canon, ints.tobytes()


def _fingerprint_sort_key(fp: bytes) -> tuple[int, ...]:
    ints = np.frombuffer(fp, dtype=np.int64)
    return tuple(-ints)  # descending lexicographic puts the identity first


def _generators(n_qubits: int) -> tuple[tuple[str, ...], list[np.ndarray]]:
    if n_qubits == 1:
        return ("h0", "s0"), [HADAMARD, PHASE_S]
    if n_qubits == 2:
        i2 = np.eye(2)
        return (
            ("h0", "h1", "s0", "s1", "cx01"),
            [
                np.kron(HADAMARD, i2),
                np.kron(i2, HADAMARD),
                np.kron(PHASE_S, i2),
                np.kron(i2, PHASE_S),
                CNOT,
            ],
        )
    raise ValueError(f"group enumeration supports 1 or 2 qubits, got {n_qubits}")


@dataclass(frozen=True, eq=False)
class CliffordGroup:
    """Enumerated N-qubit Clifford group with generator decompositions.

    matrices holds phase-canonical representatives in fingerprint order
    (identity first); words[i] lists generator indices whose left-to-right
    product realizes matrices[i] up to global phase.
    """

    n_qubits: int
    generator_names: tuple[str, ...]
    matrices: np.ndarray
    words: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return self.matrices.shape[0]

    def __getitem__(self, i: int) -> np.ndarray:
        return self.matrices[i]

    def __iter__(self):
        return iter(self.matrices)

    @property
    def fingerprint_index(self) -> dict[bytes, int]:
        return _group_fingerprint_index(self)

    def index_of(self, unitary: np.ndarray) -> int:
        """Index of the group member equal to the given unitary up to phase."""
        _, fp = _canonical(np.asarray(unitary, dtype=complex))
        try:
            return self.fingerprint_index[fp]
        except KeyError:
            raise KeyError("unitary is not a member of the group") from None

    def save(self, path: str | Path) -> None:
        doc = {
            "n_qubits": self.n_qubits,
            "generators": list(self.generator_names),
            "elements": [
                [[float(v.real), float(v.imag)] for v in m.ravel()]
                for m in self.matrices
            ],
            "words": [list(w) for w in self.words],
        }
        Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CliffordGroup":
        doc = json.loads(Path(path).read_text())
        n = int(doc["n_qubits"])
        dim = 2**n
        flat = np.array(doc["elements"], dtype=float)  # (order, dim², 2)
        mats = (flat[..., 0] + 1j * flat[..., 1]).reshape(-1, dim, dim)
        group = cls(
            n_qubits=n,
            generator_names=tuple(doc["generators"]),
            matrices=mats,
            words=tuple(tuple(w) for w in doc["words"]),
        )
        _check_group_integrity(group)
        return group

    @classmethod
    def generate(cls, n_qubits: int) -> "CliffordGroup":
        return _generate_group(n_qubits)


@lru_cache(maxsize=None)
def _group_fingerprint_index(group: CliffordGroup) -> dict[bytes, int]:
    return {_canonical(m)[1]: i for i, m in enumerate(group.matrices)}


def _check_group_integrity(group: CliffordGroup) -> None:
    expected = CLIFFORD_ORDER.get(group.n_qubits)
    if expected is None or len(group) != expected:
        raise IntegrityError(
            f"group cardinality {len(group)} does not match the "
            f"{group.n_qubits}-qubit Clifford order {expected}"
        )
    prods = np.einsum("nij,nkj->nik", group.matrices, group.matrices.conj())
    eye = np.eye(group.matrices.shape[1])
    if not np.allclose(prods, eye[None], atol=ATOL_UNITARY):
        raise IntegrityError("group cache contains a non-unitary element")
    if len({_canonical(m)[1] for m in group.matrices}) != expected:
        raise IntegrityError("group cache contains duplicate elements")
    if not np.allclose(group.matrices[0], eye, atol=1e-9):
        raise IntegrityError("group cache does not start with the identity")


@lru_cache(maxsize=None)
def _generate_group(n_qubits: int) -> CliffordGroup:
    names, gens = _generators(n_qubits)
    order = CLIFFORD_ORDER[n_qubits]
    dim = gens[0].shape[0]

    ident = np.eye(dim, dtype=complex)
    canon, fp = _canonical(ident)
    seen: dict[bytes, tuple[np.ndarray, tuple[int, ...]]] = {fp: (canon, ())}
    frontier = [(canon, ())]
    while frontier:
        nxt = []
        for mat, word in frontier:
            for gi, g in enumerate(gens):
                canon, fp = _canonical(mat @ g)
                if fp not in seen:
                    entry = (canon, word + (gi,))
                    seen[fp] = entry
                    nxt.append(entry)
                    if len(seen) > order:
                        raise IntegrityError(
                            f"closure exceeded the expected order {order}; "
                            "fingerprint collision or bad generators"
                        )
        frontier = nxt
    if len(seen) != order:
        raise IntegrityError(f"closure produced {len(seen)} elements, expected {order}")

    fps = sorted(seen, key=_fingerprint_sort_key)
    return CliffordGroup(
        n_qubits=n_qubits,
        generator_names=names,
        matrices=np.stack([seen[fp][0] for fp in fps]),
        words=tuple(seen[fp][1] for fp in fps),
    )


def generate_clifford_group(n_qubits: int) -> list[np.ndarray]:
    """Phase-canonical representatives of the N-qubit Clifford group."""
    return list(CliffordGroup.generate(n_qubits).matrices)


# ---------------------------------------------------------------------------
# qutrit embedding

@dataclass(frozen=True, eq=False)
class QutritUnitary:
    """Unitary on the qutrit register that preserves the computational subspace."""

    full: np.ndarray
    comp_block: np.ndarray
    n_qubits: int
    leakage_diagonal: bool

    @classmethod
    def from_full(cls, full: np.ndarray, n_qubits: int) -> "QutritUnitary":
        full = np.asarray(full, dtype=complex)
        dim = LEVELS**n_qubits
        if full.shape != (dim, dim):
            raise ValueError(f"expected shape {(dim, dim)}, got {full.shape}")
        if not is_unitary(full, atol=ATOL_UNITARY):
            raise ValueError("matrix is not unitary within tolerance")
        comp = comp_indices(n_qubits)
        leak = leak_indices(n_qubits)
        mixing = max(
            np.abs(full[np.ix_(comp, leak)]).max(initial=0.0),
            np.abs(full[np.ix_(leak, comp)]).max(initial=0.0),
        )
        if mixing >= ATOL_ALGEBRA:
            raise ValueError(
                f"matrix mixes computational and leakage subspaces (|off-block| = {mixing:.2e})"
            )
        leak_block = full[np.ix_(leak, leak)]
        off = leak_block - np.diag(np.diagonal(leak_block))
        return cls(
            full=full,
            comp_block=full[np.ix_(comp, comp)],
            n_qubits=n_qubits,
            leakage_diagonal=bool(np.abs(off).max(initial=0.0) < ATOL_ALGEBRA),
        )


def embed_qutrit(u: np.ndarray, leakage="identity") -> QutritUnitary:
    """Embed a qubit-register unitary into the qutrit register.

    Parameters
    ----------
    u : ndarray
        Unitary on the 2^N-dimensional computational subspace.
    leakage : "identity" | sequence of N floats | ndarray
        Action on the non-computational subspace: identity, per-qubit phases
        exp(i*phi_k) on each leaked qubit, or a full 3^N unitary supplying
        the leakage action explicitly. A custom matrix must not mix the two
        subspaces and must act as u on the computational one.
    """
    u = np.asarray(u, dtype=complex)
    n_qubits = int(round(np.log2(u.shape[0])))
    if u.shape != (2**n_qubits, 2**n_qubits):
        raise ValueError(f"computational block has invalid shape {u.shape}")
    if not is_unitary(u, atol=ATOL_UNITARY):
        raise ValueError("computational block is not unitary within tolerance")
    dim = LEVELS**n_qubits
    comp = comp_indices(n_qubits)

    if isinstance(leakage, np.ndarray) and leakage.ndim == 2:
        custom = QutritUnitary.from_full(leakage, n_qubits)
        if not np.allclose(custom.comp_block, u, atol=ATOL_UNITARY):
            raise ValueError("custom leakage action disagrees with u on the computational subspace")
        return custom

    full = np.zeros((dim, dim), dtype=complex)
    full[np.ix_(comp, comp)] = u
    leak = leak_indices(n_qubits)
    if isinstance(leakage, str):
        if leakage != "identity":
            raise ValueError(f"unknown leakage policy {leakage!r}")
        full[leak, leak] = 1.0
    else:
        phases = np.asarray(leakage, dtype=float)
        if phases.shape != (n_qubits,):
            raise ValueError(f"expected {n_qubits} leakage phases, got shape {phases.shape}")
        patterns = leak_patterns(n_qubits)
        for i in leak:
            total = sum(phases[k] for k in range(n_qubits) if patterns[i] >> k & 1)
            full[i, i] = np.exp(1j * total)
    return QutritUnitary.from_full(full, n_qubits)


def leak_mixing_cnot() -> QutritUnitary:
    """Two-qubit entangler that also flips the target when the control leaked.

    CNOT on the computational subspace; on the complement it permutes
    |2,0> <-> |2,1| and leaves everything else alone, so its leakage block is
    not diagonal and sets built from it are not twirl designs.
    """
    perm = {i: i for i in range(9)}
    perm[3 * 1 + 0] = 3 * 1 + 1  # comp CNOT: |10> <-> |11>
    perm[3 * 1 + 1] = 3 * 1 + 0
    perm[3 * 2 + 0] = 3 * 2 + 1  # leaked control: NOT on target
    perm[3 * 2 + 1] = 3 * 2 + 0
    full = np.zeros((9, 9), dtype=complex)
    for src, dst in perm.items():
        full[dst, src] = 1.0
    return embed_qutrit(CNOT, full)


# ---------------------------------------------------------------------------
# phase masks and the extended set

@dataclass(frozen=True)
class PhaseMask:
    """Sign flip on each qubit's leakage level, identity on the computational subspace."""

    signs: tuple[int, ...]

    def __post_init__(self):
        if not all(s in (-1, 1) for s in self.signs):
            raise ValueError("mask signs must be +1 or -1")

    def diagonal(self) -> np.ndarray:
        n = len(self.signs)
        patterns = leak_patterns(n)
        neg = sum(1 << k for k, s in enumerate(self.signs) if s == -1)
        odd = np.array([bin(p & neg).count("1") & 1 for p in patterns])
        return np.where(odd, -1.0, 1.0).astype(complex)

    def operator(self) -> np.ndarray:
        return np.diag(self.diagonal())


@dataclass(frozen=True, eq=False)
class CliffordElement:
    index: int
    gate: QutritUnitary
    word: tuple[int, ...] = ()


@dataclass(frozen=True, eq=False)
class ExtendedCliffordSet:
    """Clifford group realized on qutrits, extended by all phase masks."""

    n_qubits: int
    elements: tuple[CliffordElement, ...]
    masks: tuple[PhaseMask, ...]
    twirl_design: bool
    leakage_policy: str
    entangler: str

    @property
    def dim(self) -> int:
        return LEVELS**self.n_qubits

    @property
    def cardinality(self) -> int:
        return len(self.elements) * len(self.masks)

    @property
    def full_stack(self) -> np.ndarray:
        return _set_full_stack(self)

    @property
    def comp_stack(self) -> np.ndarray:
        return _set_comp_stack(self)

    @property
    def mask_diagonals(self) -> np.ndarray:
        return _set_mask_diagonals(self)

    def effective_unitary(self, element_index: int, mask_index: int) -> np.ndarray:
        """Full unitary of one extended-set member (mask applied first)."""
        u = self.elements[element_index].gate.full
        return u * self.mask_diagonals[mask_index][None, :]

    def sample(self, rng: np.random.Generator) -> tuple[CliffordElement, PhaseMask]:
        return (
            self.elements[int(rng.integers(len(self.elements)))],
            self.masks[int(rng.integers(len(self.masks)))],
        )


@lru_cache(maxsize=None)
def _set_full_stack(s: ExtendedCliffordSet) -> np.ndarray:
    return np.stack([el.gate.full for el in s.elements])


@lru_cache(maxsize=None)
def _set_comp_stack(s: ExtendedCliffordSet) -> np.ndarray:
    return np.stack([el.gate.comp_block for el in s.elements])


@lru_cache(maxsize=None)
def _set_mask_diagonals(s: ExtendedCliffordSet) -> np.ndarray:
    return np.stack([m.diagonal() for m in s.masks])


def sample_element(
    s: ExtendedCliffordSet, rng: np.random.Generator
) -> tuple[CliffordElement, PhaseMask]:
    """Uniform draw over cliffords x masks."""
    return s.sample(rng)


def _all_masks(n_qubits: int) -> tuple[PhaseMask, ...]:
    masks = []
    for m in range(2**n_qubits):
        signs = tuple(-1 if m >> k & 1 else 1 for k in range(n_qubits))
        masks.append(PhaseMask(signs))
    return tuple(masks)


def build_extended_set(
    n_qubits: int,
    leakage_policy: str = "identity",
    entangler: str = "diagonal",
    phase_seed: int = 0,
    group: CliffordGroup | None = None,
) -> ExtendedCliffordSet:
    """Realize the extended Clifford set on the qutrit register.

    leakage_policy "identity" embeds every generator with a trivial leakage
    action; "random_phases" gives each generator a fixed random phase on the
    leakage level of each qubit it touches (drawn once from phase_seed).
    entangler selects the CNOT embedding for N=2: "diagonal" keeps it
    diagonal on the complement, "leak_mixing" uses the NOT-on-target variant.
    """
    if group is None:
        group = CliffordGroup.generate(n_qubits)
    elif group.n_qubits != n_qubits:
        raise ValueError("group does not match n_qubits")
    if leakage_policy not in ("identity", "random_phases"):
        raise ValueError(f"unknown leakage policy {leakage_policy!r}")
    if entangler not in ("diagonal", "leak_mixing"):
        raise ValueError(f"unknown entangler variant {entangler!r}")
    if entangler == "leak_mixing" and n_qubits < 2:
        raise ValueError("leak_mixing requires an entangling gate (n_qubits = 2)")

    names, gens = _generators(n_qubits)
    rng = np.random.default_rng(phase_seed)
    gen_embeds = []
    for name, g in zip(names, gens):
        acted = [0, 1] if name.startswith("cx") else [int(name[1:])]
        if name.startswith("cx") and entangler == "leak_mixing":
            gen_embeds.append(leak_mixing_cnot())
            continue
        # det-normalized realization: single-qubit products then reproduce
        # set members up to +-1 global phases, which the masks absorb
        g = g / np.linalg.det(g) ** (1.0 / g.shape[0])
        phases = np.zeros(n_qubits)
        if leakage_policy == "random_phases":
            for k in acted:
                phases[k] = rng.uniform(0.0, 2.0 * np.pi)
        gen_embeds.append(embed_qutrit(g, phases if phases.any() else "identity"))

    # Replay each element's generator word; BFS words are prefix-closed, so
    # every realization is one product away from an already-realized prefix.
    dim = LEVELS**n_qubits
    by_word: dict[tuple[int, ...], np.ndarray] = {(): np.eye(dim, dtype=complex)}
    elements = []
    for idx in np.argsort([len(w) for w in group.words], kind="stable"):
        word = group.words[idx]
        if word:
            by_word[word] = by_word[word[:-1]] @ gen_embeds[word[-1]].full
        elements.append((int(idx), word))
    gates = {
        idx: QutritUnitary.from_full(by_word[word], n_qubits) for idx, word in elements
    }
    ordered = tuple(
        CliffordElement(index=i, gate=gates[i], word=group.words[i])
        for i in range(len(group))
    )
    return ExtendedCliffordSet(
        n_qubits=n_qubits,
        elements=ordered,
        masks=_all_masks(n_qubits),
        twirl_design=all(el.gate.leakage_diagonal for el in ordered),
        leakage_policy=leakage_policy,
        entangler=entangler,
    )


def without_masks(ext_set: ExtendedCliffordSet) -> ExtendedCliffordSet:
    """Copy of the set keeping only the trivial mask.

    Disables phase randomization so its effect can be measured; the result
    is no longer certified as a twirl design.
    """
    return ExtendedCliffordSet(
        n_qubits=ext_set.n_qubits,
        elements=ext_set.elements,
        masks=(PhaseMask((1,) * ext_set.n_qubits),),
        twirl_design=False,
        leakage_policy=ext_set.leakage_policy,
        entangler=ext_set.entangler,
    )


@lru_cache(maxsize=None)
def member_sign_table(ext_set: ExtendedCliffordSet) -> np.ndarray | None:
    """Leakage sign of the member realizing T_a T_b^-1, per ordered pair.

    Members are enumerated element-major, mask-minor. When every member
    carries a +-1 leakage entry, the product T_a T_b^-1 reproduces some
    member up to a global sign; entry (a, b) is that member's own leakage
    entry. Realizations with generic leakage phases return None: their
    products leave the realized set. One qubit only.
    """
    if ext_set.n_qubits != 1:
        raise ValueError("the sign table is only tabulated for one qubit")
    members = [
        (e, m)
        for e in range(len(ext_set.elements))
        for m in range(len(ext_set.masks))
    ]
    fulls = np.stack([ext_set.effective_unitary(e, m) for e, m in members])
    leaks = fulls[:, 2, 2]
    if np.abs(leaks.imag).max() > 1e-9 or np.abs(np.abs(leaks.real) - 1.0).max() > 1e-9:
        return None
    signs = np.sign(leaks.real).astype(np.int8)
    comps = fulls[:, :2, :2]
    by_element = {
        _canonical(el.gate.comp_block)[1]: i for i, el in enumerate(ext_set.elements)
    }
    n = len(members)
    table = np.zeros((n, n), dtype=np.int8)
    for a in range(n):
        for b in range(n):
            w = comps[a] @ dagger(comps[b])
            try:
                c = by_element[_canonical(w)[1]]
            except KeyError:
                raise IntegrityError(
                    "member products do not close onto the realized set"
                ) from None
            ref = ext_set.elements[c].gate.comp_block.ravel()
            k = int(np.abs(ref).argmax())
            sigma = (w.ravel()[k] / ref[k]).real
            if abs(abs(sigma) - 1.0) > 1e-6:
                raise IntegrityError(
                    "member product differs from the set by more than a sign"
                )
            # the realized product is sigma * (element c with some mask);
            # that member's leakage entry is sigma times the product's
            table[a, b] = int(np.sign(sigma)) * signs[a] * signs[b]
    return table


def inverting_gate(sequence) -> QutritUnitary:
    """Fresh embedding of the inverse of a sequence's computational action.

    The sequence lists (CliffordElement, PhaseMask) pairs in application
    order; masks act trivially on the computational subspace and do not
    enter the product. The inverter's leakage action is the identity.
    """
    comp = None
    for item in sequence:
        el = item[0] if isinstance(item, tuple) else item
        comp = el.gate.comp_block if comp is None else el.gate.comp_block @ comp
    if comp is None:
        raise ValueError("empty sequence has no inverting gate")
    return embed_qutrit(dagger(comp), "identity")
