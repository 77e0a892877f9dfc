"""Protocol execution: randomized sequences, exact oracles, variance tools.

A single experiment draws a sequence of extended-set members, applies each
gate followed by its error channel (optionally interleaving a fixed gate of
interest with its own error), closes with a freshly embedded inverter, and
reads out the survival probability of the initial state together with the
population remaining in the computational subspace. Everything runs on full
density matrices so imperfect phase randomization and non-design sets are
simulated faithfully; restrictions to diagonal populations appear only in
oracle predictions.

Per-sequence seeds are derived from (master_seed, length, index) with a
stable 64-bit mixing hash, so any single sequence can be reproduced without
replaying the whole run.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channels import Channel, ErrorModel, apply_channel, twirl
from .cliffords import (
    ExtendedCliffordSet,
    QutritUnitary,
    build_extended_set,
    embed_qutrit,
    member_sign_table,
)
from .exceptions import ConfigError, IntegrityError
from .linalg import comp_indices, conjugation_superoperator, dagger

STREAM_REFERENCE = 0
STREAM_INTERLEAVED = 1

RESULT_COLUMNS = ("y", "seq_index", "survival", "comp_population", "seed")

_U64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_1 = 0xBF58476D1CE4E5B9
_MIX_2 = 0x94D049BB133111EB


def _mix64(z: int) -> int:
    z &= _U64
    z = ((z ^ (z >> 30)) * _MIX_1) & _U64
    z = ((z ^ (z >> 27)) * _MIX_2) & _U64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, y: int, index: int, stream: int = STREAM_REFERENCE) -> int:
    """Stable 64-bit seed for one sequence, independent of platform.

    Absorbs (stream, y, index) into the master seed one word at a time with
    splitmix64-style finalization, so neighbouring indices land far apart.
    """
    z = master_seed & _U64
    for word in (stream, y, index):
        z = (z + _GOLDEN) & _U64
        z = _mix64(z ^ (word & _U64))
    return z


@dataclass(frozen=True)
class SequenceResult:
    """Outcome of one random sequence."""

    y: int
    sequence_index: int
    survival: float
    comp_population: float
    seed_used: int

    def __post_init__(self):
        ok = 0.0 <= self.survival <= self.comp_population <= 1.0 + 1e-9
        if not ok:
            raise IntegrityError(
                f"invalid probabilities: survival {self.survival}, "
                f"computational population {self.comp_population}"
            )


@dataclass(frozen=True, eq=False)
class VarianceCurve:
    """Per-length mean, unbiased sample variance, and sequence count."""

    lengths: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if np.any(self.variances < 0):
            raise IntegrityError("negative variance")

    @property
    def degenerate(self) -> bool:
        """True when any length has a single sequence, so its variance is 0 by fiat."""
        return bool(np.any(self.counts == 1))

    @property
    def stderrs(self) -> np.ndarray:
        return np.sqrt(self.variances / self.counts)


@dataclass(frozen=True, eq=False)
class RbConfig:
    """Parameters of one protocol run.

    lengths must be strictly increasing and at least 1; shots=None means
    exact expectation values. initial_state indexes the computational basis
    (0 is the all-zeros state). The inverter carries the model's inverter
    channel unless include_inverter_error is switched off.
    """

    n_qubits: int
    model: ErrorModel
    lengths: tuple[int, ...]
    sequences_per_length: int
    master_seed: int
    shots: int | None = None
    initial_state: int = 0
    leakage_policy: str = "identity"
    entangler: str = "diagonal"
    phase_seed: int = 0
    include_inverter_error: bool = True
    interleaved_gate: QutritUnitary | None = None

    def __post_init__(self):
        if self.n_qubits not in (1, 2):
            raise ConfigError(f"n_qubits must be 1 or 2, got {self.n_qubits}")
        lengths = tuple(int(y) for y in self.lengths)
        object.__setattr__(self, "lengths", lengths)
        if not lengths or lengths[0] < 1 or any(
            b <= a for a, b in zip(lengths, lengths[1:])
        ):
            raise ConfigError(
                f"lengths must be strictly increasing and >= 1, got {lengths}"
            )
        if self.sequences_per_length < 1:
            raise ConfigError("sequences_per_length must be at least 1")
        if self.shots is not None and self.shots < 1:
            raise ConfigError("shots must be at least 1 when given")
        if not 0 <= self.initial_state < 2**self.n_qubits:
            raise ConfigError(
                f"initial_state {self.initial_state} outside the computational basis"
            )
        if not isinstance(self.model, ErrorModel):
            raise ConfigError("model must be an ErrorModel")

    def build_set(self) -> ExtendedCliffordSet:
        return build_extended_set(
            self.n_qubits,
            leakage_policy=self.leakage_policy,
            entangler=self.entangler,
            phase_seed=self.phase_seed,
        )


def _initial_density(ext_set: ExtendedCliffordSet, initial_state: int) -> tuple[np.ndarray, int]:
    register = comp_indices(ext_set.n_qubits)[initial_state]
    rho = np.zeros((ext_set.dim, ext_set.dim), dtype=complex)
    rho[register, register] = 1.0
    return rho, register


def _clamped_probabilities(rho: np.ndarray, register: int, comp: np.ndarray) -> tuple[float, float]:
    survival = float(rho[register, register].real)
    population = float(rho.diagonal().real[comp].sum())
    # rounding noise only; genuine violations stay visible to SequenceResult
    if -1e-9 <= survival < 0.0:
        survival = 0.0
    if survival - 1e-9 <= population < survival:
        population = survival
    return survival, population


def run_sequence(
    ext_set: ExtendedCliffordSet,
    model: ErrorModel,
    y: int,
    rng: np.random.Generator,
    shots: int | None = None,
    initial_state: int = 0,
    interleaved_gate: QutritUnitary | None = None,
    interleaved_channel: Channel | None = None,
    include_inverter_error: bool = True,
    include_spam: bool = True,
    sequence_index: int = 0,
    seed_used: int = 0,
) -> SequenceResult:
    """Simulate one random sequence of length y and its inverter."""
    if y < 1:
        raise ConfigError("sequence length must be at least 1")
    if (interleaved_gate is None) != (interleaved_channel is None):
        raise ConfigError("interleaved gate and its channel come together")
    rho, register = _initial_density(ext_set, initial_state)
    if include_spam and model.prep is not None:
        rho = model.prep.apply(rho)

    element_ids = rng.integers(len(ext_set.elements), size=y)
    mask_ids = rng.integers(len(ext_set.masks), size=y)
    comp_product = np.eye(2**ext_set.n_qubits, dtype=complex)
    for e, m in zip(element_ids, mask_ids):
        u = ext_set.effective_unitary(int(e), int(m))
        rho = apply_channel(model.channel_for(int(e)), u @ rho @ dagger(u))
        comp_product = ext_set.elements[int(e)].gate.comp_block @ comp_product
        if interleaved_gate is not None:
            rho = interleaved_channel.apply(rho)
            v = interleaved_gate.full
            rho = v @ rho @ dagger(v)
            comp_product = interleaved_gate.comp_block @ comp_product

    inverter = embed_qutrit(dagger(comp_product), "identity").full
    rho = inverter @ rho @ dagger(inverter)
    if include_inverter_error:
        rho = model.inverter_channel.apply(rho)
    if include_spam and model.meas is not None:
        rho = model.meas.apply(rho)

    comp = np.array(comp_indices(ext_set.n_qubits))
    survival, population = _clamped_probabilities(rho, register, comp)
    if shots is not None:
        # one three-outcome draw keeps survival <= population exactly
        pvals = np.clip([survival, population - survival, 1.0 - population], 0.0, None)
        counts = rng.multinomial(shots, pvals / pvals.sum())
        survival = int(counts[0]) / shots
        population = int(counts[0] + counts[1]) / shots
    return SequenceResult(
        y=int(y),
        sequence_index=int(sequence_index),
        survival=survival,
        comp_population=population,
        seed_used=int(seed_used),
    )


def run_protocol(
    cfg: RbConfig,
    threads: int = 1,
    stream: int = STREAM_REFERENCE,
    interleave: bool = False,
) -> list[SequenceResult]:
    """All sequences of a run, ordered by (y, index) regardless of scheduling."""
    ext_set = cfg.build_set()
    cfg.model.validate_for(ext_set, needs_interleaved=interleave)
    if interleave:
        if cfg.interleaved_gate is None:
            raise ConfigError("config names no interleaved gate")
        if cfg.interleaved_gate.full.shape[0] != ext_set.dim:
            raise ConfigError("interleaved gate dim does not match the register")

    def work(item: tuple[int, int]) -> SequenceResult:
        y, k = item
        seed = derive_seed(cfg.master_seed, y, k, stream=stream)
        return run_sequence(
            ext_set,
            cfg.model,
            y,
            np.random.default_rng(seed),
            shots=cfg.shots,
            initial_state=cfg.initial_state,
            interleaved_gate=cfg.interleaved_gate if interleave else None,
            interleaved_channel=cfg.model.interleaved if interleave else None,
            include_inverter_error=cfg.include_inverter_error,
            sequence_index=k,
            seed_used=seed,
        )

    items = [(y, k) for y in cfg.lengths for k in range(cfg.sequences_per_length)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, items))
    return [work(item) for item in items]


def run_irb(cfg: RbConfig, threads: int = 1) -> tuple[list[SequenceResult], list[SequenceResult]]:
    """Reference and interleaved runs for the gate named in the config.

    The interleaved arm inserts the gate of interest, preceded by its own
    error channel, after every random element; its inverter undoes the full
    computational product including those insertions. The two arms use
    disjoint seed streams.
    """
    if cfg.interleaved_gate is None:
        raise ConfigError("interleaved runs need cfg.interleaved_gate")
    if cfg.model.interleaved is None:
        raise ConfigError("interleaved runs need model.interleaved")
    reference = run_protocol(cfg, threads=threads, stream=STREAM_REFERENCE)
    interleaved = run_protocol(
        cfg, threads=threads, stream=STREAM_INTERLEAVED, interleave=True
    )
    return reference, interleaved


def summarize(results: list[SequenceResult]) -> VarianceCurve:
    """Group results by length; unbiased variance, zero for singleton groups."""
    by_y: dict[int, list[float]] = {}
    for r in results:
        by_y.setdefault(r.y, []).append(r.survival)
    lengths = np.array(sorted(by_y), dtype=int)
    means, variances, counts = [], [], []
    for y in lengths:
        vals = np.array(by_y[int(y)])
        means.append(vals.mean())
        variances.append(vals.var(ddof=1) if len(vals) > 1 else 0.0)
        counts.append(len(vals))
    return VarianceCurve(
        lengths=lengths,
        means=np.array(means),
        variances=np.array(variances),
        counts=np.array(counts, dtype=int),
    )


def _pullback_measurement(ch: Channel, e: np.ndarray) -> np.ndarray:
    """Heisenberg-picture update Σ K† E K of a measurement operator."""
    return np.einsum("kji,jl,klm->im", ch.kraus.conj(), e, ch.kraus, optimize=True)


EXHAUSTIVE_CAP = 200_000


def exhaustive_average(
    ext_set: ExtendedCliffordSet,
    model: ErrorModel,
    y: int,
    initial_state: int = 0,
    include_inverter_error: bool = True,
) -> float:
    """Exact uniform average of survival over every sequence of length y.

    Single qubit only; the sequence count is cardinality**y, so y <= 3.
    States for all prefixes are carried as one stack and extended one
    member at a time, which keeps the arithmetic vectorized.
    """
    if ext_set.n_qubits != 1:
        raise ConfigError("exhaustive averaging is limited to one qubit")
    if ext_set.cardinality**y > EXHAUSTIVE_CAP:
        raise ConfigError(
            f"combinatorial size exceeded: {ext_set.cardinality}**{y} sequences"
        )
    model.validate_for(ext_set)
    rho0, register = _initial_density(ext_set, initial_state)
    if model.prep is not None:
        rho0 = model.prep.apply(rho0)

    members = [
        (e, m)
        for e in range(len(ext_set.elements))
        for m in range(len(ext_set.masks))
    ]
    states = rho0[None, :, :]
    comp_products = np.eye(2, dtype=complex)[None, :, :]
    for _ in range(y):
        next_states, next_products = [], []
        for e, m in members:
            u = ext_set.effective_unitary(e, m)
            moved = np.einsum("ij,njk,lk->nil", u, states, u.conj(), optimize=True)
            next_states.append(apply_channel(model.channel_for(e), moved))
            block = ext_set.elements[e].gate.comp_block
            next_products.append(np.einsum("ij,njk->nik", block, comp_products))
        states = np.concatenate(next_states)
        comp_products = np.concatenate(next_products)

    # measurement operator pulled back through readout and inverter error
    effect = np.zeros((ext_set.dim, ext_set.dim), dtype=complex)
    effect[register, register] = 1.0
    if model.meas is not None:
        effect = _pullback_measurement(model.meas, effect)
    if include_inverter_error:
        effect = _pullback_measurement(model.inverter_channel, effect)

    inverters = np.tile(np.eye(ext_set.dim, dtype=complex), (len(states), 1, 1))
    inverters[:, :2, :2] = comp_products.conj().transpose(0, 2, 1)
    survivals = np.einsum(
        "nca,cd,ndb,nba->n", inverters.conj(), effect, inverters, states, optimize=True
    ).real
    return float(survivals.mean())


def analytic_variance(
    ch: Channel,
    ext_set: ExtendedCliffordSet,
    y: int,
    initial_state: int = 0,
    include_inverter_error: bool = True,
) -> float:
    """Sequence-to-sequence variance of the survival probability.

    Writing each survival in its accumulated-product frame makes the y
    accumulated products independent uniform set members; all the final
    inverter leaves behind is one leakage sign. First and second moments
    are then evolved with the member-conjugated channel (tensor-squared
    for the second moment, copies sharing the random member), conditioned
    on the current member and the accumulated sign so the sign's
    correlation with the last step survives. Exact for realizations whose
    members carry +-1 leakage entries; generic leakage phases fall back
    to unconditioned moments, which costs a few percent of the variance
    at figure-scale infidelities (the first moment is unaffected).
    Single qubit, gate-independent models.
    """
    if ext_set.n_qubits != 1:
        raise ConfigError("analytic variance is limited to one qubit")
    if y < 1:
        raise ConfigError("sequence length must be at least 1")
    dim = ext_set.dim
    lam_hat = ch.superoperator()
    steps = np.stack(
        [
            d.T @ lam_hat @ d
            for e in range(len(ext_set.elements))
            for m in range(len(ext_set.masks))
            for d in (conjugation_superoperator(ext_set.effective_unitary(e, m)),)
        ]
    )
    d2 = dim * dim
    register = comp_indices(1)[initial_state]
    r_in = np.zeros(d2)
    r_in[register] = 1.0  # coordinates of the projector, populations lead
    r_out = r_in
    if include_inverter_error:
        # gate-independent runs reuse the gate channel on the inverter
        r_out = lam_hat.T @ r_out

    table = member_sign_table(ext_set)
    if table is None:
        single = steps.mean(axis=0)
        doubled = np.einsum(
            "nab,ncd->acbd", steps, steps, optimize=True
        ).reshape(d2 * d2, d2 * d2) / len(steps)
        first = r_out @ np.linalg.matrix_power(single, y) @ r_in
        second = (
            np.kron(r_out, r_out)
            @ np.linalg.matrix_power(doubled, y)
            @ np.kron(r_in, r_in)
        )
        return max(float(second - first**2), 0.0)

    n = len(steps)
    plus = (table > 0).astype(float)
    minus = 1.0 - plus
    # moment accumulators indexed by (current member, accumulated sign);
    # the walk starts at the identity member with sign +1
    v = np.zeros((n, 2, d2))
    t = np.zeros((n, 2, d2, d2))
    v[0, 0] = r_in
    t[0, 0] = np.outer(r_in, r_in)
    for _ in range(y):
        agg_v = np.stack(
            [plus @ v[:, 0] + minus @ v[:, 1], minus @ v[:, 0] + plus @ v[:, 1]],
            axis=1,
        )
        flat = t.reshape(n, 2, d2 * d2)
        agg_t = np.stack(
            [plus @ flat[:, 0] + minus @ flat[:, 1], minus @ flat[:, 0] + plus @ flat[:, 1]],
            axis=1,
        ).reshape(n, 2, d2, d2)
        v = np.einsum("nab,nsb->nsa", steps, agg_v, optimize=True) / n
        t = np.einsum("nab,nsbc,ndc->nsad", steps, agg_t, steps, optimize=True) / n
    flip = conjugation_superoperator(np.diag([1.0, 1.0, -1.0]))
    e_plus, e_minus = r_out, flip @ r_out
    first = e_plus @ v[:, 0].sum(axis=0) + e_minus @ v[:, 1].sum(axis=0)
    second = (
        e_plus @ t[:, 0].sum(axis=0) @ e_plus
        + e_minus @ t[:, 1].sum(axis=0) @ e_minus
    )
    return max(float(second - first**2), 0.0)


def write_results(path, results: list[SequenceResult], config_hash: str | None = None) -> None:
    """Result table as comma-separated text, one row per sequence."""
    with open(path, "w", newline="") as fh:
        if config_hash is not None:
            fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for r in results:
            writer.writerow(
                [r.y, r.sequence_index, repr(r.survival), repr(r.comp_population), r.seed_used]
            )


def read_results(path) -> tuple[list[SequenceResult], str | None]:
    """Parse a result table; malformed content is reported with its line number."""
    config_hash = None
    results: list[SequenceResult] = []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body_start = 0
    for i, line in enumerate(lines):
        if line.startswith("#"):
            if line.lstrip("# ").startswith("config_hash="):
                config_hash = line.split("=", 1)[1].strip()
            body_start = i + 1
        else:
            break
    if body_start >= len(lines):
        raise IntegrityError(f"line {body_start + 1}: missing header row")
    header = tuple(lines[body_start].split(","))
    if header != RESULT_COLUMNS:
        raise IntegrityError(
            f"line {body_start + 1}: header {','.join(header)!r} does not match "
            f"{','.join(RESULT_COLUMNS)!r}"
        )
    for offset, line in enumerate(lines[body_start + 1 :]):
        lineno = body_start + 2 + offset
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(RESULT_COLUMNS):
            raise IntegrityError(f"line {lineno}: expected {len(RESULT_COLUMNS)} fields")
        try:
            results.append(
                SequenceResult(
                    y=int(parts[0]),
                    sequence_index=int(parts[1]),
                    survival=float(parts[2]),
                    comp_population=float(parts[3]),
                    seed_used=int(parts[4]),
                )
            )
        except (ValueError, IntegrityError) as exc:
            raise IntegrityError(f"line {lineno}: {exc}") from exc
    return results, config_hash
