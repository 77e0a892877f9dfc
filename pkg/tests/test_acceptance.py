"""Acceptance gate: one test per headline result, at full stated tolerance.

Every test prints a single evidence line; run with ``pytest -v -s`` to see
them alongside the pass/fail verdicts. Budgets are wall-clock on a desk
machine, generous enough to absorb CI jitter.
"""

import time
from collections import defaultdict

import numpy as np
import pytest

from leakrb.channels import (
    Channel,
    ErrorModel,
    depolarizing_comp,
    dilated_error,
    exact_average_fidelity_comp,
    twirl,
    unitary_error,
)
from leakrb.cliffords import CliffordGroup, _generate_group, build_extended_set, embed_qutrit
from leakrb.engine import (
    RbConfig,
    analytic_variance,
    exhaustive_average,
    run_irb,
    run_protocol,
    summarize,
)
from leakrb.fitting import (
    DecaySample,
    error_per_gate,
    fit_decay,
    fit_variance_shape,
    samples_from_results,
    irb_estimate,
)
from leakrb.linalg import comp_indices, haar_unitary


def _tuned_unitary(dim, n_qubits, target, seed, probe=0.02):
    """Coherent error whose computational-subspace infidelity hits target.

    The generator is drawn once from the seed, so infidelity scales as the
    square of the angle and one probe evaluation calibrates the knob.
    """
    probe_ch = unitary_error(dim, probe, np.random.default_rng(seed))
    scale = (1.0 - exact_average_fidelity_comp(probe_ch, n_qubits)) / probe**2
    delta = float(np.sqrt(target / scale))
    ch = unitary_error(dim, delta, np.random.default_rng(seed))
    truth = 1.0 - exact_average_fidelity_comp(ch, n_qubits)
    assert abs(truth / target - 1.0) < 0.05, "calibration drifted off target"
    return ch, truth


def _tuned_dilated(dim, n_qubits, target, seed, probe=0.05):
    probe_ch = dilated_error(dim, dim, probe, np.random.default_rng(seed))
    scale = (1.0 - exact_average_fidelity_comp(probe_ch, n_qubits)) / probe**2
    delta = float(np.sqrt(target / scale))
    ch = dilated_error(dim, dim, delta, np.random.default_rng(seed))
    return ch, 1.0 - exact_average_fidelity_comp(ch, n_qubits)


def _fit(results):
    return fit_decay(samples_from_results(results), max_order=3)


def _nonunit_rates(fit):
    return sorted(abs(lam) for _, lam in fit.modes if abs(lam - 1.0) > 1e-6)


def test_group_enumeration_counts_and_runtime():
    _generate_group.cache_clear()
    start = time.perf_counter()
    n1 = len(CliffordGroup.generate(1))
    n2 = len(CliffordGroup.generate(2))
    elapsed = time.perf_counter() - start
    assert (n1, n2) == (24, 11520)
    assert elapsed < 60.0
    print(f"\nPASS group enumeration: 24 and 11520 elements in {elapsed:.1f} s")


def test_exhaustive_average_equals_twirl_bracket():
    ext = build_extended_set(1)
    ch, _ = _tuned_unitary(3, 1, 2e-3, seed=5)
    model = ErrorModel(gate=ch)
    tm = twirl(ch, ext)
    init = np.zeros(3)
    init[comp_indices(1)[0]] = 1.0
    start = time.perf_counter()
    worst = 0.0
    for y in (1, 2, 3):
        brute = exhaustive_average(ext, model, y, include_inverter_error=False)
        worst = max(worst, abs(brute - tm.bracket(y, init, init)))
    elapsed = time.perf_counter() - start
    assert worst < 1e-10
    assert elapsed < 300.0
    print(
        f"\nPASS exhaustive average meets twirl bracket: worst gap {worst:.2e} "
        f"over 48+48^2+48^3 sequences in {elapsed:.1f} s"
    )


@pytest.fixture(scope="module")
def two_qubit_error():
    return _tuned_unitary(9, 2, 1.35e-3, seed=21)


@pytest.mark.parametrize("entangler", ["diagonal", "leak_mixing"])
def test_two_qubit_fit_recovers_channel_infidelity(two_qubit_error, entangler):
    ch, truth = two_qubit_error
    cfg = RbConfig(
        n_qubits=2,
        model=ErrorModel(gate=ch),
        lengths=tuple(range(25, 201, 25)),
        sequences_per_length=40,
        master_seed=1357,
        entangler=entangler,
    )
    start = time.perf_counter()
    fit = _fit(run_protocol(cfg))
    elapsed = time.perf_counter() - start
    epg = error_per_gate(fit)
    deviation = epg / truth - 1.0
    assert abs(deviation) <= 0.10
    assert elapsed < 1800.0
    print(
        f"\nPASS two-qubit {entangler} set: fitted {epg:.3e} vs true {truth:.3e} "
        f"({deviation:+.1%}) in {elapsed:.0f} s"
    )


def test_depolarizing_rate_and_error_match_closed_form():
    p = 0.01
    ch = depolarizing_comp(1, p)
    cfg = RbConfig(
        n_qubits=1,
        model=ErrorModel(gate=ch),
        lengths=tuple(range(10, 81, 10)),
        sequences_per_length=10,
        master_seed=99,
    )
    fit = _fit(run_protocol(cfg))
    rates = _nonunit_rates(fit)
    assert len(rates) == 1
    assert rates[0] == pytest.approx(0.99, abs=1e-3)
    truth = 1.0 - exact_average_fidelity_comp(ch, 1)
    epg = error_per_gate(fit)
    assert epg == pytest.approx(truth, rel=0.05)
    print(
        f"\nPASS depolarizing oracle: rate {rates[0]:.6f} (target 0.99 +- 0.001), "
        f"error {epg:.6f} vs analytic {truth:.6f}"
    )


def test_variance_curve_shape_and_analytic_prediction():
    ch, truth = _tuned_unitary(3, 1, 7e-4, seed=11)
    cfg = RbConfig(
        n_qubits=1,
        model=ErrorModel(gate=ch),
        lengths=tuple(range(30, 301, 30)),
        sequences_per_length=30,
        master_seed=246,
    )
    curve = summarize(run_protocol(cfg))
    shape = fit_variance_shape(curve)
    assert shape.r_squared >= 0.8
    ext = build_extended_set(1)
    ratios = [
        float(var) / analytic_variance(ch, ext, int(y))
        for y, var in zip(curve.lengths, curve.variances)
    ]
    assert 0.5 < min(ratios) and max(ratios) < 2.0
    print(
        f"\nPASS variance shape: R^2 {shape.r_squared:.3f} (>=0.8), Monte Carlo "
        f"to analytic ratio in [{min(ratios):.2f}, {max(ratios):.2f}] at error "
        f"{truth:.1e}"
    )


def test_interleaved_estimate_and_bounds_over_seeded_repetitions():
    ch_ref, eps_ref_true = _tuned_unitary(9, 2, 7.6e-4, seed=37)
    ch_gate, eps_true = _tuned_unitary(9, 2, 5.4e-4, seed=138)
    # the point estimate subtracts infidelities, so it can only see the
    # gate's own error when the two coherent errors compose additively;
    # this instance is chosen that way, and the premise is checked here
    composed = Channel(
        kraus=np.einsum(
            "aij,bjk->abik", ch_gate.kraus, ch_ref.kraus
        ).reshape(-1, 9, 9)
    )
    eps_composite = 1.0 - exact_average_fidelity_comp(composed, 2)
    assert abs(eps_composite - eps_ref_true - eps_true) <= 0.05 * eps_true
    gate = embed_qutrit(haar_unitary(4, np.random.default_rng(33)))
    start = time.perf_counter()
    point_hits = bound_hits = 0
    deviations = []
    for rep in range(20):
        cfg = RbConfig(
            n_qubits=2,
            model=ErrorModel(gate=ch_ref, interleaved=ch_gate),
            lengths=tuple(range(2, 403, 50)),
            sequences_per_length=20,
            master_seed=5000 + rep,
            interleaved_gate=gate,
        )
        reference, interleaved = run_irb(cfg)
        est = irb_estimate(_fit(reference), _fit(interleaved))
        deviations.append(est.eps_v_point / eps_true - 1.0)
        point_hits += abs(deviations[-1]) <= 0.15
        bound_hits += est.eps_v_lower <= eps_true <= est.eps_v_upper
    elapsed = time.perf_counter() - start
    assert point_hits >= 19
    assert bound_hits >= 19
    print(
        f"\nPASS interleaved benchmarking: point within 15% in {point_hits}/20 "
        f"reps (max |dev| {max(abs(d) for d in deviations):.1%}), truth inside "
        f"bounds in {bound_hits}/20, {elapsed:.0f} s"
    )


def _bootstrap_rate_halfwidths(results, point_rates, replicates=200, seed=0):
    """95% half-widths of the non-unit rate moduli under sequence resampling."""
    rng = np.random.default_rng(seed)
    by_y = defaultdict(list)
    for r in results:
        by_y[r.y].append(r.survival)
    grouped = {y: np.asarray(vals) for y, vals in sorted(by_y.items())}
    draws = [[] for _ in point_rates]
    for _ in range(replicates):
        samples = []
        for y, vals in grouped.items():
            pick = vals[rng.integers(vals.size, size=vals.size)]
            samples.append(
                DecaySample(
                    y=int(y),
                    phi_mean=float(pick.mean()),
                    phi_stderr=float(pick.std(ddof=1) / np.sqrt(pick.size)),
                    n_sequences=pick.size,
                )
            )
        rates = _nonunit_rates(fit_decay(samples, max_order=3))
        for i, target in enumerate(point_rates):
            if rates:
                draws[i].append(min(rates, key=lambda r: abs(r - target)))
    halfwidths = []
    for values in draws:
        lo, hi = np.percentile(values, [2.5, 97.5])
        halfwidths.append((hi - lo) / 2.0)
    return halfwidths


def test_spam_shifts_stay_inside_rate_confidence_intervals():
    ch, truth = _tuned_unitary(3, 1, 1e-3, seed=41)
    prep, prep_err = _tuned_dilated(3, 1, 10.0 * truth, seed=42)
    meas, meas_err = _tuned_dilated(3, 1, 10.0 * truth, seed=43)
    assert prep_err == pytest.approx(10.0 * truth, rel=0.2)
    assert meas_err == pytest.approx(10.0 * truth, rel=0.2)
    common = dict(
        n_qubits=1,
        lengths=tuple(range(20, 161, 20)),
        sequences_per_length=30,
        master_seed=77,
    )
    clean = run_protocol(RbConfig(model=ErrorModel(gate=ch), **common))
    spammed = run_protocol(
        RbConfig(model=ErrorModel(gate=ch, prep=prep, meas=meas), **common)
    )
    fit_clean, fit_spam = _fit(clean), _fit(spammed)
    rates_clean = _nonunit_rates(fit_clean)
    rates_spam = _nonunit_rates(fit_spam)
    assert len(rates_clean) == len(rates_spam)
    halfwidths = _bootstrap_rate_halfwidths(clean, rates_clean, seed=7)
    shifts = [abs(a - b) for a, b in zip(rates_clean, rates_spam)]
    assert all(s < h for s, h in zip(shifts, halfwidths))
    epg_shift = error_per_gate(fit_spam) / error_per_gate(fit_clean) - 1.0
    assert abs(epg_shift) < 0.05
    print(
        f"\nPASS SPAM robustness: rate shifts {['%.1e' % s for s in shifts]} vs "
        f"CI half-widths {['%.1e' % h for h in halfwidths]}, error shift "
        f"{epg_shift:+.2%}"
    )


def _coherent_channel(h, label):
    vals, vecs = np.linalg.eigh(h)
    u = (vecs * np.exp(-1j * vals)[None, :]) @ vecs.conj().T
    return Channel(kraus=u[None], label=label)


def _random_hermitian(dim, rng):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = (g + g.conj().T) / 2.0
    return h / np.abs(np.linalg.eigvalsh(h)).max()


def test_gate_dependent_fit_matches_set_averaged_infidelity():
    rng = np.random.default_rng(55)
    base = _random_hermitian(3, rng)
    delta0, delta1 = 0.05, 2.0e-4
    per = tuple(
        _coherent_channel(delta0 * base + delta1 * _random_hermitian(3, rng), f"g{j}")
        for j in range(24)
    )
    lengths = tuple(range(20, 161, 20))
    sups = np.stack([c.superoperator() for c in per])
    spread = max(
        float(np.linalg.norm(sups.mean(axis=0) - s, 2)) for s in sups
    )
    assert spread * max(lengths) <= 0.1, "per-gate spread premise violated"
    model = ErrorModel(per_element=per, inverter=_coherent_channel(delta0 * base, "inv"))
    cfg = RbConfig(
        n_qubits=1,
        model=model,
        lengths=lengths,
        sequences_per_length=30,
        master_seed=404,
    )
    fit = _fit(run_protocol(cfg))
    truth = float(
        np.mean([1.0 - exact_average_fidelity_comp(c, 1) for c in per])
    )
    epg = error_per_gate(fit)
    deviation = epg / truth - 1.0
    assert abs(deviation) <= 0.10
    print(
        f"\nPASS gate-dependent regime: spread*y_max {spread * max(lengths):.3f} "
        f"(<=0.1), fitted {epg:.3e} vs set average {truth:.3e} ({deviation:+.1%})"
    )


def test_property_suite_invariants():
    rng = np.random.default_rng(123)
    for ch in (
        unitary_error(3, 0.1, rng),
        dilated_error(3, 3, 0.2, rng),
        depolarizing_comp(1, 0.05),
        depolarizing_comp(2, 0.02),
    ):
        total = np.einsum("kji,kjl->il", ch.kraus.conj(), ch.kraus)
        assert np.abs(total - np.eye(ch.dim)).max() < 1e-9

    ext = build_extended_set(1)
    tm = twirl(unitary_error(3, 0.1, rng), ext)
    assert np.abs(tm.matrix.sum(axis=0) - 1.0).max() < 1e-9
    assert tm.matrix.min() > -1e-12
    assert abs(np.abs(tm.eigenvalues()).max() - 1.0) < 1e-8

    ys = np.arange(1, 25)
    phi = 0.55 + 0.4 * 0.985**ys
    first = fit_decay(
        [DecaySample(y=int(y), phi_mean=float(v), phi_stderr=0.0) for y, v in zip(ys, phi)],
        max_order=3,
    )
    again = fit_decay(
        [
            DecaySample(y=int(y), phi_mean=float(v), phi_stderr=0.0)
            for y, v in zip(ys, first.predict(ys))
        ],
        max_order=3,
    )
    assert first.model_order == again.model_order
    pairs = zip(sorted(first.modes, key=str), sorted(again.modes, key=str))
    assert all(
        abs(a1 - a2) < 1e-8 and abs(l1 - l2) < 1e-8 for (a1, l1), (a2, l2) in pairs
    )

    ch1, _ = _tuned_unitary(3, 1, 1e-3, seed=9)
    cfg = RbConfig(
        n_qubits=1,
        model=ErrorModel(gate=ch1),
        lengths=(5, 10, 15),
        sequences_per_length=5,
        master_seed=31415,
    )
    assert run_protocol(cfg) == run_protocol(cfg)
    other = RbConfig(
        n_qubits=1,
        model=ErrorModel(gate=ch1),
        lengths=(5, 10, 15),
        sequences_per_length=5,
        master_seed=31416,
    )
    assert run_protocol(other) != run_protocol(cfg)

    for n in (1, 2):
        ext_n = build_extended_set(n)
        comp = np.array(comp_indices(n))
        for mask in ext_n.masks:
            assert np.allclose(mask.diagonal[comp], 1.0)
            assert np.allclose(np.abs(mask.diagonal), 1.0)

    print(
        "\nPASS property suite: CPTP completeness, stochastic twirl with unit "
        "top eigenvalue, fit idempotence, seed determinism, masks trivial on "
        "the computational subspace"
    )
