"""Channel constructors, population dynamics, and averaged sequence maps."""

import numpy as np
import pytest

from leakrb.channels import (
    Channel,
    ErrorModel,
    TransitionMatrix,
    apply_channel,
    average_fidelity_comp,
    build_sequence_map,
    coherence_mask,
    depolarizing_comp,
    dilated_error,
    exact_average_fidelity_comp,
    identity_channel,
    restrict_to_diagonal,
    twirl,
    unitary_error,
)
from leakrb.cliffords import without_masks
from leakrb.exceptions import ConfigError, IntegrityError, TwirlWarning
from leakrb.linalg import dagger


def completeness_residual(ch):
    total = np.einsum("kji,kjl->il", ch.kraus.conj(), ch.kraus)
    return np.abs(total - np.eye(ch.dim)).max()


def random_density(dim, rng):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ dagger(g)
    return rho / np.trace(rho)


@pytest.mark.parametrize("seed", range(5))
def test_constructors_are_trace_preserving(seed):
    rng = np.random.default_rng(seed)
    for ch in (
        identity_channel(3),
        unitary_error(3, 0.1, rng),
        dilated_error(3, 3, 0.2, rng),
        dilated_error(9, 2, 0.05, rng),
        depolarizing_comp(1, 0.3),
        depolarizing_comp(2, 0.01),
    ):
        assert completeness_residual(ch) < 1e-12


def test_channel_rejects_incomplete_kraus():
    with pytest.raises(IntegrityError, match="completeness"):
        Channel(kraus=0.9 * np.eye(3)[None])
    with pytest.raises(ValueError):
        Channel(kraus=np.eye(3))


def test_apply_channel_preserves_trace_and_positivity():
    rng = np.random.default_rng(3)
    ch = dilated_error(3, 4, 0.3, rng)
    rho = random_density(3, rng)
    out = apply_channel(ch, rho)
    assert np.isclose(np.trace(out).real, 1.0, atol=1e-12)
    assert np.linalg.eigvalsh(out).min() > -1e-12
    with pytest.raises(ValueError):
        apply_channel(ch, np.eye(4))


def test_apply_channel_broadcasts_over_stacks():
    rng = np.random.default_rng(4)
    ch = unitary_error(3, 0.2, rng)
    stack = np.stack([random_density(3, rng) for _ in range(5)])
    out = apply_channel(ch, stack)
    assert out.shape == stack.shape
    assert np.allclose(out[2], apply_channel(ch, stack[2]), atol=1e-14)


def test_dilated_error_is_identity_at_zero_strength():
    ch = dilated_error(3, 3, 0.0, np.random.default_rng(0))
    rho = random_density(3, np.random.default_rng(1))
    assert np.allclose(apply_channel(ch, rho), rho, atol=1e-12)


def test_unitary_error_infidelity_scales_quadratically():
    # same generator seed keeps the Hamiltonian fixed while delta varies
    eps = [
        1.0 - exact_average_fidelity_comp(unitary_error(3, d, np.random.default_rng(8)), 1)
        for d in (0.02, 0.04)
    ]
    assert eps[1] / eps[0] == pytest.approx(4.0, rel=0.01)


@pytest.mark.parametrize("n,p", [(1, 0.01), (1, 0.3), (2, 0.02)])
def test_depolarizing_fidelity_closed_form(n, p):
    d = 2**n
    f = exact_average_fidelity_comp(depolarizing_comp(n, p), n)
    assert f == pytest.approx(1.0 - p * (d - 1) / d, abs=1e-12)


def test_fidelity_routes_agree():
    # closed form against the Monte Carlo estimator, two independent routes
    ch = dilated_error(3, 3, 0.15, np.random.default_rng(9))
    exact = exact_average_fidelity_comp(ch, 1)
    mc = average_fidelity_comp(ch, 1, n_samples=200_000, rng=np.random.default_rng(10))
    assert abs(mc.value - exact) < 4 * mc.stderr


def test_channel_serialization_round_trip():
    ch = dilated_error(3, 2, 0.1, np.random.default_rng(5))
    back = Channel.from_dict(ch.to_dict())
    assert np.allclose(back.kraus, ch.kraus, atol=1e-15)
    assert back.label == ch.label


def test_transition_matrix_validation():
    with pytest.raises(IntegrityError, match="columns"):
        TransitionMatrix(matrix=np.array([[0.5, 0.0], [0.4, 1.0]]))
    with pytest.raises(IntegrityError, match="below"):
        TransitionMatrix(matrix=np.array([[1.1, 0.0], [-0.1, 1.0]]))
    m = TransitionMatrix(matrix=np.array([[0.9, 0.2], [0.1, 0.8]]))
    assert m.dim == 2


def test_transition_matrix_top_eigenvalue_is_one(set1):
    ch = dilated_error(3, 3, 0.2, np.random.default_rng(12))
    for t in (restrict_to_diagonal(ch), twirl(ch, set1)):
        moduli = np.abs(t.eigenvalues())
        assert moduli[0] == pytest.approx(1.0, abs=1e-8)
        assert np.all(moduli <= 1.0 + 1e-8)


def test_transition_matrix_bracket_matches_power():
    m = TransitionMatrix(matrix=np.array([[0.9, 0.2], [0.1, 0.8]]))
    init = np.array([1.0, 0.0])
    meas = np.array([1.0, 0.0])
    assert m.bracket(3, init, meas) == pytest.approx(m.power(3)[0, 0])
    assert np.allclose(m.evolve(init, 2), m.power(2) @ init)


def test_restrict_to_diagonal_depolarizing():
    p = 0.1
    t = restrict_to_diagonal(depolarizing_comp(1, p))
    expected = np.array([[1 - p / 2, p / 2, 0.0], [p / 2, 1 - p / 2, 0.0], [0.0, 0.0, 1.0]])
    assert np.allclose(t.matrix, expected, atol=1e-12)


def test_twirl_fixes_depolarizing(set1):
    # the depolarizing channel commutes with every computational unitary,
    # so its twirl equals its plain diagonal restriction
    ch = depolarizing_comp(1, 0.07)
    assert np.allclose(twirl(ch, set1).matrix, restrict_to_diagonal(ch).matrix, atol=1e-12)
    vals = np.sort(np.abs(twirl(ch, set1).eigenvalues()))
    assert np.allclose(vals, [1.0 - 0.07, 1.0, 1.0], atol=1e-10)


def test_twirl_warns_off_design(set1):
    ch = depolarizing_comp(1, 0.1)
    with pytest.warns(TwirlWarning):
        twirl(ch, without_masks(set1))


def test_error_model_validation(set1):
    ch = identity_channel(3)
    with pytest.raises(ConfigError):
        ErrorModel()
    with pytest.raises(ConfigError):
        ErrorModel(gate=ch, per_element=(ch,) * 24)
    with pytest.raises(ConfigError):
        ErrorModel(gate=ch, prep=identity_channel(9))
    per = ErrorModel(per_element=(ch,) * 24, inverter=ch)
    assert per.gate_dependent
    assert per.channel_for(5) is ch
    incomplete = ErrorModel(per_element=(ch,) * 24)
    with pytest.raises(ConfigError, match="inverter"):
        incomplete.validate_for(set1)
    with pytest.raises(ConfigError, match="interleaved"):
        ErrorModel(gate=ch).validate_for(set1, needs_interleaved=True)
    with pytest.raises(ConfigError, match="covers"):
        ErrorModel(per_element=(ch,) * 10, inverter=ch).validate_for(set1)


def test_sequence_map_matches_twirl_bracket(set1, small_unitary_model):
    """Dual route for the averaged survival: iterating the exact one-step
    map must agree with powers of the twirled transition matrix."""
    t = twirl(small_unitary_model.gate, set1)
    smap = build_sequence_map(small_unitary_model, set1)
    e0 = np.array([1.0, 0.0, 0.0])
    for y in (1, 2, 3, 4):
        assert smap.survival(y) == pytest.approx(t.bracket(y, e0, e0), abs=1e-10)


def test_sequence_map_decay_modes_reproduce_curve(set1, small_unitary_model):
    smap = build_sequence_map(small_unitary_model, set1)
    amps, lams = smap.decay_modes()
    ys = np.arange(1, 30)
    curve = smap.survival_curve(ys)
    recon = np.real(np.power(lams[None, :], ys[:, None]) @ amps)
    assert np.abs(curve - recon).max() < 1e-9


def test_sequence_map_spectral_radius_at_most_one(set1, small_unitary_model):
    smap = build_sequence_map(small_unitary_model, set1)
    assert smap.spectral_radius() <= 1.0 + 1e-8
    assert np.abs(smap.eigenvalues()).max() <= 1.0 + 1e-8


def test_coherence_mask_kills_leakage_coherences():
    mask = coherence_mask(1)
    assert mask.shape == (9, 9)
    assert set(np.unique(mask)) <= {0.0, 1.0}
    # population-population entries always survive the mask average
    assert np.all(mask[:3, :3] == 1.0)


def test_interleaved_map_needs_channel(set1, small_unitary_model):
    gate = set1.elements[3].gate
    with pytest.raises(ConfigError):
        build_sequence_map(small_unitary_model, set1, interleaved_gate=gate)
