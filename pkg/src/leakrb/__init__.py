"""Randomized benchmarking on leaky qubits.

Simulates the extended-Clifford protocol on qutrit registers, provides
exact oracles for its averages and spread, and fits the resulting decay
curves down to per-gate error rates with conservative bounds.
"""

from .channels import (
    Channel,
    ErrorModel,
    FidelityEstimate,
    SequenceAverageMap,
    TransitionMatrix,
    apply_channel,
    average_fidelity_comp,
    build_sequence_map,
    depolarizing_comp,
    dilated_error,
    exact_average_fidelity_comp,
    identity_channel,
    restrict_to_diagonal,
    twirl,
    unitary_error,
)
from .cliffords import (
    CliffordGroup,
    ExtendedCliffordSet,
    PhaseMask,
    QutritUnitary,
    build_extended_set,
    embed_qutrit,
    generate_clifford_group,
    inverting_gate,
    leak_mixing_cnot,
    without_masks,
)
from .engine import (
    RbConfig,
    SequenceResult,
    VarianceCurve,
    analytic_variance,
    derive_seed,
    exhaustive_average,
    read_results,
    run_irb,
    run_protocol,
    run_sequence,
    summarize,
    write_results,
)
from .exceptions import ConfigError, IntegrityError, NumericalError, TwirlWarning
from .fitting import (
    DecayFit,
    DecaySample,
    IrbEstimate,
    MultiExponentialDecay,
    VarianceShapeModel,
    bootstrap_error_ci,
    error_per_gate,
    fit_decay,
    fit_report,
    fit_variance_shape,
    irb_estimate,
    safe_error_bound,
    samples_from_results,
)

__version__ = "0.1.0"

__all__ = [
    "Channel",
    "CliffordGroup",
    "ConfigError",
    "DecayFit",
    "DecaySample",
    "ErrorModel",
    "ExtendedCliffordSet",
    "FidelityEstimate",
    "IntegrityError",
    "IrbEstimate",
    "MultiExponentialDecay",
    "NumericalError",
    "PhaseMask",
    "QutritUnitary",
    "RbConfig",
    "SequenceAverageMap",
    "SequenceResult",
    "TransitionMatrix",
    "TwirlWarning",
    "VarianceCurve",
    "VarianceShapeModel",
    "analytic_variance",
    "apply_channel",
    "average_fidelity_comp",
    "bootstrap_error_ci",
    "build_extended_set",
    "build_sequence_map",
    "depolarizing_comp",
    "derive_seed",
    "dilated_error",
    "embed_qutrit",
    "error_per_gate",
    "exact_average_fidelity_comp",
    "exhaustive_average",
    "fit_decay",
    "fit_report",
    "fit_variance_shape",
    "generate_clifford_group",
    "identity_channel",
    "inverting_gate",
    "irb_estimate",
    "leak_mixing_cnot",
    "read_results",
    "restrict_to_diagonal",
    "run_irb",
    "run_protocol",
    "run_sequence",
    "safe_error_bound",
    "samples_from_results",
    "summarize",
    "twirl",
    "unitary_error",
    "without_masks",
    "write_results",
]
