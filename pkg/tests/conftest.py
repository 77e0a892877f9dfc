"""Shared fixtures. Group generation and set construction are cached per
session; the two-qubit group is only built by tests that need it."""

import numpy as np
import pytest

from leakrb.channels import ErrorModel, unitary_error
from leakrb.cliffords import build_extended_set


@pytest.fixture(scope="session")
def set1():
    return build_extended_set(1)


@pytest.fixture(scope="session")
def set1_phases():
    return build_extended_set(1, leakage_policy="random_phases", phase_seed=7)


@pytest.fixture(scope="session")
def small_unitary_model():
    """Gate-independent coherent error on one qutrit, infidelity ~1e-3."""
    ch = unitary_error(3, 0.08, np.random.default_rng(11))
    return ErrorModel(gate=ch)
