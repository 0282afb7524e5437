"""Shared fixtures for the spincast test suite"""

import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spincast.core.coherence import CoherenceParams
from spincast.core.parsers import config_from_mapping
from spincast.core.photodynamics import RateParams
from spincast.core.spin_model import ZfsParams

settings.register_profile("ci", max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("dev", max_examples=10, deadline=None)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "dev"))

AXIS_111 = np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)


@pytest.fixture
def zfs():
    return ZfsParams()


@pytest.fixture
def rates():
    return RateParams()


@pytest.fixture
def coh():
    return CoherenceParams()


@pytest.fixture
def ideal_coh():
    return CoherenceParams(ideal_pulses=True)


@pytest.fixture
def default_config():
    return config_from_mapping()


@pytest.fixture
def mixing_rates():
    """Rates for which the complete-mixing curve is a clean biexponential"""
    return RateParams(branching=(0.0, 0.5, 0.5), tau_0=2.5497, tau_plus=55.0, tau_minus=55.0)
