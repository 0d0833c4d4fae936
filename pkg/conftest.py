"""
Shared fixtures for the lab's test modules.
Profiles are expensive enough to solve once per session.
"""

import pytest

from potential import make_asymmetric, make_degenerate, make_quartic
from transition_profile import compute_constants, solve_profile


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: multi-second numerical experiments")


@pytest.fixture(scope="session")
def quartic():
    return make_quartic()


@pytest.fixture(scope="session")
def quartic_profile(quartic):
    return solve_profile(quartic)


@pytest.fixture(scope="session")
def quartic_constants(quartic_profile):
    return compute_constants(quartic_profile)


@pytest.fixture(scope="session")
def asymmetric():
    return make_asymmetric(0.5)


@pytest.fixture(scope="session")
def asymmetric_profile(asymmetric):
    return solve_profile(asymmetric)


@pytest.fixture(scope="session")
def degenerate_profile():
    return solve_profile(make_degenerate(0.5))
