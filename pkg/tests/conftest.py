"""Shared fixtures for the test suite."""

import numpy as np
import pytest

# one human-readable verdict line per acceptance criterion, echoed in the
# terminal summary by the hook below
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from axlandau import (
    DomainSpec,
    Species,
    StateVector,
    build_reference_element,
    cartesian_mesh,
)


@pytest.fixture(scope="session")
def domain():
    return DomainSpec()


@pytest.fixture(scope="session")
def ref():
    return build_reference_element()


@pytest.fixture()
def rng():
    return np.random.default_rng(20260814)


@pytest.fixture(scope="session")
def mesh_8x16(domain):
    return cartesian_mesh(domain, 8, 16)


def random_state(mesh, n_species, rng, scale=1.0):
    """Random free-node coefficients (not a physical distribution)."""
    return StateVector(scale * rng.standard_normal((n_species, mesh.n_free)))


def make_two_species():
    """The mass-ratio-4 pair used throughout: drifting electrons, cold ions."""
    return [
        Species("e", mass=1.0, charge=-1.0, temperature=0.2, shift=-1.0),
        Species("i", mass=4.0, charge=1.0, temperature=0.02),
    ]


@pytest.fixture(scope="session")
def two_species():
    return make_two_species()
