from __future__ import annotations

import pytest

from nlslab.field import Grid, Nonlinearity
from nlslab.groundstate import ground_state_entry
from nlslab.linearize import assemble
from nlslab.modulation import SolitonBranch
from nlslab.spectrum import discrete_spectrum

# Frozen reference values for the focusing cubic-quintic case beta(s) = -s - 0.1 s^2 at omega = 3,
# computed once at n = 1024, L = 40 and cross-checked at n = 2048 and L = 64/80.
CQ_OMEGA = 3.0
CQ_LAMBDA = 2.922524
CQ_GAMMA = 6.7625e-3


@pytest.fixture(scope="session")
def cubic():
    return Nonlinearity.cubic()


@pytest.fixture(scope="session")
def cq():
    return Nonlinearity.cubic_quintic(-1.0, -0.1)


@pytest.fixture(scope="session")
def grid1024():
    return Grid(1, 1024, 40.0)


@pytest.fixture(scope="session")
def cubic_entry(cubic, grid1024):
    return ground_state_entry(cubic, 1.0, grid1024)


@pytest.fixture(scope="session")
def cubic_H(cubic_entry):
    return assemble(cubic_entry)


@pytest.fixture(scope="session")
def cq_entry(cq, grid1024):
    return ground_state_entry(cq, CQ_OMEGA, grid1024)


@pytest.fixture(scope="session")
def cq_H(cq_entry):
    return assemble(cq_entry)


@pytest.fixture(scope="session")
def cq_spec(cq_H):
    return discrete_spectrum(cq_H)


@pytest.fixture(scope="session")
def cq_branch(cq, grid1024):
    return SolitonBranch(cq, grid1024, CQ_OMEGA, half_width=0.15)


@pytest.fixture(scope="session")
def cubic_branch(cubic, grid1024):
    # the cubic soliton has no internal modes
    return SolitonBranch(cubic, grid1024, 1.0, half_width=0.1, with_modes=False)
