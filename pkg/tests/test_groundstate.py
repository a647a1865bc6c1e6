from __future__ import annotations

import math

import numpy as np
import pytest

from nlslab.errors import BranchNotFoundError
from nlslab.field import Grid, Nonlinearity
from nlslab.groundstate import (
    GroundStateBranch,
    check_lplus,
    family_scan,
    solve_ground_state,
    stationary_residual,
)
from oracles import sech_soliton


def test_cubic_sech(cubic, grid1024):
    gs = solve_ground_state(cubic, 1.0, grid1024)
    assert np.max(np.abs(gs.phi - sech_soliton(grid1024.x))) < 1e-8
    assert gs.residual < 1e-10
    assert gs.q == pytest.approx(4.0, abs=1e-8)


@pytest.mark.parametrize("omega", [0.5, 1.3, 2.0])
def test_cubic_scaling(cubic, grid1024, omega):
    gs = solve_ground_state(cubic, omega, grid1024)
    assert np.max(np.abs(gs.phi - sech_soliton(grid1024.x, omega))) < 1e-8
    assert gs.q == pytest.approx(4 * math.sqrt(omega), abs=1e-6)


def test_entry_derivatives(cubic_entry):
    # q = 4 sqrt(w): q'(1) = 2; e = -4/3 w^{3/2}, d = e + w q = 8/3 w^{3/2}
    assert cubic_entry.q_prime == pytest.approx(2.0, abs=1e-6)
    assert cubic_entry.e == pytest.approx(-4 / 3, abs=1e-6)
    assert cubic_entry.d == pytest.approx(8 / 3, abs=1e-6)
    assert cubic_entry.d_prime == pytest.approx(cubic_entry.q, rel=1e-6)  # d'(w) = q(w)


def test_invalid_inputs(cubic, grid1024):
    with pytest.raises(ValueError):
        solve_ground_state(cubic, 1.0, grid1024, tol=1e-14)
    with pytest.raises(BranchNotFoundError):
        solve_ground_state(cubic, -1.0, grid1024)
    # a purely defocusing problem has no ground state
    with pytest.raises(BranchNotFoundError):
        solve_ground_state(Nonlinearity.cubic(+1.0), 1.0, grid1024)


def test_cubic_quintic_residual(cq, cq_entry):
    r = stationary_residual(cq_entry.phi, cq_entry.omega, cq, cq_entry.grid)
    assert np.sqrt(np.sum(r**2) * cq_entry.grid.h) < 1e-9
    assert np.all(cq_entry.phi > -1e-12)
    assert cq_entry.q_prime > 0


def test_radial_cubic_scaling():
    # 3D cubic: phi_w(r) = sqrt(w) phi_1(sqrt(w) r), so q(w) sqrt(w) is constant and q' < 0
    g = Grid(3, 512, 20.0)
    b = Nonlinearity.cubic()
    q1 = solve_ground_state(b, 1.0, g).q
    q2 = solve_ground_state(b, 1.44, g).q
    assert q2 * 1.2 == pytest.approx(q1, rel=1e-6)
    fam = family_scan(b, 0.9, 1.1, 3, g)
    assert not fam.h4


def test_lplus_cubic(cubic_entry):
    r = check_lplus(cubic_entry)
    assert r.n_negative == 1 and r.kernel_dim_even_sector == 0
    assert r.lowest_eigenvalue == pytest.approx(-3.0, abs=1e-3)
    assert abs(r.lminus_lowest) < 1e-6
    assert abs(r.odd_sector_smallest) < 1e-6 and r.odd_kernel_overlap > 0.999
    assert r.h5


def test_family_scan(cubic, grid1024):
    fam = family_scan(cubic, 0.5, 2.0, 4, grid1024)
    assert np.allclose(fam.q, 4 * np.sqrt(fam.omegas), atol=1e-6)
    assert np.allclose(fam.q_prime, 2 / np.sqrt(fam.omegas), atol=1e-5)
    assert fam.h4 and fam.min_q_prime > 0
    rows = fam.rows()
    assert set(rows[0]) == {"omega", "q", "e", "d", "q_prime", "lplus_negative_count"}


def test_chebyshev_branch(cubic, grid1024):
    br = GroundStateBranch(cubic, grid1024, 1.0, 0.1)
    w = 1.037
    assert np.max(np.abs(br.phi(w) - sech_soliton(grid1024.x, w))) < 1e-9
    assert br.q_prime(w) == pytest.approx(2 / math.sqrt(w), rel=1e-7)
