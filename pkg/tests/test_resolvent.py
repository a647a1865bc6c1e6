from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from nlslab.errors import ContractViolation, EdgeProximityError
from nlslab.field import Grid
from nlslab.linearize import LinearizedOperator, apply_pc
from nlslab.resolvent import (
    MonomialClass,
    MonomialKey,
    classify_monomial,
    enumerate_keys,
    limiting_resolvent,
    resolvent_apply,
    solve_homological,
    weighted_norm,
)
from oracles import free_lower, free_outgoing_upper


def gaussian_pair(grid, s=1.0):
    g = np.exp(-grid.x**2 / (2 * s * s))
    return np.stack([g, g]).astype(complex)


def test_off_spectrum_residual(cq_H):
    rng = np.random.default_rng(0)
    env = np.exp(-(cq_H.grid.x / 5) ** 2)
    b = (rng.normal(size=(2, cq_H.grid.n)) + 1j * rng.normal(size=(2, cq_H.grid.n))) * env
    for z in (1.0 + 0.5j, 4.0 + 0.3j, -5.0 - 1j):
        x = resolvent_apply(cq_H, z, b)
        assert np.linalg.norm(cq_H.apply(x) - z * x - b) <= 1e-10 * np.linalg.norm(b)


def test_resolvent_identity(cq_H):
    b = gaussian_pair(cq_H.grid)
    z1, z2 = 1.5 + 0.4j, 2.0 - 0.7j
    r1, r2 = resolvent_apply(cq_H, z1, b, tol=1e-11), resolvent_apply(cq_H, z2, b, tol=1e-11)
    lhs = r1 - r2
    rhs = (z1 - z2) * resolvent_apply(cq_H, z1, r2, tol=1e-11)
    assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(lhs)


def test_free_limiting_resolvent_matches_closed_form():
    omega, Lam = 1.0, 2.5
    g = Grid(1, 1024, 40.0)
    H = LinearizedOperator.free(omega, g)
    res = limiting_resolvent(H, Lam, gaussian_pair(g))
    k, kappa = math.sqrt(Lam - omega), math.sqrt(Lam + omega)
    exact = np.stack([free_outgoing_upper(g.x, 1.0, k), free_lower(g.x, 1.0, kappa)])
    err = weighted_norm(res.value - exact, g) / weighted_norm(exact, g)
    assert err <= 1e-4
    assert res.monotone


def test_edge_proximity():
    g = Grid(1, 256, 20.0)
    H = LinearizedOperator.free(1.0, g)
    with pytest.raises(EdgeProximityError):
        limiting_resolvent(H, 1.0 + 1e-6, gaussian_pair(g))


def brute_class(mu, nu, fd, lam, om):
    s = sum(l * (a - b) for l, a, b in zip(lam, mu, nu))
    if fd == 0:
        return MonomialClass.Z0 if abs(s) <= 1e-12 else MonomialClass.REMOVABLE
    return MonomialClass.Z1 if abs(s) > om else MonomialClass.REMOVABLE


@pytest.mark.parametrize("lam,om", [((0.7,), 1.0), ((0.4, 0.9), 1.0), ((2.9,), 3.0)])
def test_classification_matches_brute_force(lam, om):
    count = 0
    for key in enumerate_keys(len(lam), 5):
        assert classify_monomial(key, lam, om) is brute_class(key.mu, key.nu, key.f_degree, lam, om)
        count += 1
    # every (mu, nu, fd) with 1 <= |mu|+|nu| <= 5
    m2 = 2 * len(lam)
    expected = 2 * sum(math.comb(t + m2 - 1, m2 - 1) for t in range(1, 6))
    assert count == expected


def test_key_validation():
    with pytest.raises(ValueError):
        MonomialKey((0,), (0,))
    with pytest.raises(ValueError):
        MonomialKey((1,), (0, 1))
    with pytest.raises(ValueError):
        MonomialKey((1,), (0,), 2)


def test_homological_equation(cq_H, cq_spec):
    lam = [cq_spec.eigenpairs[0][0]]
    rng = np.random.default_rng(7)
    env = np.exp(-(cq_H.grid.x / 3) ** 2)
    removable = [k for k in enumerate_keys(1, 3) if k.f_degree == 1 and classify_monomial(k, lam, 3.0) is MonomialClass.REMOVABLE]
    scalar = [k for k in enumerate_keys(1, 3) if k.f_degree == 0 and classify_monomial(k, lam, 3.0) is MonomialClass.REMOVABLE]
    assert removable and scalar
    for trial in range(20):
        key = removable[trial % len(removable)]
        # +-lambda are eigenvalues of H, so the data must lie in the continuous subspace
        K = apply_pc(cq_H, cq_spec, (rng.normal(size=(2, cq_H.grid.n)) + 1j * rng.normal(size=(2, cq_H.grid.n))) * env)
        kk = {scalar[trial % len(scalar)]: complex(rng.normal(), rng.normal())}
        sol = solve_homological(lam, kk, {key: K}, cq_H, spec=cq_spec)
        assert sol.residuals[key] <= 1e-8
        (sk, b), = sol.b.items()
        assert b * sk.frequency(lam) == pytest.approx(1j * kk[sk])


def test_homological_contract(cq_H, cq_spec):
    lam = [cq_spec.eigenpairs[0][0]]
    K = gaussian_pair(cq_H.grid)
    with pytest.raises(ContractViolation):
        solve_homological(lam, {}, {MonomialKey((2,), (0,), 1): K}, cq_H)  # 2 lambda > omega
    with pytest.raises(ContractViolation):
        solve_homological(lam, {MonomialKey((1,), (1,), 0): 1.0}, {}, cq_H)
    with pytest.raises(EdgeProximityError):
        solve_homological([1.5], {}, {MonomialKey((2,), (0,), 1): K}, cq_H)  # exactly at omega
