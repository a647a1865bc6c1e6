from __future__ import annotations

import numpy as np
import pytest

from nlslab.field import Grid, pairing
from nlslab.linearize import LinearizedOperator, ShiftedSolver, apply_pc, sigma1, sigma3, spectral_project


def rand_spinor(rng, grid, width=5.0):
    env = np.exp(-((grid.x / width) ** 2))
    return (rng.normal(size=(2, grid.n)) + 1j * rng.normal(size=(2, grid.n))) * env


def test_kernel_relations(cubic_H, cq):
    # the narrower omega = 3 profile needs h ~ 0.04 before its Nyquist tail stops
    # polluting the third-derivative translation identity
    from nlslab.groundstate import ground_state_entry
    from nlslab.linearize import assemble

    cq_fine = assemble(ground_state_entry(cq, 3.0, Grid(1, 2048, 40.0)))
    for H in (cubic_H, cq_fine):
        r = H.kernel_residuals()
        assert r["gauge"] <= 1e-8 and r["translation"] <= 1e-8 and r["boost"] <= 1e-8
        assert r["scale"] <= 1e-4


def test_adjoint_relation(cq_H):
    rng = np.random.default_rng(1)
    g = cq_H.grid
    for _ in range(10):
        X, Y = rand_spinor(rng, g), rand_spinor(rng, g)
        lhs = np.sum(np.conj(cq_H.apply(X)) * Y)
        rhs = np.sum(np.conj(X) * cq_H.apply_adjoint(Y))
        assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(X) * np.linalg.norm(cq_H.apply(Y))
        assert np.allclose(cq_H.apply_adjoint(Y), sigma3(cq_H.apply(sigma3(Y))), atol=1e-12)


def test_sigma1_conjugation_symmetry(cq_H):
    # H sigma1 conj X = - sigma1 conj H X
    rng = np.random.default_rng(2)
    X = rand_spinor(rng, cq_H.grid)
    lhs = cq_H.apply(sigma1(np.conj(X)))
    assert np.allclose(lhs, -sigma1(np.conj(cq_H.apply(X))), atol=1e-10)


def test_free_operator_in_fourier():
    g = Grid(1, 128, 10.0)
    H = LinearizedOperator.free(2.0, g)
    kk = g.k[5]
    X = np.stack([np.exp(1j * kk * g.x), np.zeros(g.n)])
    assert np.allclose(H.apply(X)[0], (kk**2 + 2.0) * X[0], atol=1e-10)


def test_dense_matches_apply():
    g = Grid(1, 64, 8.0)
    H = LinearizedOperator.free(1.0, g)
    rng = np.random.default_rng(3)
    X = rand_spinor(rng, g)
    assert np.allclose(H.dense() @ X.ravel(), H.apply(X).ravel(), atol=1e-9)


def test_projection_of_kernel_vectors(cq_H, cq_spec):
    K = cq_H.kernel_vectors()
    c = spectral_project(cq_H, cq_spec, K["scale"])
    assert c.scale == pytest.approx(1.0, abs=1e-8)
    assert max(abs(c.gauge), abs(c.translation), abs(c.boost)) <= 1e-8
    c = spectral_project(cq_H, cq_spec, K["gauge"])
    assert c.gauge == pytest.approx(1.0, abs=1e-8) and abs(c.scale) <= 1e-8
    c = spectral_project(cq_H, cq_spec, K["translation"])
    assert c.translation == pytest.approx(1.0, abs=1e-8)
    c = spectral_project(cq_H, cq_spec, K["boost"])
    assert c.boost == pytest.approx(1.0, abs=1e-8)


def test_projection_of_modes(cq_H, cq_spec):
    lam, xi = cq_spec.eigenpairs[0]
    X = 0.3 * xi + 0.3 * sigma1(xi)
    c = spectral_project(cq_H, cq_spec, X)
    assert c.z[0] == pytest.approx(0.3, abs=1e-8) and c.zbar[0] == pytest.approx(0.3, abs=1e-8)
    assert np.linalg.norm(c.f) <= 1e-8 * np.linalg.norm(X)


def test_continuous_projection(cq_H, cq_spec):
    rng = np.random.default_rng(4)
    X = rand_spinor(rng, cq_H.grid)
    c = spectral_project(cq_H, cq_spec, X)
    assert np.allclose(c.reassemble(cq_H, cq_spec), X, atol=1e-10)
    P = apply_pc(cq_H, cq_spec, X)
    assert np.linalg.norm(apply_pc(cq_H, cq_spec, P) - P) <= 1e-10 * np.linalg.norm(P)
    # P_c X annihilates every adjoint kernel vector
    for d in cq_H.adjoint_kernel_vectors().values():
        assert abs(pairing(P, d, cq_H.grid)) < 1e-9


def test_shifted_solver(cq_H):
    rng = np.random.default_rng(5)
    b = rand_spinor(rng, cq_H.grid)
    s = ShiftedSolver(cq_H, 1.5 + 0.2j)
    x = s.solve(b, rtol=1e-11)
    assert np.linalg.norm(cq_H.apply(x) - (1.5 + 0.2j) * x - b) <= 1e-10 * np.linalg.norm(b)
