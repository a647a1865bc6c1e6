from __future__ import annotations

import math

import numpy as np
import pytest

from nlslab.errors import DataError
from nlslab.field import Grid, Nonlinearity, SpinorField, charge, energy, momentum
from nlslab.simulate import (
    Integrator,
    PacketSpec,
    SimConfig,
    SolitonSpec,
    initial_field,
    iter_frames,
    run,
    sponge_profile,
    step,
)
from oracles import sech_soliton

G = Grid(1, 512, 30.0)


def test_plane_wave_is_exact():
    b = Nonlinearity.cubic(-1.0)
    A, k = 0.7, G.k[3]
    dt, n = 0.01, 200
    u0 = A * np.exp(1j * k * G.x)
    u = Integrator(G, b, dt).advance(u0, n)
    t = n * dt
    exact = A * np.exp(1j * (k * G.x - (k * k - A * A) * t))
    assert np.max(np.abs(u - exact)) <= 1e-12


def test_time_reversal():
    b = Nonlinearity.cubic_quintic(-1.0, -0.1)
    u0 = (sech_soliton(G.x) * np.exp(0.3j * G.x)).astype(complex)
    u = u0
    for _ in range(300):
        u = step(u, 0.01, b, G)
    for _ in range(300):
        u = step(u, -0.01, b, G)
    assert np.max(np.abs(u - u0)) <= 1e-10


def test_conservation():
    cfg = SimConfig(G, Nonlinearity.cubic(), 1e-3, 5.0, soliton=SolitonSpec(1.0, v=0.4), sample_stride=500)
    tr = run(cfg)
    assert np.ptp(tr.Q) <= 1e-10 * tr.Q[0]
    assert np.ptp(tr.Pi) <= 1e-9
    assert np.ptp(tr.E) <= 1e-5


def test_energy_error_is_second_order():
    b = Nonlinearity.cubic()
    u0 = (1.3 * sech_soliton(G.x) * np.exp(0.4j * G.x)).astype(complex)
    E0 = energy(SpinorField.from_scalar(G, u0), b)

    def drift(dt):
        I, u, worst = Integrator(G, b, dt), u0.copy(), 0.0
        for _ in range(int(round(2.0 / dt))):
            u = I.step(u)
            worst = max(worst, abs(energy(SpinorField.from_scalar(G, u), b) - E0))
        return worst

    ratio = drift(0.02) / drift(0.01)
    assert 3.5 <= ratio <= 4.5


def test_zero_data_stays_zero():
    cfg = SimConfig(G, Nonlinearity.cubic(), 1e-2, 1.0, sponge=True)
    tr = run(cfg, SpinorField.from_scalar(G, np.zeros(G.n, complex)))
    assert np.all(tr.final.u == 0)


def test_free_packet_group_velocity():
    k0 = 2.0
    cfg = SimConfig(G, Nonlinearity.zero(), 1e-2, 4.0, packet=PacketSpec(1.0, -10.0, 1.5, k0), sponge=True)
    tr = run(cfg)
    u = tr.final.u
    center = np.sum(G.x * np.abs(u) ** 2) / np.sum(np.abs(u) ** 2)
    travelled = center + 10.0
    assert abs(travelled - 2 * k0 * 4.0) <= 0.1 * 2 * k0 * 4.0


def test_sponge_absorbs_outgoing_wave():
    cfg = SimConfig(G, Nonlinearity.zero(), 1e-2, 20.0, packet=PacketSpec(1.0, 0.0, 1.5, 3.0), sponge=True)
    tr = run(cfg)
    assert tr.Q[-1] <= 1e-3 * tr.Q[0]
    W = sponge_profile(G, 10.0)
    assert W.min() == 0 and W.max() == pytest.approx(10.0, rel=1e-2)


def test_boosted_soliton_center():
    v, T = 0.5, 10.0
    cfg = SimConfig(G, Nonlinearity.cubic(), 1e-3, T, soliton=SolitonSpec(1.0, v=v, D=-3.0), sample_stride=1000)
    tr = run(cfg, keep_snapshots=False)
    u = np.abs(tr.final.u)
    center = G.x[np.argmax(u)]
    assert abs(center - (-3.0 + v * T)) <= 2 * G.h
    assert np.max(np.abs(u - sech_soliton(G.x + 3.0 - v * T))) <= 1e-4


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_aborts_with_last_frame():
    b = Nonlinearity.cubic()
    cfg = SimConfig(G, b, 1e-3, 1.0, sample_stride=10)
    u0 = 1e160 * sech_soliton(G.x).astype(complex)
    tr = run(cfg, SpinorField.from_scalar(G, u0))
    assert tr.aborted and "non-finite" in tr.message
    assert np.all(np.isfinite(tr.final.u))


def test_input_validation():
    with pytest.raises(ValueError):
        SimConfig(G, Nonlinearity.cubic(), 0.0, 1.0)
    with pytest.raises(ValueError):
        SimConfig(G, Nonlinearity.cubic(), 1e-3, 1.0, sample_stride=0)
    with pytest.raises(DataError):
        step(np.full(G.n, np.nan, complex), 0.1, Nonlinearity.cubic(), G)


def test_frames_are_independent_copies():
    cfg = SimConfig(G, Nonlinearity.cubic(), 1e-2, 0.5, soliton=SolitonSpec(1.0), sample_stride=10)
    frames = list(iter_frames(cfg, initial_field(cfg)))
    assert [f.time for f in frames] == pytest.approx([0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    assert frames[0].u is not frames[1].u
    assert charge(frames[-1]) == pytest.approx(4.0, abs=1e-8)
    assert abs(float(momentum(frames[-1])[0])) < 1e-12
