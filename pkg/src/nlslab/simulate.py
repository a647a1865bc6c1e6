"""Strang split-step Fourier integration of i u_t = -u_xx + beta(|u|^2) u.

The kinetic substep multiplies Fourier coefficients by exp(-i k^2 dt/2), which is
the free flow exp(i t Laplacian).  The potential substep is the exact phase
exp(-i beta(|u|^2) dt), optionally times exp(-W dt) for a quartic sponge W that
lives on the outer eighth of the box on each side.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
import scipy.fft as sfft

from .errors import ConvergenceError, DataError
from .field import Grid, Nonlinearity, SpinorField, charge, energy, gauge_boost, momentum, write_snapshot
from .parallel import thread_cap

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolitonSpec:
    omega: float
    v: float = 0.0
    theta: float = 0.0
    D: float = 0.0


@dataclass(frozen=True)
class PacketSpec:
    """Gaussian wave packet a exp(-(x-x0)^2 / (2 w^2) + i k0 x)."""

    amplitude: float
    center: float = 0.0
    width: float = 1.0
    k0: float = 0.0


@dataclass
class SimConfig:
    """Run description.

    ``dt`` is accuracy driven; Strang splitting is unconditionally stable, and the
    recommended ceiling is roughly ``0.5 h^2``-equivalent error per unit time,
    i.e. dt around 1e-3 for h near 0.04.  Strides count integrator steps.
    """

    grid: Grid
    beta: Nonlinearity
    dt: float
    t_final: float
    soliton: SolitonSpec | None = None
    mode_amplitudes: tuple[complex, ...] = ()
    packet: PacketSpec | None = None
    sponge: bool = False
    sponge_strength: float = 10.0
    sponge_fraction: float = 0.125
    sample_stride: int = 100
    snapshot_stride: int = 0

    def __post_init__(self):
        if self.grid.radial:
            raise ValueError("dynamics are implemented for dim=1")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if self.t_final < 0:
            raise ValueError("t_final must be nonnegative")
        if self.sample_stride < 1 or self.snapshot_stride < 0:
            raise ValueError("strides must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def accuracy_bound(self) -> float:
        return 0.5 * self.grid.h**2


@dataclass
class Trajectory:
    times: np.ndarray
    snapshots: list[SpinorField]
    Q: np.ndarray
    Pi: np.ndarray
    E: np.ndarray
    final: SpinorField
    aborted: bool = False
    message: str = ""

    def __post_init__(self):
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise DataError("trajectory times must be strictly increasing")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "Q", "Pi", "E"])
            for row in zip(self.times, self.Q, self.Pi, self.E):
                w.writerow([repr(float(v)) for v in row])

    def write_snapshots(self, directory) -> list[Path]:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for i, S in enumerate(self.snapshots):
            p = out / f"frame_{i:06d}.nlsf"
            write_snapshot(S, p)
            paths.append(p)
        return paths


def sponge_profile(grid: Grid, strength: float, fraction: float = 0.125) -> np.ndarray:
    """Quartic ramp W >= 0 reaching ``strength`` at the box edge."""
    width = fraction * 2 * grid.half_length
    depth = np.abs(grid.x) - (grid.half_length - width)
    return strength * np.clip(depth / width, 0.0, None) ** 4


class Integrator:
    """Owns the mutable state of one run; not shared between threads."""

    def __init__(self, grid: Grid, beta: Nonlinearity, dt: float, sponge: np.ndarray | None = None):
        self.grid, self.beta, self.dt = grid, beta, dt
        k2 = grid.k**2
        self._half = np.exp(-0.5j * k2 * dt)
        self._full = self._half * self._half
        self._damp = None if sponge is None else np.exp(-sponge * dt)
        self._coef = beta.coefficients
        self._workers = thread_cap()

    def _beta(self, s: np.ndarray) -> np.ndarray:
        acc = np.zeros_like(s)
        for c in reversed(self._coef):
            acc = (acc + c) * s
        return acc

    def _potential(self, u: np.ndarray) -> np.ndarray:
        u = u * np.exp(-1j * self.dt * self._beta(u.real**2 + u.imag**2))
        if self._damp is not None:
            u *= self._damp
        return u

    def _kinetic(self, u: np.ndarray, mult: np.ndarray) -> np.ndarray:
        return sfft.ifft(mult * sfft.fft(u, workers=self._workers), workers=self._workers)

    def step(self, u: np.ndarray) -> np.ndarray:
        u = self._kinetic(u, self._half)
        u = self._potential(u)
        return self._kinetic(u, self._half)

    def advance(self, u: np.ndarray, n: int) -> np.ndarray:
        """n Strang steps with adjacent half kinetic steps merged."""
        if n <= 0:
            return np.array(u, dtype=complex, copy=True)
        u = self._kinetic(u, self._half)
        for i in range(n):
            u = self._potential(u)
            u = self._kinetic(u, self._full if i < n - 1 else self._half)
        return u


def step(u: np.ndarray, dt: float, beta: Nonlinearity, grid: Grid) -> np.ndarray:
    """One Strang step; negative dt runs backwards."""
    u = np.asarray(u, dtype=complex)
    if not np.all(np.isfinite(u)):
        raise DataError("input field is not finite")
    return Integrator(grid, beta, dt).step(u)


def free_flow(u: np.ndarray, t: float, grid: Grid) -> np.ndarray:
    """exp(i t Laplacian) u, exact in Fourier space."""
    return np.fft.ifft(np.exp(-1j * grid.k**2 * t) * np.fft.fft(u, axis=-1), axis=-1)


def initial_field(cfg: SimConfig, modes: list[tuple[float, np.ndarray]] | None = None, phi: np.ndarray | None = None) -> SpinorField:
    """Boosted soliton plus seeded internal modes plus an optional packet.

    ``phi`` and ``modes`` are the ground state and normalized modes at
    ``cfg.soliton.omega``; they are computed when omitted.
    """
    grid = cfg.grid
    u = np.zeros(grid.n, dtype=complex)
    if cfg.soliton is not None:
        s = cfg.soliton
        if phi is None:
            from .groundstate import solve_ground_state

            phi = solve_ground_state(cfg.beta, s.omega, grid).phi
        R = np.zeros((2, grid.n), dtype=complex)
        if cfg.mode_amplitudes:
            if modes is None:
                modes = _modes_for(cfg, phi)
            if len(modes) < len(cfg.mode_amplitudes):
                raise DataError(f"requested {len(cfg.mode_amplitudes)} mode amplitudes, found {len(modes)} modes")
            for a, (_, xi) in zip(cfg.mode_amplitudes, modes):
                R += a * xi + np.conj(a) * xi[::-1]
        W = SpinorField(grid, np.stack([phi, phi]).astype(complex) + R)
        u = gauge_boost(W, s.v, s.theta, s.D).u
    if cfg.packet is not None:
        p = cfg.packet
        u = u + p.amplitude * np.exp(-((grid.x - p.center) ** 2) / (2 * p.width**2) + 1j * p.k0 * grid.x)
    return SpinorField.from_scalar(grid, u, 0.0)


def _modes_for(cfg: SimConfig, phi: np.ndarray):
    from .groundstate import ground_state_entry
    from .linearize import assemble
    from .spectrum import discrete_spectrum

    entry = ground_state_entry(cfg.beta, cfg.soliton.omega, cfg.grid, guess=phi)
    return discrete_spectrum(assemble(entry, cfg.beta)).eigenpairs


def iter_frames(cfg: SimConfig, U0: SpinorField, stride: int | None = None) -> Iterator[SpinorField]:
    """Yield immutable copies of the field every ``stride`` steps, starting at t = 0.

    Raises ConvergenceError (carrying the last valid frame as ``.last_frame``)
    if the field stops being finite.
    """
    stride = cfg.sample_stride if stride is None else stride
    grid = cfg.grid
    W = sponge_profile(grid, cfg.sponge_strength, cfg.sponge_fraction) if cfg.sponge else None
    integ = Integrator(grid, cfg.beta, cfg.dt, W)
    u = np.array(U0.u, dtype=complex, copy=True)
    done = 0
    total = cfg.n_steps
    yield SpinorField.from_scalar(grid, u.copy(), 0.0)
    while done < total:
        n = min(stride, total - done)
        new = integ.advance(u, n)
        if not np.all(np.isfinite(new)):
            err = ConvergenceError(f"non-finite field after step {done + n}")
            err.last_frame = SpinorField.from_scalar(grid, u.copy(), done * cfg.dt)
            raise err
        u, done = new, done + n
        yield SpinorField.from_scalar(grid, u.copy(), done * cfg.dt)


def run(cfg: SimConfig, U0: SpinorField | None = None, keep_snapshots: bool = True) -> Trajectory:
    """Integrate ``cfg`` and record conserved quantities every ``sample_stride`` steps."""
    U0 = initial_field(cfg) if U0 is None else U0
    times, Q, Pi, E, snaps = [], [], [], [], []
    snap_every = cfg.snapshot_stride
    last = U0
    aborted, message = False, ""
    try:
        for i, S in enumerate(iter_frames(cfg, U0)):
            last = S
            times.append(S.time)
            Q.append(charge(S))
            Pi.append(float(momentum(S)[0]))
            E.append(energy(S, cfg.beta))
            step_no = i * cfg.sample_stride
            if keep_snapshots and snap_every and step_no % snap_every == 0:
                snaps.append(S)
    except ConvergenceError as exc:
        aborted, message = True, str(exc)
        last = getattr(exc, "last_frame", last)
        log.warning("run aborted: %s", exc)
    return Trajectory(
        times=np.array(times),
        snapshots=snaps,
        Q=np.array(Q),
        Pi=np.array(Pi),
        E=np.array(E),
        final=last,
        aborted=aborted,
        message=message,
    )
