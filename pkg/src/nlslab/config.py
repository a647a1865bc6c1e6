"""Declarative run configuration (YAML or JSON) with sections grid, nonlinearity,
initial_condition, run and analysis.

Example::

    seed: 7
    grid: {dim: 1, n: 1024, half_length: 40}
    nonlinearity: {type: cubic_quintic, g3: -1.0, g5: -0.1}
    initial_condition:
      omega: 3.0
      v: 0.0
      mode_amplitudes: [0.02]
    run: {dt: 1.0e-3, t_final: 100, sponge: true, sample_stride: 100}
    analysis: {omega_range: [2.5, 3.5], omega_count: 11}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .field import Grid, Nonlinearity
from .simulate import PacketSpec, SimConfig, SolitonSpec

SECTIONS = {"seed", "grid", "nonlinearity", "initial_condition", "run", "analysis", "output"}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def _section(raw: dict, name: str, allowed: set[str]) -> dict:
    sec = raw.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    extra = set(sec) - allowed
    if extra:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(extra)}")
    return sec


@dataclass
class AnalysisConfig:
    omega_range: tuple[float, float] = (0.5, 2.0)
    omega_count: int = 7
    branch_half_width: float | None = None
    radiation_stride: int = 10
    tail: float = 0.25
    transient: float = 0.1
    embedded_grids: tuple[tuple[int, float], ...] = ((256, 20.0), (512, 20.0))


@dataclass
class Config:
    grid: Grid
    beta: Nonlinearity
    omega: float = 1.0
    v: float = 0.0
    theta: float = 0.0
    D: float = 0.0
    mode_amplitudes: tuple[complex, ...] = ()
    packet: PacketSpec | None = None
    noise_amplitude: float = 0.0
    noise_width: float = 2.0
    soliton: bool = True
    dt: float = 1e-3
    t_final: float = 10.0
    sponge: bool = False
    sponge_strength: float = 10.0
    sample_stride: int = 100
    snapshot_stride: int = 0
    seed: int = 0
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    output: str | None = None

    def sim_config(self) -> SimConfig:
        return SimConfig(
            grid=self.grid,
            beta=self.beta,
            dt=self.dt,
            t_final=self.t_final,
            soliton=SolitonSpec(self.omega, self.v, self.theta, self.D) if self.soliton else None,
            mode_amplitudes=self.mode_amplitudes,
            packet=self.packet,
            sponge=self.sponge,
            sponge_strength=self.sponge_strength,
            sample_stride=self.sample_stride,
            snapshot_stride=self.snapshot_stride,
        )

    def noise(self) -> np.ndarray | None:
        """Seeded smooth complex perturbation, or None when the amplitude is zero."""
        if not self.noise_amplitude:
            return None
        rng = np.random.default_rng(self.seed)
        g = self.grid
        raw = rng.normal(size=g.n) + 1j * rng.normal(size=g.n)
        # keep wavenumbers below 1/width
        uh = np.fft.fft(raw) * np.exp(-0.5 * (g.k * self.noise_width) ** 2)
        u = np.fft.ifft(uh) * np.exp(-0.5 * (g.x / (4 * self.noise_width)) ** 2)
        return self.noise_amplitude * u / max(np.max(np.abs(u)), 1e-300)


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    return complex(v)


def from_dict(raw: dict) -> Config:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    extra = set(raw) - SECTIONS
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    try:
        gs = _section(raw, "grid", {"dim", "n", "half_length"})
        grid = Grid(int(gs.get("dim", 1)), int(gs.get("n", 1024)), float(gs.get("half_length", 40.0)))
        ns = raw.get("nonlinearity") or {"type": "cubic"}
        beta = Nonlinearity.from_dict(ns)
        ic = _section(raw, "initial_condition", {"omega", "v", "theta", "D", "mode_amplitudes", "packet", "noise", "soliton"})
        packet = None
        if ic.get("packet"):
            p = ic["packet"]
            packet = PacketSpec(float(p["amplitude"]), float(p.get("center", 0.0)), float(p.get("width", 1.0)), float(p.get("k0", 0.0)))
        noise = ic.get("noise") or {}
        rs = _section(raw, "run", {"dt", "t_final", "sponge", "sponge_strength", "sample_stride", "snapshot_stride"})
        an = _section(
            raw,
            "analysis",
            {"omega_range", "omega_count", "branch_half_width", "radiation_stride", "tail", "transient", "embedded_grids"},
        )
        analysis = AnalysisConfig(
            omega_range=tuple(float(w) for w in an.get("omega_range", (0.5, 2.0))),
            omega_count=int(an.get("omega_count", 7)),
            branch_half_width=None if an.get("branch_half_width") is None else float(an["branch_half_width"]),
            radiation_stride=int(an.get("radiation_stride", 10)),
            tail=float(an.get("tail", 0.25)),
            transient=float(an.get("transient", 0.1)),
            embedded_grids=tuple((int(n), float(L)) for n, L in an.get("embedded_grids", ((256, 20.0), (512, 20.0)))),
        )
        cfg = Config(
            grid=grid,
            beta=beta,
            omega=float(ic.get("omega", 1.0)),
            v=float(ic.get("v", 0.0)),
            theta=float(ic.get("theta", 0.0)),
            D=float(ic.get("D", 0.0)),
            mode_amplitudes=tuple(_complex(a) for a in ic.get("mode_amplitudes", ())),
            packet=packet,
            noise_amplitude=float(noise.get("amplitude", 0.0)),
            noise_width=float(noise.get("width", 2.0)),
            soliton=bool(ic.get("soliton", True)),
            dt=float(rs.get("dt", 1e-3)),
            t_final=float(rs.get("t_final", 10.0)),
            sponge=bool(rs.get("sponge", False)),
            sponge_strength=float(rs.get("sponge_strength", 10.0)),
            sample_stride=int(rs.get("sample_stride", 100)),
            snapshot_stride=int(rs.get("snapshot_stride", 0)),
            seed=int(raw.get("seed", 0)),
            analysis=analysis,
            output=raw.get("output"),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.snapshot_stride and cfg.snapshot_stride % cfg.sample_stride:
        raise ConfigError("snapshot_stride must be a multiple of sample_stride")
    lo, hi = cfg.analysis.omega_range
    if not 0 < lo <= hi:
        raise ConfigError("analysis.omega_range must satisfy 0 < lo <= hi")
    return cfg


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return from_dict(raw or {})
