"""Periodic grids, doubled spinor fields and the conserved functionals of NLS.

A state is stored as the pair ``U = (u, conj(u))``.  All pairings are the
bilinear form ``<f|g> = sum_components integral f g dx`` without complex
conjugation.  The momentum convention is ``Pi = Im integral conj(u) u_x``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DataError, SnapshotFormatError, UnsupportedVersionError

SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA2 = np.array([[0, 1j], [-1j, 0]], dtype=complex)
SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)

SNAPSHOT_MAGIC = b"NLSF"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[-L, L)``.

    ``dim == 3`` means a radially reduced grid: functions are even profiles
    ``u(|x|)`` sampled on the same symmetric 1D lattice, and integrals carry the
    ``2 pi x^2`` weight.
    """

    dim: int
    n: int
    half_length: float

    def __post_init__(self):
        if self.dim not in (1, 3):
            raise ValueError(f"dim must be 1 or 3 (radial), got {self.dim}")
        if self.n < 4 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 4, got {self.n}")
        if not self.half_length > 0:
            raise ValueError("half_length must be positive")

    @property
    def radial(self) -> bool:
        return self.dim == 3

    @property
    def h(self) -> float:
        return 2.0 * self.half_length / self.n

    @cached_property
    def x(self) -> np.ndarray:
        return -self.half_length + self.h * np.arange(self.n)

    @cached_property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    @cached_property
    def k_odd(self) -> np.ndarray:
        # Nyquist mode has no consistent odd derivative on an even grid.
        k = self.k.copy()
        k[self.n // 2] = 0.0
        return k

    @cached_property
    def measure(self) -> np.ndarray:
        if self.radial:
            return 2.0 * np.pi * self.x**2 * self.h
        return np.full(self.n, self.h)

    @cached_property
    def reflection(self) -> np.ndarray:
        """Index map j -> index of -x_j."""
        return (-np.arange(self.n)) % self.n

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.dim, self.n * factor, self.half_length)

    def enlarged(self, factor: int = 2) -> "Grid":
        return Grid(self.dim, self.n * factor, self.half_length * factor)


def derivative(u: np.ndarray, grid: Grid, order: int = 1) -> np.ndarray:
    """Spectral derivative of a periodic array along the last axis."""
    k = grid.k_odd if order % 2 else grid.k
    return np.fft.ifft((1j * k) ** order * np.fft.fft(u, axis=-1), axis=-1)


def laplacian(u: np.ndarray, grid: Grid) -> np.ndarray:
    if not grid.radial:
        return np.fft.ifft(-grid.k**2 * np.fft.fft(u, axis=-1), axis=-1)
    # radial: (1/r)(r u)'' with the r -> 0 limit 3 u''(0)
    x = grid.x
    w2 = np.fft.ifft(-grid.k**2 * np.fft.fft(x * u, axis=-1), axis=-1)
    out = np.empty_like(w2)
    nz = x != 0
    out[..., nz] = w2[..., nz] / x[nz]
    u2 = np.fft.ifft(-grid.k**2 * np.fft.fft(u, axis=-1), axis=-1)
    out[..., ~nz] = 3.0 * u2[..., ~nz]
    return out


def integrate(f: np.ndarray, grid: Grid) -> complex:
    return np.sum(f * grid.measure, axis=-1)


def pairing(f: np.ndarray, g: np.ndarray, grid: Grid) -> complex:
    """Bilinear pairing <f|g> of two spinor arrays of shape (2, n)."""
    return complex(np.sum(integrate(f * g, grid)))


def translate(u: np.ndarray, grid: Grid, shift: float) -> np.ndarray:
    """Return u(x - shift) using a Fourier phase (exact for band-limited data)."""
    if shift == 0.0:
        return np.array(u, dtype=complex, copy=True)
    return np.fft.ifft(np.exp(-1j * grid.k * shift) * np.fft.fft(u, axis=-1), axis=-1)


@dataclass(frozen=True)
class SpinorField:
    """Doubled field U = (u, conj u) on a grid; ``time`` is carried for snapshots."""

    grid: Grid
    values: np.ndarray
    time: float = field(default=0.0, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (2, self.grid.n):
            raise DataError(f"spinor values must have shape (2, {self.grid.n}), got {vals.shape}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_scalar(cls, grid: Grid, u, time: float = 0.0) -> "SpinorField":
        u = np.asarray(u, dtype=complex)
        return cls(grid, np.stack([u, np.conj(u)]), time)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpinorField":
        return cls(grid, np.zeros((2, grid.n), dtype=complex))

    @property
    def u(self) -> np.ndarray:
        return self.values[0]

    def reality_defect(self) -> float:
        scale = max(np.max(np.abs(self.values)), 1e-300)
        return float(np.max(np.abs(self.values[1] - np.conj(self.values[0]))) / scale)

    def check(self, tol: float = 1e-13) -> "SpinorField":
        if not np.all(np.isfinite(self.values)):
            raise DataError("field contains non-finite values")
        if np.any(self.values) and self.reality_defect() > tol:
            raise DataError(f"reality constraint violated (defect {self.reality_defect():.2e})")
        return self

    def l2_norm(self) -> float:
        return float(np.sqrt(np.real(np.sum(integrate(np.abs(self.values) ** 2, self.grid)))))

    def __add__(self, other: "SpinorField") -> "SpinorField":
        return SpinorField(self.grid, self.values + other.values, self.time)

    def __sub__(self, other: "SpinorField") -> "SpinorField":
        return SpinorField(self.grid, self.values - other.values, self.time)

    def scaled(self, c: float) -> "SpinorField":
        return SpinorField(self.grid, c * self.values, self.time)


class Nonlinearity:
    """Polynomial nonlinearity beta(s) = sum_j c_j s^j (j >= 1), so beta(0) = 0.

    ``B`` is the primitive with B(0) = 0, and the NLS reads
    ``i u_t = -Laplacian u + beta(|u|^2) u``.
    """

    def __init__(self, coefficients):
        coeffs = [float(c) for c in coefficients]
        while coeffs and coeffs[-1] == 0.0:
            coeffs.pop()
        self.coefficients = tuple(coeffs)
        # poly[i] multiplies s^i
        self._poly = np.polynomial.Polynomial([0.0, *self.coefficients])

    @classmethod
    def zero(cls) -> "Nonlinearity":
        return cls([])

    @classmethod
    def cubic(cls, g: float = -1.0) -> "Nonlinearity":
        return cls([g])

    @classmethod
    def cubic_quintic(cls, g3: float = -1.0, g5: float = -0.1) -> "Nonlinearity":
        return cls([g3, g5])

    @classmethod
    def from_dict(cls, spec: dict) -> "Nonlinearity":
        kind = spec.get("type", "polynomial")
        if kind == "cubic":
            return cls.cubic(spec.get("g", -1.0))
        if kind == "cubic_quintic":
            return cls.cubic_quintic(spec.get("g3", -1.0), spec.get("g5", -0.1))
        if kind == "polynomial":
            return cls(spec["coefficients"])
        if kind == "zero":
            return cls.zero()
        raise ValueError(f"unknown nonlinearity type {kind!r}")

    def to_dict(self) -> dict:
        return {"type": "polynomial", "coefficients": list(self.coefficients)}

    @property
    def degree(self) -> int:
        return len(self.coefficients)

    @property
    def growth_exponent(self) -> int:
        """p with |beta(v^2)| ~ |v|^(p-1) at infinity."""
        return 2 * self.degree + 1 if self.degree else 1

    @property
    def is_zero(self) -> bool:
        return not self.coefficients

    def __call__(self, s):
        return self._poly(s)

    def derivative(self, s, k: int = 1):
        if k == 0:
            return self._poly(s)
        return self._poly.deriv(k)(s) if k <= self.degree else np.zeros_like(np.asarray(s, dtype=float))

    def potential(self, s):
        return self._poly.integ(lbnd=0.0)(s)

    def __repr__(self) -> str:
        return f"Nonlinearity({list(self.coefficients)})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Nonlinearity) and self.coefficients == other.coefficients

    def __hash__(self) -> int:
        return hash(self.coefficients)


@dataclass(frozen=True)
class ConservedTriple:
    Q: float
    Pi: np.ndarray
    E: float


def _checked(U: SpinorField) -> SpinorField:
    if not np.all(np.isfinite(U.values)):
        raise DataError("field contains non-finite values")
    return U


def charge(U: SpinorField) -> float:
    U = _checked(U)
    return float(np.real(integrate(np.abs(U.u) ** 2, U.grid)))


def momentum(U: SpinorField) -> np.ndarray:
    U = _checked(U)
    if U.grid.radial:
        return np.zeros(3)
    ux = derivative(U.u, U.grid)
    return np.array([float(np.imag(integrate(np.conj(U.u) * ux, U.grid)))])


def kinetic_energy(U: SpinorField) -> float:
    U = _checked(U)
    ux = derivative(U.u, U.grid)
    return float(np.real(integrate(np.abs(ux) ** 2, U.grid)))


def potential_energy(U: SpinorField, beta: Nonlinearity) -> float:
    U = _checked(U)
    return float(np.real(integrate(beta.potential(np.abs(U.u) ** 2), U.grid)))


def energy(U: SpinorField, beta: Nonlinearity) -> float:
    return kinetic_energy(U) + potential_energy(U, beta)


def conserved(U: SpinorField, beta: Nonlinearity) -> ConservedTriple:
    return ConservedTriple(charge(U), momentum(U), energy(U, beta))


def gauge_boost(U: SpinorField, v: float = 0.0, theta: float = 0.0, D: float = 0.0) -> SpinorField:
    """Return exp(i sigma3 (v (x - D)/2 + theta)) U(x - D)."""
    U = _checked(U)
    grid = U.grid
    if grid.radial:
        raise ValueError("gauge_boost acts on 1D fields only")
    v, D = float(np.squeeze(v)), float(np.squeeze(D))
    u = translate(U.u, grid, D) * np.exp(1j * (0.5 * v * (grid.x - D) + theta))
    return SpinorField.from_scalar(grid, u, U.time)


def inverse_gauge_boost(U: SpinorField, v: float = 0.0, theta: float = 0.0, D: float = 0.0) -> SpinorField:
    """Exact inverse of :func:`gauge_boost` with the same parameters."""
    v, D = float(np.squeeze(v)), float(np.squeeze(D))
    return gauge_boost(U, -v, -theta + 0.5 * v * D, -D)


def sigma_norm(U: SpinorField, ell: int) -> float:
    """Weighted Sobolev norm (||U||_{H^l}^2 + sum_{a<=l} ||x^a U||^2)^(1/2); l = 0 is L^2."""
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    U = _checked(U)
    grid = U.grid
    if ell == 0:
        return U.l2_norm()
    vals = U.values
    # discrete Parseval: sum |u|^2 h = (h/n) sum |u_hat|^2
    uh = np.fft.fft(vals, axis=-1)
    hl = (grid.h / grid.n) * np.sum((1.0 + grid.k**2) ** ell * np.abs(uh) ** 2)
    moments = sum(np.sum(np.abs(grid.x**a * vals) ** 2) * grid.h for a in range(ell + 1))
    return float(np.sqrt(hl + moments))


def write_snapshot(U: SpinorField, path, time: float | None = None) -> None:
    """Write the NLSF v1 binary snapshot (only the first component is stored)."""
    U = _checked(U)
    grid = U.grid
    if grid.radial:
        raise SnapshotFormatError("snapshots are defined for 1D dynamics grids only")
    t = U.time if time is None else time
    header = struct.pack("<4sII", SNAPSHOT_MAGIC, SNAPSHOT_VERSION, grid.dim)
    header += struct.pack("<Q", grid.n) + struct.pack("<d", grid.half_length) + struct.pack("<d", t)
    payload = np.ascontiguousarray(U.u, dtype="<c16").tobytes()
    Path(path).write_bytes(header + payload)


def read_snapshot(path) -> SpinorField:
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise SnapshotFormatError("truncated header")
    magic, version, dim = struct.unpack_from("<4sII", data, 0)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise UnsupportedVersionError(f"unsupported snapshot version {version}")
    if dim != 1:
        raise SnapshotFormatError(f"unsupported snapshot dimension {dim}")
    off = 12
    if len(data) < off + 8 * dim * 2 + 8:
        raise SnapshotFormatError("truncated header")
    ns = struct.unpack_from(f"<{dim}Q", data, off)
    off += 8 * dim
    lengths = struct.unpack_from(f"<{dim}d", data, off)
    off += 8 * dim
    (t,) = struct.unpack_from("<d", data, off)
    off += 8
    count = int(np.prod(ns))
    if len(data) != off + 16 * count:
        raise SnapshotFormatError(f"payload has {len(data) - off} bytes, expected {16 * count}")
    u = np.frombuffer(data, dtype="<c16", count=count, offset=off).astype(complex)
    return SpinorField.from_scalar(Grid(1, ns[0], lengths[0]), u, t)
