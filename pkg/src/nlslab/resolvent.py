"""Resolvents of H, the outgoing limiting resolvent, and the homological equation.

The limiting resolvent R+(L) = (H - L - i0)^{-1} for L > omega is computed on an
enlarged periodic grid with a long quartic complex absorbing layer, along an
epsilon ladder {4, 2, 1} eps0 that is Richardson-extrapolated to eps -> 0+.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ContractViolation, ConvergenceError, EdgeProximityError
from .field import Grid
from .linearize import LinearizedOperator, ShiftedSolver, _values, apply_pc
from .parallel import ordered_map


def weighted_norm(X: np.ndarray, grid: Grid, S: float = 2.0) -> float:
    """L^{2,-S} norm: || <x>^{-S} X ||_{L^2}."""
    w = (1.0 + grid.x**2) ** (-S / 2.0)
    return float(np.sqrt(np.sum(np.abs(w * X) ** 2) * grid.h))


def l2(X: np.ndarray, grid: Grid) -> float:
    return float(np.sqrt(np.sum(np.abs(X) ** 2) * grid.h))


# ---------------------------------------------------------------- resolvent


def free_inverse(omega: float, grid: Grid, z: complex):
    """(sigma3 (k^2 + omega) - z)^{-1} as a Fourier multiplier on (2, n) arrays."""
    s = grid.k**2 + omega
    top = 1.0 / (s - z)
    bot = 1.0 / (-s - z)

    def apply(X):
        Xh = np.fft.fft(X, axis=-1)
        return np.fft.ifft(np.stack([top * Xh[0], bot * Xh[1]]), axis=-1)

    return apply


def resolvent_apply(
    H: LinearizedOperator, z: complex, rhs, tol: float = 1e-10, maxiter: int = 40, spec=None
) -> np.ndarray:
    """x = (H - z)^{-1} rhs by GMRES preconditioned with the free resolvent.

    With `spec` (the discrete spectrum of H) the solve is restricted to the
    continuous subspace: rhs is projected and (H - z) P_c + (1 - P_c) is
    inverted, which stays regular when z is an eigenvalue or zero.
    """
    rhs = _values(rhs)
    if spec is not None:
        rhs = apply_pc(H, spec, rhs)
    if not np.any(rhs):
        return np.zeros_like(rhs)
    n = H.grid.n
    z = complex(z)
    P = free_inverse(H.omega, H.grid, z)

    def mv(v):
        X = v.reshape(2, n)
        if spec is None:
            return (H.apply(X) - z * X).ravel()
        P = apply_pc(H, spec, X)
        return (H.apply(P) - z * P + (X - P)).ravel()

    A = spla.LinearOperator((2 * n, 2 * n), matvec=mv, dtype=complex)
    M = spla.LinearOperator((2 * n, 2 * n), matvec=lambda v: P(v.reshape(2, n)).ravel(), dtype=complex)
    b = rhs.ravel()
    x0 = M.matvec(b)
    x, info = spla.gmres(A, b, x0=x0, M=M, rtol=tol * 0.5, atol=0.0, restart=80, maxiter=maxiter)
    x = x.reshape(2, n)
    res = np.linalg.norm(mv(x.ravel()) - b) / np.linalg.norm(b)
    if res > tol:
        # one round of iterative refinement on the true residual
        r = b - mv(x.ravel())
        dx = resolvent_apply(H, z, r.reshape(2, n), tol=0.5, maxiter=maxiter, spec=spec) if res < 1 else 0
        x = x + dx
        res = np.linalg.norm(mv(x.ravel()) - b) / np.linalg.norm(b)
    if res > tol:
        raise ConvergenceError(f"resolvent solve stagnated at relative residual {res:.2e} (z={z})")
    if spec is not None:
        # drop the O(discretization) leak out of the continuous subspace
        x = apply_pc(H, spec, x)
    return x


# ------------------------------------------------------- limiting resolvent


def embed(H: LinearizedOperator, factor: int) -> tuple[LinearizedOperator, int]:
    """Same operator on a grid `factor` times larger with identical spacing."""
    g = H.grid
    big = Grid(g.dim, g.n * factor, g.half_length * factor)
    i0 = (factor - 1) * g.n // 2

    def pad(a):
        out = np.zeros(big.n, dtype=np.asarray(a).dtype)
        out[i0 : i0 + g.n] = a
        return out

    Hb = LinearizedOperator(
        omega=H.omega,
        grid=big,
        a=pad(H.a),
        b=pad(H.b),
        phi=None if H.phi is None else pad(H.phi),
        dphi=None if H.dphi is None else pad(H.dphi),
        beta=H.beta,
        q=H.q,
        q_prime=H.q_prime,
    )
    return Hb, i0


def absorbing_layer(grid: Grid, strength: float, width_fraction: float = 0.125) -> np.ndarray:
    """Quartic ramp on the outer `width_fraction` of [-L, L)."""
    L = grid.half_length
    width = width_fraction * L
    s = np.clip((np.abs(grid.x) - (L - width)) / width, 0.0, None)
    return strength * s**4


@dataclass
class LimitingResult:
    value: np.ndarray
    uncertainty: float
    ladder: list
    eps0: float
    domain_factor: int
    big_value: np.ndarray = field(repr=False)
    big_grid: Grid = field(repr=False)
    offset: int = 0
    distances: list = field(default_factory=list)
    cap_fraction: float = 0.35

    @property
    def monotone(self) -> bool:
        d = self.distances
        return all(d[i] <= d[i + 1] * (1 + 1e-12) for i in range(len(d) - 1))


def default_eps0(H: LinearizedOperator, Lam: float, factor: int) -> float:
    k = math.sqrt(max(Lam - H.omega, 1e-12))
    return 0.01 * 2.0 * k / (factor * H.grid.half_length)


def limiting_resolvent(
    H: LinearizedOperator,
    Lam: float,
    rhs,
    S: float = 2.0,
    eps0: float | None = None,
    factor: int = 4,
    cap_strength: float = 10.0,
    cap_fraction: float = 0.35,
    rel_tol: float = 1e-6,
    max_enlargements: int = 1,
    edge_margin: float = 1e-3,
) -> LimitingResult:
    """(H - Lam - i0)^{-1} rhs with the outgoing radiation condition, Lam > omega."""
    rhs = _values(rhs)
    om = H.omega
    if Lam - om < edge_margin * om:
        raise EdgeProximityError(f"Lambda={Lam} is within {edge_margin * om:.1e} of the threshold {om}")
    g = H.grid
    if not np.any(rhs):
        z = np.zeros_like(rhs)
        return LimitingResult(z, 0.0, [z, z, z], 0.0, factor, z, g)
    last_exc = None
    for attempt in range(max_enlargements + 1):
        fac = factor * 2**attempt
        Hb, i0 = embed(H, fac)
        big = Hb.grid
        k = math.sqrt(Lam - om)
        W = absorbing_layer(big, cap_strength, cap_fraction)
        e0 = eps0 if eps0 is not None else default_eps0(H, Lam, fac)
        rb = np.zeros((2, big.n), dtype=complex)
        rb[:, i0 : i0 + g.n] = rhs

        def solve(eps):
            solver = ShiftedSolver(Hb, Lam + 1j * eps, absorb=W)
            x = solver.solve(rb, rtol=1e-12, maxiter=80)
            if solver.last_residual > 1e-9:
                raise ConvergenceError(f"absorbing solve residual {solver.last_residual:.1e}")
            return x

        xs = ordered_map(solve, [4 * e0, 2 * e0, e0])
        x4, x2, x1 = xs
        x0 = (8 * x1 - 6 * x2 + x4) / 3.0
        x_first = 2 * x1 - x2
        cut = slice(i0, i0 + g.n)
        nrm = max(weighted_norm(x0[:, cut], g, S), 1e-300)
        unc = weighted_norm((x0 - x_first)[:, cut], g, S)
        dists = [weighted_norm((xi - x0)[:, cut], g, S) for xi in (x1, x2, x4)]
        res = LimitingResult(
            value=x0[:, cut].copy(),
            uncertainty=unc,
            ladder=[x[:, cut].copy() for x in (x4, x2, x1)],
            eps0=e0,
            domain_factor=fac,
            big_value=x0,
            big_grid=big,
            offset=i0,
            distances=dists,
            cap_fraction=cap_fraction,
        )
        if unc <= rel_tol * nrm and res.monotone:
            return res
        last_exc = res
    raise ConvergenceError(
        f"epsilon ladder did not converge (relative uncertainty "
        f"{last_exc.uncertainty / max(weighted_norm(last_exc.value, g, S), 1e-300):.2e})"
    )


def far_field_amplitudes(res: LimitingResult, omega: float, Lam: float) -> tuple[complex, complex]:
    """Outgoing amplitudes a+- of the upper component, x1 ~ a+- exp(+-i k x) as x -> +-inf.

    Read off between the original domain and the absorbing layer of the
    enlarged grid, where the potential has decayed.
    """
    big = res.big_grid
    x = big.x
    L = big.half_length
    k = math.sqrt(Lam - omega)
    u = res.big_value[0]
    inner, outer = 1.0 / res.domain_factor, 1.0 - res.cap_fraction
    a, b = inner + 0.2 * (outer - inner), outer - 0.1 * (outer - inner)
    right = (x > a * L) & (x < b * L)
    left = (x < -a * L) & (x > -b * L)
    a_plus = complex(np.mean(u[right] * np.exp(-1j * k * x[right])))
    a_minus = complex(np.mean(u[left] * np.exp(1j * k * x[left])))
    return a_plus, a_minus


# ------------------------------------------------------------- normal form


class MonomialClass(enum.Enum):
    Z0 = "NormalForm-Z0"
    Z1 = "NormalForm-Z1"
    REMOVABLE = "Removable"


@dataclass(frozen=True)
class MonomialKey:
    mu: tuple
    nu: tuple
    f_degree: int = 0

    def __post_init__(self):
        mu, nu = tuple(int(a) for a in self.mu), tuple(int(a) for a in self.nu)
        if len(mu) != len(nu):
            raise ValueError("mu and nu must have the same length")
        if any(a < 0 for a in mu + nu):
            raise ValueError("multi-indices must be nonnegative")
        if sum(mu) + sum(nu) < 1:
            raise ValueError("|mu| + |nu| must be >= 1")
        if self.f_degree not in (0, 1):
            raise ValueError("f_degree must be 0 or 1")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "nu", nu)

    def frequency(self, lam) -> float:
        """lambda . (mu - nu)."""
        return float(np.dot(np.asarray(lam, dtype=float), np.subtract(self.mu, self.nu)))


def classify_monomial(key: MonomialKey, lam, omega0: float, tol: float = 1e-12) -> MonomialClass:
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("eigenvalues must be positive")
    s = key.frequency(lam)
    if key.f_degree == 0:
        return MonomialClass.Z0 if abs(s) <= tol else MonomialClass.REMOVABLE
    return MonomialClass.Z1 if abs(s) > omega0 else MonomialClass.REMOVABLE


def enumerate_keys(m: int, max_degree: int):
    """All keys with 1 <= |mu| + |nu| <= max_degree and f_degree in {0, 1}."""
    for total in range(1, max_degree + 1):
        for combo in itertools.product(range(total + 1), repeat=2 * m):
            if sum(combo) != total:
                continue
            for fd in (0, 1):
                yield MonomialKey(combo[:m], combo[m:], fd)


@dataclass
class HomologicalSolution:
    b: dict = field(default_factory=dict)
    B: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)


def solve_homological(
    lam,
    k_coeffs: dict,
    K_coeffs: dict,
    H: LinearizedOperator,
    edge_margin: float = 1e-3,
    tol: float = 1e-10,
    spec=None,
) -> HomologicalSolution:
    """b = i k / (lambda.(mu-nu)),  B = -i R_H(lambda.(mu-nu)) K for removable keys.

    Pass `spec` whenever some lambda.(mu-nu) is an eigenvalue of H (zero or +-lambda_j);
    the field equation is then solved on the continuous subspace.
    """
    lam = np.asarray(lam, dtype=float)
    om = H.omega
    sol = HomologicalSolution()
    for key, k in k_coeffs.items():
        if key.f_degree != 0:
            raise ContractViolation(f"{key} listed among scalar coefficients")
        if classify_monomial(key, lam, om) is not MonomialClass.REMOVABLE:
            raise ContractViolation(f"normal-form key {key} cannot be removed")
        sol.b[key] = 1j * complex(k) / key.frequency(lam)

    def one(item):
        key, K = item
        if key.f_degree != 1:
            raise ContractViolation(f"{key} listed among field coefficients")
        s = key.frequency(lam)
        if abs(abs(s) - om) < edge_margin * om:
            raise EdgeProximityError(f"{key}: |lambda.(mu-nu)| = {abs(s):.6g} is at the edge omega={om}")
        if classify_monomial(key, lam, om) is not MonomialClass.REMOVABLE:
            raise ContractViolation(f"normal-form key {key} cannot be removed")
        K = _values(K)
        if not np.any(K):
            return key, np.zeros_like(K), 0.0
        if spec is not None:
            K = apply_pc(H, spec, K)
        B = -1j * resolvent_apply(H, s, K, tol=tol, spec=spec)
        r = np.linalg.norm(H.apply(B) - s * B + 1j * K) / np.linalg.norm(K)
        return key, B, float(r)

    for key, B, r in ordered_map(one, list(K_coeffs.items())):
        sol.B[key] = B
        sol.residuals[key] = r
    return sol
