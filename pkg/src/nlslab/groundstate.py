"""Ground states phi_omega of the stationary NLS and the branch functions q, e, d.

The stationary equation is the critical-point equation of E + omega Q::

    -phi'' + omega phi + beta(phi^2) phi = 0,

so that exp(i omega t) phi solves ``i u_t = -u_xx + beta(|u|^2) u``.  With
``beta(s) = -s`` the solution at omega = 1 is sqrt(2) sech(x).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla
from numpy.polynomial import chebyshev as cheb

from .errors import BranchNotFoundError, ConvergenceError
from .field import Grid, Nonlinearity, SpinorField, derivative, energy, charge
from .parallel import ordered_map

log = logging.getLogger(__name__)

FD_REL_STEP = 1e-4


@dataclass
class GroundState:
    beta: Nonlinearity
    omega: float
    grid: Grid
    phi: np.ndarray
    residual_history: list = field(default_factory=list)
    dphi: np.ndarray | None = None
    q_prime: float | None = None
    d_prime: float | None = None

    @property
    def spinor(self) -> np.ndarray:
        return np.stack([self.phi, self.phi]).astype(complex)

    @property
    def field(self) -> SpinorField:
        return SpinorField.from_scalar(self.grid, self.phi)

    @property
    def q(self) -> float:
        return charge(self.field)

    @property
    def e(self) -> float:
        return energy(self.field, self.beta)

    @property
    def d(self) -> float:
        return self.e + self.omega * self.q

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")


def stationary_residual(phi: np.ndarray, omega: float, beta: Nonlinearity, grid: Grid) -> np.ndarray:
    """-Delta phi + omega phi + beta(phi^2) phi (the gradient of E + omega Q, halved)."""
    from .field import laplacian

    phi = np.asarray(phi, dtype=float)
    return np.real(-laplacian(phi, grid)) + omega * phi + beta(phi**2) * phi


class _Problem:
    """Newton problem on a symmetric 1D lattice.

    1D: unknown is phi itself, restricted to even functions.
    Radial 3D: unknown is w = r phi, restricted to odd functions, so that
    -Delta phi = -(w'')/r and the 1D Laplacian can be used verbatim.
    """

    def __init__(self, beta: Nonlinearity, omega: float, grid: Grid):
        self.beta, self.omega, self.grid = beta, omega, grid
        self.k2 = grid.k**2
        self.refl = grid.reflection
        self.sign = -1.0 if grid.radial else 1.0
        x = grid.x
        self._x = x
        self._nz = x != 0

    def symmetrize(self, v):
        return 0.5 * (v + self.sign * v[self.refl])

    def density(self, w):
        """phi^2 as a function of the unknown."""
        if not self.grid.radial:
            return w**2
        s = np.empty_like(w)
        s[self._nz] = (w[self._nz] / self._x[self._nz]) ** 2
        w1 = np.real(derivative(w, self.grid))
        s[~self._nz] = w1[~self._nz] ** 2
        return s

    def to_phi(self, w):
        if not self.grid.radial:
            return w.copy()
        phi = np.empty_like(w)
        phi[self._nz] = w[self._nz] / self._x[self._nz]
        phi[~self._nz] = np.real(derivative(w, self.grid))[~self._nz]
        return phi

    def from_phi(self, phi):
        return phi.copy() if not self.grid.radial else self._x * phi

    def d2(self, w):
        return np.real(np.fft.ifft(-self.k2 * np.fft.fft(w)))

    def residual(self, w):
        s = self.density(w)
        return -self.d2(w) + self.omega * w + self.beta(s) * w

    def jacobian_diag(self, w):
        s = self.density(w)
        return self.omega + self.beta(s) + 2.0 * self.beta.derivative(s) * s

    def solve_linear(self, w, rhs, rtol):
        n = w.size
        diag = self.jacobian_diag(w) - self.omega
        om = self.omega

        def mv(v):
            v = np.real(v)
            return -self.d2(v) + om * v + diag * v

        def prec(v):
            return np.real(np.fft.ifft(np.fft.fft(np.real(v)) / (self.k2 + om)))

        A = spla.LinearOperator((n, n), matvec=mv, dtype=float)
        M = spla.LinearOperator((n, n), matvec=prec, dtype=float)
        sol, info = spla.gmres(A, rhs, M=M, rtol=rtol, atol=0.0, restart=200, maxiter=20)
        if info < 0:
            raise ConvergenceError(f"inner GMRES breakdown (info={info})")
        return self.symmetrize(sol)

    def norm(self, v):
        return float(np.sqrt(np.sum(v**2) * self.grid.h))


def initial_guess(beta: Nonlinearity, omega: float, grid: Grid) -> np.ndarray:
    x = grid.x
    if grid.radial:
        return 2.0 * np.sqrt(2.0 * omega) * np.exp(-omega * x**2)
    return np.sqrt(2.0 * omega) / np.cosh(np.clip(np.sqrt(omega) * x, -700, 700))


def solve_ground_state(
    beta: Nonlinearity,
    omega: float,
    grid: Grid,
    tol: float = 1e-11,
    guess: np.ndarray | None = None,
    max_iter: int = 60,
) -> GroundState:
    """Newton iteration with spectral Laplacian and backtracking line search.

    Converged when ||residual||_{L2} <= tol ||phi||_{L2}.  ``guess`` is a phi
    profile (used for continuation along the branch).
    """
    if tol < 1e-12:
        raise ValueError("tol must be >= 1e-12")
    if not omega > 0:
        raise BranchNotFoundError(f"no decaying ground state at omega={omega} <= 0")
    prob = _Problem(beta, omega, grid)
    phi0 = initial_guess(beta, omega, grid) if guess is None else np.asarray(guess, dtype=float)
    w = prob.symmetrize(prob.from_phi(phi0))
    F = prob.residual(w)
    res = prob.norm(F) / max(prob.norm(w), 1e-300)
    history = [res]
    stalls = 0
    for it in range(max_iter):
        if res <= tol:
            break
        delta = prob.solve_linear(w, -F, rtol=min(1e-3, max(1e-14, 0.1 * res)))
        step, best = 1.0, None
        fnorm = prob.norm(F)
        for _ in range(12):
            w_try = w + step * delta
            F_try = prob.residual(w_try)
            if prob.norm(F_try) < fnorm or step < 1e-3:
                best = (w_try, F_try)
                break
            step *= 0.5
        if best is None:
            best = (w + step * delta, prob.residual(w + step * delta))
        w, F = best
        new_res = prob.norm(F) / max(prob.norm(w), 1e-300)
        history.append(new_res)
        if prob.norm(w) < 1e-8 * np.sqrt(grid.half_length):
            raise BranchNotFoundError(f"iteration collapsed to the zero solution at omega={omega}")
        # roundoff floor: tiny Newton steps that no longer reduce the residual
        if new_res >= 0.5 * res and prob.norm(delta) <= 1e-12 * prob.norm(w):
            stalls += 1
            if stalls >= 2:
                res = new_res
                break
        res = new_res
    phi = prob.to_phi(w)
    if prob.norm(w) < 1e-8 * np.sqrt(grid.half_length) or np.max(np.abs(phi)) < 1e-10:
        raise BranchNotFoundError(f"iteration collapsed to the zero solution at omega={omega}")
    if res > tol:
        raise ConvergenceError(f"Newton did not converge at omega={omega}: residual {res:.3e} > {tol:.1e}")
    if phi[grid.n // 2] < 0:
        phi = -phi
    if np.any(phi < -1e-6 * np.max(phi)):
        raise BranchNotFoundError(f"converged to a sign-changing state at omega={omega}")
    return GroundState(beta, float(omega), grid, phi, history)


def ground_state_entry(
    beta: Nonlinearity,
    omega: float,
    grid: Grid,
    tol: float = 1e-11,
    guess: np.ndarray | None = None,
    rel_step: float = FD_REL_STEP,
) -> GroundState:
    """Ground state plus centered omega-derivatives (dphi, q', d') from neighbors."""
    gs = solve_ground_state(beta, omega, grid, tol=tol, guess=guess)
    dw = rel_step * omega
    lo = solve_ground_state(beta, omega - dw, grid, tol=tol, guess=gs.phi)
    hi = solve_ground_state(beta, omega + dw, grid, tol=tol, guess=gs.phi)
    gs.dphi = (hi.phi - lo.phi) / (2 * dw)
    gs.q_prime = (hi.q - lo.q) / (2 * dw)
    gs.d_prime = (hi.d - lo.d) / (2 * dw)
    return gs


@dataclass
class SolitonFamily:
    beta: Nonlinearity
    grid: Grid
    entries: list

    @property
    def omegas(self) -> np.ndarray:
        return np.array([e.omega for e in self.entries])

    @property
    def q(self) -> np.ndarray:
        return np.array([e.q for e in self.entries])

    @property
    def e(self) -> np.ndarray:
        return np.array([e.e for e in self.entries])

    @property
    def d(self) -> np.ndarray:
        return np.array([e.d for e in self.entries])

    @property
    def q_prime(self) -> np.ndarray:
        return np.array([e.q_prime for e in self.entries])

    @property
    def d_prime(self) -> np.ndarray:
        return np.array([e.d_prime for e in self.entries])

    @property
    def min_q_prime(self) -> float:
        return float(np.min(self.q_prime))

    @property
    def h4(self) -> bool:
        return self.min_q_prime > 0

    def entry(self, omega: float) -> GroundState:
        i = int(np.argmin(np.abs(self.omegas - omega)))
        return self.entries[i]

    def rows(self, lplus: bool = False) -> list[dict]:
        out = []
        for e in self.entries:
            row = {"omega": e.omega, "q": e.q, "e": e.e, "d": e.d, "q_prime": e.q_prime}
            row["lplus_negative_count"] = check_lplus(e).n_negative if lplus else None
            out.append(row)
        return out


def family_scan(
    beta: Nonlinearity,
    omega_lo: float,
    omega_hi: float,
    n_samples: int,
    grid: Grid,
    tol: float = 1e-11,
) -> SolitonFamily:
    """Sample the branch on a uniform omega grid.

    A serial continuation pass seeds every sample; the derivative neighbors are
    then solved independently (optionally on a thread pool).
    """
    if not 0 < omega_lo < omega_hi:
        raise ValueError("need 0 < omega_lo < omega_hi")
    omegas = np.linspace(omega_lo, omega_hi, n_samples)
    seeds, guess = [], None
    for om in omegas:
        if guess is not None:
            # phi_omega ~ sqrt(omega) profile(sqrt(omega) x): rescale the previous state
            prev = seeds[-1]
            guess = np.sqrt(om / prev.omega) * np.interp(
                np.sqrt(om / prev.omega) * grid.x, grid.x, prev.phi
            )
        gs = solve_ground_state(beta, om, grid, tol=tol, guess=guess)
        seeds.append(gs)
        guess = gs.phi
    entries = ordered_map(lambda s: ground_state_entry(beta, s.omega, grid, tol=tol, guess=s.phi), seeds)
    return SolitonFamily(beta, grid, entries)


@dataclass
class LplusReport:
    n_negative: int
    kernel_dim_even_sector: int
    lowest_eigenvalue: float
    eigenvalues: np.ndarray
    kernel_tol: float
    lminus_lowest: float
    lminus_residual: float
    odd_sector_smallest: float | None = None
    odd_kernel_overlap: float | None = None

    @property
    def h5(self) -> bool:
        return self.n_negative == 1 and self.kernel_dim_even_sector == 0


def _sector_basis(n: int, parity: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index pairs (j, n-j) spanning the even (+1) or odd (-1) sector of the reflection."""
    half = n // 2
    if parity > 0:
        idx = np.arange(0, half + 1)
    else:
        idx = np.arange(1, half)
    partner = (-idx) % n
    scale = np.where(idx == partner, 1.0, 1.0 / np.sqrt(2.0))
    return idx, partner, scale


def _sector_matrix(diag: np.ndarray, grid: Grid, parity: int) -> np.ndarray:
    """Dense -d^2/dx^2 + diag restricted to a reflection sector (orthonormal basis)."""
    n = grid.n
    idx, partner, scale = _sector_basis(n, parity)
    B = np.zeros((n, idx.size))
    cols = np.arange(idx.size)
    B[idx, cols] += scale
    B[partner, cols] += parity * scale * (idx != partner)
    LB = np.real(np.fft.ifft(grid.k[:, None] ** 2 * np.fft.fft(B, axis=0), axis=0)) + diag[:, None] * B
    return B.T @ LB


def check_lplus(entry: GroundState, n_eigs: int = 6) -> LplusReport:
    """Count negative eigenvalues of L+ on the even (1D) or radial (3D) sector.

    Also reports the companion L- check (L- phi = 0) and, in 1D, the odd-sector
    zero mode generated by translations.
    """
    grid, beta, om = entry.grid, entry.beta, entry.omega
    phi = entry.phi
    s = phi**2
    lp_diag = om + beta(s) + 2.0 * beta.derivative(s) * s
    lm_diag = om + beta(s)
    # radial sector = odd functions of w = r phi
    main_parity = -1 if grid.radial else 1
    Lp = _sector_matrix(lp_diag, grid, main_parity)
    ev = np.linalg.eigvalsh(Lp)
    radius = float(np.max(np.abs(ev)))
    ktol = 1e-6 * radius
    n_neg = int(np.sum(ev < -ktol))
    n_ker = int(np.sum(np.abs(ev) <= ktol))

    Lm = _sector_matrix(lm_diag, grid, main_parity)
    lm_ev = np.linalg.eigvalsh(Lm)
    w = phi * grid.x if grid.radial else phi
    from .field import laplacian

    lm_phi = np.real(-laplacian(phi, grid)) + lm_diag * phi
    lm_res = float(np.sqrt(np.sum(lm_phi**2 * grid.measure) / np.sum(phi**2 * grid.measure)))
    del w

    odd_small = overlap = None
    if not grid.radial:
        Lodd = _sector_matrix(lp_diag, grid, -1)
        evo, vec = np.linalg.eigh(Lodd)
        i = int(np.argmin(np.abs(evo)))
        odd_small = float(evo[i])
        idx, partner, scale = _sector_basis(grid.n, -1)
        full = np.zeros(grid.n)
        full[idx] += scale * vec[:, i]
        full[partner] -= scale * vec[:, i]
        dphi = np.real(derivative(phi, grid))
        overlap = float(abs(full @ dphi) / (np.linalg.norm(full) * np.linalg.norm(dphi)))
    return LplusReport(
        n_negative=n_neg,
        kernel_dim_even_sector=n_ker,
        lowest_eigenvalue=float(ev[0]),
        eigenvalues=ev[:n_eigs].copy(),
        kernel_tol=ktol,
        lminus_lowest=float(lm_ev[0]),
        lminus_residual=lm_res,
        odd_sector_smallest=odd_small,
        odd_kernel_overlap=overlap,
    )


class GroundStateBranch:
    """Chebyshev interpolant of omega -> phi_omega on a window around omega_center.

    Used wherever phi, d phi/d omega, d^2 phi/d omega^2 are needed at arbitrary
    omega (modulation fits along trajectories).
    """

    def __init__(
        self,
        beta: Nonlinearity,
        grid: Grid,
        omega_center: float,
        half_width: float,
        n_nodes: int = 14,
        tol: float = 1e-11,
    ):
        self.beta, self.grid = beta, grid
        self.center, self.radius = float(omega_center), float(half_width)
        theta = np.pi * (np.arange(n_nodes) + 0.5) / n_nodes
        self.nodes = self.center + self.radius * np.cos(theta)
        order = np.argsort(self.nodes)[::-1]
        phis = [None] * n_nodes
        guess = None
        for i in order:
            gs = solve_ground_state(beta, self.nodes[i], grid, tol=tol, guess=guess)
            phis[i] = gs.phi
            guess = gs.phi
        vals = np.array(phis)
        # first-kind Chebyshev coefficients via the discrete cosine sum
        kk = np.arange(n_nodes)
        T = np.cos(np.outer(kk, theta))
        coef = (2.0 / n_nodes) * T @ vals
        coef[0] *= 0.5
        self._coef = [coef, cheb.chebder(coef, 1), cheb.chebder(coef, 2)]

    @property
    def omega_range(self) -> tuple[float, float]:
        return self.center - self.radius, self.center + self.radius

    def _t(self, omega: float) -> float:
        return (omega - self.center) / self.radius

    def phi(self, omega: float, order: int = 0) -> np.ndarray:
        return cheb.chebval(self._t(omega), self._coef[order]) / self.radius**order

    def q(self, omega: float) -> float:
        p = self.phi(omega)
        return float(np.sum(p**2 * self.grid.measure))

    def q_prime(self, omega: float) -> float:
        return float(2.0 * np.sum(self.phi(omega) * self.phi(omega, 1) * self.grid.measure))

    def entry(self, omega: float) -> GroundState:
        gs = GroundState(self.beta, float(omega), self.grid, self.phi(omega))
        gs.dphi = self.phi(omega, 1)
        gs.q_prime = self.q_prime(omega)
        return gs
