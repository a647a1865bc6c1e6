"""Modulation coordinates (omega, theta, D, v, z, f) of a field near the soliton manifold.

A field is written as U = exp(i sigma3 (v (x - D)/2 + theta)) tau_D (Phi_omega + R)
with R orthogonal to the adjoint generalized kernel.  In scalar form the four
real orthogonality conditions read

    Re <r, phi> = Im <r, d_omega phi> = Re <r, x phi> = Im <r, phi'> = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as cheb

from .errors import ConvergenceError, DataError, DegenerateBranchError
from .field import (
    Grid,
    Nonlinearity,
    SpinorField,
    charge,
    derivative,
    energy,
    gauge_boost,
    momentum,
    translate,
)
from .groundstate import GroundStateBranch
from .linearize import LinearizedOperator, SpectralComponents, assemble, sigma1, spectral_project
from .spectrum import discrete_spectrum, normalize_mode


class SolitonBranch:
    """Ground states and internal modes as smooth functions of omega on a window.

    Both phi_omega and each normalized mode xi_j(omega) are Chebyshev
    interpolants, so derivatives in omega are available to interpolation accuracy.
    """

    def __init__(
        self,
        beta: Nonlinearity,
        grid: Grid,
        omega_center: float,
        half_width: float | None = None,
        n_nodes: int = 14,
        n_mode_nodes: int = 8,
        with_modes: bool = True,
    ):
        if grid.radial:
            raise ValueError("modulation coordinates are implemented for dim=1")
        self.beta, self.grid = beta, grid
        hw = 0.1 * omega_center if half_width is None else half_width
        self.gs = GroundStateBranch(beta, grid, omega_center, hw, n_nodes=n_nodes)
        self.center, self.radius = self.gs.center, self.gs.radius
        self._ops: dict[float, LinearizedOperator] = {}
        self._lam_coef: list[np.ndarray] = []
        self._xi_coef: list[np.ndarray] = []
        if with_modes:
            self._build_modes(n_mode_nodes)

    @property
    def m(self) -> int:
        return len(self._lam_coef)

    @property
    def omega_range(self) -> tuple[float, float]:
        return self.gs.omega_range

    def _build_modes(self, n_nodes: int) -> None:
        theta = np.pi * (np.arange(n_nodes) + 0.5) / n_nodes
        nodes = self.center + self.radius * np.cos(theta)
        lams, xis = [], []
        window = None
        for om in nodes:
            H = self.operator(om)
            spec = discrete_spectrum(H, search_window=window, shifts=4 if window is None else 1)
            if window is None and spec.m == 0:
                return
            if window is not None and spec.m != len(lams[0]):
                raise ConvergenceError("internal-mode count changes across the branch window")
            lams.append([lam for lam, _ in spec.eigenpairs])
            xis.append([np.real(xi) for _, xi in spec.eigenpairs])
            if window is None:
                lo = max(0.5 * min(lams[0]), 1e-3 * om)
                window = (lo, min(1.5 * max(lams[0]), float(nodes.min())))
        lams = np.array(lams)  # (nodes, m)
        xis = np.array(xis)  # (nodes, m, 2, n)
        T = np.cos(np.outer(np.arange(n_nodes), theta))
        for j in range(lams.shape[1]):
            cl = (2.0 / n_nodes) * T @ lams[:, j]
            cx = (2.0 / n_nodes) * np.tensordot(T, xis[:, j], axes=(1, 0))
            cl[0] *= 0.5
            cx[0] *= 0.5
            self._lam_coef.append(cl)
            self._xi_coef.append(cx)

    def _t(self, omega: float) -> float:
        return (omega - self.center) / self.radius

    def contains(self, omega: float) -> bool:
        lo, hi = self.omega_range
        return lo <= omega <= hi

    def phi(self, omega: float, order: int = 0) -> np.ndarray:
        return self.gs.phi(omega, order)

    def q(self, omega: float) -> float:
        return self.gs.q(omega)

    def q_prime(self, omega: float) -> float:
        return self.gs.q_prime(omega)

    def operator(self, omega: float) -> LinearizedOperator:
        key = float(omega)
        H = self._ops.get(key)
        if H is None:
            H = assemble(self.gs.entry(key), self.beta)
            if len(self._ops) > 16:
                self._ops.clear()
            self._ops[key] = H
        return H

    def modes(self, omega: float) -> list[tuple[float, np.ndarray]]:
        t = self._t(omega)
        out = []
        for cl, cx in zip(self._lam_coef, self._xi_coef):
            lam = float(cheb.chebval(t, cl))
            xi = cheb.chebval(t, cx).astype(complex)
            out.append((lam, normalize_mode(lam, xi, self.grid)))
        return out

    def eigenvalues(self, omega: float) -> np.ndarray:
        t = self._t(omega)
        return np.array([float(cheb.chebval(t, cl)) for cl in self._lam_coef])


@dataclass
class ModulationState:
    omega: float
    theta: float
    D: float
    v: float
    z: np.ndarray
    f: np.ndarray
    R: np.ndarray
    rho: tuple[float, float]
    residual: float = 0.0
    iterations: int = 0
    components: SpectralComponents | None = field(default=None, repr=False)

    @property
    def params(self) -> tuple[float, float, float, float]:
        return (self.omega, self.theta, self.D, self.v)

    def reconstruct(self, branch: SolitonBranch) -> SpinorField:
        """Field with these coordinates: gauge-boosted Phi + R."""
        W = SpinorField(branch.grid, np.stack([branch.phi(self.omega)] * 2) + self.R)
        return gauge_boost(W, self.v, self.theta, self.D)


def _frame_field(u: np.ndarray, ux: np.ndarray, grid: Grid, theta: float, D: float, v: float):
    """w(x) = exp(-i(v x/2 + theta)) u(x + D) and its D-derivative."""
    ph = np.exp(-1j * (0.5 * v * grid.x + theta))
    w = translate(u, grid, -D) * ph
    wD = translate(ux, grid, -D) * ph
    return w, wD


def _secular(r, phi, dphi, phix, x, h):
    return np.array(
        [
            np.real(np.sum(r * phi)) * h,
            np.imag(np.sum(r * dphi)) * h,
            np.real(np.sum(x * r * phi)) * h,
            np.imag(np.sum(r * phix)) * h,
        ]
    )


def wrap_phase(theta: float) -> float:
    return float((theta + math.pi) % (2 * math.pi) - math.pi)


def fit_modulation(
    U: SpinorField,
    guess: tuple[float, float, float, float] | ModulationState,
    branch: SolitonBranch,
    fit_tol: float = 1e-10,
    max_iter: int = 50,
    decompose: bool = True,
) -> ModulationState:
    """Newton solve of the four orthogonality conditions for (omega, theta, D, v)."""
    if isinstance(guess, ModulationState):
        guess = guess.params
    grid = branch.grid
    if U.grid != grid:
        raise DataError("field grid differs from the branch grid")
    u = U.u
    ux = derivative(u, grid)
    x, h = grid.x, grid.h
    om, th, D, v = (float(g) for g in guess)

    def evaluate(om, th, D, v):
        if not branch.contains(om):
            raise ConvergenceError(f"omega={om:.6g} left the branch window {branch.omega_range}")
        phi = branch.phi(om)
        w, wD = _frame_field(u, ux, grid, th, D, v)
        return phi, w, wD, w - phi

    q = branch.q(om)
    res_hist = []
    for it in range(max_iter + 1):
        phi, w, wD, r = evaluate(om, th, D, v)
        dphi = branch.phi(om, 1)
        phix = np.real(derivative(phi, grid))
        F = _secular(r, phi, dphi, phix, x, h)
        res = float(np.max(np.abs(F)) / q)
        res_hist.append(res)
        if res <= fit_tol:
            break
        if it == max_iter:
            raise ConvergenceError(f"modulation fit did not converge (residual {res:.2e})")
        if np.sqrt(np.sum(np.abs(r) ** 2) * h) > np.sqrt(q):
            raise ConvergenceError("field is too far from the soliton manifold")
        d2phi = branch.phi(om, 2)
        dphix = np.real(derivative(dphi, grid))
        cols = [
            -dphi,  # d/d omega of r
            -1j * w,  # theta
            wD + 0.5j * v * w,  # D
            -0.5j * x * w,  # v
        ]
        J = np.column_stack([_secular(c, phi, dphi, phix, x, h) for c in cols])
        J[:, 0] += _secular(r, dphi, d2phi, dphix, x, h)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise DegenerateBranchError("singular modulation Jacobian") from exc
        lo, hi = branch.omega_range
        lam = 1.0
        for _ in range(8):
            om_t = min(max(om + lam * step[0], lo + 1e-3 * (hi - lo)), hi - 1e-3 * (hi - lo))
            trial = (om_t, th + lam * step[1], D + lam * step[2], v + lam * step[3])
            phi_t, _, _, r_t = evaluate(*trial)
            F_t = _secular(r_t, phi_t, branch.phi(trial[0], 1), np.real(derivative(phi_t, grid)), x, h)
            if np.max(np.abs(F_t)) <= np.max(np.abs(F)) or lam < 0.01:
                break
            lam *= 0.5
        om, th, D, v = trial
        q = branch.q(om)
    phi, w, wD, r = evaluate(om, th, D, v)
    R = np.stack([r, np.conj(r)])
    if decompose:
        H = branch.operator(om)
        comps = spectral_project(H, branch.modes(om), R)
        z, f = comps.z, comps.f
    else:
        comps, z, f = None, np.zeros(0, complex), R.copy()
    F_field = SpinorField(grid, f)
    return ModulationState(
        omega=om,
        theta=wrap_phase(th),
        D=D,
        v=v,
        z=np.asarray(z, dtype=complex),
        f=f,
        R=R,
        rho=(charge(F_field), float(momentum(F_field)[0])),
        residual=res_hist[-1],
        iterations=len(res_hist) - 1,
        components=comps,
    )


def remainder(branch: SolitonBranch, omega: float, z, f) -> np.ndarray:
    """R = sum_j (z_j xi_j + conj z_j sigma1 xi_j) + f at the given omega."""
    R = np.array(f, dtype=complex, copy=True)
    for zj, (_, xi) in zip(np.atleast_1d(z), branch.modes(omega)):
        R = R + zj * xi + np.conj(zj) * sigma1(xi)
    return R


def reduced_coordinates(
    Q: float, Pi, z, f, branch: SolitonBranch, omega_guess: float | None = None, tol: float = 1e-13
) -> tuple[float, float]:
    """Invert the charge and momentum for (omega, v) given the (z, f) coordinates.

    q(omega) + Q(R(omega)) = Q by secant/Newton, then v = 2 (Pi - Pi(R)) / Q.
    """
    grid = branch.grid
    lo, hi = branch.omega_range
    qlo = branch.q(lo) + charge(SpinorField(grid, remainder(branch, lo, z, f)))
    qhi = branch.q(hi) + charge(SpinorField(grid, remainder(branch, hi, z, f)))
    if not min(qlo, qhi) <= Q <= max(qlo, qhi):
        raise DataError(f"charge {Q:.6g} outside the branch range [{qlo:.6g}, {qhi:.6g}]")

    def g(om):
        return branch.q(om) + charge(SpinorField(grid, remainder(branch, om, z, f))) - Q

    om = branch.center if omega_guess is None else float(omega_guess)
    for _ in range(60):
        val = g(om)
        dq = branch.q_prime(om)
        if dq == 0:
            raise DegenerateBranchError("q'(omega) = 0 in charge inversion")
        new = min(max(om - val / dq, lo), hi)
        if abs(new - om) <= tol * max(1.0, abs(om)):
            om = new
            break
        om = new
    else:
        raise ConvergenceError("charge inversion did not converge")
    R = SpinorField(grid, remainder(branch, om, z, f))
    Pi = float(np.squeeze(Pi))
    v = 2.0 * (Pi - float(momentum(R)[0])) / Q
    return om, v


@dataclass
class GaugeResiduals:
    charge: float
    momentum: float
    energy: float
    momentum_real_shift: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.charge, self.momentum, self.energy)


def gauge_identities(U: SpinorField, state: ModulationState, branch: SolitonBranch) -> GaugeResiduals:
    """Residuals of the charge/momentum/energy decomposition under the boost.

    Q(U) = q + Q(R), Pi(U) = Pi(R) + (v/2)(q + Q(R)),
    E(U) = E(Phi + R) + v Pi(Phi + R) + (v^2/4) Q(Phi + R).
    """
    grid = branch.grid
    beta = branch.beta
    phi = branch.phi(state.omega)
    R = SpinorField(grid, state.R)
    W = SpinorField(grid, state.R + np.stack([phi, phi]))
    q = float(np.sum(phi**2 * grid.measure))
    QR = charge(R)
    PR = float(momentum(R)[0])
    PW = float(momentum(W)[0])
    v = state.v
    rq = abs(charge(U) - q - QR)
    rp = abs(float(momentum(U)[0]) - (PR + 0.5 * v * (q + QR)))
    re = abs(energy(U, beta) - (energy(W, beta) + v * PW + 0.25 * v**2 * charge(W)))
    return GaugeResiduals(rq, rp, re, abs(PW - PR))
