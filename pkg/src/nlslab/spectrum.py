"""Discrete eigenvalues of H in the gap (0, omega) and the hypothesis checker."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ConvergenceError
from .field import Grid, Nonlinearity, pairing
from .groundstate import GroundState, ground_state_entry, check_lplus
from .linearize import LinearizedOperator, ShiftedSolver, assemble, sigma1, sigma3, spectral_project
from .parallel import ordered_map

DECAY_TOL = 1e-6
IMAG_TOL = 1e-8


def outer_mass_fraction(xi: np.ndarray, grid: Grid) -> float:
    """Share of |xi|^2 carried by |x| > 3L/4."""
    w = np.sum(np.abs(xi) ** 2, axis=0)
    outer = np.abs(grid.x) > 0.75 * grid.half_length
    tot = np.sum(w)
    return float(np.sum(w[outer]) / tot) if tot > 0 else 0.0


def resonance_order(lam: float, omega: float) -> int:
    """N with N lam < omega < (N+1) lam (floor, so an exact tie is flagged by a zero margin)."""
    return max(int(math.floor(omega / lam)), 0)


@dataclass
class DiscreteSpectrum:
    omega: float
    eigenpairs: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    outer_mass: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return len(self.eigenpairs)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([lam for lam, _ in self.eigenpairs])

    @property
    def orders(self) -> list[int]:
        return [resonance_order(lam, self.omega) for lam, _ in self.eigenpairs]

    @property
    def N(self) -> int | None:
        return self.orders[0] if self.eigenpairs else None

    def biorthogonality(self, H: LinearizedOperator) -> np.ndarray:
        """Matrix <sigma3 H xi_j | conj xi_l>; the identity after normalization."""
        m = self.m
        G = np.zeros((m, m), dtype=complex)
        for j, (_, xj) in enumerate(self.eigenpairs):
            s = sigma3(H.apply(xj))
            for l, (_, xl) in enumerate(self.eigenpairs):
                G[j, l] = pairing(s, np.conj(xl), H.grid)
        return G


def normalize_mode(lam: float, xi: np.ndarray, grid: Grid) -> np.ndarray:
    """Real phase alignment and lambda <xi|sigma3 xi> = 1."""
    i = np.unravel_index(np.argmax(np.abs(xi)), xi.shape)
    xi = xi * np.exp(-1j * np.angle(xi[i]))
    xi = np.real(xi).astype(complex)
    # fix the sign convention: first component positive at its largest entry
    k = int(np.argmax(np.abs(xi[0])))
    if xi[0, k].real < 0:
        xi = -xi
    krein = np.real(pairing(xi, sigma3(xi), grid))
    if krein <= 0:
        raise ConvergenceError(f"mode at lambda={lam:.6g} has non-positive Krein signature")
    return xi / np.sqrt(lam * krein)


def _deflated_solver(H: LinearizedOperator, sigma: float):
    """(H P - sigma)^{-1} where P removes the generalized kernel."""
    solver = ShiftedSolver(H, sigma)
    n = H.grid.n
    has_kernel = not H.is_free

    def op(v):
        b = np.asarray(v, dtype=complex).reshape(2, n)
        if has_kernel:
            pb = spectral_project(H, None, b).f
        else:
            pb = b
        x = solver.solve(pb, rtol=1e-11, atol=1e-12 * np.linalg.norm(b), maxiter=3)
        x = x - (b - pb) / sigma
        return x.ravel()

    def mv(v):
        b = np.asarray(v, dtype=complex).reshape(2, n)
        pb = spectral_project(H, None, b).f if has_kernel else b
        return H.apply(pb).ravel()

    A = spla.LinearOperator((2 * n, 2 * n), matvec=mv, dtype=complex)
    OPinv = spla.LinearOperator((2 * n, 2 * n), matvec=op, dtype=complex)
    return A, OPinv


def _accept(H, lam, vec, seen, tol_decay=DECAY_TOL):
    om = H.omega
    if abs(lam.imag) > IMAG_TOL * max(1.0, abs(lam)):
        return None
    lr = float(lam.real)
    if not (1e-6 * om < lr < om):
        return None
    xi = vec.reshape(2, H.grid.n)
    mass = outer_mass_fraction(xi, H.grid)
    if mass > tol_decay:
        return None
    if any(abs(lr - s) <= 1e-7 * om for s in seen):
        return None
    if not H.is_free and H.dphi is not None:
        # split Jordan block at 0 shows up as tiny eigenvalues living in the kernel
        f = spectral_project(H, None, xi).f
        if np.linalg.norm(f) < 0.5 * np.linalg.norm(xi):
            return None
    return lr, xi, mass


def discrete_spectrum(
    H: LinearizedOperator,
    search_window: tuple[float, float] | None = None,
    max_modes: int = 4,
    shifts: int = 4,
    k_per_shift: int = 4,
) -> DiscreteSpectrum:
    """Shift-invert Arnoldi on the kernel-deflated operator at shifts across the gap."""
    om = H.omega
    lo, hi = search_window if search_window is not None else (0.0, om)
    sig = [lo + (hi - lo) * (j + 0.5) / shifts for j in range(shifts)]
    rng = np.random.default_rng(12345)
    v0 = (rng.normal(size=2 * H.grid.n) + 0j) * np.exp(-(H.grid.x[None, :].repeat(2, 0).ravel() / 4) ** 2)

    def one(s):
        A, OPinv = _deflated_solver(H, s)
        try:
            vals, vecs = spla.eigs(A, k=k_per_shift, sigma=s, OPinv=OPinv, which="LM", v0=v0, tol=1e-12)
        except spla.ArpackNoConvergence as exc:
            vals, vecs = exc.eigenvalues, exc.eigenvectors
        return vals, vecs

    found = []
    for vals, vecs in ordered_map(one, sig):
        for j in np.argsort(vals.real):
            got = _accept(H, vals[j], vecs[:, j], [f[0] for f in found])
            if got is not None:
                found.append(got)
    found.sort(key=lambda t: t[0])
    found = found[:max_modes]
    spec = DiscreteSpectrum(om)
    for lam, xi, mass in found:
        # Rayleigh-quotient polish of the eigenvalue
        xi = normalize_mode(lam, xi, H.grid)
        Hx = H.apply(xi)
        lam = float(np.real(pairing(Hx, sigma3(xi), H.grid) / pairing(xi, sigma3(xi), H.grid)))
        xi = normalize_mode(lam, xi, H.grid)
        res = float(np.linalg.norm(H.apply(xi) - lam * xi) / np.linalg.norm(xi))
        spec.eigenpairs.append((lam, xi))
        spec.residuals.append(res)
        spec.outer_mass.append(mass)
    return spec


def dense_spectrum(H: LinearizedOperator, tol_decay: float = DECAY_TOL) -> DiscreteSpectrum:
    """Brute-force oracle: full complex eigensolve (n <= 512), same filters."""
    if H.grid.n > 512:
        raise ValueError("dense oracle limited to n <= 512")
    vals, vecs = np.linalg.eig(H.dense())
    spec = DiscreteSpectrum(H.omega)
    seen: list[float] = []
    for j in np.argsort(vals.real):
        got = _accept(H, vals[j], vecs[:, j].astype(complex), seen, tol_decay)
        if got is None:
            continue
        lam, xi, mass = got
        seen.append(lam)
        xi = normalize_mode(lam, xi, H.grid)
        spec.eigenpairs.append((lam, xi))
        spec.residuals.append(float(np.linalg.norm(H.apply(xi) - lam * xi) / np.linalg.norm(xi)))
        spec.outer_mass.append(mass)
    return spec


def embedded_scan(
    beta: Nonlinearity, omega: float, grids: list[Grid], tol_decay: float = DECAY_TOL
) -> dict:
    """Look for decaying eigenvectors with real eigenvalue in (omega, k_max^2 + omega).

    Dense eigensolves at coarse resolutions; any hit falsifies the no-embedded-
    eigenvalue hypothesis, absence at every resolution passes it.
    """
    hits = []
    for g in grids:
        H = assemble(ground_state_entry(beta, omega, g))
        vals, vecs = np.linalg.eig(H.dense())
        top = float(np.max(g.k) ** 2 + omega)
        for j, lam in enumerate(vals):
            if abs(lam.imag) > IMAG_TOL * max(1.0, abs(lam)) or not (omega < lam.real < top):
                continue
            xi = vecs[:, j].reshape(2, g.n)
            mass = outer_mass_fraction(xi, g)
            if mass <= tol_decay:
                hits.append({"n": g.n, "lambda": float(lam.real), "outer_mass": mass})
    return {"resolutions": [g.n for g in grids], "hits": hits, "verdict": not hits}


def _multi_indices(m: int, max_order: int):
    rng = range(-max_order, max_order + 1)
    for mu in itertools.product(rng, repeat=m):
        if 0 < sum(abs(c) for c in mu) <= max_order:
            yield mu


@dataclass
class HypothesisReport:
    omega: float
    h4: dict
    h5: dict | None
    h6: dict
    h7: dict
    h8: dict
    h9: dict | None
    kernel: dict | None = None

    def to_dict(self) -> dict:
        return {
            "omega": self.omega,
            "H4": self.h4,
            "H5": self.h5,
            "H6": self.h6,
            "H7": self.h7,
            "H8": self.h8,
            "H9": self.h9,
            "kernel_residuals": self.kernel,
        }

    def to_json(self) -> str:
        return json.dumps(_finite(self.to_dict()), indent=2, sort_keys=True)


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return _finite(obj.item())
    return obj


def check_hypotheses(
    spec: DiscreteSpectrum,
    omega: float,
    max_order: int | None = None,
    entry: GroundState | None = None,
    embedded: dict | None = None,
    H: LinearizedOperator | None = None,
    resonance_tol: float = 1e-8,
) -> HypothesisReport:
    """Verdicts with numeric witnesses for the branch and spectral hypotheses."""
    lam = spec.eigenvalues
    m = spec.m
    N = spec.N if m else 0
    if max_order is None:
        max_order = 2 * N + 3

    if entry is not None and entry.q_prime is not None:
        h4 = {"q_prime": entry.q_prime, "verdict": bool(entry.q_prime > 0), "tol": 0.0}
    else:
        h4 = {"q_prime": None, "verdict": None, "tol": 0.0}

    h5 = None
    if entry is not None:
        r = check_lplus(entry)
        h5 = {
            "n_negative": r.n_negative,
            "kernel_dim_even_sector": r.kernel_dim_even_sector,
            "lowest_eigenvalue": r.lowest_eigenvalue,
            "kernel_tol": r.kernel_tol,
            "verdict": r.h5,
        }

    modes = []
    for (lj, _), nj, res in zip(spec.eigenpairs, spec.orders, spec.residuals):
        lower = omega - nj * lj
        upper = (nj + 1) * lj - omega
        modes.append(
            {
                "lambda": lj,
                "N": nj,
                "residual": res,
                "margin_lower": lower,
                "margin_upper": upper,
                "verdict": bool(nj >= 1 and lower > 0 and upper > 0),
            }
        )
    h6 = {"m": m, "N": N if m else None, "modes": modes, "verdict": all(md["verdict"] for md in modes)}

    if m == 0:
        h7 = {"target": 0, "margin": math.inf, "threshold_margin": math.inf, "max_order": max_order, "verdict": True}
        h8 = {"margin": math.inf, "max_order": max_order, "verdict": True}
    else:
        t_margin, thr_margin, h8_margin = math.inf, math.inf, math.inf
        # distinct eigenvalues for the non-resonance condition
        distinct = np.unique(np.round(lam, 10))
        for mu in _multi_indices(m, max_order):
            s = float(np.dot(mu, lam))
            t_margin = min(t_margin, abs(s - m))
            thr_margin = min(thr_margin, abs(abs(s) - omega))
        for mu in _multi_indices(len(distinct), max_order):
            h8_margin = min(h8_margin, abs(float(np.dot(mu, distinct))))
        h7 = {
            "target": m,
            "margin": t_margin,
            "threshold_margin": thr_margin,
            "max_order": max_order,
            "verdict": bool(t_margin > resonance_tol),
        }
        h8 = {"margin": h8_margin, "max_order": max_order, "verdict": bool(h8_margin > resonance_tol)}

    kernel = H.kernel_residuals() if H is not None and not H.is_free else None
    return HypothesisReport(omega, h4, h5, h6, h7, h8, embedded, kernel)


def symmetric_partner_residual(H: LinearizedOperator, lam: float, xi: np.ndarray) -> float:
    """Residual of H(sigma1 conj xi) + lam sigma1 conj xi."""
    y = sigma1(np.conj(xi))
    return float(np.linalg.norm(H.apply(y) + lam * y) / np.linalg.norm(y))
