"""Resonant mode-radiation couplings and the Fermi golden rule coefficient.

With U = Phi + Y and Y = sum_j (z_j xi_j + conj z_j sigma1 xi_j) + f, the field
obeys i dY/dt = H Y + N(Y) where, in scalar form,

    N(Y) = sigma3 (g, conj g),  g = beta(|phi + y|^2)(phi + y) - beta(phi^2) phi - (linear part).

The coupling of z^alpha to f is G_alpha = P_c [coefficient of z^alpha in N], and

    Gamma = 2 Lambda Im < R+(Lambda) G | sigma3 conj G >,  Lambda = lambda . alpha,

gives the decay law d|z|^2/dt = -Gamma |z|^{2N+2} for a single mode.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, EdgeProximityError
from .field import Nonlinearity, pairing
from .linearize import LinearizedOperator, apply_pc, sigma1, sigma3
from .resolvent import LimitingResult, MonomialKey, far_field_amplitudes, limiting_resolvent, l2


# ------------------------------------------------------------ power series

class _Series:
    """Truncated multivariate polynomial in z_1..z_m with array coefficients."""

    def __init__(self, m: int, order: int, terms: dict | None = None):
        self.m, self.order = m, order
        self.terms = dict(terms or {})

    @classmethod
    def const(cls, m, order, value):
        return cls(m, order, {(0,) * m: value})

    def __add__(self, other):
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out[k] + v if k in out else v
        return _Series(self.m, self.order, out)

    def scale(self, c):
        return _Series(self.m, self.order, {k: c * v for k, v in self.terms.items()})

    def __mul__(self, other):
        out: dict = {}
        for k1, v1 in self.terms.items():
            d1 = sum(k1)
            for k2, v2 in other.terms.items():
                if d1 + sum(k2) > self.order:
                    continue
                k = tuple(a + b for a, b in zip(k1, k2))
                out[k] = out[k] + v1 * v2 if k in out else v1 * v2
        return _Series(self.m, self.order, out)

    def coefficient(self, alpha):
        v = self.terms.get(tuple(alpha))
        return 0.0 if v is None else v


def _g_series(beta: Nonlinearity, phi, A: list, B: list, order: int) -> _Series:
    """g(y, ybar) as a series with y = sum z_j A_j, ybar = sum z_j B_j (independent)."""
    m = len(A)
    one = np.ones_like(phi, dtype=complex)
    unit = [tuple(int(i == j) for i in range(m)) for j in range(m)]
    y = _Series(m, order, {unit[j]: A[j].astype(complex) for j in range(m)})
    yb = _Series(m, order, {unit[j]: B[j].astype(complex) for j in range(m)})
    P = _Series.const(m, order, phi.astype(complex))
    s = (P + y) * (P + yb)
    # beta(s) = sum_{j>=1} c_j s^j via Horner (constant term is zero)
    bs = _Series.const(m, order, 0 * one)
    for c in reversed((0.0, *beta.coefficients)):
        bs = bs * s + _Series.const(m, order, c * one)
    return bs * (P + y)


def nonlinear_coefficient(beta: Nonlinearity, phi, modes, alpha, conjugate: bool = False) -> np.ndarray:
    """Coefficient of z^alpha (or conj z^alpha) in N(sum z_j xi_j + c.c.), alpha of order >= 2."""
    order = sum(alpha)
    xis = [np.real(np.asarray(xi)) for _, xi in modes]
    a = [xi[0] for xi in xis]
    b = [xi[1] for xi in xis]
    if conjugate:
        # z-bar^alpha collects y = zbar b, ybar = zbar a
        a, b = b, a
    g = _g_series(beta, phi, a, b, order).coefficient(alpha)
    gc = _g_series(beta, phi, b, a, order).coefficient(alpha)
    return np.stack([np.asarray(g) * np.ones_like(phi), -np.asarray(gc) * np.ones_like(phi)]).astype(complex)


def fd_second_coefficient(beta: Nonlinearity, phi, xi, step: float = 1e-4) -> np.ndarray:
    """Finite-difference oracle for the z^2 coefficient along a single real mode."""
    a, b = np.real(xi[0]), np.real(xi[1])

    def g(t):
        y, yb = t * a, t * b
        return beta((phi + y) * (phi + yb)) * (phi + y) - beta(phi**2) * phi

    def field(t):
        return np.stack([g(t), -(beta((phi + t * a) * (phi + t * b)) * (phi + t * b) - beta(phi**2) * phi)])

    return (field(step) - 2 * field(0.0) + field(-step)) / (2 * step**2)


# ------------------------------------------------------------- couplings

def resonant_set(lam, omega: float, N: int) -> list[tuple]:
    """Multi-indices alpha with |alpha| = N + 1 and lambda . alpha > omega."""
    lam = np.asarray(lam, dtype=float)
    m = lam.size
    out = []
    for alpha in itertools.product(range(N + 2), repeat=m):
        if sum(alpha) == N + 1 and float(np.dot(lam, alpha)) > omega:
            out.append(tuple(alpha))
    return out


@dataclass
class Couplings:
    N: int
    lam: np.ndarray
    G: dict  # MonomialKey -> (2, n) array
    symmetry_defect: float

    def resonant(self) -> dict:
        return {k: v for k, v in self.G.items() if sum(k.nu) == 0}


def leading_couplings(H: LinearizedOperator, spec, beta: Nonlinearity | None = None, N: int | None = None) -> Couplings:
    """Order-(N+1) mode couplings to radiation, projected on the continuous subspace."""
    beta = H.beta if beta is None else beta
    modes = spec.eigenpairs if hasattr(spec, "eigenpairs") else list(spec)
    m = len(modes)
    if m == 0:
        raise ValueError("no internal modes: couplings undefined")
    lam = np.array([l for l, _ in modes])
    if N is None:
        N = int(math.floor(H.omega / lam[0]))
    G: dict = {}
    defect = 0.0
    zero = (0,) * m
    for alpha in itertools.product(range(N + 2), repeat=m):
        if sum(alpha) != N + 1:
            continue
        g_a = apply_pc(H, modes, nonlinear_coefficient(beta, H.phi, modes, alpha))
        g_c = apply_pc(H, modes, nonlinear_coefficient(beta, H.phi, modes, alpha, conjugate=True))
        G[MonomialKey(alpha, zero, 1)] = g_a
        G[MonomialKey(zero, alpha, 1)] = g_c
        scale = max(np.linalg.norm(g_a), 1e-300)
        defect = max(defect, float(np.linalg.norm(g_a + sigma1(np.conj(g_c))) / scale) if np.any(g_a) else 0.0)
    if defect > 1e-10:
        raise ConvergenceError(f"coupling skew-symmetry violated ({defect:.1e})")
    return Couplings(N, lam, G, defect)


# ------------------------------------------------------------------- FGR

@dataclass
class FgrReport:
    Lam: float
    Gamma: float
    uncertainty: float
    Gamma_far_field: float
    amplitudes: list
    nondegenerate: bool
    margin: float
    resonant_set: list
    N: int
    couplings: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "Lambda": self.Lam,
            "Gamma": self.Gamma,
            "uncertainty": self.uncertainty,
            "Gamma_far_field": self.Gamma_far_field,
            "relative_route_difference": abs(self.Gamma - self.Gamma_far_field) / max(abs(self.Gamma), 1e-300),
            "amplitudes": [[a.real, a.imag, b.real, b.imag] for a, b in self.amplitudes],
            "nondegenerate": self.nondegenerate,
            "margin": self.margin,
            "resonant_set": [list(a) for a in self.resonant_set],
            "N": self.N,
            "semipositive": bool(self.Gamma >= -max(self.uncertainty, 1e-10)),
        }


def _combined(couplings, zeta=None):
    res = couplings.resonant() if isinstance(couplings, Couplings) else couplings
    keys = list(res)
    if not keys:
        return None, keys
    if zeta is None:
        zeta = np.ones(len(keys[0].mu))
    tot = sum(np.prod(np.power(zeta, k.mu)) * res[k] for k in keys)
    return tot, keys


def fgr_coefficient(couplings, Lam: float, H: LinearizedOperator, zeta=None, **ladder) -> tuple[float, float, LimitingResult | None]:
    """Gamma = 2 Lam Im <R+(Lam) G | sigma3 conj G> and its ladder uncertainty."""
    G, _ = _combined(couplings, zeta)
    if G is None or not np.any(G):
        return 0.0, 0.0, None
    res = limiting_resolvent(H, Lam, G, **ladder)
    w = sigma3(np.conj(G))
    val = pairing(res.value, w, H.grid)
    # uncertainty: gap between the second- and first-order extrapolants
    x1, x2 = res.ladder[2], res.ladder[1]
    unc = 2 * Lam * abs(pairing(res.value - (2 * x1 - x2), w, H.grid))
    return float(2 * Lam * val.imag), float(unc), res


def fgr_nondegeneracy(couplings, Lam: float, H: LinearizedOperator, threshold: float = 1e-8, **ladder):
    """Linear independence of the resonant far-field amplitudes (a+, a-) of each coupling.

    Returns (verdict, margin, amplitudes); margin is the smallest singular value
    of the amplitude matrix relative to the largest coupling norm.
    """
    res_map = couplings.resonant() if isinstance(couplings, Couplings) else couplings
    items = [v for v in res_map.values() if np.any(v)]
    if not items:
        return False, 0.0, []
    amps = []
    for G in items:
        r = limiting_resolvent(H, Lam, G, **ladder)
        amps.append(far_field_amplitudes(r, H.omega, Lam))
    A = np.array([[a, b] for a, b in amps])
    scale = max(l2(G, H.grid) for G in items)
    sv = np.linalg.svd(A, compute_uv=False)
    margin = float(sv[-1] / scale) if len(items) <= 2 else 0.0
    return bool(margin > threshold), margin, amps


def fgr_report(H: LinearizedOperator, spec, beta: Nonlinearity | None = None, **ladder) -> FgrReport:
    cp = leading_couplings(H, spec, beta)
    rs = resonant_set(cp.lam, H.omega, cp.N)
    if not rs:
        raise EdgeProximityError("no resonant multi-index above the continuum threshold")
    Lam = float(np.dot(cp.lam, rs[0]))
    Gamma, unc, res = fgr_coefficient(cp, Lam, H, **ladder)
    nondeg, margin, amps = fgr_nondegeneracy(cp, Lam, H, **ladder)
    k = math.sqrt(Lam - H.omega)
    if res is not None:
        ap, am = far_field_amplitudes(res, H.omega, Lam)
        g_ff = 2 * Lam * k * (abs(ap) ** 2 + abs(am) ** 2)
    else:
        g_ff = 0.0
    return FgrReport(Lam, Gamma, unc, g_ff, amps, nondeg, margin, rs, cp.N, cp.G)


# --------------------------------------------------------- reduced model

@dataclass
class ModeTrajectory:
    t: np.ndarray
    zeta: np.ndarray


def reduced_mode_ode(zeta0, lam, Gamma: float, T: float, dt: float, N: int = 1) -> ModeTrajectory:
    """d zeta/dt = -i lam zeta - (Gamma/2) |zeta|^{2N} zeta.

    Then d|zeta|^2/dt = -Gamma |zeta|^{2N+2}; for N = 1, 1/|zeta|^2 grows with slope Gamma.
    The rotation is applied exactly and RK4 only integrates the slow amplitude
    w = exp(i lam t) zeta, so no spurious damping enters at small |zeta|.
    The output step is capped at 1/100 of the shortest mode period.
    """
    w = np.atleast_1d(np.asarray(zeta0, dtype=complex)).copy()
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    period = 2 * math.pi / float(np.max(np.abs(lam))) if np.any(lam) else math.inf
    nsteps = max(1, int(math.ceil(T / min(dt, period / 100))))
    h = T / nsteps

    def rhs(w):
        return -0.5 * Gamma * np.abs(w) ** (2 * N) * w

    ts = np.linspace(0.0, T, nsteps + 1)
    out = np.empty((nsteps + 1, w.size), dtype=complex)
    out[0] = w
    for i in range(nsteps):
        k1 = rhs(w)
        k2 = rhs(w + 0.5 * h * k1)
        k3 = rhs(w + 0.5 * h * k2)
        k4 = rhs(w + h * k3)
        w = w + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = w
    return ModeTrajectory(ts, out * np.exp(-1j * np.outer(ts, lam)))
