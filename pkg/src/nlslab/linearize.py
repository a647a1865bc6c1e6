"""Matrix linearization H = sigma3(-Delta + omega) + V at a ground state.

Arrays of shape (2, n) represent spinors; the pairing <f|g> is bilinear.
With a = beta(phi^2) + beta'(phi^2) phi^2 and b = beta'(phi^2) phi^2 the
potential is V = sigma3 (a + b sigma1), i.e. H = sigma3 [(-Delta+omega+a) + b sigma1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DataError, DegenerateBranchError
from .field import SIGMA1, SIGMA3, Grid, Nonlinearity, SpinorField, derivative, laplacian, pairing
from .groundstate import GroundState

# 6th-order centered stencil for d^2/dx^2
_FD6 = np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])


def _values(X) -> np.ndarray:
    return X.values if isinstance(X, SpinorField) else np.asarray(X, dtype=complex)


def sigma1(X: np.ndarray) -> np.ndarray:
    return X[::-1].copy()


def sigma3(X: np.ndarray) -> np.ndarray:
    return np.stack([X[0], -X[1]])


@dataclass(frozen=True, eq=False)
class LinearizedOperator:
    omega: float
    grid: Grid
    a: np.ndarray
    b: np.ndarray
    phi: np.ndarray | None = None
    dphi: np.ndarray | None = None
    beta: Nonlinearity | None = None
    q: float = 0.0
    q_prime: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def free(cls, omega: float, grid: Grid) -> "LinearizedOperator":
        """V = 0: H reduces to sigma3(-Delta + omega) (diagonal in Fourier space)."""
        z = np.zeros(grid.n)
        return cls(float(omega), grid, z, z.copy())

    @property
    def is_free(self) -> bool:
        return self.phi is None

    @property
    def potential(self) -> np.ndarray:
        """Pointwise 2x2 matrix V(x) of shape (n, 2, 2)."""
        eye = np.eye(2)
        return np.einsum("ij,jk,x->xik", SIGMA3, eye, self.a) + np.einsum(
            "ij,jk,x->xik", SIGMA3, SIGMA1, self.b
        )

    def apply(self, X) -> np.ndarray:
        X = _values(X)
        lap = laplacian(X, self.grid)
        top = -lap[0] + (self.omega + self.a) * X[0] + self.b * X[1]
        bot = -lap[1] + (self.omega + self.a) * X[1] + self.b * X[0]
        return np.stack([top, -bot])

    __call__ = apply

    def apply_adjoint(self, X) -> np.ndarray:
        """H* = sigma3 H sigma3 with respect to the bilinear pairing."""
        return sigma3(self.apply(sigma3(_values(X))))

    def as_linear_operator(self, shift: complex = 0.0) -> spla.LinearOperator:
        n = self.grid.n

        def mv(v):
            X = np.asarray(v, dtype=complex).reshape(2, n)
            return (self.apply(X) - shift * X).ravel()

        return spla.LinearOperator((2 * n, 2 * n), matvec=mv, dtype=complex)

    def dense(self) -> np.ndarray:
        """Dense 2n x 2n matrix (spectral Laplacian); for n <= 1024 only."""
        n = self.grid.n
        if n > 1024:
            raise ValueError("dense assembly limited to n <= 1024")
        if self.grid.radial:
            raise ValueError("dense assembly implemented for dim=1 only")
        D2 = np.real(np.fft.ifft(-self.grid.k[:, None] ** 2 * np.fft.fft(np.eye(n), axis=0), axis=0))
        A = -D2 + np.diag(self.omega + self.a)
        B = np.diag(self.b)
        return np.block([[A, B], [-B, -A]])

    def banded(self, shift: complex = 0.0, absorb: np.ndarray | None = None) -> sp.csc_matrix:
        """Sparse 6th-order finite-difference surrogate of H - shift - i*absorb.

        Used as a preconditioner; periodic wrap entries make it exact-structure
        compatible with the spectral operator.
        """
        n, h = self.grid.n, self.grid.h
        offs = np.arange(-3, 4)
        diags = [np.full(n, -c / h**2) for c in _FD6]
        T = sp.diags(diags, offs, shape=(n, n), format="lil")
        for o, c in zip(offs, _FD6):
            if o < 0:
                for i in range(-o):
                    T[i, n + o + i] = -c / h**2
            elif o > 0:
                for i in range(o):
                    T[n - o + i, i] = -c / h**2
        T = T.tocsr()
        A = T + sp.diags(self.omega + self.a)
        B = sp.diags(self.b)
        M = sp.bmat([[A, B], [-B, -A]], format="csc")
        extra = -shift * sp.eye(2 * n)
        if absorb is not None:
            extra = extra - 1j * sp.diags(np.concatenate([absorb, absorb]))
        return (M + extra).astype(complex).tocsc()

    # generalized kernel -------------------------------------------------

    def _need_state(self):
        if self.phi is None:
            raise DataError("operator has no ground state attached")
        if self.dphi is None:
            raise DataError("ground-state entry lacks omega-neighbors for the d/domega vector")

    @property
    def Phi(self) -> np.ndarray:
        self._need_state()
        return np.stack([self.phi, self.phi]).astype(complex)

    def kernel_vectors(self) -> dict[str, np.ndarray]:
        """Generalized kernel of H: gauge, scale, translation, boost."""
        self._need_state()
        P = self.Phi
        x = self.grid.x
        out = {"gauge": sigma3(P), "scale": np.stack([self.dphi, self.dphi]).astype(complex)}
        if not self.grid.radial:
            out["translation"] = derivative(P, self.grid)
            out["boost"] = x * sigma3(P)
        return out

    def adjoint_kernel_vectors(self) -> dict[str, np.ndarray]:
        """Dual vectors, keyed by the kernel vector they detect."""
        self._need_state()
        P = self.Phi
        x = self.grid.x
        out = {"gauge": sigma3(np.stack([self.dphi, self.dphi]).astype(complex)), "scale": P}
        if not self.grid.radial:
            out["translation"] = x * P
            out["boost"] = sigma3(derivative(P, self.grid))
        return out

    @property
    def generalized_kernel_dim(self) -> int:
        return 4 if not self.grid.radial else 8

    def kernel_residuals(self) -> dict[str, float]:
        """Relative residuals of the Jordan-chain relations.

        H sigma3 Phi = 0, H dx Phi = 0, H d_omega Phi = -sigma3 Phi, H x sigma3 Phi = -2 dx Phi.
        """
        K = self.kernel_vectors()
        P = self.Phi
        nrm = np.linalg.norm(P)
        res = {
            "gauge": np.linalg.norm(self.apply(K["gauge"])) / nrm,
            "scale": np.linalg.norm(self.apply(K["scale"]) + sigma3(P)) / nrm,
        }
        if "translation" in K:
            res["translation"] = np.linalg.norm(self.apply(K["translation"])) / nrm
            res["boost"] = np.linalg.norm(self.apply(K["boost"]) + 2 * K["translation"]) / nrm
        return {k: float(v) for k, v in res.items()}


def assemble(entry: GroundState, beta: Nonlinearity | None = None) -> LinearizedOperator:
    """Build H from the second variation of E + omega Q at the ground state."""
    beta = entry.beta if beta is None else beta
    s = entry.phi**2
    bp = beta.derivative(s)
    a = beta(s) + bp * s
    b = bp * s
    return LinearizedOperator(
        omega=entry.omega,
        grid=entry.grid,
        a=a,
        b=b,
        phi=entry.phi,
        dphi=entry.dphi,
        beta=beta,
        q=entry.q,
        q_prime=entry.q_prime if entry.q_prime is not None else 0.0,
    )


@dataclass
class SpectralComponents:
    gauge: complex
    scale: complex
    translation: complex
    boost: complex
    z: np.ndarray
    zbar: np.ndarray
    f: np.ndarray

    def discrete_part(self, H: LinearizedOperator, modes) -> np.ndarray:
        K = H.kernel_vectors()
        out = self.gauge * K["gauge"] + self.scale * K["scale"]
        if "translation" in K:
            out = out + self.translation * K["translation"] + self.boost * K["boost"]
        for zj, zbj, xi in zip(self.z, self.zbar, _mode_vectors(modes)):
            out = out + zj * xi + zbj * sigma1(xi)
        return out

    def reassemble(self, H: LinearizedOperator, modes) -> np.ndarray:
        return self.discrete_part(H, modes) + self.f


def _mode_vectors(modes) -> list[np.ndarray]:
    if modes is None:
        return []
    if hasattr(modes, "eigenpairs"):
        modes = modes.eigenpairs
    return [_values(xi) for _, xi in modes]


def _mode_values(modes) -> list[float]:
    if modes is None:
        return []
    if hasattr(modes, "eigenpairs"):
        modes = modes.eigenpairs
    return [float(lam) for lam, _ in modes]


def _basis(H: LinearizedOperator, modes):
    K = H.kernel_vectors()
    A = H.adjoint_kernel_vectors()
    names = list(K)
    vecs = [K[k] for k in names]
    duals = [A[k] for k in names]
    for lam, xi in zip(_mode_values(modes), _mode_vectors(modes)):
        vecs += [xi, sigma1(xi)]
        duals += [sigma3(xi), sigma1(sigma3(xi))]
    return names, vecs, duals


def _gram(H: LinearizedOperator, modes):
    key = ("gram", id(modes))
    hit = H._cache.get(key)
    if hit is not None and hit[0] is modes:
        return hit[1]
    names, vecs, duals = _basis(H, modes)
    G = np.array([[pairing(v, d, H.grid) for v in vecs] for d in duals])
    if abs(H.q_prime) < 1e-10 * max(1.0, abs(H.q)):
        raise DegenerateBranchError("q'(omega) ~ 0: gauge/scale block is singular")
    lu = np.linalg.inv(G)
    out = (names, vecs, duals, lu)
    H._cache[key] = (modes, out)
    return out


def spectral_project(H: LinearizedOperator, modes, X) -> SpectralComponents:
    """Split X into generalized-kernel, discrete-mode and continuous parts.

    Coefficients solve the Gram system against the adjoint kernel and the dual
    mode vectors sigma3 xi, sigma1 sigma3 xi.  With lambda <xi|sigma3 xi> = 1 this
    reduces to z = lambda <X|sigma3 xi>, gauge = <X|sigma3 dPhi>/q', and so on.
    """
    X = _values(X)
    names, vecs, duals, Ginv = _gram(H, modes)
    rhs = np.array([pairing(X, d, H.grid) for d in duals])
    c = Ginv @ rhs
    f = X.copy()
    for ci, v in zip(c, vecs):
        f = f - ci * v
    nk = len(names)
    coeff = dict(zip(names, c[:nk]))
    zz = c[nk:]
    return SpectralComponents(
        gauge=coeff.get("gauge", 0.0),
        scale=coeff.get("scale", 0.0),
        translation=coeff.get("translation", 0.0),
        boost=coeff.get("boost", 0.0),
        z=np.asarray(zz[0::2]),
        zbar=np.asarray(zz[1::2]),
        f=f,
    )


def apply_pc(H: LinearizedOperator, modes, X) -> np.ndarray:
    """Projection onto the continuous spectral subspace."""
    if H.is_free:
        return _values(X).copy()
    return spectral_project(H, modes, X).f


class ShiftedSolver:
    """Solve (H - shift - i*absorb) x = rhs for the spectral operator.

    GMRES on the spectral discretization, preconditioned by a sparse LU of the
    6th-order finite-difference surrogate of the same operator.
    """

    def __init__(self, H: LinearizedOperator, shift: complex, absorb: np.ndarray | None = None):
        self.H, self.shift, self.absorb = H, complex(shift), absorb
        n = H.grid.n
        self.n = n
        self.lu = spla.splu(H.banded(shift, absorb))

        def mv(v):
            X = np.asarray(v, dtype=complex).reshape(2, n)
            Y = H.apply(X) - self.shift * X
            if absorb is not None:
                Y = Y - 1j * absorb * X
            return Y.ravel()

        self.A = spla.LinearOperator((2 * n, 2 * n), matvec=mv, dtype=complex)
        self.M = spla.LinearOperator((2 * n, 2 * n), matvec=self.lu.solve, dtype=complex)
        self.last_info = 0
        self.last_residual = 0.0

    def residual(self, x: np.ndarray, rhs: np.ndarray) -> float:
        r = self.A.matvec(x.ravel()) - rhs.ravel()
        return float(np.linalg.norm(r) / max(np.linalg.norm(rhs), 1e-300))

    def solve(self, rhs, rtol: float = 1e-12, maxiter: int = 50, atol: float = 0.0) -> np.ndarray:
        rhs = _values(rhs)
        if not np.any(rhs):
            return np.zeros_like(rhs)
        b = rhs.ravel()
        x0 = self.lu.solve(b)
        x, info = spla.gmres(self.A, b, x0=x0, M=self.M, rtol=rtol, atol=atol, restart=60, maxiter=maxiter)
        self.last_info = info
        self.last_residual = self.residual(x, rhs)
        return x.reshape(2, self.n)
