"""Post-processing of trajectories: modulation tracking, scattering, dispersive norms, decay fits."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ConvergenceError, DataError, NlsLabError
from .field import Grid, SpinorField, derivative
from .fgr import reduced_mode_ode
from .modulation import ModulationState, SolitonBranch, fit_modulation
from .resolvent import weighted_norm
from .simulate import free_flow

log = logging.getLogger(__name__)

ADMISSIBLE_PAIRS_1D = ((math.inf, 2.0), (8.0, 4.0), (4.0, math.inf))


def admissible(p: float, q: float, dim: int = 1) -> bool:
    """2/p + d/q = d/2 with p >= 2 (d = 1, 3)."""
    lhs = (0 if math.isinf(p) else 2 / p) + (0 if math.isinf(q) else dim / q)
    return p >= 2 and abs(lhs - dim / 2) < 1e-12


# ------------------------------------------------------------------ tracking

@dataclass
class ModulationSeries:
    t: np.ndarray
    omega: np.ndarray
    theta: np.ndarray  # unwrapped
    D: np.ndarray
    v: np.ndarray
    z: np.ndarray  # (frames, m)
    rho: np.ndarray  # (frames, 2): charge and momentum of f
    residual: np.ndarray
    f_l2: np.ndarray
    f_weighted: np.ndarray  # L^{2,-2}
    radiation_t: np.ndarray
    radiation: list[np.ndarray]  # f frames kept at radiation_stride
    breakdown_frame: int | None = None
    breakdown_message: str = ""

    @property
    def n(self) -> int:
        return self.t.size

    def rows(self) -> list[dict]:
        out = []
        for i in range(self.n):
            row = {
                "t": float(self.t[i]),
                "omega": float(self.omega[i]),
                "theta": float(self.theta[i]),
                "D": float(self.D[i]),
                "v": float(self.v[i]),
            }
            for j in range(self.z.shape[1]):
                row[f"z{j}_re"] = float(self.z[i, j].real)
                row[f"z{j}_im"] = float(self.z[i, j].imag)
            row["f_L2"] = float(self.f_l2[i])
            row["f_L2w"] = float(self.f_weighted[i])
            row["Q_f"] = float(self.rho[i, 0])
            row["Pi_f"] = float(self.rho[i, 1])
            out.append(row)
        return out


def track_modulation(
    frames: Iterable[SpinorField],
    branch: SolitonBranch,
    guess: tuple[float, float, float, float],
    radiation_stride: int = 0,
    radiation_from: float = 0.0,
    fit_tol: float = 1e-10,
) -> ModulationSeries:
    """Fit every frame, warm-started by propagating the previous fit.

    The guess for the next frame advances D by v dt and theta by (omega + v^2/4) dt.
    theta is unwrapped.  A failed fit stops the series and records the frame index.
    """
    t, om, th, D, v, z, rho, res, fl2, fw = [], [], [], [], [], [], [], [], [], []
    rad_t, rad = [], []
    prev: ModulationState | None = None
    prev_t = None
    theta_unwrapped = None
    breakdown, message = None, ""
    for i, U in enumerate(frames):
        if prev is None:
            g = guess
        else:
            dt = U.time - prev_t
            g = (prev.omega, prev.theta + (prev.omega + 0.25 * prev.v**2) * dt, prev.D + prev.v * dt, prev.v)
        try:
            st = fit_modulation(U, g, branch, fit_tol=fit_tol)
        except (ConvergenceError, NlsLabError) as exc:
            breakdown, message = i, str(exc)
            log.warning("modulation fit failed at frame %d (t=%.4g): %s", i, U.time, exc)
            break
        if theta_unwrapped is None:
            theta_unwrapped = st.theta
        else:
            pred = theta_unwrapped + (prev.omega + 0.25 * prev.v**2) * (U.time - prev_t)
            theta_unwrapped = st.theta + 2 * math.pi * round((pred - st.theta) / (2 * math.pi))
        t.append(U.time)
        om.append(st.omega)
        th.append(theta_unwrapped)
        D.append(st.D)
        v.append(st.v)
        z.append(st.z)
        rho.append(st.rho)
        res.append(st.residual)
        grid = U.grid
        fl2.append(float(np.sqrt(np.sum(np.abs(st.f[0]) ** 2) * grid.h)))
        fw.append(weighted_norm(st.f[0], grid, 2.0))
        if radiation_stride and i % radiation_stride == 0 and U.time >= radiation_from:
            rad_t.append(U.time)
            rad.append(st.f[0].copy())
        prev, prev_t = st, U.time
    m = len(z[0]) if z else 0
    return ModulationSeries(
        t=np.array(t),
        omega=np.array(om),
        theta=np.array(th),
        D=np.array(D),
        v=np.array(v),
        z=np.array(z, dtype=complex).reshape(len(t), m),
        rho=np.array(rho).reshape(len(t), 2),
        residual=np.array(res),
        f_l2=np.array(fl2),
        f_weighted=np.array(fw),
        radiation_t=np.array(rad_t),
        radiation=rad,
        breakdown_frame=breakdown,
        breakdown_message=message,
    )


# ------------------------------------------------------------- limits

@dataclass
class Limit:
    value: float
    tail_variation: float  # max - min over the tail window
    witness: tuple[float, float]  # tail window [t0, t1]


def tail_limit(t: np.ndarray, y: np.ndarray, tail: float = 0.25) -> Limit:
    if t.size == 0:
        return Limit(math.nan, math.nan, (math.nan, math.nan))
    t0 = t[-1] - tail * (t[-1] - t[0])
    sel = t >= t0
    ys = y[sel]
    return Limit(float(np.mean(ys)), float(np.ptp(ys)), (float(t[sel][0]), float(t[-1])))


def derivative_defects(series: ModulationSeries, tail: float = 0.25, smooth: float = 0.0) -> dict:
    """Tail sizes of D' - v and theta' - omega - v^2/4 from centered differences.

    ``smooth`` > 0 averages both defects over a moving window of that duration first.
    """
    t = series.t
    if t.size < 3:
        return {"D_dot_minus_v": math.nan, "theta_dot_defect": math.nan}
    dD = np.gradient(series.D, t) - series.v
    dth = np.gradient(series.theta, t) - series.omega - 0.25 * series.v**2
    if smooth > 0:
        dD, dth = moving_average(t, dD, smooth), moving_average(t, dth, smooth)
    sel = t >= t[-1] - tail * (t[-1] - t[0])
    # drop the ends where centered differences degrade
    sel[0] = sel[-1] = False
    return {
        "D_dot_minus_v": float(np.max(np.abs(dD[sel]))),
        "theta_dot_defect": float(np.max(np.abs(dth[sel]))),
    }


def moving_average(t: np.ndarray, y: np.ndarray, window: float) -> np.ndarray:
    """Centered moving average over ``window`` time units on a uniform series."""
    if t.size < 2:
        return y.copy()
    dt = float(t[1] - t[0])
    w = max(1, int(round(window / dt)))
    if w >= y.size:
        return np.full_like(y, np.mean(y))
    c = np.concatenate([[0.0], np.cumsum(y)])
    avg = (c[w:] - c[:-w]) / w
    # pad to the original length by repeating the edge windows
    lead = (y.size - avg.size) // 2
    return np.concatenate([np.full(lead, avg[0]), avg, np.full(y.size - avg.size - lead, avg[-1])])


# ------------------------------------------------------------- scattering

@dataclass
class ScatteringResult:
    f_plus: np.ndarray
    times: np.ndarray
    residuals: np.ndarray  # ||w(t_{i+1}) - w(t_i)||_{H^1}
    early: float
    late: float
    converging: bool
    mid: float = math.nan  # quarter of the window ending at its midpoint

    @property
    def ratio(self) -> float:
        return self.late / self.early if self.early > 0 else 0.0

    @property
    def halving_ratio(self) -> float:
        """late / mid: below 1/2 when the residual at least halves from the midpoint to the end."""
        return self.late / self.mid if self.mid > 0 else 0.0


def _h1(u: np.ndarray, grid: Grid) -> float:
    uh = np.fft.fft(u)
    return float(np.sqrt((grid.h / grid.n) * np.sum((1 + grid.k**2) * np.abs(uh) ** 2)))


def lab_radiation(f: np.ndarray, grid: Grid, theta: float, D: float, v: float, mask: np.ndarray | None = None) -> np.ndarray:
    """Radiation carried back to the lab frame: the scalar part of exp(i sigma3 Theta) tau_D f."""
    from .field import translate

    u = translate(f, grid, D) * np.exp(1j * (0.5 * v * (grid.x - D) + theta))
    return u if mask is None else u * mask


def interior_mask(grid: Grid, fraction: float = 0.125) -> np.ndarray:
    """Smooth cutoff vanishing on the sponge region."""
    edge = grid.half_length * (1 - 2 * fraction)
    s = np.clip((np.abs(grid.x) - edge) / (grid.half_length * fraction), 0.0, 1.0)
    return np.cos(0.5 * np.pi * s) ** 2


def scattering_extract(
    times: np.ndarray,
    radiation: list[np.ndarray],
    theta: np.ndarray,
    D: np.ndarray,
    v: np.ndarray,
    grid: Grid,
    mask: np.ndarray | None = None,
) -> ScatteringResult:
    """Free backward evolution w(t) = exp(-i t Laplacian)[lab-frame f(t)] over a tail window.

    ``theta``, ``D`` and ``v`` are sampled at ``times``.  Residuals are H^1 norms of
    consecutive differences; ``early`` and ``late`` average the first and last quarter.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 16:
        raise DataError(f"scattering extraction needs at least 16 samples, got {times.size}")
    if len(radiation) != times.size:
        raise DataError("radiation frames and times differ in length")
    ws = [free_flow(lab_radiation(f, grid, th, d, vv, mask), -t, grid) for f, t, th, d, vv in zip(radiation, times, theta, D, v)]
    res = np.array([_h1(b - a, grid) for a, b in zip(ws[:-1], ws[1:])])
    q = max(1, res.size // 4)
    early, late = float(np.mean(res[:q])), float(np.mean(res[-q:]))
    h = res.size // 2
    mid = float(np.mean(res[max(0, h - q) : max(h, 1)]))
    f_plus = np.mean(ws, axis=0)
    return ScatteringResult(f_plus, times, res, early, late, bool(late <= early), mid)


# ------------------------------------------------------------- dispersive norms

def _lp(values: np.ndarray, p: float, weight: float) -> float:
    if math.isinf(p):
        return float(np.max(values)) if values.size else 0.0
    return float((np.sum(values**p) * weight) ** (1 / p))


def _w1q(u: np.ndarray, grid: Grid, q: float) -> float:
    ux = derivative(u, grid)
    return _lp(np.abs(u), q, grid.h) + _lp(np.abs(ux), q, grid.h)


def dispersive_norms(
    times: np.ndarray,
    radiation: list[np.ndarray],
    grid: Grid,
    pairs=ADMISSIBLE_PAIRS_1D,
    S: float = 2.0,
) -> dict:
    """Discrete L^p_t W^{1,q}_x norms for admissible pairs plus the L^2_t L^{2,-S}_x norm."""
    times = np.asarray(times, dtype=float)
    if times.size > 2 and np.ptp(np.diff(times)) > 1e-9 * max(1.0, abs(times[-1])):
        raise DataError("dispersive norms need a uniform time stride")
    dt = float(times[1] - times[0]) if times.size > 1 else 1.0
    out = {}
    for p, q in pairs:
        per = np.array([_w1q(f, grid, q) for f in radiation])
        out[f"L{_fmt(p)}_W1,{_fmt(q)}"] = _lp(per, p, dt)
    weighted = np.array([weighted_norm(f, grid, S) for f in radiation])
    out[f"L2_L2,-{_fmt(S)}"] = _lp(weighted, 2.0, dt)
    return out


def _fmt(p: float) -> str:
    return "inf" if math.isinf(p) else f"{p:g}"


# ------------------------------------------------------------- decay fit

@dataclass
class DecayFit:
    fitted: bool
    slope: float = math.nan
    intercept: float = math.nan
    predicted_slope: float = math.nan
    ratio: float = math.nan
    monotone: bool = False
    envelope_ratio: float = math.nan  # final / initial envelope after the transient
    decaying: bool = False
    t_env: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    envelope: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def to_dict(self) -> dict:
        return {
            "fitted": self.fitted,
            "slope": self.slope,
            "predicted_slope": self.predicted_slope,
            "ratio": self.ratio,
            "monotone": self.monotone,
            "envelope_ratio": self.envelope_ratio,
            "decaying": self.decaying,
        }


def envelope(t: np.ndarray, z: np.ndarray, lam: float, periods: float = 4.0) -> tuple[np.ndarray, np.ndarray]:
    """|z| averaged over ``periods`` mode periods, sampled once per window."""
    window = periods * 2 * math.pi / lam
    a = np.abs(z)
    avg = moving_average(t, a, window)
    dt = float(t[1] - t[0])
    w = max(1, int(round(window / dt)))
    half = w // 2
    idx = np.arange(half, t.size - half, w)
    return t[idx], avg[idx]


def _affine_slope(t: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    A = np.column_stack([t, np.ones_like(t)])
    (s, c), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(s), float(c)


def compare_decay(
    t: np.ndarray,
    z: np.ndarray,
    lam: float,
    Gamma: float,
    N: int = 1,
    transient: float = 0.1,
    periods: float = 4.0,
) -> DecayFit:
    """Fit 1/envelope^2 on the tail and compare with the reduced mode ODE fitted the same way."""
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=complex)
    if z.ndim > 1:
        if z.shape[1] != 1:
            raise DataError("decay comparison supports a single dominant mode")
        z = z[:, 0]
    if z.size < 4 or not np.any(np.abs(z) > 0):
        return DecayFit(fitted=False)
    if N != 1:
        raise DataError("only N = 1 decay comparisons are supported")
    t_env, env = envelope(t, z, lam, periods)
    sel = t_env >= t[0] + transient * (t[-1] - t[0])
    if sel.sum() < 3:
        return DecayFit(fitted=False)
    te, ee = t_env[sel], env[sel]
    slope, icpt = _affine_slope(te, 1 / ee**2)
    # same pipeline on the reduced model started from the PDE value at the fit start
    i0 = int(np.searchsorted(t, te[0] - 0.5 * periods * 2 * math.pi / lam))
    # integrate on a sub-grid of the sample times: interpolating a rotating zeta biases |zeta|
    dt_s = float(t[1] - t[0])
    sub = max(1, int(math.ceil(dt_s / (2 * math.pi / lam / 100))))
    traj = reduced_mode_ode(z[i0], lam, Gamma, (t.size - 1 - i0) * dt_s, dt_s / sub, N)
    zt = traj.zeta[::sub, 0]
    te2, ee2 = envelope(t[i0:], zt, lam, periods)
    keep = te2 >= te[0]
    pred, _ = _affine_slope(te2[keep], 1 / ee2[keep] ** 2) if keep.sum() >= 2 else (Gamma, 0.0)
    diffs = np.diff(ee)
    monotone = bool(np.all(diffs <= 0))
    return DecayFit(
        fitted=True,
        slope=slope,
        intercept=icpt,
        predicted_slope=pred,
        ratio=slope / pred if pred else math.nan,
        monotone=monotone,
        envelope_ratio=float(ee[-1] / ee[0]),
        decaying=bool(ee[-1] < ee[0]),
        t_env=te,
        envelope=ee,
    )


# ------------------------------------------------------------- report

@dataclass
class StabilityReport:
    omega_plus: Limit
    v_plus: Limit
    z_tail_max: float
    decay: DecayFit
    defects: dict
    scattering: ScatteringResult | None
    norms: dict
    breakdown_frame: int | None = None
    series: ModulationSeries | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        def lim(L: Limit):
            return {"value": L.value, "tail_variation": L.tail_variation, "window": list(L.witness)}

        sc = None
        if self.scattering is not None:
            s = self.scattering
            sc = {
                "early": s.early,
                "mid": s.mid,
                "late": s.late,
                "ratio": s.ratio,
                "halving_ratio": s.halving_ratio,
                "converging": s.converging,
            }
        return {
            "omega_plus": lim(self.omega_plus),
            "v_plus": lim(self.v_plus),
            "z_tail_max": self.z_tail_max,
            "decay": self.decay.to_dict(),
            "defects": self.defects,
            "scattering": sc,
            "dispersive_norms": self.norms,
            "breakdown_frame": self.breakdown_frame,
        }


def stability_report(
    series: ModulationSeries,
    grid: Grid,
    lam: float | None = None,
    Gamma: float | None = None,
    N: int = 1,
    tail: float = 0.25,
    mask: np.ndarray | None = None,
) -> StabilityReport:
    z = series.z
    if z.shape[1] and lam is not None and Gamma is not None:
        decay = compare_decay(series.t, z, lam, Gamma, N)
    else:
        decay = DecayFit(fitted=False)
    sel = series.t >= series.t[-1] - tail * (series.t[-1] - series.t[0]) if series.n else np.zeros(0, bool)
    z_tail = float(np.max(np.abs(z[sel]))) if z.size and sel.any() else 0.0
    smooth = 4 * 2 * math.pi / lam if lam else 0.0
    defects = derivative_defects(series, tail, smooth)
    scat, norms = None, {}
    if len(series.radiation) >= 16:
        rt = series.radiation_t
        idx = np.searchsorted(series.t, rt)
        scat = scattering_extract(rt, series.radiation, series.theta[idx], series.D[idx], series.v[idx], grid, mask)
        norms = dispersive_norms(rt, series.radiation, grid)
    elif series.radiation:
        norms = dispersive_norms(series.radiation_t, series.radiation, grid) if len(series.radiation) > 1 else {}
    return StabilityReport(
        omega_plus=tail_limit(series.t, series.omega, tail),
        v_plus=tail_limit(series.t, series.v, tail),
        z_tail_max=z_tail,
        decay=decay,
        defects=defects,
        scattering=scat,
        norms=norms,
        breakdown_frame=series.breakdown_frame,
        series=series,
    )
