"""Command line entry point ``nlslab``.

Exit codes: 0 success, 1 numerical failure (a JSON error record goes to stderr
and, when an output directory is set, to ``error.json``), 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import Config, ConfigError, from_dict, load_config
from .errors import NlsLabError
from .field import Grid, SpinorField, read_snapshot

log = logging.getLogger("nlslab")


class UsageError(Exception):
    pass


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        obj = obj.item()
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True)


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _emit(obj, out: Path | None, name: str) -> None:
    text = dumps(obj)
    if out is not None:
        (out / name).write_text(text + "\n")
    print(text)


# ------------------------------------------------------------------ commands

def _ground_entry(cfg: Config):
    from .groundstate import ground_state_entry

    return ground_state_entry(cfg.beta, cfg.omega, cfg.grid)


def cmd_groundstate(cfg: Config, args, out: Path | None) -> dict:
    from .groundstate import check_lplus, family_scan

    lo, hi = cfg.analysis.omega_range
    fam = family_scan(cfg.beta, lo, hi, cfg.analysis.omega_count, cfg.grid)
    rows = [
        {"omega": e.omega, "q": e.q, "e": e.e, "d": e.d, "q_prime": e.q_prime, "lplus_negative_count": check_lplus(e).n_negative}
        for e in fam.entries
    ]
    if out is not None:
        _write_csv(out / "family.csv", rows)
    summary = {"samples": len(rows), "min_q_prime": fam.min_q_prime, "H4": fam.h4, "family": rows}
    _emit(summary, out, "groundstate.json")
    return summary


def _spectrum(cfg: Config):
    from .linearize import assemble
    from .spectrum import discrete_spectrum

    entry = _ground_entry(cfg)
    H = assemble(entry, cfg.beta)
    return entry, H, discrete_spectrum(H)


def cmd_spectrum(cfg: Config, args, out: Path | None) -> dict:
    _, H, spec = _spectrum(cfg)
    rep = {
        "omega": cfg.omega,
        "m": spec.m,
        "N": spec.N,
        "eigenvalues": list(spec.eigenvalues),
        "residuals": spec.residuals,
        "outer_mass": spec.outer_mass,
        "biorthogonality_defect": float(np.max(np.abs(spec.biorthogonality(H) - np.eye(2 * spec.m)))) if spec.m else 0.0,
    }
    _emit(rep, out, "spectrum.json")
    return rep


def cmd_check_hypotheses(cfg: Config, args, out: Path | None) -> dict:
    from .spectrum import check_hypotheses, embedded_scan

    entry, H, spec = _spectrum(cfg)
    grids = [Grid(1, n, L) for n, L in cfg.analysis.embedded_grids] if not args.skip_embedded else []
    emb = embedded_scan(cfg.beta, cfg.omega, grids) if grids else None
    rep = check_hypotheses(spec, cfg.omega, entry=entry, embedded=emb, H=H).to_dict()
    _emit(rep, out, "hypotheses.json")
    return rep


def cmd_fgr(cfg: Config, args, out: Path | None) -> dict:
    from .fgr import fgr_report

    _, H, spec = _spectrum(cfg)
    if spec.m == 0:
        rep = {"omega": cfg.omega, "m": 0, "Gamma": None, "note": "no internal modes"}
    else:
        rep = {"omega": cfg.omega, "m": spec.m, **fgr_report(H, spec, cfg.beta).to_dict()}
    _emit(rep, out, "fgr.json")
    return rep


def _initial(cfg: Config):
    from .simulate import initial_field

    sim = cfg.sim_config()
    U0 = initial_field(sim)
    noise = cfg.noise()
    if noise is not None:
        U0 = SpinorField.from_scalar(cfg.grid, U0.u + noise, 0.0)
    return sim, U0


def cmd_simulate(cfg: Config, args, out: Path | None) -> dict:
    from .simulate import run

    sim, U0 = _initial(cfg)
    if out is not None and not sim.snapshot_stride:
        sim.snapshot_stride = sim.sample_stride
    traj = run(sim, U0, keep_snapshots=out is not None)
    rep = {
        "steps": sim.n_steps,
        "samples": int(traj.times.size),
        "aborted": traj.aborted,
        "message": traj.message,
        "Q_drift": float(np.ptp(traj.Q) / max(abs(traj.Q[0]), 1e-300)) if traj.Q.size else 0.0,
        "Pi_drift": float(np.ptp(traj.Pi)) if traj.Pi.size else 0.0,
        "E_drift": float(np.ptp(traj.E) / max(abs(traj.E[0]), 1e-300)) if traj.E.size else 0.0,
    }
    if out is not None:
        traj.write_csv(out / "conserved.csv")
        traj.write_snapshots(out / "snapshots")
    _emit(rep, out, "simulate.json")
    if traj.aborted:
        raise NlsLabError(traj.message)
    return rep


def _analyze_frames(cfg: Config, frames, out: Path | None) -> dict:
    from .diagnostics import interior_mask, stability_report, track_modulation
    from .fgr import fgr_report
    from .modulation import SolitonBranch
    from .svg import line_plot

    hw = cfg.analysis.branch_half_width
    branch = SolitonBranch(cfg.beta, cfg.grid, cfg.omega, half_width=hw)
    lam = Gamma = None
    if branch.m:
        lam = float(branch.eigenvalues(cfg.omega)[0])
        Gamma = fgr_report(branch.operator(cfg.omega), branch.modes(cfg.omega), cfg.beta).Gamma
    series = track_modulation(frames, branch, (cfg.omega, cfg.theta, cfg.D, cfg.v), radiation_stride=cfg.analysis.radiation_stride)
    if series.n == 0:
        raise NlsLabError("modulation fit failed on the first frame")
    mask = interior_mask(cfg.grid) if cfg.sponge else None
    rep = stability_report(series, cfg.grid, lam, Gamma, tail=cfg.analysis.tail, mask=mask)
    d = rep.to_dict()
    d["lambda"], d["Gamma"] = lam, Gamma
    d["z_max"] = float(np.max(np.abs(series.z))) if series.z.size else 0.0
    d["omega_max_deviation"] = float(np.max(np.abs(series.omega - series.omega[0])))
    if out is not None:
        _write_csv(out / "modulation.csv", series.rows())
        line_plot(out / "parameters.svg", series.t, {"omega": series.omega, "v": series.v}, "modulation parameters")
        if series.z.size:
            line_plot(out / "mode.svg", series.t, {"|z|": np.abs(series.z[:, 0])}, "internal mode amplitude")
    _emit(d, out, "stability.json")
    return d


def cmd_analyze(cfg: Config, args, out: Path | None) -> dict:
    if args.trajectory:
        src = Path(args.trajectory)
        files = sorted(src.glob("*.nlsf"))
        if not files:
            raise UsageError(f"no .nlsf snapshots in {src}")
        frames = (read_snapshot(f) for f in files)
    else:
        from .simulate import iter_frames

        sim, U0 = _initial(cfg)
        frames = iter_frames(sim, U0)
    return _analyze_frames(cfg, frames, out)


def cmd_report(cfg: Config, args, out: Path | None) -> dict:
    from .simulate import iter_frames

    args.skip_embedded = getattr(args, "skip_embedded", False)
    sub = None if out is None else out
    hyp = cmd_check_hypotheses(cfg, args, sub)
    fg = cmd_fgr(cfg, args, sub)
    sim, U0 = _initial(cfg)
    stab = _analyze_frames(cfg, iter_frames(sim, U0), sub)
    rep = {"hypotheses": hyp, "fgr": fg, "stability": stab}
    _emit(rep, out, "report.json")
    return rep


COMMANDS = {
    "groundstate": cmd_groundstate,
    "spectrum": cmd_spectrum,
    "check-hypotheses": cmd_check_hypotheses,
    "fgr": cmd_fgr,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlslab", description="Soliton stability laboratory for 1D/radial NLS.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("-c", "--config", help="YAML or JSON configuration file (defaults: cubic, d=1, omega=1)")
        sp.add_argument("-o", "--out", help="output directory")
        if name in ("check-hypotheses", "report"):
            sp.add_argument("--skip-embedded", action="store_true", help="skip the dense embedded-eigenvalue scan")
        if name == "analyze":
            sp.add_argument("--trajectory", help="directory of .nlsf snapshots written by simulate")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else from_dict({})
        out = None
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, args, out)
    except (ConfigError, UsageError) as exc:
        print(f"nlslab: error: {exc}", file=sys.stderr)
        return 2
    except (NlsLabError, ArithmeticError, np.linalg.LinAlgError) as exc:
        record = dumps({"error": type(exc).__name__, "message": str(exc), "command": args.command})
        print(record, file=sys.stderr)
        if args.out:
            Path(args.out, "error.json").write_text(record + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
