"""Batch CLI: deterministic CSV/JSON emission for all scans and checks.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 scan
completed with per-point gaps.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import ConfigurationError, TweezerlabError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_PARTIAL = 4


def _fmt(x) -> str:
    """Deterministic scalar formatting (shortest round-trip float repr)."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return '"' + x.replace('"', '""') + '"' if ("," in x or '"' in x) else x
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows: list) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, config_path: Path, resolved: dict,
                    outputs: list[Path], started: float, seed: int | None) -> Path:
    manifest = {
        "tool": "tweezerlab",
        "version": __version__,
        "seed": seed,
        "config_file": str(config_path),
        "config_sha256": _sha256(config_path),
        "resolved_config": resolved,
        "wall_clock_s": time.monotonic() - started,
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _resolved(section) -> dict:
    """JSON-safe snapshot of a parsed config section."""
    def conv(obj):
        if hasattr(obj, "__dataclass_fields__"):
            return {k: conv(getattr(obj, k)) for k in obj.__dataclass_fields__}
        if isinstance(obj, (list, tuple)):
            return [conv(v) for v in obj]
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        return obj
    return conv(section)


# --------------------------------------------------------------------------
# subcommand runners: each returns (exit_code, output paths)
# --------------------------------------------------------------------------

def run_spectra(cfg, out_dir: Path, workers: int, seed: int | None):
    from .double_well import adiabatic_spectrum, default_grid_2d
    from .grids import Grid1D
    from .spectral import RelaxationOptions

    section = cfg.section("spectra")
    ds = np.linspace(section.d_start_sigma, section.d_stop_sigma, section.n_points)
    order = np.argsort(ds)[::-1]  # continuation runs from large to small d
    configs = [section.trap.to_trap_config(float(d)) for d in ds[order]]
    a = section.scattering_lengths.to_lengths()
    grid = Grid1D.centered(section.grid.n,
                           max(ds) / 2.0 + section.grid.margin_sigma)
    options = RelaxationOptions(boundary_tol=1e-4)

    outputs = []
    for sector in section.sectors:
        curve = adiabatic_spectrum(configs, a, sector,
                                   section.levels_per_sector,
                                   grid=grid, options=options)
        rows = [(d, idx, e, sym) for (d, idx, e, sym) in curve.to_rows()]
        path = out_dir / f"spectrum_{sector}.csv"
        _write_csv(path, ["d_sigma", "level", "energy_hbar_omega0", "symmetry"],
                   rows)
        outputs.append(path)
    return EXIT_OK, outputs


def run_gate(cfg, out_dir: Path, workers: int, seed: int | None):
    from .gate import (
        accumulate_phases,
        assemble_exchange_unitary,
        check_adiabaticity,
        compose_controlled_phase,
        sector_ground_curves,
        tune_hold_for_combination,
    )
    from .double_well import SECTORS, default_grid_2d
    from .spectral import RelaxationOptions

    section = cfg.section("gate")
    trap = section.trap.to_trap_config()
    a = section.scattering_lengths.to_lengths()
    schedule = section.schedule.to_schedule()
    grid = default_grid_2d(schedule.d_max, n=section.grid.n,
                           margin=section.grid.margin_sigma)
    options = RelaxationOptions(boundary_tol=1e-4)
    curves = sector_ground_curves(schedule, a, trap, n_points=section.n_points,
                                  grid=grid, options=options)

    report: dict = {"schedule": _resolved(section.schedule)}

    if section.gamma_target_rad is not None:
        # principal branch of the combination/(2n +/- 1/2) relation; the
        # reachable representative modulo 2 pi fixes the same gate class
        target_combo = section.gamma_target_rad / 2.0
        hold = tune_hold_for_combination(
            lambda h: section.schedule.to_schedule(hold=h),
            target_combo, a, trap, lambda sched: curves, fold_2pi=True)
        schedule = section.schedule.to_schedule(hold=hold)
        report["tuned_hold_tau"] = hold

    adiabaticity = check_adiabaticity(schedule, curves, trap.V0)
    report["adiabaticity"] = {
        "worst_ratio": adiabaticity.worst_ratio,
        "flagged": adiabaticity.flagged,
    }
    if adiabaticity.flagged:
        report["warnings"] = ["schedule flagged as non-adiabatic"]

    methods = (["energy-integral", "full-propagation"]
               if section.method == "both" else [section.method])
    for method in methods:
        phases = accumulate_phases(schedule, a, trap, method=method,
                                   curves=curves, grid=grid, options=options)
        U = assemble_exchange_unitary(phases)
        G, gamma, cp_report = compose_controlled_phase(
            U, combination=phases.combination)
        entry = {
            "phi_00": phases.phi_00, "phi_11": phases.phi_11,
            "phi_plus": phases.phi_plus, "phi_minus": phases.phi_minus,
            "combination": phases.combination,
            "gamma": gamma,
            "gamma_branch": list(cp_report.branch),
            "invariant_residual": cp_report.residual,
        }
        if phases.leakage is not None:
            entry["leakage"] = {k: phases.leakage[k] for k in SECTORS}
        report[method] = entry

    path = out_dir / "gate_report.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK, [path]


def run_rotation_scan(cfg, out_dir: Path, workers: int, seed: int | None):
    from .atoms import scan_rotation

    section = cfg.section("rotation_scan")
    species = section.load_species()
    points = scan_rotation(species, section.axis, list(section.values),
                           irradiance_w_cm2=section.irradiance_w_cm2,
                           lambda1_nm=section.lambda1_nm, workers=workers)
    axis_col = ("wavelength_nm" if section.axis == "wavelength"
                else "irradiance_w_cm2")
    rows = [(p.x, p.f_min, p.t_pi, p.error or "") for p in points]
    path = out_dir / "rotation_scan.csv"
    _write_csv(path, [axis_col, "f_min", "t_pi_s", "error"], rows)
    gaps = any(p.error for p in points)
    return (EXIT_PARTIAL if gaps else EXIT_OK), [path]


def run_bell_scan(cfg, out_dir: Path, workers: int, seed: int | None):
    from .bell import (
        LOCAL_REALISM_BOUND,
        NoisyStation,
        ReadoutPOVM,
        bell_scan,
        estimate_bell_value,
        psi_plus,
        sample_outcomes,
    )
    from .atoms import LaserSet

    section = cfg.section("bell_scan")
    species = section.load_species()
    points = bell_scan(species, list(section.irradiances_w_cm2),
                       lambda1_nm=section.lambda1_nm,
                       efficiency=section.efficiency, p_loss=section.p_loss,
                       basis_latency_s=section.basis_latency_s,
                       detection_duration_s=section.detection_duration_s,
                       workers=workers)
    rows = [(p.total_time_s * 1e9 if p.total_time_s else None,
             p.irradiance_w_cm2, p.bell_value, LOCAL_REALISM_BOUND,
             p.error or "")
            for p in points]
    path = out_dir / "bell_scan.csv"
    _write_csv(path, ["time_ns", "irradiance_w_cm2", "bell_value",
                      "threshold", "error"], rows)
    outputs = [path]

    if section.shots is not None:
        if seed is None:
            raise ConfigurationError("bell_scan.shots requires --seed")
        best = max((p for p in points if p.bell_value is not None),
                   key=lambda p: p.bell_value, default=None)
        if best is not None:
            lasers = LaserSet.resonant(species, best.irradiance_w_cm2,
                                       lambda1_nm=section.lambda1_nm,
                                       auto="lambda3")
            station = NoisyStation.from_species(
                species, lasers,
                readout=ReadoutPOVM(efficiency=section.efficiency,
                                    p_loss=section.p_loss),
                basis_latency_s=section.basis_latency_s,
                detection_duration_s=section.detection_duration_s)
            counts = sample_outcomes(psi_plus(), station, station,
                                     section.shots, seed)
            count_rows = [(f"{a}{b}", oa, ob, n)
                          for ((a, b), oa, ob), n in sorted(counts.items())]
            cpath = out_dir / "bell_counts.csv"
            _write_csv(cpath, ["pair", "outcome_a", "outcome_b", "count"],
                       count_rows)
            spath = out_dir / "bell_sampled.json"
            spath.write_text(json.dumps(
                {"shots_per_pair": section.shots, "seed": seed,
                 "bell_estimate": estimate_bell_value(counts)},
                indent=2, sort_keys=True) + "\n")
            outputs += [cpath, spath]

    gaps = any(p.error for p in points)
    return (EXIT_PARTIAL if gaps else EXIT_OK), outputs


def run_spacelike_check(cfg, out_dir: Path, workers: int, seed: int | None):
    from .bell import check_spacelike

    section = cfg.section("spacelike_check")
    report = check_spacelike(section.separation_m,
                             section.total_measurement_time_s)
    path = out_dir / "spacelike_check.json"
    path.write_text(json.dumps({
        "separation_m": section.separation_m,
        "total_measurement_time_s": section.total_measurement_time_s,
        "light_time_s": report.light_time_s,
        "margin_s": report.margin_s,
        "ok": report.ok,
    }, indent=2, sort_keys=True) + "\n")
    return EXIT_OK, [path]


def run_light_shift(cfg, out_dir: Path, workers: int, seed: int | None):
    from .atoms import light_shift_stability

    section = cfg.section("light_shift")
    species = section.load_species()
    shift = light_shift_stability(species, section.linewidth_hz)
    path = out_dir / "light_shift.json"
    path.write_text(json.dumps({
        "species": species.name,
        "trap_linewidth_hz": section.linewidth_hz,
        "differential_shift_hz": shift,
    }, indent=2, sort_keys=True) + "\n")
    return EXIT_OK, [path]


_RUNNERS = {
    "spectra": run_spectra,
    "gate": run_gate,
    "rotation-scan": run_rotation_scan,
    "bell-scan": run_bell_scan,
    "spacelike-check": run_spacelike_check,
    "light-shift": run_light_shift,
}

_SECTION_FOR = {
    "spectra": "spectra",
    "gate": "gate",
    "rotation-scan": "rotation_scan",
    "bell-scan": "bell_scan",
    "spacelike-check": "spacelike_check",
    "light-shift": "light_shift",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tweezerlab",
        description="Double-well exchange gates, three-photon rotations and "
                    "CHSH Bell scans.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.monotonic()
    try:
        cfg = RunConfig.load(args.config)
        section = cfg.section(_SECTION_FOR[args.command])
        if args.workers < 1:
            raise ConfigurationError("--workers must be >= 1")
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        code, outputs = _RUNNERS[args.command](cfg, out_dir, args.workers,
                                               args.seed)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TweezerlabError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _write_manifest(out_dir, Path(args.config), _resolved(section),
                    outputs, started, args.seed)
    if code == EXIT_PARTIAL:
        print("scan finished with gaps; see the error column", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
