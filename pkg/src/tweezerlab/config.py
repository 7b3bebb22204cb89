"""Run configuration loading and validation for the batch CLI.

One YAML file per run.  Every physical quantity carries its unit in the key
name (``_nm``, ``_s``, ``_sigma``, ``_w_cm2``, ...); unknown keys are
rejected with the offending path so typos cannot silently fall back to
defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigurationError

SCHEMA_VERSION = 1


def _require_mapping(obj, path: str) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{path}: expected a mapping, got {type(obj).__name__}")
    return obj


def _take(raw: dict, schema: dict, path: str) -> dict:
    """Validate ``raw`` against {key: default}; None defaults are required."""
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigurationError(
            f"{path}: unknown key(s) {sorted(unknown)}; allowed: {sorted(schema)}")
    out = {}
    for key, default in schema.items():
        if key in raw:
            out[key] = raw[key]
        elif default is _REQUIRED:
            raise ConfigurationError(f"{path}: missing required key {key!r}")
        else:
            out[key] = default
    return out


_REQUIRED = object()


def _as_float(value, path: str) -> float:
    """Numeric coercion with a config-level error (YAML 1.1 reads plain
    scalars like 1.0e6 as strings)."""
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{path}: expected a number, got {value!r}")


def _grid_values(raw, path: str) -> list[float]:
    """Either an explicit list or {start, stop, count, log: false}."""
    if isinstance(raw, (list, tuple)):
        if not raw:
            raise ConfigurationError(f"{path}: empty value list")
        return [_as_float(v, path) for v in raw]
    spec = _take(_require_mapping(raw, path),
                 {"start": _REQUIRED, "stop": _REQUIRED,
                  "count": _REQUIRED, "log": False}, path)
    count = int(spec["count"])
    start = _as_float(spec["start"], f"{path}.start")
    stop = _as_float(spec["stop"], f"{path}.stop")
    if count < 1:
        raise ConfigurationError(f"{path}: count must be >= 1")
    if spec["log"]:
        if start <= 0 or stop <= 0:
            raise ConfigurationError(f"{path}: log spacing needs positive endpoints")
        return list(np.geomspace(start, stop, count))
    return list(np.linspace(start, stop, count))


@dataclass(frozen=True)
class TrapBlock:
    depth_hbar_omega0: float
    omega_perp_omega0: float

    @classmethod
    def from_dict(cls, raw, path: str) -> "TrapBlock":
        from .double_well import DEPTH_DEFAULT
        d = _take(_require_mapping(raw, path),
                  {"depth_hbar_omega0": DEPTH_DEFAULT,
                   "omega_perp_omega0": 10.0}, path)
        return cls(float(d["depth_hbar_omega0"]), float(d["omega_perp_omega0"]))

    def to_trap_config(self, d: float = 0.0):
        from .double_well import TrapConfig
        return TrapConfig(V0=self.depth_hbar_omega0, d=d,
                          omega_perp=self.omega_perp_omega0)


@dataclass(frozen=True)
class ScatteringBlock:
    a00_sigma: float
    a01_sigma: float
    a11_sigma: float

    @classmethod
    def from_dict(cls, raw, path: str) -> "ScatteringBlock":
        d = _take(_require_mapping(raw, path),
                  {"a00_sigma": 0.0, "a01_sigma": 0.0, "a11_sigma": 0.0}, path)
        return cls(float(d["a00_sigma"]), float(d["a01_sigma"]), float(d["a11_sigma"]))

    def to_lengths(self):
        from .double_well import ScatteringLengths
        return ScatteringLengths(a00=self.a00_sigma, a01=self.a01_sigma,
                                 a11=self.a11_sigma)


@dataclass(frozen=True)
class GridBlock:
    n: int
    margin_sigma: float

    @classmethod
    def from_dict(cls, raw, path: str, default_n: int = 128) -> "GridBlock":
        d = _take(_require_mapping(raw, path),
                  {"n": default_n, "margin_sigma": 10.0}, path)
        return cls(int(d["n"]), float(d["margin_sigma"]))


@dataclass(frozen=True)
class SpectraConfig:
    trap: TrapBlock
    scattering_lengths: ScatteringBlock
    d_start_sigma: float
    d_stop_sigma: float
    n_points: int
    sectors: tuple
    levels_per_sector: int
    grid: GridBlock

    @classmethod
    def from_dict(cls, raw, path: str = "spectra") -> "SpectraConfig":
        from .double_well import SECTORS
        d = _take(_require_mapping(raw, path), {
            "trap": None, "scattering_lengths": None,
            "separations_sigma": _REQUIRED, "sectors": list(SECTORS),
            "levels_per_sector": 4, "grid": None,
        }, path)
        seps = _take(_require_mapping(d["separations_sigma"],
                                      f"{path}.separations_sigma"),
                     {"start": 12.0, "stop": 0.0, "count": 25},
                     f"{path}.separations_sigma")
        if int(seps["count"]) < 1:
            raise ConfigurationError(f"{path}.separations_sigma: empty d-range")
        sectors = tuple(d["sectors"])
        bad = [s for s in sectors if s not in SECTORS]
        if bad or not sectors:
            raise ConfigurationError(f"{path}.sectors: invalid sectors {bad or '(empty)'}")
        return cls(
            trap=TrapBlock.from_dict(d["trap"], f"{path}.trap"),
            scattering_lengths=ScatteringBlock.from_dict(
                d["scattering_lengths"], f"{path}.scattering_lengths"),
            d_start_sigma=float(seps["start"]),
            d_stop_sigma=float(seps["stop"]),
            n_points=int(seps["count"]),
            sectors=sectors,
            levels_per_sector=int(d["levels_per_sector"]),
            grid=GridBlock.from_dict(d["grid"], f"{path}.grid"),
        )


@dataclass(frozen=True)
class ScheduleBlock:
    d_max_sigma: float
    d_min_sigma: float
    speed_sigma_per_tau: float
    hold_tau: float

    @classmethod
    def from_dict(cls, raw, path: str) -> "ScheduleBlock":
        d = _take(_require_mapping(raw, path),
                  {"d_max_sigma": 12.0, "d_min_sigma": 0.0,
                   "speed_sigma_per_tau": 0.02, "hold_tau": 0.0}, path)
        return cls(float(d["d_max_sigma"]), float(d["d_min_sigma"]),
                   float(d["speed_sigma_per_tau"]), float(d["hold_tau"]))

    def to_schedule(self, hold: float | None = None):
        from .gate import Schedule
        return Schedule.trapezoid(
            d_max=self.d_max_sigma, d_min=self.d_min_sigma,
            speed=self.speed_sigma_per_tau,
            hold=self.hold_tau if hold is None else hold)


@dataclass(frozen=True)
class GateConfig:
    trap: TrapBlock
    scattering_lengths: ScatteringBlock
    schedule: ScheduleBlock
    method: str
    gamma_target_rad: float | None
    n_points: int
    grid: GridBlock

    @classmethod
    def from_dict(cls, raw, path: str = "gate") -> "GateConfig":
        d = _take(_require_mapping(raw, path), {
            "trap": None, "scattering_lengths": None, "schedule": None,
            "method": "both", "gamma_target_rad": None,
            "spectrum_points": 17, "grid": None,
        }, path)
        if d["method"] not in ("energy-integral", "full-propagation", "both"):
            raise ConfigurationError(f"{path}.method: unknown method {d['method']!r}")
        return cls(
            trap=TrapBlock.from_dict(d["trap"], f"{path}.trap"),
            scattering_lengths=ScatteringBlock.from_dict(
                d["scattering_lengths"], f"{path}.scattering_lengths"),
            schedule=ScheduleBlock.from_dict(d["schedule"], f"{path}.schedule"),
            method=d["method"],
            gamma_target_rad=(None if d["gamma_target_rad"] is None
                              else float(d["gamma_target_rad"])),
            n_points=int(d["spectrum_points"]),
            grid=GridBlock.from_dict(d["grid"], f"{path}.grid"),
        )


def _load_species(name_or_path: str):
    from .atoms import AtomSpecies
    p = Path(name_or_path)
    if p.suffix in (".yaml", ".yml"):
        if not p.exists():
            raise ConfigurationError(f"species file not found: {p}")
        return AtomSpecies.from_yaml(p)
    return AtomSpecies.builtin(name_or_path)


@dataclass(frozen=True)
class RotationScanConfig:
    species: str
    axis: str
    values: tuple
    irradiance_w_cm2: float
    lambda1_nm: float

    @classmethod
    def from_dict(cls, raw, path: str = "rotation_scan") -> "RotationScanConfig":
        d = _take(_require_mapping(raw, path), {
            "species": "Sr", "axis": _REQUIRED, "values": _REQUIRED,
            "irradiance_w_cm2": 1e9, "lambda1_nm": 688.7,
        }, path)
        if d["axis"] not in ("wavelength", "irradiance"):
            raise ConfigurationError(f"{path}.axis: must be wavelength or irradiance")
        values = _grid_values(d["values"], f"{path}.values")
        return cls(species=str(d["species"]), axis=d["axis"], values=tuple(values),
                   irradiance_w_cm2=float(d["irradiance_w_cm2"]),
                   lambda1_nm=float(d["lambda1_nm"]))

    def load_species(self):
        return _load_species(self.species)


@dataclass(frozen=True)
class BellScanConfig:
    species: str
    irradiances_w_cm2: tuple
    lambda1_nm: float
    efficiency: float
    p_loss: float
    basis_latency_s: float
    detection_duration_s: float
    shots: int | None

    @classmethod
    def from_dict(cls, raw, path: str = "bell_scan") -> "BellScanConfig":
        d = _take(_require_mapping(raw, path), {
            "species": "Sr", "irradiances_w_cm2": _REQUIRED,
            "lambda1_nm": 688.7, "efficiency": 0.99, "p_loss": 0.0,
            "basis_latency_s": 0.0, "detection_duration_s": 1e-9,
            "shots": None,
        }, path)
        if d["basis_latency_s"] > 10e-9:
            raise ConfigurationError(f"{path}.basis_latency_s: above the 10 ns cap")
        return cls(species=str(d["species"]),
                   irradiances_w_cm2=tuple(_grid_values(
                       d["irradiances_w_cm2"], f"{path}.irradiances_w_cm2")),
                   lambda1_nm=float(d["lambda1_nm"]),
                   efficiency=float(d["efficiency"]), p_loss=float(d["p_loss"]),
                   basis_latency_s=float(d["basis_latency_s"]),
                   detection_duration_s=float(d["detection_duration_s"]),
                   shots=None if d["shots"] is None else int(d["shots"]))

    def load_species(self):
        return _load_species(self.species)


@dataclass(frozen=True)
class SpacelikeConfig:
    separation_m: float
    total_measurement_time_s: float

    @classmethod
    def from_dict(cls, raw, path: str = "spacelike_check") -> "SpacelikeConfig":
        d = _take(_require_mapping(raw, path), {
            "separation_m": 3.0, "total_measurement_time_s": _REQUIRED}, path)
        return cls(float(d["separation_m"]), float(d["total_measurement_time_s"]))


@dataclass(frozen=True)
class LightShiftConfig:
    species: str
    linewidth_hz: float

    @classmethod
    def from_dict(cls, raw, path: str = "light_shift") -> "LightShiftConfig":
        d = _take(_require_mapping(raw, path),
                  {"species": "Sr", "linewidth_hz": _REQUIRED}, path)
        return cls(str(d["species"]), float(d["linewidth_hz"]))

    def load_species(self):
        return _load_species(self.species)


_SECTION_PARSERS = {
    "spectra": SpectraConfig.from_dict,
    "gate": GateConfig.from_dict,
    "rotation_scan": RotationScanConfig.from_dict,
    "bell_scan": BellScanConfig.from_dict,
    "spacelike_check": SpacelikeConfig.from_dict,
    "light_shift": LightShiftConfig.from_dict,
}


@dataclass(frozen=True)
class RunConfig:
    """Parsed top-level run file: schema version plus one section per
    subcommand that appears in the file."""

    schema_version: int
    sections: dict
    raw: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"config is not valid YAML: {exc}") from exc
        return cls.from_dict(_require_mapping(raw, str(path)))

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {"schema_version", *_SECTION_PARSERS}
        unknown = set(raw) - known
        if unknown:
            raise ConfigurationError(
                f"unknown top-level key(s) {sorted(unknown)}; allowed: {sorted(known)}")
        version = raw.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigurationError(
                f"schema_version {version} unsupported (expected {SCHEMA_VERSION})")
        sections = {}
        for name, parser in _SECTION_PARSERS.items():
            if name in raw:
                try:
                    sections[name] = parser(raw[name])
                except (TypeError, ValueError) as exc:
                    raise ConfigurationError(f"{name}: {exc}") from exc
        if not sections:
            raise ConfigurationError("config contains no runnable section")
        return cls(schema_version=version, sections=sections, raw=dict(raw))

    def section(self, name: str):
        if name not in self.sections:
            raise ConfigurationError(
                f"config has no {name!r} section (found: {sorted(self.sections)})")
        return self.sections[name]
