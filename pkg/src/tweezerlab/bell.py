"""CHSH Bell-operator evaluation under ideal and noisy measurement models.

Settings Q, R, S, T rotate the measurement basis by R(theta) = exp(+i theta
Y / 2) with theta = 0, pi/2, 3pi/4, pi/4, so that ideal stations measure
Q = Z, R = X, S = (X - Z)/sqrt(2), T = (X + Z)/sqrt(2) and the CHSH
combination <QS> + <RS> + <RT> - <QT> saturates 2*sqrt(2) on the Psi+ Bell
state.  Outcome convention: "ion" detects the 3P0-associated logical 1 and
carries eigenvalue -1; "no ion" carries +1.  Correlators are exact density-
matrix contractions (no sampling); a seeded finite-shots sampler is
provided separately for synthetic datasets.  Nothing is discarded: lost or
undetected atoms simply report "no ion".
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import c as C_LIGHT

from .atoms import (
    AtomSpecies,
    LaserSet,
    QubitChannel,
    ReadoutPOVM,
    extract_rotation_channel,
    rotation_unitary,
)
from .errors import ConfigurationError, ContractViolation

SETTING_ANGLES = {"Q": 0.0, "R": np.pi / 2.0, "S": 3.0 * np.pi / 4.0,
                  "T": np.pi / 4.0}
SETTINGS = tuple(SETTING_ANGLES)
CHSH_PAIRS = (("Q", "S"), ("R", "S"), ("R", "T"), ("Q", "T"))
LOCAL_REALISM_BOUND = 2.0

OUTCOME_VALUES = {"ion": -1.0, "no_ion": +1.0}

_Z = np.diag([1.0, -1.0]).astype(complex)


def setting_rotation(setting: str) -> np.ndarray:
    """R(theta) = exp(+i theta Y / 2) for the named setting."""
    if setting not in SETTING_ANGLES:
        raise ConfigurationError(f"unknown setting {setting!r}")
    return rotation_unitary(SETTING_ANGLES[setting], axis_phase=-np.pi / 2.0)


def setting_observable(setting: str) -> np.ndarray:
    """Ideal measured observable U^dag Z U."""
    u = setting_rotation(setting)
    return u.conj().T @ _Z @ u


@dataclass(frozen=True)
class MeasurementSettings:
    """The four basis rotations and the outcome-value map."""

    rotations: dict = field(default_factory=lambda: {
        s: setting_rotation(s) for s in SETTINGS})
    outcome_values: dict = field(default_factory=lambda: dict(OUTCOME_VALUES))

    def __post_init__(self):
        for name, u in self.rotations.items():
            if np.max(np.abs(u.conj().T @ u - np.eye(2))) > 1e-12:
                raise ConfigurationError(f"setting {name!r} rotation is not unitary")
        if set(self.outcome_values) != {"ion", "no_ion"}:
            raise ConfigurationError("outcome map needs exactly ion/no_ion")


@dataclass(frozen=True)
class NoisyStation:
    """One measurement station: per-setting rotation channels, readout POVM
    and the timing budget of a single measurement."""

    channels: dict                      # setting -> QubitChannel
    readout: ReadoutPOVM = field(default_factory=ReadoutPOVM)
    basis_latency_s: float = 0.0        # basis-selection electronics
    detection_duration_s: float = 1e-9  # ionization + detection

    def __post_init__(self):
        missing = [s for s in SETTINGS if s not in self.channels]
        if missing:
            raise ConfigurationError(f"station lacks channels for {missing}")
        if self.basis_latency_s < 0 or self.detection_duration_s < 0:
            raise ConfigurationError("latencies must be non-negative")

    @property
    def rotation_duration_s(self) -> float:
        """Duration of the slowest basis rotation."""
        return max(ch.duration for ch in self.channels.values())

    @property
    def total_time_s(self) -> float:
        return (self.rotation_duration_s + self.basis_latency_s
                + self.detection_duration_s)

    def effects(self, setting: str) -> dict:
        """2x2 qubit-input effects {outcome: operator} for one setting:
        the channel pulled back through the readout POVM, so leakage is
        routed by where it sits in the 5-level space (3S1 ionizes, 3P1 and
        3P2 do not)."""
        ch = self.channels[setting]
        e_ion = ch.effect_operator(self.readout.effect_ion)
        e_no = ch.effect_operator(self.readout.effect_no_ion)
        return {"ion": e_ion, "no_ion": e_no}

    def observable(self, setting: str) -> np.ndarray:
        eff = self.effects(setting)
        return (OUTCOME_VALUES["ion"] * eff["ion"]
                + OUTCOME_VALUES["no_ion"] * eff["no_ion"])

    @classmethod
    def ideal(cls, efficiency: float = 1.0, p_loss: float = 0.0,
              basis_latency_s: float = 0.0,
              detection_duration_s: float = 0.0) -> "NoisyStation":
        channels = {s: QubitChannel.from_unitary(setting_rotation(s))
                    for s in SETTINGS}
        return cls(channels=channels,
                   readout=ReadoutPOVM(efficiency=efficiency, p_loss=p_loss),
                   basis_latency_s=basis_latency_s,
                   detection_duration_s=detection_duration_s)

    @classmethod
    def from_species(
        cls,
        species: AtomSpecies,
        lasers: LaserSet,
        readout: ReadoutPOVM | None = None,
        basis_latency_s: float = 0.0,
        detection_duration_s: float = 1e-9,
    ) -> "NoisyStation":
        """Rotation channels extracted from the three-photon drive.

        The drive is calibrated once; the four settings reuse the
        calibrated laser set with the axis phase shifted to -Y.
        """
        from .atoms import calibrate_beam3

        calibrated = calibrate_beam3(species, lasers.with_phase(-np.pi / 2.0))
        channels = {}
        for s in SETTINGS:
            channels[s], _ = extract_rotation_channel(
                species, calibrated, SETTING_ANGLES[s], calibrate=False)
        return cls(channels=channels,
                   readout=readout if readout is not None else ReadoutPOVM(),
                   basis_latency_s=basis_latency_s,
                   detection_duration_s=detection_duration_s)


def _check_two_qubit_state(rho: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ConfigurationError("two-qubit state must be 4x4")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
        raise ContractViolation("state is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ContractViolation("state trace must be 1")
    if float(np.min(np.linalg.eigvalsh(rho))) < -tol:
        raise ContractViolation("state has a negative eigenvalue")
    return rho


def joint_probabilities(
    state: np.ndarray,
    setting_a: str,
    setting_b: str,
    station_a: NoisyStation,
    station_b: NoisyStation,
) -> dict:
    """p(outcome_a, outcome_b) for one setting pair."""
    rho = _check_two_qubit_state(state)
    eff_a = station_a.effects(setting_a)
    eff_b = station_b.effects(setting_b)
    probs = {}
    for oa, ea in eff_a.items():
        for ob, eb in eff_b.items():
            p = float(np.trace(np.kron(ea, eb) @ rho).real)
            probs[(oa, ob)] = p
    total = sum(probs.values())
    if abs(total - 1.0) > 1e-8:
        raise ContractViolation(f"joint probabilities sum to {total:.6f}")
    return probs


def correlator(
    state: np.ndarray,
    setting_a: str,
    setting_b: str,
    station_a: NoisyStation,
    station_b: NoisyStation,
) -> float:
    """E = <value_a * value_b> = p(same) - p(different)."""
    probs = joint_probabilities(state, setting_a, setting_b,
                                station_a, station_b)
    return float(sum(OUTCOME_VALUES[oa] * OUTCOME_VALUES[ob] * p
                     for (oa, ob), p in probs.items()))


@dataclass(frozen=True)
class BellResult:
    correlators: dict              # ("Q","S") etc -> E
    bell_value: float
    joint_probabilities: dict      # setting pair -> outcome-pair probs
    violation: bool

    def as_report(self) -> dict:
        return {
            "bell_value": self.bell_value,
            "violation": self.violation,
            "correlators": {f"{a}{b}": e
                            for (a, b), e in self.correlators.items()},
            "joint_probabilities": {
                f"{a}{b}": {f"{oa}/{ob}": p for (oa, ob), p in tbl.items()}
                for (a, b), tbl in self.joint_probabilities.items()
            },
        }


def bell_value(
    state: np.ndarray,
    station_a: NoisyStation,
    station_b: NoisyStation | None = None,
) -> BellResult:
    """<B> = <QS> + <RS> + <RT> - <QT> on the given state."""
    if station_b is None:
        station_b = station_a
    corr = {}
    probs = {}
    for pair in CHSH_PAIRS:
        probs[pair] = joint_probabilities(state, pair[0], pair[1],
                                          station_a, station_b)
        corr[pair] = float(sum(
            OUTCOME_VALUES[oa] * OUTCOME_VALUES[ob] * p
            for (oa, ob), p in probs[pair].items()))
    b = (corr[("Q", "S")] + corr[("R", "S")] + corr[("R", "T")]
         - corr[("Q", "T")])
    return BellResult(correlators=corr, bell_value=b,
                      joint_probabilities=probs,
                      violation=b > LOCAL_REALISM_BOUND)


def psi_plus() -> np.ndarray:
    """|Psi+> = (|01> + |10>)/sqrt(2) density matrix."""
    v = np.zeros(4, dtype=complex)
    v[1] = v[2] = 1.0 / np.sqrt(2.0)
    return np.outer(v, v.conj())


# --------------------------------------------------------------------------
# finite-shots sampling (synthetic datasets only; curves use exact values)
# --------------------------------------------------------------------------

def sample_outcomes(
    state: np.ndarray,
    station_a: NoisyStation,
    station_b: NoisyStation,
    n_shots: int,
    seed: int,
) -> dict:
    """Multinomial samples per CHSH setting pair; returns counts keyed
    (pair, outcome_a, outcome_b)."""
    if n_shots < 1:
        raise ConfigurationError("n_shots must be positive")
    rng = np.random.default_rng(seed)
    counts = {}
    for pair in CHSH_PAIRS:
        probs = joint_probabilities(state, pair[0], pair[1],
                                    station_a, station_b)
        keys = list(probs)
        p = np.clip(np.array([probs[k] for k in keys]), 0.0, None)
        draw = rng.multinomial(n_shots, p / p.sum())
        for k, n in zip(keys, draw):
            counts[(pair, *k)] = int(n)
    return counts


def estimate_bell_value(counts: dict) -> float:
    """CHSH estimate from sampled counts."""
    est = {}
    for pair in CHSH_PAIRS:
        tot, acc = 0, 0.0
        for (p, oa, ob), n in counts.items():
            if p == pair:
                tot += n
                acc += OUTCOME_VALUES[oa] * OUTCOME_VALUES[ob] * n
        if tot == 0:
            raise ConfigurationError(f"no counts for setting pair {pair}")
        est[pair] = acc / tot
    return (est[("Q", "S")] + est[("R", "S")] + est[("R", "T")]
            - est[("Q", "T")])


# --------------------------------------------------------------------------
# scans and timing
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BellScanPoint:
    irradiance_w_cm2: float
    total_time_s: float | None
    bell_value: float | None
    error: str | None = None


def _bell_scan_point(args) -> BellScanPoint:
    (species, irradiance, lambda1_nm, efficiency, p_loss,
     basis_latency_s, detection_duration_s) = args
    try:
        lasers = LaserSet.resonant(species, irradiance, lambda1_nm=lambda1_nm,
                                   auto="lambda3")
        station = NoisyStation.from_species(
            species, lasers,
            readout=ReadoutPOVM(efficiency=efficiency, p_loss=p_loss),
            basis_latency_s=basis_latency_s,
            detection_duration_s=detection_duration_s)
        result = bell_value(psi_plus(), station)
        return BellScanPoint(float(irradiance), station.total_time_s,
                             result.bell_value)
    except Exception as exc:  # per-point gaps, not aborts
        return BellScanPoint(float(irradiance), None, None, error=str(exc))


def bell_scan(
    species: AtomSpecies,
    irradiances_w_cm2,
    lambda1_nm: float = 688.7,
    efficiency: float = 0.99,
    p_loss: float = 0.0,
    basis_latency_s: float = 0.0,
    detection_duration_s: float = 1e-9,
    workers: int = 1,
) -> list[BellScanPoint]:
    """(total measurement time, <B>) along an irradiance scan.

    Both stations are identical; rotation time follows from the calibrated
    effective Rabi frequency at each irradiance.
    """
    jobs = [(species, irr, lambda1_nm, efficiency, p_loss,
             basis_latency_s, detection_duration_s)
            for irr in irradiances_w_cm2]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_bell_scan_point, jobs))
    return [_bell_scan_point(j) for j in jobs]


@dataclass(frozen=True)
class SpacelikeReport:
    ok: bool
    light_time_s: float
    margin_s: float


def check_spacelike(separation_m: float, total_measurement_time_s: float) -> SpacelikeReport:
    """ok iff the measurement finishes before light can cross the gap."""
    if separation_m <= 0:
        raise ConfigurationError("separation must be positive")
    light_time = separation_m / C_LIGHT
    return SpacelikeReport(
        ok=total_measurement_time_s < light_time,
        light_time_s=light_time,
        margin_s=light_time - total_measurement_time_s,
    )
