"""Exchange-gate engine: separation schedules, adiabaticity margins,
Bell-basis phase accumulation, and the controlled-phase composition.

Phase bookkeeping: each two-qubit sector rides its adiabatic ground curve
E_X(d); the accumulated phase is the raw action integral
phi_X = integral E_X(d(t)) dt (hbar = 1).  Only the combination
phi_00 + phi_11 - phi_+ - phi_- is consumed downstream; it is invariant
under global energy offsets.  The full-propagation route evolves each
sector's symmetrized two-atom state in real time with the sector's
adiabatic energy subtracted from the Hamiltonian, so the residual overlap
phase is small and the unwrapped total is integral + residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import det, expm

from .double_well import (
    SECTORS,
    ScatteringLengths,
    TrapConfig,
    adiabatic_spectrum,
    default_grid_2d,
    interaction_coupling,
    single_particle_levels,
    SpectrumCurve,
)
from .errors import ConfigurationError, InconsistencyError, NonAdiabaticError
from .grids import Grid1D, PotentialField, Wavefunction
from .spectral import RelaxationOptions, SplitOperatorPropagator, relax_eigenstates

PhaseMethod = Literal["energy-integral", "full-propagation"]

ADIABATIC_RATIO_FLAG = 0.1
LEAKAGE_LIMIT = 0.05
METHOD_AGREEMENT_TOL = 0.05

BASIS_00, BASIS_01, BASIS_10, BASIS_11 = range(4)


# --------------------------------------------------------------------------
# schedules
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    d_start: float
    d_end: float
    speed: float  # |dd/dt| > 0

    def __post_init__(self):
        if self.speed <= 0:
            raise ConfigurationError("segment speed must be positive")
        if self.d_start < 0 or self.d_end < 0:
            raise ConfigurationError("separations must be non-negative")

    @property
    def duration(self) -> float:
        return abs(self.d_end - self.d_start) / self.speed


@dataclass(frozen=True)
class Hold:
    d: float
    duration: float

    def __post_init__(self):
        if self.d < 0 or self.duration < 0:
            raise ConfigurationError("hold requires d >= 0 and duration >= 0")

    @property
    def d_start(self) -> float:
        return self.d

    @property
    def d_end(self) -> float:
        return self.d


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant-speed separation trajectory d(t).

    Must start and end at the same d_max >= 10 sigma (atoms begin and end
    well separated).
    """

    steps: tuple

    MIN_D_MAX = 10.0

    def __post_init__(self):
        if not self.steps:
            raise ConfigurationError("schedule needs at least one step")
        for prev, nxt in zip(self.steps, self.steps[1:]):
            if abs(prev.d_end - nxt.d_start) > 1e-12:
                raise ConfigurationError("schedule steps must be contiguous in d")
        d0, d1 = self.steps[0].d_start, self.steps[-1].d_end
        if abs(d0 - d1) > 1e-12:
            raise ConfigurationError("schedule must start and end at the same separation")
        if d0 < self.MIN_D_MAX:
            raise ConfigurationError(
                f"schedule endpoints must sit at d_max >= {self.MIN_D_MAX} sigma"
            )

    @property
    def d_max(self) -> float:
        return self.steps[0].d_start

    @property
    def d_min(self) -> float:
        return min(min(s.d_start, s.d_end) for s in self.steps)

    @property
    def total_time(self) -> float:
        return sum(s.duration for s in self.steps)

    def d_of_t(self, t: float) -> float:
        if t < 0 or t > self.total_time + 1e-12:
            raise ConfigurationError("time outside schedule")
        acc = 0.0
        for s in self.steps:
            if t <= acc + s.duration or s is self.steps[-1]:
                if isinstance(s, Hold) or s.duration == 0:
                    return s.d_end
                frac = min(max((t - acc) / s.duration, 0.0), 1.0)
                return s.d_start + frac * (s.d_end - s.d_start)
            acc += s.duration
        return self.steps[-1].d_end

    def scaled_speed(self, factor: float) -> "Schedule":
        out = []
        for s in self.steps:
            if isinstance(s, Hold):
                out.append(s)
            else:
                out.append(Segment(s.d_start, s.d_end, s.speed * factor))
        return Schedule(tuple(out))

    @classmethod
    def trapezoid(cls, d_max: float = 12.0, d_min: float = 0.0,
                  speed: float = 0.02, hold: float = 0.0) -> "Schedule":
        """Default gate trajectory: approach, hold at d_min, retreat."""
        steps = [Segment(d_max, d_min, speed)]
        if hold > 0:
            steps.append(Hold(d_min, hold))
        steps.append(Segment(d_min, d_max, speed))
        return cls(tuple(steps))

    @classmethod
    def hold_only(cls, d: float, duration: float) -> "Schedule":
        return cls((Hold(d, duration),))


# --------------------------------------------------------------------------
# adiabaticity
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SegmentMargin:
    d_start: float
    d_end: float
    speed: float
    min_bound: float      # min over d of sigma * gap^2 / V0
    ratio: float          # speed / min_bound (0 for holds)
    flagged: bool


@dataclass(frozen=True)
class AdiabaticityReport:
    segments: tuple
    flagged: bool

    @property
    def worst_ratio(self) -> float:
        return max((s.ratio for s in self.segments), default=0.0)


def _min_coupled_gap(curve: SpectrumCurve) -> np.ndarray:
    """Per-separation smallest gap between the tracked ground level and any
    higher level in the same exchange-symmetry and parity sector."""
    gaps = []
    for pts in curve.levels:
        ground = pts[0]
        candidates = [
            abs(p.energy - ground.energy)
            for p in pts[1:]
            if p.symmetry == ground.symmetry and p.parity == ground.parity
        ]
        if not candidates:
            raise ConfigurationError(
                "spectrum curve has no coupled excited level; request more levels"
            )
        gaps.append(min(candidates))
    return np.array(gaps)


def check_adiabaticity(
    schedule: Schedule,
    curves: dict[str, SpectrumCurve],
    V0: float,
) -> AdiabaticityReport:
    """Compare each moving segment's speed against sigma*hbar*omega_ab^2/V0.

    omega_ab is the smallest gap, over the segment's d range and over the
    supplied sector curves, to any state the motion can couple to (same
    exchange symmetry and parity).  Segments with ratio > 0.1 are flagged.
    """
    if not curves:
        raise ConfigurationError("no spectrum curves supplied")
    per_sector = {}
    for name, curve in curves.items():
        ds = np.array(curve.separations)
        if ds[0] < schedule.d_max - 1e-9 or ds[-1] > schedule.d_min + 1e-9:
            raise ConfigurationError(
                f"curve for sector {name!r} does not cover the schedule's d range"
            )
        per_sector[name] = (ds, _min_coupled_gap(curve))

    margins = []
    any_flag = False
    for s in schedule.steps:
        if isinstance(s, Hold) or s.duration == 0:
            margins.append(SegmentMargin(s.d_start, s.d_end, 0.0, np.inf, 0.0, False))
            continue
        lo, hi = sorted((s.d_start, s.d_end))
        min_bound = np.inf
        for ds, gaps in per_sector.values():
            mask = (ds >= lo - 1e-9) & (ds <= hi + 1e-9)
            seg_gaps = gaps[mask] if mask.any() else gaps
            min_bound = min(min_bound, float(np.min(seg_gaps ** 2) / V0))
        ratio = s.speed / min_bound
        flagged = ratio > ADIABATIC_RATIO_FLAG
        any_flag = any_flag or flagged
        margins.append(SegmentMargin(s.d_start, s.d_end, s.speed, min_bound, ratio, flagged))
    return AdiabaticityReport(segments=tuple(margins), flagged=any_flag)


# --------------------------------------------------------------------------
# phase accumulation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GatePhases:
    phi_00: float
    phi_11: float
    phi_plus: float
    phi_minus: float
    method: str
    leakage: dict | None = None

    def phase(self, sector: str) -> float:
        return {
            "00": self.phi_00, "11": self.phi_11,
            "psi_plus": self.phi_plus, "psi_minus": self.phi_minus,
        }[sector]

    @property
    def combination(self) -> float:
        """phi_00 + phi_11 - phi_+ - phi_-, the quantity fixing the gate class."""
        return self.phi_00 + self.phi_11 - self.phi_plus - self.phi_minus


def sector_ground_curves(
    schedule: Schedule,
    a: ScatteringLengths,
    cfg: TrapConfig,
    k: int = 4,
    n_points: int = 25,
    grid: Grid1D | None = None,
    options: RelaxationOptions | None = None,
) -> dict[str, SpectrumCurve]:
    """Adiabatic curves for all four sectors over the schedule's d range.

    Sectors with identical (s, coupling) share one computation.
    """
    if schedule.d_max - schedule.d_min < 1e-12:
        ds = np.array([schedule.d_max])
    else:
        ds = np.linspace(schedule.d_max, schedule.d_min, n_points)
    configs = [cfg.with_separation(d) for d in ds]
    curves: dict[str, SpectrumCurve] = {}
    cache: dict[tuple, SpectrumCurve] = {}
    for sector in SECTORS:
        s = -1 if sector == "psi_minus" else +1
        key = (s, a.for_sector(sector))
        if key not in cache:
            cache[key] = adiabatic_spectrum(configs, a, sector, k, grid=grid,
                                            options=options)
        src = cache[key]
        curves[sector] = SpectrumCurve(
            sector=sector, separations=src.separations, levels=src.levels,
            warnings=list(src.warnings),
        )
    return curves


class _ConstantSpline:
    """Degenerate stand-in for CubicSpline when the schedule never moves."""

    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, d):
        return self.value

    def integrate(self, lo: float, hi: float) -> float:
        return self.value * (hi - lo)


def _ground_spline(curve: SpectrumCurve):
    ds = np.array(curve.separations)[::-1]
    es = curve.ground_energies()[::-1]
    if ds.size == 1 or np.ptp(ds) < 1e-12:
        return _ConstantSpline(es[0])
    return CubicSpline(ds, es)


def _integral_phase(schedule: Schedule, spline: CubicSpline) -> float:
    phi = 0.0
    for s in schedule.steps:
        if isinstance(s, Hold) or s.duration == 0:
            phi += float(spline(s.d)) * s.duration
        else:
            lo, hi = sorted((s.d_start, s.d_end))
            phi += float(spline.integrate(lo, hi)) / s.speed
    return phi


def separated_orbitals(grid: Grid1D, cfg: TrapConfig, d: float):
    """Ground orbitals of the isolated left/right wells at separation d,
    symmetrically (Loewdin) orthogonalized."""
    centers = (-d / 2.0, d / 2.0)
    orbs = []
    for c in centers:
        V = PotentialField(grid, -cfg.V0 * np.exp(-((grid.x - c) ** 2) / 2.0))
        (_, wf), = relax_eigenstates(V, 1, mass=cfg.mass)
        psi = wf.psi
        # fix the arbitrary global phase so orbitals are real and positive
        peak = psi[np.argmax(np.abs(psi))]
        orbs.append((psi * (abs(peak) / peak)).real)
    s_mat = np.array([
        [np.dot(oi, oj) * grid.dx for oj in orbs] for oi in orbs
    ])
    vals, vecs = np.linalg.eigh(s_mat)
    s_inv_half = vecs @ np.diag(vals ** -0.5) @ vecs.T
    left = s_inv_half[0, 0] * orbs[0] + s_inv_half[1, 0] * orbs[1]
    right = s_inv_half[0, 1] * orbs[0] + s_inv_half[1, 1] * orbs[1]
    return left, right


def symmetrized_pair(grid: Grid1D, left: np.ndarray, right: np.ndarray, s: int) -> Wavefunction:
    psi = np.outer(left, right) + s * np.outer(right, left)
    return Wavefunction(grid, psi).normalized()


@dataclass
class SectorPropagation:
    sector: str
    overlap_adiabatic: complex   # <psi_adiabatic(T)|psi(T)> in the offset frame
    overlap_separated: complex   # <symmetrized separated orbitals|psi(T)>
    reference_integral: float    # integral of the sector's adiabatic energy
    leakage: float

    @property
    def phase(self) -> float:
        return self.reference_integral - float(np.angle(self.overlap_adiabatic))

    @property
    def amplitude(self) -> complex:
        """Complex amplitude of the returned separated state incl. losses."""
        return self.overlap_separated * np.exp(-1j * self.reference_integral)


def _propagate_sector(
    schedule: Schedule,
    cfg: TrapConfig,
    g: float,
    s: int,
    sector: str,
    spline: CubicSpline,
    grid: Grid1D,
    dt: float,
    relax_options: RelaxationOptions,
) -> SectorPropagation:
    from .double_well import double_well_potential, two_atom_potential

    left, right = separated_orbitals(grid, cfg, schedule.d_max)
    sep_state = symmetrized_pair(grid, left, right, s)

    # adiabatic reference at the end point = relaxed sector ground at d_max
    V_end = two_atom_potential(grid, cfg.with_separation(schedule.d_max), g)
    (_, wf_ad), = relax_eigenstates(V_end, 1, symmetry=s, mass=cfg.mass,
                                    options=relax_options,
                                    initial=sep_state.psi[None, :, :])
    # the relaxed eigenvector's global phase is arbitrary; gauge it so the
    # overlap with the initial separated state is real positive, otherwise
    # the extracted residual phase carries a spurious constant
    ov0 = complex(sep_state.overlap(wf_ad))
    if abs(ov0) < 0.5:
        raise ConfigurationError(
            "separated-orbital state has poor overlap with the sector ground; "
            "start the schedule at a larger separation")
    wf_ad = Wavefunction(grid, wf_ad.psi * (abs(ov0) / ov0))

    n_steps = max(1, int(np.ceil(schedule.total_time / dt)))
    dt_eff = schedule.total_time / n_steps
    diag = np.eye(grid.n, dtype=bool)
    V0_prof = double_well_potential(grid.x, cfg.with_separation(schedule.d_max))
    base = V0_prof[:, None] + V0_prof[None, :]
    if g != 0.0:
        base = base + (g / grid.dx) * diag
    prop = SplitOperatorPropagator(PotentialField(grid, base), dt_eff, "real",
                                   mass=cfg.mass)
    psi = sep_state.psi.copy()
    ref_int = 0.0
    for i in range(n_steps):
        t_mid = (i + 0.5) * dt_eff
        d = schedule.d_of_t(min(t_mid, schedule.total_time))
        e_ref = float(spline(d))
        v1 = double_well_potential(grid.x, cfg.with_separation(d))
        vals = v1[:, None] + v1[None, :] - e_ref
        if g != 0.0:
            vals = vals + (g / grid.dx) * diag
        prop.set_potential(vals)
        psi = prop.step_array(psi)
        ref_int += e_ref * dt_eff
    wf_out = Wavefunction(grid, psi)
    ov_ad = wf_ad.overlap(wf_out)
    ov_sep = sep_state.overlap(wf_out)
    return SectorPropagation(
        sector=sector,
        overlap_adiabatic=ov_ad,
        overlap_separated=ov_sep,
        reference_integral=ref_int,
        leakage=1.0 - abs(ov_ad) ** 2,
    )


def _propagation_setup(schedule, a, cfg, curves, grid, options):
    if grid is None:
        grid = default_grid_2d(schedule.d_max, n=128)
    if options is None:
        options = RelaxationOptions(boundary_tol=1e-4)
    if curves is None:
        curves = sector_ground_curves(schedule, a, cfg, grid=grid, options=options)
    splines = {sec: _ground_spline(curves[sec]) for sec in SECTORS}
    return grid, options, curves, splines


def propagate_all_sectors(
    schedule: Schedule,
    a: ScatteringLengths,
    cfg: TrapConfig,
    curves: dict[str, SpectrumCurve] | None = None,
    grid: Grid1D | None = None,
    dt: float = 2e-3,
    options: RelaxationOptions | None = None,
) -> dict[str, SectorPropagation]:
    """Real-time split-operator evolution of all four sector states.

    Sectors sharing (symmetry, coupling) reuse one propagation.
    """
    grid, options, curves, splines = _propagation_setup(
        schedule, a, cfg, curves, grid, options)
    results: dict[str, SectorPropagation] = {}
    cache: dict[tuple, SectorPropagation] = {}
    for sector in SECTORS:
        s = -1 if sector == "psi_minus" else +1
        g = interaction_coupling(a.for_sector(sector), cfg.omega_perp)
        key = (s, g)
        if key not in cache:
            cache[key] = _propagate_sector(
                schedule, cfg, g, s, sector, splines[sector], grid, dt, options)
        src = cache[key]
        results[sector] = SectorPropagation(
            sector=sector,
            overlap_adiabatic=src.overlap_adiabatic,
            overlap_separated=src.overlap_separated,
            reference_integral=src.reference_integral,
            leakage=src.leakage,
        )
    return results


def accumulate_phases(
    schedule: Schedule,
    a: ScatteringLengths,
    cfg: TrapConfig,
    method: PhaseMethod = "energy-integral",
    curves: dict[str, SpectrumCurve] | None = None,
    grid: Grid1D | None = None,
    dt: float = 2e-3,
    options: RelaxationOptions | None = None,
    leakage_limit: float = LEAKAGE_LIMIT,
) -> GatePhases:
    """Bell-basis phases for the schedule, by energy integral or full
    real-time propagation (the latter carries a leakage record)."""
    if method not in ("energy-integral", "full-propagation"):
        raise ConfigurationError(f"unknown phase method {method!r}")
    grid_r, options_r, curves, splines = _propagation_setup(
        schedule, a, cfg, curves, grid, options)
    if method == "energy-integral":
        phases = {sec: _integral_phase(schedule, splines[sec]) for sec in SECTORS}
        return GatePhases(phases["00"], phases["11"], phases["psi_plus"],
                          phases["psi_minus"], method="energy-integral")
    props = propagate_all_sectors(schedule, a, cfg, curves=curves, grid=grid_r,
                                  dt=dt, options=options_r)
    leakage = {sec: props[sec].leakage for sec in SECTORS}
    worst = max(leakage.values())
    if worst > leakage_limit:
        raise NonAdiabaticError(
            f"leakage {worst:.3e} exceeds {leakage_limit:g}; slow the schedule",
            leakage=leakage,
        )
    phases = {sec: props[sec].phase for sec in SECTORS}
    return GatePhases(phases["00"], phases["11"], phases["psi_plus"],
                      phases["psi_minus"], method="full-propagation",
                      leakage=leakage)


# --------------------------------------------------------------------------
# qubit unitaries
# --------------------------------------------------------------------------

UNITARITY_TOL = 1e-10
EXCHANGE_FORM_TOL = 1e-8


def assemble_exchange_unitary(phases: GatePhases) -> np.ndarray:
    """4x4 qubit unitary over {|00>,|01>,|10>,|11>} from the sector phases."""
    e00 = np.exp(-1j * phases.phi_00)
    e11 = np.exp(-1j * phases.phi_11)
    ep = np.exp(-1j * phases.phi_plus)
    em = np.exp(-1j * phases.phi_minus)
    diag = 0.5 * (ep + em)
    off = 0.5 * (ep - em)
    return np.array([
        [e00, 0, 0, 0],
        [0, diag, off, 0],
        [0, off, diag, 0],
        [0, 0, 0, e11],
    ])


def is_unitary(U: np.ndarray, tol: float = UNITARITY_TOL) -> bool:
    return bool(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))) < tol)


def _check_exchange_form(U: np.ndarray, tol: float = EXCHANGE_FORM_TOL) -> None:
    mask = np.ones((4, 4), dtype=bool)
    for i, j in [(0, 0), (1, 1), (2, 2), (3, 3), (1, 2), (2, 1)]:
        mask[i, j] = False
    if np.max(np.abs(U[mask])) > tol:
        raise ConfigurationError("matrix does not have exchange form")
    if abs(U[1, 1] - U[2, 2]) > tol or abs(U[1, 2] - U[2, 1]) > tol:
        raise ConfigurationError("exchange block is not swap-symmetric")


def phase_gate(theta: float) -> np.ndarray:
    """Single-qubit S(theta) = exp(i theta |1><1|)."""
    return np.diag([1.0, np.exp(1j * theta)])


MAGIC_BASIS = np.array([
    [1, 0, 0, 1j],
    [0, 1j, 1, 0],
    [0, 1j, -1, 0],
    [1, 0, 0, -1j],
], dtype=complex) / np.sqrt(2.0)


def local_invariants(U: np.ndarray) -> np.ndarray:
    """Makhlin-style local invariants (g1 complex, g2 real) of a 4x4 unitary."""
    U = np.asarray(U, dtype=complex)
    if U.shape != (4, 4) or not is_unitary(U, 1e-8):
        raise ConfigurationError("local invariants need a two-qubit unitary")
    m = MAGIC_BASIS.conj().T @ U @ MAGIC_BASIS
    mm = m.T @ m
    d = det(U)
    tr = np.trace(mm)
    g1 = tr ** 2 / (16.0 * d)
    g2 = (tr ** 2 - np.trace(mm @ mm)) / (4.0 * d)
    return np.array([g1.real, g1.imag, g2.real])


def controlled_phase_unitary(gamma: float) -> np.ndarray:
    return np.diag([1.0, 1.0, 1.0, np.exp(-1j * gamma)])


@dataclass(frozen=True)
class ControlledPhaseReport:
    gamma: float
    branch: tuple            # (n, sign) realizing the combination
    invariants_G: np.ndarray
    invariants_target: np.ndarray
    residual: float
    candidates: tuple = field(default=())


def compose_controlled_phase(
    U: np.ndarray,
    combination: float | None = None,
    max_n: int = 8,
    tol: float = 1e-6,
) -> tuple[np.ndarray, float, ControlledPhaseReport]:
    """G = U [S(pi) x S(0)] U, plus the controlled-phase angle gamma.

    ``combination`` is phi_00 + phi_11 - phi_+ - phi_-; candidate gammas
    solve combination = (2n +/- 1/2) gamma and are screened against G's
    local invariants.  Raises if no candidate reproduces G's class.
    """
    U = np.asarray(U, dtype=complex)
    _check_exchange_form(U)
    if combination is None:
        raise ConfigurationError("the phase combination is required to extract gamma")
    sandwich = np.kron(phase_gate(np.pi), phase_gate(0.0))
    G = U @ sandwich @ U
    inv_G = local_invariants(G)

    candidates = []
    for n in range(-max_n, max_n + 1):
        for sign in (+1, -1):
            coeff = 2 * n + sign * 0.5
            gamma = combination / coeff
            # fold into (0, 2pi]; CP(gamma) and CP(-gamma) share a class
            for cand in (gamma % (2 * np.pi), (-gamma) % (2 * np.pi)):
                if cand == 0.0 and abs(combination) > tol:
                    continue
                inv_t = local_invariants(controlled_phase_unitary(cand))
                res = float(np.max(np.abs(inv_t - inv_G)))
                candidates.append((cand if cand > 0 else 2 * np.pi, (n, sign), res))
    if abs(combination) <= tol:
        inv_t = local_invariants(np.eye(4, dtype=complex))
        candidates.append((0.0, (0, +1), float(np.max(np.abs(inv_t - inv_G)))))

    matching = [c for c in candidates if c[2] < tol]
    if not matching:
        best = min(candidates, key=lambda c: c[2])
        raise InconsistencyError(
            f"no (n, sign) branch matches G's local invariants "
            f"(best residual {best[2]:.3e}); phase extraction inconsistent"
        )
    matching.sort(key=lambda c: (c[0], c[2]))
    gamma, branch, residual = matching[0]
    report = ControlledPhaseReport(
        gamma=gamma,
        branch=branch,
        invariants_G=inv_G,
        invariants_target=local_invariants(
            controlled_phase_unitary(gamma) if gamma > 0 else np.eye(4, dtype=complex)
        ),
        residual=residual,
        candidates=tuple(sorted({round(c[0], 12) for c in matching})),
    )
    return G, gamma, report


# --------------------------------------------------------------------------
# end-to-end gate simulation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GateSimulation:
    qubit_state: np.ndarray          # normalized 4-vector over {00,01,10,11}
    opposite_well_probability: float
    phases: GatePhases
    warnings: tuple = ()


def simulate_gate(
    schedule: Schedule,
    a: ScatteringLengths,
    cfg: TrapConfig,
    qubit_a: tuple[complex, complex],
    qubit_b: tuple[complex, complex],
    curves: dict[str, SpectrumCurve] | None = None,
    grid: Grid1D | None = None,
    dt: float = 2e-3,
    options: RelaxationOptions | None = None,
) -> GateSimulation:
    """Full-propagation gate: symmetrized two-atom input, sector-wise
    evolution, projection back onto separated orbitals."""
    alpha, beta = complex(qubit_a[0]), complex(qubit_a[1])
    mu, nu = complex(qubit_b[0]), complex(qubit_b[1])
    for amps in ((alpha, beta), (mu, nu)):
        n = abs(amps[0]) ** 2 + abs(amps[1]) ** 2
        if abs(n - 1.0) > 1e-9:
            raise ConfigurationError("qubit amplitudes must be normalized")

    props = propagate_all_sectors(schedule, a, cfg, curves=curves, grid=grid,
                                  dt=dt, options=options)
    weights = {
        "00": alpha * mu,
        "11": beta * nu,
        "psi_plus": (alpha * nu + beta * mu) / np.sqrt(2.0),
        "psi_minus": (alpha * nu - beta * mu) / np.sqrt(2.0),
    }
    amp = {sec: weights[sec] * props[sec].amplitude for sec in SECTORS}
    p_opposite = float(sum(abs(v) ** 2 for v in amp.values()))
    qubit = np.array([
        amp["00"],
        (amp["psi_plus"] + amp["psi_minus"]) / np.sqrt(2.0),
        (amp["psi_plus"] - amp["psi_minus"]) / np.sqrt(2.0),
        amp["11"],
    ])
    norm = np.linalg.norm(qubit)
    warnings_out = []
    if p_opposite < 0.9:
        warnings_out.append(
            f"opposite-well probability {p_opposite:.3f} < 0.9: transport failure"
        )
    phases = GatePhases(
        props["00"].phase, props["11"].phase,
        props["psi_plus"].phase, props["psi_minus"].phase,
        method="full-propagation",
        leakage={sec: props[sec].leakage for sec in SECTORS},
    )
    return GateSimulation(
        qubit_state=qubit / norm if norm > 0 else qubit,
        opposite_well_probability=p_opposite,
        phases=phases,
        warnings=tuple(warnings_out),
    )


def tune_hold_for_combination(
    schedule_factory,
    target_combination: float,
    a: ScatteringLengths,
    cfg: TrapConfig,
    curves_for,
    hold_bracket: tuple[float, float] = (0.0, 400.0),
    tol: float = 1e-6,
    fold_2pi: bool = False,
) -> float:
    """Bisect the hold time so the Eq for the phase combination hits the
    target.  ``schedule_factory(hold)`` builds the schedule;
    ``curves_for(schedule)`` supplies sector curves (cached by the caller).

    With ``fold_2pi`` the target is shifted by the multiple of 2 pi that
    brings it inside the combination range reachable over the bracket
    (the gate class only depends on the combination modulo 2 pi)."""

    def raw(hold: float) -> float:
        sched = schedule_factory(hold)
        phases = accumulate_phases(sched, a, cfg, method="energy-integral",
                                   curves=curves_for(sched))
        return phases.combination

    lo, hi = hold_bracket
    rlo, rhi = raw(lo), raw(hi)
    if fold_2pi:
        cmin, cmax = min(rlo, rhi), max(rlo, rhi)
        k = np.ceil((cmin - target_combination) / (2.0 * np.pi))
        candidate = target_combination + 2.0 * np.pi * k
        if candidate > cmax:
            raise ConfigurationError(
                "no 2 pi representative of the target combination is "
                "reachable within the hold bracket")
        target_combination = float(candidate)

    def combo(hold: float) -> float:
        return raw(hold) - target_combination

    flo, fhi = rlo - target_combination, rhi - target_combination
    if flo * fhi > 0:
        raise ConfigurationError("hold-time bracket does not straddle the target")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if combo(mid) * flo <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
