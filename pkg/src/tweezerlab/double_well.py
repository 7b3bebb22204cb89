"""Two-atom double-well model: potentials, sectors, adiabatic spectra.

The two-qubit internal state selects which contact coupling the spatial
problem sees: sectors 00/11/psi_plus share the exchange-symmetric spatial
problem with couplings from a00/a11/a01, while psi_minus lives in the
antisymmetric sector where the contact term acts on the wavefunction's
node and is irrelevant.  Spectra are tracked continuously in the well
separation d by maximal overlap with the previous point's eigenstates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigurationError
from .grids import Grid1D, PotentialField, Wavefunction, classify_symmetry
from .spectral import RelaxationOptions, relax_eigenstates

SECTORS = ("00", "11", "psi_plus", "psi_minus")

# Well depth (hbar*omega0) reproducing a non-interacting symmetric two-atom
# ground energy of -7 hbar*omega0 at d = 0.  Computed once by bisection
# (scripts/calibrate_trap_depth.py) and re-verified by the test suite.
DEPTH_DEFAULT = 2.08090

# Discrete contact-line eigenstates ring at the 1e-5 level on any finite
# grid, so boundary checks in 2D cannot use the bare 1e-6 threshold.
BOUNDARY_TOL_2D = 1e-4


@dataclass(frozen=True)
class TrapConfig:
    """Double-Gaussian-well geometry in natural units (sigma = 1)."""

    V0: float = DEPTH_DEFAULT      # well depth, hbar*omega0
    d: float = 0.0                 # well separation, sigma
    omega_perp: float = 10.0       # transverse confinement, omega0
    sigma: float = 1.0

    def __post_init__(self):
        if self.V0 <= 0:
            raise ConfigurationError("V0 must be positive")
        if self.d < 0:
            raise ConfigurationError("well separation must be non-negative")
        if self.omega_perp <= 0:
            raise ConfigurationError("omega_perp must be positive")
        if self.sigma != 1.0:
            raise ConfigurationError("natural units fix sigma = 1")

    def with_separation(self, d: float) -> "TrapConfig":
        return TrapConfig(V0=self.V0, d=d, omega_perp=self.omega_perp)

    @property
    def mass(self) -> float:
        # Effective mass of the scaled kinetic operator; see tweezerlab.units.
        return self.V0


@dataclass(frozen=True)
class ScatteringLengths:
    """State-dependent effective-1D scattering lengths, in sigma units."""

    a00: float = 0.0
    a01: float = 0.0
    a11: float = 0.0

    def __post_init__(self):
        for name in ("a00", "a01", "a11"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite")

    def for_sector(self, sector: str) -> float:
        if sector == "00":
            return self.a00
        if sector == "11":
            return self.a11
        if sector in ("psi_plus", "psi_minus"):
            return self.a01
        raise ConfigurationError(f"unknown sector {sector!r}")


def double_well_potential(x, cfg: TrapConfig):
    """V(x - d/2) + V(x + d/2) with V(x) = -V0 exp(-x^2/2 sigma^2)."""
    x = np.asarray(x, dtype=float)
    return -cfg.V0 * (
        np.exp(-((x - cfg.d / 2.0) ** 2) / 2.0)
        + np.exp(-((x + cfg.d / 2.0) ** 2) / 2.0)
    )


def interaction_coupling(a_ij: float, omega_perp: float) -> float:
    """Contact coupling g = 2 a_ij hbar omega_perp (natural units)."""
    return 2.0 * a_ij * omega_perp


def single_particle_potential(grid: Grid1D, cfg: TrapConfig) -> PotentialField:
    return PotentialField(
        grid,
        double_well_potential(grid.x, cfg),
        descriptor={"kind": "double_well_1d", "V0": cfg.V0, "d": cfg.d},
    )


def two_atom_potential(grid: Grid1D, cfg: TrapConfig, g: float) -> PotentialField:
    """Two-atom potential on the tensor grid; the contact term is the
    standard grid delta g/dx on the diagonal cells x_a = x_b."""
    v1 = double_well_potential(grid.x, cfg)
    values = v1[:, None] + v1[None, :]
    if g != 0.0:
        values = values + (g / grid.dx) * np.eye(grid.n)
    return PotentialField(
        grid,
        values,
        descriptor={"kind": "double_well_2d", "V0": cfg.V0, "d": cfg.d, "g": g},
    )


def default_grid_1d(d_max: float, n: int = 512, margin: float = 10.0) -> Grid1D:
    return Grid1D.centered(n, d_max / 2.0 + margin)


def default_grid_2d(d_max: float, n: int = 256, margin: float = 10.0) -> Grid1D:
    return Grid1D.centered(n, d_max / 2.0 + margin)


@dataclass(frozen=True)
class LevelPoint:
    energy: float
    symmetry: int          # exchange-swap sign s
    parity: int            # spatial inversion sign
    index: int             # continuation-tracked branch index


@dataclass
class SpectrumCurve:
    sector: str
    separations: list[float]                 # descending
    levels: list[list[LevelPoint]]           # per separation, branch-ordered
    warnings: list[str] = field(default_factory=list)

    def energies(self, branch: int) -> np.ndarray:
        return np.array([pts[branch].energy for pts in self.levels])

    def ground_energies(self) -> np.ndarray:
        return self.energies(0)

    def to_rows(self):
        """CSV rows: (d, level_index, energy, symmetry)."""
        rows = []
        for d, pts in zip(self.separations, self.levels):
            for p in pts:
                rows.append((d, p.index, p.energy, p.symmetry))
        return rows


def product_seed(grid: Grid1D, cfg: TrapConfig, k: int, s: int) -> np.ndarray:
    """Initial stack of symmetrized products of 1D double-well orbitals;
    near-exact for weak coupling, a fast warm start otherwise."""
    n_orb = max(4, k)
    levels = single_particle_levels(cfg, n_orb, grid=grid,
                                    options=RelaxationOptions(check_boundary=False))
    orbs = [wf.psi for _, wf in levels]
    energies = [e for e, _ in levels]
    cands = []
    for i in range(n_orb):
        for j in range(i, n_orb):
            if s == -1 and i == j:
                continue
            psi = np.outer(orbs[i], orbs[j]) + s * np.outer(orbs[j], orbs[i])
            nrm = np.sqrt(np.sum(np.abs(psi) ** 2) * grid.dx ** 2)
            if nrm < 1e-12:
                continue
            cands.append((energies[i] + energies[j], psi / nrm))
    cands.sort(key=lambda t: t[0])
    if len(cands) < k:
        raise ConfigurationError("not enough seed orbitals; increase k of 1D solve")
    return np.stack([c[1] for c in cands[:k]])


def _classify_parity(wf: Wavefunction) -> int:
    val = wf.parity_expectation()
    return +1 if val >= 0 else -1


def _match_branches(prev_stack: np.ndarray, new_stack: np.ndarray, cell: float):
    """Order new states to continue the previous branches by maximal overlap.

    Returns (permutation, ambiguous) where ambiguous flags branch pairs whose
    best and runner-up overlaps differ by less than 1e-3.
    """
    k = prev_stack.shape[0]
    a = prev_stack.reshape(k, -1).conj()
    b = new_stack.reshape(k, -1)
    ov = np.abs(a @ b.T) * cell
    row, col = linear_sum_assignment(-ov)
    perm = np.empty(k, dtype=int)
    perm[row] = col
    ambiguous = []
    for i in range(k):
        sorted_row = np.sort(ov[i])[::-1]
        if k > 1 and sorted_row[0] - sorted_row[1] < 1e-3:
            ambiguous.append(i)
    return perm, ambiguous


def adiabatic_spectrum(
    configs: Sequence[TrapConfig],
    a: ScatteringLengths,
    sector: str,
    k: int,
    grid: Grid1D | None = None,
    options: RelaxationOptions | None = None,
) -> SpectrumCurve:
    """Lowest-k adiabatic levels versus well separation for one sector.

    ``configs`` must share everything but d, sorted by descending d so each
    point's eigenstates seed the next (continuation).
    """
    if k < 1:
        raise ConfigurationError("k must be at least 1")
    if sector not in SECTORS:
        raise ConfigurationError(f"unknown sector {sector!r}")
    ds = [c.d for c in configs]
    if len(ds) == 0:
        raise ConfigurationError("empty separation range")
    if any(d2 > d1 for d1, d2 in zip(ds, ds[1:])):
        raise ConfigurationError("separations must be sorted descending for continuation")
    base = configs[0]
    if any((c.V0, c.omega_perp) != (base.V0, base.omega_perp) for c in configs):
        raise ConfigurationError("configs may differ only in separation d")

    if grid is None:
        grid = default_grid_2d(ds[0])
    if options is None:
        options = RelaxationOptions(boundary_tol=BOUNDARY_TOL_2D)

    s = -1 if sector == "psi_minus" else +1
    g = interaction_coupling(a.for_sector(sector), base.omega_perp)
    cell = grid.dx ** 2

    curve = SpectrumCurve(sector=sector, separations=list(ds), levels=[])
    prev_stack = None
    for cfg in configs:
        V = two_atom_potential(grid, cfg, g)
        seed = prev_stack if prev_stack is not None else product_seed(grid, cfg, k, s)
        results = relax_eigenstates(V, k, symmetry=s, mass=base.mass,
                                    options=options, initial=seed)
        stack = np.stack([wf.psi for _, wf in results])
        energies = np.array([e for e, _ in results])
        if prev_stack is not None:
            perm, ambiguous = _match_branches(prev_stack, stack, cell)
            stack = stack[perm]
            energies = energies[perm]
            for i in ambiguous:
                curve.warnings.append(
                    f"level-crossing ambiguity for branch {i} at d = {cfg.d:g}"
                )
        pts = []
        for i in range(k):
            wf = Wavefunction(grid, stack[i])
            pts.append(LevelPoint(
                energy=float(energies[i]),
                symmetry=classify_symmetry(wf),
                parity=_classify_parity(wf),
                index=i,
            ))
        curve.levels.append(pts)
        prev_stack = stack
    for msg in curve.warnings:
        warnings.warn(msg, stacklevel=2)
    return curve


def single_particle_levels(
    cfg: TrapConfig, k: int, grid: Grid1D | None = None,
    options: RelaxationOptions | None = None,
) -> list[tuple[float, Wavefunction]]:
    """Lowest-k 1D levels of the double well (oracle for g = 0 spectra)."""
    if grid is None:
        grid = default_grid_1d(cfg.d)
    if options is None:
        options = RelaxationOptions()
    V = single_particle_potential(grid, cfg)
    return relax_eigenstates(V, k, mass=cfg.mass, options=options)


def calibrate_depth(
    target_energy: float = -7.0,
    bracket: tuple[float, float] = (1.5, 3.0),
    tol: float = 1e-6,
    grid: Grid1D | None = None,
) -> float:
    """Bisect the well depth so the non-interacting symmetric two-atom ground
    energy at d = 0 (twice the 1D single-particle ground energy) hits the
    target.  Used once to freeze DEPTH_DEFAULT."""
    if grid is None:
        grid = Grid1D.centered(512, 10.0)

    def objective(V0: float) -> float:
        cfg = TrapConfig(V0=V0, d=0.0)
        (e0, _), = single_particle_levels(cfg, 1, grid=grid)
        return 2.0 * e0 - target_energy

    lo, hi = bracket
    flo, fhi = objective(lo), objective(hi)
    if flo * fhi > 0:
        raise ConfigurationError("calibration bracket does not straddle the target")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if objective(mid) * flo <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
