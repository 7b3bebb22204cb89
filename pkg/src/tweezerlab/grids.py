"""Spatial grids, wavefunctions and potential fields.

Transform convention: position points are x[i] = x_min + i*dx for
i = 0..n-1 (the right endpoint x_max is excluded, periodic wrap), and the
conjugate wavenumbers follow ``numpy.fft.fftfreq`` ordering,
k[i] = 2*pi*fftfreq(n, dx)[i].  All spectral operations in the package use
this pairing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

from .errors import ConfigurationError, ContractViolation, MixedSymmetryError

NORM_TOL = 1e-6


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic 1D grid; n must be a power of two for fast transforms."""

    n: int
    x_min: float
    x_max: float

    def __post_init__(self):
        if not _is_power_of_two(self.n):
            raise ConfigurationError(f"grid size must be a power of two, got {self.n}")
        if not self.x_max > self.x_min:
            raise ConfigurationError("grid extent must satisfy x_max > x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    @cached_property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    @property
    def symmetric(self) -> bool:
        """True when the box is centred on x = 0 (needed for parity ops)."""
        return abs(self.x_min + self.x_max) < 1e-12 * (self.x_max - self.x_min)

    @classmethod
    def centered(cls, n: int, half_extent: float) -> "Grid1D":
        return cls(n=n, x_min=-half_extent, x_max=half_extent)


@dataclass(frozen=True)
class PotentialField:
    """Real potential sampled on a grid, with a descriptor of its provenance."""

    grid: Grid1D
    values: np.ndarray
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.ndim not in (1, 2):
            raise ConfigurationError("potential must be 1D or 2D")
        if any(s != self.grid.n for s in vals.shape):
            raise ConfigurationError("potential shape does not match grid")
        if not np.all(np.isfinite(vals)):
            raise ConfigurationError("potential contains non-finite values")

    @property
    def ndim(self) -> int:
        return self.values.ndim


class Wavefunction:
    """Complex amplitudes over a Grid1D (1D) or its tensor square (2D).

    Norm convention: sum(|psi|^2) * dx^ndim = 1.
    """

    __slots__ = ("grid", "psi")

    def __init__(self, grid: Grid1D, psi: np.ndarray):
        psi = np.asarray(psi, dtype=complex)
        if psi.ndim not in (1, 2) or any(s != grid.n for s in psi.shape):
            raise ConfigurationError("amplitude shape does not match grid")
        self.grid = grid
        self.psi = psi

    @property
    def ndim(self) -> int:
        return self.psi.ndim

    @property
    def cell_volume(self) -> float:
        return self.grid.dx ** self.ndim

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.psi) ** 2) * self.cell_volume))

    def normalized(self) -> "Wavefunction":
        n = self.norm()
        if n == 0.0:
            raise ContractViolation("cannot normalize the zero wavefunction")
        return Wavefunction(self.grid, self.psi / n)

    def require_normalized(self, tol: float = NORM_TOL) -> None:
        dev = abs(self.norm() - 1.0)
        if dev > tol:
            raise ContractViolation(f"wavefunction norm deviates by {dev:.3e}")

    def overlap(self, other: "Wavefunction") -> complex:
        if other.grid != self.grid or other.ndim != self.ndim:
            raise ConfigurationError("overlap requires identical grids")
        return complex(np.vdot(self.psi, other.psi) * self.cell_volume)

    # -- exchange symmetry (2D only) ------------------------------------

    def swapped(self) -> "Wavefunction":
        if self.ndim != 2:
            raise ConfigurationError("coordinate swap requires a 2D wavefunction")
        return Wavefunction(self.grid, self.psi.T.copy())

    def swap_expectation(self) -> float:
        """<psi|SWAP|psi> for a normalized 2D wavefunction."""
        if self.ndim != 2:
            raise ConfigurationError("swap expectation requires a 2D wavefunction")
        val = np.vdot(self.psi, self.psi.T) * self.cell_volume
        return float(val.real)

    def symmetry_projected(self, s: int) -> "Wavefunction":
        if s not in (+1, -1):
            raise ConfigurationError("symmetry sector must be +1 or -1")
        return Wavefunction(self.grid, 0.5 * (self.psi + s * self.psi.T))

    # -- parity ----------------------------------------------------------

    def parity_reflected(self) -> "Wavefunction":
        """psi(-x) (all coordinates), valid on a centred grid."""
        if not self.grid.symmetric:
            raise ConfigurationError("parity requires a grid centred on x = 0")
        out = self.psi
        for ax in range(self.ndim):
            out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
        return Wavefunction(self.grid, out)

    def parity_expectation(self) -> float:
        refl = self.parity_reflected()
        return float((np.vdot(self.psi, refl.psi) * self.cell_volume).real)


def classify_symmetry(wf: Wavefunction) -> int:
    """Sign of <SWAP>; raises if the state is not cleanly in one sector."""
    wf.require_normalized()
    val = wf.swap_expectation()
    if abs(val) <= 0.99:
        raise MixedSymmetryError(f"<SWAP> = {val:.4f}; state is not in a pure sector")
    return +1 if val > 0 else -1
