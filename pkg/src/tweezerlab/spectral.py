"""Split-operator propagation and imaginary-time eigenstate extraction.

One spectral kernel serves statics and dynamics: real-time Strang steps,
imaginary-time relaxation with per-step re-orthogonalization, and spectral
kinetic-energy application for Rayleigh quotients.  Boundary conditions are
periodic (implied by the FFT kinetic factor); boxes must therefore be sized
so that bound states never reach the edge.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    ConvergenceError,
    GridTooSmallError,
    NumericalOverflowError,
)
from .grids import Grid1D, PotentialField, Wavefunction

DT_REAL_DEFAULT = 1e-3
DT_IMAG_DEFAULT = 1e-2

Mode = Literal["real", "imaginary"]


def _kinetic_grid(grid: Grid1D, ndim: int, mass: float) -> np.ndarray:
    k2 = grid.k ** 2
    if ndim == 1:
        return k2 / (2.0 * mass)
    return (k2[:, None] + k2[None, :]) / (2.0 * mass)


class SplitOperatorPropagator:
    """Cached Strang-split stepper exp(-iV dt/2) exp(-iT dt) exp(-iV dt/2).

    In imaginary mode -i is replaced by -1 and callers renormalize.  Steps
    act on a single state of shape grid^ndim or on a leading stack axis.
    """

    def __init__(self, V: PotentialField, dt: float, mode: Mode, mass: float = 1.0):
        if dt <= 0:
            raise ConfigurationError(f"dt must be positive, got {dt}")
        if mode not in ("real", "imaginary"):
            raise ConfigurationError(f"unknown propagation mode {mode!r}")
        self.grid = V.grid
        self.ndim = V.ndim
        self.dt = dt
        self.mode = mode
        self.mass = mass
        self._factor = -1.0 if mode == "imaginary" else -1.0j
        kin = _kinetic_grid(self.grid, self.ndim, mass)
        self._exp_kin = np.exp(self._factor * dt * kin)
        self.set_potential(V.values)

    def set_potential(self, values: np.ndarray) -> None:
        """Swap the potential (time-dependent drives); kinetic factor is kept."""
        self._exp_half_v = np.exp(self._factor * 0.5 * self.dt * values)

    @property
    def axes(self) -> tuple:
        # FFT over the trailing spatial axes; a leading stack axis is untouched.
        return tuple(range(-self.ndim, 0))

    def step_array(self, psi: np.ndarray) -> np.ndarray:
        out = psi * self._exp_half_v
        out = np.fft.fftn(out, axes=self.axes)
        out *= self._exp_kin
        out = np.fft.ifftn(out, axes=self.axes)
        out *= self._exp_half_v
        return out


def split_operator_step(
    wf: Wavefunction,
    V: PotentialField,
    dt: float,
    mode: Mode = "real",
    mass: float = 1.0,
) -> Wavefunction:
    """Single second-order Strang step; imaginary mode renormalizes."""
    if V.grid != wf.grid or V.ndim != wf.ndim:
        raise ConfigurationError("wavefunction and potential grids differ")
    prop = SplitOperatorPropagator(V, dt, mode, mass)
    psi = prop.step_array(wf.psi)
    if not np.all(np.isfinite(psi)):
        raise NumericalOverflowError("non-finite amplitudes after split-operator step")
    out = Wavefunction(wf.grid, psi)
    return out.normalized() if mode == "imaginary" else out


def kinetic_apply(wf: Wavefunction, mass: float = 1.0) -> np.ndarray:
    """T|psi> evaluated spectrally; returns a bare array."""
    axes = tuple(range(wf.ndim))
    kin = _kinetic_grid(wf.grid, wf.ndim, mass)
    return np.fft.ifftn(kin * np.fft.fftn(wf.psi, axes=axes), axes=axes)


def energy_expectation(wf: Wavefunction, V: PotentialField, mass: float = 1.0) -> float:
    """<psi|T + V|psi> with spectral kinetic part; requires a normalized state."""
    if V.grid != wf.grid or V.ndim != wf.ndim:
        raise ConfigurationError("wavefunction and potential grids differ")
    wf.require_normalized()
    hpsi = kinetic_apply(wf, mass) + V.values * wf.psi
    val = np.vdot(wf.psi, hpsi) * wf.cell_volume
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise NumericalOverflowError(f"energy expectation has imaginary residue {val.imag:.3e}")
    return float(val.real)


@dataclass(frozen=True)
class RelaxationOptions:
    dt_stages: Sequence[float] = (5e-2, 2e-2, 1e-2, 5e-3)
    energy_tol: float = 1e-8
    # intermediate stages only pre-condition; the final stage owns energy_tol
    stage_tol_factor: float = 100.0
    check_every: int = 40
    max_iterations: int = 200_000
    boundary_tol: float = 1e-6
    check_boundary: bool = True
    seed: int = 7


def _orthonormalize(stack: np.ndarray, cell: float) -> np.ndarray:
    k = stack.shape[0]
    flat = stack.reshape(k, -1).T  # (N, k)
    q, _ = np.linalg.qr(flat)
    return (q.T / np.sqrt(cell)).reshape(stack.shape)


def _project_symmetry(stack: np.ndarray, s: int) -> np.ndarray:
    return 0.5 * (stack + s * np.swapaxes(stack, -1, -2))


def _ritz(stack: np.ndarray, V: PotentialField, mass: float, cell: float):
    """Diagonalize H in the span of the (orthonormal) stack; returns (E, stack)."""
    k = stack.shape[0]
    axes = tuple(range(-V.ndim, 0))
    kin = _kinetic_grid(V.grid, V.ndim, mass)
    hstack = np.fft.ifftn(kin * np.fft.fftn(stack, axes=axes), axes=axes)
    hstack += V.values * stack
    a = stack.reshape(k, -1).conj()
    b = hstack.reshape(k, -1)
    hmat = (a @ b.T) * cell
    hmat = 0.5 * (hmat + hmat.conj().T)
    energies, rot = np.linalg.eigh(hmat)
    rotated = np.tensordot(rot.T, stack.reshape(k, -1), axes=1).reshape(stack.shape)
    return energies, rotated


def _boundary_amplitude_ratio(psi: np.ndarray) -> float:
    peak = np.max(np.abs(psi))
    if psi.ndim == 1:
        edge = max(abs(psi[0]), abs(psi[-1]))
    else:
        edge = max(
            np.max(np.abs(psi[0, :])),
            np.max(np.abs(psi[-1, :])),
            np.max(np.abs(psi[:, 0])),
            np.max(np.abs(psi[:, -1])),
        )
    return float(edge / peak)


def relax_eigenstates(
    V: PotentialField,
    k: int,
    symmetry: int | None = None,
    mass: float = 1.0,
    options: RelaxationOptions = RelaxationOptions(),
    initial: np.ndarray | None = None,
) -> list[tuple[float, Wavefunction]]:
    """Lowest k eigenpairs by imaginary-time flow with re-orthogonalization.

    ``symmetry`` restricts a 2D problem to one exchange sector (+1/-1) by
    projecting every step; None keeps both sectors.  Energies are Ritz
    values of the true Hamiltonian on the relaxed subspace, converged to
    ``energy_tol`` between successive checks, and returned ascending.
    """
    if k < 1:
        raise ConfigurationError("k must be at least 1")
    if symmetry is not None and V.ndim != 2:
        raise ConfigurationError("symmetry sectors only apply to 2D problems")
    shape = V.values.shape
    cell = V.grid.dx ** V.ndim

    if initial is not None:
        stack = np.array(initial, dtype=complex)
        if stack.shape != (k, *shape):
            raise ConfigurationError("initial stack shape must be (k, *grid shape)")
    else:
        rng = np.random.default_rng(options.seed)
        stack = rng.standard_normal((k, *shape)) + 1j * rng.standard_normal((k, *shape))
    if symmetry is not None:
        stack = _project_symmetry(stack, symmetry)
    stack = _orthonormalize(stack, cell)

    iterations = 0
    energies = np.full(k, np.inf)
    n_stages = len(options.dt_stages)
    for stage, dt in enumerate(options.dt_stages):
        final = stage == n_stages - 1
        tol = options.energy_tol if final else options.energy_tol * options.stage_tol_factor
        prop = SplitOperatorPropagator(V, dt, "imaginary", mass)
        stage_converged = False
        prev = np.full(k, np.inf)
        while not stage_converged:
            for _ in range(options.check_every):
                stack = prop.step_array(stack)
                if symmetry is not None:
                    stack = _project_symmetry(stack, symmetry)
                stack = _orthonormalize(stack, cell)
            iterations += options.check_every
            energies, stack = _ritz(stack, V, mass, cell)
            residual = float(np.max(np.abs(energies - prev)))
            prev = energies.copy()
            if residual < tol:
                stage_converged = True
            elif iterations >= options.max_iterations:
                raise ConvergenceError(
                    f"imaginary-time relaxation did not reach {tol:g} "
                    f"within {iterations} iterations (residual {residual:.3e})",
                    residual=residual,
                )
    if not np.all(np.isfinite(stack)):
        raise NumericalOverflowError("non-finite amplitudes during relaxation")

    results = []
    for i in range(k):
        wf = Wavefunction(V.grid, stack[i]).normalized()
        if options.check_boundary:
            ratio = _boundary_amplitude_ratio(wf.psi)
            if ratio > options.boundary_tol:
                raise GridTooSmallError(
                    f"state {i} has relative boundary amplitude {ratio:.2e} "
                    f"(> {options.boundary_tol:g}); enlarge the box"
                )
        results.append((float(energies[i]), wf))
    return results
