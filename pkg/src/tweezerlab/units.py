"""Natural units for the spatial dynamics.

Lengths are measured in the Gaussian well width sigma, energies in
hbar*omega0 with omega0 = sqrt(V0/(m sigma^2)) the small-oscillation
frequency of a single well, and times in 1/omega0.  With that choice the
dimensionless Schroedinger equation reads

    i dpsi/dt = [ -1/(2 m_eff) d^2/dx^2 + V(x) ] psi,   m_eff = V0 [hbar*omega0]

i.e. the single knob left over from (V0, sigma, m) is the well depth in
units of hbar*omega0, which doubles as the effective mass of the scaled
kinetic term.  Conversion to SI happens only at the CLI boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigurationError


@dataclass(frozen=True)
class NaturalUnits:
    """Bookkeeping record for the (hbar = m = sigma = 1) convention.

    ``depth`` is the well depth V0 in units of hbar*omega0; it equals the
    effective mass of the scaled kinetic operator (see module docstring).
    """

    depth: float

    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if self.depth <= 0:
            raise ConfigurationError(f"well depth must be positive, got {self.depth}")
        if self.hbar != 1.0 or self.mass != 1.0:
            raise ConfigurationError("natural units fix hbar = m = 1")

    @property
    def effective_mass(self) -> float:
        """Mass of the scaled kinetic term, in units where energies are hbar*omega0."""
        return self.depth

    @property
    def omega0_squared_consistency(self) -> float:
        """omega0^2 sigma^2 m / V0; exactly 1 by construction."""
        # omega0^2 = V0/(m sigma^2) with m = sigma = 1 in base units.
        return 1.0
