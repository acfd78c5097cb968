"""Model parameters in physical and dimensionless form.

The domain is the unit torus [0,1)^2, so the diffusive length scale ell
coincides with sqrt(D_E/D_O).  D_E acts as the time gauge and defaults to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError


@dataclass(frozen=True)
class PhysicalParams:
    """Spatial diffusion D_E, self-propulsion speed v0, angular diffusion D_O."""

    D_E: float
    v0: float
    D_O: float

    def __post_init__(self):
        for name in ("D_E", "v0", "D_O"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ParameterError(f"{name} must be finite, got {v}")
        if self.D_E <= 0:
            raise ParameterError(f"D_E must be > 0, got {self.D_E}")
        if self.D_O <= 0:
            raise ParameterError(f"D_O must be > 0, got {self.D_O}")
        if self.v0 < 0:
            raise ParameterError(f"v0 must be >= 0, got {self.v0}")


@dataclass(frozen=True)
class DimensionlessParams:
    """Volume fraction phi, Peclet number Pe, diffusive length scale ell."""

    phi: float
    Pe: float
    ell: float

    def __post_init__(self):
        for name in ("phi", "Pe", "ell"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ParameterError(f"{name} must be finite, got {v}")
        if not 0.0 <= self.phi <= 1.0:
            raise ParameterError(f"phi must lie in [0,1], got {self.phi}")
        if self.Pe < 0:
            raise ParameterError(f"Pe must be >= 0, got {self.Pe}")
        if self.ell <= 0:
            raise ParameterError(f"ell must be > 0, got {self.ell}")


def to_physical(d: DimensionlessParams, D_E: float = 1.0) -> PhysicalParams:
    """Invert ell = sqrt(D_E/D_O) and Pe = (v0/D_O)/ell on the unit torus."""
    if not (math.isfinite(D_E) and D_E > 0):
        raise ParameterError(f"D_E must be > 0, got {D_E}")
    D_O = D_E / d.ell**2
    v0 = d.Pe * D_E / d.ell
    return PhysicalParams(D_E=D_E, v0=v0, D_O=D_O)


def to_dimensionless(p: PhysicalParams, phi: float) -> DimensionlessParams:
    """Return (phi, Pe, ell) for a physical parameter set at volume fraction phi."""
    ell = math.sqrt(p.D_E / p.D_O)
    Pe = p.v0 / math.sqrt(p.D_E * p.D_O)
    return DimensionlessParams(phi=phi, Pe=Pe, ell=ell)
