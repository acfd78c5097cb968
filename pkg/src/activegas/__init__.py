"""Active lattice gas with exclusion: simulation and analysis toolkit.

Three cross-validated levels of description:

* ``micro``   -- exact event-driven simulation of the lattice dynamics
* ``fvm``     -- finite-volume solver for the hydrodynamic equation
* ``linstab`` -- linear stability of the homogeneous state
"""

from .params import DimensionlessParams, PhysicalParams, to_dimensionless, to_physical
from .coeffs import TransportCoefficients

__all__ = [
    "DimensionlessParams",
    "PhysicalParams",
    "to_dimensionless",
    "to_physical",
    "TransportCoefficients",
]

__version__ = "0.1.0"
