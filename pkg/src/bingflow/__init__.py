"""bingflow: 2D incompressible Bingham flow on a staggered grid, solved with
a bi-viscosity regularized stress, plus the diagnostics that check the
constitutive inequalities, energy balance, and the large-m limit behaviour."""

from bingflow.constitutive import (
    FluidParams,
    RegIndex,
    StressResult,
    SymTensor2,
    bingham_stress,
    biviscosity_stress,
    effective_viscosity,
    gamma_m,
    tensor_norm,
)

__version__ = "0.1.0"

__all__ = [
    "FluidParams",
    "RegIndex",
    "StressResult",
    "SymTensor2",
    "bingham_stress",
    "biviscosity_stress",
    "effective_viscosity",
    "gamma_m",
    "tensor_norm",
    "__version__",
]
