"""Tensor-level viscoplastic constitutive laws.

Implements the Bingham stress-strain law and its bi-viscosity regularization
for symmetric 2x2 strain-rate tensors:

    Bingham:        tau(D) = (2*mu + tau_y/|D|) * D        if |D| > 0,
                    |tau| <= tau_y (stress indeterminate)  if D == 0.

    Bi-viscosity:   tau_m(A) = 2*m*mu * A                  if |A| <= gamma,
                    tau_m(A) = (2*mu + tau_y/|A|) * A      if |A| >  gamma,

with branch threshold gamma = tau_y / (2*mu*(m - 1)), m >= 2.  The two
branches agree at |A| = gamma, so tau_m is continuous and, unlike the Bingham
law, single-valued at A = 0.

Norm convention: |A|^2 = A:A = sum_ij A_ij^2, i.e. the off-diagonal entry is
counted twice (|A|^2 = xx^2 + yy^2 + 2*xy^2 for a symmetric tensor).  This is
NOT the engineering second-invariant convention; mixing the two silently
introduces sqrt(2) factors in yield criteria.

All functions accept floats or numpy arrays for the tensor components and the
shear magnitude, so the same kernels serve both scalar unit tests and whole
TensorFields.  Everything here is pure; no state, safe under concurrency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SymTensor2",
    "FluidParams",
    "RegIndex",
    "StressResult",
    "tensor_norm",
    "components_norm",
    "gamma_m",
    "bingham_stress",
    "bingham_limit_stress",
    "biviscosity_stress",
    "biviscosity_components",
    "effective_viscosity",
    "newtonian_branch_stress_cap",
    "monotonicity_gap",
    "bingham_monotonicity_gap",
]


@dataclass(frozen=True)
class SymTensor2:
    """Symmetric 2x2 tensor; xy is stored once and stands for both
    off-diagonal entries."""

    xx: float
    yy: float
    xy: float

    def norm(self) -> float:
        """Frobenius norm with double off-diagonal counting."""
        return float(np.sqrt(self.xx**2 + self.yy**2 + 2.0 * self.xy**2))

    def ddot(self, other: "SymTensor2") -> float:
        """Full contraction A:B (off-diagonals counted twice)."""
        return float(
            self.xx * other.xx + self.yy * other.yy + 2.0 * self.xy * other.xy
        )

    def scaled(self, c: float) -> "SymTensor2":
        return SymTensor2(c * self.xx, c * self.yy, c * self.xy)

    def __add__(self, other: "SymTensor2") -> "SymTensor2":
        return SymTensor2(self.xx + other.xx, self.yy + other.yy, self.xy + other.xy)

    def __sub__(self, other: "SymTensor2") -> "SymTensor2":
        return SymTensor2(self.xx - other.xx, self.yy - other.yy, self.xy - other.xy)

    @staticmethod
    def zero() -> "SymTensor2":
        return SymTensor2(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class FluidParams:
    """Dynamic viscosity mu > 0 (Pa s) and yield stress tau_y >= 0 (Pa).

    tau_y = 0 degenerates both laws to the Newtonian stress 2*mu*D.
    """

    mu: float
    tau_y: float

    def __post_init__(self) -> None:
        if not self.mu > 0.0:
            raise ValueError(f"viscosity mu must be positive, got {self.mu}")
        if self.tau_y < 0.0:
            raise ValueError(f"yield stress tau_y must be nonnegative, got {self.tau_y}")


@dataclass(frozen=True)
class RegIndex:
    """Regularization multiplier m >= 2 (real-valued, so continuation
    schedules can be smooth)."""

    m: float

    def __post_init__(self) -> None:
        if not self.m >= 2.0:
            raise ValueError(f"regularization index m must be >= 2, got {self.m}")


@dataclass(frozen=True)
class StressResult:
    """Outcome of the Bingham law.

    yielded=True carries the stress tensor; yielded=False means the strain
    rate was zero, where the law only bounds the stress magnitude by tau_y
    (the `bound` field).  Callers that need a stress value below yield must
    use the bi-viscosity law instead.
    """

    yielded: bool
    stress: SymTensor2 | None = None
    bound: float | None = None


def tensor_norm(a: SymTensor2) -> float:
    """sqrt(a:a) with the double off-diagonal counting."""
    return a.norm()


def components_norm(xx, yy, xy):
    """Array form of the tensor norm for component fields."""
    return np.sqrt(np.square(xx) + np.square(yy) + 2.0 * np.square(xy))


def gamma_m(p: FluidParams, r: RegIndex) -> float:
    """Branch threshold tau_y / (2*mu*(m-1)), strictly decreasing in m."""
    return p.tau_y / (2.0 * p.mu * (r.m - 1.0))


def newtonian_branch_stress_cap(p: FluidParams, r: RegIndex) -> float:
    """Largest |tau_m| attainable on the Newtonian branch: (m/(m-1))*tau_y.

    Equals 2*m*mu*gamma; every unyielded sample must sit at or below it.
    """
    return r.m / (r.m - 1.0) * p.tau_y


def bingham_stress(d: SymTensor2, p: FluidParams) -> StressResult:
    """Bingham stress (2*mu + tau_y/|d|)*d, or the unyielded marker at d = 0."""
    nd = d.norm()
    if nd == 0.0:
        return StressResult(yielded=False, bound=p.tau_y)
    return StressResult(yielded=True, stress=d.scaled(2.0 * p.mu + p.tau_y / nd))


def bingham_limit_stress(d: SymTensor2, p: FluidParams) -> SymTensor2:
    """Single-valued Bingham stress using the zero-tensor convention at d = 0.

    This is the pointwise limit of the bi-viscosity stress as m grows; it
    agrees with bingham_stress wherever the latter is yielded, and with the
    plastic branch of the regularized law bit for bit (shared factor).
    """
    nd = d.norm()
    if nd == 0.0:
        return SymTensor2.zero()
    return d.scaled(2.0 * p.mu + p.tau_y / nd)


def biviscosity_components(xx, yy, xy, p: FluidParams, r: RegIndex):
    """Bi-viscosity stress on component arrays; returns (sxx, syy, sxy).

    Both branches are the isotropic scaling 2*eta(|d|)*d, so this shares the
    scalar factor with effective_viscosity and the plastic branch matches the
    Bingham formula bit for bit.
    """
    nd = components_norm(xx, yy, xy)
    factor = 2.0 * effective_viscosity(nd, p, r)
    return factor * np.asarray(xx), factor * np.asarray(yy), factor * np.asarray(xy)


def biviscosity_stress(d: SymTensor2, p: FluidParams, r: RegIndex) -> SymTensor2:
    """Regularized stress: 2*m*mu*d below the branch threshold, Bingham above.

    Total function, defined at d = 0 (returns the zero tensor there).
    """
    sxx, syy, sxy = biviscosity_components(d.xx, d.yy, d.xy, p, r)
    return SymTensor2(float(sxx), float(syy), float(sxy))


def effective_viscosity(shear, p: FluidParams, r: RegIndex):
    """Scalar viscosity eta(|d|) with tau_m(d) = 2*eta(|d|)*d.

    m*mu on the Newtonian branch (shear <= gamma), mu + tau_y/(2*shear) on
    the plastic branch; continuous across the threshold and bounded in
    [mu, m*mu].  For tau_y = 0 the law is Newtonian and eta == mu for every
    shear, independent of m (the m*mu plateau would otherwise make the
    degenerate zero-shear point m-dependent).

    The plastic branch is evaluated as 0.5*(2*mu + tau_y/shear): halving and
    doubling are exact, so 2*eta reproduces the Bingham stress factor bit
    for bit above the threshold.

    Accepts scalars or arrays; rejects negative shear.
    """
    shear_arr = np.asarray(shear, dtype=float)
    if np.any(shear_arr < 0.0):
        raise ValueError("shear magnitude must be nonnegative")
    if p.tau_y == 0.0:
        eta = np.full_like(shear_arr, p.mu)
    else:
        gamma = gamma_m(p, r)
        plastic = shear_arr > gamma
        safe = np.where(plastic, shear_arr, 1.0)
        eta = np.where(plastic, 0.5 * (2.0 * p.mu + p.tau_y / safe), r.m * p.mu)
    if np.isscalar(shear) or np.ndim(shear) == 0:
        return float(eta)
    return eta


def monotonicity_gap(a: SymTensor2, b: SymTensor2, p: FluidParams, r: RegIndex) -> float:
    """(tau_m(a) - tau_m(b)) : (a - b), guaranteed >= 2*mu*|a-b|^2.

    Equals 2*m*mu*|a-b|^2 exactly when both arguments sit on the Newtonian
    branch.
    """
    ta = biviscosity_stress(a, p, r)
    tb = biviscosity_stress(b, p, r)
    return (ta - tb).ddot(a - b)


def bingham_monotonicity_gap(a: SymTensor2, b: SymTensor2, p: FluidParams) -> float:
    """(tau(a) - tau(b)) : (a - b) for the unregularized law, >= 2*mu*|a-b|^2.

    Rejects zero arguments: the Bingham stress is set-valued there.
    """
    if a.norm() == 0.0 or b.norm() == 0.0:
        raise ValueError("Bingham stress is set-valued at the zero tensor")
    ta = bingham_limit_stress(a, p)
    tb = bingham_limit_stress(b, p)
    return (ta - tb).ddot(a - b)
