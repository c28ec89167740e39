"""Benchmark scenarios and their analytic oracles.

Three flow cases:

  channel   force-driven plane flow between no-slip plates at y = 0, ly with
            periodic side boundaries (the standard periodic-equivalent
            replacement of inflow/outflow by a constant body force G along x)
  cavity    closed no-slip box with a moving top lid
  decay     closed no-slip box, zero forcing, random solenoidal initial data

The channel admits an exact steady profile under the bi-viscosity law, which
is the quantitative oracle for the solver.  With half-width H (plates at
y_hat = -H and +H, y_hat measured from the centerline) the steady shear
stress is tau_xy(y_hat) = -G*y_hat.  Writing the law as a scalar relation
between tau_xy and the velocity gradient:

    |tau_xy| <= s_c:  du/dy_hat = -G*y_hat / (m*mu)          (core branch)
    |tau_xy| >  s_c:  du/dy_hat = -(G*|y_hat| - tau_y/sqrt(2)) * sign(y_hat)/mu

with the branch stress s_c = (m/(m-1)) * tau_y / sqrt(2).  The sqrt(2) comes
from the tensor norm convention: in plane shear |tau|^2 = 2*tau_xy^2, so the
yield surface |tau| = tau_y sits at |tau_xy| = tau_y/sqrt(2).  The core
(near-plug) half-width is therefore y_c = (m/(m-1)) * tau_y / (sqrt(2)*G),
approaching tau_y/(sqrt(2)*G) as m grows.  Integrating from the wall:

    y_hat in [y_c, H]:  u = (G*(H^2 - y_hat^2)/2 - tau_y/sqrt(2)*(H - y_hat)) / mu
    y_hat in [0, y_c]:  u = u(y_c) + G*(y_c^2 - y_hat^2) / (2*m*mu)

mirrored for negative y_hat, clipped to the all-core parabola when y_c >= H.
channel_oracle implements this closed form; channel_oracle_quadrature
integrates the inverted stress-shear relation numerically and is the
independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from bingflow.constitutive import FluidParams, RegIndex
from bingflow.grid import BoundarySpec, Grid, StaggeredField, apply_bcs, random_solenoidal
from bingflow.solver import Forcing

__all__ = [
    "Scenario",
    "make_channel",
    "make_cavity",
    "make_decay",
    "channel_core_half_width",
    "bingham_plug_half_width",
    "channel_oracle",
    "channel_oracle_quadrature",
    "channel_profile",
    "DECAY_AMPLITUDE",
]

DECAY_AMPLITUDE = 0.1


@dataclass(frozen=True)
class Scenario:
    """A named flow case: geometry, boundaries, and drive parameters."""

    kind: str
    grid: Grid
    bc: BoundarySpec
    force_gx: float = 0.0
    lid_speed: float = 0.0
    seed: int = 0

    def forcing(self) -> Forcing:
        if self.kind == "channel":
            return Forcing.constant(self.force_gx)
        return Forcing.none()

    def initial_state(self, rng: np.random.Generator | None = None) -> StaggeredField:
        if self.kind == "decay":
            rng = rng if rng is not None else np.random.default_rng(self.seed)
            return random_solenoidal(self.grid, self.bc, rng, amplitude=DECAY_AMPLITUDE)
        return apply_bcs(StaggeredField.zeros(self.grid, self.bc), self.grid)

    @property
    def half_width(self) -> float:
        return 0.5 * self.grid.ly


def make_channel(nx: int, ny: int, lx: float, ly: float, force_gx: float,
                 seed: int = 0) -> Scenario:
    if force_gx <= 0.0:
        raise ValueError("channel drive force_gx must be positive")
    return Scenario(kind="channel", grid=Grid(nx, ny, lx, ly),
                    bc=BoundarySpec.channel(), force_gx=force_gx, seed=seed)


def make_cavity(nx: int, ny: int, lx: float, ly: float, lid_speed: float,
                seed: int = 0) -> Scenario:
    return Scenario(kind="cavity", grid=Grid(nx, ny, lx, ly),
                    bc=BoundarySpec.moving_lid(lid_speed),
                    lid_speed=lid_speed, seed=seed)


def make_decay(nx: int, ny: int, lx: float, ly: float, seed: int = 0) -> Scenario:
    return Scenario(kind="decay", grid=Grid(nx, ny, lx, ly),
                    bc=BoundarySpec.no_slip(), seed=seed)


# ---------------------------------------------------------------------------
# analytic channel profile
# ---------------------------------------------------------------------------

def channel_core_half_width(G: float, p: FluidParams, r: RegIndex) -> float:
    """Half-width of the high-viscosity core branch, (m/(m-1))*tau_y/(sqrt(2)G)."""
    return r.m / (r.m - 1.0) * p.tau_y / (np.sqrt(2.0) * G)


def bingham_plug_half_width(G: float, p: FluidParams) -> float:
    """Rigid-plug half-width of the unregularized law, tau_y/(sqrt(2)*G)."""
    return p.tau_y / (np.sqrt(2.0) * G)


def channel_oracle(y, G: float, H_half: float, p: FluidParams, r: RegIndex):
    """Exact steady velocity of force-driven bi-viscosity flow between plates
    at y = +-H_half; y is measured from the centerline.

    Accepts scalars or arrays; raises for |y| > H_half or G <= 0.
    """
    y_arr = np.asarray(y, dtype=float)
    if G <= 0.0:
        raise ValueError("G must be positive")
    if np.any(np.abs(y_arr) > H_half * (1.0 + 1e-12)):
        raise ValueError("profile positions must satisfy |y| <= H_half")
    a = np.minimum(np.abs(y_arr), H_half)
    yc = min(channel_core_half_width(G, p, r), H_half)
    sy = p.tau_y / np.sqrt(2.0)
    u_wall_branch = (G * (H_half**2 - a**2) / 2.0 - sy * (H_half - a)) / p.mu
    u_at_yc = (G * (H_half**2 - yc**2) / 2.0 - sy * (H_half - yc)) / p.mu
    u_core = u_at_yc + G * (yc**2 - a**2) / (2.0 * r.m * p.mu)
    out = np.where(a >= yc, u_wall_branch, u_core)
    if np.isscalar(y) or np.ndim(y) == 0:
        return float(out)
    return out


def channel_oracle_quadrature(y, G: float, H_half: float, p: FluidParams,
                              r: RegIndex):
    """Independent route: integrate the inverted stress/shear-rate relation
    from the wall with adaptive quadrature, splitting at the branch point."""
    if G <= 0.0:
        raise ValueError("G must be positive")
    s_c = np.sqrt(2.0) * r.m * p.mu * (p.tau_y / (2.0 * p.mu * (r.m - 1.0)))
    sy = p.tau_y / np.sqrt(2.0)

    def rate(yh: float) -> float:
        s = G * yh
        if s <= s_c:
            return s / (r.m * p.mu)
        return (s - sy) / p.mu

    yc = min(s_c / G, H_half)

    def one(yval: float) -> float:
        a = min(abs(yval), H_half)
        total = 0.0
        if a < yc:
            total += quad(rate, a, yc, epsabs=1e-13, epsrel=1e-13)[0]
            total += quad(rate, yc, H_half, epsabs=1e-13, epsrel=1e-13)[0]
        else:
            total += quad(rate, a, H_half, epsabs=1e-13, epsrel=1e-13)[0]
        return total

    y_arr = np.asarray(y, dtype=float)
    out = np.array([one(val) for val in np.atleast_1d(y_arr)])
    if np.isscalar(y) or np.ndim(y) == 0:
        return float(out[0])
    return out.reshape(y_arr.shape)


def channel_profile(f: StaggeredField, g: Grid) -> tuple[np.ndarray, np.ndarray]:
    """(y_hat, u) profile of a channel state: x-average of the streamwise
    velocity at cell-center heights, y_hat measured from the centerline."""
    y_hat = (np.arange(g.ny) + 0.5) * g.dy - 0.5 * g.ly
    ncols = g.nx if f.bc.periodic_x else g.nx + 1
    return y_hat, np.mean(f.u[:ncols, :], axis=0)
