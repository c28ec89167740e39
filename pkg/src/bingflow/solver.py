"""Time integrator for incompressible viscoplastic flow on the MAC grid.

One step advances the momentum balance

    du/dt + div(u u) = div(tau_m(Du)) - grad p + f,    div u = 0,

by operator splitting: explicit conservative advection, body force, implicit
variable-viscosity diffusion, and a pressure projection that restores the
divergence constraint.  The stiff part of the stress (the 2*m*mu branch of
the bi-viscosity law) sits inside the implicit substep, so the time step is
not limited by the regularization index.

Viscous substep.  The stress is written as tau = 2*eta(|D|)*D and the
variable-coefficient operator is discretized with eta at cell centers for the
normal components and harmonic-mean eta at corners for the shear component.
The resulting matrix is symmetric positive definite (it is the gradient of
the discrete dissipation functional), so both the viscous solve and the
pressure Poisson solve use conjugate gradients with relative-residual
stopping.  The nonlinearity eta(|D u|) is handled by Picard iteration:
freeze eta from the latest iterate, solve, re-evaluate, and stop once the
re-linearized residual is below picard_tol.  For tau_y = 0 the viscosity is
constant and the loop exits after a single solve.

Advection.  Central, conservative (flux) form with two-point averages.  On a
discretely divergence-free field this discretization produces no energy; the
explicit Euler substep adds at most dt^2 * |Adv(u)|^2 of kinetic energy per
step, which the recorded advection defect tracks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from bingflow.constitutive import FluidParams, RegIndex, effective_viscosity
from bingflow.grid import (
    BoundarySpec,
    Grid,
    StaggeredField,
    apply_bcs,
    compute_divergence,
    compute_strain,
    corner_weights,
    face_inner,
    gradient_parts,
    norm_H,
)

__all__ = [
    "SolveConfig",
    "Forcing",
    "SolverError",
    "CFLViolation",
    "PicardDivergence",
    "PoissonDivergence",
    "advect",
    "advection_tendency",
    "diffuse_implicit",
    "pressure_project",
    "step",
    "run_to_steady",
    "viscosity_fields",
    "dissipation_power",
    "strain_pairing",
    "viscous_pairing",
    "forcing_field",
]


class SolverError(RuntimeError):
    pass


class CFLViolation(SolverError):
    pass


class PicardDivergence(SolverError):
    pass


class PoissonDivergence(SolverError):
    pass


@dataclass(frozen=True)
class SolveConfig:
    """Stepping and tolerance knobs.  Exactly one of dt/cfl drives the step
    size; all tolerances are strictly positive."""

    t_end: float
    m: RegIndex = field(default_factory=lambda: RegIndex(2.0))
    dt: float | None = None
    cfl: float | None = None
    picard_tol: float = 1e-9
    picard_max: int = 200
    poisson_tol: float = 1e-10
    steady_tol: float = 1e-7
    record_every: int = 1

    def __post_init__(self) -> None:
        if (self.dt is None) == (self.cfl is None):
            raise ValueError("exactly one of dt and cfl must be set")
        if self.dt is not None and not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if self.cfl is not None and not self.cfl > 0.0:
            raise ValueError("cfl must be positive")
        if not self.t_end > 0.0:
            raise ValueError("t_end must be positive")
        for name in ("picard_tol", "poisson_tol", "steady_tol"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if self.picard_max < 1 or self.record_every < 1:
            raise ValueError("picard_max and record_every must be >= 1")


@dataclass(frozen=True)
class Forcing:
    """Pointwise body force per unit (normalized) density, sampled at faces."""

    fx: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    fy: Callable[[np.ndarray, np.ndarray, float], np.ndarray]

    @staticmethod
    def none() -> "Forcing":
        return Forcing(fx=lambda x, y, t: np.zeros_like(x),
                       fy=lambda x, y, t: np.zeros_like(x))

    @staticmethod
    def constant(gx: float, gy: float = 0.0) -> "Forcing":
        return Forcing(fx=lambda x, y, t: np.full_like(x, gx),
                       fy=lambda x, y, t: np.full_like(x, gy))


def forcing_field(forcing: Forcing, g: Grid, bc: BoundarySpec, t: float) -> StaggeredField:
    """Sample the body force on the staggered faces at time t."""
    xu, yu = np.meshgrid(np.arange(g.nx + 1) * g.dx,
                         (np.arange(g.ny) + 0.5) * g.dy, indexing="ij")
    xv, yv = np.meshgrid((np.arange(g.nx) + 0.5) * g.dx,
                         np.arange(g.ny + 1) * g.dy, indexing="ij")
    fu = np.asarray(forcing.fx(xu, yu, t), dtype=float)
    fv = np.asarray(forcing.fy(xv, yv, t), dtype=float)
    if not (np.all(np.isfinite(fu)) and np.all(np.isfinite(fv))):
        raise ValueError("forcing produced non-finite values")
    out = StaggeredField(u=fu, v=fv, p=np.zeros((g.nx, g.ny)), bc=bc)
    return apply_bcs(out, g)


# ---------------------------------------------------------------------------
# advection
# ---------------------------------------------------------------------------

def advection_tendency(f: StaggeredField, g: Grid) -> StaggeredField:
    """div(u u) in conservative flux form; zero rows on wall faces."""
    f.check_sizes(g)
    nx, ny, dx, dy = g.nx, g.ny, g.dx, g.dy
    per = f.bc.periodic_x
    u, v = f.u, f.v
    u_bottom, u_top = 0.0, f.bc.lid_speed

    # cell-centered normal fluxes
    ubar_c = 0.5 * (u[:-1, :] + u[1:, :])           # (nx, ny)
    vbar_c = 0.5 * (v[:, :-1] + v[:, 1:])           # (nx, ny)
    Fxx = ubar_c * ubar_c
    Fyy = vbar_c * vbar_c

    # corner cross flux u*v with two-point averages
    ubar_n = np.empty((nx + 1, ny + 1))
    ubar_n[:, 1:-1] = 0.5 * (u[:, :-1] + u[:, 1:])
    ubar_n[:, 0] = u_bottom
    ubar_n[:, -1] = u_top
    vbar_n = np.empty((nx + 1, ny + 1))
    vbar_n[1:-1, :] = 0.5 * (v[:-1, :] + v[1:, :])
    if per:
        wrap = 0.5 * (v[-1, :] + v[0, :])
        vbar_n[0, :] = wrap
        vbar_n[-1, :] = wrap
    else:
        # on side walls the normal velocity u vanishes, so the flux is zero
        vbar_n[0, :] = 0.0
        vbar_n[-1, :] = 0.0
    Fxy = ubar_n * vbar_n
    if not per:
        Fxy[0, :] = 0.0
        Fxy[-1, :] = 0.0
    Fxy[:, 0] = 0.0       # solid walls: v = 0 there
    Fxy[:, -1] = 0.0

    adv_u = np.zeros_like(u)
    if per:
        Fw = Fxx[np.arange(-1, nx - 1), :]
        adv_u[:-1, :] = (Fxx - Fw) / dx + (Fxy[:-1, 1:] - Fxy[:-1, :-1]) / dy
        adv_u[-1, :] = adv_u[0, :]
    else:
        adv_u[1:-1, :] = (Fxx[1:, :] - Fxx[:-1, :]) / dx \
            + (Fxy[1:-1, 1:] - Fxy[1:-1, :-1]) / dy

    adv_v = np.zeros_like(v)
    adv_v[:, 1:-1] = (Fxy[1:, 1:-1] - Fxy[:-1, 1:-1]) / dx \
        + (Fyy[:, 1:] - Fyy[:, :-1]) / dy
    return StaggeredField(u=adv_u, v=adv_v, p=np.zeros((nx, ny)), bc=f.bc)


def advect(f: StaggeredField, g: Grid, dt: float) -> StaggeredField:
    """Explicit conservative momentum advection; preserves boundary values.

    Raises CFLViolation when max(|u| dt/dx, |v| dt/dy) exceeds 1.
    """
    courant = max(np.max(np.abs(f.u)) * dt / g.dx, np.max(np.abs(f.v)) * dt / g.dy)
    if courant > 1.0:
        raise CFLViolation(f"advective Courant number {courant:.3g} exceeds 1")
    adv = advection_tendency(f, g)
    out = f.copy()
    out.u -= dt * adv.u
    out.v -= dt * adv.v
    return apply_bcs(out, g)


# ---------------------------------------------------------------------------
# variable-viscosity operator
# ---------------------------------------------------------------------------

def viscosity_fields(f: StaggeredField, g: Grid, p: FluidParams, r: RegIndex):
    """(eta_c, eta_n, strain) for the current state: cell-centered viscosity
    from the collocated strain norm and harmonic-mean corner viscosity."""
    d = compute_strain(f, g)
    eta_c = effective_viscosity(d.norm(), p, r)
    eta_n = _harmonic_corner(eta_c, g, f.bc.periodic_x)
    return eta_c, eta_n, d


def _harmonic_corner(eta_c: np.ndarray, g: Grid, periodic_x: bool) -> np.ndarray:
    """Harmonic mean of adjacent cell viscosities on the corner lattice.

    Harmonic averaging keeps the shear flux bounded across the sharp branch
    switch of the bi-viscosity law.
    """
    nx, ny = g.nx, g.ny
    inv = np.zeros((nx + 2, ny + 2))
    cnt = np.zeros((nx + 2, ny + 2))
    inv[1:-1, 1:-1] = 1.0 / eta_c
    cnt[1:-1, 1:-1] = 1.0
    if periodic_x:
        inv[0, 1:-1] = 1.0 / eta_c[-1, :]
        inv[-1, 1:-1] = 1.0 / eta_c[0, :]
        cnt[0, 1:-1] = 1.0
        cnt[-1, 1:-1] = 1.0
    s = inv[:-1, :-1] + inv[1:, :-1] + inv[:-1, 1:] + inv[1:, 1:]
    c = cnt[:-1, :-1] + cnt[1:, :-1] + cnt[:-1, 1:] + cnt[1:, 1:]
    return c / s


@lru_cache(maxsize=16)
def _dof_maps(nx: int, ny: int, periodic_x: bool):
    """Unknown numbering for interior faces; wall faces map to -1 and the
    periodic mirror column shares the id of column 0."""
    uid = np.full((nx + 1, ny), -1, dtype=np.int64)
    if periodic_x:
        uid[:nx, :] = np.arange(nx * ny).reshape(nx, ny)
        uid[nx, :] = uid[0, :]
        n_u = nx * ny
    else:
        uid[1:nx, :] = np.arange((nx - 1) * ny).reshape(nx - 1, ny)
        n_u = (nx - 1) * ny
    vid = np.full((nx, ny + 1), -1, dtype=np.int64)
    vid[:, 1:ny] = n_u + np.arange(nx * (ny - 1)).reshape(nx, ny - 1)
    return uid, vid, n_u + nx * (ny - 1)


def _pack(f: StaggeredField, uid, vid, n: int) -> np.ndarray:
    x = np.empty(n)
    nx = vid.shape[0]
    if uid[0, 0] >= 0:
        x[uid[:nx, :].ravel()] = f.u[:nx, :].ravel()
    else:
        x[uid[1:nx, :].ravel()] = f.u[1:nx, :].ravel()
    x[vid[:, 1:-1].ravel()] = f.v[:, 1:-1].ravel()
    return x


def _unpack(x: np.ndarray, template: StaggeredField, g: Grid, uid, vid) -> StaggeredField:
    out = template.copy()
    nx = g.nx
    if uid[0, 0] >= 0:
        out.u[:nx, :] = x[uid[:nx, :].ravel()].reshape(nx, g.ny)
    else:
        out.u[0, :] = 0.0
        out.u[nx, :] = 0.0
        out.u[1:nx, :] = x[uid[1:nx, :].ravel()].reshape(nx - 1, g.ny)
    out.v[:, 1:-1] = x[vid[:, 1:-1].ravel()].reshape(nx, g.ny - 1)
    return apply_bcs(out, g)


def assemble_viscous_system(g: Grid, bc: BoundarySpec, eta_c: np.ndarray,
                            eta_n: np.ndarray, dt: float):
    """(I + dt * R) with R = -div(2 eta D .), plus the boundary-data vector.

    Returns (A_csr, rhs_bc, (uid, vid, ndof)).  The matrix is SPD: it is the
    identity plus dt times the gradient of the discrete dissipation form.
    """
    nx, ny, dx, dy = g.nx, g.ny, g.dx, g.dy
    per = bc.periodic_x
    dx2, dy2, dxy = dx * dx, dy * dy, dx * dy
    uid, vid, ndof = _dof_maps(nx, ny, per)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    rhs = np.zeros(ndof)

    def add(r, c, v):
        r = np.asarray(r).ravel()
        c = np.asarray(c).ravel()
        v = np.broadcast_to(v, np.broadcast_shapes(np.shape(v), (r.size,))).ravel() \
            if np.ndim(v) == 0 else np.asarray(v).ravel()
        keep = c >= 0
        rows.append(r[keep])
        cols.append(c[keep])
        vals.append(v[keep])

    # ----- u-momentum rows -----
    if per:
        II, JJ = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        IW, IE = (II - 1) % nx, (II + 1) % nx
        ICW, ICE = (II - 1) % nx, II
    else:
        II, JJ = np.meshgrid(np.arange(1, nx), np.arange(ny), indexing="ij")
        IW, IE = II - 1, II + 1
        ICW, ICE = II - 1, II
    R = uid[II, JJ]
    add(R, R, np.ones(R.shape).ravel())

    ew, ee = eta_c[ICW, JJ], eta_c[ICE, JJ]
    add(R, R, 2.0 * dt * (ew + ee) / dx2)
    add(R, uid[IW, JJ], -2.0 * dt * ew / dx2)
    add(R, uid[IE, JJ], -2.0 * dt * ee / dx2)

    u_bottom, u_top = 0.0, bc.lid_speed
    bot_wall = JJ == 0
    top_wall = JJ == ny - 1
    en_b = eta_n[II, JJ]            # corner below the face
    en_t = eta_n[II, JJ + 1]        # corner above the face

    # bottom corner: reflection closure on the wall row, full stencil inside
    cb = np.where(bot_wall, 2.0 * dt * en_b / dy2, dt * en_b / dy2)
    add(R, R, cb)
    add(R[~bot_wall], uid[II, JJ - 1][~bot_wall], (-dt * en_b / dy2)[~bot_wall])
    cv_b = dt * en_b / dxy
    add(R[~bot_wall], vid[ICE, JJ][~bot_wall], cv_b[~bot_wall])
    add(R[~bot_wall], vid[ICW, JJ][~bot_wall], -cv_b[~bot_wall])
    if u_bottom != 0.0:
        np.add.at(rhs, R[bot_wall], 2.0 * dt * en_b[bot_wall] * u_bottom / dy2)

    # top corner
    ct = np.where(top_wall, 2.0 * dt * en_t / dy2, dt * en_t / dy2)
    add(R, R, ct)
    jt = np.minimum(JJ + 1, ny - 1)
    add(R[~top_wall], uid[II, jt][~top_wall], (-dt * en_t / dy2)[~top_wall])
    cv_t = dt * en_t / dxy
    jv = np.minimum(JJ + 1, ny - 1)
    add(R[~top_wall], vid[ICE, jv][~top_wall], -cv_t[~top_wall])
    add(R[~top_wall], vid[ICW, jv][~top_wall], cv_t[~top_wall])
    if u_top != 0.0:
        np.add.at(rhs, R[top_wall], 2.0 * dt * en_t[top_wall] * u_top / dy2)

    # ----- v-momentum rows -----
    II, JJ = np.meshgrid(np.arange(nx), np.arange(1, ny), indexing="ij")
    R = vid[II, JJ]
    add(R, R, np.ones(R.shape).ravel())

    es, en_ = eta_c[II, JJ - 1], eta_c[II, JJ]
    add(R, R, 2.0 * dt * (es + en_) / dy2)
    add(R, vid[II, JJ - 1], -2.0 * dt * es / dy2)
    add(R, vid[II, JJ + 1], -2.0 * dt * en_ / dy2)

    west_wall = (II == 0) & (not per)
    east_wall = (II == nx - 1) & (not per)
    enw = eta_n[II, JJ]             # corner west of the face
    ene = eta_n[II + 1, JJ]         # corner east of the face

    cw = np.where(west_wall, 2.0 * dt * enw / dx2, dt * enw / dx2)
    add(R, R, cw)
    VW = (II - 1) % nx if per else np.maximum(II - 1, 0)
    add(R[~west_wall], vid[VW, JJ][~west_wall], (-dt * enw / dx2)[~west_wall])
    cu_w = dt * enw / dxy
    add(R[~west_wall], uid[II, JJ][~west_wall], cu_w[~west_wall])
    add(R[~west_wall], uid[II, JJ - 1][~west_wall], -cu_w[~west_wall])

    ce = np.where(east_wall, 2.0 * dt * ene / dx2, dt * ene / dx2)
    add(R, R, ce)
    VE = (II + 1) % nx if per else np.minimum(II + 1, nx - 1)
    add(R[~east_wall], vid[VE, JJ][~east_wall], (-dt * ene / dx2)[~east_wall])
    cu_e = dt * ene / dxy
    add(R[~east_wall], uid[II + 1, JJ][~east_wall], -cu_e[~east_wall])
    add(R[~east_wall], uid[II + 1, JJ - 1][~east_wall], cu_e[~east_wall])

    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ndof, ndof),
    )
    return A, rhs, (uid, vid, ndof)


def viscous_tendency(f: StaggeredField, g: Grid, p: FluidParams,
                     r: RegIndex) -> StaggeredField:
    """-div(2 eta(|Du|) Du) evaluated directly from the state (matrix-free
    application of the viscous operator, including the wall closures)."""
    eta_c, eta_n, _ = viscosity_fields(f, g, p, r)
    dudx, dvdy, dudy, dvdx = gradient_parts(f, g)
    nx, ny, dx, dy = g.nx, g.ny, g.dx, g.dy
    per = f.bc.periodic_x
    Fxx = 2.0 * eta_c * dudx
    Fyy = 2.0 * eta_c * dvdy
    Fxy = 2.0 * eta_n * 0.5 * (dudy + dvdx)

    out = StaggeredField.zeros(g, f.bc)
    if per:
        Fw = Fxx[np.arange(-1, nx - 1), :]
        out.u[:-1, :] = -((Fxx - Fw) / dx + (Fxy[:-1, 1:] - Fxy[:-1, :-1]) / dy)
        out.u[-1, :] = out.u[0, :]
    else:
        out.u[1:-1, :] = -((Fxx[1:, :] - Fxx[:-1, :]) / dx
                           + (Fxy[1:-1, 1:] - Fxy[1:-1, :-1]) / dy)
    out.v[:, 1:-1] = -((Fxy[1:, 1:-1] - Fxy[:-1, 1:-1]) / dx
                       + (Fyy[:, 1:] - Fyy[:, :-1]) / dy)
    return out


def _cg_solve(A, b: np.ndarray, rtol: float, x0: np.ndarray | None = None,
              maxiter: int | None = None, M=None) -> np.ndarray:
    x, info = spla.cg(A, b, x0=x0, rtol=rtol, atol=0.0,
                      maxiter=maxiter or max(2000, 40 * int(np.sqrt(b.size))), M=M)
    if info != 0:
        raise SolverError(f"conjugate gradient did not converge (info={info})")
    return x


def diffuse_implicit(f: StaggeredField, g: Grid, p: FluidParams, r: RegIndex,
                     dt: float, cfg: SolveConfig,
                     viscosity_seed: StaggeredField | None = None
                     ) -> tuple[StaggeredField, int]:
    """Solve (I - dt * div(2 eta(|D .|) D .)) u = u_in by Picard iteration.

    The viscosity is frozen between linear solves; each sweep solves the
    frozen SPD system and re-evaluates eta.  Convergence is judged on the raw
    nonlinear residual |u + dt*VT(u) - u_in| / |u_in| with VT applied
    matrix-free using the candidate's own viscosity, so no amount of
    relaxation can mask a stale solve.  Successive substitution is
    Aitken-relaxed: the update direction is scaled by the extrapolation
    factor fitted from the last two fixed-point residuals, which collapses
    the slow linear contraction the steep part of eta(|D|) causes at large m.
    A safeguard resets the relaxation whenever the residual grows.

    The time stepper passes the pre-forcing state as `viscosity_seed`: a
    body-force increment shifts near-wall strain without moving the viscous
    balance, so the previous state's viscosity is the better linearization
    point than u_in's.

    Returns (u_star, iteration_count); a single iteration suffices whenever
    tau_y = 0.  Raises PicardDivergence after picard_max iterations.
    """
    f.check_sizes(g)
    lin_rtol = max(1e-14, 0.02 * cfg.picard_tol)
    eta_state = viscosity_seed if viscosity_seed is not None else f
    eta_c, eta_n, _ = viscosity_fields(eta_state, g, p, r)
    A, rhs_bc, (uid, vid, ndof) = assemble_viscous_system(g, f.bc, eta_c, eta_n, dt)
    b_in = _pack(f, uid, vid, ndof)
    b = b_in + rhs_bc
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return apply_bcs(f.copy(), g), 1
    x = b_in.copy()
    r_prev = None
    omega = 1.0
    best = np.inf
    for iteration in range(1, cfg.picard_max + 1):
        M = spla.LinearOperator(A.shape, matvec=lambda y, d=1.0 / A.diagonal(): d * y)
        x_sol = _cg_solve(A, b, rtol=lin_rtol, x0=x, M=M)
        r_fp = x_sol - x
        if r_prev is not None:
            dr = r_fp - r_prev
            denom = float(dr @ dr)
            if denom > 0.0:
                omega = float(np.clip(-omega * (r_prev @ dr) / denom, 0.1, 16.0))
        x = x + omega * r_fp
        out = _unpack(x, f, g, uid, vid)
        vt = viscous_tendency(out, g, p, r)
        residual = np.linalg.norm(x + dt * _pack(vt, uid, vid, ndof) - b_in) / bnorm
        if residual < cfg.picard_tol:
            return out, iteration
        if residual > 2.0 * best:       # extrapolation overshot: plain step
            x = x_sol
            out = _unpack(x, f, g, uid, vid)
            omega = 1.0
            r_prev = None
        else:
            r_prev = r_fp
        best = min(best, residual)
        eta_c = effective_viscosity(compute_strain(out, g).norm(), p, r)
        eta_n = _harmonic_corner(eta_c, g, f.bc.periodic_x)
        A, rhs_bc, _ = assemble_viscous_system(g, f.bc, eta_c, eta_n, dt)
        b = b_in + rhs_bc
    raise PicardDivergence(
        f"viscosity iteration did not reach {cfg.picard_tol:g} "
        f"in {cfg.picard_max} sweeps (last residual {residual:.3g})"
    )


# ---------------------------------------------------------------------------
# pressure projection
# ---------------------------------------------------------------------------

@lru_cache(maxsize=16)
def _poisson_matrix(nx: int, ny: int, dx: float, dy: float, periodic_x: bool):
    """Negative MAC Laplacian on cell centers, no-flux walls (and wraparound
    in x when periodic).  Positive semidefinite with a constant nullspace."""
    n = nx * ny
    idx = np.arange(n).reshape(nx, ny)
    rows, cols, vals = [], [], []

    def couple(a, b, w):
        rows.extend([a.ravel(), a.ravel()])
        cols.extend([a.ravel(), b.ravel()])
        vals.extend([np.full(a.size, w), np.full(a.size, -w)])

    couple(idx[:-1, :], idx[1:, :], 1.0 / dx**2)
    couple(idx[1:, :], idx[:-1, :], 1.0 / dx**2)
    couple(idx[:, :-1], idx[:, 1:], 1.0 / dy**2)
    couple(idx[:, 1:], idx[:, :-1], 1.0 / dy**2)
    if periodic_x:
        couple(idx[-1, :], idx[0, :], 1.0 / dx**2)
        couple(idx[0, :], idx[-1, :], 1.0 / dx**2)
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return A


def _poisson_solve(g: Grid, bc: BoundarySpec, rhs: np.ndarray, rtol: float) -> np.ndarray:
    """Zero-mean solution of lap(phi) = rhs via CG on the mean-augmented SPD
    operator (the rank-one term pins the constant mode without breaking
    symmetry)."""
    A = _poisson_matrix(g.nx, g.ny, g.dx, g.dy, bc.periodic_x)
    b = -(rhs - rhs.mean()).ravel()
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros_like(rhs)

    def matvec(x):
        return A @ x + x.mean()

    op = spla.LinearOperator(A.shape, matvec=matvec)
    x = _cg_solve(op, b, rtol=rtol, maxiter=max(4000, 60 * (g.nx + g.ny)))
    x -= x.mean()
    return x.reshape(g.nx, g.ny)


def pressure_project(f: StaggeredField, g: Grid, dt: float,
                     cfg: SolveConfig) -> StaggeredField:
    """Project the tentative velocity onto the divergence-free space.

    Solves lap(phi) = div(u*)/dt with no-flux walls and zero-mean gauge, then
    u <- u* - dt grad(phi), p <- p + phi.  Re-projects, tightening the solve,
    until the cellwise divergence is within the documented 10 * poisson_tol
    budget.
    """
    f.check_sizes(g)
    out = apply_bcs(f.copy(), g)
    target = 5.0 * cfg.poisson_tol
    rtol = 0.5 * cfg.poisson_tol
    for _ in range(6):
        div = compute_divergence(out, g)
        if np.max(np.abs(div)) <= target:
            break
        phi = _poisson_solve(g, out.bc, div / dt, rtol)
        if out.bc.periodic_x:
            gpx = np.empty((g.nx + 1, g.ny))
            gpx[1:-1, :] = (phi[1:, :] - phi[:-1, :]) / g.dx
            gpx[0, :] = (phi[0, :] - phi[-1, :]) / g.dx
            gpx[-1, :] = gpx[0, :]
            out.u -= dt * gpx
        else:
            out.u[1:-1, :] -= dt * (phi[1:, :] - phi[:-1, :]) / g.dx
        out.v[:, 1:-1] -= dt * (phi[:, 1:] - phi[:, :-1]) / g.dy
        out.p += phi
        apply_bcs(out, g)
        rtol = max(rtol * 0.1, 1e-15)
    else:
        raise PoissonDivergence(
            f"projection stalled at max|div u| = {np.max(np.abs(compute_divergence(out, g))):.3g}"
        )
    out.p -= out.p.mean()
    return out


# ---------------------------------------------------------------------------
# energy-consistent quadratures
# ---------------------------------------------------------------------------

def strain_pairing(a: StaggeredField, b: StaggeredField, g: Grid) -> float:
    """Discrete integral of Da : Db with the operator's native sites (normal
    parts at centers, shear at corners).  strain_pairing(f, f) is the exact
    quadratic form of the constant-viscosity viscous operator."""
    axx, ayy, audy, avdx = gradient_parts(a, g)
    bxx, byy, budy, bvdx = gradient_parts(b, g)
    axy = 0.5 * (audy + avdx)
    bxy = 0.5 * (budy + bvdx)
    wn = corner_weights(g, a.bc)
    s = g.dx * g.dy * float(np.sum(axx * bxx) + np.sum(ayy * byy))
    s += 2.0 * float(np.sum(axy * bxy * wn))
    return s


def viscous_pairing(f: StaggeredField, phi: StaggeredField, g: Grid,
                    p: FluidParams, r: RegIndex) -> float:
    """Discrete integral of tau_m(Du) : Dphi, with the viscosity evaluated
    from f and the same mixed quadrature the implicit operator uses."""
    eta_c, eta_n, _ = viscosity_fields(f, g, p, r)
    fxx, fyy, fudy, fvdx = gradient_parts(f, g)
    pxx, pyy, pudy, pvdx = gradient_parts(phi, g)
    fxy = 0.5 * (fudy + fvdx)
    pxy = 0.5 * (pudy + pvdx)
    wn = corner_weights(g, f.bc)
    s = g.dx * g.dy * 2.0 * float(np.sum(eta_c * (fxx * pxx + fyy * pyy)))
    s += 4.0 * float(np.sum(eta_n * fxy * pxy * wn))
    return s


def dissipation_power(f: StaggeredField, g: Grid, p: FluidParams, r: RegIndex) -> float:
    """Instantaneous viscous dissipation integral tau_m(Du) : Du.

    Computed with the operator-consistent quadrature, so it equals
    x^T R x of the assembled viscous operator exactly and dominates
    2*mu*|Du|^2 cellwise (the viscosity never drops below mu).
    """
    return viscous_pairing(f, f, g, p, r)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def _step_dt(f: StaggeredField, g: Grid, cfg: SolveConfig, forcing_scale: float) -> float:
    if cfg.dt is not None:
        return cfg.dt
    vmax = max(np.max(np.abs(f.u)), np.max(np.abs(f.v)),
               abs(f.bc.lid_speed), 1e-12)
    dt = cfg.cfl * min(g.dx, g.dy) / vmax
    if forcing_scale > 0.0:
        dt = min(dt, np.sqrt(cfg.cfl * min(g.dx, g.dy) / forcing_scale))
    return dt


@dataclass
class StepInfo:
    dt: float
    picard_iterations: int
    div_max: float
    adv_energy_rate: float       # <div(u u), u>, zero for conservative transport
    adv_defect: float            # dt^2 |Adv(u)|^2, the explicit-step energy slack


def step(f: StaggeredField, forcing: Forcing, t: float, cfg: SolveConfig,
         g: Grid, p: FluidParams, r: RegIndex,
         dt: float | None = None) -> tuple[StaggeredField, StepInfo]:
    """One split step: advect, force, implicit diffuse, project, enforce BCs."""
    h = dt if dt is not None else _step_dt(f, g, cfg, 0.0)
    adv = advection_tendency(f, g)
    adv_rate = face_inner(adv, f, g)
    adv_defect = h * h * face_inner(adv, adv, g)
    f1 = advect(f, g, h)
    ff = forcing_field(forcing, g, f.bc, t)
    f1.u += h * ff.u
    f1.v += h * ff.v
    apply_bcs(f1, g)
    f2, picard = diffuse_implicit(f1, g, p, r, h, cfg, viscosity_seed=f)
    f3 = pressure_project(f2, g, h, cfg)
    div_max = float(np.max(np.abs(compute_divergence(f3, g))))
    return f3, StepInfo(dt=h, picard_iterations=picard, div_max=div_max,
                        adv_energy_rate=adv_rate, adv_defect=adv_defect)


def run_to_steady(init: StaggeredField, forcing: Forcing, cfg: SolveConfig,
                  g: Grid, p: FluidParams, r: RegIndex,
                  history: list | None = None):
    """Step until ||u_new - u_old||_H / dt < steady_tol or t_end is reached.

    Returns (final_field, RunReport).  The initial state is projected once so
    stepping starts from a discretely divergence-free field.  When `history`
    is supplied, (t, field_copy) snapshots are appended at the recording
    interval for the residual diagnostics.
    """
    from bingflow.report import RunReport  # container module; no cycle

    f = pressure_project(apply_bcs(init.copy(), g), g, cfg.dt or 1.0, cfg)
    report = RunReport(steady_tol=cfg.steady_tol, poisson_tol=cfg.poisson_tol)
    t = 0.0
    n = 0

    def powers():
        return (dissipation_power(f, g, p, r),
                face_inner(forcing_field(forcing, g, f.bc, t), f, g),
                2.0 * p.mu * strain_pairing(f, f, g))

    diss_prev, work_prev, floor_prev = powers()
    accum = {"dissipation": 0.0, "work": 0.0, "coercive_floor": 0.0}

    def record(picard: int, div_max: float, adv_rate: float, adv_defect_sum: float,
               delta_rate: float) -> None:
        report.record_state(f, g, p, r, t,
                            picard=picard, div_max=div_max,
                            adv_energy_rate=adv_rate, adv_defect=adv_defect_sum,
                            diss_integral=accum["dissipation"],
                            work_integral=accum["work"],
                            floor_integral=accum["coercive_floor"],
                            delta_rate=delta_rate,
                            dissipation_rate=diss_prev)
        if history is not None:
            history.append((t, f.copy()))

    record(0, float(np.max(np.abs(compute_divergence(f, g)))), 0.0, 0.0, 0.0)
    steady = False
    info = None
    delta_rate = 0.0
    defect_sum = 0.0
    while t < cfg.t_end * (1.0 - 1e-12):
        if cfg.cfl is not None:
            ff = forcing_field(forcing, g, f.bc, t)
            fscale = max(np.max(np.abs(ff.u)), np.max(np.abs(ff.v)))
        else:
            fscale = 0.0
        h = min(_step_dt(f, g, cfg, fscale), cfg.t_end - t)
        f_new, info = step(f, forcing, t, cfg, g, p, r, dt=h)
        delta_rate = norm_H(f_new - f, g) / info.dt
        f = f_new
        t += info.dt
        n += 1
        diss_new, work_new, floor_new = powers()
        accum["dissipation"] += 0.5 * info.dt * (diss_prev + diss_new)
        accum["work"] += 0.5 * info.dt * (work_prev + work_new)
        accum["coercive_floor"] += 0.5 * info.dt * (floor_prev + floor_new)
        diss_prev, work_prev, floor_prev = diss_new, work_new, floor_new
        defect_sum += info.adv_defect
        if n % cfg.record_every == 0:
            record(info.picard_iterations, info.div_max,
                   info.adv_energy_rate, defect_sum, delta_rate)
            defect_sum = 0.0
        if delta_rate < cfg.steady_tol:
            steady = True
            break
    if n == 0 or n % cfg.record_every != 0:
        record(info.picard_iterations if info else 0,
               float(np.max(np.abs(compute_divergence(f, g)))),
               info.adv_energy_rate if info else 0.0,
               defect_sum, delta_rate)
    report.finish(steady=steady, t=t, steps=n, final_delta=delta_rate)
    return f, report
