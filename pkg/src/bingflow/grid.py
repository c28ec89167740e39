"""Staggered (MAC) grid storage, discrete operators, and discrete norms.

Grid layout on the rectangle [0, lx] x [0, ly] with nx x ny cells:

    p[i, j]   cell centers      x = (i+0.5)*dx, y = (j+0.5)*dy   shape (nx,   ny)
    u[i, j]   vertical faces    x = i*dx,       y = (j+0.5)*dy   shape (nx+1, ny)
    v[i, j]   horizontal faces  x = (i+0.5)*dx, y = j*dy         shape (nx,   ny+1)

First index runs along x, second along y.  Corner (node) quantities live on
the (nx+1) x (ny+1) lattice x = i*dx, y = j*dy.

Boundary closure: velocity components normal to a wall live on the wall and
are set directly; tangential components use linear-reflection ghost values
(ghost = 2*wall_value - interior), which keeps one-sided wall derivatives
second order for wall-compatible fields.  With periodic_x the i=0 and i=nx
vertical faces are the same physical face; both columns are stored and kept
identical so that every stencil below can use plain slicing.

All norms use midpoint quadrature on the native control volumes: faces own a
full cell volume except wall-adjacent ones, which own half; corners own a
quarter to a full volume depending on how many cells touch them.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from bingflow.constitutive import components_norm

__all__ = [
    "Grid",
    "BoundarySpec",
    "StaggeredField",
    "TensorField",
    "apply_bcs",
    "compute_strain",
    "strain_parts",
    "compute_divergence",
    "norm_H",
    "norm_V",
    "norm_L4",
    "face_inner",
    "cell_inner",
    "ladyzhenskaya_ratio",
    "stream_to_field",
    "random_solenoidal",
    "field_to_rows",
    "write_field_csv",
    "write_checkpoint",
    "read_checkpoint",
]


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular cell layout; nx, ny >= 4."""

    nx: int
    ny: int
    lx: float
    ly: float

    def __post_init__(self) -> None:
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"need at least 4 cells per direction, got {self.nx}x{self.ny}")
        if not (self.lx > 0.0 and self.ly > 0.0):
            raise ValueError("domain lengths must be positive")

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        x = (np.arange(self.nx) + 0.5) * self.dx
        y = (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y, indexing="ij")


@dataclass(frozen=True)
class BoundarySpec:
    """Wall conditions: no-slip everywhere, except an optional moving top lid
    and optionally periodic side walls (the standard body-force-driven
    channel treatment, where the two side faces are identified)."""

    lid_speed: float = 0.0
    periodic_x: bool = False

    @staticmethod
    def no_slip() -> "BoundarySpec":
        return BoundarySpec()

    @staticmethod
    def moving_lid(speed: float) -> "BoundarySpec":
        return BoundarySpec(lid_speed=float(speed))

    @staticmethod
    def channel() -> "BoundarySpec":
        return BoundarySpec(periodic_x=True)


@dataclass
class TensorField:
    """Cell-centered symmetric tensor field (strain rate or stress)."""

    xx: np.ndarray
    yy: np.ndarray
    xy: np.ndarray

    def norm(self) -> np.ndarray:
        return components_norm(self.xx, self.yy, self.xy)


@dataclass
class StaggeredField:
    """MAC velocity/pressure state.  Mutable value container, single writer."""

    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    bc: BoundarySpec = field(default_factory=BoundarySpec)

    @staticmethod
    def zeros(g: Grid, bc: BoundarySpec | None = None) -> "StaggeredField":
        return StaggeredField(
            u=np.zeros((g.nx + 1, g.ny)),
            v=np.zeros((g.nx, g.ny + 1)),
            p=np.zeros((g.nx, g.ny)),
            bc=bc if bc is not None else BoundarySpec(),
        )

    def copy(self) -> "StaggeredField":
        return StaggeredField(self.u.copy(), self.v.copy(), self.p.copy(), self.bc)

    def check_sizes(self, g: Grid) -> None:
        if self.u.shape != (g.nx + 1, g.ny) or self.v.shape != (g.nx, g.ny + 1) \
                or self.p.shape != (g.nx, g.ny):
            raise ValueError(
                f"field shapes {self.u.shape}/{self.v.shape}/{self.p.shape} "
                f"do not match grid {g.nx}x{g.ny}"
            )

    def __sub__(self, other: "StaggeredField") -> "StaggeredField":
        return StaggeredField(self.u - other.u, self.v - other.v, self.p - other.p, self.bc)

    def __add__(self, other: "StaggeredField") -> "StaggeredField":
        return StaggeredField(self.u + other.u, self.v + other.v, self.p + other.p, self.bc)


def apply_bcs(f: StaggeredField, g: Grid) -> StaggeredField:
    """Enforce wall-normal conditions in place (tangential walls act through
    ghost values inside the stencils, not through stored entries)."""
    f.check_sizes(g)
    if f.bc.periodic_x:
        f.u[g.nx, :] = f.u[0, :]
    else:
        f.u[0, :] = 0.0
        f.u[g.nx, :] = 0.0
    f.v[:, 0] = 0.0
    f.v[:, g.ny] = 0.0
    return f


# ---------------------------------------------------------------------------
# wall values and corner stencils
# ---------------------------------------------------------------------------

def wall_tangential(bc: BoundarySpec) -> tuple[float, float, float, float]:
    """(u_bottom, u_top, v_left, v_right) tangential wall velocities."""
    return 0.0, bc.lid_speed, 0.0, 0.0


def corner_dudy(u: np.ndarray, g: Grid, u_bottom, u_top) -> np.ndarray:
    """du/dy on the corner lattice, linear-reflection closure at y walls."""
    out = np.empty((g.nx + 1, g.ny + 1))
    out[:, 1:-1] = (u[:, 1:] - u[:, :-1]) / g.dy
    out[:, 0] = 2.0 * (u[:, 0] - u_bottom) / g.dy
    out[:, -1] = 2.0 * (u_top - u[:, -1]) / g.dy
    return out


def corner_dvdx(v: np.ndarray, g: Grid, v_left, v_right, periodic_x: bool) -> np.ndarray:
    """dv/dx on the corner lattice; reflection at side walls or wraparound."""
    out = np.empty((g.nx + 1, g.ny + 1))
    out[1:-1, :] = (v[1:, :] - v[:-1, :]) / g.dx
    if periodic_x:
        wrap = (v[0, :] - v[-1, :]) / g.dx
        out[0, :] = wrap
        out[-1, :] = wrap
    else:
        out[0, :] = 2.0 * (v[0, :] - v_left) / g.dx
        out[-1, :] = 2.0 * (v_right - v[-1, :]) / g.dx
    return out


def corner_weights(g: Grid, bc: BoundarySpec) -> np.ndarray:
    """Control volumes of corner nodes (shared nodes get fractional cells).

    Under periodic_x the i=nx column duplicates i=0 and carries zero weight.
    """
    w = np.full((g.nx + 1, g.ny + 1), g.dx * g.dy)
    w[:, 0] *= 0.5
    w[:, -1] *= 0.5
    if bc.periodic_x:
        w[-1, :] = 0.0
    else:
        w[0, :] *= 0.5
        w[-1, :] *= 0.5
    return w


def face_weights(g: Grid, bc: BoundarySpec) -> tuple[np.ndarray, np.ndarray]:
    """Control volumes of u and v faces for the discrete L2 pairing."""
    wu = np.full((g.nx + 1, g.ny), g.dx * g.dy)
    if bc.periodic_x:
        wu[-1, :] = 0.0
    else:
        wu[0, :] *= 0.5
        wu[-1, :] *= 0.5
    wv = np.full((g.nx, g.ny + 1), g.dx * g.dy)
    wv[:, 0] *= 0.5
    wv[:, -1] *= 0.5
    return wu, wv


def gradient_parts(f: StaggeredField, g: Grid):
    """(du/dx, dv/dy) at centers and (du/dy, dv/dx) at corners, using the
    field's boundary closure.  Shared by strain, norms, and the viscous
    operator so that all of them see identical stencils."""
    u_bottom, u_top, v_left, v_right = wall_tangential(f.bc)
    dudx = (f.u[1:, :] - f.u[:-1, :]) / g.dx
    dvdy = (f.v[:, 1:] - f.v[:, :-1]) / g.dy
    dudy = corner_dudy(f.u, g, u_bottom, u_top)
    dvdx = corner_dvdx(f.v, g, v_left, v_right, f.bc.periodic_x)
    return dudx, dvdy, dudy, dvdx


def strain_parts(f: StaggeredField, g: Grid, u_bottom, u_top, v_left, v_right,
                 periodic_x: bool = False):
    """Strain entries with explicit wall tangential values: (xx, yy at
    centers, xy at corners).  The low-level seam for fields whose wall data
    falls outside what BoundarySpec can express."""
    f.check_sizes(g)
    xx = (f.u[1:, :] - f.u[:-1, :]) / g.dx
    yy = (f.v[:, 1:] - f.v[:, :-1]) / g.dy
    dudy = corner_dudy(f.u, g, u_bottom, u_top)
    dvdx = corner_dvdx(f.v, g, v_left, v_right, periodic_x)
    xy_n = 0.5 * (dudy + dvdx)
    return xx, yy, xy_n


def corners_to_centers(q: np.ndarray) -> np.ndarray:
    return 0.25 * (q[:-1, :-1] + q[1:, :-1] + q[:-1, 1:] + q[1:, 1:])


def compute_strain(f: StaggeredField, g: Grid) -> TensorField:
    """Cell-centered symmetric strain rate 0.5*(grad u + grad u^T).

    Diagonal entries come straight from adjacent faces; the off-diagonal is
    computed at corners and averaged to centers (second order).
    """
    ub, ut, vl, vr = wall_tangential(f.bc)
    xx, yy, xy_n = strain_parts(f, g, ub, ut, vl, vr, f.bc.periodic_x)
    return TensorField(xx=xx, yy=yy, xy=corners_to_centers(xy_n))


def compute_divergence(f: StaggeredField, g: Grid) -> np.ndarray:
    """MAC face-difference divergence per cell."""
    f.check_sizes(g)
    return (f.u[1:, :] - f.u[:-1, :]) / g.dx + (f.v[:, 1:] - f.v[:, :-1]) / g.dy


# ---------------------------------------------------------------------------
# discrete norms and pairings
# ---------------------------------------------------------------------------

def face_inner(a: StaggeredField, b: StaggeredField, g: Grid) -> float:
    """Discrete L2 pairing of two velocity fields over the face control
    volumes (the realization of the forcing/test-function duality)."""
    wu, wv = face_weights(g, a.bc)
    return float(np.sum(a.u * b.u * wu) + np.sum(a.v * b.v * wv))


def cell_inner(a: np.ndarray, b: np.ndarray, g: Grid) -> float:
    """Midpoint-rule pairing of two cell-centered scalar fields."""
    return float(np.sum(a * b) * g.dx * g.dy)


def norm_H(f: StaggeredField, g: Grid) -> float:
    """Discrete L2 norm of the velocity."""
    return float(np.sqrt(max(face_inner(f, f, g), 0.0)))


def norm_V(f: StaggeredField, g: Grid) -> float:
    """Discrete L2 norm of the full velocity gradient."""
    dudx, dvdy, dudy, dvdx = gradient_parts(f, g)
    wc = g.dx * g.dy
    wn = corner_weights(g, f.bc)
    s = wc * (np.sum(dudx**2) + np.sum(dvdy**2))
    s += np.sum((dudy**2 + dvdx**2) * wn)
    return float(np.sqrt(s))


def center_velocities(f: StaggeredField) -> tuple[np.ndarray, np.ndarray]:
    u_c = 0.5 * (f.u[:-1, :] + f.u[1:, :])
    v_c = 0.5 * (f.v[:, :-1] + f.v[:, 1:])
    return u_c, v_c


def norm_L4(f: StaggeredField, g: Grid) -> float:
    """Discrete L4 norm of the velocity magnitude (cell-center samples)."""
    u_c, v_c = center_velocities(f)
    mag2 = u_c**2 + v_c**2
    return float(np.sum(mag2**2) * g.dx * g.dy) ** 0.25


def ladyzhenskaya_ratio(f: StaggeredField, g: Grid) -> float:
    """||v||_{L4}^2 / (||v||_V * ||v||_H), the empirical constant of the
    L2-H1 interpolation bound.  Zero for the zero field."""
    h = norm_H(f, g)
    v = norm_V(f, g)
    if h == 0.0 or v == 0.0:
        return 0.0
    return norm_L4(f, g) ** 2 / (v * h)


# ---------------------------------------------------------------------------
# solenoidal field construction
# ---------------------------------------------------------------------------

def stream_to_field(psi: np.ndarray, g: Grid, bc: BoundarySpec) -> StaggeredField:
    """Velocity from a corner streamfunction: u = dpsi/dy, v = -dpsi/dx.

    The MAC divergence of the result is identically zero.  psi must vanish on
    (or be constant along) walls for the normal velocity to vanish there.
    """
    if psi.shape != (g.nx + 1, g.ny + 1):
        raise ValueError(f"streamfunction shape {psi.shape} does not match corners")
    u = (psi[:, 1:] - psi[:, :-1]) / g.dy
    v = -(psi[1:, :] - psi[:-1, :]) / g.dx
    f = StaggeredField(u=u, v=v, p=np.zeros((g.nx, g.ny)), bc=bc)
    return apply_bcs(f, g)


def random_solenoidal(g: Grid, bc: BoundarySpec, rng: np.random.Generator,
                      amplitude: float = 0.1, modes: int = 3) -> StaggeredField:
    """Random smooth divergence-free field with zero normal wall velocity.

    Built from a streamfunction that vanishes together with its normal
    derivative on solid walls, so the tangential velocity is also smooth and
    wall-compatible.
    """
    i = np.arange(g.nx + 1)
    j = np.arange(g.ny + 1)
    y = j * g.dy
    sy = np.sin(np.pi * y / g.ly) ** 2
    psi = np.zeros((g.nx + 1, g.ny + 1))
    if bc.periodic_x:
        # evaluate x phases on i mod nx so the wrap column matches exactly
        ph = 2.0 * np.pi * (i % g.nx) / g.nx
        for k in range(1, modes + 1):
            ak, bk = rng.standard_normal(2) / k
            for l in range(1, modes + 1):
                cl = rng.standard_normal() / l
                psi += (ak * np.cos(k * ph) + bk * np.sin(k * ph))[:, None] \
                    * (cl * np.sin(l * np.pi * y / g.ly) ** 2)[None, :]
    else:
        x = i * g.dx
        sx = np.sin(np.pi * x / g.lx) ** 2
        base = sx[:, None] * sy[None, :]
        for k in range(1, modes + 1):
            for l in range(1, modes + 1):
                akl = rng.standard_normal() / (k * l)
                psi += akl * base * np.cos((k - 1) * np.pi * x / g.lx)[:, None] \
                    * np.cos((l - 1) * np.pi * y / g.ly)[None, :]
    f = stream_to_field(psi, g, bc)
    scale = max(np.max(np.abs(f.u)), np.max(np.abs(f.v)), 1e-300)
    f.u *= amplitude / scale
    f.v *= amplitude / scale
    return apply_bcs(f, g)


# ---------------------------------------------------------------------------
# CSV serialization and checkpoints
# ---------------------------------------------------------------------------

FIELD_COLUMNS = "x,y,u,v,p"


def field_to_rows(f: StaggeredField, g: Grid) -> np.ndarray:
    """One row per cell center: x, y, u, v, p (velocities interpolated)."""
    f.check_sizes(g)
    xc, yc = g.cell_centers()
    u_c, v_c = center_velocities(f)
    return np.column_stack([
        xc.ravel(), yc.ravel(), u_c.ravel(), v_c.ravel(), f.p.ravel()
    ])


def write_field_csv(path, f: StaggeredField, g: Grid, extra: dict | None = None) -> None:
    """Write the cell-center schema, optionally with extra named columns."""
    rows = field_to_rows(f, g)
    header = FIELD_COLUMNS
    if extra:
        for name, col in extra.items():
            rows = np.column_stack([rows, np.asarray(col).ravel()])
            header += f",{name}"
    np.savetxt(path, rows, delimiter=",", header=header, comments="")


def write_checkpoint(path, f: StaggeredField, g: Grid, t: float, m: float,
                     config_hash: str = "") -> None:
    """Cell-center CSV prefixed with a state header line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# t={t!r} m={m!r} nx={g.nx} ny={g.ny} lx={g.lx!r} ly={g.ly!r} "
                 f"lid={f.bc.lid_speed!r} periodic_x={int(f.bc.periodic_x)} "
                 f"config={config_hash}\n")
        buf = io.StringIO()
        np.savetxt(buf, field_to_rows(f, g), delimiter=",",
                   header=FIELD_COLUMNS, comments="")
        fh.write(buf.getvalue())


def _faces_from_centers(c: np.ndarray, periodic: bool) -> np.ndarray:
    """Invert two-point center averaging along axis 0, anchored at the wall.

    With walls the recursion from the zero wall face is exact.  Periodic
    identification leaves (for an even face count) one alternating mode
    unobservable; the minimum-norm representative is returned.
    """
    n = c.shape[0]
    faces = np.zeros((n + 1,) + c.shape[1:])
    # recursion with a zero anchor; corrected below for periodic wrap
    for i in range(n):
        faces[i + 1] = 2.0 * c[i] - faces[i]
    if periodic:
        signs = (-1.0) ** np.arange(n)
        if n % 2 == 0:
            u0 = -np.mean(signs[:, None] * faces[:-1], axis=0)
        else:
            u0 = 0.5 * faces[-1]
        faces[:-1] += signs[:, None] * u0[None, :]
        faces[-1] = faces[0]
    return faces


def read_checkpoint(path) -> tuple[StaggeredField, Grid, float, float, str]:
    """Rebuild (field, grid, t, m, config_hash) from a checkpoint file."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("# "):
            raise ValueError("checkpoint missing state header line")
        meta = dict(item.split("=", 1) for item in header[2:].split())
        body = fh.read()
    g = Grid(nx=int(meta["nx"]), ny=int(meta["ny"]),
             lx=float(meta["lx"]), ly=float(meta["ly"]))
    bc = BoundarySpec(lid_speed=float(meta["lid"]),
                      periodic_x=bool(int(meta["periodic_x"])))
    data = np.loadtxt(io.StringIO(body), delimiter=",", skiprows=1)
    u_c = data[:, 2].reshape(g.nx, g.ny)
    v_c = data[:, 3].reshape(g.nx, g.ny)
    p = data[:, 4].reshape(g.nx, g.ny)
    u = _faces_from_centers(u_c, periodic=bc.periodic_x)
    v = _faces_from_centers(v_c.T, periodic=False).T
    f = apply_bcs(StaggeredField(u=u, v=v, p=p, bc=bc), g)
    return f, g, float(meta["t"]), float(meta["m"]), meta.get("config", "")


def config_text_hash(text: str) -> str:
    return hashlib.sha1(text.encode("utf-8")).hexdigest()[:12]
