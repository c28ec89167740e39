"""Runtime verification of the computable flow identities.

Given a recorded trajectory (a list of (t, field) snapshots), these routines
assemble, with the solver's own stencils and quadratures:

  weak_residual        defect of the integrated momentum balance tested
                       against a divergence-free field
  energy_audit         kinetic/dissipation/work ledger over a time window
  vi_residual          defect of the yield-stress variational inequality
                       (assembled with the unregularized material constants)
  perturbation_decay   twin-trajectory contraction and its exponential
                       envelope fitted from the velocity-gradient history
  apriori_tracker      norm suprema, integrals, and the cellwise stress
                       growth bound

Time derivatives use the same backward difference as the stepping scheme,
advection is evaluated at the old time level and the stress at the new one,
so the residuals measure quadrature and splitting defect rather than a
scheme-versus-assembly mismatch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bingflow.constitutive import (
    FluidParams,
    RegIndex,
    biviscosity_components,
)
from bingflow.grid import (
    Grid,
    StaggeredField,
    compute_divergence,
    compute_strain,
    face_inner,
    norm_H,
    norm_V,
)
from bingflow.report import EnergyLedger, RunReport  # re-exported containers
from bingflow.solver import (
    Forcing,
    SolveConfig,
    advection_tendency,
    dissipation_power,
    forcing_field,
    step,
    strain_pairing,
    viscous_pairing,
)

__all__ = [
    "EnergyLedger",
    "RunReport",
    "History",
    "weak_residual",
    "energy_audit",
    "vi_residual",
    "PerturbationReport",
    "perturbation_decay",
    "apriori_tracker",
    "streamfunction_extrema",
]

History = list[tuple[float, StaggeredField]]


def _require_admissible(test: StaggeredField, g: Grid, tol: float) -> None:
    div = float(np.max(np.abs(compute_divergence(test, g))))
    if div > tol:
        raise ValueError(f"test field is not solenoidal: max |div| = {div:.3g} > {tol:.3g}")
    if test.bc.lid_speed != 0.0:
        raise ValueError("test field must be no-slip (zero lid)")


def weak_residual(history: History, test: StaggeredField, forcing: Forcing,
                  g: Grid, p: FluidParams, r: RegIndex,
                  div_tol: float = 1e-8) -> float:
    """Defect of the time-integrated momentum balance against `test`.

    Assembles sum over steps of
        <du, phi> + dt*tau_m(Du):Dphi + dt*<div(u u), phi> - dt*<f, phi>
    and returns the total.  Vanishing test fields or zero histories give 0.
    """
    _require_admissible(test, g, div_tol)
    total = 0.0
    for (t0, f0), (t1, f1) in zip(history, history[1:]):
        dtk = t1 - t0
        total += face_inner(f1 - f0, test, g)
        total += dtk * viscous_pairing(f1, test, g, p, r)
        total += dtk * face_inner(advection_tendency(f0, g), test, g)
        total -= dtk * face_inner(forcing_field(forcing, g, f0.bc, t0), test, g)
    return total


def _window(history: History, s1: float, s2: float) -> History:
    if not history:
        raise ValueError("empty history")
    t0, t1 = history[0][0], history[-1][0]
    span = max(t1 - t0, 1e-300)
    if s1 >= s2:
        raise ValueError("need s1 < s2")
    if s1 < t0 - 1e-9 * span or s2 > t1 + 1e-9 * span:
        raise ValueError(f"[{s1}, {s2}] outside recorded interval [{t0}, {t1}]")
    sub = [(t, f) for t, f in history if s1 - 1e-9 * span <= t <= s2 + 1e-9 * span]
    if len(sub) < 2:
        raise ValueError("window must contain at least two snapshots")
    return sub


def energy_audit(history: History, forcing: Forcing, g: Grid, p: FluidParams,
                 r: RegIndex, s1: float, s2: float) -> EnergyLedger:
    """Kinetic/dissipation/work balance over [s1, s2], trapezoidal in time.

    The dissipation integrand uses the operator-consistent quadrature, so it
    dominates the coercive floor 2*mu*|Du|^2 sample by sample.
    """
    sub = _window(history, s1, s2)
    diss = 0.0
    work = 0.0
    floor = 0.0
    prev = None
    for t, f in sub:
        d_now = dissipation_power(f, g, p, r)
        w_now = face_inner(forcing_field(forcing, g, f.bc, t), f, g)
        fl_now = 2.0 * p.mu * strain_pairing(f, f, g)
        if prev is not None:
            h = t - prev[0]
            diss += 0.5 * h * (prev[1] + d_now)
            work += 0.5 * h * (prev[2] + w_now)
            floor += 0.5 * h * (prev[3] + fl_now)
        prev = (t, d_now, w_now, fl_now)
    return EnergyLedger(
        s1=sub[0][0], s2=sub[-1][0],
        kinetic_start=0.5 * norm_H(sub[0][1], g) ** 2,
        kinetic_end=0.5 * norm_H(sub[-1][1], g) ** 2,
        dissipation=diss, work=work, coercive_floor=floor,
    )


def _strain_l1(f: StaggeredField, g: Grid) -> float:
    return float(np.sum(compute_strain(f, g).norm()) * g.dx * g.dy)


def vi_residual(history: History, test: StaggeredField, forcing: Forcing,
                g: Grid, p: FluidParams, div_tol: float = 1e-8) -> float:
    """LHS minus RHS of the yield-stress variational inequality over the
    recorded window, assembled with the unregularized constants:

        int <du/dt, phi-u> + int <div(u u), phi> + 2*mu int Du:D(phi-u)
        + tau_y int (|Dphi| - |Du|) - int <f, phi-u>

    Bilinear terms are expanded so that each field keeps its own wall
    closure.  Nonnegative for admissible test fields up to discretization
    defect (and, for a driven lid, up to the boundary work the inequality's
    homogeneous-wall derivation does not see).
    """
    _require_admissible(test, g, div_tol)
    j_phi = _strain_l1(test, g)
    total = 0.0
    for (t0, f0), (t1, f1) in zip(history, history[1:]):
        dtk = t1 - t0
        du = f1 - f0
        total += face_inner(du, test, g) - face_inner(du, f1, g)
        total += dtk * face_inner(advection_tendency(f0, g), test, g)
        total += dtk * 2.0 * p.mu * (strain_pairing(f1, test, g)
                                     - strain_pairing(f1, f1, g))
        total += dtk * p.tau_y * (j_phi - _strain_l1(f1, g))
        ff = forcing_field(forcing, g, f0.bc, t0)
        total -= dtk * (face_inner(ff, test, g) - face_inner(ff, f1, g))
    return total


@dataclass
class PerturbationReport:
    """Twin-run contraction record with the fitted exponential envelope."""

    times: list[float]
    diff_H: list[float]
    envelope: list[float]
    gronwall_rate: float         # fitted c in |d0| * exp(c * int |u1|_V^2)
    initial_diff: float
    final_diff: float
    both_steady: bool
    within_envelope: bool
    monotone: bool

    def decay_ratio(self) -> float:
        return self.final_diff / self.initial_diff if self.initial_diff > 0 else 0.0


def perturbation_decay(base_init: StaggeredField, delta: StaggeredField,
                       forcing: Forcing, cfg: SolveConfig, g: Grid,
                       p: FluidParams, r: RegIndex) -> PerturbationReport:
    """March two trajectories (base and base+delta) in lockstep and compare.

    The envelope is |d(0)|_H * exp(c * int_0^t |u1|_V^2 ds) with the smallest
    nonnegative c that dominates the whole difference history; the report
    states whether the difference stayed within it and decayed monotonically.
    """
    from bingflow.grid import apply_bcs
    from bingflow.solver import pressure_project

    if cfg.dt is None:
        raise ValueError("perturbation runs need a fixed dt for lockstep stepping")
    fa = pressure_project(apply_bcs(base_init.copy(), g), g, cfg.dt, cfg)
    fb = base_init.copy()
    fb.u += delta.u
    fb.v += delta.v
    fb = pressure_project(apply_bcs(fb, g), g, cfg.dt, cfg)

    t = 0.0
    times = [0.0]
    diffs = [norm_H(fa - fb, g)]
    v2_int = [0.0]
    v2_prev = norm_V(fa, g) ** 2
    steady_a = steady_b = False
    while t < cfg.t_end * (1.0 - 1e-12):
        h = min(cfg.dt, cfg.t_end - t)
        fa_new, _ = step(fa, forcing, t, cfg, g, p, r, dt=h)
        fb_new, _ = step(fb, forcing, t, cfg, g, p, r, dt=h)
        steady_a = norm_H(fa_new - fa, g) / h < cfg.steady_tol
        steady_b = norm_H(fb_new - fb, g) / h < cfg.steady_tol
        fa, fb = fa_new, fb_new
        t += h
        v2_now = norm_V(fa, g) ** 2
        v2_int.append(v2_int[-1] + 0.5 * h * (v2_prev + v2_now))
        v2_prev = v2_now
        times.append(t)
        diffs.append(norm_H(fa - fb, g))
        if steady_a and steady_b:
            break

    d0 = diffs[0]
    rate = 0.0
    if d0 > 0.0:
        for k in range(1, len(diffs)):
            if diffs[k] > 0.0 and v2_int[k] > 0.0:
                rate = max(rate, np.log(diffs[k] / d0) / v2_int[k])
    envelope = [d0 * np.exp(rate * s) * (1.0 + 1e-12) + 1e-300 for s in v2_int]
    within = all(dk <= ek for dk, ek in zip(diffs, envelope))
    monotone = all(b <= a * (1.0 + 1e-12) for a, b in zip(diffs, diffs[1:]))
    return PerturbationReport(
        times=times, diff_H=diffs, envelope=envelope, gronwall_rate=rate,
        initial_diff=d0, final_diff=diffs[-1],
        both_steady=bool(steady_a and steady_b),
        within_envelope=within, monotone=monotone,
    )


GROWTH_RTOL = 1e-12


def apriori_tracker(history: History, g: Grid, p: FluidParams, r: RegIndex) -> dict:
    """Norm boundedness witnesses over a trajectory.

    Returns sup_t |u|_H, the time integrals of |u|_V^2 and of the squared
    stress norm, and the cellwise growth-bound check |tau_m| <= tau_y +
    2*mu*|Du| (violations beyond 1e-12 relative rounding are counted; the
    count must be zero on every run).
    """
    sup_H = 0.0
    v2_int = 0.0
    tau2_int = 0.0
    violations = 0
    prev = None
    for t, f in history:
        sup_H = max(sup_H, norm_H(f, g))
        d = compute_strain(f, g)
        dn = d.norm()
        sxx, syy, sxy = biviscosity_components(d.xx, d.yy, d.xy, p, r)
        tn = np.sqrt(sxx**2 + syy**2 + 2.0 * sxy**2)
        violations += int(np.sum(tn > (p.tau_y + 2.0 * p.mu * dn) * (1.0 + GROWTH_RTOL)))
        v2_now = norm_V(f, g) ** 2
        tau2_now = float(np.sum(tn**2) * g.dx * g.dy)
        if prev is not None:
            h = t - prev[0]
            v2_int += 0.5 * h * (prev[1] + v2_now)
            tau2_int += 0.5 * h * (prev[2] + tau2_now)
        prev = (t, v2_now, tau2_now)
    return {
        "sup_norm_H": sup_H,
        "int_norm_V_sq": v2_int,
        "int_tau_sq": tau2_int,
        "growth_violations": violations,
        "growth_bound_holds": violations == 0,
        "snapshots": len(history),
    }


def streamfunction_extrema(f: StaggeredField, g: Grid,
                           rel_threshold: float = 1e-3) -> int:
    """Count interior extrema of the streamfunction (vortex cores).

    Integrates u along y to the corner lattice; significant strict local
    extrema (above rel_threshold of the global range) are counted.  A single
    primary vortex yields 1.
    """
    psi = np.zeros((g.nx + 1, g.ny + 1))
    psi[:, 1:] = np.cumsum(f.u * g.dy, axis=1)
    scale = np.max(np.abs(psi))
    if scale == 0.0:
        return 0
    c = psi[1:-1, 1:-1]
    n4 = [psi[2:, 1:-1], psi[:-2, 1:-1], psi[1:-1, 2:], psi[1:-1, :-2]]
    is_max = np.logical_and.reduce([c > nb for nb in n4])
    is_min = np.logical_and.reduce([c < nb for nb in n4])
    significant = np.abs(c) > rel_threshold * scale
    return int(np.sum((is_max | is_min) & significant))
