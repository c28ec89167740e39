"""Randomized verification suite for the constitutive kernels and the
channel oracle.

run_property_suite draws tensor pairs spanning both branches of the
regularized law under randomized material parameters and checks, without a
flow solve:

    coercivity          tau_m(A):A  >= 2*mu*|A|^2
    growth              |tau_m(A)|  <= tau_y + 2*mu*|A|
    core stress cap     |tau_m(A)|  <= (m/(m-1))*tau_y    on |A| <= gamma
    monotonicity        (tau_m(A)-tau_m(B)):(A-B) >= 2*mu*|A-B|^2
    core-branch gap     equality with 2*m*mu*|A-B|^2 when both below gamma
    branch continuity   both branch formulas agree at |A| = gamma
    plastic identity    tau_m == tau (bitwise) above gamma
    scaling             tau_m(c*A) follows the branch of |c*A|

Violations are counted beyond 1e-12 relative rounding.  The oracle
comparison integrates the channel profile with quadrature and checks the
closed form to 1e-10 relative at 1000 points per parameter set.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from bingflow.constitutive import (
    FluidParams,
    RegIndex,
    biviscosity_components,
    components_norm,
    effective_viscosity,
    gamma_m,
    newtonian_branch_stress_cap,
)
from bingflow.scenarios import channel_oracle, channel_oracle_quadrature

__all__ = ["PropertyResult", "run_property_suite", "run_oracle_check", "format_results"]

RT = 1e-12


@dataclass
class PropertyResult:
    name: str
    passed: bool
    samples: int
    violations: int
    worst: float          # most adverse margin observed (sign convention per check)
    detail: str = ""


def _branch_spanning_batch(rng, n, p, r):
    """Tensor components with |A| distributed across both branches, plus a
    slice pinned exactly on the threshold."""
    comps = rng.standard_normal((3, n))
    norms = components_norm(*comps)
    g = gamma_m(p, r)
    if g > 0.0:
        u = rng.random(n)
        target = np.where(u < 0.45, g * rng.random(n),
                          np.where(u < 0.9, g * (1.0 + 9.0 * rng.random(n)),
                                   g))
    else:
        target = 10.0 ** rng.uniform(-3, 3, n)
    scale = np.where(norms > 0, target / np.maximum(norms, 1e-300), 0.0)
    return comps[0] * scale, comps[1] * scale, comps[2] * scale


def _random_params(rng) -> tuple[FluidParams, RegIndex]:
    mu = 10.0 ** rng.uniform(-2, 2)
    tau_y = 0.0 if rng.random() < 0.1 else 10.0 ** rng.uniform(-2, 1)
    m = float(rng.uniform(2.0, 1000.0)) if rng.random() < 0.5 \
        else float(rng.choice([2.0, 4.0, 8.0, 16.0, 32.0, 64.0]))
    return FluidParams(mu, tau_y), RegIndex(m)


def run_property_suite(n_samples: int = 120_000, seed: int = 0,
                       n_param_sets: int = 24) -> list[PropertyResult]:
    rng = np.random.default_rng(seed)
    per = max(1, n_samples // n_param_sets)
    counters = {
        "coercivity": [0, 0, np.inf],
        "growth": [0, 0, np.inf],
        "core_stress_cap": [0, 0, np.inf],
        "monotonicity": [0, 0, np.inf],
        "core_gap_equality": [0, 0, 0.0],
        "branch_continuity": [0, 0, 0.0],
        "plastic_identity": [0, 0, 0.0],
        "scaling_consistency": [0, 0, 0.0],
    }

    def tally(name, count, bad, margin):
        c = counters[name]
        c[0] += count
        c[1] += int(bad)
        c[2] = min(c[2], margin) if name in ("coercivity", "growth",
                                             "core_stress_cap", "monotonicity") \
            else max(c[2], margin)

    for _ in range(n_param_sets):
        p, r = _random_params(rng)
        g = gamma_m(p, r)
        axx, ayy, axy = _branch_spanning_batch(rng, per, p, r)
        bxx, byy, bxy = _branch_spanning_batch(rng, per, p, r)
        an = components_norm(axx, ayy, axy)
        bn = components_norm(bxx, byy, bxy)
        sxx, syy, sxy = biviscosity_components(axx, ayy, axy, p, r)
        txx, tyy, txy = biviscosity_components(bxx, byy, bxy, p, r)
        tn = components_norm(sxx, syy, sxy)

        # coercivity: tau:A - 2 mu |A|^2 >= -rounding
        lhs = sxx * axx + syy * ayy + 2.0 * sxy * axy
        floor = 2.0 * p.mu * an**2
        margin = lhs - floor
        tally("coercivity", per, np.sum(margin < -RT * np.maximum(floor, 1e-300)),
              float(np.min(margin / np.maximum(floor, 1e-300))))

        # growth
        cap = p.tau_y + 2.0 * p.mu * an
        tally("growth", per, np.sum(tn > cap * (1.0 + RT)),
              float(np.min((cap - tn) / np.maximum(cap, 1e-300))))

        # core-branch stress cap
        core = an <= g
        if np.any(core):
            ccap = newtonian_branch_stress_cap(p, r)
            bad = np.sum(tn[core] > ccap * (1.0 + RT))
            worst = float(np.min((ccap - tn[core]) / max(ccap, 1e-300)))
            tally("core_stress_cap", int(np.sum(core)), bad, worst)

        # monotonicity gap
        gap = (sxx - txx) * (axx - bxx) + (syy - tyy) * (ayy - byy) \
            + 2.0 * (sxy - txy) * (axy - bxy)
        dn2 = components_norm(axx - bxx, ayy - byy, axy - bxy) ** 2
        bound = 2.0 * p.mu * dn2
        tally("monotonicity", per, np.sum(gap < bound * (1.0 - RT) - 1e-300),
              float(np.min((gap - bound) / np.maximum(bound, 1e-300))))

        # core-branch gap equality: 2 m mu |A-B|^2 when both below threshold
        both = (an <= g) & (bn <= g)
        if np.any(both):
            expect = 2.0 * r.m * p.mu * dn2[both]
            err = np.abs(gap[both] - expect) / np.maximum(expect, 1e-300)
            tally("core_gap_equality", int(np.sum(both)),
                  np.sum(err > 64.0 * RT), float(np.max(err, initial=0.0)))

        # branch continuity at the threshold
        if p.tau_y > 0.0:
            dxx, dyy, dxy = _branch_spanning_batch(rng, 256, p, r)
            nd = components_norm(dxx, dyy, dxy)
            s = np.where(nd > 0, g / np.maximum(nd, 1e-300), 0.0)
            dxx, dyy, dxy = dxx * s, dyy * s, dxy * s
            nd = components_norm(dxx, dyy, dxy)
            newtonian = 2.0 * r.m * p.mu
            plastic = 2.0 * p.mu + p.tau_y / np.maximum(nd, 1e-300)
            err = np.abs(newtonian - plastic) / newtonian
            ok = nd > 0
            tally("branch_continuity", int(np.sum(ok)),
                  np.sum(err[ok] > 1e3 * RT), float(np.max(err[ok], initial=0.0)))

        # plastic identity, bitwise
        plastic_mask = an > g
        if np.any(plastic_mask):
            nd = an[plastic_mask]
            factor = 2.0 * p.mu + p.tau_y / nd
            exact = (np.array_equal(sxx[plastic_mask], factor * axx[plastic_mask])
                     and np.array_equal(syy[plastic_mask], factor * ayy[plastic_mask])
                     and np.array_equal(sxy[plastic_mask], factor * axy[plastic_mask]))
            tally("plastic_identity", int(np.sum(plastic_mask)),
                  0 if exact else 1, 0.0)

        # scaling consistency: stress of c*A equals the branch rule at |c*A|
        c = 10.0 ** rng.uniform(-2, 2, per)
        qxx, qyy, qxy = biviscosity_components(c * axx, c * ayy, c * axy, p, r)
        eta = effective_viscosity(c * an, p, r)
        exx = 2.0 * eta * c * axx
        err = np.max(np.abs(qxx - exx) / np.maximum(np.abs(exx), 1e-300), initial=0.0)
        tally("scaling_consistency", per, np.sum(
            np.abs(qxx - exx) > RT * np.maximum(np.abs(exx), 1e-300)), float(err))

    results = []
    for name, (count, bad, worst) in counters.items():
        results.append(PropertyResult(
            name=name, passed=bad == 0, samples=count, violations=int(bad),
            worst=float(worst) if np.isfinite(worst) else 0.0))
    return results


def run_oracle_check(seed: int = 0, n_param_sets: int = 20,
                     n_points: int = 1000, rel_tol: float = 1e-10) -> PropertyResult:
    """Closed-form channel profile against the quadrature route."""
    rng = np.random.default_rng(seed + 77)
    worst = 0.0
    total = 0
    bad = 0
    for _ in range(n_param_sets):
        mu = 10.0 ** rng.uniform(-1, 1)
        tau_y = 10.0 ** rng.uniform(-2, 1)
        m = float(rng.uniform(2.0, 128.0))
        G = 10.0 ** rng.uniform(-1, 1)
        H = 10.0 ** rng.uniform(-0.3, 0.5)
        p, r = FluidParams(mu, tau_y), RegIndex(m)
        y = rng.uniform(-H, H, n_points)
        a = channel_oracle(y, G, H, p, r)
        b = channel_oracle_quadrature(y, G, H, p, r)
        scale = max(float(np.max(np.abs(b))), 1e-300)
        rel = np.abs(a - b) / scale
        worst = max(worst, float(np.max(rel)))
        bad += int(np.sum(rel > rel_tol))
        total += n_points
    return PropertyResult(name="channel_oracle_consistency", passed=bad == 0,
                          samples=total, violations=bad, worst=worst,
                          detail=f"max rel dev {worst:.2e} (tol {rel_tol:g})")


def format_results(results: list[PropertyResult], elapsed: float | None = None) -> str:
    lines = []
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        lines.append(f"[{status}] {res.name}: {res.samples} samples, "
                     f"{res.violations} violations, worst margin {res.worst:.3e}"
                     + (f" ({res.detail})" if res.detail else ""))
    if elapsed is not None:
        lines.append(f"suite time: {elapsed:.2f} s")
    return "\n".join(lines)


def run_full_verification(seed: int = 0, n_samples: int = 120_000) -> tuple[list[PropertyResult], float]:
    t0 = time.time()
    results = run_property_suite(n_samples=n_samples, seed=seed)
    results.append(run_oracle_check(seed=seed))
    return results, time.time() - t0
