"""Run report containers: norm/energy time series, per-interval energy
ledgers, hard-assertion flags, and JSON serialization.

The solver fills these as it steps; the diagnostics module consumes them.
Every recorded quantity is a plain float so a report round-trips through
JSON without loss of structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from bingflow.constitutive import (
    FluidParams,
    RegIndex,
    biviscosity_components,
    gamma_m,
)
from bingflow.grid import Grid, StaggeredField, compute_strain, ladyzhenskaya_ratio, norm_H, norm_V

__all__ = ["EnergyLedger", "RunReport"]

SERIES_KEYS = (
    "t",
    "norm_H",
    "norm_V",
    "tau_l2",
    "ladyzhenskaya",
    "yielded_fraction",
    "picard_iterations",
    "div_max",
    "adv_energy_rate",
    "adv_defect",
    "dissipation_rate",
    "delta_rate",
)


@dataclass
class EnergyLedger:
    """Kinetic/dissipation/work balance over [s1, s2].

    residual = kinetic_end + dissipation - work - kinetic_start by
    definition; coercive_floor carries 2*mu * integral of |Du|^2 with the
    same quadrature, which dissipation must dominate exactly.
    """

    s1: float
    s2: float
    kinetic_start: float
    kinetic_end: float
    dissipation: float
    work: float
    coercive_floor: float = 0.0

    @property
    def residual(self) -> float:
        return self.kinetic_end + self.dissipation - self.work - self.kinetic_start

    def to_dict(self) -> dict:
        return {
            "s1": self.s1, "s2": self.s2,
            "kinetic_start": self.kinetic_start, "kinetic_end": self.kinetic_end,
            "dissipation": self.dissipation, "work": self.work,
            "residual": self.residual, "coercive_floor": self.coercive_floor,
        }


GROWTH_RTOL = 1e-12


@dataclass
class RunReport:
    """Scalar time series, interval ledgers, and pass/fail flags for one run."""

    steady_tol: float
    poisson_tol: float
    series: dict = field(default_factory=lambda: {k: [] for k in SERIES_KEYS})
    ledgers: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    steady: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    seed: int | None = None
    growth_violations: int = 0
    _integrals: dict = field(default_factory=lambda: {
        "dissipation": 0.0, "work": 0.0, "coercive_floor": 0.0})

    # ------------------------------------------------------------------ fill
    def record_state(self, f: StaggeredField, g: Grid, p: FluidParams, r: RegIndex,
                     t: float, picard: int, div_max: float,
                     adv_energy_rate: float, adv_defect: float,
                     diss_integral: float, work_integral: float,
                     floor_integral: float, delta_rate: float,
                     dissipation_rate: float) -> None:
        d = compute_strain(f, g)
        dn = d.norm()
        sxx, syy, sxy = biviscosity_components(d.xx, d.yy, d.xy, p, r)
        tau_norm = np.sqrt(sxx**2 + syy**2 + 2.0 * sxy**2)
        cap = p.tau_y + 2.0 * p.mu * dn
        self.growth_violations += int(np.sum(tau_norm > cap * (1.0 + GROWTH_RTOL) + 1e-300))
        gam = gamma_m(p, r)
        s = self.series
        s["t"].append(float(t))
        s["norm_H"].append(norm_H(f, g))
        s["norm_V"].append(norm_V(f, g))
        s["tau_l2"].append(float(np.sqrt(np.sum(tau_norm**2) * g.dx * g.dy)))
        s["ladyzhenskaya"].append(ladyzhenskaya_ratio(f, g))
        s["yielded_fraction"].append(float(np.mean(dn > gam)))
        s["picard_iterations"].append(int(picard))
        s["div_max"].append(float(div_max))
        s["adv_energy_rate"].append(float(adv_energy_rate))
        s["adv_defect"].append(float(adv_defect))
        s["dissipation_rate"].append(float(dissipation_rate))
        s["delta_rate"].append(float(delta_rate))
        if len(s["t"]) > 1:
            prev = self._integrals
            self.ledgers.append(EnergyLedger(
                s1=s["t"][-2], s2=s["t"][-1],
                kinetic_start=0.5 * s["norm_H"][-2] ** 2,
                kinetic_end=0.5 * s["norm_H"][-1] ** 2,
                dissipation=diss_integral - prev["dissipation"],
                work=work_integral - prev["work"],
                coercive_floor=floor_integral - prev["coercive_floor"],
            ))
        self._integrals = {"dissipation": diss_integral, "work": work_integral,
                           "coercive_floor": floor_integral}

    def finish(self, steady: bool, t: float, steps: int, final_delta: float) -> None:
        self.steady = {"reached": bool(steady), "t": float(t), "steps": int(steps),
                       "final_delta": float(final_delta)}
        self.evaluate_flags()

    # ----------------------------------------------------------------- flags
    def evaluate_flags(self) -> None:
        s = self.series
        self.flags["growth_bound"] = self.growth_violations == 0
        self.flags["divergence_bound"] = bool(
            max(s["div_max"], default=0.0) <= 10.0 * self.poisson_tol)
        self.flags["coercive_dissipation"] = all(
            led.dissipation >= led.coercive_floor * (1.0 - 1e-12) - 1e-300
            for led in self.ledgers)
        work_free = all(abs(led.work) == 0.0 for led in self.ledgers)
        if work_free and self.ledgers:
            ok = True
            for k in range(1, len(s["norm_H"])):
                kin_prev = 0.5 * s["norm_H"][k - 1] ** 2
                kin = 0.5 * s["norm_H"][k] ** 2
                slack = s["adv_defect"][k] + 1e-12 * max(kin_prev, 1.0)
                ok &= kin <= kin_prev + slack
            self.flags["energy_nonincreasing"] = bool(ok)
        else:
            self.flags["energy_nonincreasing"] = None

    def all_hard_flags_pass(self) -> bool:
        return all(v for v in self.flags.values() if v is not None)

    # ------------------------------------------------------------------- io
    def to_dict(self) -> dict:
        return {
            "steady_tol": self.steady_tol,
            "poisson_tol": self.poisson_tol,
            "series": self.series,
            "ledgers": [led.to_dict() for led in self.ledgers],
            "flags": self.flags,
            "steady": self.steady,
            "config": self.config,
            "seed": self.seed,
            "growth_violations": self.growth_violations,
        }

    def save(self, path, extra: dict | None = None) -> None:
        doc = self.to_dict()
        if extra:
            doc.update(extra)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)

    @staticmethod
    def load_dict(path) -> dict:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
