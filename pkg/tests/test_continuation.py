"""Continuation tests: yield classification, plug geometry, and the
small-grid m-sweep contracts."""

import numpy as np
import pytest

from bingflow.constitutive import FluidParams, RegIndex
from bingflow.continuation import (
    MSchedule,
    classify_yield,
    classify_yield_fixed,
    measure_plug_half_width,
    run_m_sweep,
)
from bingflow.grid import Grid, TensorField, compute_strain, norm_H
from bingflow.scenarios import (
    channel_core_half_width,
    make_channel,
)
from bingflow.solver import SolveConfig


class TestSchedule:
    def test_default_is_doubling(self):
        assert MSchedule().values == (2.0, 4.0, 8.0, 16.0, 32.0, 64.0)

    def test_rejects_decreasing(self):
        with pytest.raises(ValueError):
            MSchedule(values=(2.0, 2.0))

    def test_rejects_small_members(self):
        with pytest.raises(ValueError, match="m >= 2"):
            MSchedule(values=(1.5, 4.0))


class TestClassify:
    def test_zero_strain_all_unyielded(self):
        d = TensorField(np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 4)))
        flags = classify_yield(d, FluidParams(1.0, 1.0), RegIndex(2.0))
        assert not flags.any()

    def test_newtonian_everything_nonzero_yields(self):
        rng = np.random.default_rng(0)
        d = TensorField(*rng.standard_normal((3, 5, 5)))
        flags = classify_yield(d, FluidParams(1.0, 0.0), RegIndex(8.0))
        np.testing.assert_array_equal(flags, d.norm() > 0.0)

    def test_fixed_threshold_variant(self):
        d = TensorField(np.array([[0.1, 1e-9]]), np.zeros((1, 2)), np.zeros((1, 2)))
        np.testing.assert_array_equal(
            classify_yield_fixed(d, 1e-6), np.array([[True, False]]))

    def test_band_measurement(self):
        g = Grid(4, 8, 1.0, 2.0)
        yielded = np.ones((4, 8), dtype=bool)
        yielded[:, 3:5] = False          # two-row core around the centerline
        assert measure_plug_half_width(yielded, g) == pytest.approx(0.25)
        assert measure_plug_half_width(np.ones((4, 8), bool), g) == 0.0


@pytest.fixture(scope="module")
def small_sweep():
    sc = make_channel(8, 48, 2.0, 2.0, 1.0)
    p = FluidParams(1.0, 0.5)
    cfg = SolveConfig(t_end=30.0, dt=0.1, m=RegIndex(2.0), picard_tol=1e-9,
                      poisson_tol=1e-11, steady_tol=1e-8, record_every=25)
    rep = run_m_sweep(sc, MSchedule(), cfg, p)
    return sc, p, cfg, rep


class TestSweep:
    def test_contracts_hold(self, small_sweep):
        _, _, _, rep = small_sweep
        assert rep.contracts["deltas_nonincreasing"]
        assert rep.contracts["unyielded_bound"]
        assert rep.contracts["plastic_identity"]
        assert rep.contracts["plug_monotone"]
        assert rep.contracts["plug_within_cell"]

    def test_deltas_decrease(self, small_sweep):
        _, _, _, rep = small_sweep
        d = rep.delta_H
        assert d[0] == 0.0
        assert all(d[k] < d[k - 1] for k in range(2, len(d)))

    def test_stress_cap_values(self, small_sweep):
        _, p, _, rep = small_sweep
        for m, cap, mx, nviol in zip(rep.m_values, rep.stress_cap,
                                     rep.max_unyielded_stress, rep.cap_violations):
            assert cap == pytest.approx(m / (m - 1) * p.tau_y, rel=1e-14)
            assert mx <= cap * (1 + 1e-12)
            assert nviol == 0

    def test_plug_approaches_limit(self, small_sweep):
        sc, p, _, rep = small_sweep
        analytic = [channel_core_half_width(1.0, p, RegIndex(m))
                    for m in rep.m_values]
        for w, a in zip(rep.plug_half_width, analytic):
            assert abs(w - a) <= sc.grid.dy + 1e-12

    def test_channel_band_contiguous(self, small_sweep):
        sc, p, _, rep = small_sweep
        f = rep.fields[-1]
        d = compute_strain(f, sc.grid)
        flags = classify_yield(d, p, RegIndex(rep.m_values[-1]))
        core_rows = np.where(np.mean(~flags, axis=0) >= 0.5)[0]
        assert core_rows.size > 0
        assert np.all(np.diff(core_rows) == 1)      # one contiguous band
        mid = sc.grid.ny // 2
        assert core_rows[0] <= mid <= core_rows[-1] + 1

    def test_m_uniform_stability_band(self, small_sweep):
        # band pinned from measurement on this scenario; the m = 2 member
        # dominates the spread (its wide high-viscosity core moves fastest)
        _, _, _, rep = small_sweep
        sup = rep.sup_norm_H
        assert max(sup) / min(sup) - 1.0 < 0.20

    def test_newtonian_sweep_members_identical(self):
        sc = make_channel(8, 24, 2.0, 2.0, 1.0)
        p = FluidParams(1.0, 0.0)
        cfg = SolveConfig(t_end=20.0, dt=0.1, m=RegIndex(2.0), picard_tol=1e-10,
                          poisson_tol=1e-12, steady_tol=1e-8, record_every=50)
        rep = run_m_sweep(sc, MSchedule(values=(2.0, 8.0, 64.0), warm_start=False),
                          cfg, p)
        # the law is m-independent: identical trajectories, zero deltas
        assert all(d == 0.0 for d in rep.delta_H[1:])
        for f in rep.fields[1:]:
            assert norm_H(f - rep.fields[0], sc.grid) <= 1e-12

    def test_failure_reports_member(self):
        sc = make_channel(8, 24, 2.0, 2.0, 1.0)
        p = FluidParams(1.0, 0.5)
        # picard_max 1 cannot converge the viscoplastic solve
        cfg = SolveConfig(t_end=5.0, dt=0.1, m=RegIndex(2.0), picard_tol=1e-12,
                          picard_max=1, poisson_tol=1e-11, steady_tol=1e-8)
        with pytest.raises(RuntimeError, match="m=2"):
            run_m_sweep(sc, MSchedule(values=(2.0, 4.0)), cfg, p)


class TestWarmStart:
    def test_same_steady_with_and_without(self):
        sc = make_channel(8, 24, 2.0, 2.0, 1.0)
        p = FluidParams(1.0, 0.3)
        cfg = SolveConfig(t_end=25.0, dt=0.1, m=RegIndex(2.0), picard_tol=1e-10,
                          poisson_tol=1e-12, steady_tol=1e-9, record_every=50)
        sched = MSchedule(values=(2.0, 8.0))
        warm = run_m_sweep(sc, sched, cfg, p)
        cold = run_m_sweep(sc, MSchedule(values=(2.0, 8.0), warm_start=False),
                           cfg, p)
        diff = norm_H(warm.fields[-1] - cold.fields[-1], sc.grid)
        assert diff < 50 * cfg.steady_tol
