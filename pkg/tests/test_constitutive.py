"""Tensor-law unit tests: pinned substitution values plus randomized
inequality sweeps over all branch combinations."""

import numpy as np
import pytest

from bingflow.constitutive import (
    FluidParams,
    RegIndex,
    SymTensor2,
    bingham_limit_stress,
    bingham_monotonicity_gap,
    bingham_stress,
    biviscosity_stress,
    effective_viscosity,
    gamma_m,
    monotonicity_gap,
    newtonian_branch_stress_cap,
    tensor_norm,
)

RT = 1e-12


def assert_tensor_close(a: SymTensor2, b: SymTensor2, rtol=RT, atol=1e-300):
    for x, y in ((a.xx, b.xx), (a.yy, b.yy), (a.xy, b.xy)):
        assert x == pytest.approx(y, rel=rtol, abs=atol)


def random_tensor(rng, norm=None) -> SymTensor2:
    t = SymTensor2(*rng.standard_normal(3))
    if norm is not None:
        n = t.norm()
        t = t.scaled(norm / n)
    return t


class TestTensorNorm:
    def test_zero(self):
        assert tensor_norm(SymTensor2.zero()) == 0.0

    def test_unit_diagonal(self):
        s = 1.0 / np.sqrt(2.0)
        assert tensor_norm(SymTensor2(s, -s, 0.0)) == pytest.approx(1.0, rel=RT)

    def test_pure_shear(self):
        assert tensor_norm(SymTensor2(0.0, 0.0, 1.0)) == pytest.approx(np.sqrt(2.0), rel=RT)

    def test_matches_dense_formula(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            t = random_tensor(rng)
            mat = np.array([[t.xx, t.xy], [t.xy, t.yy]])
            assert t.norm() == pytest.approx(np.sqrt(np.sum(mat * mat)), rel=RT)


class TestParams:
    def test_rejects_bad_mu(self):
        with pytest.raises(ValueError):
            FluidParams(mu=0.0, tau_y=1.0)

    def test_rejects_negative_tau_y(self):
        with pytest.raises(ValueError):
            FluidParams(mu=1.0, tau_y=-0.1)

    def test_rejects_small_m(self):
        with pytest.raises(ValueError):
            RegIndex(1.5)


class TestGamma:
    def test_direct_substitution(self):
        assert gamma_m(FluidParams(1.0, 2.0), RegIndex(2.0)) == 1.0

    def test_newtonian_degenerate(self):
        assert gamma_m(FluidParams(1.0, 0.0), RegIndex(5.0)) == 0.0

    def test_m_eleven(self):
        assert gamma_m(FluidParams(1.0, 1.0), RegIndex(11.0)) == 0.05

    def test_decreasing_in_m_and_vanishing(self):
        p = FluidParams(0.7, 1.3)
        values = [gamma_m(p, RegIndex(m)) for m in (2.0, 3.0, 5.0, 17.0, 333.0)]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert gamma_m(p, RegIndex(1e12)) < 1e-11


class TestBinghamStress:
    def test_unit_strain(self):
        s = 1.0 / np.sqrt(2.0)
        d = SymTensor2(s, -s, 0.0)
        res = bingham_stress(d, FluidParams(1.0, 1.0))
        assert res.yielded
        assert_tensor_close(res.stress, d.scaled(3.0))

    def test_zero_strain_marker(self):
        res = bingham_stress(SymTensor2.zero(), FluidParams(1.0, 0.75))
        assert not res.yielded
        assert res.stress is None
        assert res.bound == 0.75

    def test_newtonian_reduction(self):
        d = SymTensor2(0.3, 0.1, -0.2)
        res = bingham_stress(d, FluidParams(2.0, 0.0))
        assert res.yielded
        assert_tensor_close(res.stress, d.scaled(4.0))

    def test_unyielded_iff_zero(self):
        rng = np.random.default_rng(3)
        p = FluidParams(1.0, 1.0)
        for _ in range(50):
            d = random_tensor(rng)
            assert bingham_stress(d, p).yielded == (d.norm() > 0.0)

    def test_limit_convention_zero(self):
        assert bingham_limit_stress(SymTensor2.zero(), FluidParams(1.0, 1.0)) == SymTensor2.zero()


class TestBiviscosityStress:
    def test_zero_maps_to_zero(self):
        out = biviscosity_stress(SymTensor2.zero(), FluidParams(1.0, 2.0), RegIndex(2.0))
        assert out == SymTensor2.zero()

    def test_plastic_branch_substitution(self):
        d = SymTensor2(2.0, 0.0, 0.0)  # |d| = 2 exactly, above gamma = 1
        out = biviscosity_stress(d, FluidParams(1.0, 2.0), RegIndex(2.0))
        assert_tensor_close(out, d.scaled(3.0), rtol=0.0, atol=0.0)

    def test_branches_agree_at_threshold(self):
        p, r = FluidParams(1.0, 2.0), RegIndex(2.0)
        d = SymTensor2(1.0, 0.0, 0.0)  # |d| = gamma = 1 exactly
        newtonian = d.scaled(2.0 * r.m * p.mu)
        plastic = d.scaled(2.0 * p.mu + p.tau_y / d.norm())
        out = biviscosity_stress(d, p, r)
        assert_tensor_close(out, newtonian, rtol=0.0, atol=0.0)
        assert_tensor_close(out, plastic, rtol=RT)
        assert_tensor_close(out, d.scaled(4.0), rtol=RT)

    def test_pointwise_limit_reaches_bingham(self):
        p = FluidParams(0.8, 1.7)
        d = SymTensor2(0.09, -0.04, 0.02)
        target = bingham_stress(d, p).stress
        reached = False
        for m in (2.0, 4.0, 8.0, 16.0, 64.0, 256.0):
            out = biviscosity_stress(d, p, RegIndex(m))
            if gamma_m(p, RegIndex(m)) < d.norm():
                assert_tensor_close(out, target, rtol=0.0, atol=0.0)
                reached = True
        assert reached

    def test_scaling_consistency(self):
        # scaled argument lands on the branch of its own norm
        p, r = FluidParams(1.0, 2.0), RegIndex(4.0)
        d = random_tensor(np.random.default_rng(5), norm=0.2)
        for c in (0.5, 1.0, 3.0, 40.0):
            out = biviscosity_stress(d.scaled(c), p, r)
            eta = effective_viscosity(c * d.norm(), p, r)
            assert_tensor_close(out, d.scaled(2.0 * eta * c), rtol=RT)


class TestEffectiveViscosity:
    def test_zero_shear_plateau(self):
        assert effective_viscosity(0.0, FluidParams(1.0, 2.0), RegIndex(3.0)) == 3.0

    def test_plastic_substitution(self):
        assert effective_viscosity(2.0, FluidParams(1.0, 2.0), RegIndex(2.0)) == 1.5

    def test_large_shear_limit(self):
        p, r = FluidParams(1.0, 2.0), RegIndex(2.0)
        assert effective_viscosity(1e14, p, r) == pytest.approx(1.0, rel=1e-10)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            effective_viscosity(-0.1, FluidParams(1.0, 1.0), RegIndex(2.0))

    def test_bounds_and_continuity(self):
        p, r = FluidParams(0.5, 1.25), RegIndex(6.0)
        g = gamma_m(p, r)
        shear = np.linspace(0.0, 5.0 * g, 1001)
        eta = effective_viscosity(shear, p, r)
        assert np.all(eta >= p.mu * (1 - RT))
        assert np.all(eta <= r.m * p.mu * (1 + RT))
        below = effective_viscosity(g, p, r)
        above = effective_viscosity(np.nextafter(g, np.inf), p, r)
        assert below == pytest.approx(above, rel=RT)

    def test_newtonian_degenerate_is_m_independent(self):
        p = FluidParams(0.9, 0.0)
        for m in (2.0, 8.0, 64.0):
            assert effective_viscosity(0.0, p, RegIndex(m)) == p.mu
            assert effective_viscosity(1.3, p, RegIndex(m)) == p.mu


class TestMonotonicityGap:
    def test_newtonian_branch_formula(self):
        # both arguments inside the threshold: gap is 2*m*mu*|a-b|^2 exactly
        p, r = FluidParams(1.0, 2.0), RegIndex(2.0)
        a = SymTensor2(0.5, 0.0, 0.0)  # |a| = 0.5 <= gamma = 1
        assert monotonicity_gap(a, SymTensor2.zero(), p, r) == pytest.approx(1.0, rel=RT)
        s = 0.5 / np.sqrt(2.0)
        a2 = SymTensor2(s, -s, 0.0)
        assert monotonicity_gap(a2, SymTensor2.zero(), p, r) == pytest.approx(1.0, rel=RT)

    def test_identical_arguments(self):
        p, r = FluidParams(1.0, 2.0), RegIndex(2.0)
        a = SymTensor2(1.3, -0.2, 0.8)
        assert monotonicity_gap(a, a, p, r) == 0.0

    def test_mixed_branch_direct_evaluation(self):
        # one plastic, one Newtonian argument: compare against the stress
        # contraction evaluated from scratch, and check the lower bound
        p, r = FluidParams(1.0, 2.0), RegIndex(2.0)
        a = SymTensor2(2.4, -0.6, 0.9)      # |a| > 1
        b = SymTensor2(0.18, 0.21, -0.34)   # |b| < 1
        assert a.norm() > gamma_m(p, r) > b.norm()
        ta = a.scaled(2.0 * p.mu + p.tau_y / a.norm())
        tb = b.scaled(2.0 * r.m * p.mu)
        expected = (ta - tb).ddot(a - b)
        got = monotonicity_gap(a, b, p, r)
        assert got == pytest.approx(expected, rel=RT)
        assert got >= 2.0 * p.mu * (a - b).norm() ** 2 * (1 - RT)

    def test_lower_bound_all_cases(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            mu = 10.0 ** rng.uniform(-2, 2)
            tau_y = 10.0 ** rng.uniform(-2, 2)
            m = rng.uniform(2.0, 200.0)
            p, r = FluidParams(mu, tau_y), RegIndex(m)
            g = gamma_m(p, r)
            na, nb = g * 10.0 ** rng.uniform(-1, 1, size=2)
            a = random_tensor(rng, norm=na)
            b = random_tensor(rng, norm=nb)
            gap = monotonicity_gap(a, b, p, r)
            bound = 2.0 * mu * (a - b).norm() ** 2
            assert gap >= bound * (1 - RT) - 1e-300


class TestBinghamMonotonicityGap:
    def test_identical(self):
        p = FluidParams(1.0, 1.0)
        a = SymTensor2(0.4, 0.1, -0.7)
        assert bingham_monotonicity_gap(a, a, p) == 0.0

    def test_newtonian_identity(self):
        p = FluidParams(1.7, 0.0)
        rng = np.random.default_rng(2)
        for _ in range(50):
            a, b = random_tensor(rng), random_tensor(rng)
            gap = bingham_monotonicity_gap(a, b, p)
            assert gap == pytest.approx(2.0 * p.mu * (a - b).norm() ** 2, rel=RT)

    def test_random_pairs_respect_bound(self):
        rng = np.random.default_rng(13)
        p = FluidParams(0.3, 2.6)
        for _ in range(200):
            a, b = random_tensor(rng), random_tensor(rng)
            gap = bingham_monotonicity_gap(a, b, p)
            assert gap >= 2.0 * p.mu * (a - b).norm() ** 2 * (1 - RT) - 1e-300

    def test_zero_argument_rejected(self):
        p = FluidParams(1.0, 1.0)
        with pytest.raises(ValueError):
            bingham_monotonicity_gap(SymTensor2.zero(), SymTensor2(1.0, 0.0, 0.0), p)


class TestInequalitySweeps:
    """Vectorized randomized sweeps across both branches (the acceptance
    suite repeats these at full scale through the verify entry point)."""

    def setup_method(self):
        self.rng = np.random.default_rng(101)

    def _random_batch(self, n, p, r):
        g = gamma_m(p, r)
        comps = self.rng.standard_normal((3, n))
        norms = np.sqrt(comps[0] ** 2 + comps[1] ** 2 + 2 * comps[2] ** 2)
        # half the samples inside the threshold, half outside
        target = np.where(self.rng.random(n) < 0.5,
                          g * self.rng.uniform(0.0, 1.0, n),
                          g * self.rng.uniform(1.0, 10.0, n) + self.rng.uniform(0, 1, n))
        scale = np.where(norms > 0, target / np.maximum(norms, 1e-300), 0.0)
        return comps[0] * scale, comps[1] * scale, comps[2] * scale

    def test_coercivity_and_growth(self):
        from bingflow.constitutive import biviscosity_components, components_norm
        for seed_mu, seed_ty, seed_m in [(1.0, 2.0, 2.0), (0.01, 5.0, 64.0), (30.0, 0.3, 7.5)]:
            p, r = FluidParams(seed_mu, seed_ty), RegIndex(seed_m)
            xx, yy, xy = self._random_batch(20000, p, r)
            sxx, syy, sxy = biviscosity_components(xx, yy, xy, p, r)
            an = components_norm(xx, yy, xy)
            tn = components_norm(sxx, syy, sxy)
            coercive = sxx * xx + syy * yy + 2 * sxy * xy
            assert np.all(coercive >= 2 * p.mu * an**2 * (1 - RT))
            assert np.all(tn <= (p.tau_y + 2 * p.mu * an) * (1 + RT))
            newt = an <= gamma_m(p, r)
            cap = newtonian_branch_stress_cap(p, r)
            assert np.all(tn[newt] <= cap * (1 + RT))
