"""Scenario and configuration tests: the channel oracle against its
quadrature twin, and the config grammar with its invariants."""

import numpy as np
import pytest

from bingflow.config import ConfigError, DEFAULTS, parse_config, parse_config_text, serialize_setup
from bingflow.constitutive import FluidParams, RegIndex
from bingflow.grid import compute_divergence
from bingflow.scenarios import (
    bingham_plug_half_width,
    channel_core_half_width,
    channel_oracle,
    channel_oracle_quadrature,
    make_cavity,
    make_channel,
    make_decay,
)


class TestChannelOracle:
    def test_newtonian_parabola(self):
        p, r = FluidParams(2.0, 0.0), RegIndex(8.0)
        y = np.linspace(-1.0, 1.0, 41)
        expect = 3.0 / (2.0 * 2.0) * (1.0 - y**2)
        np.testing.assert_allclose(channel_oracle(y, 3.0, 1.0, p, r), expect,
                                   rtol=0, atol=1e-15)

    def test_wall_value_zero(self):
        p, r = FluidParams(1.0, 0.5), RegIndex(16.0)
        assert channel_oracle(1.0, 1.0, 1.0, p, r) == 0.0
        assert channel_oracle(-1.0, 1.0, 1.0, p, r) == 0.0

    def test_rejects_bad_arguments(self):
        p, r = FluidParams(1.0, 0.5), RegIndex(16.0)
        with pytest.raises(ValueError):
            channel_oracle(1.5, 1.0, 1.0, p, r)
        with pytest.raises(ValueError):
            channel_oracle(0.0, -1.0, 1.0, p, r)

    def test_near_plug_core_m64(self):
        # frozen from the quadrature route for mu=1, tau_y=0.5, G=1, H=1
        p, r = FluidParams(1.0, 0.5), RegIndex(64.0)
        yc = channel_core_half_width(1.0, p, r)
        assert yc == pytest.approx(0.3591653491741194, rel=1e-13)
        assert bingham_plug_half_width(1.0, p) == pytest.approx(
            0.3535533905932738, rel=1e-13)
        center = channel_oracle(0.0, 1.0, 1.0, p, r)
        assert center == pytest.approx(0.20993867289878979, rel=1e-12)
        # the core is nearly rigid: variation across it is tiny
        core = channel_oracle(np.linspace(-0.9 * yc, 0.9 * yc, 11), 1.0, 1.0, p, r)
        assert (core.max() - core.min()) / center < 0.005

    def test_closed_form_matches_quadrature(self):
        rng = np.random.default_rng(1)
        worst = 0.0
        for _ in range(20):
            mu = 10.0 ** rng.uniform(-1, 1)
            tau_y = 10.0 ** rng.uniform(-2, 1)
            m = float(rng.uniform(2.0, 128.0))
            G = 10.0 ** rng.uniform(-1, 1)
            H = 10.0 ** rng.uniform(-0.3, 0.5)
            p, r = FluidParams(mu, tau_y), RegIndex(m)
            y = rng.uniform(-H, H, 1000)
            a = channel_oracle(y, G, H, p, r)
            b = channel_oracle_quadrature(y, G, H, p, r)
            worst = max(worst, float(np.max(np.abs(a - b))
                                     / max(np.max(np.abs(b)), 1e-300)))
        assert worst < 1e-10

    def test_entire_channel_core_when_m_small_enough(self):
        # huge yield stress: the branch point exceeds the half-width and the
        # whole section runs on the high-viscosity branch
        p, r = FluidParams(1.0, 50.0), RegIndex(2.0)
        y = np.linspace(-1, 1, 21)
        expect = 1.0 / (2.0 * r.m * p.mu) * (1.0 - y**2)
        np.testing.assert_allclose(channel_oracle(y, 1.0, 1.0, p, r), expect,
                                   rtol=1e-13)


class TestScenarioBuilders:
    def test_channel_periodic(self):
        sc = make_channel(8, 16, 4.0, 2.0, 1.0)
        assert sc.bc.periodic_x
        f = sc.initial_state()
        assert np.all(f.u == 0.0)

    def test_channel_rejects_nonpositive_force(self):
        with pytest.raises(ValueError):
            make_channel(8, 16, 4.0, 2.0, 0.0)

    def test_cavity_lid(self):
        sc = make_cavity(8, 8, 1.0, 1.0, 2.5)
        assert sc.bc.lid_speed == 2.5
        assert not sc.bc.periodic_x

    def test_decay_initial_state_solenoidal_and_seeded(self):
        sc = make_decay(16, 16, 1.0, 1.0, seed=5)
        f1 = sc.initial_state()
        f2 = sc.initial_state()
        np.testing.assert_array_equal(f1.u, f2.u)
        assert np.max(np.abs(compute_divergence(f1, sc.grid))) < 1e-13
        assert np.max(np.abs(f1.u)) > 0.0


class TestConfig:
    def test_minimal_file_uses_defaults(self):
        setup = parse_config_text("scenario = decay\n")
        assert setup.scenario.kind == "decay"
        assert setup.scenario.grid.nx == DEFAULTS["nx"]
        assert setup.solve.dt == DEFAULTS["dt"]
        assert setup.solve.picard_max == DEFAULTS["picard_max"]
        assert setup.fluid.tau_y == DEFAULTS["tau_y"]
        assert setup.seed == DEFAULTS["seed"]

    def test_small_m_rejected_with_line(self):
        with pytest.raises(ConfigError, match=r"line 2.*m >= 2"):
            parse_config_text("scenario = decay\nm = 1.5\n")

    def test_unknown_key_rejected_with_line(self):
        with pytest.raises(ConfigError, match="line 3.*unknown key"):
            parse_config_text("scenario = decay\nnx = 8\nwhatever = 3\n")

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text("scenario = decay\nthis is not an assignment\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("nx = 8\nnx = 9\n")

    def test_dt_cfl_conflict(self):
        with pytest.raises(ConfigError, match="either dt or cfl"):
            parse_config_text("scenario = decay\ndt = 0.1\ncfl = 0.5\n")

    def test_m_schedule_conflict(self):
        with pytest.raises(ConfigError, match="either m or m_schedule"):
            parse_config_text("m = 4\nm_schedule = 2,4\n")

    def test_full_channel_roundtrip(self):
        text = (
            "scenario = channel\nnx = 16\nny = 64\nlx = 4.0\nly = 2.0\n"
            "mu = 1.0\ntau_y = 0.5\nm_schedule = 2,4,8\ncfl = 0.4\n"
            "t_end = 12.0\nsteady_tol = 1e-9\npicard_tol = 1e-10\n"
            "picard_max = 120\npoisson_tol = 1e-11\nlid_speed = 0.0\n"
            "force_gx = 0.75\nout_dir = runs/chan\nseed = 42\n"
        )
        setup = parse_config_text(text)
        again = parse_config_text(serialize_setup(setup))
        assert again.scenario == setup.scenario
        assert again.solve == setup.solve
        assert again.fluid == setup.fluid
        assert again.schedule == setup.schedule
        assert again.out_dir == setup.out_dir
        assert again.seed == setup.seed
        assert again.text == setup.text

    def test_roundtrip_property_random(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            kind = rng.choice(["channel", "cavity", "decay"])
            lines = [f"scenario = {kind}",
                     f"nx = {rng.integers(4, 40)}",
                     f"ny = {rng.integers(4, 40)}",
                     f"lx = {10**rng.uniform(-0.5, 0.8)!r}",
                     f"ly = {10**rng.uniform(-0.5, 0.8)!r}",
                     f"mu = {10**rng.uniform(-2, 1)!r}",
                     f"tau_y = {float(rng.choice([0.0, 0.4]))!r}",
                     f"m = {float(rng.uniform(2, 99))!r}",
                     f"t_end = {10**rng.uniform(-1, 1)!r}",
                     f"seed = {rng.integers(0, 1000)}"]
            setup = parse_config_text("\n".join(lines))
            again = parse_config_text(serialize_setup(setup))
            assert again == setup

    def test_overrides_applied_and_validated(self):
        setup = parse_config_text("scenario = decay\n", overrides=["nx=12", "tau_y=0.3"])
        assert setup.scenario.grid.nx == 12
        assert setup.fluid.tau_y == 0.3
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("scenario = decay\n", overrides=["bogus=1"])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "nope.cfg")

    def test_comments_and_blanks_ignored(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("# header\n\nscenario = cavity  # trailing\nnx = 8\n")
        setup = parse_config(path)
        assert setup.scenario.kind == "cavity"
        assert setup.scenario.grid.nx == 8
