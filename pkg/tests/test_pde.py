import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from chtype.integrators import dopri45
from chtype.operators import diff, make_grid
from chtype.pde import (
    E0_density,
    SimConfig,
    classify_initial_data,
    conserved_E0_squared,
    exact_exponential_solution,
    m_from_u,
    particle_trajectories,
    pde_rhs,
    solve,
)
from conftest import random_bandlimited


@pytest.fixture(scope="module")
def manufactured():
    """``u* = exp(sin(x - t))`` and the forcing that makes it an exact solution."""
    x, t = sp.symbols("x t")
    u = sp.exp(sp.sin(x - t))
    v = u - sp.diff(u, x, 2)
    m = v - sp.diff(v, x, 2)
    source = sp.diff(m, t) + 2 * sp.diff(v, x) * m + v * sp.diff(m, x)
    return sp.lambdify((x, t), m, "numpy"), sp.lambdify((x, t), source, "numpy")


class TestConservedQuantity:
    def test_sine_energy(self):
        g = make_grid(np.pi, 64)
        assert conserved_E0_squared(g.sample(np.sin)) == pytest.approx(8 * np.pi, abs=1e-10)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2 ** 31))
    def test_parseval_matches_quadrature(self, seed):
        g = make_grid(7.0, 128)
        u = random_bandlimited(g, np.random.default_rng(seed))
        quad = np.sum(E0_density(u)) * g.h
        assert conserved_E0_squared(u) == pytest.approx(quad, rel=1e-11)

    def test_energy_is_integral_of_v_squared_plus_vx_squared(self):
        g = make_grid(20.0, 256)
        u = g.sample(lambda x: np.exp(-x ** 2) * np.cos(x))
        v = u.values - diff(u, 2).values
        vx = diff(u, 1).values - diff(u, 3).values
        assert conserved_E0_squared(u) == pytest.approx(np.sum(v ** 2 + vx ** 2) * g.h, rel=1e-12)


class TestRightHandSide:
    def test_constant_state_is_steady(self):
        g = make_grid(10, 64)
        assert np.allclose(pde_rhs(g.field(np.full(64, -0.7))).values, 0, atol=1e-14)

    def test_single_mode(self):
        g = make_grid(np.pi, 64)
        eps, k = 1e-2, 3
        u = g.sample(lambda x: eps * np.sin(k * x))
        expected = -1.5 * k * eps ** 2 * (1 + k ** 2) ** 3 * np.sin(2 * k * g.x)
        assert np.allclose(pde_rhs(m_from_u(u), dealias=False).values, expected, atol=1e-11)

    # the 2/3 rule discards a third of the modes, so it needs finer grids for the same error
    @pytest.mark.parametrize("dealias,grids", [(False, (16, 24, 48)), (True, (32, 48, 64))])
    def test_manufactured_solution_converges_spectrally(self, manufactured, dealias, grids):
        m_exact, source = manufactured
        errs = []
        for N in grids:
            g = make_grid(np.pi, N)
            f = lambda t, m: pde_rhs(g.field(m), 2, dealias).values + source(g.x, t)
            res = dopri45(f, 0.0, m_exact(g.x, 0.0), 1.0, rtol=1e-12, atol=1e-12)
            errs.append(np.max(np.abs(res.y[-1] - m_exact(g.x, 1.0))))
        assert errs[1] < errs[0] / 1e4
        assert errs[2] < 1e-8


class TestSolver:
    def test_config_validation(self):
        g = make_grid(10, 64)
        with pytest.raises(ValueError):
            SimConfig(grid=g, t_end=0)
        with pytest.raises(ValueError):
            SimConfig(grid=g, t_end=1, rtol=0)
        with pytest.raises(ValueError):
            SimConfig(grid=g, t_end=1, n=0)

    def test_monitor_times_end_exactly(self):
        g = make_grid(10, 64)
        times = SimConfig(grid=g, t_end=1.0, monitor_dt=0.3).monitor_times()
        assert times[-1] == 1.0 and np.allclose(times[:3], [0.3, 0.6, 0.9])

    def test_grid_mismatch(self):
        g = make_grid(10, 64)
        with pytest.raises(ValueError):
            solve(g.field(np.zeros(64)), SimConfig(grid=make_grid(10, 128), t_end=1))

    def test_zero_state(self):
        g = make_grid(10, 64)
        sol = solve(g.field(np.zeros(64)), SimConfig(grid=g, t_end=0.5, monitor_dt=0.25))
        assert sol.termination == "reached_t_end"
        assert np.all(sol.m(-1).values == 0)

    def test_smooth_run_conserves(self):
        g = make_grid(30, 256)
        u0 = g.sample(lambda x: 0.2 * np.exp(-x ** 2 / 4))
        sol = solve(m_from_u(u0), SimConfig(grid=g, t_end=1.0, rtol=1e-10, atol=1e-12))
        E = np.array([r.E0_squared for r in sol.reports])
        P = np.array([r.momentum for r in sol.reports])
        assert np.max(np.abs(E / E[0] - 1)) < 1e-8
        assert np.max(np.abs(P - P[0])) < 1e-10
        assert sol.reports[0].hamiltonian == pytest.approx(0.5 * E[0])

    def test_mutated_rhs_breaks_conservation(self):
        g = make_grid(30, 256)
        u0 = g.sample(lambda x: 0.2 * np.exp(-x ** 2 / 4))
        cfg = SimConfig(grid=g, t_end=1.0, rtol=1e-10, atol=1e-12)
        good = solve(m_from_u(u0), cfg)
        bad = solve(m_from_u(u0), cfg, rhs=lambda m: pde_rhs(g.field(m)).values + 0.01 * m)
        drift = lambda s: abs(s.reports[-1].E0_squared / s.reports[0].E0_squared - 1)
        assert drift(bad) > 1e4 * drift(good)

    def test_step_failure_keeps_last_good_snapshot(self):
        g = make_grid(10, 64)
        m0 = g.field(np.ones(64))
        cfg = SimConfig(grid=g, t_end=2.0, monitor_dt=0.25, m_norm_growth_cap=1e300,
                        blowup_threshold=1e300)
        sol = solve(m0, cfg, rhs=lambda m: m * m)
        assert sol.termination == "step_failure"
        assert 0.75 <= sol.times[-1] <= 1.0 + 1e-6
        assert np.all(np.isfinite(sol.m(-2).values))
        assert np.allclose(sol.times[:4], [0, 0.25, 0.5, 0.75])

    def test_growth_cap_trips(self):
        g = make_grid(10, 64)
        m0 = g.field(np.ones(64))
        sol = solve(m0, SimConfig(grid=g, t_end=2.0, m_norm_growth_cap=4.0),
                    rhs=lambda m: m)
        assert sol.termination == "blowup_detected"
        assert sol.times[-1] == pytest.approx(np.log(2.0), abs=0.05)
        assert sol.reports[-1].blowup_suspected

    def test_snapshot_accessors(self):
        g = make_grid(30, 128)
        u0 = g.sample(lambda x: 0.1 * np.exp(-x ** 2))
        sol = solve(m_from_u(u0), SimConfig(grid=g, t_end=0.2, monitor_dt=0.1))
        assert np.allclose(sol.u(0).values, u0.values, atol=1e-15)
        assert np.allclose(sol.v(0).values, u0.values - diff(u0, 2).values, atol=1e-13)
        assert sol.index_of(0.1) == 1
        with pytest.raises(ValueError):
            sol.index_of(0.15)


def gaussian(g, eps, amp=1.0, center=0.0):
    return g.sample(lambda x: amp * np.exp(-(x - center) ** 2 / (2 * eps ** 2)))


class TestClassification:
    def test_sign_definite(self):
        g = make_grid(30, 1024)
        m0 = g.sample(lambda x: np.exp(-x ** 2 / 4) + 0.5 * np.exp(-(x - 3) ** 2))
        from chtype.operators import invert_neg_A2n
        c = classify_initial_data(invert_neg_A2n(m0, 2))
        assert c.sign_definite and c.sign == 1 and c.prediction == "global"

    def test_single_sign_change(self):
        g = make_grid(30, 1024)
        from chtype.operators import invert_neg_A2n
        m0 = g.sample(lambda x: np.tanh(x) * np.exp(-x ** 2 / 8))
        c = classify_initial_data(invert_neg_A2n(m0, 2))
        assert c.single_sign_change and c.sign_change_x0 == pytest.approx(0.0, abs=g.h)
        assert c.prediction == "global"

    def test_steep_gaussian_meets_slope_condition(self):
        g = make_grid(30, 4096)
        c = classify_initial_data(gaussian(g, 0.3))
        assert c.slope_condition and c.prediction == "blowup"
        assert c.phi0 < -c.E0 / np.sqrt(2)
        assert 0 < c.riccati_time_bound < c.slope_time_bound

    def test_bound_absent_when_denominator_not_positive(self):
        # slope condition holds but |phi0| < E0, so the closed-form bound is vacuous
        g = make_grid(30, 4096)
        c = classify_initial_data(gaussian(g, 0.6))
        assert c.slope_condition and c.slope_time_bound is None
        assert c.riccati_time_bound > 0

    def test_broad_data_undetermined(self):
        g = make_grid(30, 1024)
        c = classify_initial_data(gaussian(g, 1.5))
        assert not c.slope_condition
        assert c.integral_applicable

    def test_zero_data_reports_not_applicable(self):
        g = make_grid(30, 256)
        c = classify_initial_data(g.field(np.zeros(256)))
        assert not c.integral_applicable and c.prediction == "undetermined"

    def test_antisymmetric_pair_meets_integral_condition(self):
        # m0 > 0 on the left, < 0 on the right, mirror of the single-sign-change case
        from chtype.operators import invert_neg_A2n
        g = make_grid(30, 1024)
        m0 = g.sample(lambda x: -np.tanh(x) * np.exp(-x ** 2 / 8))
        c = classify_initial_data(invert_neg_A2n(m0, 2))
        assert c.integral_condition and c.integral_x0 == pytest.approx(0.0, abs=g.h)


class TestExponentialSolution:
    def test_overflow_guard(self):
        with pytest.raises(OverflowError):
            exact_exponential_solution(1, 1, 1, make_grid(30, 64), 700.0)

    def test_sampling(self):
        g = make_grid(3, 16)
        f = exact_exponential_solution(0.5, 0.25, 2.0, g, 0.1)
        assert np.allclose(f.values, 0.5 * np.exp(0.2 + g.x) + 0.25 * np.exp(-0.2 - g.x) - 2.0)


class TestParticles:
    def test_identity_along_paths(self):
        g = make_grid(30, 512)
        u0 = g.sample(lambda x: 0.3 * np.exp(-x ** 2 / 4))
        sol = solve(m_from_u(u0), SimConfig(grid=g, t_end=0.5, rtol=1e-10, atol=1e-12,
                                            monitor_dt=0.05))
        x0 = np.linspace(-6, 6, 241)
        paths = particle_trajectories(sol, x0)
        assert not paths.truncated.any()
        assert np.allclose(paths.q[0], x0)
        m0 = sol.m(0).values
        from chtype.operators import trig_interpolate
        keep = np.abs(trig_interpolate(m0, g, x0)) > 0.1
        assert np.all(np.abs(paths.mq_ratio[-1][keep] - 1) < 1e-3)

    def test_truncation_near_seam(self):
        g = make_grid(10, 128)
        m0 = g.field(np.full(128, 2.0))  # v = 2 everywhere, particles drift right
        sol = solve(m0, SimConfig(grid=g, t_end=2.0, monitor_dt=0.25))
        paths = particle_trajectories(sol, np.array([0.0, 4.5]), margin=5.0)
        assert paths.truncated.tolist() == [False, True]
        assert paths.q[-1, 0] == pytest.approx(4.0, abs=1e-8)

    def test_needs_enough_snapshots(self):
        g = make_grid(10, 64)
        sol = solve(g.field(np.zeros(64)), SimConfig(grid=g, t_end=0.2, monitor_dt=0.1))
        with pytest.raises(ValueError):
            particle_trajectories(sol, [0.0])
