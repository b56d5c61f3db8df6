import math

import numpy as np
import pytest

from ksms.cli_io import parse_config
from ksms.elliptic_solver import EllipticSolveOptions, solve_screened_poisson
from ksms.errors import ConfigError, StepCollapseError
from ksms.grid_field import Grid2D, integrate
from ksms.motility import constant, exp_decay, ks_pair
from ksms.snapshot_io import read_snapshot
from ksms.time_stepper import (SimState, StepControl, U_FLOOR, compute_rhs,
                               initial_condition, run, stable_dt, step)


def make_state(u, g, tol=1e-11):
    v = solve_screened_poisson(u, g, EllipticSolveOptions(tol=tol))
    return SimState(u=u, v=v, t=0.0, step=0, v_running_max=float(np.max(v)))


def test_step_control_validation():
    with pytest.raises(ConfigError):
        StepControl(safety=0.0)
    with pytest.raises(ConfigError):
        StepControl(safety=1.5)
    with pytest.raises(ConfigError):
        StepControl(dt_min=1.0, dt_max=0.5)
    with pytest.raises(ConfigError):
        StepControl(integrator="rk4")
    with pytest.raises(ConfigError):
        StepControl(positivity_policy="clip")


def test_stable_dt_pure_diffusion_hand_value():
    # gamma = 1, no drift, mu = 0, h = 0.01: dt = 0.9 * h^2 / 4 exactly
    g = Grid2D(100, 100, lx=1.0, ly=1.0)
    st = SimState(u=np.ones(g.shape), v=np.ones(g.shape), t=0.0)
    ctl = StepControl(safety=0.9)
    dt = stable_dt(st, constant(1.0, 0.0), 0.0, g, ctl)
    assert dt == pytest.approx(0.9 * 1e-4 / 4.0, rel=1e-12)


def test_stable_dt_advective_bound():
    # tiny gamma, unit chi, v = 2x: face drift |w| = 2, so dt = 0.9 * h / 2
    g = Grid2D(10, 10, lx=1.0, ly=1.0)
    X, _ = g.cell_centers()
    st = SimState(u=np.ones(g.shape), v=2.0 * X, t=0.0)
    ctl = StepControl(safety=0.9)
    dt = stable_dt(st, constant(1e-3, 1.0), 0.0, g, ctl)
    assert dt == pytest.approx(0.9 * 0.1 / 2.0, rel=1e-12)


def test_stable_dt_reaction_bound():
    g = Grid2D(10, 10, lx=1.0, ly=1.0)
    st = SimState(u=3.0 * np.ones(g.shape), v=np.ones(g.shape), t=0.0)
    ctl = StepControl(safety=0.9)
    dt = stable_dt(st, constant(1e-6, 0.0), 2.0, g, ctl)
    assert dt == pytest.approx(0.9 / 6.0, rel=1e-12)


def test_stable_dt_capped_by_dt_max():
    g = Grid2D(10, 10)
    st = SimState(u=np.ones(g.shape), v=np.ones(g.shape), t=0.0)
    ctl = StepControl(safety=0.9, dt_max=1e-5)
    dt = stable_dt(st, constant(1e-6, 0.0), 0.0, g, ctl)
    assert dt == 1e-5


def test_stable_dt_collapse_raises():
    g = Grid2D(10, 10)
    st = SimState(u=np.ones(g.shape), v=np.ones(g.shape), t=0.0)
    ctl = StepControl(safety=0.9, dt_min=0.5, dt_max=1.0)
    with pytest.raises(StepCollapseError) as exc:
        stable_dt(st, constant(1.0, 0.0), 0.0, g, ctl)
    assert exc.value.dt < 0.5


def test_rhs_zero_at_homogeneous_state(exp_pair):
    g = Grid2D(16, 16, lx=4.0, ly=4.0)
    st = SimState(u=np.ones(g.shape), v=np.ones(g.shape), t=0.0)
    rhs = compute_rhs(st, exp_pair, 1.0, g)
    np.testing.assert_array_equal(rhs, np.zeros(g.shape))


def test_rhs_logistic_only_for_uniform_u():
    # uniform fields kill every flux; only mu u (1 - u) remains
    g = Grid2D(8, 8)
    st = SimState(u=2.0 * np.ones(g.shape), v=1.5 * np.ones(g.shape), t=0.0)
    rhs = compute_rhs(st, constant(1.0, 0.0), 0.7, g)
    np.testing.assert_allclose(rhs, 0.7 * 2.0 * (1.0 - 2.0), rtol=1e-14)


def test_rhs_flux_part_mass_neutral(rng, exp_pair):
    # with mu = 0 the right side is a pure divergence: zero total mass rate
    g = Grid2D(20, 14, lx=2.0, ly=1.4)
    u = 1.0 + 0.4 * (2.0 * rng.random(g.shape) - 1.0)
    st = make_state(u, g)
    rhs = compute_rhs(st, exp_pair, 0.0, g)
    assert abs(integrate(rhs, g)) < 1e-12 * np.abs(rhs).max() * g.area


def test_logistic_rate_identity(rng, exp_pair):
    # d/dt int u = mu (int u - int u^2) holds for the semi-discrete system;
    # a tiny explicit step must reproduce it to first order
    g = Grid2D(24, 24, lx=4.0, ly=4.0)
    u = 1.0 + 0.4 * (2.0 * rng.random(g.shape) - 1.0)
    st = make_state(u, g)
    mu = 1.3
    rhs = compute_rhs(st, exp_pair, mu, g)
    expected = mu * (integrate(u, g) - integrate(u * u, g))
    assert integrate(rhs, g) == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_step_preserves_homogeneous_state_bitwise(exp_pair):
    g = Grid2D(16, 16, lx=4.0, ly=4.0)
    st = SimState(u=np.ones(g.shape), v=np.ones(g.shape), t=0.0,
                  v_running_max=1.0)
    ctl = StepControl()
    for _ in range(200):
        st = step(st, exp_pair, 1.0, g, ctl)
    np.testing.assert_array_equal(st.u, np.ones(g.shape))
    np.testing.assert_array_equal(st.v, np.ones(g.shape))
    assert st.step == 200


def test_mass_conserved_without_growth(rng, exp_pair):
    g = Grid2D(24, 24, lx=4.0, ly=4.0)
    u = 1.0 + 0.4 * (2.0 * rng.random(g.shape) - 1.0)
    st = make_state(u, g)
    m0 = integrate(st.u, g)
    ctl = StepControl()
    for _ in range(300):
        st = step(st, exp_pair, 0.0, g, ctl)
    assert abs(integrate(st.u, g) - m0) / m0 < 1e-12
    assert st.u.min() > 0.0


def test_positivity_enforced_on_rough_state(exp_pair):
    # deep wells next to spikes force rejections; u must stay positive
    g = Grid2D(16, 16, lx=1.0, ly=1.0)
    u = np.full(g.shape, 1.0)
    u[::3, ::3] = 1e-6
    u[1::3, 1::3] = 2.5
    st = make_state(u, g)
    ctl = StepControl(safety=0.9)
    for _ in range(50):
        st = step(st, exp_pair, 1.0, g, ctl)
        assert st.u.min() > 0.0
    assert np.all(np.isfinite(st.u))


def test_dt_limit_lands_on_target(exp_pair):
    g = Grid2D(16, 16)
    st = make_state(np.full(g.shape, 1.2), g)
    st2 = step(st, exp_pair, 1.0, g, StepControl(), dt_limit=1e-6)
    assert st2.t == pytest.approx(1e-6, rel=1e-12)


def test_logistic_closed_form_uniform_start():
    # u0 = 2 with gamma = 1, chi = 0 stays uniform and follows
    # u(t) = u0 e^t / (1 - u0 + u0 e^t)
    g = Grid2D(8, 8)
    st = SimState(u=np.full(g.shape, 2.0), v=np.full(g.shape, 2.0), t=0.0)
    ctl = StepControl(dt_max=2e-3)
    spec = constant(1.0, 0.0)
    while st.t < 0.5 - 1e-12:
        st = step(st, spec, 1.0, g, ctl, dt_limit=0.5 - st.t)
    e = math.exp(0.5)
    exact = 2.0 * e / (1.0 + 2.0 * (e - 1.0))
    np.testing.assert_allclose(st.u, exact, atol=1e-5)


def heun_solution(nc, t_final, spec, mu, lx=4.0):
    g = Grid2D(nc, nc, lx=lx, ly=lx)
    X, Y = g.cell_centers()
    u = 1.0 + 0.3 * np.cos(2 * math.pi * X / g.lx) * np.cos(2 * math.pi * Y / g.ly)
    st = make_state(u, g, tol=1e-12)
    ctl = StepControl(safety=0.35)
    while st.t < t_final - 1e-14:
        st = step(st, spec, mu, g, ctl, dt_limit=t_final - st.t)
    return st.u


def richardson_order(coarse, mid, fine):
    def avg(u):
        return 0.25 * (u[0::2, 0::2] + u[0::2, 1::2] + u[1::2, 0::2] + u[1::2, 1::2])
    e1 = np.abs(avg(mid) - coarse).max()
    e2 = np.abs(avg(fine) - mid).max()
    return math.log2(e1 / e2)


def test_spatial_order_pure_diffusion():
    spec = constant(1.0, 0.0)
    sols = [heun_solution(nc, 0.1, spec, 1.0) for nc in (16, 32, 64)]
    order = richardson_order(*sols)
    assert order >= 1.9


def test_spatial_order_with_drift(exp_pair):
    sols = [heun_solution(nc, 0.05, exp_pair, 1.0) for nc in (32, 64, 128)]
    order = richardson_order(*sols)
    assert order >= 0.9


def test_initial_condition_kinds():
    g = Grid2D(16, 16, lx=4.0, ly=4.0)
    u = initial_condition("constant", 2.0, (0, 0), 0, g)
    np.testing.assert_array_equal(u, np.full(g.shape, 2.0))

    u = initial_condition("cosine", 0.5, (2, 2), 0, g)
    assert u.min() >= 0.5 - 1e-12 and u.max() <= 1.5 + 1e-12
    assert u.min() >= U_FLOOR

    u1 = initial_condition("random", 0.3, (0, 0), 42, g)
    u2 = initial_condition("random", 0.3, (0, 0), 42, g)
    u3 = initial_condition("random", 0.3, (0, 0), 43, g)
    np.testing.assert_array_equal(u1, u2)
    assert not np.array_equal(u1, u3)
    assert u1.min() > 0.7 - 1e-12 and u1.max() < 1.3 + 1e-12

    u = initial_condition("gaussian", -0.5, (0, 0), 0, g)
    assert u.min() >= U_FLOOR
    assert u.min() == pytest.approx(0.5, abs=0.05)   # dip at the center
    assert u.max() <= 1.0


def test_initial_condition_validation():
    g = Grid2D(8, 8)
    with pytest.raises(ConfigError):
        initial_condition("constant", 0.0, (0, 0), 0, g)
    with pytest.raises(ConfigError):
        initial_condition("cosine", 1.0, (2, 2), 0, g)
    with pytest.raises(ConfigError):
        initial_condition("random", -0.1, (0, 0), 0, g)
    with pytest.raises(ConfigError):
        initial_condition("gaussian", -1.0, (0, 0), 0, g)
    with pytest.raises(ConfigError):
        initial_condition("plume", 0.5, (0, 0), 0, g)


RUN_BASE = """
grid.nx = 12
grid.ny = 12
grid.lx = 2.0
grid.ly = 2.0
output.every = 0.2
"""

RUN_CONFIG = RUN_BASE + """
ic.amplitude = 0.3
time.t_end = 0.6
output.snapshots = true
"""


def test_run_writes_outputs(tmp_path):
    cfg = parse_config(RUN_CONFIG)
    state, series = run(cfg, out_dir=tmp_path)
    assert series.stop_reason == "t_end"
    assert len(series) == 4
    np.testing.assert_allclose(series.column("t"), [0.0, 0.2, 0.4, 0.6],
                               atol=1e-9)
    assert state.t == pytest.approx(0.6, abs=1e-9)
    assert (tmp_path / "diagnostics.csv").exists()
    for k in range(4):
        g2, u, v, t = read_snapshot(tmp_path / f"snapshot_{k:05d}.ksms")
        assert g2.shape == (12, 12)
        assert t == pytest.approx(0.2 * k, abs=1e-9)
    np.testing.assert_array_equal(u, state.u)


def test_run_convergence_stop(tmp_path):
    text = RUN_BASE + "ic.amplitude = 1e-8\ntime.t_end = 10.0\n"
    cfg = parse_config(text)
    state, series = run(cfg, out_dir=tmp_path)
    assert series.stop_reason == "converged"
    assert state.t < 10.0
    assert series.last.linf_u < cfg.output.conv_tol


def test_run_leaves_partial_csv_on_abort(tmp_path):
    text = RUN_BASE + "ic.amplitude = 0.3\ntime.t_end = 0.6\ntime.dt_min = 0.45\n"
    cfg = parse_config(text)
    with pytest.raises(StepCollapseError):
        run(cfg, out_dir=tmp_path)
    lines = (tmp_path / "diagnostics.csv").read_text().strip().splitlines()
    assert len(lines) == 2   # header plus the t = 0 sample
