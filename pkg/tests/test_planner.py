import numpy as np
import pytest

from oracles import fd_jacobian, random_point, relative_error
from platoon import ftcoc_casadi
from platoon.dynamics import ControlInput, VehicleParams, VehicleState, step
from platoon.formation import PlatoonConfiguration, build_reference
from platoon.geometry import DualCertificate, dual_value, footprint_from_pose
from platoon.nlp import solve_nlp
from platoon.planner import (
    ManeuverInfeasible, PlannerConfig, build_ftcoc, plan_maneuver, shifted_guess, unpack,
)
from platoon.scenario import Scenario, builtin_path, load_scenario

VP = VehicleParams()


def initial_problem(name, N=None, t=0):
    sc = load_scenario(builtin_path(name))
    cfg = sc.planner if N is None else PlannerConfig(**{**sc.planner.to_dict(), "N": N})
    ci, cf = (sc.config(n) for n in sc.pairs[0])
    ids = list(ci.ids())
    refs = build_reference(ci, cf, cfg.rho, cfg.v_max, cfg.T, cfg.dt, sc.road, VP, sc.origin_x, sc.x_reference)
    states = np.array([refs[v].states[0] for v in ids])
    windows = [refs[v].window(t, cfg.N) for v in ids]
    return build_ftcoc(states, windows, sc.obstacle_polytopes(), cfg, [VP] * len(ids), limits=sc.planner_limits())


def test_four_vehicles_have_six_pair_streams():
    p = initial_problem("reconfiguration")
    N = 5
    assert len(p.layout["streams"]) == 6
    n_primal = 4 * (4 * N + 2 * N)
    assert p.n == n_primal + 6 * (N + 1) * 10
    assert p.n_eq == 4 * 4 * N + 6 * (N + 1) * 4
    assert p.n_ineq == 4 * 4 * N + 6 * (N + 1) * 2


def test_obstacle_adds_one_stream_per_vehicle():
    p = initial_problem("obstacle")
    streams = p.layout["streams"]
    assert len(streams) == 6
    assert sum(1 for s in streams if s[1] is None) == 3


def test_single_vehicle_has_no_duals():
    cfg = PlannerConfig(N=4, dt=0.2, T=20, v_max=10.0)
    ref = np.array([[2.0 * k, 1.85, 0, 10] for k in range(5)])
    p = build_ftcoc([ref[0]], [ref], [], cfg, VP)
    assert p.n == 4 * 6 and p.layout["streams"] == []


@pytest.mark.parametrize("name", ["reconfiguration", "obstacle"])
def test_constraint_jacobians_match_finite_differences(name, rng):
    p = initial_problem(name, N=3)
    for _ in range(5):
        x = random_point(p, rng)
        assert relative_error(p.eq_jac(x), fd_jacobian(p.eq, x)) < 1e-5
        assert relative_error(p.ineq_jac(x), fd_jacobian(p.ineq, x)) < 1e-5
        g = p.gradient(x)
        assert relative_error(g[None], fd_jacobian(lambda y: np.array([p.objective(y)]), x)) < 1e-5


@pytest.mark.parametrize("name", ["reconfiguration", "obstacle"])
def test_numpy_model_matches_casadi_model(name, rng):
    p = initial_problem(name, N=4)
    fn = ftcoc_casadi.functions(p.layout)
    par = ftcoc_casadi.parameters(p.layout)
    rate_lo, _ = ftcoc_casadi.rate_offsets(p.layout)
    n_rate = len(rate_lo)
    for _ in range(10):
        x = random_point(p, rng)
        f, g_eq, g_in = (np.asarray(v).ravel() for v in fn(x, par))
        assert f[0] == pytest.approx(p.objective(x), rel=1e-9, abs=1e-9)
        assert np.allclose(g_eq, p.eq(x), atol=1e-9)
        ours = p.ineq(x)
        assert np.allclose(g_in[:n_rate] - rate_lo, ours[:n_rate], atol=1e-9)
        assert np.allclose(g_in[n_rate:], ours[n_rate:], atol=1e-9)


def test_vehicle_on_reference_needs_no_input():
    cfg = PlannerConfig(N=5, dt=0.2, T=20, v_max=10.0)
    ref = np.array([[2.0 * k, 1.85, 0, 10] for k in range(6)])
    p = build_ftcoc([ref[0]], [ref], [], cfg, VP)
    for backend in ("ipopt", "slsqp"):
        sol = solve_nlp(p, backend=backend)
        assert sol.ok
        assert np.max(np.abs(unpack(p, sol.x)["inputs"][0])) < 1e-6
        assert sol.objective < 1e-9


def test_converged_certificates_separate_the_fleet():
    p = initial_problem("reconfiguration")
    sol = solve_nlp(p)
    assert sol.ok
    out = unpack(p, sol.x)
    d_min = p.layout["d_min"]
    for stream, duals in zip(p.layout["streams"], out["duals"]):
        i, j, _ = stream
        for k, (lam, mu, s) in enumerate(duals):
            zi, zj = out["states"][i][k], out["states"][j][k]
            P1 = footprint_from_pose(*zi[:3], VP.len, VP.w)
            P2 = footprint_from_pose(*zj[:3], VP.len, VP.w)
            cert = DualCertificate(np.maximum(lam, 0), np.maximum(mu, 0), s)
            assert dual_value(P1, P2, cert, eq_tol=1e-5, norm_tol=1e-7) >= d_min - 1e-4


def test_warm_start_is_feasible_shape():
    p = initial_problem("reconfiguration")
    sol = solve_nlp(p)
    guess = shifted_guess(p, unpack(p, sol.x))
    assert guess.shape == (p.n,) and np.all(np.isfinite(guess))
    assert solve_nlp(p, guess).ok


def two_vehicle_scenario(p_lane, T=15):
    cfg = PlatoonConfiguration(2, (1,), (p_lane,), vehicle_ids=(1, 2))
    sc = Scenario(planner=PlannerConfig(N=4, dt=0.2, T=T, d_min=0.3, v_max=10.0), configs={"a": cfg})
    return sc, cfg


def test_holding_a_formation():
    sc, cfg = two_vehicle_scenario((0, 1.0))
    traj = plan_maneuver(cfg, cfg, sc)
    assert traj.states.shape == (2, 16, 4) and traj.inputs.shape == (2, 15, 2)
    assert np.allclose(traj.states[:, :, 1], 1.85, atol=1e-6)
    assert np.max(np.abs(traj.inputs)) < 1e-5
    assert traj.metadata["ci"] == traj.metadata["cf"] == cfg.config_id


def test_plan_is_reproducible_and_replays_exactly():
    sc, cfg = two_vehicle_scenario((0, 1.0))
    a = plan_maneuver(cfg, cfg, sc)
    b = plan_maneuver(cfg, cfg, sc)
    assert np.array_equal(a.states, b.states) and a.metadata == b.metadata
    for i in range(2):
        z = VehicleState.from_array(a.states[i, 0])
        for t in range(a.T):
            z = step(VP, z, ControlInput.from_array(a.inputs[i, t]), a.dt)
            assert np.max(np.abs(z.as_array() - a.states[i, t + 1])) <= 1e-12


def test_overlapping_start_is_infeasible():
    sc, cfg = two_vehicle_scenario((0, 0.1))
    with pytest.raises(ManeuverInfeasible) as err:
        plan_maneuver(cfg, cfg, sc)
    assert err.value.step_index == 0


def test_planner_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(N=10, T=5)
    with pytest.raises(ValueError):
        PlannerConfig(d_min=-1)
    with pytest.raises(ValueError):
        PlannerConfig.from_dict({"horizon": 3})
    assert PlannerConfig.from_dict(PlannerConfig().to_dict()) == PlannerConfig()
