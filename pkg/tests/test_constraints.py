import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainplan.constraints.constraint import EPS_A, EPS_P, Constraint, residual, within_bounds
from chainplan.constraints.generate import generate_constraints, pose_constraints
from chainplan.constraints.solver import InfeasibleGoal, SolverConfig, solve_goal, solve_path
from chainplan.geometry import Pose, yaw_quat
from chainplan.kinematics.arm import load_robot

ROBOT = load_robot()
ORIGIN = np.zeros(3)


def at(p, yaw=0.0):
    return Pose(np.asarray(p, dtype=float), yaw_quat(yaw))


def test_point2point_residual_is_distance():
    c = Constraint("point2point", "left", hand_point=[0.1, 0, 0], target_point=[1.0, 2.0, 2.0])
    # hand point lands at (1.1, 0, 0) -> distance sqrt(0.01 + 4 + 4)
    assert residual(c, at([1.0, 0, 0])) == pytest.approx(np.sqrt(8.01))


def test_point2point_residual_follows_rotation():
    c = Constraint("point2point", "left", hand_point=[1.0, 0, 0], target_point=[0, 1.0, 0])
    assert residual(c, at(ORIGIN, np.pi / 2)) == pytest.approx(0.0, abs=1e-15)


def test_point2line_residual_ignores_along_line_offset():
    c = Constraint("point2line", "left", hand_point=ORIGIN, target_point=[0, 0, 0], target_axis=[0, 0, 5])
    assert residual(c, at([3.0, 4.0, 17.0])) == pytest.approx(5.0)


def test_line2point_residual():
    # hand line through the origin along hand x; target 2 m off it along y
    c = Constraint("line2point", "left", hand_point=ORIGIN, hand_axis=[1, 0, 0], target_point=[7.0, 2.0, 0])
    assert residual(c, Pose.identity()) == pytest.approx(2.0)


def test_axis_parallel_residual_is_angle():
    c = Constraint("axis_parallel", "left", hand_axis=[1, 0, 0], target_axis=[0, 1, 0])
    assert residual(c, Pose.identity()) == pytest.approx(np.pi / 2)
    assert residual(c, at(ORIGIN, np.pi / 2)) == pytest.approx(0.0, abs=1e-7)


def test_default_bounds_use_tolerances():
    p = Constraint("point2point", "left", hand_point=ORIGIN, target_point=ORIGIN)
    a = Constraint("axis_parallel", "left", hand_axis=[0, 0, 1], target_axis=[0, 0, 1])
    assert p.bounds() == (0.0, EPS_P)
    assert a.bounds() == (0.0, EPS_A)
    assert within_bounds(p, EPS_P) and not within_bounds(p, EPS_P * 1.01)


@pytest.mark.parametrize("kw", [
    dict(kind="wobble", hand_point=ORIGIN, target_point=ORIGIN),
    dict(kind="point2point", hand_point=ORIGIN),
    dict(kind="point2line", hand_point=ORIGIN, target_point=ORIGIN),
    dict(kind="axis_parallel", hand_axis=[0, 0, 0], target_axis=[0, 0, 1]),
    dict(kind="point2point", hand_point=ORIGIN, target_point=ORIGIN, lower=0.2, upper=0.1),
    dict(kind="point2point", hand_point=ORIGIN, target_point=ORIGIN, weight=-1.0),
    dict(kind="point2point", hand_point=[0, 0], target_point=ORIGIN),
])
def test_invalid_constraints_rejected(kw):
    with pytest.raises(ValueError):
        Constraint(hand="left", **kw)


@given(st.floats(-3, 3), st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_transformed_constraint_residual_invariant(yaw, shift):
    c = Constraint("point2line", "left", hand_point=[0.1, 0.0, 0.02], target_point=[0.3, -0.2, 0.1],
                   target_axis=[0.2, 1.0, 0.3])
    T = at(shift, yaw)
    ee = at([0.25, 0.1, 0.3], 0.4)
    assert residual(c.transformed(T), T * ee) == pytest.approx(residual(c, ee), abs=1e-12)


def test_generated_grasp_constraints(scene_of):
    scene, state = scene_of("blocks_stack_easy")
    cons = generate_constraints(scene, state, ("cube", 0), "grasp", "left")
    kinds = sorted(c.kind for c in cons)
    assert kinds[:2] == ["axis_parallel", "axis_parallel"] and kinds[-1] == "point2point"
    p2p = next(c for c in cons if c.kind == "point2point")
    # cube grasp point sits at the cube origin
    assert np.allclose(p2p.target_point, state.object_poses[("cube", 0)].p, atol=1e-9)


def test_generated_offset_shifts_target(scene_of):
    scene, state = scene_of("blocks_stack_easy")
    a = generate_constraints(scene, state, ("cube", 0), "grasp", "left")
    b = generate_constraints(scene, state, ("cube", 0), "grasp", "left", offset=(0.0, 0.0, 0.1))
    pa = next(c for c in a if c.kind == "point2point").target_point
    pb = next(c for c in b if c.kind == "point2point").target_point
    assert np.allclose(pb - pa, [0, 0, 0.1], atol=1e-12)


def test_generated_rejects_unknown_action_and_rigid_openness(scene_of):
    scene, state = scene_of("blocks_stack_easy")
    with pytest.raises(ValueError):
        generate_constraints(scene, state, ("cube", 0), "throw", "left")
    with pytest.raises(ValueError):
        generate_constraints(scene, state, ("cube", 0), "grasp", "left", openness=0.5)


def _reachable_target(arm, seed):
    rng = np.random.default_rng(seed)
    return arm.fk(rng.uniform(arm.lower * 0.5, arm.upper * 0.5))


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_solve_goal_meets_bounds(seed):
    arm = ROBOT.arm("left")
    target = _reachable_target(arm, seed)
    res = solve_goal(arm, pose_constraints("left", target), arm.nominal)
    assert res.feasible and not res.violated
    assert res.pose.allclose(target, atol=2e-2)
    assert all(within_bounds(c, r) for c, r in zip(pose_constraints("left", target), res.residuals))


def test_solve_goal_is_order_independent():
    arm = ROBOT.arm("right")
    cons = pose_constraints("right", _reachable_target(arm, 3))
    a = solve_goal(arm, cons, arm.nominal)
    b = solve_goal(arm, cons[::-1], arm.nominal)
    assert np.array_equal(a.theta, b.theta)
    assert a.residuals == b.residuals[::-1]


def test_unreachable_goal_carries_diagnostics():
    arm = ROBOT.arm("left")
    far = Constraint("point2point", "left", hand_point=ORIGIN, target_point=[5.0, 5.0, 5.0])
    with pytest.raises(InfeasibleGoal) as e:
        solve_goal(arm, [far], arm.nominal, cfg=SolverConfig(restarts=2))
    assert len(e.value.residuals) == 1 and e.value.residuals[0] > 1.0


def test_solve_goal_needs_constraints():
    arm = ROBOT.arm("left")
    with pytest.raises(ValueError):
        solve_goal(arm, [], arm.nominal)


def test_solve_path_endpoints_and_length():
    arm = ROBOT.arm("left")
    cfg = SolverConfig(waypoints=8)
    goal = solve_goal(arm, pose_constraints("left", _reachable_target(arm, 5)), arm.nominal).theta
    path = solve_path(arm, arm.nominal, goal, cfg=cfg)
    assert len(path.waypoints) == 9
    assert np.array_equal(path.waypoints[0], arm.nominal) and np.array_equal(path.waypoints[-1], goal)
    assert all(arm.within_limits(w) for w in path.waypoints)


@pytest.mark.parametrize("kw", [dict(eps_p=0.0), dict(restarts=0), dict(waypoints=1)])
def test_solver_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)
