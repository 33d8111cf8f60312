import json

import numpy as np
import pytest

from chainplan.bench.tasks import TASKS, episode_config
from chainplan.constraints.generate import generate_constraints
from chainplan.constraints.solver import solve_goal
from chainplan.executor.executor import ExecConfig, Executor, execute_plan
from chainplan.executor.recorder import ACTION_DIM, TrajError, read_traj, traj_text, write_traj
from chainplan.executor.steps import Generated, Plan, Step, Target, plan_from_blocks
from chainplan.executor.success import at_targets, check_success, stacked
from chainplan.kinematics.collision import collision_check
from chainplan.scene.assets import AssetLibrary
from chainplan.scene.scene import PlacementError, load_scene, scene_to_config
from chainplan.scene.state import snapshot

QUIET = ExecConfig(record=False)


def pick(side, obj, op="pinch"):
    return [Step(f"pre_{op}", side),
            Step("move", side, targets=(Target(side, (Generated(obj, op),)),)),
            Step(op, side, obj)]


def test_library_lists_bundled_assets():
    av = AssetLibrary().available()
    assert ("cube", 0) in av and ("drawer", 0) in av
    with pytest.raises(KeyError):
        AssetLibrary().get("teapot", 9)


def test_objects_settle_onto_table(scene_of):
    scene, state = scene_of("blocks_stack_easy")
    for key, pose in state.object_poses.items():
        box = scene.asset(key).collision[0]
        # config z is only a hint; a cube rests on its bottom face
        assert pose.p[2] == pytest.approx(box.half[2] - box.center[2], abs=1e-9)


def test_duplicate_object_rejected():
    cfg = episode_config(TASKS["blocks_stack_easy"], 0, 0)
    cfg["objects"].append(dict(cfg["objects"][0]))
    with pytest.raises(PlacementError):
        load_scene(cfg)


def test_scene_config_roundtrip(scene_of):
    scene, state = scene_of("open_drawer")
    cfg = scene_to_config(scene, state)
    scene2, state2 = load_scene(json.loads(json.dumps(cfg)))
    assert state2.equals(state)


def test_snapshot_restore_is_bit_exact(scene_of):
    _, state = scene_of("blocks_stack_easy")
    snap = snapshot(state)
    state.set_angles("left", state.arm_angles["left"] + 0.1)
    assert not snap.restore().equals(state)
    assert snap.restore().equals(snap.restore())


def test_nominal_pose_is_collision_free(scene_of):
    for task in TASKS:
        scene, state = scene_of(task)
        assert collision_check(scene, state) == [], task


def test_hand_on_cube_reports_contact_unless_ignored(scene_of):
    scene, state = scene_of("blocks_stack_easy")
    arm = scene.robot.arm("left")
    cube = ("cube", 0)
    # hand operation point driven 4 cm below the cube centre: the wrist hits the cube
    cons = generate_constraints(scene, state, cube, "grasp", "left", offset=(0.0, 0.0, -0.04))
    theta = solve_goal(arm, cons, arm.nominal).theta
    contacts = collision_check(scene, state, {"left": theta})
    assert any("cube0" in (c.a, c.b) for c in contacts)
    ignored = collision_check(scene, state, {"left": theta}, ignore={cube})
    assert not any("cube0" in (c.a, c.b) for c in ignored)


@pytest.mark.parametrize("task", ["block_stack_single", "open_drawer"])
def test_canonical_plan_succeeds(task, scene_of):
    scene, state = scene_of(task)
    out = execute_plan(scene, state, TASKS[task].canonical_plan(), TASKS[task].predicate)
    assert out.status == "success" and out.task_success
    assert out.valuable
    assert len(out.records) == len(TASKS[task].canonical_plan().steps)
    assert all(len(f["action"]) == ACTION_DIM for f in out.frames)
    assert [f["t"] for f in out.frames] == list(range(len(out.frames)))


def test_execute_does_not_touch_input_state(scene_of):
    scene, state = scene_of("block_stack_single")
    before = snapshot(state)
    execute_plan(scene, state, TASKS["block_stack_single"].canonical_plan(), None, QUIET)
    assert state.equals(before.restore())


def test_keep_states_one_per_step(scene_of):
    scene, state = scene_of("block_stack_single")
    plan = TASKS["block_stack_single"].canonical_plan()
    out = execute_plan(scene, state, plan, None, QUIET, keep_states=True)
    assert len(out.step_states) == len(plan.steps)
    assert out.step_states[-1].equals(out.state)
    assert out.frames == []


def test_grasp_of_missing_object_fails_with_cause(scene_of):
    scene, state = scene_of("block_stack_single")
    plan = plan_from_blocks([pick("left", ("cube", 7))])
    out = execute_plan(scene, state, plan, None, QUIET)
    assert out.status == "failed" and out.failed_step == 1 and out.cause == "bad_reference"


def test_grasp_without_reaching_fails(scene_of):
    scene, state = scene_of("block_stack_single")
    out = execute_plan(scene, state, Plan((Step("pre_pinch", "left"), Step("pinch", "left", ("cube", 0)))),
                       None, QUIET)
    assert out.status == "failed" and out.failed_step == 1 and out.cause == "attach_failed"
    assert not out.valuable


def test_unfinished_plan_is_incomplete(scene_of):
    scene, state = scene_of("block_stack_single")
    out = execute_plan(scene, state, plan_from_blocks([pick("left", ("cube", 0))]), "block_stack_single", QUIET)
    assert out.status == "incomplete" and out.failed_step is None and out.task_success is False


def test_parse_error_reported_after_valid_prefix(scene_of):
    scene, state = scene_of("block_stack_single")
    plan = Plan(tuple(pick("left", ("cube", 0))), "proposed", parse_error=(1, "line 2: nonsense"))
    out = Executor(scene, QUIET).execute(state, plan)
    assert out.status == "failed" and out.cause == "parse_error" and out.failed_step == 3


def test_stacked_predicate_hand_cases():
    assert stacked([np.array([0, 0, 0.02]), np.array([0.01, 0, 0.06])])
    assert not stacked([np.array([0, 0, 0.02]), np.array([0.05, 0, 0.06])])
    assert not stacked([np.array([0, 0, 0.02]), np.array([0, 0, 0.08])])
    assert at_targets([np.array([0.0, 0.0, 0.0])], [np.array([0.01, -0.01, 0.3])])


def test_unknown_predicate_rejected(scene_of):
    scene, state = scene_of()
    with pytest.raises(KeyError):
        check_success("juggle", scene, state)


def test_traj_roundtrip_and_validation(tmp_path, scene_of):
    scene, state = scene_of("block_stack_single")
    out = execute_plan(scene, state, plan_from_blocks([pick("left", ("cube", 0))]))
    p = tmp_path / "e.traj"
    write_traj(p, {"task": "x"}, out.frames)
    head, frames = read_traj(p)
    assert head["frames"] == len(frames) == len(out.frames) and head["action_dim"] == ACTION_DIM
    assert traj_text({"task": "x"}, frames) == p.read_text()
    lines = p.read_text().split("\n")
    lines[2] = lines[2].replace('"action":[', '"action":[1.0,')
    p.write_text("\n".join(lines))
    with pytest.raises(TrajError) as e:
        read_traj(p)
    assert e.value.line == 3
