import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chainplan.bench.tasks import TASKS
from chainplan.executor.executor import ExecConfig, execute_plan
from chainplan.scaling import (TABLE_FRAME, FrameError, ReferenceFrame, derive_transform, load_room_frame,
                               random_room_frame, rebase_scene, residual_gap, room_frame_to_dict)
from conftest import _scene

frames = st.builds(lambda x, y, z, yaw: ReferenceFrame.from_yaw([x, y, z], yaw),
                   st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 0.3), st.floats(-np.pi, np.pi))


def test_identity_and_translation():
    I = derive_transform(TABLE_FRAME, TABLE_FRAME)
    assert np.array_equal(I.matrix(), np.eye(4))
    T = derive_transform(TABLE_FRAME, ReferenceFrame([1.0, -2.0, 0.5], np.eye(3)))
    assert np.allclose(T.transform_point(np.zeros(3)), [1.0, -2.0, 0.5])
    assert np.allclose(T.R, np.eye(3))


def test_quarter_turn_hand_case():
    T = derive_transform(TABLE_FRAME, ReferenceFrame.from_yaw([1.0, 2.0, 0.0], np.pi / 2))
    # table x now points along world y, table y along world -x
    assert np.allclose(T.transform_point(np.array([1.0, 0, 0])), [1.0, 3.0, 0.0], atol=1e-12)
    assert np.allclose(T.transform_point(np.array([0, 1.0, 0])), [0.0, 2.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("axes, msg", [
    (np.diag([1.0, 1.0, 2.0]), "orthonormal"),
    (np.diag([1.0, 1.0, -1.0]), "left-handed"),
])
def test_bad_frames_rejected(axes, msg):
    with pytest.raises(FrameError, match=msg):
        ReferenceFrame(np.zeros(3), axes)


@given(frames, frames, frames)
def test_transforms_compose(a, b, c):
    assert (derive_transform(b, c) * derive_transform(a, b)).allclose(derive_transform(a, c), atol=1e-9)


@given(frames, st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_transform_is_isometry(f, xs):
    T = derive_transform(TABLE_FRAME, f)
    p, q = np.array(xs[:3]), np.array(xs[3:])
    d = np.linalg.norm(T.transform_point(p) - T.transform_point(q))
    assert d == pytest.approx(np.linalg.norm(p - q), abs=1e-12)


def test_room_frame_roundtrip_and_errors(tmp_path):
    cfg = {"origin": [1, 2, 0.1], "axes": np.eye(3).tolist(),
           "static_boxes": [{"pose": [0, 0, 0, 1, 0, 0, 0], "half": [0.5, 0.5, 0.5]}]}
    path = tmp_path / "room.json"
    path.write_text(json.dumps(cfg))
    room = load_room_frame(path)
    assert len(room.boxes) == 1
    assert room_frame_to_dict(load_room_frame(room_frame_to_dict(room))) == room_frame_to_dict(room)
    for bad in ({}, {"origin": [0, 0], "axes": np.eye(3).tolist()}, {**cfg, "static_boxes": [{"pose": [0]}]}):
        with pytest.raises(FrameError):
            load_room_frame(bad)


def test_residual_gap():
    assert residual_gap([[0.1, 0.2], []], [[0.1, 0.25], []]) == pytest.approx(0.05)
    assert residual_gap([[0.1]], [[0.1], [0.2]]) == float("inf")
    assert residual_gap([[0.1]], [[0.1, 0.2]]) == float("inf")


def test_rebased_state_keeps_relative_geometry():
    scene, state = _scene("blocks_stack_easy", 0, 0)
    T = derive_transform(TABLE_FRAME, random_room_frame(np.random.default_rng(4)))
    scene2, state2 = rebase_scene(scene, state, T)
    for k, pose in state.object_poses.items():
        assert (T * pose).allclose(state2.object_poses[k], atol=1e-12)
    assert state2.openness == state.openness
    assert all(np.array_equal(state2.arm_angles[s], state.arm_angles[s]) for s in state.arm_angles)


def test_scripted_plan_runs_the_same_in_a_room():
    task = TASKS["open_drawer"]
    scene, state = _scene("open_drawer", 0, 0)
    cfg = ExecConfig(record=False)
    base = execute_plan(scene, state, task.canonical_plan(), task.predicate, cfg)
    T = derive_transform(TABLE_FRAME, random_room_frame(np.random.default_rng(9)))
    moved = execute_plan(*rebase_scene(scene, state, T), task.canonical_plan(), task.predicate, cfg)
    assert base.task_success and moved.task_success
    assert residual_gap(base.residual_log(), moved.residual_log()) <= 1e-9
