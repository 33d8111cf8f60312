"""Turn asset annotations into constraint lists for a hand action."""

from __future__ import annotations

import numpy as np

from ..scene.assets import OpEntry
from .constraint import Constraint

ACTIONS = ("pinch", "grasp", "target", "target1", "target2", "move")


class AnnotationError(KeyError):
    pass


def hand_op_point(scene, side: str, op: str) -> np.ndarray:
    name = "pinch_point" if op == "pinch" else "grasp_point"
    return scene.robot.hand.point(f"{name}_base_{side}_hand", side)


def hand_approach_axis(scene, side: str, op: str) -> np.ndarray:
    return scene.robot.hand.axis(f"{side}_{'pinch' if op == 'pinch' else 'grasp'}_axis", side)


def _pick_entry(entries: list[OpEntry], key_point: str | None, what: str) -> OpEntry:
    if not entries:
        raise AnnotationError(f"no annotation for {what}")
    if key_point is None:
        return entries[0]
    for e in entries:
        if e.point == key_point:
            return e
    raise AnnotationError(f"no annotation for {what} at point {key_point!r}")


def _carried_point(scene, state, side: str):
    """Hand-frame point to place: the held object's origin, or the hand op point."""
    att = state.attachments.get(side)
    if att is not None and att.link == "base":
        return att.rel.p, att.op
    mode = state.hand_modes[side]
    op = "pinch" if mode.mode in ("pre_pinch", "pinching") else "grasp"
    return hand_op_point(scene, side, op), op


def generate_constraints(scene, state, obj, action: str, hand: str, openness: float | None = None,
                         relative_obj=None, relative_p=None, key_point: str | None = None,
                         approach_offset: float = 0.0, offset=None) -> list[Constraint]:
    """Constraints binding the hand (or what it holds) to an annotated asset.

    grasp/pinch: hand operation point on the asset's operation point, approach
    axes parallel, and the palm-plane axis on the closest annotated candidate.
    target*: held object onto the asset's placement point.  move: held object
    (or hand point) to a reference object origin plus a world offset.
    ``approach_offset`` backs the target off along the approach axis, giving a
    pre-operation pose.  ``offset`` (canonical frame) shifts the target point.
    """
    if action not in ACTIONS:
        raise ValueError(f"unknown action {action!r}")
    spec = scene.asset(obj)
    if openness is not None and not spec.articulated:
        raise ValueError(f"openness requested on rigid asset {spec.type_name}")
    base = state.object_poses[obj]
    op_open = state.openness.get(obj, 0.0) if openness is None else float(openness)
    down = scene.canonical_axis([0.0, 0.0, -1.0])
    what = f"{spec.type_name}/{action}"
    shift = np.zeros(3) if offset is None else scene.canonical_axis(np.asarray(offset, dtype=float))

    if action == "move":
        ref = obj if relative_obj is None else relative_obj
        rel = np.zeros(3) if relative_p is None else np.asarray(relative_p, dtype=float)
        target = state.object_poses[ref].p + scene.canonical_axis(rel) + shift
        hp, op = _carried_point(scene, state, hand)
        return [
            Constraint("point2point", hand, hand_point=hp, target_point=target, label="move_point"),
            Constraint("axis_parallel", hand, hand_axis=hand_approach_axis(scene, hand, op), target_axis=down,
                       label="move_approach"),
        ]

    entry = _pick_entry(spec.annotations.ops_of(action), key_point, what)
    link_T = base.matrix() @ spec.link_matrix(entry.link, op_open)
    R = link_T[:3, :3]
    target = R @ entry.position + link_T[:3, 3] + shift
    approach = R @ entry.approach if entry.approach is not None else down

    if action in ("grasp", "pinch"):
        hp = hand_op_point(scene, hand, action)
        hax = hand_approach_axis(scene, hand, action)
        cons = [
            Constraint("point2point", hand, hand_point=hp, target_point=target - approach_offset * approach,
                       label=f"{action}_point"),
            Constraint("axis_parallel", hand, hand_axis=hax, target_axis=approach, label=f"{action}_approach"),
        ]
        if entry.parallel:
            ring = scene.robot.hand.axis(f"{hand}_ring_2_index", hand)
            current = scene.hand_pose(state, hand).rotate(ring)
            cands = [R @ v for v in entry.parallel]
            best = max(range(len(cands)), key=lambda i: (float(cands[i] @ current), -i))
            cons.append(Constraint("axis_parallel", hand, hand_axis=ring, target_axis=cands[best],
                                   label=f"{action}_parallel"))
        return cons

    # placement targets
    hp, op = _carried_point(scene, state, hand)
    return [
        Constraint("point2point", hand, hand_point=hp, target_point=target - approach_offset * approach,
                   label=f"{action}_point"),
        Constraint("axis_parallel", hand, hand_axis=hand_approach_axis(scene, hand, op), target_axis=approach,
                   label=f"{action}_approach"),
    ]


def pose_constraints(hand: str, pose) -> list[Constraint]:
    """Hard constraints pinning the hand frame to an explicit pose."""
    R = pose.R
    return [
        Constraint("point2point", hand, hand_point=np.zeros(3), target_point=pose.p, label="pose_origin"),
        Constraint("axis_parallel", hand, hand_axis=[1, 0, 0], target_axis=R[:, 0], label="pose_x"),
        Constraint("axis_parallel", hand, hand_axis=[0, 0, 1], target_axis=R[:, 2], label="pose_z"),
    ]
