"""Registered benchmark tasks: layouts, randomization and canonical plans.

Coordinates are canonical table coordinates (robot base at x = -0.85).
Canonical plans are symbolic; they refer to objects, not to where the
objects happen to be in a given episode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..executor.steps import (INIT_POSE, AxisRef, Generated, PointRef, Relation, Step, Target,
                              plan_from_blocks)
from ..geometry import Pose, quat_mul, yaw_quat

C0, C1, C2 = ("cube", 0), ("cube", 1), ("cube", 2)
RECT = ("rect_cube", 0)
DRAWER = ("drawer", 0)

# clearance above a placement target before descending onto it
HOVER = 0.08
# where the right hand offers a block to the left one
HANDOVER_POINT = (-0.30, 0.0, 0.16)


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    obj_id: int
    asset: tuple
    xy: tuple
    yaw_deg: float = 0.0
    openness: float | None = None


@dataclass(frozen=True)
class TaskSpec:
    name: str
    description: str
    objects: tuple
    # position box [x1, x2, y1, y2] (m) and yaw range [a1, a2] (deg), applied to every object
    box: tuple
    yaw: tuple
    predicate: str = ""
    note: str = ""
    plan_blocks: object = field(default=None, repr=False)

    def __post_init__(self):
        x1, x2, y1, y2 = self.box
        if x1 > x2 or y1 > y2 or self.yaw[0] > self.yaw[1]:
            raise ValueError(f"{self.name}: randomization ranges are not ordered")
        if not self.predicate:
            object.__setattr__(self, "predicate", self.name)

    def canonical_blocks(self) -> list[list[Step]]:
        return self.plan_blocks()

    def canonical_plan(self):
        return plan_from_blocks(self.canonical_blocks(), "scripted")


# ---------------------------------------------------------------- randomization

def sample_offsets(task: TaskSpec, rng: np.random.Generator) -> list[tuple[float, float, float]]:
    """Per-object (dx, dy, dyaw_deg) drawn uniformly from the task's ranges."""
    x1, x2, y1, y2 = task.box
    a1, a2 = task.yaw
    out = []
    for _ in task.objects:
        out.append((float(rng.uniform(x1, x2)), float(rng.uniform(y1, y2)), float(rng.uniform(a1, a2))))
    return out


def episode_rng(seed: int, episode: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(episode)])


def scene_config(task: TaskSpec, offsets=None) -> dict:
    objs = []
    for i, o in enumerate(task.objects):
        dx, dy, da = offsets[i] if offsets is not None else (0.0, 0.0, 0.0)
        q = quat_mul(yaw_quat(np.radians(o.yaw_deg + da)), np.array([1.0, 0, 0, 0]))
        # z is a hint only: objects settle onto the table at load
        pose = Pose(np.array([o.xy[0] + dx, o.xy[1] + dy, 0.05]), q)
        entry = {"name": o.name, "obj_id": o.obj_id, "asset": list(o.asset), "pose": pose.to_list()}
        if o.openness is not None:
            entry["openness"] = o.openness
        objs.append(entry)
    return {"name": task.name, "objects": objs}


def episode_config(task: TaskSpec, seed: int, episode: int) -> dict:
    return scene_config(task, sample_offsets(task, episode_rng(seed, episode)))


# ---------------------------------------------------------------- plan pieces

def _other(side):
    return "right" if side == "left" else "left"


def _pick(side, obj, op="pinch", key_point=None):
    return [Step(f"pre_{op}", side),
            Step("move", side, targets=(Target(side, (Generated(obj, op, key_point=key_point),)),)),
            Step(op, side, obj)]


def _pick_both(left_obj, right_obj, op="pinch"):
    return [Step(f"pre_{op}", "all"),
            Step("move", "all", targets=(Target("left", (Generated(left_obj, op),)),
                                         Target("right", (Generated(right_obj, op),)))),
            Step(op, "left", left_obj),
            Step(op, "right", right_obj)]


def _home(side):
    return Step("move", side, targets=(Target(side, pose=INIT_POSE),))


def _place_at(side, obj, xyz, op="pinch"):
    """Carry the held object above a table position, lower it and release."""
    x, y, z = xyz
    axis = AxisRef(f"{side}_{op}_axis")
    down = Relation("axis_parallel", hand_axis=axis, target_axis=(0.0, 0.0, -1.0))

    def at(h):
        return Target(side, (Relation("point2point", hand_point=PointRef(obj=obj), target_point=(x, y, z + h)),
                             down), attach=obj)
    return [Step("move", side, targets=(at(HOVER),)),
            Step("move", side, targets=(at(0.0),)),
            Step("open", side)]


def _place_on(side, obj, base, action="target"):
    return [Step("move", side, targets=(Target(side, (Generated(base, action, approach_offset=HOVER),),
                                               attach=obj),)),
            Step("move", side, targets=(Target(side, (Generated(base, action),), attach=obj),)),
            Step("open", side)]


def _place_rel(side, obj, base, rel):
    hover = (rel[0], rel[1], rel[2] + HOVER)
    return [Step("move", side, targets=(Target(side, (Generated(obj, "move", relative_obj=base,
                                                                relative_p=hover),), attach=obj),)),
            Step("move", side, targets=(Target(side, (Generated(obj, "move", relative_obj=base,
                                                                relative_p=rel),), attach=obj),)),
            Step("open", side)]


def _drawer_to(side, openness):
    grasp = _pick(side, DRAWER, "grasp")
    pull = Step("move", side, targets=(Target(side, (Generated(DRAWER, "grasp", openness=openness),),
                                              attach=DRAWER),))
    return grasp, pull


def _handover(giver, taker, obj):
    """Giver offers the held block at a fixed point; taker pinches its free end."""
    offer = Step("move", giver, targets=(Target(giver, (
        Relation("point2point", hand_point=PointRef(obj=obj), target_point=HANDOVER_POINT),
        Relation("axis_parallel", hand_axis=AxisRef(f"{giver}_pinch_axis"), target_axis=(0.0, 0.0, -1.0)),
    ), attach=obj),))
    end = "end_left" if taker == "left" else "end_right"
    take = [Step("pre_pinch", taker),
            Step("move", taker, targets=(Target(taker, (Generated(obj, "pinch", key_point=end,
                                                                  approach_offset=HOVER),)),)),
            Step("move", taker, targets=(Target(taker, (Generated(obj, "pinch", key_point=end),)),)),
            Step("pinch", taker, obj)]
    return offer, take


# ---------------------------------------------------------------- canonical plans

def _single():
    return [_pick("right", C1),
            _place_on("right", C1, C0) + [_home("right")]]


def _stack_easy():
    return [_pick_both(C0, C1),
            _place_at("left", C0, STACK_BASE) + [_home("left")],
            _place_on("right", C1, C0) + [_home("right")]]


def _stack_hard():
    return [_pick_both(C0, C1),
            _place_at("left", C0, STACK_BASE) + [_home("left")],
            _place_on("right", C1, C0) + [_home("right")],
            _pick("right", C2),
            _place_on("right", C2, C1) + [_home("right")]]


# gap between the two base cubes of the pyramid, and how high the apex sits
PYRAMID_GAP = 0.05
PYRAMID_TOP = 0.045


def _pyramid():
    return [_pick_both(C0, C1),
            _place_at("left", C0, PYRAMID_BASE) + [_home("left")],
            _place_rel("right", C1, C0, (0.0, -PYRAMID_GAP, 0.005)) + [_home("right")],
            _pick("right", C2),
            _place_rel("right", C2, C0, (0.0, -PYRAMID_GAP / 2, PYRAMID_TOP)) + [_home("right")]]


def _open_drawer():
    grasp, pull = _drawer_to("left", 1.0)
    return [grasp, [pull], [Step("open", "left")]]


def _close_drawer():
    grasp, push = _drawer_to("left", 0.0)
    return [grasp, [push], [Step("open", "left")]]


def _block_handover():
    offer, take = _handover("right", "left", RECT)
    return [_pick("right", RECT, key_point="end_right") + [offer],
            take,
            [Step("open", "right"), _home("right")],
            _place_on("left", RECT, C0) + [_home("left")]]


def _handover_storage():
    grasp, pull = _drawer_to("left", 0.9)
    regrasp, push = _drawer_to("left", 0.0)
    offer, take = _handover("right", "left", RECT)
    return [grasp + [pull],
            [Step("open", "left"), _home("left")],
            _pick("right", RECT, key_point="end_right") + [offer],
            take,
            [Step("open", "right"), _home("right")],
            _place_on("left", RECT, DRAWER) + [_home("left")],
            regrasp + [push],
            [Step("open", "left"), _home("left")]]


STACK_BASE = (-0.30, 0.04, 0.02)
PYRAMID_BASE = (-0.30, 0.06, 0.02)

_EASY_BOX = (-0.005, 0.005, -0.02, 0.02)
_EASY_YAW = (-15.0, 15.0)


def _cube(i, x, y):
    return ObjectSpec("cube", i, ("cube", i), (x, y))


TASKS: dict[str, TaskSpec] = {t.name: t for t in (
    TaskSpec("block_stack_single", "Stack cube1 on top of cube0.",
             (_cube(0, -0.30, 0.02), _cube(1, -0.32, -0.18)), _EASY_BOX, _EASY_YAW,
             note="The right hand picks cube1 and places it on cube0.", plan_blocks=_single),
    TaskSpec("blocks_stack_easy",
             "Two cubes, cube0 and cube1, are on the table. The left and right hands pinch cube0 and cube1 "
             "at the same time. The left hand sets cube0 down at the target position, then the right hand "
             "puts cube1 on top of cube0.",
             (_cube(0, -0.32, 0.22), _cube(1, -0.32, -0.20)), _EASY_BOX, _EASY_YAW,
             note=f"Target position for cube0: {list(STACK_BASE)}.", plan_blocks=_stack_easy),
    TaskSpec("blocks_stack_hard",
             "Three cubes, cube0, cube1 and cube2, are on the table. The left hand pinches cube0 while the "
             "right hand pinches cube1. The left hand sets cube0 down at the target position and the right "
             "hand stacks cube1 on it. The right hand then picks up cube2 and stacks it on cube1.",
             (_cube(0, -0.32, 0.22), _cube(1, -0.32, -0.20), _cube(2, -0.38, -0.30)), _EASY_BOX, _EASY_YAW,
             note=f"Target position for cube0: {list(STACK_BASE)}.", plan_blocks=_stack_hard),
    TaskSpec("pyramid_stack",
             "Three cubes, cube0, cube1 and cube2, are on the table. The hands pinch cube0 and cube1 at the "
             "same time. The left hand sets cube0 at the target position and the right hand sets cube1 to "
             "the right of cube0. The right hand then picks cube2 and sets it on top, centred between them.",
             (_cube(0, -0.30, 0.24), _cube(1, -0.30, -0.20), _cube(2, -0.36, -0.30)),
             (-0.02, 0.02, -0.04, 0.04), (-30.0, 30.0),
             predicate="pyramid_stack", note=f"Target position for cube0: {list(PYRAMID_BASE)}.",
             plan_blocks=_pyramid),
    TaskSpec("open_drawer",
             "A drawer is on the table. The left hand grasps the drawer handle, pulls the drawer out to "
             "openness 1 and lets go.",
             (ObjectSpec("drawer", 0, ("drawer", 0), (-0.24, 0.145), openness=0.0),),
             (-0.05, 0.05, -0.18, 0.18), (-25.0, 25.0), plan_blocks=_open_drawer),
    TaskSpec("close_drawer",
             "An open drawer is on the table. The left hand grasps the drawer handle, pushes the drawer back "
             "to openness 0 and lets go.",
             (ObjectSpec("drawer", 0, ("drawer", 0), (-0.24, 0.145), openness=1.0),),
             (-0.05, 0.05, -0.18, 0.18), (-25.0, 25.0), plan_blocks=_close_drawer),
    TaskSpec("block_handover",
             "A rectangular block lies on the right side of the table. The right hand pinches it and offers "
             "it to the left hand, which takes it and puts it on top of the target cube.",
             (ObjectSpec("rect_cube", 0, ("rect_cube", 0), (-0.30, -0.20)), _cube(0, -0.30, 0.22)),
             (-0.005, 0.005, -0.005, 0.005), (0.0, 0.0), plan_blocks=_block_handover),
    TaskSpec("handover_and_storage",
             "A drawer and a rectangular block are on the table. The left hand pulls the drawer out to "
             "openness 0.9 and lets go. The right hand picks the block and hands it to the left hand, which "
             "puts it in the drawer. The left hand then pushes the drawer shut and lets go.",
             (ObjectSpec("drawer", 0, ("drawer", 0), (-0.24, 0.20), openness=0.0),
              ObjectSpec("rect_cube", 0, ("rect_cube", 0), (-0.30, -0.20))),
             (-0.01, 0.01, 0.0, 0.0), (0.0, 0.0), plan_blocks=_handover_storage),
)}


def get_task(name: str) -> TaskSpec:
    if name not in TASKS:
        raise KeyError(f"unknown task {name!r}; known: {', '.join(sorted(TASKS))}")
    return TASKS[name]
