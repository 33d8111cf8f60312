"""Static scene description (robot, table, assets) and world-frame queries."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..geometry import Pose, unit
from ..kinematics.arm import SIDES, Robot, load_robot
from .assets import AssetLibrary, AssetSpec
from .state import Attachment, HandMode, ObjKey, WorldState, obj_key

DEFAULT_TABLE_BOUNDS = (-0.42, -0.19, -1.1, 1.16)
SETTLE_TOL = 1e-3


class PlacementError(ValueError):
    pass


@dataclass(frozen=True)
class StaticBox:
    pose: Pose
    half: np.ndarray


@dataclass
class Scene:
    robot: Robot
    assets: dict  # ObjKey -> AssetSpec
    table_pose: Pose = field(default_factory=Pose.identity)
    table_bounds: tuple = DEFAULT_TABLE_BOUNDS
    static_boxes: tuple = ()
    # maps canonical (tabletop) coordinates used by plans into this scene's world
    frame: Pose = field(default_factory=Pose.identity)
    name: str = "scene"

    # ------------------------------------------------------------ frames
    @property
    def up(self) -> np.ndarray:
        return self.table_pose.R[:, 2]

    def table_plane(self) -> np.ndarray:
        n = self.up
        return np.array([n[0], n[1], n[2], float(n @ self.table_pose.p)])

    def canonical_point(self, p) -> np.ndarray:
        return self.frame.transform_point(p)

    def canonical_axis(self, v) -> np.ndarray:
        return self.frame.rotate(v)

    def asset(self, key: ObjKey) -> AssetSpec:
        if key not in self.assets:
            raise KeyError(f"no object {key[0]}{key[1]} in scene")
        return self.assets[key]

    def hand_pose(self, state: WorldState, side: str) -> Pose:
        return self.robot.arm(side).fk(state.arm_angles[side])

    def link_pose(self, state: WorldState, key: ObjKey, link: str = "base", openness: float | None = None) -> Pose:
        base = state.object_poses[key]
        if link == "base":
            return base
        spec = self.asset(key)
        if openness is None:
            openness = state.openness.get(key, 0.0)
        return Pose.from_matrix(base.matrix() @ spec.link_matrix(link, openness))

    # ------------------------------------------------------------ queries
    def hand_point_world(self, state: WorldState, name: str, side: str | None = None) -> np.ndarray:
        side = side or _side_from_name(name)
        local = self.robot.hand.point(name, side)
        return self.hand_pose(state, side).transform_point(local)

    def key_point_world(self, state: WorldState, point_name: str | None = None, obj: ObjKey | None = None,
                        related_point=None, openness: float | None = None) -> np.ndarray:
        """World position of a hand point, a named asset point, or an offset in an object's frame."""
        if obj is None:
            if point_name is None:
                raise ValueError("need a point name or an object")
            return self.hand_point_world(state, point_name)
        spec = self.asset(obj)
        if openness is not None and not spec.articulated:
            raise ValueError(f"openness given for rigid asset {spec.type_name}")
        if openness is not None and not 0.0 <= openness <= 1.0:
            raise ValueError("openness outside [0, 1]")
        base = state.object_poses[obj]
        if point_name is not None:
            op = state.openness.get(obj, 0.0) if openness is None else openness
            local = spec.local_point(point_name, op)
            return base.transform_point(local)
        if related_point is None:
            related_point = np.zeros(3)
        return base.transform_point(related_point)

    def key_axis_world(self, state: WorldState, axis, obj: ObjKey | None = None) -> np.ndarray:
        if not isinstance(axis, str):
            return unit(axis)
        if obj is None:
            side = _side_from_name(axis)
            local = self.robot.hand.axis(axis, side)
            return unit(self.hand_pose(state, side).rotate(local))
        spec = self.asset(obj)
        axes = spec.annotations.inherent.key_axes
        if axis not in axes:
            raise KeyError(f"{spec.type_name} has no axis {axis!r}")
        return unit(state.object_poses[obj].rotate(axes[axis]))

    # ------------------------------------------------------------ geometry
    def object_boxes(self, state: WorldState, key: ObjKey, openness: float | None = None):
        """World-frame collision boxes of one object as (4x4 pose, half, link)."""
        spec = self.asset(key)
        base = state.object_poses[key].matrix()
        op = state.openness.get(key, 0.0) if openness is None else openness
        link_T = {"base": np.eye(4)}
        if spec.articulated:
            link_T["link"] = spec.link_matrix("link", op)
        out = []
        for b in spec.collision:
            T = base @ link_T[b.link]
            B = np.eye(4)
            B[:3, 3] = b.center
            out.append((T @ B, b.half, b.link))
        return out

    def _table_aabb(self, T: np.ndarray, half: np.ndarray):
        """Axis-aligned bounds in the table frame of a world box."""
        M = self.table_pose.inverse().matrix() @ T
        ext = np.abs(M[:3, :3]) @ half
        return M[:3, 3] - ext, M[:3, 3] + ext

    def in_table_bounds(self, p_world) -> bool:
        local = self.table_pose.inverse().transform_point(p_world)
        x0, x1, y0, y1 = self.table_bounds
        return x0 <= local[0] <= x1 and y0 <= local[1] <= y1

    def settle(self, state: WorldState, key: ObjKey) -> None:
        """Drop an object along the table normal onto the highest support below it."""
        boxes = self.object_boxes(state, key)
        lo = np.full(3, np.inf)
        hi = np.full(3, -np.inf)
        for T, half, _ in boxes:
            a, b = self._table_aabb(T, half)
            lo = np.minimum(lo, a)
            hi = np.maximum(hi, b)
        bottom = lo[2]
        support, support_owner = 0.0, None
        for other, pose in state.object_poses.items():
            if other == key or state.holder_of(other) is not None:
                continue
            if state.supports.get(other, (None,))[0] == key:
                continue
            for T, half, link in self.object_boxes(state, other):
                a, b = self._table_aabb(T, half)
                overlap = min(hi[0], b[0]) - max(lo[0], a[0]) > 1e-9 and min(hi[1], b[1]) - max(lo[1], a[1]) > 1e-9
                if overlap and b[2] <= bottom + SETTLE_TOL and b[2] > support:
                    support = b[2]
                    support_owner = (other, link)
        drop = bottom - support
        pose = state.object_poses[key]
        state.object_poses[key] = Pose(pose.p - drop * self.up, pose.q)
        state.supports.pop(key, None)
        if support_owner is not None:
            owner, link = support_owner
            if link != "base" or owner in state.supports:
                self._record_support(state, key, owner if link != "base" else state.supports[owner][0])

    def _record_support(self, state: WorldState, key: ObjKey, art: ObjKey) -> None:
        link = self.link_pose(state, art, "link")
        state.supports[key] = (art, link.inverse() * state.object_poses[key])

    def update_supported(self, state: WorldState, art: ObjKey) -> None:
        """Carry objects resting on an articulated link after its openness changed."""
        link = self.link_pose(state, art, "link")
        for k, (owner, rel) in list(state.supports.items()):
            if owner == art:
                state.object_poses[k] = link * rel

    def update_attached(self, state: WorldState, side: str) -> None:
        att = state.attachments.get(side)
        if att is None or att.link != "base":
            return
        state.object_poses[att.obj] = self.hand_pose(state, side) * att.rel

    # ------------------------------------------------------------ transforms
    def rebased(self, T: Pose) -> "Scene":
        M = T.matrix()
        return replace(
            self,
            robot=self.robot.rebased(M),
            table_pose=T * self.table_pose,
            static_boxes=tuple(StaticBox(T * b.pose, b.half) for b in self.static_boxes),
            frame=T * self.frame,
        )


def _side_from_name(name: str) -> str:
    for side in SIDES:
        if f"_{side}_" in f"_{name}_":
            return side
    raise KeyError(f"cannot tell which hand {name!r} refers to")


# ---------------------------------------------------------------- loading

def initial_state(scene: Scene) -> WorldState:
    state = WorldState()
    for side, arm in scene.robot.arms.items():
        state.set_angles(side, arm.nominal)
        state.hand_modes[side] = HandMode()
        state.attachments[side] = None
    return state


def load_scene(config: dict | str | Path, library: AssetLibrary | None = None,
               robot: Robot | None = None) -> tuple[Scene, WorldState]:
    """Build a scene and its initial world state from a JSON config (dict or path)."""
    if not isinstance(config, dict):
        with open(config) as fh:
            config = json.load(fh)
    library = library or AssetLibrary()
    robot = robot or load_robot()
    table = config.get("table", {})
    table_pose = Pose.from_list(table["pose"]) if "pose" in table else Pose.identity()
    bounds = tuple(table.get("bounds", DEFAULT_TABLE_BOUNDS))
    frame = Pose.from_list(config["frame"]) if "frame" in config else Pose.identity()
    statics = tuple(StaticBox(Pose.from_list(b["pose"]), np.array(b["half"], dtype=float))
                    for b in config.get("static_boxes", []))
    assets = {}
    poses = {}
    openness = {}
    for obj in config.get("objects", []):
        key = obj_key(obj["name"], obj.get("obj_id", 0))
        if key in assets:
            raise PlacementError(f"duplicate object {key[0]}{key[1]}")
        tname, tid = obj.get("asset", [obj["name"], obj.get("obj_id", 0)])
        spec = library.get(tname, tid)
        pose = Pose.from_list(obj["pose"])
        assets[key] = spec
        poses[key] = pose
        if spec.articulated:
            openness[key] = float(obj.get("openness", 0.0))
        elif "openness" in obj:
            raise PlacementError(f"openness given for rigid object {key[0]}{key[1]}")
    scene = Scene(robot=robot, assets=assets, table_pose=table_pose, table_bounds=bounds,
                  static_boxes=statics, frame=frame, name=config.get("name", "scene"))
    state = initial_state(scene)
    for key, pose in poses.items():
        if not scene.in_table_bounds(pose.p):
            raise PlacementError(f"object {key[0]}{key[1]} at {pose.p.tolist()} is outside the table surface")
        state.object_poses[key] = pose
    for key, v in openness.items():
        state.set_openness(key, v)
    # settle lowest first so initial stacks rest on each other
    up = scene.up
    for key in sorted(poses, key=lambda k: (float(poses[k].p @ up), k)):
        scene.settle(state, key)
    return scene, state


def scene_to_config(scene: Scene, state: WorldState) -> dict:
    objs = []
    for key, pose in state.object_poses.items():
        spec = scene.asset(key)
        entry = {"name": key[0], "obj_id": key[1], "asset": [spec.type_name, spec.type_id], "pose": pose.to_list()}
        if spec.articulated:
            entry["openness"] = state.openness.get(key, 0.0)
        objs.append(entry)
    return {
        "name": scene.name,
        "table": {"pose": scene.table_pose.to_list(), "bounds": list(scene.table_bounds)},
        "frame": scene.frame.to_list(),
        "static_boxes": [{"pose": b.pose.to_list(), "half": list(map(float, b.half))} for b in scene.static_boxes],
        "objects": objs,
    }


def attachment_for(scene: Scene, state: WorldState, side: str, key: ObjKey, op: str, link: str) -> Attachment:
    hand = scene.hand_pose(state, side)
    if link == "base":
        return Attachment(key, hand.inverse() * state.object_poses[key], "base", op)
    return Attachment(key, Pose.identity(), link, op)
