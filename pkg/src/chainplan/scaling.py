"""Rigidly rebase a tabletop scene into another reference frame (e.g. a room)."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .geometry import Pose
from .scene.scene import StaticBox

ORTHO_TOL = 1e-9


class FrameError(ValueError):
    pass


@dataclass(frozen=True)
class ReferenceFrame:
    """Anchor point at a table edge plus its axes (x toward the robot's front, z up)."""

    origin: np.ndarray
    axes: np.ndarray  # rows are the x, y, z unit axes in world coordinates

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=float).reshape(3)
        A = np.asarray(self.axes, dtype=float).reshape(3, 3)
        if not np.allclose(A @ A.T, np.eye(3), atol=ORTHO_TOL):
            raise FrameError("frame axes are not orthonormal")
        if np.linalg.det(A) < 0:
            raise FrameError("frame axes are left-handed")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "axes", A)

    def pose(self) -> Pose:
        # columns of the rotation are the axes expressed in world coordinates
        return Pose.from_rotation(self.origin, self.axes.T)

    @classmethod
    def identity(cls) -> "ReferenceFrame":
        return cls(np.zeros(3), np.eye(3))

    @classmethod
    def from_yaw(cls, origin, yaw: float) -> "ReferenceFrame":
        c, s = np.cos(yaw), np.sin(yaw)
        return cls(origin, np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]]))


# canonical tabletop scenes are authored in this frame
TABLE_FRAME = ReferenceFrame.identity()


def derive_transform(src: ReferenceFrame, dst: ReferenceFrame) -> Pose:
    """Rigid map taking a point's src-frame coordinates to the same dst-frame coordinates."""
    return dst.pose() * src.pose().inverse()


def _check_rigid(T: Pose) -> None:
    R = T.R
    if not np.allclose(R @ R.T, np.eye(3), atol=ORTHO_TOL) or np.linalg.det(R) < 0:
        raise FrameError("transform is not a rigid motion")


def rebase_scene(scene, state, T: Pose, extra_boxes=()):
    """Scene and world state moved by ``T``; openness, hand modes and joints are unchanged.

    Attachments and drawer contents are stored relative to a hand or link, so
    they move along without change.
    """
    _check_rigid(T)
    new_scene = scene.rebased(T)
    if extra_boxes:
        new_scene = replace(new_scene, static_boxes=new_scene.static_boxes + tuple(extra_boxes))
    new_state = state.copy()
    new_state.object_poses = {k: T * p for k, p in state.object_poses.items()}
    return new_scene, new_state


@dataclass(frozen=True)
class RoomFrame:
    frame: ReferenceFrame
    boxes: tuple = ()


def load_room_frame(path_or_dict) -> RoomFrame:
    """Room config: ``{"origin": [3], "axes": [[3],[3],[3]], "static_boxes": [{"pose": [7], "half": [3]}]}``."""
    if isinstance(path_or_dict, dict):
        cfg = path_or_dict
    else:
        cfg = json.loads(Path(path_or_dict).read_text())
    try:
        frame = ReferenceFrame(np.array(cfg["origin"], dtype=float), np.array(cfg["axes"], dtype=float))
        boxes = tuple(StaticBox(Pose.from_list(b["pose"]), np.array(b["half"], dtype=float))
                      for b in cfg.get("static_boxes", []))
    except (KeyError, TypeError, ValueError) as e:
        raise FrameError(f"bad room frame config: {e}") from None
    return RoomFrame(frame, boxes)


def room_frame_to_dict(room: RoomFrame) -> dict:
    return {"origin": room.frame.origin.tolist(), "axes": room.frame.axes.tolist(),
            "static_boxes": [{"pose": b.pose.to_list(), "half": b.half.tolist()} for b in room.boxes]}


def random_room_frame(rng: np.random.Generator, extent: float = 5.0) -> ReferenceFrame:
    """Anchor anywhere in a room, any heading about the vertical, table top up to 0.3 m higher."""
    origin = np.array([rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(0.0, 0.3)])
    return ReferenceFrame.from_yaw(origin, rng.uniform(-np.pi, np.pi))


def residual_gap(log_a, log_b) -> float:
    """Largest elementwise difference between two per-step residual logs; inf if shapes differ."""
    if len(log_a) != len(log_b):
        return float("inf")
    gap = 0.0
    for ra, rb in zip(log_a, log_b):
        a, b = np.ravel(np.asarray(ra, dtype=float)), np.ravel(np.asarray(rb, dtype=float))
        if a.shape != b.shape:
            return float("inf")
        if a.size:
            gap = max(gap, float(np.max(np.abs(a - b))))
    return gap
