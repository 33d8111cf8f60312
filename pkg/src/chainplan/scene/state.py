"""Mutable kinematic world state and immutable snapshots of it."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import Pose

ObjKey = tuple  # (type_name, obj_id)
HAND_MODES = ("idle", "pre_grasp", "pre_pinch", "grasping", "pinching")


def obj_key(type_name: str, obj_id: int) -> ObjKey:
    return (str(type_name), int(obj_id))


def key_str(key: ObjKey) -> str:
    return f"{key[0]}{key[1]}"


@dataclass(frozen=True)
class HandMode:
    mode: str = "idle"
    obj: ObjKey | None = None

    def __post_init__(self):
        if self.mode not in HAND_MODES:
            raise ValueError(f"unknown hand mode {self.mode!r}")


@dataclass(frozen=True)
class Attachment:
    """Rigid coupling of an object to a hand.

    For rigid objects ``rel`` is the object pose in the hand frame.  For an
    articulated handle (``link == "link"``) the object base stays put and the
    hand drives the joint instead; ``rel`` then holds the hand-frame offset of
    the grasped point.
    """

    obj: ObjKey
    rel: Pose
    link: str = "base"
    op: str = "grasp"


def _frozen_angles(theta) -> np.ndarray:
    a = np.array(theta, dtype=float)
    a.setflags(write=False)
    return a


@dataclass
class WorldState:
    object_poses: dict = field(default_factory=dict)
    openness: dict = field(default_factory=dict)
    hand_modes: dict = field(default_factory=dict)
    attachments: dict = field(default_factory=dict)
    ignore: frozenset = frozenset()
    arm_angles: dict = field(default_factory=dict)
    # objects resting on an articulated link: key -> (articulated key, pose in link frame)
    supports: dict = field(default_factory=dict)

    def copy(self) -> "WorldState":
        # every value is immutable, so shallow dict copies are independent
        return WorldState(
            object_poses=dict(self.object_poses),
            openness=dict(self.openness),
            hand_modes=dict(self.hand_modes),
            attachments=dict(self.attachments),
            ignore=frozenset(self.ignore),
            arm_angles=dict(self.arm_angles),
            supports=dict(self.supports),
        )

    def set_angles(self, side: str, theta) -> None:
        self.arm_angles[side] = _frozen_angles(theta)

    def set_openness(self, key: ObjKey, value: float) -> None:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"openness {value} outside [0, 1]")
        self.openness[key] = float(value)

    def holder_of(self, key: ObjKey) -> str | None:
        for side, att in self.attachments.items():
            if att is not None and att.obj == key:
                return side
        return None

    def attached(self, side: str) -> Attachment | None:
        return self.attachments.get(side)

    def equals(self, other: "WorldState") -> bool:
        """Bit-exact field equality."""
        if self.object_poses.keys() != other.object_poses.keys():
            return False
        if any(not self.object_poses[k].equals(other.object_poses[k]) for k in self.object_poses):
            return False
        if self.openness != other.openness or self.hand_modes != other.hand_modes:
            return False
        if self.ignore != other.ignore:
            return False
        if self.arm_angles.keys() != other.arm_angles.keys():
            return False
        if any(not np.array_equal(self.arm_angles[s], other.arm_angles[s]) for s in self.arm_angles):
            return False
        if not _att_equal(self.attachments, other.attachments):
            return False
        if self.supports.keys() != other.supports.keys():
            return False
        for k, (art, rel) in self.supports.items():
            art2, rel2 = other.supports[k]
            if art != art2 or not rel.equals(rel2):
                return False
        return True

    def to_json(self) -> dict:
        return {
            "objects": {f"{k[0]}:{k[1]}": p.to_list() for k, p in sorted(self.object_poses.items())},
            "openness": {f"{k[0]}:{k[1]}": v for k, v in sorted(self.openness.items())},
            "hand_modes": {s: [m.mode, list(m.obj) if m.obj else None] for s, m in sorted(self.hand_modes.items())},
            "attachments": {
                s: (None if a is None else {"obj": list(a.obj), "rel": a.rel.to_list(), "link": a.link, "op": a.op})
                for s, a in sorted(self.attachments.items())
            },
            "ignore": sorted(f"{k[0]}:{k[1]}" for k in self.ignore),
            "arm_angles": {s: [float(x) for x in v] for s, v in sorted(self.arm_angles.items())},
        }


def _att_equal(a: dict, b: dict) -> bool:
    if a.keys() != b.keys():
        return False
    for s in a:
        x, y = a[s], b[s]
        if (x is None) != (y is None):
            return False
        if x is not None and (x.obj != y.obj or x.link != y.link or x.op != y.op or not x.rel.equals(y.rel)):
            return False
    return True


@dataclass(frozen=True)
class Snapshot:
    """Immutable captured world state; safe to share between searches."""

    _state: WorldState

    def restore(self) -> WorldState:
        return self._state.copy()


def snapshot(state: WorldState) -> Snapshot:
    return Snapshot(state.copy())


def restore(snap: Snapshot) -> WorldState:
    return snap.restore()
