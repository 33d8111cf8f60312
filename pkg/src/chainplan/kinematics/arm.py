"""Dual 7-DoF arm model with dexterous-hand keypoints."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from ..geometry import Pose
from .backend import kernels

SIDES = ("left", "right")
ARM_DOF = 7
HAND_DOF = 6


def _translation(v) -> np.ndarray:
    T = np.eye(4)
    T[:3, 3] = v
    return T


@dataclass(frozen=True)
class HandModel:
    points: dict[str, np.ndarray]
    axes: dict[str, np.ndarray]
    finger_joints: tuple[str, ...]
    synergy: dict[str, np.ndarray]
    max_angle: np.ndarray

    def point(self, name: str, side: str) -> np.ndarray:
        """Hand-frame point for names like ``grasp_point_base_left_hand``."""
        if name == f"base_{side}_hand":
            return self.points["base"]
        suffix = f"_base_{side}_hand"
        key = name[: -len(suffix)] if name.endswith(suffix) else None
        if key in self.points and key != "base":
            return self.points[key]
        raise KeyError(f"unknown hand point {name!r} for {side} hand")

    def axis(self, name: str, side: str) -> np.ndarray:
        prefix = f"{side}_"
        if not name.startswith(prefix):
            raise KeyError(f"axis {name!r} does not belong to the {side} hand")
        key = name[len(prefix):]
        if key not in self.axes:
            raise KeyError(f"unknown hand axis {name!r}")
        val = self.axes[key]
        return val[side] if isinstance(val, dict) else val

    def point_names(self, side: str) -> list[str]:
        return [f"base_{side}_hand"] + [f"{k}_base_{side}_hand" for k in self.points if k != "base"]

    def axis_names(self, side: str) -> list[str]:
        return [f"{side}_{k}" for k in self.axes]

    def finger_angles(self, closure: float, mode: str = "grasp") -> np.ndarray:
        """Fixed synergy from a scalar closure in [0, 1] to finger joint angles."""
        closure = float(np.clip(closure, 0.0, 1.0))
        return closure * self.synergy.get(mode, self.synergy["grasp"]) * self.max_angle


@dataclass(frozen=True)
class Arm:
    side: str
    base: np.ndarray  # world from shoulder, 4x4
    offsets: np.ndarray  # (n, 4, 4)
    axes: np.ndarray  # (n, 3)
    ee: np.ndarray  # 4x4
    lower: np.ndarray
    upper: np.ndarray
    nominal: np.ndarray
    joint_names: tuple[str, ...]
    sph_link: np.ndarray
    sph_local: np.ndarray
    sph_r: np.ndarray

    @property
    def dof(self) -> int:
        return len(self.axes)

    def chain(self):
        return self.base, self.offsets, self.axes, self.ee

    def fk_matrix(self, theta) -> np.ndarray:
        return kernels.fk(*self.chain(), np.asarray(theta, dtype=float))

    def fk(self, theta) -> Pose:
        return Pose.from_matrix(self.fk_matrix(theta))

    def frames(self, theta) -> np.ndarray:
        return kernels.fk_frames(*self.chain(), np.asarray(theta, dtype=float))

    def spheres(self, theta) -> tuple[np.ndarray, np.ndarray]:
        F = self.frames(theta)
        R = F[self.sph_link, :3, :3]
        t = F[self.sph_link, :3, 3]
        centers = np.einsum("kij,kj->ki", R, self.sph_local) + t
        return centers, self.sph_r

    def within_limits(self, theta, tol: float = 1e-9) -> bool:
        theta = np.asarray(theta)
        return bool(np.all(theta >= self.lower - tol) and np.all(theta <= self.upper + tol))

    def rebased(self, T: np.ndarray) -> "Arm":
        return replace(self, base=T @ self.base)


@dataclass(frozen=True)
class Robot:
    base_pose: Pose
    arms: dict[str, Arm]
    hand: HandModel
    name: str = "robot"
    meta: dict = field(default_factory=dict)

    def arm(self, side: str) -> Arm:
        if side not in self.arms:
            raise KeyError(f"no arm {side!r}")
        return self.arms[side]

    def rebased(self, T: np.ndarray) -> "Robot":
        """Robot with every frame premultiplied by the world transform ``T``."""
        return replace(
            self,
            base_pose=Pose.from_matrix(T @ self.base_pose.matrix()),
            arms={s: a.rebased(T) for s, a in self.arms.items()},
        )


def load_robot(path=None) -> Robot:
    if path is None:
        text = resources.files("chainplan.data").joinpath("robot.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    cfg = json.loads(text)
    base_pose = Pose.from_list(cfg["base_pose"])
    joints = cfg["joints"]
    offsets = np.stack([_translation(j["offset"]) for j in joints])
    axes = np.array([j["axis"] for j in joints], dtype=float)
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    lower = np.array([j["limits"][0] for j in joints], dtype=float)
    upper = np.array([j["limits"][1] for j in joints], dtype=float)
    spheres = np.array(cfg["link_spheres"], dtype=float)
    arms = {}
    for side in SIDES:
        base = base_pose.matrix() @ _translation(cfg["shoulders"][side])
        arms[side] = Arm(
            side=side,
            base=base,
            offsets=offsets,
            axes=axes,
            ee=_translation(cfg["ee_offset"]),
            lower=lower,
            upper=upper,
            nominal=np.array(cfg["nominal"], dtype=float),
            joint_names=tuple(f"{side}_{j['name']}" for j in joints),
            sph_link=spheres[:, 0].astype(np.intc),
            sph_local=spheres[:, 1:4].copy(),
            sph_r=spheres[:, 4].copy(),
        )
    h = cfg["hand"]
    axes_h = {}
    for k, v in h["axes"].items():
        axes_h[k] = {s: np.array(x, dtype=float) for s, x in v.items()} if isinstance(v, dict) else np.array(v, dtype=float)
    hand = HandModel(
        points={k: np.array(v, dtype=float) for k, v in h["points"].items()},
        axes=axes_h,
        finger_joints=tuple(h["finger_joints"]),
        synergy={k: np.array(v, dtype=float) for k, v in h["synergy"].items() if k != "max_angle"},
        max_angle=np.array(h["synergy"]["max_angle"], dtype=float),
    )
    return Robot(base_pose=base_pose, arms=arms, hand=hand, name=cfg.get("name", "robot"))
