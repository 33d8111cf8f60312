"""Per-tick trajectory frames and their line-delimited JSON files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..kinematics.arm import ARM_DOF, HAND_DOF, SIDES

ACTION_DIM = 2 * ARM_DOF + 2 * HAND_DOF
# finger closure and synergy used to render each hand mode
MODE_FINGERS = {
    "idle": (0.0, "grasp"),
    "pre_grasp": (0.3, "grasp"),
    "pre_pinch": (0.3, "pinch"),
    "grasping": (1.0, "grasp"),
    "pinching": (1.0, "pinch"),
}
FORMAT = "chainplan-traj"
VERSION = 1


def finger_angles(scene, mode: str) -> np.ndarray:
    closure, syn = MODE_FINGERS[mode]
    return scene.robot.hand.finger_angles(closure, syn)


def action_vector(scene, state, fingers: dict | None = None) -> np.ndarray:
    """Left arm, right arm, left fingers, right fingers."""
    fingers = fingers or {s: finger_angles(scene, state.hand_modes[s].mode) for s in SIDES}
    return np.concatenate([state.arm_angles["left"], state.arm_angles["right"], fingers["left"], fingers["right"]])


def _key(k) -> str:
    return f"{k[0]}:{k[1]}"


class Recorder:
    def __init__(self, scene, enabled: bool = True):
        self.scene = scene
        self.enabled = enabled
        self.frames: list[dict] = []

    def frame(self, state, step: int, fingers: dict | None = None) -> None:
        if not self.enabled:
            return
        a = action_vector(self.scene, state, fingers)
        self.frames.append({
            "t": len(self.frames),
            "step": step,
            "action": [float(x) for x in a],
            "modes": {s: state.hand_modes[s].mode for s in SIDES},
            "objects": {_key(k): p.to_list() for k, p in sorted(state.object_poses.items())},
            "openness": {_key(k): v for k, v in sorted(state.openness.items())},
        })


def dumps_line(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


def traj_text(header: dict, frames: list[dict]) -> str:
    head = {**header, "format": FORMAT, "version": VERSION, "action_dim": ACTION_DIM, "frames": len(frames)}
    lines = [dumps_line(head)] + [dumps_line(f) for f in frames]
    return "\n".join(lines) + "\n"


def write_traj(path, header: dict, frames: list[dict]) -> None:
    Path(path).write_text(traj_text(header, frames))


class TrajError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def validate_frame(f, index: int) -> None:
    if not isinstance(f, dict):
        raise TrajError(index + 2, "frame is not an object")
    for k in ("t", "step", "action", "modes", "objects", "openness"):
        if k not in f:
            raise TrajError(index + 2, f"missing field {k!r}")
    if f["t"] != index:
        raise TrajError(index + 2, f"tick {f['t']} out of order")
    a = f["action"]
    if not isinstance(a, list) or len(a) != ACTION_DIM or not all(isinstance(x, (int, float)) for x in a):
        raise TrajError(index + 2, f"action must have {ACTION_DIM} numbers")


def read_traj(path) -> tuple[dict, list[dict]]:
    """Parse and validate a trajectory file; raises TrajError naming the bad line."""
    text = Path(path).read_text()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise TrajError(1, "empty file")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise TrajError(1, f"bad header: {e}") from None
    if head.get("format") != FORMAT or head.get("action_dim") != ACTION_DIM:
        raise TrajError(1, "not a trajectory header")
    frames = []
    for i, line in enumerate(lines[1:]):
        try:
            f = json.loads(line)
        except json.JSONDecodeError as e:
            raise TrajError(i + 2, f"bad json: {e}") from None
        validate_frame(f, i)
        frames.append(f)
    if head.get("frames") != len(frames):
        raise TrajError(1, f"header announces {head.get('frames')} frames, found {len(frames)}")
    return head, frames
