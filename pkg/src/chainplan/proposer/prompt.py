"""Prompt templates and the serialization of scene facts into them."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ..scene.state import key_str
from .dsl import render_plan

PLACEHOLDERS = ("ASSETS_ATTRIBUTES", "INITIAL_ASSET_STATE", "CURRENT_ASSET_STATE", "EXECUTED_CODE",
                "PROHIBITED_ACTION", "ASSETS_STATUS", "ROBOT_END_EFFECTOR", "TASK_DESCRIPTION", "TASK_NOTE",
                "TASKNAME", "ASSETS_INFO")
TEMPLATE_FILES = {
    "scene": "scene_generation.txt",
    "direct": "direct_planning.txt",
    "mcts": "mcts_planning.txt",
}
_TOKEN = re.compile(r"\b(" + "|".join(PLACEHOLDERS) + r")\b")
_INCLUDE = "API_REFERENCE"


class PromptError(KeyError):
    def __init__(self, placeholder: str, template: str):
        super().__init__(f"template {template!r} needs a value for {placeholder}")
        self.placeholder = placeholder


def load_template(template: str) -> str:
    if template not in TEMPLATE_FILES:
        raise KeyError(f"unknown template {template!r}")
    root = resources.files("chainplan.proposer") / "templates"
    text = (root / TEMPLATE_FILES[template]).read_text()
    if _INCLUDE in text:
        text = text.replace(_INCLUDE, (root / "api_reference.txt").read_text().rstrip("\n"))
    return text


def placeholders_in(text: str) -> list[str]:
    return sorted(set(_TOKEN.findall(text)))


@dataclass
class PromptContext:
    template: str
    subs: dict = field(default_factory=dict)


def build_prompt(ctx: PromptContext) -> str:
    """Template text with every placeholder replaced in a single pass."""
    text = load_template(ctx.template)
    for name in placeholders_in(text):
        if name not in ctx.subs:
            raise PromptError(name, ctx.template)
    return _TOKEN.sub(lambda m: str(ctx.subs[m.group(1)]), text)


# ---------------------------------------------------------------- serialization

def _fmt(values) -> str:
    return "[" + ", ".join(f"{float(v):.4f}" for v in values) + "]"


def _canonical_pose(scene, pose) -> list[float]:
    return (scene.frame.inverse() * pose).to_list()


def asset_states(scene, state) -> str:
    lines = []
    for key in sorted(state.object_poses):
        line = f"{key_str(key)}: {_fmt(_canonical_pose(scene, state.object_poses[key]))}"
        if key in state.openness:
            line += f", openness {state.openness[key]:.3f}"
        holder = state.holder_of(key)
        if holder is not None:
            line += f", held by the {holder} hand"
        lines.append(line)
    return "\n".join(lines)


def hand_states(scene, state) -> str:
    lines = []
    for side in sorted(state.hand_modes):
        pose = _canonical_pose(scene, scene.hand_pose(state, side))
        att = state.attachments.get(side)
        held = "nothing" if att is None else key_str(att.obj)
        lines.append(f"{side} hand: pose {_fmt(pose)}, fingers {state.hand_modes[side].mode}, holding {held}")
    return "\n".join(lines)


def asset_attributes(scene) -> str:
    blocks = []
    for key in sorted(scene.assets):
        spec = scene.assets[key]
        inh = spec.annotations.inherent
        ops = sorted({f"{e.kind}@{e.point}" for e in spec.annotations.ops})
        blocks.append("\n".join([
            f"{key_str(key)} (type {spec.type_name}, id {key[1]}): {spec.description}",
            "  key points: " + ", ".join(sorted(inh.key_points)),
            "  axes: " + ", ".join(sorted(inh.key_axes)),
            "  operations: " + ", ".join(ops),
        ]))
    return "\n".join(blocks)


def assets_info(library) -> str:
    lines = []
    for tname, tid in library.available():
        spec = library.get(tname, tid)
        lo, hi = np.asarray(spec.bbox[0]), np.asarray(spec.bbox[1])
        lines.append(f"{tname} {tid}: {spec.description}; size {_fmt(hi - lo)}")
    return "\n".join(lines)


def end_effectors(scene) -> str:
    hand = scene.robot.hand
    lines = []
    for side in ("left", "right"):
        pose = _canonical_pose(scene, scene.robot.arm(side).fk(scene.robot.arm(side).nominal))
        lines.append(f"{side} hand frame {side[0]}_hand_base_link, start pose {_fmt(pose)}")
        lines.append("  points: " + ", ".join(hand.point_names(side)))
        lines.append("  axes: " + ", ".join(hand.axis_names(side)))
    return "\n".join(lines)


def prohibited_text(signatures) -> str:
    out = []
    for sig in signatures:
        parts = []
        for hand, kind, obj, cell in sig:
            where = "" if cell is None else f" near cell {list(cell)}"
            what = "" if obj is None else f" {obj}"
            parts.append(f"{hand} {kind}{what}{where}")
        out.append("- " + "; then ".join(parts))
    return "\n".join(out)


def context_for(template: str, task, scene, initial_state=None, state=None, executed=(), prohibited=(),
                library=None) -> PromptContext:
    """Fill every placeholder the chosen template may use."""
    state = initial_state if state is None else state
    subs = {"TASK_DESCRIPTION": task.description, "TASK_NOTE": task.note or "none", "TASKNAME": task.name}
    if template == "scene":
        subs["ASSETS_INFO"] = assets_info(library)
        return PromptContext(template, subs)
    subs["ASSETS_ATTRIBUTES"] = asset_attributes(scene)
    subs["ROBOT_END_EFFECTOR"] = end_effectors(scene)
    subs["ASSETS_STATUS"] = asset_states(scene, state)
    subs["INITIAL_ASSET_STATE"] = asset_states(scene, initial_state)
    subs["CURRENT_ASSET_STATE"] = asset_states(scene, state) + "\n" + hand_states(scene, state)
    # executed: step groups in the order they ran, one fenced block each
    subs["EXECUTED_CODE"] = render_plan([list(g) for g in executed]) if executed else ""
    subs["PROHIBITED_ACTION"] = prohibited_text(prohibited)
    return PromptContext(template, subs)

