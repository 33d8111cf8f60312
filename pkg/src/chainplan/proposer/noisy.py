"""Scripted plans with injected mistakes, for controlled search experiments."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..executor.steps import INIT_POSE, Generated, PointRef, Relation, Step, Target
from .base import Proposal, ProposalRequest
from .scripted import ScriptedProposer

CORRUPTIONS = ("swap", "jitter", "drop")
JITTER = 0.05


def _objects_in(step: Step) -> list:
    found = []
    if step.kind in ("grasp", "pinch") and step.obj is not None:
        found.append(step.obj)
    for t in step.targets:
        for spec in t.constraints:
            if isinstance(spec, Generated):
                found += [spec.obj] + ([spec.relative_obj] if spec.relative_obj else [])
            elif isinstance(spec, Relation):
                found += [r.obj for r in (spec.hand_point, spec.target_point) if isinstance(r, PointRef) and r.obj]
    return list(dict.fromkeys(found))


def _swap_in(step: Step, old, new) -> Step:
    def sw(k):
        return new if k == old else k

    def spec_sw(spec):
        if isinstance(spec, Generated):
            return replace(spec, obj=sw(spec.obj), relative_obj=sw(spec.relative_obj) if spec.relative_obj else None)
        if isinstance(spec, Relation):
            kw = {f: replace(getattr(spec, f), obj=sw(getattr(spec, f).obj))
                  for f in ("hand_point", "target_point") if isinstance(getattr(spec, f), PointRef)}
            return replace(spec, **kw)
        return spec
    targets = tuple(replace(t, constraints=tuple(spec_sw(c) for c in t.constraints)) for t in step.targets)
    obj = sw(step.obj) if step.kind in ("grasp", "pinch") else step.obj
    return replace(step, obj=obj, targets=targets)


def _jitterable(step: Step) -> bool:
    return step.kind == "move"


def _jitter(step: Step, delta: np.ndarray, scene) -> Step:
    """Shift the first target of a move by ``delta`` (canonical metres)."""
    t = step.targets[0]
    d = tuple(float(x) for x in delta)
    if t.pose is not None:
        if t.pose == INIT_POSE:
            arm = scene.robot.arm(t.hand)
            pose = (scene.frame.inverse() * arm.fk(arm.nominal)).to_list()
        else:
            pose = list(t.pose)
        pose[:3] = [p + e for p, e in zip(pose[:3], d)]
        return replace(step, targets=(replace(t, pose=tuple(pose)),) + step.targets[1:])
    specs = list(t.constraints)
    for i, spec in enumerate(specs):
        if isinstance(spec, Generated):
            base = spec.offset or (0.0, 0.0, 0.0)
            specs[i] = replace(spec, offset=tuple(b + e for b, e in zip(base, d)))
            break
        if isinstance(spec, Relation) and spec.kind == "point2point" and isinstance(spec.target_point, tuple):
            specs[i] = replace(spec, target_point=tuple(b + e for b, e in zip(spec.target_point, d)))
            break
    else:
        return step
    return replace(step, targets=(replace(t, constraints=tuple(specs)),) + step.targets[1:])


class NoisyProposer(ScriptedProposer):
    """Corrupts each step group independently with probability ``p``.

    A corrupted group gets one mistake: another object of the same type
    swapped in, a target shifted by up to 5 cm per axis, or a pre-operation
    dropped.  The random stream depends only on (seed, request.call).
    """

    name = "noisy"

    def __init__(self, p: float, seed: int = 0):
        if not 0.0 <= p <= 1.0:
            raise ValueError("corruption probability must lie in [0, 1]")
        self.p = float(p)
        self.seed = int(seed)

    def _kinds(self, group, scene) -> list[str]:
        kinds = []
        if any(self._swap_choices(s, scene) for s in group):
            kinds.append("swap")
        if any(_jitterable(s) for s in group):
            kinds.append("jitter")
        if any(s.kind in ("pre_grasp", "pre_pinch") for s in group):
            kinds.append("drop")
        return kinds

    @staticmethod
    def _swap_choices(step, scene) -> list:
        out = []
        for obj in _objects_in(step):
            same = [k for k in sorted(scene.assets) if k != obj and k[0] == obj[0]]
            others = same or [k for k in sorted(scene.assets) if k != obj]
            out += [(obj, k) for k in others]
        return out

    def corrupt(self, group: list, scene, rng: np.random.Generator) -> tuple[list, str]:
        kinds = self._kinds(group, scene)
        if not kinds:
            # nothing to swap, shift or drop: lose the group's first step
            return group[1:], "drop"
        kind = kinds[int(rng.integers(len(kinds)))]
        group = list(group)
        if kind == "swap":
            idx = [i for i, s in enumerate(group) if self._swap_choices(s, scene)]
            i = idx[int(rng.integers(len(idx)))]
            choices = self._swap_choices(group[i], scene)
            old, new = choices[int(rng.integers(len(choices)))]
            group[i] = _swap_in(group[i], old, new)
        elif kind == "jitter":
            idx = [i for i, s in enumerate(group) if _jitterable(s)]
            i = idx[int(rng.integers(len(idx)))]
            group[i] = _jitter(group[i], rng.uniform(-JITTER, JITTER, size=3), scene)
        else:
            idx = [i for i, s in enumerate(group) if s.kind in ("pre_grasp", "pre_pinch")]
            del group[idx[int(rng.integers(len(idx)))]]
        return group, kind

    def propose(self, request: ProposalRequest) -> Proposal:
        clean = self.blocks(request)
        rng = np.random.default_rng([self.seed, int(request.call)])
        out, marks = [], []
        for b, group in enumerate(clean):
            if rng.random() < self.p:
                group, kind = self.corrupt(group, request.scene, rng)
                marks.append((b, kind))
            if group:
                out.append(group)
        return self.render(out, "noisy", corrupted=marks, groups=len(clean))
