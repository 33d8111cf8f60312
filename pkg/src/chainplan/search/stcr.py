"""Segment, truncate, combine: turning one executed proposal into tree edges."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..executor.steps import CLOSERS, OPENERS, Generated, Plan, PointRef, Relation
from ..scene.state import key_str

CELL = 0.02
PRE_OPS = ("pre_grasp", "pre_pinch")


@dataclass(frozen=True)
class BranchUnit:
    """Contiguous steps with one intent, e.g. approach-and-grasp; one tree edge."""

    steps: tuple
    signature: tuple
    # index into the executed plan of the unit's last step
    end: int = -1

    def __post_init__(self):
        if not self.steps:
            raise ValueError("a branch unit needs at least one step")


def segment(plan: Plan) -> list:
    """Executable step list of a parsed proposal, in order."""
    return list(plan.steps)


def truncate(outcome, steps) -> tuple[list, int | None]:
    """Steps that ran before the first failure, and the failing index (None on completion)."""
    if outcome.status == "failed":
        k = outcome.failed_step
        return list(steps[:k]), k
    return list(steps), None


def group_indices(steps) -> list[list[int]]:
    """Index groups of the combine rule.

    A unit opens at a pre-operation or at a move/ignore op outside an open
    unit.  Units opened by a pre-operation absorb moves until they close;
    other units close right before the next opener.  grasp, pinch and open
    close the unit they end.
    """
    groups: list[list[int]] = []
    cur: list[int] | None = None
    absorbing = False
    for i, s in enumerate(steps):
        if s.kind in PRE_OPS:
            if cur:
                groups.append(cur)
            cur, absorbing = [i], True
        elif s.kind in OPENERS:
            if cur and absorbing:
                cur.append(i)
            else:
                if cur:
                    groups.append(cur)
                cur, absorbing = [i], False
        else:
            # closers, and hand ops that never open a unit
            if cur is None:
                cur = []
            cur.append(i)
            if s.kind in CLOSERS or not absorbing:
                groups.append(cur)
                cur, absorbing = None, False
    if cur:
        groups.append(cur)
    return groups


def _step_object(step) -> str:
    if step.obj is not None:
        return key_str(step.obj)
    names = []
    for t in step.targets:
        if t.attach is not None:
            names.append(key_str(t.attach))
            continue
        ref = ""
        for spec in t.constraints:
            if isinstance(spec, Generated):
                ref = key_str(spec.obj)
                break
            if isinstance(spec, Relation) and isinstance(spec.target_point, PointRef) and spec.target_point.obj:
                ref = key_str(spec.target_point.obj)
                break
        names.append(ref or ("init" if t.pose == "init" else "pose" if t.pose is not None else ""))
    return "+".join(names)


def cell_of(scene, point) -> tuple:
    """2 cm grid cell (canonical coordinates) of one or more stacked 3-vectors."""
    if point is None:
        return ()
    pts = np.asarray(point, dtype=float).reshape(-1, 3)
    inv = scene.frame.inverse()
    out = []
    for p in pts:
        c = inv.transform_point(p)
        out.extend(int(v) for v in np.floor(np.round(c / CELL, 9)))
    return tuple(out)


def step_signature(scene, step, record=None) -> tuple:
    cell = cell_of(scene, record.cell_point) if record is not None else ()
    return (step.hand, step.kind, _step_object(step), cell)


def combine(scene, steps, records) -> list[BranchUnit]:
    """Branch units over executed steps; ``records`` align with ``steps``."""
    units = []
    for idx in group_indices(steps):
        sig = tuple(step_signature(scene, steps[i], records[i] if i < len(records) else None) for i in idx)
        units.append(BranchUnit(tuple(steps[i] for i in idx), sig, idx[-1]))
    return units


def failed_unit_signature(scene, steps, records, k: int) -> tuple:
    """Signature of the unit that contains failing step ``k`` (unexecuted steps have no cell)."""
    for idx in group_indices(steps):
        if k in idx:
            return tuple(step_signature(scene, steps[i], records[i] if i < len(records) else None)
                         for i in idx if i <= k)
    return ()
