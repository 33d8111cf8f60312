"""Kinematic plan execution: hand operations, constrained motions, attachments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..constraints.constraint import Constraint
from ..constraints.generate import (AnnotationError, generate_constraints, hand_approach_axis, hand_op_point,
                                    pose_constraints)
from ..constraints.solver import InfeasibleGoal, InfeasiblePath, SolverConfig, solve_goal, solve_path
from ..geometry import Pose
from ..kinematics.collision import collision_check, obstacles_for
from ..scene.state import Attachment, HandMode, WorldState, key_str
from .recorder import Recorder, finger_angles
from .steps import INIT_POSE, AxisRef, Generated, Plan, PointRef, Relation, Step, StepRecord, Target
from .success import check_success

CAUSES = ("precondition", "attach_failed", "attach_mismatch", "infeasible_goal", "infeasible_path",
          "collision", "bad_reference", "parse_error")
VALUABLE = ("attach", "retained", "openness")


@dataclass(frozen=True)
class ExecConfig:
    eps_attach: float = 0.01
    eps_align: float = 0.15
    # minimum openness change that counts as a valuable moment
    openness_moment: float = 0.1
    valuable: tuple = VALUABLE
    solver: SolverConfig = SolverConfig()
    record: bool = True


class StepError(RuntimeError):
    def __init__(self, cause: str, message: str, **data):
        super().__init__(message)
        assert cause in CAUSES, cause
        self.cause = cause
        self.data = data


@dataclass(frozen=True)
class Event:
    step: int
    kind: str  # attach, detach, openness, retained, press, ignore
    hand: str | None = None
    obj: tuple | None = None
    value: float | None = None
    valuable: bool = False

    def to_json(self) -> dict:
        return {"step": self.step, "kind": self.kind, "hand": self.hand,
                "obj": None if self.obj is None else list(self.obj), "value": self.value, "valuable": self.valuable}


@dataclass
class ExecutionOutcome:
    status: str  # success | failed | incomplete
    state: WorldState
    failed_step: int | None = None  # 0-based index into plan.steps
    cause: str | None = None
    message: str = ""
    events: list = field(default_factory=list)
    records: list = field(default_factory=list)
    frames: list = field(default_factory=list)
    task_success: bool | None = None
    # world state after each completed step, when requested
    step_states: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "success"

    @property
    def valuable(self) -> bool:
        return any(e.valuable for e in self.events)

    def residual_log(self) -> list:
        return [r.residuals for r in self.records]

    def summary(self) -> dict:
        return {"status": self.status, "failed_step": self.failed_step, "cause": self.cause,
                "message": self.message, "events": [e.to_json() for e in self.events]}


def _pre_mode(op: str) -> str:
    return "pre_pinch" if op == "pinch" else "pre_grasp"


class Executor:
    """Owns nothing but configuration; every call works on the state it is given."""

    def __init__(self, scene, cfg: ExecConfig = ExecConfig()):
        self.scene = scene
        self.cfg = cfg

    # ------------------------------------------------------------ references
    def _world_point(self, state, ref) -> np.ndarray:
        sc = self.scene
        if isinstance(ref, PointRef):
            try:
                if ref.obj is None:
                    p = sc.hand_point_world(state, ref.point_name)
                else:
                    p = sc.key_point_world(state, ref.point_name, ref.obj, ref.related_point, ref.openness)
                return p if ref.shift is None else p + sc.canonical_axis(ref.shift)
            except (KeyError, ValueError) as e:
                raise StepError("bad_reference", str(e)) from None
        if isinstance(ref, AxisRef):
            raise StepError("bad_reference", "axis given where a point is expected")
        return sc.canonical_point(ref)

    def _world_axis(self, state, ref) -> np.ndarray:
        sc = self.scene
        if isinstance(ref, AxisRef):
            try:
                return sc.key_axis_world(state, ref.axis_name, ref.obj)
            except (KeyError, ValueError) as e:
                raise StepError("bad_reference", str(e)) from None
        if isinstance(ref, PointRef):
            raise StepError("bad_reference", "point given where an axis is expected")
        return sc.canonical_axis(ref)

    def _hand_point(self, state, side, ref) -> np.ndarray:
        if isinstance(ref, PointRef) and ref.obj is None:
            try:
                return self.scene.robot.hand.point(ref.point_name, side)
            except KeyError as e:
                raise StepError("bad_reference", str(e)) from None
        # world points (objects, literals) are frozen into the hand frame now
        return self.scene.hand_pose(state, side).inverse().transform_point(self._world_point(state, ref))

    def _hand_axis(self, state, side, ref) -> np.ndarray:
        if isinstance(ref, AxisRef) and ref.obj is None:
            try:
                return self.scene.robot.hand.axis(ref.axis_name, side)
            except KeyError as e:
                raise StepError("bad_reference", str(e)) from None
        return self.scene.hand_pose(state, side).R.T @ self._world_axis(state, ref)

    def resolve(self, state, side: str, spec) -> list[Constraint]:
        """Concrete constraints for one hand from a symbolic spec."""
        if isinstance(spec, Generated):
            try:
                return generate_constraints(self.scene, state, spec.obj, spec.action, side, spec.openness,
                                            spec.relative_obj, spec.relative_p, spec.key_point,
                                            spec.approach_offset, spec.offset)
            except (AnnotationError, KeyError, ValueError) as e:
                raise StepError("bad_reference", str(e)) from None
        r: Relation = spec
        kw = {}
        if r.hand_point is not None:
            kw["hand_point"] = self._hand_point(state, side, r.hand_point)
        if r.hand_axis is not None:
            kw["hand_axis"] = self._hand_axis(state, side, r.hand_axis)
        if r.target_point is not None:
            kw["target_point"] = self._world_point(state, r.target_point)
        if r.target_axis is not None:
            kw["target_axis"] = self._world_axis(state, r.target_axis)
        try:
            return [Constraint(r.kind, side, hard=r.hard, label=r.kind, **kw)]
        except ValueError as e:
            raise StepError("bad_reference", str(e)) from None

    # ------------------------------------------------------------ hand ops
    def _attach_candidates(self, state, side, obj, op):
        sc = self.scene
        spec = sc.asset(obj)
        entries = spec.annotations.ops_of(op)
        if not entries:
            raise StepError("attach_failed", f"{spec.type_name} has no {op} annotation", obj=obj)
        hand = sc.hand_pose(state, side)
        hp = hand.transform_point(hand_op_point(sc, side, op))
        ha = hand.rotate(hand_approach_axis(sc, side, op))
        base = state.object_poses[obj]
        best = None
        for e in entries:
            T = base.matrix() @ spec.link_matrix(e.link, state.openness.get(obj, 0.0))
            p = T[:3, :3] @ e.position + T[:3, 3]
            d = float(np.linalg.norm(hp - p))
            ang = 0.0 if e.approach is None else float(np.arccos(np.clip(ha @ (T[:3, :3] @ e.approach), -1, 1)))
            ok = d <= self.cfg.eps_attach and ang <= self.cfg.eps_align
            cand = (not ok, d + ang * 0.01, e, d, ang, T)
            if best is None or cand[:2] < best[:2]:
                best = cand
        return best

    def hand_op(self, state, step: Step, index: int, events: list) -> None:
        sc = self.scene
        for side in step.sides():
            mode = state.hand_modes[side]
            att = state.attachments.get(side)
            if step.kind in ("pre_grasp", "pre_pinch"):
                if att is not None:
                    raise StepError("precondition", f"{side} hand is holding {key_str(att.obj)}")
                state.hand_modes[side] = HandMode(step.kind)
            elif step.kind in ("grasp", "pinch"):
                obj = step.obj
                if obj not in state.object_poses:
                    raise StepError("bad_reference", f"no object {key_str(obj)}")
                if mode.mode != _pre_mode(step.kind) or att is not None:
                    raise StepError("precondition", f"{step.kind} requires {_pre_mode(step.kind)} first "
                                    f"({side} hand is {mode.mode})")
                bad, _, entry, d, ang, T = self._attach_candidates(state, side, obj, step.kind)
                if bad:
                    raise StepError("attach_failed", f"attach failed: {key_str(obj)} at {d * 1000:.1f} mm, "
                                    f"{np.degrees(ang):.1f} deg", distance=d, angle=ang, obj=obj)
                other = state.holder_of(obj)
                if other is not None:
                    # hand-over: the other hand lets go of its claim
                    state.attachments[other] = None
                    prev = state.hand_modes[other]
                    state.hand_modes[other] = HandMode(_pre_mode("pinch" if prev.mode == "pinching" else "grasp"))
                    events.append(Event(index, "detach", other, obj))
                hand = sc.hand_pose(state, side)
                if entry.link == "base":
                    new = Attachment(obj, hand.inverse() * state.object_poses[obj], "base", step.kind)
                    state.supports.pop(obj, None)
                else:
                    # remember where on the link the hand took hold
                    hp = hand.transform_point(hand_op_point(sc, side, step.kind))
                    local = np.linalg.inv(T) @ np.append(hp, 1.0)
                    new = Attachment(obj, Pose(local[:3], np.array([1.0, 0, 0, 0])), entry.link, step.kind)
                state.attachments[side] = new
                state.hand_modes[side] = HandMode("grasping" if step.kind == "grasp" else "pinching", obj)
                events.append(Event(index, "attach", side, obj, d, "attach" in self.cfg.valuable))
            elif step.kind == "open":
                state.hand_modes[side] = HandMode("idle")
                if att is not None:
                    state.attachments[side] = None
                    if att.link == "base":
                        sc.settle(state, att.obj)
                    events.append(Event(index, "detach", side, att.obj))
            elif step.kind == "press":
                events.append(Event(index, "press", side, step.obj))

    # ------------------------------------------------------------ motion
    def _articulation_path(self, state, side, att) -> list[Constraint]:
        """Keep the hand on the joint's line of travel while it drives a prismatic link."""
        sc = self.scene
        spec = sc.asset(att.obj)
        if spec.joint is None or spec.joint.type != "prismatic":
            return []
        base = state.object_poses[att.obj]
        axis = base.rotate(spec.joint.axis)
        hand = sc.hand_pose(state, side)
        hp = hand_op_point(sc, side, att.op)
        ha = hand_approach_axis(sc, side, att.op)
        return [
            Constraint("point2line", side, hand_point=hp, target_point=hand.transform_point(hp), target_axis=axis,
                       label="articulation_line"),
            Constraint("axis_parallel", side, hand_axis=ha, target_axis=hand.rotate(ha), label="articulation_axis"),
        ]

    def _openness_from_hand(self, state, side, att) -> float:
        sc = self.scene
        spec = sc.asset(att.obj)
        j = spec.joint
        base = state.object_poses[att.obj]
        hp = sc.hand_pose(state, side).transform_point(hand_op_point(sc, side, att.op))
        T0 = base.matrix() @ spec.link_matrix(att.link, 0.0)
        p0 = T0[:3, :3] @ att.rel.p + T0[:3, 3]
        axis = base.rotate(j.axis)
        lo, hi = j.range
        if j.type == "prismatic":
            q = lo + float((hp - p0) @ axis)
        else:
            o = base.transform_point(j.origin)
            a, b = p0 - o, hp - o
            a = a - (a @ axis) * axis
            b = b - (b @ axis) * axis
            q = lo + float(np.arctan2(axis @ np.cross(a, b), a @ b))
        return float(np.clip((q - lo) / (hi - lo), 0.0, 1.0))

    def _check_attach(self, state, t: Target) -> None:
        att = state.attachments.get(t.hand)
        actual = None if att is None else att.obj
        if t.attach is None and actual is not None:
            raise StepError("attach_mismatch", f"{t.hand} hand holds {key_str(actual)} but the move declares nothing")
        if t.attach is not None and t.attach != actual:
            got = "nothing" if actual is None else key_str(actual)
            raise StepError("attach_mismatch", f"move declares {key_str(t.attach)} in the {t.hand} hand, "
                            f"which holds {got}")

    def _checker(self, state, side, other=None):
        def check(theta):
            angles = {side: theta}
            if other is not None:
                angles.update(other)
            return collision_check(self.scene, state, angles, sides=(side,))
        return check

    def _goal(self, state, t: Target, other_angles=None):
        """Goal joint vector, goal residuals and path constraints for one hand."""
        sc = self.scene
        arm = sc.robot.arm(t.hand)
        path = []
        for spec in t.path:
            path.extend(self.resolve(state, t.hand, spec))
        att = state.attachments.get(t.hand)
        if att is not None and att.link != "base":
            path.extend(self._articulation_path(state, t.hand, att))
        check = self._checker(state, t.hand, other_angles)
        if t.pose == INIT_POSE:
            theta = arm.nominal.copy()
            contacts = check(theta)
            if contacts:
                raise StepError("infeasible_goal", "initial pose is in collision: " + str(contacts[0]))
            return theta, [], path
        if t.pose is not None:
            goal = pose_constraints(t.hand, sc.frame * Pose.from_list(t.pose))
        else:
            goal = []
            for spec in t.constraints:
                goal.extend(self.resolve(state, t.hand, spec))
        other_theta = None if other_angles is None else next(iter(other_angles.values()))
        obs = obstacles_for(sc, state, t.hand, other_theta=other_theta)
        try:
            res = solve_goal(arm, goal + path, state.arm_angles[t.hand], cfg=self.cfg.solver, obstacles=obs,
                             check=check)
        except InfeasibleGoal as e:
            raise StepError("infeasible_goal", f"{t.hand}: {e}", residuals=e.residuals) from None
        return res.theta, res.residuals[: len(goal)], path

    def _path(self, state, t: Target, theta_goal, path, other_angles=None):
        sc = self.scene
        arm = sc.robot.arm(t.hand)
        other_theta = None if other_angles is None else next(iter(other_angles.values()))
        obs = obstacles_for(sc, state, t.hand, other_theta=other_theta)
        try:
            return solve_path(arm, state.arm_angles[t.hand], theta_goal, path, self.cfg.solver, obs,
                              self._checker(state, t.hand, other_angles)).waypoints
        except InfeasiblePath as e:
            cause = "collision" if e.contacts else "infeasible_path"
            raise StepError(cause, f"{t.hand}: {e}", waypoint=e.index) from None

    def _cell_point(self, state, side) -> np.ndarray:
        att = state.attachments.get(side)
        if att is not None and att.link == "base":
            return state.object_poses[att.obj].p
        mode = state.hand_modes[side].mode
        op = "pinch" if mode in ("pre_pinch", "pinching") else "grasp"
        return self.scene.hand_pose(state, side).transform_point(hand_op_point(self.scene, side, op))

    def move(self, state, step: Step, index: int, events: list, rec: Recorder, record: StepRecord) -> None:
        sc = self.scene
        for t in step.targets:
            self._check_attach(state, t)
        sides = [t.hand for t in step.targets]
        goals, paths = {}, {}
        if len(step.targets) == 1:
            t = step.targets[0]
            theta, res, path = self._goal(state, t)
            goals[t.hand] = theta
            record.residuals.extend(res)
            paths[t.hand] = self._path(state, t, theta, path)
        else:
            # bimanual: second hand plans around the first hand's goal and path
            first, second = step.targets
            th1, res1, path1 = self._goal(state, first)
            th2, res2, path2 = self._goal(state, second, {first.hand: th1})
            goals = {first.hand: th1, second.hand: th2}
            record.residuals.extend(res1 + res2)
            paths[first.hand] = self._path(state, first, th1, path1)
            paths[second.hand] = self._path(state, second, th2, path2, {first.hand: th1})
            n = len(paths[first.hand])
            for k in range(1, n):
                angles = {s: paths[s][k] for s in sides}
                contacts = collision_check(sc, state, angles)
                if contacts:
                    raise StepError("collision", f"bimanual tick {k}: {contacts[0]}", waypoint=k)
        start_open = {}
        for s in sides:
            att = state.attachments.get(s)
            if att is not None and att.link != "base":
                start_open[s] = state.openness[att.obj]
        n = len(paths[sides[0]])
        for k in range(1, n):
            for s in sides:
                state.set_angles(s, paths[s][k])
                att = state.attachments.get(s)
                if att is None:
                    continue
                if att.link == "base":
                    sc.update_attached(state, s)
                else:
                    state.set_openness(att.obj, self._openness_from_hand(state, s, att))
                    sc.update_supported(state, att.obj)
            rec.frame(state, index)
        for s in sides:
            att = state.attachments.get(s)
            if att is None:
                continue
            if att.link == "base":
                events.append(Event(index, "retained", s, att.obj, None, "retained" in self.cfg.valuable))
            else:
                delta = state.openness[att.obj] - start_open[s]
                big = abs(delta) >= self.cfg.openness_moment
                events.append(Event(index, "openness", s, att.obj, state.openness[att.obj],
                                    big and "openness" in self.cfg.valuable))
        record.cell_point = tuple(float(x) for x in np.concatenate([self._cell_point(state, s) for s in sides]))

    # ------------------------------------------------------------ plans
    def _hand_frames(self, state, before: dict, index: int, rec: Recorder) -> None:
        """Finger motion of a hand op, blended over one segment of ticks."""
        if not rec.enabled:
            return
        T = self.cfg.solver.waypoints
        sc = self.scene
        for k in range(1, T + 1):
            s = k / T
            fingers = {side: (1 - s) * before[side] + s * finger_angles(sc, state.hand_modes[side].mode)
                       for side in before}
            rec.frame(state, index, fingers)

    def execute_step(self, state, step: Step, index: int, events: list, rec: Recorder) -> StepRecord:
        record = StepRecord(index, step.kind, step.hand, step.obj)
        if step.kind == "move":
            self.move(state, step, index, events, rec, record)
        elif step.kind in ("ignore_add", "ignore_remove"):
            if step.obj not in state.object_poses:
                raise StepError("bad_reference", f"no object {key_str(step.obj)}")
            if step.kind == "ignore_add":
                state.ignore = state.ignore | {step.obj}
            else:
                state.ignore = state.ignore - {step.obj}
            events.append(Event(index, step.kind, None, step.obj))
        else:
            before = {s: finger_angles(self.scene, state.hand_modes[s].mode) for s in state.hand_modes}
            self.hand_op(state, step, index, events)
            self._hand_frames(state, before, index, rec)
            if step.obj is not None and step.obj in state.object_poses:
                record.cell_point = tuple(float(x) for x in state.object_poses[step.obj].p)
        return record

    def execute(self, state: WorldState, plan: Plan, task: str | None = None,
                keep_states: bool = False) -> ExecutionOutcome:
        """Run ``plan`` on a copy of ``state``; stop at the first failing step."""
        state = state.copy()
        rec = Recorder(self.scene, self.cfg.record)
        events: list = []
        records: list = []
        kept: list = []
        rec.frame(state, -1)
        for i, step in enumerate(plan.steps):
            try:
                records.append(self.execute_step(state, step, i, events, rec))
            except StepError as e:
                return ExecutionOutcome("failed", state, i, e.cause, str(e), events, records, rec.frames,
                                        step_states=kept)
            if keep_states:
                kept.append(state.copy())
        if plan.parse_error is not None:
            n = len(plan.steps)
            return ExecutionOutcome("failed", state, n, "parse_error", f"block {plan.parse_error[0]}: "
                                    f"{plan.parse_error[1]}", events, records, rec.frames, step_states=kept)
        done = None if task is None else check_success(task, self.scene, state)
        status = "success" if done in (None, True) else "incomplete"
        return ExecutionOutcome(status, state, None, None, "", events, records, rec.frames, done, kept)


def execute_plan(scene, state, plan: Plan, task: str | None = None, cfg: ExecConfig = ExecConfig(),
                 keep_states: bool = False):
    return Executor(scene, cfg).execute(state, plan, task, keep_states)
