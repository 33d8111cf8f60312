"""Plan DSL: a whitelisted subset of the planner-script vocabulary.

Text is parsed with :mod:`ast` and never executed.  Each fenced block becomes
one step group; names bound in a block are not visible in later blocks.
"""

from __future__ import annotations

import ast
import re
import textwrap
from dataclasses import dataclass, replace

from ..executor.steps import (INIT_POSE, AxisRef, Generated, Plan, PointRef, Relation, Step, Target,
                              plan_from_blocks)

FENCE = re.compile(r"^[ \t]*```[ \t]*([A-Za-z0-9_+-]*)[ \t]*$")
CODE_LANGS = ("", "python", "py", "dsl")
REL_TYPES = {"point2point": "point2point", "parallel": "axis_parallel", "axis_parallel": "axis_parallel",
             "point2line": "point2line", "line2point": "line2point"}
REL_NAMES = {"point2point": "point2point", "axis_parallel": "parallel", "point2line": "point2line",
             "line2point": "line2point"}
EE_FRAMES = {"l_hand_base_link": "left", "r_hand_base_link": "right"}
SIDE_FRAME = {v: k for k, v in EE_FRAMES.items()}
HAND_CALLS = {
    "hand_pre_grasp": "pre_grasp", "hand_pre_pinch": "pre_pinch", "hand_grasp": "grasp", "hand_pinch": "pinch",
    "open_hand": "open", "hand_press": "press",
}
OBJ_KW = {"grasp": "grasp_object", "pinch": "pinch_object", "press": "press_object"}


class DSLError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class _Goal:
    hand: str
    specs: tuple


def extract_blocks(text: str) -> list[str]:
    """Fenced code blocks of a reply, in order (untagged, python or dsl).

    Fences pair line by line, so blocks in other languages are skipped
    without throwing later pairs out of step; an unclosed block is dropped.
    """
    blocks, lang, body = [], None, []
    for line in text.splitlines():
        m = FENCE.match(line)
        if lang is None:
            if m:
                lang, body = m.group(1).lower(), []
            continue
        if m and not m.group(1):
            if lang in CODE_LANGS:
                blocks.append("".join(b + "\n" for b in body))
            lang = None
        else:
            body.append(line)
    return blocks


# ---------------------------------------------------------------- evaluation

class _Block:
    def __init__(self):
        self.env: dict = {}
        self.steps: list[Step] = []

    # -------------------------------------------------------- expressions
    def expr(self, node):
        if isinstance(node, ast.Constant):
            if isinstance(node.value, (int, float, str, bool)) or node.value is None:
                return node.value
            raise DSLError("unsupported literal", node.lineno)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = self.expr(node.operand)
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise DSLError("unary sign on a non-number", node.lineno)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, (ast.List, ast.Tuple)):
            return [self.expr(e) for e in node.elts]
        if isinstance(node, ast.Name):
            if node.id in ("True", "False", "None"):
                return {"True": True, "False": False, "None": None}[node.id]
            if node.id not in self.env:
                raise DSLError(f"undefined name {node.id!r}", node.lineno)
            return self.env[node.id]
        if isinstance(node, ast.Attribute):
            dotted = _dotted(node)
            if dotted in ("planner.left_hand_init_pose", "planner.right_hand_init_pose"):
                return ("init", dotted.split(".")[1].split("_")[0])
            if dotted == "planner.env":
                return _ENV
            raise DSLError(f"unsupported attribute {dotted!r}", node.lineno)
        if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub)):
            a, b = self.expr(node.left), self.expr(node.right)
            sign = 1.0 if isinstance(node.op, ast.Add) else -1.0
            if sign > 0 and isinstance(a, list) and isinstance(b, list):
                return a + b
            if _is_vec(b) and (_is_vec(a) or isinstance(a, PointRef)):
                return _shifted(a, tuple(sign * x for x in b))
            if sign > 0 and _is_vec(a) and isinstance(b, PointRef):
                return _shifted(b, a)
            raise DSLError("'+' joins constraint lists or offsets a point by a vector; '-' only offsets",
                           node.lineno)
        if isinstance(node, ast.Call):
            return self.call(node)
        raise DSLError(f"unsupported expression {type(node).__name__}", getattr(node, "lineno", None))

    def args(self, node: ast.Call, names: list[str], required: int = 0) -> dict:
        """Bind positional and keyword arguments against a parameter list."""
        if len(node.args) > len(names):
            raise DSLError(f"too many positional arguments to {_dotted(node.func)}", node.lineno)
        out = {}
        for name, a in zip(names, node.args):
            out[name] = self.expr(a)
        for kw in node.keywords:
            if kw.arg is None or kw.arg not in names:
                raise DSLError(f"unexpected argument {kw.arg!r} to {_dotted(node.func)}", node.lineno)
            if kw.arg in out:
                raise DSLError(f"argument {kw.arg!r} given twice", node.lineno)
            out[kw.arg] = self.expr(kw.value)
        for name in names[:required]:
            if name not in out:
                raise DSLError(f"{_dotted(node.func)} needs {name!r}", node.lineno)
        return out

    def call(self, node: ast.Call):
        name = _dotted(node.func)
        ln = node.lineno
        if name in ("np.array", "numpy.array"):
            a = self.args(node, ["object"], 1)["object"]
            return _numbers(a, ln)
        if name == "get_point_in_env":
            a = self.args(node, ["env", "point_name", "type_name", "obj_id", "related_point", "openness"], 1)
            obj = None if a.get("type_name") is None else (a["type_name"], _int(a.get("obj_id", 0), ln))
            try:
                return PointRef(a.get("point_name"), obj, a.get("related_point"), a.get("openness"))
            except ValueError as e:
                raise DSLError(str(e), ln) from None
        if name == "get_axis_in_env":
            a = self.args(node, ["env", "axis_name", "obj_type", "obj_id"], 2)
            obj = None if a.get("obj_type") is None else (a["obj_type"], _int(a.get("obj_id", 0), ln))
            return AxisRef(_str(a["axis_name"], ln), obj)
        if name in ("Constraint", "Const"):
            a = self.args(node, ["env", "type", "end_effector_frame", "hand_key_point", "object_key_point",
                                 "hand_axis", "object_axis"], 3)
            kind = REL_TYPES.get(a["type"])
            if kind is None:
                raise DSLError(f"unknown constraint type {a['type']!r}", ln)
            if a["end_effector_frame"] not in EE_FRAMES:
                raise DSLError(f"unknown end-effector frame {a['end_effector_frame']!r}", ln)
            try:
                rel = Relation(kind, a.get("hand_key_point"), a.get("object_key_point"), a.get("hand_axis"),
                               a.get("object_axis"), hard=(name == "Constraint"))
            except (ValueError, TypeError) as e:
                raise DSLError(str(e), ln) from None
            return ("rel", EE_FRAMES[a["end_effector_frame"]], rel)
        if name == "planner.generate_constraints":
            a = self.args(node, ["obj_name", "obj_id", "action", "hand_name", "openness", "relative_obj_name",
                                 "relative_obj_id", "relative_p", "key_point", "approach_offset", "offset"], 4)
            rel = None
            if a.get("relative_obj_name") is not None:
                rel = (a["relative_obj_name"], _int(a.get("relative_obj_id", 0), ln))
            hand = _hand(a["hand_name"], ln)
            try:
                g = Generated((_str(a["obj_name"], ln), _int(a["obj_id"], ln)), _str(a["action"], ln),
                              a.get("openness"), rel, a.get("relative_p"), a.get("key_point"),
                              float(a.get("approach_offset", 0.0)), a.get("offset"))
            except (ValueError, TypeError) as e:
                raise DSLError(str(e), ln) from None
            return [("gen", hand, g)]
        if name == "planner.generate_end_effector_pose":
            a = self.args(node, ["constraints", "hand_name"], 2)
            hand = _hand(a["hand_name"], ln)
            return (None, _Goal(hand, self._specs(a["constraints"], hand, ln)))
        if name in ("sapien.Pose", "Pose"):
            a = self.args(node, ["p", "q"], 1)
            return tuple(_numbers(a["p"], ln)) + tuple(_numbers(a.get("q", [1, 0, 0, 0]), ln, 4))
        raise DSLError(f"call to {name!r} is not allowed", ln)

    def _specs(self, value, hand, ln) -> tuple:
        if not isinstance(value, list):
            raise DSLError("expected a list of constraints", ln)
        out = []
        for item in value:
            if not (isinstance(item, tuple) and len(item) == 3 and item[0] in ("rel", "gen")):
                raise DSLError("constraint list holds a non-constraint", ln)
            if item[1] != hand:
                raise DSLError(f"constraint for the {item[1]} hand used with the {hand} hand", ln)
            out.append(item[2])
        return tuple(out)

    # -------------------------------------------------------- statements
    def stmt(self, node):
        ln = getattr(node, "lineno", None)
        if isinstance(node, (ast.Import, ast.ImportFrom, ast.Pass)):
            return
        if isinstance(node, ast.Expr) and isinstance(node.value, ast.Constant) and isinstance(node.value.value, str):
            return  # docstring
        if isinstance(node, ast.FunctionDef):
            for s in node.body:
                self.stmt(s)
            return
        if isinstance(node, ast.Assign):
            if len(node.targets) != 1:
                raise DSLError("chained assignment", ln)
            value = self.expr(node.value)
            self.bind(node.targets[0], value, ln)
            return
        if isinstance(node, ast.AugAssign) and isinstance(node.op, ast.Add) and isinstance(node.target, ast.Name):
            cur = self.expr(node.target)
            add = self.expr(node.value)
            if not (isinstance(cur, list) and isinstance(add, list)):
                raise DSLError("'+=' only extends constraint lists", ln)
            self.env[node.target.id] = cur + add
            return
        if isinstance(node, ast.Expr) and isinstance(node.value, ast.Call):
            self.action(node.value)
            return
        raise DSLError(f"unsupported statement {type(node).__name__}", ln)

    def bind(self, target, value, ln):
        if isinstance(target, ast.Name):
            self.env[target.id] = value
            return
        if isinstance(target, ast.Tuple):
            if not isinstance(value, (tuple, list)) or len(value) != len(target.elts):
                raise DSLError("cannot unpack value", ln)
            for t, v in zip(target.elts, value):
                self.bind(t, v, ln)
            return
        raise DSLError("unsupported assignment target", ln)

    def action(self, node: ast.Call):
        name = _dotted(node.func)
        ln = node.lineno
        if isinstance(node.func, ast.Attribute) and node.func.attr in ("append", "extend"):
            base = node.func.value
            if not isinstance(base, ast.Name):
                raise DSLError("append/extend on a non-name", ln)
            cur = self.expr(base)
            if len(node.args) != 1 or node.keywords or not isinstance(cur, list):
                raise DSLError(f"bad {node.func.attr} call", ln)
            v = self.expr(node.args[0])
            if node.func.attr == "append":
                v = [v]
            if not isinstance(v, list):
                raise DSLError("extend needs a list", ln)
            self.env[base.id] = cur + v
            return
        short = name.split(".", 1)[1] if name.startswith("planner.") else None
        if short in HAND_CALLS:
            kind = HAND_CALLS[short]
            if kind in OBJ_KW:
                a = self.args(node, ["hand_name", OBJ_KW[kind], "obj_id"], 2 if kind != "press" else 1)
                obj = None
                if a.get(OBJ_KW[kind]) is not None:
                    obj = (_str(a[OBJ_KW[kind]], ln), _int(a.get("obj_id", 0), ln))
            else:
                a = self.args(node, ["hand_name"], 1)
                obj = None
            self._add(Step(kind, _hand(a["hand_name"], ln, allow_all=True), obj), ln)
            return
        if short in ("ignore_add", "ignore_remove"):
            a = self.args(node, ["obj_name", "obj_id"], 1)
            self._add(Step(short, "all", (_str(a["obj_name"], ln), _int(a.get("obj_id", 0), ln))), ln)
            return
        if short == "move_to_pose_with_screw":
            a = self.args(node, ["pose", "hand_name", "attach_obj", "object_name", "object_id",
                                 "path_constraints"], 2)
            self._add(self._move(a, ln), ln)
            return
        raise DSLError(f"call to {name!r} is not allowed here", ln)

    def _move(self, a, ln) -> Step:
        hand = _hand(a["hand_name"], ln, allow_all=True)
        sides = ["left", "right"] if hand == "all" else [hand]
        per = lambda v, d: v if hand == "all" and isinstance(v, list) else ([v] * len(sides) if hand == "all" else [v])  # noqa: E731
        poses = a["pose"] if hand == "all" else [a["pose"]]
        if not isinstance(poses, list) or len(poses) != len(sides):
            raise DSLError("'all' moves take one pose per hand", ln)
        attach = per(a.get("attach_obj", False), False)
        names = per(a.get("object_name"), None)
        ids = per(a.get("object_id", 0), 0)
        paths = per(a.get("path_constraints"), None)
        if len(paths) != len(sides):
            raise DSLError("'all' moves take one path list per hand", ln)
        targets = []
        for i, side in enumerate(sides):
            att = None
            if attach[i]:
                if names[i] is None:
                    raise DSLError("attach_obj needs object_name", ln)
                att = (_str(names[i], ln), _int(ids[i], ln))
            path = self._specs(paths[i] or [], side, ln)
            p = poses[i]
            try:
                if isinstance(p, _Goal):
                    if p.hand != side:
                        raise DSLError(f"pose solved for the {p.hand} hand used for the {side} hand", ln)
                    targets.append(Target(side, p.specs, None, path, att))
                elif isinstance(p, tuple) and len(p) == 2 and p[0] == "init":
                    if p[1] != side:
                        raise DSLError(f"{p[1]} init pose used for the {side} hand", ln)
                    targets.append(Target(side, (), INIT_POSE, path, att))
                elif isinstance(p, tuple) and len(p) == 7:
                    targets.append(Target(side, (), p, path, att))
                else:
                    raise DSLError("move needs a pose from generate_end_effector_pose or an init pose", ln)
            except ValueError as e:
                if isinstance(e, DSLError):
                    raise
                raise DSLError(str(e), ln) from None
        return Step("move", hand, None, tuple(targets))

    def _add(self, step: Step, ln) -> None:
        self.steps.append(step)


_ENV = object()


def _dotted(node) -> str:
    if isinstance(node, ast.Name):
        return node.id
    if isinstance(node, ast.Attribute):
        return f"{_dotted(node.value)}.{node.attr}"
    return "<expr>"


def _is_vec(v) -> bool:
    return isinstance(v, tuple) and len(v) == 3 and all(isinstance(x, float) for x in v)


def _shifted(a, d: tuple):
    """Vector sum, or a point reference moved by ``d`` in the canonical frame."""
    if isinstance(a, PointRef):
        base = a.shift or (0.0, 0.0, 0.0)
        return replace(a, shift=tuple(x + y for x, y in zip(base, d)))
    return tuple(x + y for x, y in zip(a, d))


def _numbers(v, ln, n: int = 3) -> tuple:
    if not isinstance(v, list) or len(v) != n or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                                         for x in v):
        raise DSLError(f"expected {n} numbers", ln)
    return tuple(float(x) for x in v)


def _int(v, ln) -> int:
    if not isinstance(v, int) or isinstance(v, bool):
        raise DSLError(f"expected an integer id, got {v!r}", ln)
    return v


def _str(v, ln) -> str:
    if not isinstance(v, str):
        raise DSLError(f"expected a string, got {v!r}", ln)
    return v


def _hand(v, ln, allow_all: bool = False) -> str:
    ok = ("left", "right", "all") if allow_all else ("left", "right")
    if v not in ok:
        raise DSLError(f"bad hand name {v!r}", ln)
    return v


def parse_block(code: str) -> list[Step]:
    try:
        tree = ast.parse(textwrap.dedent(code))
    except SyntaxError as e:
        raise DSLError(f"syntax error: {e.msg}", e.lineno) from None
    blk = _Block()
    for node in tree.body:
        blk.stmt(node)
    return blk.steps


def parse_blocks(blocks: list[str], provenance: str = "proposed") -> Plan:
    """Parse blocks in order; the first bad block ends the plan."""
    groups = []
    for i, code in enumerate(blocks):
        try:
            groups.append(parse_block(code))
        except DSLError as e:
            plan = plan_from_blocks(groups, provenance)
            return Plan(plan.steps, provenance, len(groups), (i, str(e)))
    return plan_from_blocks(groups, provenance)


def parse_text(text: str, provenance: str = "proposed") -> Plan:
    return parse_blocks(extract_blocks(text), provenance)


# ---------------------------------------------------------------- rendering

def _num(x: float) -> str:
    return repr(float(x))


def _vec(v) -> str:
    return "np.array([" + ", ".join(_num(x) for x in v) + "])"


def _point(ref) -> str:
    if not isinstance(ref, PointRef):
        return _vec(ref)
    parts = ["planner.env"]
    if ref.point_name is not None:
        parts.append(f"point_name={ref.point_name!r}")
    if ref.obj is not None:
        parts += [f"type_name={ref.obj[0]!r}", f"obj_id={ref.obj[1]}"]
    if ref.related_point is not None:
        parts.append(f"related_point={_vec(ref.related_point)}")
    if ref.openness is not None:
        parts.append(f"openness={_num(ref.openness)}")
    text = f"get_point_in_env({', '.join(parts)})"
    return text if ref.shift is None else f"{text} + {_vec(ref.shift)}"


def _axis(ref) -> str:
    if not isinstance(ref, AxisRef):
        return _vec(ref)
    parts = ["planner.env", f"axis_name={ref.axis_name!r}"]
    if ref.obj is not None:
        parts += [f"obj_type={ref.obj[0]!r}", f"obj_id={ref.obj[1]}"]
    return f"get_axis_in_env({', '.join(parts)})"


def _spec(spec, side: str) -> str:
    if isinstance(spec, Generated):
        parts = [f"obj_name={spec.obj[0]!r}", f"obj_id={spec.obj[1]}", f"action={spec.action!r}",
                 f"hand_name={side!r}"]
        if spec.openness is not None:
            parts.append(f"openness={_num(spec.openness)}")
        if spec.relative_obj is not None:
            parts += [f"relative_obj_name={spec.relative_obj[0]!r}", f"relative_obj_id={spec.relative_obj[1]}"]
        if spec.relative_p is not None:
            parts.append(f"relative_p={_vec(spec.relative_p)}")
        if spec.key_point is not None:
            parts.append(f"key_point={spec.key_point!r}")
        if spec.approach_offset != 0.0:
            parts.append(f"approach_offset={_num(spec.approach_offset)}")
        if spec.offset is not None:
            parts.append(f"offset={_vec(spec.offset)}")
        return f"planner.generate_constraints({', '.join(parts)})"
    r: Relation = spec
    parts = ["env=planner.env", f"type={REL_NAMES[r.kind]!r}", f"end_effector_frame={SIDE_FRAME[side]!r}"]
    if r.hand_point is not None:
        parts.append(f"hand_key_point={_point(r.hand_point)}")
    if r.target_point is not None:
        parts.append(f"object_key_point={_point(r.target_point)}")
    if r.hand_axis is not None:
        parts.append(f"hand_axis={_axis(r.hand_axis)}")
    if r.target_axis is not None:
        parts.append(f"object_axis={_axis(r.target_axis)}")
    return f"{'Constraint' if r.hard else 'Const'}({', '.join(parts)})"


def _spec_list(specs, side) -> str:
    # generated lists are joined with '+', runs of explicit constraints form list literals
    pieces, run = [], []
    for s in specs:
        if isinstance(s, Generated):
            if run:
                pieces.append("[" + ", ".join(run) + "]")
                run = []
            pieces.append(_spec(s, side))
        else:
            run.append(_spec(s, side))
    if run:
        pieces.append("[" + ", ".join(run) + "]")
    return " + ".join(pieces) if pieces else "[]"


def render_step(step: Step) -> list[str]:
    k = step.kind
    if k in ("pre_grasp", "pre_pinch", "open"):
        fn = {"pre_grasp": "hand_pre_grasp", "pre_pinch": "hand_pre_pinch", "open": "open_hand"}[k]
        return [f"planner.{fn}({step.hand!r})"]
    if k in ("grasp", "pinch", "press"):
        fn = {"grasp": "hand_grasp", "pinch": "hand_pinch", "press": "hand_press"}[k]
        if step.obj is None:
            return [f"planner.{fn}({step.hand!r})"]
        return [f"planner.{fn}({step.hand!r}, {OBJ_KW[k]}={step.obj[0]!r}, obj_id={step.obj[1]})"]
    if k in ("ignore_add", "ignore_remove"):
        return [f"planner.{k}(obj_name={step.obj[0]!r}, obj_id={step.obj[1]})"]
    lines = []
    poses, attach, names, ids, paths = [], [], [], [], []
    for t in step.targets:
        s = t.hand
        if t.pose == INIT_POSE:
            poses.append(f"planner.{s}_hand_init_pose")
        elif t.pose is not None:
            poses.append(f"sapien.Pose(p=[{', '.join(_num(x) for x in t.pose[:3])}], "
                         f"q=[{', '.join(_num(x) for x in t.pose[3:])}])")
        else:
            lines.append(f"constraints_{s} = {_spec_list(t.constraints, s)}")
            lines.append(f"_, pose_{s} = planner.generate_end_effector_pose(constraints_{s}, hand_name={s!r})")
            poses.append(f"pose_{s}")
        if t.path:
            lines.append(f"path_{s} = {_spec_list(t.path, s)}")
        paths.append(f"path_{s}" if t.path else "[]")
        attach.append("True" if t.attach else "False")
        names.append(repr(t.attach[0]) if t.attach else "None")
        ids.append(str(t.attach[1]) if t.attach else "0")
    has_path = any(t.path for t in step.targets)
    if step.hand == "all":
        args = [f"[{', '.join(poses)}]", "'all'", f"attach_obj=[{', '.join(attach)}]",
                f"object_name=[{', '.join(names)}]", f"object_id=[{', '.join(ids)}]"]
        if has_path:
            args.append(f"path_constraints=[{', '.join(paths)}]")
    else:
        args = [poses[0], repr(step.hand), f"attach_obj={attach[0]}"]
        if step.targets[0].attach:
            args += [f"object_name={names[0]}", f"object_id={ids[0]}"]
        if has_path:
            args.append(f"path_constraints={paths[0]}")
    lines.append(f"planner.move_to_pose_with_screw({', '.join(args)})")
    return lines


def render_block(steps) -> str:
    body = []
    for st in steps:
        body.extend(render_step(st))
    return "\n".join("    " + line for line in body) + "\n"


def render_plan(blocks, notes: list[str] | None = None) -> str:
    """Fenced text for a list of step groups (one block per group)."""
    out = []
    for i, steps in enumerate(blocks):
        title = notes[i] if notes else f"step {i}"
        out.append(f"{title}\n```python\n{render_block(steps)}```")
    return "\n\n".join(out) + "\n"


def plan_blocks(plan: Plan) -> list[list[Step]]:
    groups = [[] for _ in range(plan.blocks)]
    for s in plan.steps:
        groups[s.block].append(s)
    return groups
