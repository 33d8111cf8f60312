"""Plan steps and the symbolic references they carry.

References stay symbolic until execution so that a step replays correctly
from any restored state and under any rebased scene frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

HAND_OPS = ("pre_grasp", "grasp", "pre_pinch", "pinch", "open", "press")
ARM_OPS = ("move", "ignore_add", "ignore_remove")
STEP_KINDS = HAND_OPS + ARM_OPS
HANDS = ("left", "right", "all")
# a branch unit opens at these ...
OPENERS = ("pre_grasp", "pre_pinch", "move", "ignore_add", "ignore_remove")
# ... and closes at these
CLOSERS = ("grasp", "pinch", "open")


def _tuple3(v):
    if v is None:
        return None
    t = tuple(float(x) for x in v)
    if len(t) != 3:
        raise ValueError("expected 3 numbers")
    return t


@dataclass(frozen=True)
class PointRef:
    """A hand point by name, or a point on/relative to an object."""

    point_name: str | None = None
    obj: tuple | None = None
    related_point: tuple | None = None
    openness: float | None = None
    # canonical-frame vector added after the point is resolved
    shift: tuple | None = None

    def __post_init__(self):
        if self.point_name is None and self.obj is None:
            raise ValueError("point reference needs a point name or an object")
        object.__setattr__(self, "related_point", _tuple3(self.related_point))
        object.__setattr__(self, "shift", _tuple3(self.shift))


@dataclass(frozen=True)
class AxisRef:
    axis_name: str
    obj: tuple | None = None


@dataclass(frozen=True)
class Generated:
    """Constraints produced from asset annotations at execution time."""

    obj: tuple
    action: str
    openness: float | None = None
    relative_obj: tuple | None = None
    relative_p: tuple | None = None
    key_point: str | None = None
    approach_offset: float = 0.0
    offset: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "relative_p", _tuple3(self.relative_p))
        object.__setattr__(self, "offset", _tuple3(self.offset))


@dataclass(frozen=True)
class Relation:
    """An explicit constraint; primitives are refs or canonical literals."""

    kind: str
    hand_point: object = None
    target_point: object = None
    hand_axis: object = None
    target_axis: object = None
    hard: bool = True

    def __post_init__(self):
        for f in ("hand_point", "target_point", "hand_axis", "target_axis"):
            v = getattr(self, f)
            if v is not None and not isinstance(v, (PointRef, AxisRef)):
                object.__setattr__(self, f, _tuple3(v))


INIT_POSE = "init"


@dataclass(frozen=True)
class Target:
    """Goal of one hand within a move: constraints, an explicit pose or ``init``."""

    hand: str
    constraints: tuple = ()
    pose: object = None  # INIT_POSE or 7 canonical numbers
    path: tuple = ()
    attach: tuple | None = None  # declared held object

    def __post_init__(self):
        if self.hand not in ("left", "right"):
            raise ValueError(f"bad hand {self.hand!r}")
        if (self.pose is None) == (not self.constraints):
            if self.pose is None:
                raise ValueError("move target needs constraints or a pose")
            raise ValueError("move target takes either constraints or a pose, not both")
        if self.pose is not None and self.pose != INIT_POSE:
            p = tuple(float(x) for x in self.pose)
            if len(p) != 7:
                raise ValueError("explicit pose needs 7 numbers")
            object.__setattr__(self, "pose", p)


@dataclass(frozen=True)
class Step:
    kind: str
    hand: str
    obj: tuple | None = None
    targets: tuple = ()
    block: int = 0

    def __post_init__(self):
        if self.kind not in STEP_KINDS:
            raise ValueError(f"unknown step kind {self.kind!r}")
        if self.hand not in HANDS and self.kind not in ("ignore_add", "ignore_remove"):
            raise ValueError(f"bad hand {self.hand!r}")
        if self.kind in ("grasp", "pinch") and self.obj is None:
            raise ValueError(f"{self.kind} needs a target object")
        if self.kind == "move":
            if not self.targets:
                raise ValueError("move needs at least one target")
            hands = [t.hand for t in self.targets]
            want = ["left", "right"] if self.hand == "all" else [self.hand]
            if hands != want:
                raise ValueError(f"move targets {hands} do not match hand {self.hand!r}")
        if self.kind in ("ignore_add", "ignore_remove") and self.obj is None:
            raise ValueError(f"{self.kind} needs an object")

    def sides(self) -> tuple[str, ...]:
        return ("left", "right") if self.hand == "all" else (self.hand,)

    def with_block(self, block: int) -> "Step":
        return replace(self, block=block)


@dataclass(frozen=True)
class Plan:
    steps: tuple = ()
    provenance: str = "scripted"
    blocks: int = 0
    # index of the first block that failed to parse, if any
    parse_error: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if self.blocks == 0 and self.steps:
            object.__setattr__(self, "blocks", max(s.block for s in self.steps) + 1)

    def __len__(self):
        return len(self.steps)


def plan_from_blocks(blocks, provenance: str = "scripted") -> Plan:
    steps = []
    for b, group in enumerate(blocks):
        steps.extend(s.with_block(b) for s in group)
    return Plan(tuple(steps), provenance, blocks=len(blocks))


@dataclass
class StepRecord:
    """What one executed step did; fills branch-unit signatures and residual logs."""

    index: int
    kind: str
    hand: str
    obj: tuple | None
    cell_point: tuple | None = None
    residuals: list = field(default_factory=list)
