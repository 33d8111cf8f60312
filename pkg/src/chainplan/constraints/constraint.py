"""Relational constraints between the hand (plus anything it holds) and the scene."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import Pose

KINDS = ("point2point", "point2line", "line2point", "axis_parallel")
KIND_INDEX = {k: i for i, k in enumerate(KINDS)}
EPS_P = 5e-3
EPS_A = 2e-2


def _vec(v, name):
    if v is None:
        return None
    a = np.array(v, dtype=float)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be 3 finite numbers")
    a.setflags(write=False)
    return a


def _unit_axis(v, name):
    a = _vec(v, name)
    if a is None:
        return None
    n = np.linalg.norm(a)
    if n < 1e-9:
        raise ValueError(f"degenerate (near-zero) axis for {name}")
    a = a / n
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Constraint:
    """``hand_*`` primitives live in the hand frame, ``target_*`` in the world."""

    kind: str
    hand: str
    hand_point: np.ndarray | None = None
    hand_axis: np.ndarray | None = None
    target_point: np.ndarray | None = None
    target_axis: np.ndarray | None = None
    lower: float = 0.0
    upper: float | None = None
    weight: float = 1.0
    hard: bool = True
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        object.__setattr__(self, "hand_point", _vec(self.hand_point, "hand_point"))
        object.__setattr__(self, "target_point", _vec(self.target_point, "target_point"))
        object.__setattr__(self, "hand_axis", _unit_axis(self.hand_axis, "hand_axis"))
        object.__setattr__(self, "target_axis", _unit_axis(self.target_axis, "target_axis"))
        need = {
            "point2point": ("hand_point", "target_point"),
            "point2line": ("hand_point", "target_point", "target_axis"),
            "line2point": ("hand_point", "hand_axis", "target_point"),
            "axis_parallel": ("hand_axis", "target_axis"),
        }[self.kind]
        for f in need:
            if getattr(self, f) is None:
                raise ValueError(f"{self.kind} needs {f}")
        if not np.isfinite(self.weight) or self.weight < 0:
            raise ValueError("weight must be finite and >= 0")
        if self.upper is not None and self.lower > self.upper:
            raise ValueError("lower bound exceeds upper bound")
        if self.lower < 0:
            raise ValueError("lower bound must be >= 0")

    @property
    def angular(self) -> bool:
        return self.kind == "axis_parallel"

    def bounds(self, eps_p: float = EPS_P, eps_a: float = EPS_A) -> tuple[float, float]:
        if self.upper is not None:
            return self.lower, self.upper
        return self.lower, (eps_a if self.angular else eps_p)

    def tolerance(self, eps_p: float = EPS_P, eps_a: float = EPS_A) -> float:
        return eps_a if self.angular else eps_p

    def pack(self, eps_p: float = EPS_P, eps_a: float = EPS_A) -> np.ndarray:
        lo, hi = self.bounds(eps_p, eps_a)
        z = np.zeros(3)
        return np.concatenate([
            [KIND_INDEX[self.kind], self.weight, lo, hi],
            z if self.hand_point is None else self.hand_point,
            z if self.hand_axis is None else self.hand_axis,
            z if self.target_point is None else self.target_point,
            z if self.target_axis is None else self.target_axis,
        ])

    def transformed(self, T: Pose) -> "Constraint":
        """Same constraint with its world targets mapped by a rigid transform."""
        from dataclasses import replace

        return replace(
            self,
            target_point=None if self.target_point is None else T.transform_point(self.target_point),
            target_axis=None if self.target_axis is None else T.rotate(self.target_axis),
        )

    def to_json(self) -> dict:
        f = lambda v: None if v is None else [float(x) for x in v]  # noqa: E731
        return {
            "kind": self.kind, "hand": self.hand, "hand_point": f(self.hand_point), "hand_axis": f(self.hand_axis),
            "target_point": f(self.target_point), "target_axis": f(self.target_axis), "lower": self.lower,
            "upper": self.upper, "weight": self.weight, "hard": self.hard, "label": self.label,
        }


def residual(c: Constraint, ee: Pose) -> float:
    """Kind-specific residual of ``c`` with the hand frame at ``ee``."""
    R = ee.R
    if c.kind == "axis_parallel":
        u = R @ c.hand_axis
        n = np.linalg.norm(u)
        if n < 1e-9:
            raise ValueError("degenerate (near-zero) axis after transform")
        cos = float(np.clip((u / n) @ c.target_axis, -1.0, 1.0))
        return float(np.arccos(cos))
    a = ee.p + R @ c.hand_point
    if c.kind == "point2point":
        return float(np.linalg.norm(a - c.target_point))
    if c.kind == "point2line":
        d = a - c.target_point
        v = c.target_axis
        return float(np.linalg.norm(d - (d @ v) * v))
    u = R @ c.hand_axis
    n = np.linalg.norm(u)
    if n < 1e-9:
        raise ValueError("degenerate (near-zero) axis after transform")
    u = u / n
    e = c.target_point - a
    return float(np.linalg.norm(e - (e @ u) * u))


def within_bounds(c: Constraint, value: float, eps_p: float = EPS_P, eps_a: float = EPS_A) -> bool:
    lo, hi = c.bounds(eps_p, eps_a)
    return lo - 1e-12 <= value <= hi + 1e-12
