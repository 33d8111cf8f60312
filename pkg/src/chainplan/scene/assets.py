"""Annotated asset descriptions loaded from ``assets/<type_name>/<type_id>/{spec,annotations}.json``."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..geometry import Pose, axis_angle_matrix, unit

ATOMIC_OPS = ("pre_grasp", "grasp", "pre_pinch", "pinch", "open", "press")
# operation kinds an asset may annotate: atomic ops plus placement targets
OP_KINDS = ("grasp", "pinch", "press", "target", "target1", "target2")


def _ro(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Frame:
    key_points: dict[str, np.ndarray] = field(default_factory=dict)
    key_axes: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for name, v in self.key_axes.items():
            if abs(np.linalg.norm(v) - 1.0) > 1e-9:
                raise ValueError(f"axis {name!r} is not unit length")


@dataclass(frozen=True)
class OpEntry:
    """One applicable operation on an asset: where the hand acts and how it is oriented."""

    kind: str
    point: str
    position: np.ndarray
    link: str = "base"
    approach: np.ndarray | None = None
    parallel: tuple[np.ndarray, ...] = ()


@dataclass(frozen=True)
class AnnotationSet:
    inherent: Frame
    point_links: dict[str, str]
    ops: tuple[OpEntry, ...]
    version: int = 1

    def ops_of(self, kind: str) -> list[OpEntry]:
        return [o for o in self.ops if o.kind == kind]


@dataclass(frozen=True)
class JointSpec:
    type: str  # prismatic | revolute
    axis: np.ndarray
    origin: np.ndarray
    range: tuple[float, float]

    def value(self, openness: float) -> float:
        lo, hi = self.range
        return lo + float(openness) * (hi - lo)

    def link_offset(self, openness: float) -> np.ndarray:
        """Base-to-link transform (4x4) at the given openness."""
        q = self.value(openness)
        T = np.eye(4)
        if self.type == "prismatic":
            T[:3, 3] = self.axis * q
        else:
            R = axis_angle_matrix(self.axis, q)
            T[:3, :3] = R
            T[:3, 3] = self.origin - R @ self.origin
        return T


@dataclass(frozen=True)
class CollisionBox:
    link: str
    center: np.ndarray
    half: np.ndarray


@dataclass(frozen=True)
class AssetSpec:
    type_name: str
    type_id: int
    kind: str
    bbox: tuple[np.ndarray, np.ndarray]
    annotations: AnnotationSet
    collision: tuple[CollisionBox, ...]
    joint: JointSpec | None = None
    description: str = ""

    @property
    def articulated(self) -> bool:
        return self.kind == "articulated"

    def link_matrix(self, link: str, openness: float | None) -> np.ndarray:
        if link == "base":
            return np.eye(4)
        if self.joint is None:
            raise ValueError(f"{self.type_name} has no movable link")
        return self.joint.link_offset(0.0 if openness is None else openness)

    def local_point(self, name: str, openness: float | None = None) -> np.ndarray:
        """Named inherent point in the asset base frame."""
        pts = self.annotations.inherent.key_points
        if name not in pts:
            raise KeyError(f"{self.type_name} has no point {name!r}")
        T = self.link_matrix(self.annotations.point_links.get(name, "base"), openness)
        return T[:3, :3] @ pts[name] + T[:3, 3]


def _vec(v, name):
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"{name}: expected 3 numbers")
    return arr


def parse_asset(spec: dict, ann: dict) -> AssetSpec:
    lo = _vec(spec["bbox"][0], "bbox")
    hi = _vec(spec["bbox"][1], "bbox")
    if not np.all(lo < hi):
        raise ValueError(f"{spec['type_name']}: bbox min must be < max")
    joint = None
    if spec.get("joint"):
        j = spec["joint"]
        if j["type"] not in ("prismatic", "revolute"):
            raise ValueError(f"unknown joint type {j['type']!r}")
        r = tuple(float(x) for x in j["range"])
        if r[0] == r[1]:
            raise ValueError("joint range must be non-degenerate")
        joint = JointSpec(j["type"], _ro(unit(j["axis"])), _ro(j.get("origin", [0, 0, 0])), r)
    kind = spec.get("kind", "rigid")
    if (kind == "articulated") != (joint is not None):
        raise ValueError(f"{spec['type_name']}: articulated assets need exactly one joint")

    points, links = {}, {}
    for name, val in ann.get("inherent", {}).get("points", {}).items():
        if isinstance(val, dict):
            points[name] = _ro(val["pos"])
            links[name] = val.get("link", "base")
        else:
            points[name] = _ro(val)
            links[name] = "base"
    axes = {k: _ro(unit(v)) for k, v in ann.get("inherent", {}).get("axes", {}).items()}
    ops = []
    for o in ann.get("op", []):
        if o["kind"] not in OP_KINDS:
            raise ValueError(f"op kind {o['kind']!r} not in the atomic library")
        pname = o["point"]
        if pname not in points:
            raise ValueError(f"op entry references unknown point {pname!r}")
        link = links[pname]
        if link != "base" and joint is None:
            raise ValueError("link-relative op on a rigid asset")
        ops.append(OpEntry(
            kind=o["kind"],
            point=pname,
            position=points[pname],
            link=link,
            approach=_ro(unit(o["approach"])) if o.get("approach") is not None else None,
            parallel=tuple(_ro(unit(p)) for p in o.get("parallel", [])),
        ))
    boxes = tuple(
        CollisionBox(c.get("link", "base"), _ro(c["center"]), _ro(c["half"])) for c in spec["collision"]
    )
    for b in boxes:
        if np.any(b.half <= 0):
            raise ValueError("collision half-extents must be positive")
    return AssetSpec(
        type_name=spec["type_name"],
        type_id=int(spec["type_id"]),
        kind=kind,
        bbox=(_ro(lo), _ro(hi)),
        annotations=AnnotationSet(Frame(points, axes), links, tuple(ops), int(ann.get("version", 1))),
        collision=boxes,
        joint=joint,
        description=spec.get("description", ""),
    )


class AssetLibrary:
    """Lazy loader over an asset directory (defaults to the packaged one)."""

    def __init__(self, root: str | Path | None = None):
        if root is None:
            root = resources.files("chainplan.data").joinpath("assets")
        self.root = Path(str(root))
        self._cache: dict[tuple[str, int], AssetSpec] = {}

    def get(self, type_name: str, type_id: int) -> AssetSpec:
        key = (type_name, int(type_id))
        if key not in self._cache:
            d = self.root / type_name / str(int(type_id))
            if not (d / "spec.json").exists():
                raise KeyError(f"unknown asset {type_name}/{type_id}")
            with open(d / "spec.json") as fh:
                spec = json.load(fh)
            with open(d / "annotations.json") as fh:
                ann = json.load(fh)
            self._cache[key] = parse_asset(spec, ann)
        return self._cache[key]

    def available(self) -> list[tuple[str, int]]:
        out = []
        for t in sorted(p for p in self.root.iterdir() if p.is_dir()):
            for i in sorted(p for p in t.iterdir() if (p / "spec.json").exists()):
                out.append((t.name, int(i.name)))
        return out
