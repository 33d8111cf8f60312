"""Task success predicates over the final world state."""

from __future__ import annotations

import numpy as np

EPS_XY = 0.03
EPS_Z = 0.005
HEIGHT_DIFF = 0.04
# slack on articulation targets
OPENNESS_TOL = 0.02


def _canonical(scene, state, key) -> np.ndarray:
    return scene.frame.inverse().transform_point(state.object_poses[key].p)


def _free(state, keys) -> bool:
    return all(state.holder_of(k) is None for k in keys)


def stacked(positions, eps_xy: float = EPS_XY, eps_z: float = EPS_Z, height_diff: float = HEIGHT_DIFF) -> bool:
    """Positions form one column: xy aligned, successive z gaps of one cube height."""
    pts = sorted((np.asarray(p, dtype=float) for p in positions), key=lambda p: p[2])
    for lo, hi in zip(pts, pts[1:]):
        if np.any(np.abs(hi[:2] - lo[:2]) > eps_xy):
            return False
        if abs((hi[2] - lo[2]) - height_diff) > eps_z:
            return False
    return True


def at_targets(positions, targets, eps=(EPS_XY, EPS_XY)) -> bool:
    """Every position within ``eps`` of its target in x and y."""
    for p, t in zip(positions, targets):
        if any(abs(p[i] - t[i]) > eps[i] for i in range(2)):
            return False
    return True


def _cubes(state, n):
    return [("cube", i) for i in range(n)]


def _stack_task(n):
    def check(scene, state) -> bool:
        keys = _cubes(state, n)
        return _free(state, keys) and stacked([_canonical(scene, state, k) for k in keys])
    return check


def pyramid(scene, state) -> bool:
    keys = _cubes(state, 3)
    if not _free(state, keys):
        return False
    a, b, top = (_canonical(scene, state, k) for k in keys)
    if abs(a[2] - b[2]) > EPS_Z:
        return False
    gap = np.linalg.norm(a[:2] - b[:2])
    if not 0.04 <= gap <= 0.06:
        return False
    mid = 0.5 * (a + b)
    return bool(np.all(np.abs(top[:2] - mid[:2]) <= 0.015) and abs(top[2] - mid[2] - HEIGHT_DIFF) <= EPS_Z)


def _openness_task(lo, hi):
    def check(scene, state) -> bool:
        key = ("drawer", 0)
        return _free(state, [key]) and lo <= state.openness[key] <= hi
    return check


def handover(scene, state) -> bool:
    rect, base = ("rect_cube", 0), ("cube", 0)
    if not _free(state, [rect, base]):
        return False
    r, b = _canonical(scene, state, rect), _canonical(scene, state, base)
    return bool(np.all(np.abs(r[:2] - b[:2]) <= EPS_XY) and abs(r[2] - b[2] - HEIGHT_DIFF) <= EPS_Z)


def stored(scene, state) -> bool:
    rect, drawer = ("rect_cube", 0), ("drawer", 0)
    if not _free(state, [rect, drawer]):
        return False
    sup = state.supports.get(rect)
    return sup is not None and sup[0] == drawer and state.openness[drawer] <= 0.1


PREDICATES = {
    "block_stack_single": _stack_task(2),
    "blocks_stack_easy": _stack_task(2),
    "blocks_stack_hard": _stack_task(3),
    "pyramid_stack": pyramid,
    "open_drawer": _openness_task(0.9 - OPENNESS_TOL, 1.0),
    "close_drawer": _openness_task(0.0, 0.1 + OPENNESS_TOL),
    "block_handover": handover,
    "handover_and_storage": stored,
}


def check_success(task: str, scene, state) -> bool:
    if task not in PREDICATES:
        raise KeyError(f"unknown task {task!r}")
    return bool(PREDICATES[task](scene, state))
