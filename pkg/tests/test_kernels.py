import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainplan.constraints.constraint import Constraint
from chainplan.geometry import Pose, axis_angle_matrix, quat_normalize
from chainplan.kinematics import backend
from chainplan.kinematics.arm import load_robot

PY = backend.get("python")
try:
    CY = backend.get("cython")
except ImportError:  # pure-Python install
    CY = None
needs_ext = pytest.mark.skipif(CY is None, reason="compiled extension not built")

ROBOT = load_robot()
seeds = st.integers(0, 2**32 - 1)


def _rand_pose(rng, spread=0.3):
    q = quat_normalize(rng.normal(size=4))
    return Pose(rng.uniform(-spread, spread, 3), q).matrix()


def _theta(rng, arm):
    return rng.uniform(arm.lower, arm.upper)


def test_backend_is_selected():
    assert backend.BACKEND in ("python", "cython")
    with pytest.raises(ValueError):
        backend.get("fortran")


@given(seeds, st.sampled_from(["left", "right"]))
def test_fk_matches_hand_composed_chain(seed, side):
    arm = ROBOT.arm(side)
    th = _theta(np.random.default_rng(seed), arm)
    T = arm.base.copy()
    for off, ax, a in zip(arm.offsets, arm.axes, th):
        J = np.eye(4)
        J[:3, :3] = axis_angle_matrix(ax, a)
        T = T @ off @ J
    assert np.allclose(PY.fk(*arm.chain(), th), T @ arm.ee, atol=1e-12)


def test_sphere_box_hand_cases():
    inv = np.eye(4)[None]
    half = np.ones((1, 3))
    # outside along x: distance to face 1, radius 1.5
    assert PY.sphere_box_depth(np.array([[2.0, 0, 0]]), np.array([1.5]), inv, half)[0, 0] == pytest.approx(0.5)
    # centre inside: nearest face 0.25 away
    assert PY.sphere_box_depth(np.array([[0.75, 0, 0]]), np.array([0.1]), inv, half)[0, 0] == pytest.approx(0.35)
    # outside near a corner: distance sqrt(2)
    d = PY.sphere_box_depth(np.array([[2.0, 2.0, 0]]), np.array([1.0]), inv, half)[0, 0]
    assert d == pytest.approx(1.0 - np.sqrt(2.0))


def test_box_box_hand_cases():
    I = np.eye(4)
    T = np.eye(4)
    T[0, 3] = 1.5
    h = np.ones((1, 3))
    assert PY.box_box_depth(I[None], h, T[None], h)[0, 0] == pytest.approx(0.5)
    T[0, 3] = 3.0
    assert PY.box_box_depth(I[None], h, T[None], h)[0, 0] == pytest.approx(-1.0)


def test_plane_hand_cases():
    plane = np.array([0, 0, 1.0, 0.0])
    assert PY.plane_sphere_depth(np.array([[0, 0, 0.05]]), np.array([0.1]), plane)[0] == pytest.approx(0.05)
    T = np.eye(4)
    T[2, 3] = 0.5
    assert PY.plane_box_depth(T[None], np.array([[1.0, 1.0, 0.2]]), plane)[0] == pytest.approx(-0.3)


@needs_ext
@given(seeds, st.sampled_from(["left", "right"]))
def test_fk_backends_agree(seed, side):
    arm = ROBOT.arm(side)
    th = _theta(np.random.default_rng(seed), arm)
    assert np.allclose(PY.fk_frames(*arm.chain(), th), CY.fk_frames(*arm.chain(), th), atol=1e-13)


@needs_ext
@given(seeds)
def test_collision_backends_agree(seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(-0.5, 0.5, (6, 3))
    r = rng.uniform(0.01, 0.2, 6)
    boxes = np.array([_rand_pose(rng) for _ in range(4)])
    inv = np.linalg.inv(boxes)
    half = rng.uniform(0.02, 0.3, (4, 3))
    assert np.allclose(PY.sphere_box_depth(c, r, inv, half), CY.sphere_box_depth(c, r, inv, half), atol=1e-12)
    assert np.allclose(PY.box_box_depth(boxes, half, boxes[::-1], half[::-1]),
                       CY.box_box_depth(boxes, half, boxes[::-1], half[::-1]), atol=1e-12)
    c2, r2 = rng.uniform(-0.5, 0.5, (3, 3)), rng.uniform(0.01, 0.2, 3)
    assert np.allclose(PY.sphere_sphere_depth(c, r, c2, r2), CY.sphere_sphere_depth(c, r, c2, r2), atol=1e-12)
    plane = np.concatenate([quat_normalize(rng.normal(size=4))[1:], [0.1]])
    plane[:3] /= np.linalg.norm(plane[:3])
    assert np.allclose(PY.plane_sphere_depth(c, r, plane), CY.plane_sphere_depth(c, r, plane), atol=1e-12)
    assert np.allclose(PY.plane_box_depth(boxes, half, plane), CY.plane_box_depth(boxes, half, plane), atol=1e-12)


def _solve(mod, arm, rows, theta0):
    e3, ebox = np.zeros((0, 3)), np.zeros((0, 4, 4))
    return mod.lm_solve(arm.base, arm.offsets, arm.axes, arm.ee, arm.lower, arm.upper, theta0, arm.nominal,
                        0.05, rows, arm.sph_link, arm.sph_local, arm.sph_r, e3, ebox, e3, e3, np.zeros(0),
                        np.zeros(4), 0.0, 1e-3, 100)


@needs_ext
@settings(max_examples=25)
@given(seeds, st.sampled_from(["left", "right"]))
def test_lm_solve_backends_agree(seed, side):
    rng = np.random.default_rng(seed)
    arm = ROBOT.arm(side)
    target = PY.fk(*arm.chain(), _theta(rng, arm))[:3, 3]
    rows = np.array([Constraint("point2point", side, hand_point=np.zeros(3), target_point=target).pack(),
                     Constraint("axis_parallel", side, hand_axis=[0, 0, 1], target_axis=[0, 0, -1]).pack()])
    th0 = _theta(rng, arm)
    a, ca, _ = _solve(PY, arm, rows, th0)
    b, cb, _ = _solve(CY, arm, rows, th0)
    assert np.allclose(a, b, atol=1e-6)
    assert ca == pytest.approx(cb, abs=1e-9)
