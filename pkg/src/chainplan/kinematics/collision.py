"""Primitive collision checks (spheres, boxes, table half-space) honouring the ignore list."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import kernels

CONTACT_TOL = 1e-3
# link pairs closer than this along the chain never self-collide
SELF_EXCLUDE = 2


@dataclass(frozen=True)
class Contact:
    a: str
    b: str
    depth: float

    def __str__(self):
        return f"{self.a}<->{self.b} ({self.depth * 1000:.1f} mm)"


@dataclass
class Obstacles:
    """Packed obstacle arrays consumed by the solver kernels for one arm."""

    box_inv: np.ndarray
    box_half: np.ndarray
    box_owner: list
    sph_c: np.ndarray
    sph_r: np.ndarray
    plane: np.ndarray
    carried_pts: np.ndarray  # points in the hand frame (held object samples)

    def args(self):
        return (self.carried_pts, self.box_inv, self.box_half, self.sph_c, self.sph_r, self.plane)


def box_samples(half: np.ndarray) -> np.ndarray:
    """Corners, edge midpoints, face centres and centre of a box (27 points)."""
    g = np.array([-1.0, 0.0, 1.0])
    pts = np.array([[x, y, z] for x in g for y in g for z in g])
    return pts * half


def obstacles_for(scene, state, side: str, ignore=None, other_theta=None) -> Obstacles:
    ignore = state.ignore if ignore is None else ignore
    att = state.attachments.get(side)
    held = att.obj if att is not None else None
    invs, halves, owners = [], [], []
    for key in state.object_poses:
        if key in ignore or key == held:
            continue
        for T, half, link in scene.object_boxes(state, key):
            invs.append(np.linalg.inv(T))
            halves.append(half)
            owners.append(key)
    for b in scene.static_boxes:
        invs.append(np.linalg.inv(b.pose.matrix()))
        halves.append(b.half)
        owners.append(("static", 0))
    other = [s for s in scene.robot.arms if s != side]
    cs, rs = [], []
    for o in other:
        theta = state.arm_angles[o] if other_theta is None else other_theta
        c, r = scene.robot.arm(o).spheres(theta)
        cs.append(c)
        rs.append(r)
    carried = np.zeros((0, 3))
    if att is not None and att.link == "base":
        hand = scene.hand_pose(state, side)
        pts = []
        for T, half, _ in scene.object_boxes(state, held):
            world = (T[:3, :3] @ box_samples(half).T).T + T[:3, 3]
            pts.append((world - hand.p) @ hand.R)
        carried = np.concatenate(pts) if pts else carried
    return Obstacles(
        box_inv=np.array(invs).reshape(-1, 4, 4),
        box_half=np.array(halves).reshape(-1, 3),
        box_owner=owners,
        sph_c=np.concatenate(cs) if cs else np.zeros((0, 3)),
        sph_r=np.concatenate(rs) if rs else np.zeros(0),
        plane=scene.table_plane(),
        carried_pts=np.ascontiguousarray(carried),
    )


def _name(key) -> str:
    return f"{key[0]}{key[1]}"


def collision_check(scene, state, angles: dict | None = None, ignore=None, tol: float = CONTACT_TOL,
                    sides=None) -> list[Contact]:
    """All primitive contacts deeper than ``tol`` for the given arm angles.

    ``angles`` overrides ``state.arm_angles`` per side; held objects follow
    their hand.  Objects in ``ignore`` (default: the state's list) are skipped.
    """
    ignore = state.ignore if ignore is None else frozenset(ignore)
    angles = {**state.arm_angles, **(angles or {})}
    sides = tuple(scene.robot.arms) if sides is None else tuple(sides)
    robot = scene.robot
    plane = scene.table_plane()
    contacts: list[Contact] = []

    # held objects at the hypothetical hand poses
    held = {}
    own = {}  # side -> object whose contact with that hand is intended
    for side, att in state.attachments.items():
        if att is None:
            continue
        own[side] = att.obj
        if att.link != "base" or att.obj in ignore:
            continue
        hand = robot.arm(side).fk(angles[side])
        held[att.obj] = (side, scene.object_boxes(_moved(state, att.obj, hand * att.rel), att.obj))

    world_boxes = []
    for key in state.object_poses:
        if key in ignore:
            continue
        boxes = held[key][1] if key in held else scene.object_boxes(state, key)
        for T, half, _ in boxes:
            world_boxes.append((key, T, half))
    for b in scene.static_boxes:
        world_boxes.append((("static", 0), b.pose.matrix(), b.half))

    if world_boxes:
        all_inv = np.linalg.inv(np.array([w[1] for w in world_boxes]))
        all_half = np.array([w[2] for w in world_boxes])
    spheres = {s: robot.arm(s).spheres(angles[s]) for s in robot.arms}
    for side in robot.arms:
        c, r = spheres[side]
        links = robot.arm(side).sph_link
        check_side = side in sides
        if check_side:
            d = kernels.plane_sphere_depth(c, r, plane)
            for k in np.nonzero(d > tol)[0]:
                contacts.append(Contact(f"{side}_link{links[k]}", "table", float(d[k])))
            if world_boxes:
                D = kernels.sphere_box_depth(c, r, all_inv, all_half)
                for k, m in zip(*np.nonzero(D > tol)):
                    key = world_boxes[m][0]
                    if own.get(side) == key:
                        continue
                    contacts.append(Contact(f"{side}_link{links[k]}", _name(key), float(D[k, m])))
            # self collision, skipping near-adjacent links
            d = kernels.sphere_sphere_depth(c, r, c, r)
            for i in range(len(r)):
                for j in range(i + 1, len(r)):
                    if abs(int(links[i]) - int(links[j])) > SELF_EXCLUDE and d[i, j] > tol:
                        contacts.append(Contact(f"{side}_link{links[i]}", f"{side}_link{links[j]}", float(d[i, j])))
    side_list = list(robot.arms)
    for i, a in enumerate(side_list):
        for b in side_list[i + 1:]:
            if a not in sides and b not in sides:
                continue
            d = kernels.sphere_sphere_depth(spheres[a][0], spheres[a][1], spheres[b][0], spheres[b][1])
            for k, m in zip(*np.nonzero(d > tol)):
                contacts.append(Contact(f"{a}_link{robot.arm(a).sph_link[k]}",
                                        f"{b}_link{robot.arm(b).sph_link[m]}", float(d[k, m])))
    # held objects against the world and the table (the other arm is covered above)
    for key, (side, boxes) in held.items():
        if side not in sides:
            continue
        for T, half, _ in boxes:
            d = kernels.plane_box_depth(T[None], half[None], plane)[0]
            if d > tol:
                contacts.append(Contact(_name(key), "table", float(d)))
            for okey, T2, half2 in world_boxes:
                if okey == key:
                    continue
                d = kernels.box_box_depth(T[None], half[None], T2[None], half2[None])[0, 0]
                if d > tol:
                    contacts.append(Contact(_name(key), _name(okey), float(d)))
    return contacts


def _moved(state, key, pose):
    s = state.copy()
    s.object_poses[key] = pose
    return s
