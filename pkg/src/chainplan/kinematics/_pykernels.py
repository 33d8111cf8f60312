"""Pure-numpy kernels; reference semantics for the compiled ``_ckernels`` module.

Chain convention: ``T_i = T_{i-1} @ offsets[i] @ Rot(axes[i], theta[i])`` starting
from ``base``; the hand frame is ``T_{n-1} @ ee``.  Constraint rows are packed as
16 floats ``[kind, weight, lower, upper, hand_pt(3), hand_ax(3), tgt_pt(3), tgt_ax(3)]``
with kind 0=point2point, 1=point2line, 2=line2point, 3=axis_parallel.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"

_KIND_P2P, _KIND_P2L, _KIND_L2P, _KIND_PAR = 0, 1, 2, 3


def _rot(axis, angle):
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


def fk_frames(base, offsets, axes, ee, theta):
    n = len(theta)
    frames = np.empty((n + 1, 4, 4))
    T = np.array(base, dtype=float)
    for i in range(n):
        J = np.eye(4)
        J[:3, :3] = _rot(axes[i], theta[i])
        T = T @ offsets[i] @ J
        frames[i] = T
    frames[n] = T @ ee
    return frames


def fk(base, offsets, axes, ee, theta):
    return fk_frames(base, offsets, axes, ee, theta)[-1]


def _rotvec(R):
    cos_a = min(1.0, max(-1.0, (R[0, 0] + R[1, 1] + R[2, 2] - 1.0) * 0.5))
    angle = math.acos(cos_a)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < 1e-9:
        return 0.5 * w
    return w * (angle / (2.0 * math.sin(angle)))


def numeric_jacobian(base, offsets, axes, ee, theta, h=1e-6):
    theta = np.array(theta, dtype=float)
    n = len(theta)
    J = np.zeros((6, n))
    for j in range(n):
        tp = theta.copy()
        tm = theta.copy()
        tp[j] += h
        tm[j] -= h
        Tp = fk(base, offsets, axes, ee, tp)
        Tm = fk(base, offsets, axes, ee, tm)
        J[:3, j] = (Tp[:3, 3] - Tm[:3, 3]) / (2.0 * h)
        J[3:, j] = _rotvec(Tp[:3, :3] @ Tm[:3, :3].T) / (2.0 * h)
    return J


# ---------------------------------------------------------------- distances

def _sphere_box(c, r, inv, half):
    """(depth, outward normal in world) of a sphere against one box."""
    local = inv[:3, :3] @ c + inv[:3, 3]
    clamped = np.clip(local, -half, half)
    diff = local - clamped
    dist = math.sqrt(float(diff @ diff))
    Rb = inv[:3, :3].T
    if dist > 0.0:
        return r - dist, Rb @ (diff / dist)
    gaps = half - np.abs(local)
    k = int(np.argmin(gaps))
    normal = np.zeros(3)
    normal[k] = 1.0 if local[k] >= 0 else -1.0
    return r + gaps[k], Rb @ normal


def sphere_box_depth(centers, radii, box_inv, box_half):
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    out = np.empty((len(centers), len(box_inv)))
    for i, c in enumerate(centers):
        for j in range(len(box_inv)):
            out[i, j] = _sphere_box(c, radii[i], box_inv[j], box_half[j])[0]
    return out


def sphere_sphere_depth(c1, r1, c2, r2):
    c1 = np.asarray(c1, dtype=float).reshape(-1, 3)
    c2 = np.asarray(c2, dtype=float).reshape(-1, 3)
    d = np.linalg.norm(c1[:, None, :] - c2[None, :, :], axis=2)
    return np.asarray(r1)[:, None] + np.asarray(r2)[None, :] - d


def _box_vertices(pose, half):
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
    return (pose[:3, :3] @ (signs * half).T).T + pose[:3, 3]


def box_box_depth(pose1, half1, pose2, half2):
    """Separating-axis penetration depth; <= 0 means separated."""
    out = np.empty((len(pose1), len(pose2)))
    for i in range(len(pose1)):
        for j in range(len(pose2)):
            out[i, j] = _obb_depth(pose1[i], half1[i], pose2[j], half2[j])
    return out


def _obb_depth(Pa, ha, Pb, hb):
    Ra, Rb = Pa[:3, :3], Pb[:3, :3]
    t = Pb[:3, 3] - Pa[:3, 3]
    axes = [Ra[:, k] for k in range(3)] + [Rb[:, k] for k in range(3)]
    for a in range(3):
        for b in range(3):
            axes.append(np.cross(Ra[:, a], Rb[:, b]))
    best = math.inf
    for L in axes:
        n = math.sqrt(float(L @ L))
        if n < 1e-9:
            continue
        L = L / n
        ra = float(np.sum(ha * np.abs(Ra.T @ L)))
        rb = float(np.sum(hb * np.abs(Rb.T @ L)))
        overlap = ra + rb - abs(float(t @ L))
        if overlap < best:
            best = overlap
    return best


def plane_sphere_depth(centers, radii, plane):
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    n, d = np.asarray(plane[:3]), plane[3]
    return np.asarray(radii) - (centers @ n - d)


def plane_box_depth(poses, half, plane):
    n, d = np.asarray(plane[:3]), plane[3]
    out = np.empty(len(poses))
    for i in range(len(poses)):
        v = _box_vertices(poses[i], half[i])
        out[i] = d - float(np.min(v @ n))
    return out


# ---------------------------------------------------------------- solver

def _constraint_rows(cons, P, R, Jn):
    n = Jn.shape[1]
    Jv, Jw = Jn[:3], Jn[3:]
    rows, jrows = [], []
    for c in cons:
        kind = int(c[0])
        sw = math.sqrt(c[1])
        lower, upper = c[2], c[3]
        hp, ha, tp, ta = c[4:7], c[7:10], c[10:13], c[13:16]
        Rhp = R @ hp
        a = P + Rhp
        u = R @ ha
        da = Jv + np.cross(Jw.T, Rhp).T
        du = np.cross(Jw.T, u).T
        if kind == _KIND_P2P:
            rv, drv = a - tp, da
        elif kind == _KIND_P2L:
            M = np.eye(3) - np.outer(ta, ta)
            rv, drv = M @ (a - tp), M @ da
        elif kind == _KIND_L2P:
            M = np.eye(3) - np.outer(u, u)
            e = tp - a
            rv = M @ e
            # d[(I - u u^T) e] = -(du u^T + u du^T) e - M da
            drv = -(M @ da) - du * (u @ e) - np.outer(u, e @ du)
        else:
            rv, drv = u - ta, du
        if lower > 0.0:
            if kind == _KIND_PAR:
                cs = min(1.0, max(-1.0, float(u @ ta)))
                val = math.acos(cs)
                s = math.sqrt(max(1.0 - cs * cs, 1e-18))
                dval = -(ta @ du) / s
            else:
                val = math.sqrt(float(rv @ rv))
                dval = (rv @ drv) / val if val > 1e-15 else np.zeros(n)
            g = val - min(max(val, lower), upper)
            dg = dval if (val < lower or val > upper) else np.zeros(n)
            rows.extend([sw * g, 0.0, 0.0])
            jrows.extend([sw * dg, np.zeros(n), np.zeros(n)])
        else:
            rows.extend(sw * rv)
            jrows.extend(sw * drv)
    return rows, jrows


def _penetration(c, r, obs_inv, obs_half, obs_c, obs_r, plane, margin):
    total = 0.0
    grad = np.zeros(3)
    for j in range(len(obs_inv)):
        depth, normal = _sphere_box(c, r, obs_inv[j], obs_half[j])
        if depth + margin > 0.0:
            total += depth + margin
            grad -= normal
    for j in range(len(obs_c)):
        diff = c - obs_c[j]
        dist = math.sqrt(float(diff @ diff))
        depth = r + obs_r[j] - dist
        if depth + margin > 0.0 and dist > 1e-12:
            total += depth + margin
            grad -= diff / dist
    if plane[0] != 0.0 or plane[1] != 0.0 or plane[2] != 0.0:
        depth = r - (float(c @ plane[:3]) - plane[3])
        if depth + margin > 0.0:
            total += depth + margin
            grad -= plane[:3]
    return total, grad


def residual_jacobian(base, offsets, axes, ee, theta, theta_ref, w_ref, cons,
                      sph_link, sph_local, sph_r, mov_pts,
                      obs_inv, obs_half, obs_c, obs_r, plane, w_col, margin,
                      with_jacobian=True):
    theta = np.asarray(theta, dtype=float)
    n = len(theta)
    frames = fk_frames(base, offsets, axes, ee, theta)
    P, R = frames[n][:3, 3], frames[n][:3, :3]
    Jn = numeric_jacobian(base, offsets, axes, ee, theta) if with_jacobian else np.zeros((6, n))
    rows, jrows = _constraint_rows(cons, P, R, Jn)
    if w_ref > 0.0:
        sr = math.sqrt(w_ref)
        for j in range(n):
            rows.append(sr * (theta[j] - theta_ref[j]))
            e = np.zeros(n)
            e[j] = sr
            jrows.append(e)
    if w_col > 0.0:
        sc = math.sqrt(w_col)
        w_axes = [frames[j][:3, :3] @ axes[j] for j in range(n)]
        origins = [frames[j][:3, 3] for j in range(n)]
        items = [(int(sph_link[k]), sph_local[k], sph_r[k]) for k in range(len(sph_r))]
        items += [(n, mov_pts[k], 0.0) for k in range(len(mov_pts))]
        for link, local, rad in items:
            F = frames[link]
            c = F[:3, :3] @ local + F[:3, 3]
            depth, grad = _penetration(c, rad, obs_inv, obs_half, obs_c, obs_r, plane, margin)
            rows.append(sc * depth)
            drow = np.zeros(n)
            if depth > 0.0 and with_jacobian:
                for j in range(min(link, n - 1) + 1):
                    drow[j] = sc * float(grad @ np.cross(w_axes[j], c - origins[j]))
            jrows.append(drow)
    r = np.array(rows, dtype=float)
    J = np.array(jrows, dtype=float).reshape(len(rows), n)
    return r, J


def lm_solve(base, offsets, axes, ee, lo, hi, theta0, theta_ref, w_ref, cons,
             sph_link, sph_local, sph_r, mov_pts,
             obs_inv, obs_half, obs_c, obs_r, plane, w_col, margin, max_iter):
    """Levenberg-Marquardt on the stacked residual, joints clipped to limits."""
    args = (theta_ref, w_ref, cons, sph_link, sph_local, sph_r, mov_pts,
            obs_inv, obs_half, obs_c, obs_r, plane, w_col, margin)
    theta = np.clip(np.asarray(theta0, dtype=float), lo, hi)
    n = len(theta)
    r, J = residual_jacobian(base, offsets, axes, ee, theta, *args)
    cost = float(r @ r)
    lam = 1e-3
    it = 0
    while it < max_iter and cost > 1e-24:
        it += 1
        A = J.T @ J
        g = J.T @ r
        improved = False
        for _ in range(10):
            delta = _chol_solve(A + lam * np.eye(n), -g)
            cand = np.clip(theta + delta, lo, hi)
            rc, _ = residual_jacobian(base, offsets, axes, ee, cand, *args, with_jacobian=False)
            cc = float(rc @ rc)
            if cc < cost:
                improved = True
                break
            lam *= 5.0
        if not improved:
            break
        gain = cost - cc
        theta, cost = cand, cc
        lam = max(lam * 0.3, 1e-9)
        if gain <= 1e-12 * cost + 1e-26:
            break
        r, J = residual_jacobian(base, offsets, axes, ee, theta, *args)
    return theta, cost, it


def _chol_solve(A, b):
    n = len(b)
    L = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            s = A[i, j] - float(L[i, :j] @ L[j, :j])
            if i == j:
                L[i, i] = math.sqrt(max(s, 1e-300))
            else:
                L[i, j] = s / L[j, j]
    y = np.zeros(n)
    for i in range(n):
        y[i] = (b[i] - float(L[i, :i] @ y[:i])) / L[i, i]
    x = np.zeros(n)
    for i in reversed(range(n)):
        x[i] = (y[i] - float(L[i + 1:, i] @ x[i + 1:])) / L[i, i]
    return x
