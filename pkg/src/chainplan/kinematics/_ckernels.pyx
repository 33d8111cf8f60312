# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels.  Same contract and argument layout as ``_pykernels``."""

import numpy as np

from libc.math cimport sqrt, sin, cos, acos, fabs, INFINITY
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy, memset

BACKEND = "cython"

cdef enum:
    MAXJ = 16

cdef struct Prob:
    int n
    const double* base
    const double* offsets
    const double* axes
    const double* ee
    const double* lo
    const double* hi
    const double* theta_ref
    double w_ref
    int ncons
    const double* cons
    int nsph
    const int* sph_link
    const double* sph_local
    const double* sph_r
    int nmov
    const double* mov_pts
    int nbox
    const double* obs_inv
    const double* obs_half
    int nobs
    const double* obs_c
    const double* obs_r
    const double* plane
    double w_col
    double margin


cdef inline void _rot3(const double* a, double t, double* R) noexcept nogil:
    cdef double x = a[0], y = a[1], z = a[2]
    cdef double c = cos(t), s = sin(t)
    cdef double C = 1.0 - c
    R[0] = c + x * x * C
    R[1] = x * y * C - z * s
    R[2] = x * z * C + y * s
    R[3] = y * x * C + z * s
    R[4] = c + y * y * C
    R[5] = y * z * C - x * s
    R[6] = z * x * C - y * s
    R[7] = z * y * C + x * s
    R[8] = c + z * z * C


cdef inline void _mm4(const double* A, const double* B, double* C) noexcept nogil:
    cdef int i, j, k
    cdef double s
    for i in range(4):
        for j in range(4):
            s = 0.0
            for k in range(4):
                s += A[4 * i + k] * B[4 * k + j]
            C[4 * i + j] = s


cdef void _fk_frames(const Prob* P, const double* theta, double* frames) noexcept nogil:
    cdef int n = P.n
    cdef int i, r, c
    cdef double T[16]
    cdef double tmp[16]
    cdef double Jm[16]
    cdef double R[9]
    memcpy(T, P.base, 16 * sizeof(double))
    for i in range(n):
        _rot3(P.axes + 3 * i, theta[i], R)
        memset(Jm, 0, 16 * sizeof(double))
        for r in range(3):
            for c in range(3):
                Jm[4 * r + c] = R[3 * r + c]
        Jm[15] = 1.0
        _mm4(T, P.offsets + 16 * i, tmp)
        _mm4(tmp, Jm, frames + 16 * i)
        memcpy(T, frames + 16 * i, 16 * sizeof(double))
    _mm4(T, P.ee, frames + 16 * n)


cdef void _fk_ee(const Prob* P, const double* theta, double* out) noexcept nogil:
    cdef double frames[(MAXJ + 1) * 16]
    _fk_frames(P, theta, frames)
    memcpy(out, frames + 16 * P.n, 16 * sizeof(double))


cdef void _rotvec_rel(const double* Tp, const double* Tm, double* w) noexcept nogil:
    # rotation vector of Rp @ Rm^T
    cdef double M[9]
    cdef int i, j, k
    cdef double s, cos_a, angle, f
    for i in range(3):
        for j in range(3):
            s = 0.0
            for k in range(3):
                s += Tp[4 * i + k] * Tm[4 * j + k]
            M[3 * i + j] = s
    cos_a = (M[0] + M[4] + M[8] - 1.0) * 0.5
    if cos_a > 1.0:
        cos_a = 1.0
    elif cos_a < -1.0:
        cos_a = -1.0
    angle = acos(cos_a)
    w[0] = M[7] - M[5]
    w[1] = M[2] - M[6]
    w[2] = M[3] - M[1]
    if angle < 1e-9:
        f = 0.5
    else:
        f = angle / (2.0 * sin(angle))
    w[0] *= f
    w[1] *= f
    w[2] *= f


cdef void _jacobian(const Prob* P, const double* theta, double h, double* J) noexcept nogil:
    # J is 6 x n row-major
    cdef int n = P.n
    cdef int j, k
    cdef double tp[MAXJ]
    cdef double tm[MAXJ]
    cdef double Tp[16]
    cdef double Tm[16]
    cdef double w[3]
    for j in range(n):
        memcpy(tp, theta, n * sizeof(double))
        memcpy(tm, theta, n * sizeof(double))
        tp[j] += h
        tm[j] -= h
        _fk_ee(P, tp, Tp)
        _fk_ee(P, tm, Tm)
        J[0 * n + j] = (Tp[3] - Tm[3]) / (2.0 * h)
        J[1 * n + j] = (Tp[7] - Tm[7]) / (2.0 * h)
        J[2 * n + j] = (Tp[11] - Tm[11]) / (2.0 * h)
        _rotvec_rel(Tp, Tm, w)
        for k in range(3):
            J[(3 + k) * n + j] = w[k] / (2.0 * h)


cdef inline void _cross(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline double _dot3(const double* a, const double* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


cdef double _sphere_box(const double* c, double r, const double* inv, const double* half,
                        double* normal) noexcept nogil:
    cdef double local[3]
    cdef double diff[3]
    cdef double nl[3]
    cdef double q, dist, gap, best, depth
    cdef int i, k
    for i in range(3):
        local[i] = inv[4 * i] * c[0] + inv[4 * i + 1] * c[1] + inv[4 * i + 2] * c[2] + inv[4 * i + 3]
        q = local[i]
        if q < -half[i]:
            q = -half[i]
        elif q > half[i]:
            q = half[i]
        diff[i] = local[i] - q
    dist = sqrt(_dot3(diff, diff))
    if dist > 0.0:
        for i in range(3):
            nl[i] = diff[i] / dist
        depth = r - dist
    else:
        k = 0
        best = INFINITY
        for i in range(3):
            gap = half[i] - fabs(local[i])
            if gap < best:
                best = gap
                k = i
        nl[0] = 0.0
        nl[1] = 0.0
        nl[2] = 0.0
        nl[k] = 1.0 if local[k] >= 0 else -1.0
        depth = r + best
    # world normal = inv[:3,:3]^T nl
    for i in range(3):
        normal[i] = inv[i] * nl[0] + inv[4 + i] * nl[1] + inv[8 + i] * nl[2]
    return depth


cdef double _penetration(const Prob* P, const double* c, double r, double* grad) noexcept nogil:
    cdef double total = 0.0
    cdef double normal[3]
    cdef double diff[3]
    cdef double depth, dist
    cdef int j, i
    grad[0] = 0.0
    grad[1] = 0.0
    grad[2] = 0.0
    for j in range(P.nbox):
        depth = _sphere_box(c, r, P.obs_inv + 16 * j, P.obs_half + 3 * j, normal)
        if depth + P.margin > 0.0:
            total += depth + P.margin
            for i in range(3):
                grad[i] -= normal[i]
    for j in range(P.nobs):
        for i in range(3):
            diff[i] = c[i] - P.obs_c[3 * j + i]
        dist = sqrt(_dot3(diff, diff))
        depth = r + P.obs_r[j] - dist
        if depth + P.margin > 0.0 and dist > 1e-12:
            total += depth + P.margin
            for i in range(3):
                grad[i] -= diff[i] / dist
    if P.plane[0] != 0.0 or P.plane[1] != 0.0 or P.plane[2] != 0.0:
        depth = r - (_dot3(c, P.plane) - P.plane[3])
        if depth + P.margin > 0.0:
            total += depth + P.margin
            for i in range(3):
                grad[i] -= P.plane[i]
    return total


cdef int _nrows(const Prob* P) noexcept nogil:
    cdef int m = 3 * P.ncons
    if P.w_ref > 0.0:
        m += P.n
    if P.w_col > 0.0:
        m += P.nsph + P.nmov
    return m


cdef void _residual(const Prob* P, const double* theta, double* res, double* Jout,
                    bint with_jac) noexcept nogil:
    """Fill residual ``res`` (m) and, if requested, ``Jout`` (m x n row-major)."""
    cdef int n = P.n
    cdef double frames[(MAXJ + 1) * 16]
    cdef double Jn[6 * MAXJ]
    cdef double Pe[3]
    cdef double R[9]
    cdef double Rhp[3]
    cdef double a[3]
    cdef double u[3]
    cdef double e[3]
    cdef double rv[3]
    cdef double da[3 * MAXJ]
    cdef double du[3 * MAXJ]
    cdef double drv[3 * MAXJ]
    cdef double dval[MAXJ]
    cdef double wj[3]
    cdef double tmp[3]
    cdef double Mda[3]
    cdef double c3[3]
    cdef double grad[3]
    cdef double waxes[3 * MAXJ]
    cdef double origins[3 * MAXJ]
    cdef double M[9]
    cdef const double* con
    cdef const double* hp
    cdef const double* ha
    cdef const double* tp
    cdef const double* ta
    cdef const double* F
    cdef const double* local
    cdef int i, j, k, kk, row, kind, link, lim, total_items
    cdef double sw, lower, upper, val, g, cs, s, ue, sr, sc, depth, rad
    cdef bint outside
    row = 0
    _fk_frames(P, theta, frames)
    F = frames + 16 * n
    for i in range(3):
        Pe[i] = F[4 * i + 3]
        for j in range(3):
            R[3 * i + j] = F[4 * i + j]
    if with_jac:
        _jacobian(P, theta, 1e-6, Jn)
    else:
        memset(Jn, 0, 6 * n * sizeof(double))
    for kk in range(P.ncons):
        con = P.cons + 16 * kk
        kind = <int>con[0]
        sw = sqrt(con[1])
        lower = con[2]
        upper = con[3]
        hp = con + 4
        ha = con + 7
        tp = con + 10
        ta = con + 13
        for i in range(3):
            Rhp[i] = R[3 * i] * hp[0] + R[3 * i + 1] * hp[1] + R[3 * i + 2] * hp[2]
            u[i] = R[3 * i] * ha[0] + R[3 * i + 1] * ha[1] + R[3 * i + 2] * ha[2]
            a[i] = Pe[i] + Rhp[i]
        for j in range(n):
            wj[0] = Jn[3 * n + j]
            wj[1] = Jn[4 * n + j]
            wj[2] = Jn[5 * n + j]
            _cross(wj, Rhp, tmp)
            for i in range(3):
                da[i * n + j] = Jn[i * n + j] + tmp[i]
            _cross(wj, u, tmp)
            for i in range(3):
                du[i * n + j] = tmp[i]
        if kind == 0:
            for i in range(3):
                rv[i] = a[i] - tp[i]
                for j in range(n):
                    drv[i * n + j] = da[i * n + j]
        elif kind == 1:
            for i in range(3):
                for k in range(3):
                    M[3 * i + k] = (1.0 if i == k else 0.0) - ta[i] * ta[k]
            for i in range(3):
                e[i] = a[i] - tp[i]
            for i in range(3):
                rv[i] = M[3 * i] * e[0] + M[3 * i + 1] * e[1] + M[3 * i + 2] * e[2]
                for j in range(n):
                    drv[i * n + j] = (M[3 * i] * da[j] + M[3 * i + 1] * da[n + j]
                                      + M[3 * i + 2] * da[2 * n + j])
        elif kind == 2:
            for i in range(3):
                for k in range(3):
                    M[3 * i + k] = (1.0 if i == k else 0.0) - u[i] * u[k]
            for i in range(3):
                e[i] = tp[i] - a[i]
            ue = _dot3(u, e)
            for i in range(3):
                rv[i] = M[3 * i] * e[0] + M[3 * i + 1] * e[1] + M[3 * i + 2] * e[2]
            for j in range(n):
                s = e[0] * du[j] + e[1] * du[n + j] + e[2] * du[2 * n + j]
                for i in range(3):
                    Mda[i] = (M[3 * i] * da[j] + M[3 * i + 1] * da[n + j]
                              + M[3 * i + 2] * da[2 * n + j])
                    drv[i * n + j] = -Mda[i] - du[i * n + j] * ue - u[i] * s
        else:
            for i in range(3):
                rv[i] = u[i] - ta[i]
                for j in range(n):
                    drv[i * n + j] = du[i * n + j]
        if lower > 0.0:
            if kind == 3:
                cs = _dot3(u, ta)
                if cs > 1.0:
                    cs = 1.0
                elif cs < -1.0:
                    cs = -1.0
                val = acos(cs)
                s = 1.0 - cs * cs
                if s < 1e-18:
                    s = 1e-18
                s = sqrt(s)
                for j in range(n):
                    dval[j] = -(ta[0] * du[j] + ta[1] * du[n + j] + ta[2] * du[2 * n + j]) / s
            else:
                val = sqrt(_dot3(rv, rv))
                for j in range(n):
                    if val > 1e-15:
                        dval[j] = (rv[0] * drv[j] + rv[1] * drv[n + j] + rv[2] * drv[2 * n + j]) / val
                    else:
                        dval[j] = 0.0
            g = val
            if g < lower:
                g = lower
            if g > upper:
                g = upper
            g = val - g
            outside = val < lower or val > upper
            res[row] = sw * g
            res[row + 1] = 0.0
            res[row + 2] = 0.0
            if with_jac:
                for j in range(n):
                    Jout[row * n + j] = sw * dval[j] if outside else 0.0
                    Jout[(row + 1) * n + j] = 0.0
                    Jout[(row + 2) * n + j] = 0.0
            row += 3
        else:
            for i in range(3):
                res[row] = sw * rv[i]
                if with_jac:
                    for j in range(n):
                        Jout[row * n + j] = sw * drv[i * n + j]
                row += 1
    if P.w_ref > 0.0:
        sr = sqrt(P.w_ref)
        for j in range(n):
            res[row] = sr * (theta[j] - P.theta_ref[j])
            if with_jac:
                for k in range(n):
                    Jout[row * n + k] = sr if k == j else 0.0
            row += 1
    if P.w_col > 0.0:
        sc = sqrt(P.w_col)
        for j in range(n):
            F = frames + 16 * j
            for i in range(3):
                waxes[3 * j + i] = (F[4 * i] * P.axes[3 * j] + F[4 * i + 1] * P.axes[3 * j + 1]
                                    + F[4 * i + 2] * P.axes[3 * j + 2])
                origins[3 * j + i] = F[4 * i + 3]
        total_items = P.nsph + P.nmov
        for kk in range(total_items):
            if kk < P.nsph:
                link = P.sph_link[kk]
                local = P.sph_local + 3 * kk
                rad = P.sph_r[kk]
            else:
                link = n
                local = P.mov_pts + 3 * (kk - P.nsph)
                rad = 0.0
            F = frames + 16 * link
            for i in range(3):
                c3[i] = F[4 * i] * local[0] + F[4 * i + 1] * local[1] + F[4 * i + 2] * local[2] + F[4 * i + 3]
            depth = _penetration(P, c3, rad, grad)
            res[row] = sc * depth
            if with_jac:
                for j in range(n):
                    Jout[row * n + j] = 0.0
                if depth > 0.0:
                    lim = link if link < n - 1 else n - 1
                    for j in range(lim + 1):
                        for i in range(3):
                            e[i] = c3[i] - origins[3 * j + i]
                        _cross(waxes + 3 * j, e, tmp)
                        Jout[row * n + j] = sc * _dot3(grad, tmp)
            row += 1


cdef inline double _sumsq(const double* r, int m) noexcept nogil:
    cdef double s = 0.0
    cdef int i
    for i in range(m):
        s += r[i] * r[i]
    return s


cdef void _chol_solve(double* A, const double* b, double* x, int n) noexcept nogil:
    cdef double L[MAXJ * MAXJ]
    cdef double y[MAXJ]
    cdef int i, j, k
    cdef double s
    memset(L, 0, MAXJ * MAXJ * sizeof(double))
    for i in range(n):
        for j in range(i + 1):
            s = A[i * n + j]
            for k in range(j):
                s -= L[i * MAXJ + k] * L[j * MAXJ + k]
            if i == j:
                if s < 1e-300:
                    s = 1e-300
                L[i * MAXJ + i] = sqrt(s)
            else:
                L[i * MAXJ + j] = s / L[j * MAXJ + j]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i * MAXJ + k] * y[k]
        y[i] = s / L[i * MAXJ + i]
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= L[k * MAXJ + i] * x[k]
        x[i] = s / L[i * MAXJ + i]


cdef int _lm(const Prob* P, double* theta, int max_iter, double* cost_out) noexcept nogil:
    cdef int n = P.n
    cdef int m = _nrows(P)
    cdef double* r = <double*>malloc((m + 1) * sizeof(double))
    cdef double* rc = <double*>malloc((m + 1) * sizeof(double))
    cdef double* J = <double*>malloc((m * n + 1) * sizeof(double))
    cdef double A[MAXJ * MAXJ]
    cdef double Al[MAXJ * MAXJ]
    cdef double g[MAXJ]
    cdef double ng[MAXJ]
    cdef double delta[MAXJ]
    cdef double cand[MAXJ]
    cdef int i, j, k, it, tries
    cdef double s, cost, cc, lam, gain
    cdef bint improved
    for j in range(n):
        if theta[j] < P.lo[j]:
            theta[j] = P.lo[j]
        elif theta[j] > P.hi[j]:
            theta[j] = P.hi[j]
    _residual(P, theta, r, J, True)
    cost = _sumsq(r, m)
    lam = 1e-3
    it = 0
    while it < max_iter and cost > 1e-24:
        it += 1
        for i in range(n):
            for j in range(n):
                s = 0.0
                for k in range(m):
                    s += J[k * n + i] * J[k * n + j]
                A[i * n + j] = s
            s = 0.0
            for k in range(m):
                s += J[k * n + i] * r[k]
            g[i] = s
            ng[i] = -s
        improved = False
        cc = cost
        for tries in range(10):
            memcpy(Al, A, n * n * sizeof(double))
            for i in range(n):
                Al[i * n + i] += lam
            _chol_solve(Al, ng, delta, n)
            for j in range(n):
                cand[j] = theta[j] + delta[j]
                if cand[j] < P.lo[j]:
                    cand[j] = P.lo[j]
                elif cand[j] > P.hi[j]:
                    cand[j] = P.hi[j]
            _residual(P, cand, rc, J, False)
            cc = _sumsq(rc, m)
            if cc < cost:
                improved = True
                break
            lam *= 5.0
        if not improved:
            break
        gain = cost - cc
        memcpy(theta, cand, n * sizeof(double))
        cost = cc
        lam = lam * 0.3
        if lam < 1e-9:
            lam = 1e-9
        if gain <= 1e-12 * cost + 1e-26:
            break
        _residual(P, theta, r, J, True)
    free(r)
    free(rc)
    free(J)
    cost_out[0] = cost
    return it


# ------------------------------------------------------------ python layer

cdef const double* _dptr(const double[::1] v):
    if v.shape[0] == 0:
        return NULL
    return &v[0]


cdef class _Holder:
    """Keeps contiguous buffers alive while a ``Prob`` points into them."""
    cdef Prob p
    cdef object keep
    cdef const double[::1] v_base, v_off, v_axes, v_ee, v_lo, v_hi, v_ref, v_cons
    cdef const double[::1] v_sloc, v_sr, v_mov, v_oinv, v_ohalf, v_oc, v_or, v_plane
    cdef const int[::1] v_slink


def _flat(a, shape_tail=None):
    arr = np.ascontiguousarray(a, dtype=np.float64).ravel()
    return arr


cdef _Holder _make(base, offsets, axes, ee, lo, hi, theta_ref, double w_ref, cons,
                   sph_link, sph_local, sph_r, mov_pts, obs_inv, obs_half, obs_c, obs_r,
                   plane, double w_col, double margin):
    cdef _Holder h = _Holder()
    n = len(axes)
    if n > MAXJ:
        raise ValueError(f"chain too long ({n} > {MAXJ})")
    h.v_base = _flat(base)
    h.v_off = _flat(offsets)
    h.v_axes = _flat(axes)
    h.v_ee = _flat(ee)
    h.v_lo = _flat(lo)
    h.v_hi = _flat(hi)
    h.v_ref = _flat(theta_ref) if theta_ref is not None else np.zeros(n)
    h.v_cons = _flat(cons)
    h.v_slink = np.ascontiguousarray(sph_link, dtype=np.intc).ravel()
    h.v_sloc = _flat(sph_local)
    h.v_sr = _flat(sph_r)
    h.v_mov = _flat(mov_pts)
    h.v_oinv = _flat(obs_inv)
    h.v_ohalf = _flat(obs_half)
    h.v_oc = _flat(obs_c)
    h.v_or = _flat(obs_r)
    h.v_plane = _flat(plane) if plane is not None else np.zeros(4)
    h.p.n = n
    h.p.base = _dptr(h.v_base)
    h.p.offsets = _dptr(h.v_off)
    h.p.axes = _dptr(h.v_axes)
    h.p.ee = _dptr(h.v_ee)
    h.p.lo = _dptr(h.v_lo)
    h.p.hi = _dptr(h.v_hi)
    h.p.theta_ref = _dptr(h.v_ref)
    h.p.w_ref = w_ref
    h.p.ncons = h.v_cons.shape[0] // 16
    h.p.cons = _dptr(h.v_cons)
    h.p.nsph = h.v_sr.shape[0]
    h.p.sph_link = &h.v_slink[0] if h.v_slink.shape[0] > 0 else NULL
    h.p.sph_local = _dptr(h.v_sloc)
    h.p.sph_r = _dptr(h.v_sr)
    h.p.nmov = h.v_mov.shape[0] // 3
    h.p.mov_pts = _dptr(h.v_mov)
    h.p.nbox = h.v_ohalf.shape[0] // 3
    h.p.obs_inv = _dptr(h.v_oinv)
    h.p.obs_half = _dptr(h.v_ohalf)
    h.p.nobs = h.v_or.shape[0]
    h.p.obs_c = _dptr(h.v_oc)
    h.p.obs_r = _dptr(h.v_or)
    h.p.plane = _dptr(h.v_plane)
    h.p.w_col = w_col
    h.p.margin = margin
    return h


def fk_frames(base, offsets, axes, ee, theta):
    cdef _Holder h = _make(base, offsets, axes, ee, np.zeros(len(axes)), np.zeros(len(axes)),
                           None, 0.0, np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0),
                           np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0),
                           None, 0.0, 0.0)
    cdef const double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    out = np.empty((h.p.n + 1, 4, 4))
    cdef double[:, :, ::1] ov = out
    _fk_frames(&h.p, &th[0], &ov[0, 0, 0])
    return out


def fk(base, offsets, axes, ee, theta):
    return fk_frames(base, offsets, axes, ee, theta)[-1]


def numeric_jacobian(base, offsets, axes, ee, theta, double h=1e-6):
    cdef _Holder hd = _make(base, offsets, axes, ee, np.zeros(len(axes)), np.zeros(len(axes)),
                            None, 0.0, np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0),
                            np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0),
                            None, 0.0, 0.0)
    cdef const double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    out = np.empty((6, hd.p.n))
    cdef double[:, ::1] ov = out
    _jacobian(&hd.p, &th[0], h, &ov[0, 0])
    return out


def residual_jacobian(base, offsets, axes, ee, theta, theta_ref, double w_ref, cons,
                      sph_link, sph_local, sph_r, mov_pts,
                      obs_inv, obs_half, obs_c, obs_r, plane, double w_col, double margin,
                      with_jacobian=True):
    n = len(axes)
    cdef _Holder h = _make(base, offsets, axes, ee, np.zeros(n), np.zeros(n), theta_ref, w_ref,
                           cons, sph_link, sph_local, sph_r, mov_pts, obs_inv, obs_half,
                           obs_c, obs_r, plane, w_col, margin)
    cdef const double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    m = _nrows(&h.p)
    r = np.zeros(m + 1)
    J = np.zeros((m + 1) * n + 1)
    cdef double[::1] rv = r
    cdef double[::1] Jv = J
    _residual(&h.p, &th[0], &rv[0], &Jv[0], bool(with_jacobian))
    return r[:m].copy(), J[:m * n].reshape(m, n).copy()


def lm_solve(base, offsets, axes, ee, lo, hi, theta0, theta_ref, double w_ref, cons,
             sph_link, sph_local, sph_r, mov_pts,
             obs_inv, obs_half, obs_c, obs_r, plane, double w_col, double margin, int max_iter):
    cdef _Holder h = _make(base, offsets, axes, ee, lo, hi, theta_ref, w_ref, cons,
                           sph_link, sph_local, sph_r, mov_pts, obs_inv, obs_half,
                           obs_c, obs_r, plane, w_col, margin)
    theta = np.array(theta0, dtype=np.float64)
    cdef double[::1] tv = theta
    cdef double cost = 0.0
    cdef int it
    with nogil:
        it = _lm(&h.p, &tv[0], max_iter, &cost)
    return theta, cost, it


def sphere_box_depth(centers, radii, box_inv, box_half):
    cdef const double[:, ::1] c = np.ascontiguousarray(np.asarray(centers, dtype=np.float64).reshape(-1, 3))
    cdef const double[::1] r = np.ascontiguousarray(radii, dtype=np.float64).ravel()
    cdef const double[::1] inv = np.ascontiguousarray(box_inv, dtype=np.float64).ravel()
    cdef const double[::1] half = np.ascontiguousarray(box_half, dtype=np.float64).ravel()
    cdef int nc = c.shape[0]
    cdef int nb = half.shape[0] // 3
    out = np.empty((nc, nb))
    cdef double[:, ::1] ov = out
    cdef double normal[3]
    cdef int i, j
    for i in range(nc):
        for j in range(nb):
            ov[i, j] = _sphere_box(&c[i, 0], r[i], &inv[16 * j], &half[3 * j], normal)
    return out


def sphere_sphere_depth(c1, r1, c2, r2):
    cdef const double[:, ::1] a = np.ascontiguousarray(np.asarray(c1, dtype=np.float64).reshape(-1, 3))
    cdef const double[:, ::1] b = np.ascontiguousarray(np.asarray(c2, dtype=np.float64).reshape(-1, 3))
    cdef const double[::1] ra = np.ascontiguousarray(r1, dtype=np.float64).ravel()
    cdef const double[::1] rb = np.ascontiguousarray(r2, dtype=np.float64).ravel()
    out = np.empty((a.shape[0], b.shape[0]))
    cdef double[:, ::1] ov = out
    cdef int i, j
    cdef double dx, dy, dz
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            dz = a[i, 2] - b[j, 2]
            ov[i, j] = ra[i] + rb[j] - sqrt(dx * dx + dy * dy + dz * dz)
    return out


cdef double _obb(const double* Pa, const double* ha, const double* Pb, const double* hb) noexcept nogil:
    cdef double Ra[9]
    cdef double Rb[9]
    cdef double t[3]
    cdef double L[3]
    cdef double col_a[3]
    cdef double col_b[3]
    cdef double nrm, ra, rb, overlap, best, tl
    cdef int i, k, a, b, idx
    for i in range(3):
        for k in range(3):
            Ra[3 * i + k] = Pa[4 * i + k]
            Rb[3 * i + k] = Pb[4 * i + k]
        t[i] = Pb[4 * i + 3] - Pa[4 * i + 3]
    best = INFINITY
    for idx in range(15):
        if idx < 3:
            for i in range(3):
                L[i] = Ra[3 * i + idx]
        elif idx < 6:
            for i in range(3):
                L[i] = Rb[3 * i + idx - 3]
        else:
            a = (idx - 6) // 3
            b = (idx - 6) % 3
            for i in range(3):
                col_a[i] = Ra[3 * i + a]
                col_b[i] = Rb[3 * i + b]
            _cross(col_a, col_b, L)
        nrm = sqrt(_dot3(L, L))
        if nrm < 1e-9:
            continue
        for i in range(3):
            L[i] /= nrm
        ra = 0.0
        rb = 0.0
        for k in range(3):
            ra += ha[k] * fabs(Ra[k] * L[0] + Ra[3 + k] * L[1] + Ra[6 + k] * L[2])
            rb += hb[k] * fabs(Rb[k] * L[0] + Rb[3 + k] * L[1] + Rb[6 + k] * L[2])
        tl = _dot3(t, L)
        overlap = ra + rb - fabs(tl)
        if overlap < best:
            best = overlap
    return best


def box_box_depth(pose1, half1, pose2, half2):
    cdef const double[::1] p1 = np.ascontiguousarray(pose1, dtype=np.float64).ravel()
    cdef const double[::1] h1 = np.ascontiguousarray(half1, dtype=np.float64).ravel()
    cdef const double[::1] p2 = np.ascontiguousarray(pose2, dtype=np.float64).ravel()
    cdef const double[::1] h2 = np.ascontiguousarray(half2, dtype=np.float64).ravel()
    cdef int na = h1.shape[0] // 3
    cdef int nb = h2.shape[0] // 3
    out = np.empty((na, nb))
    cdef double[:, ::1] ov = out
    cdef int i, j
    for i in range(na):
        for j in range(nb):
            ov[i, j] = _obb(&p1[16 * i], &h1[3 * i], &p2[16 * j], &h2[3 * j])
    return out


def plane_sphere_depth(centers, radii, plane):
    c = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    pl = np.asarray(plane, dtype=np.float64)
    return np.asarray(radii, dtype=np.float64) - (c @ pl[:3] - pl[3])


def plane_box_depth(poses, half, plane):
    cdef const double[::1] pv = np.ascontiguousarray(poses, dtype=np.float64).ravel()
    cdef const double[::1] hv = np.ascontiguousarray(half, dtype=np.float64).ravel()
    cdef const double[::1] pl = np.ascontiguousarray(plane, dtype=np.float64).ravel()
    cdef int nb = hv.shape[0] // 3
    out = np.empty(nb)
    cdef double[::1] ov = out
    cdef int i, sx, sy, sz, k
    cdef double lo, v, w
    cdef double corner[3]
    for i in range(nb):
        lo = INFINITY
        for sx in range(-1, 2, 2):
            for sy in range(-1, 2, 2):
                for sz in range(-1, 2, 2):
                    corner[0] = sx * hv[3 * i]
                    corner[1] = sy * hv[3 * i + 1]
                    corner[2] = sz * hv[3 * i + 2]
                    v = 0.0
                    for k in range(3):
                        w = (pv[16 * i + 4 * k] * corner[0] + pv[16 * i + 4 * k + 1] * corner[1]
                             + pv[16 * i + 4 * k + 2] * corner[2] + pv[16 * i + 4 * k + 3])
                        v += w * pl[k]
                    if v < lo:
                        lo = v
        ov[i] = pl[3] - lo
    return out
