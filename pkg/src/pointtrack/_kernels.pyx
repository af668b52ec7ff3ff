# cython: language_level=3
"""Compiled versions of the hot loops in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport ceil, exp, floor, hypot, sqrt, INFINITY

# exp(-t) == 0.0 in double precision for every t above this
cdef double _UNDERFLOW = 746.0

cnp.import_array()


def greedy_assign(cost, gate):
    cdef double[:, ::1] c = np.ascontiguousarray(cost, dtype=np.float64)
    cdef double[:, ::1] g = np.ascontiguousarray(gate, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0], m = c.shape[1]
    out_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    if m == 0:
        return out_arr
    taken_arr = np.zeros(m, dtype=np.uint8)
    cdef cnp.uint8_t[::1] taken = taken_arr
    cdef Py_ssize_t i, j, best, n_taken = 0
    cdef double v, best_v
    for i in range(n):
        if n_taken == m:
            break
        best = -1
        best_v = INFINITY
        for j in range(m):
            if taken[j]:
                continue
            v = c[i, j]
            if best < 0 or v < best_v:
                best = j
                best_v = v
        if best < 0:
            continue
        if c[i, best] < g[i, best]:
            out[i] = best
            taken[best] = 1
            n_taken += 1
    return out_arr


def render_max(centers, sigmas, int width, int height):
    cdef double[:, ::1] pts = np.ascontiguousarray(
        np.asarray(centers, dtype=np.float64).reshape(-1, 2))
    cdef double[::1] sig = np.ascontiguousarray(
        np.asarray(sigmas, dtype=np.float64).reshape(-1))
    out_arr = np.zeros((height, width), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    gx_arr = np.empty(width, dtype=np.float64)
    gy_arr = np.empty(height, dtype=np.float64)
    cdef double[::1] gx = gx_arr
    cdef double[::1] gy = gy_arr
    cdef Py_ssize_t p, x, y, x0, x1, y0, y1
    cdef double cx, cy, denom, d, v, reach
    for p in range(pts.shape[0]):
        cx = pts[p, 0]
        cy = pts[p, 1]
        denom = 2.0 * sig[p] * sig[p]
        # beyond this distance exp() underflows to exactly 0, so skipping is lossless
        reach = sqrt(_UNDERFLOW * denom) + 1.0
        x0 = <Py_ssize_t>max(0.0, floor(cx - reach))
        x1 = <Py_ssize_t>min(<double>width, ceil(cx + reach) + 1.0)
        y0 = <Py_ssize_t>max(0.0, floor(cy - reach))
        y1 = <Py_ssize_t>min(<double>height, ceil(cy + reach) + 1.0)
        for x in range(x0, x1):
            d = x - cx
            gx[x] = exp(-(d * d) / denom)
        for y in range(y0, y1):
            d = y - cy
            gy[y] = exp(-(d * d) / denom)
        for y in range(y0, y1):
            if gy[y] == 0.0:
                continue
            for x in range(x0, x1):
                v = gy[y] * gx[x]
                if v > out[y, x]:
                    out[y, x] = v
    return out_arr


cdef inline bint _edge_peak(double[:, ::1] a, Py_ssize_t y, Py_ssize_t x,
                            Py_ssize_t h, Py_ssize_t w, double v):
    cdef Py_ssize_t yy, xx
    for yy in range(max(y - 1, 0), min(y + 2, h)):
        for xx in range(max(x - 1, 0), min(x + 2, w)):
            if a[yy, xx] > v:
                return False
    return True


def peak_mask(hm, double thresh):
    cdef double[:, ::1] a = np.ascontiguousarray(hm, dtype=np.float64)
    cdef Py_ssize_t h = a.shape[0], w = a.shape[1]
    mask_arr = np.zeros((h, w), dtype=bool)
    if h == 0 or w == 0:
        return mask_arr
    cdef cnp.uint8_t[:, ::1] mask = mask_arr.view(np.uint8)
    cdef Py_ssize_t y, x
    cdef double v
    cdef double *up
    cdef double *mid
    cdef double *dn
    cdef cnp.uint8_t *out
    # interior: branch-free so noisy maps do not stall on mispredictions
    for y in range(1, h - 1):
        up = &a[y - 1, 0]
        mid = &a[y, 0]
        dn = &a[y + 1, 0]
        out = &mask[y, 0]
        for x in range(1, w - 1):
            v = mid[x]
            out[x] = ((v > thresh) & (v >= up[x - 1]) & (v >= up[x]) & (v >= up[x + 1])
                      & (v >= mid[x - 1]) & (v >= mid[x + 1])
                      & (v >= dn[x - 1]) & (v >= dn[x]) & (v >= dn[x + 1]))
    for y in range(h):
        x = 0
        while x < w:
            v = a[y, x]
            if v > thresh and _edge_peak(a, y, x, h, w, v):
                mask[y, x] = 1
            # interior rows only have two border cells
            x = x + 1 if (y == 0 or y == h - 1 or x == w - 1) else w - 1
    return mask_arr


def iou_matrix(a, b):
    cdef double[:, ::1] A = np.ascontiguousarray(
        np.asarray(a, dtype=np.float64).reshape(-1, 4))
    cdef double[:, ::1] B = np.ascontiguousarray(
        np.asarray(b, dtype=np.float64).reshape(-1, 4))
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], i, j
    out_arr = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double iw, ih, inter, union, aa, ab
    for i in range(n):
        aa = (A[i, 2] - A[i, 0]) * (A[i, 3] - A[i, 1])
        for j in range(m):
            iw = min(A[i, 2], B[j, 2]) - max(A[i, 0], B[j, 0])
            if iw <= 0:
                continue
            ih = min(A[i, 3], B[j, 3]) - max(A[i, 1], B[j, 1])
            if ih <= 0:
                continue
            inter = iw * ih
            ab = (B[j, 2] - B[j, 0]) * (B[j, 3] - B[j, 1])
            union = aa + ab - inter
            out[i, j] = min(inter / union, 1.0)
    return out_arr


def point_costs(dx, dy, dg, tx, ty, tg):
    cdef double[::1] ax = np.ascontiguousarray(dx, dtype=np.float64)
    cdef double[::1] ay = np.ascontiguousarray(dy, dtype=np.float64)
    cdef double[::1] ag = np.ascontiguousarray(dg, dtype=np.float64)
    cdef double[::1] bx = np.ascontiguousarray(tx, dtype=np.float64)
    cdef double[::1] by = np.ascontiguousarray(ty, dtype=np.float64)
    cdef double[::1] bg = np.ascontiguousarray(tg, dtype=np.float64)
    cdef Py_ssize_t n = ax.shape[0], m = bx.shape[0], i, j
    cost_arr = np.empty((n, m), dtype=np.float64)
    gate_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] cost = cost_arr
    cdef double[:, ::1] gate = gate_arr
    for i in range(n):
        for j in range(m):
            cost[i, j] = hypot(ax[i] - bx[j], ay[i] - by[j])
            gate[i, j] = ag[i] if ag[i] < bg[j] else bg[j]
    return cost_arr, gate_arr
