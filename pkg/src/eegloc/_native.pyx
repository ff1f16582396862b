# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Hough kernels. Semantics mirror :mod:`eegloc._fallback` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt

cnp.import_array()


def cast_votes(shape, const double[:, ::1] points, const double[:, ::1] steps, const double[::1] radii):
    cdef Py_ssize_t nx = shape[0], ny = shape[1], nz = shape[2]
    acc_arr = np.zeros((nx, ny, nz), dtype=np.int32)
    cdef int[:, :, ::1] acc = acc_arr
    cdef Py_ssize_t n = points.shape[0], m = radii.shape[0]
    cdef Py_ssize_t e, r, s
    cdef long long n_out = 0
    cdef double sr
    cdef long qi, qj, qk
    with nogil:
        for e in range(n):
            for r in range(m):
                for s in range(2):
                    sr = radii[r] if s == 0 else -radii[r]
                    qi = <long>floor(points[e, 0] + sr * steps[e, 0] + 0.5)
                    qj = <long>floor(points[e, 1] + sr * steps[e, 1] + 0.5)
                    qk = <long>floor(points[e, 2] + sr * steps[e, 2] + 0.5)
                    if qi < 0 or qj < 0 or qk < 0 or qi >= nx or qj >= ny or qk >= nz:
                        n_out += 1
                    else:
                        acc[qi, qj, qk] += 1
    return acc_arr, int(n_out)


def radius_votes(const int[:, :, ::1] label_map, const double[:, ::1] points,
                 const double[:, ::1] steps, const double[::1] radii, Py_ssize_t n_labels):
    cdef Py_ssize_t nx = label_map.shape[0], ny = label_map.shape[1], nz = label_map.shape[2]
    counts_arr = np.zeros((n_labels, radii.shape[0]), dtype=np.int64)
    cdef long long[:, ::1] counts = counts_arr
    cdef Py_ssize_t n = points.shape[0], m = radii.shape[0]
    cdef Py_ssize_t e, r, s
    cdef double sr
    cdef long qi, qj, qk
    cdef int lab
    with nogil:
        for e in range(n):
            for r in range(m):
                for s in range(2):
                    sr = radii[r] if s == 0 else -radii[r]
                    qi = <long>floor(points[e, 0] + sr * steps[e, 0] + 0.5)
                    qj = <long>floor(points[e, 1] + sr * steps[e, 1] + 0.5)
                    qk = <long>floor(points[e, 2] + sr * steps[e, 2] + 0.5)
                    if qi < 0 or qj < 0 or qk < 0 or qi >= nx or qj >= ny or qk >= nz:
                        continue
                    lab = label_map[qi, qj, qk]
                    if lab > 0:
                        counts[lab - 1, r] += 1
    return counts_arr


def box_sum3(const int[:, :, ::1] acc):
    cdef Py_ssize_t nx = acc.shape[0], ny = acc.shape[1], nz = acc.shape[2]
    tmp1 = np.zeros((nx, ny, nz), dtype=np.int32)
    tmp2 = np.zeros((nx, ny, nz), dtype=np.int32)
    cdef int[:, :, ::1] a = tmp1
    cdef int[:, :, ::1] b = tmp2
    cdef Py_ssize_t i, j, k
    cdef int v
    with nogil:
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    v = acc[i, j, k]
                    if k > 0:
                        v = v + acc[i, j, k - 1]
                    if k + 1 < nz:
                        v = v + acc[i, j, k + 1]
                    a[i, j, k] = v
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    v = a[i, j, k]
                    if j > 0:
                        v = v + a[i, j - 1, k]
                    if j + 1 < ny:
                        v = v + a[i, j + 1, k]
                    b[i, j, k] = v
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    v = b[i, j, k]
                    if i > 0:
                        v = v + b[i - 1, j, k]
                    if i + 1 < nx:
                        v = v + b[i + 1, j, k]
                    a[i, j, k] = v
    return tmp1


def local_maxima(const int[:, :, ::1] sm):
    cdef Py_ssize_t nx = sm.shape[0], ny = sm.shape[1], nz = sm.shape[2]
    out_arr = np.zeros((nx, ny, nz), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, k, di, dj, dk, a, b, c
    cdef int v
    cdef bint ok
    with nogil:
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    v = sm[i, j, k]
                    if v <= 0:
                        continue
                    ok = True
                    for di in range(-1, 2):
                        a = i + di
                        if a < 0 or a >= nx:
                            continue
                        for dj in range(-1, 2):
                            b = j + dj
                            if b < 0 or b >= ny:
                                continue
                            for dk in range(-1, 2):
                                c = k + dk
                                if c < 0 or c >= nz:
                                    continue
                                if sm[a, b, c] > v:
                                    ok = False
                                    break
                            if not ok:
                                break
                        if not ok:
                            break
                    if ok:
                        out[i, j, k] = 1
    return np.argwhere(out_arr)


def greedy_nms(const double[:, ::1] centers, double min_dist, Py_ssize_t max_keep):
    cdef Py_ssize_t n = centers.shape[0]
    keep_arr = np.empty(min(n, max_keep) if max_keep > 0 else n, dtype=np.int64)
    cdef long long[::1] keep = keep_arr
    cdef Py_ssize_t nk = 0, c, q
    cdef double d2, dx, dy, dz, lim = min_dist * min_dist
    cdef bint ok
    with nogil:
        for c in range(n):
            if max_keep > 0 and nk >= max_keep:
                break
            ok = True
            for q in range(nk):
                dx = centers[c, 0] - centers[keep[q], 0]
                dy = centers[c, 1] - centers[keep[q], 1]
                dz = centers[c, 2] - centers[keep[q], 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < lim:
                    ok = False
                    break
            if ok:
                keep[nk] = c
                nk += 1
    return keep_arr[:nk].copy()
