# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled parallel-beam projector kernels.

Same geometry and weights as ``_radon_py``; rays are traversed one at a
time by merging the two sorted sequences of grid-line crossings.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fabs, INFINITY

cnp.import_array()

cdef double AXIS_TOL = 1e-12


cdef Py_ssize_t _ray(Py_ssize_t n, double c, double sn, double s,
                     Py_ssize_t* idx, double* w) noexcept nogil:
    cdef double h = 2.0 / n
    cdef double x0 = s * c
    cdef double y0 = s * sn
    cdef double tmin = -INFINITY, tmax = INFINITY
    cdef double t1, t2, lo, hi
    cdef bint use_x = fabs(sn) >= AXIS_TOL
    cdef bint use_y = fabs(c) >= AXIS_TOL

    if use_x:
        t1 = (x0 + 1.0) / sn
        t2 = (x0 - 1.0) / sn
        lo = t1 if t1 < t2 else t2
        hi = t2 if t1 < t2 else t1
        if lo > tmin:
            tmin = lo
        if hi < tmax:
            tmax = hi
    elif x0 < -1.0 or x0 > 1.0:
        return 0
    if use_y:
        t1 = (-1.0 - y0) / c
        t2 = (1.0 - y0) / c
        lo = t1 if t1 < t2 else t2
        hi = t2 if t1 < t2 else t1
        if lo > tmin:
            tmin = lo
        if hi < tmax:
            tmax = hi
    elif y0 < -1.0 or y0 > 1.0:
        return 0
    if not tmax > tmin:
        return 0

    # crossings with x = -1 + k h, visited in increasing t
    cdef Py_ssize_t kx, kx_end, kx_step
    if use_x:
        if sn > 0:
            kx, kx_end, kx_step = n, -1, -1
        else:
            kx, kx_end, kx_step = 0, n + 1, 1
    else:
        kx, kx_end, kx_step = 0, 0, 1
    # crossings with y = -1 + k h
    cdef Py_ssize_t ky, ky_end, ky_step
    if use_y:
        if c > 0:
            ky, ky_end, ky_step = 0, n + 1, 1
        else:
            ky, ky_end, ky_step = n, -1, -1
    else:
        ky, ky_end, ky_step = 0, 0, 1

    cdef double tprev = tmin, tnext, tx, ty, mid, x, y
    cdef Py_ssize_t count = 0, row, col
    cdef bint done = False
    while not done:
        tx = INFINITY
        ty = INFINITY
        if kx != kx_end:
            tx = (x0 - (-1.0 + kx * h)) / sn
        if ky != ky_end:
            ty = ((-1.0 + ky * h) - y0) / c
        if tx <= ty:
            tnext = tx
            if kx != kx_end:
                kx += kx_step
        else:
            tnext = ty
            ky += ky_step
        if tnext >= tmax:
            tnext = tmax
            done = True
        if tnext <= tprev:
            continue
        mid = 0.5 * (tprev + tnext)
        x = x0 - mid * sn
        y = y0 + mid * c
        col = <Py_ssize_t> floor((x + 1.0) / h)
        row = <Py_ssize_t> floor((1.0 - y) / h)
        if col < 0:
            col = 0
        elif col > n - 1:
            col = n - 1
        if row < 0:
            row = 0
        elif row > n - 1:
            row = n - 1
        idx[count] = row * n + col
        w[count] = tnext - tprev
        count += 1
        tprev = tnext
    return count


def forward(double[:, ::1] image, double[::1] cos_t, double[::1] sin_t, double[::1] offsets):
    cdef Py_ssize_t n = image.shape[0]
    cdef Py_ssize_t nb = offsets.shape[0], na = cos_t.shape[0]
    out = np.zeros((nb, na))
    cdef double[:, ::1] sino = out
    cdef double[::1] flat = np.asarray(image).ravel()
    cdef Py_ssize_t[::1] idx = np.empty(2 * n + 4, dtype=np.intp)
    cdef double[::1] w = np.empty(2 * n + 4)
    cdef Py_ssize_t a, j, k, m
    cdef double acc
    with nogil:
        for a in range(na):
            for j in range(nb):
                m = _ray(n, cos_t[a], sin_t[a], offsets[j], &idx[0], &w[0])
                acc = 0.0
                for k in range(m):
                    acc = acc + w[k] * flat[idx[k]]
                sino[j, a] = acc
    return out


def adjoint(double[:, ::1] sino, Py_ssize_t n, double[::1] cos_t, double[::1] sin_t,
            double[::1] offsets):
    cdef Py_ssize_t nb = offsets.shape[0], na = cos_t.shape[0]
    out = np.zeros(n * n)
    cdef double[::1] img = out
    cdef Py_ssize_t[::1] idx = np.empty(2 * n + 4, dtype=np.intp)
    cdef double[::1] w = np.empty(2 * n + 4)
    cdef Py_ssize_t a, j, k, m
    cdef double v
    with nogil:
        for a in range(na):
            for j in range(nb):
                v = sino[j, a]
                if v == 0.0:
                    continue
                m = _ray(n, cos_t[a], sin_t[a], offsets[j], &idx[0], &w[0])
                for k in range(m):
                    img[idx[k]] += w[k] * v
    return out.reshape(n, n)
