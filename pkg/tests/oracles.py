"""Reference computations written independently of the package internals."""
import math

import numpy as np


def pixel_box(n, row, col):
    h = 2.0 / n
    x0 = -1.0 + col * h
    y1 = 1.0 - row * h
    return x0, x0 + h, y1 - h, y1


def clip_length(theta, s, box):
    """Length of the line ``x cos + y sin = s`` inside an axis-aligned box (parametric clipping)."""
    c, sn = math.cos(theta), math.sin(theta)
    px, py = s * c, s * sn
    dx, dy = -sn, c
    xmin, xmax, ymin, ymax = box
    t0, t1 = -math.inf, math.inf
    for p, d, lo, hi in ((px, dx, xmin, xmax), (py, dy, ymin, ymax)):
        if abs(d) < 1e-15:
            if p < lo or p > hi:
                return 0.0
            continue
        a, b = (lo - p) / d, (hi - p) / d
        t0, t1 = max(t0, min(a, b)), min(t1, max(a, b))
    return max(0.0, t1 - t0)


def quadrature_length(theta, s, box, step):
    """Midpoint-rule integral of the box indicator along the line with the given step."""
    c, sn = math.cos(theta), math.sin(theta)
    t = np.arange(-2.0, 2.0, step) + 0.5 * step
    x = s * c - t * sn
    y = s * sn + t * c
    xmin, xmax, ymin, ymax = box
    inside = (x >= xmin) & (x < xmax) & (y >= ymin) & (y < ymax)
    return float(np.count_nonzero(inside)) * step


def radon_matrix(n, angles, offsets):
    """Dense projection matrix built pixel by pixel from ``clip_length``; columns in column-major pixel order."""
    nb, na = len(offsets), len(angles)
    M = np.zeros((nb * na, n * n))
    for col in range(n):
        for row in range(n):
            box = pixel_box(n, row, col)
            j = col * n + row
            for a, th in enumerate(angles):
                for b, s in enumerate(offsets):
                    M[a * nb + b, j] = clip_length(th, s, box)
    return M


def matvec(M, x):
    return [sum(M[i][j] * x[j] for j in range(len(x))) for i in range(len(M))]


def rmatvec(M, y):
    return [sum(M[i][j] * y[i] for i in range(len(M))) for j in range(len(M[0]))]


def landweber_loop(F, y, omega, u0, steps):
    u = list(u0)
    for _ in range(steps):
        r = [a - b for a, b in zip(matvec(F, u), y)]
        g = rmatvec(F, r)
        u = [ui - omega * gi for ui, gi in zip(u, g)]
    return u


def irl_loop(F, A, y, omega, coef, kind, u0, steps):
    """Unnormalized damping, lambda from the euclidean residual norm."""
    u = list(u0)
    for _ in range(steps):
        r = [a - b for a, b in zip(matvec(F, u), y)]
        ra = [a - b for a, b in zip(matvec(A, u), y)]
        nr = math.sqrt(sum(v * v for v in r))
        lam = coef * nr if kind == "linear_in_residual" else coef * nr * nr
        g = rmatvec(F, r)
        d = rmatvec(A, ra)
        u = [ui - omega * gi - lam * di for ui, gi, di in zip(u, g, d)]
    return u


def perturbed_loop(R, A, y, w, coef, kind, u0, steps):
    """Gradient of ``1/2 |(wR + lam A)u - (w + lam) y|^2`` built from the combined matrix."""
    u = list(u0)
    n = len(u)
    for _ in range(steps):
        r = [a - b for a, b in zip(matvec(R, u), y)]
        nr = math.sqrt(sum(v * v for v in r))
        lam = coef * nr if kind == "linear_in_residual" else coef * nr * nr
        B = [[w * R[i][j] + lam * A[i][j] for j in range(n)] for i in range(len(R))]
        ra = [a - b for a, b in zip(matvec(A, u), y)]
        comb = [w * p + lam * q for p, q in zip(r, ra)]
        g = rmatvec(B, comb)
        u = [ui - gi for ui, gi in zip(u, g)]
    return u
