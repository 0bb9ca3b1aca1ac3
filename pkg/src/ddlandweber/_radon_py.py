"""Pure numpy parallel-beam projector kernels (fallback backend).

The image occupies ``[-1, 1]^2``; pixel ``(row, col)`` covers
``x in [-1 + col*h, -1 + (col+1)*h]`` and ``y in [1 - (row+1)*h, 1 - row*h]``
with ``h = 2 / n``.  The ray for angle theta and offset s is
``x(t) = s cos(theta) - t sin(theta)``, ``y(t) = s sin(theta) + t cos(theta)``.
Each ray is cut at every pixel boundary it crosses; the weight of a pixel
is the length of the ray inside it.  The adjoint scatters with the same
weights, so the pair is an exact transpose.
"""
import numpy as np

# direction components below this are treated as exactly axis-parallel
AXIS_TOL = 1e-12


def _ray_weights(n, c, sn, s):
    """Flat pixel indices and segment lengths for all rays of one angle.

    Returns two ``(len(s), 2n+4)`` arrays.  Padding segments have length 0.
    """
    h = 2.0 / n
    planes = -1.0 + h * np.arange(n + 1)
    nb = s.shape[0]
    x0 = s * c
    y0 = s * sn

    tmin = np.full(nb, -np.inf)
    tmax = np.full(nb, np.inf)
    hit = np.ones(nb, dtype=bool)
    for p0, d in ((x0, -sn), (y0, c)):
        if abs(d) < AXIS_TOL:
            hit &= (p0 >= -1.0) & (p0 <= 1.0)
        else:
            t1 = (-1.0 - p0) / d
            t2 = (1.0 - p0) / d
            tmin = np.maximum(tmin, np.minimum(t1, t2))
            tmax = np.minimum(tmax, np.maximum(t1, t2))
    hit &= tmax > tmin
    tmin = np.where(hit, tmin, 0.0)
    tmax = np.where(hit, tmax, 0.0)

    parts = [tmin[:, None]]
    if abs(sn) >= AXIS_TOL:
        parts.append((x0[:, None] - planes[None, :]) / sn)
    if abs(c) >= AXIS_TOL:
        parts.append((planes[None, :] - y0[:, None]) / c)
    parts.append(tmax[:, None])
    t = np.concatenate(parts, axis=1)
    t = np.clip(t, tmin[:, None], tmax[:, None])
    t.sort(axis=1)

    lengths = np.diff(t, axis=1)
    mid = 0.5 * (t[:, :-1] + t[:, 1:])
    x = x0[:, None] - mid * sn
    y = y0[:, None] + mid * c
    col = np.clip(np.floor((x + 1.0) / h).astype(np.int64), 0, n - 1)
    row = np.clip(np.floor((1.0 - y) / h).astype(np.int64), 0, n - 1)
    return row * n + col, lengths


def forward(image, cos_t, sin_t, offsets):
    n = image.shape[0]
    flat = np.ascontiguousarray(image, dtype=np.float64).ravel()
    sino = np.zeros((offsets.shape[0], cos_t.shape[0]))
    for a in range(cos_t.shape[0]):
        idx, w = _ray_weights(n, cos_t[a], sin_t[a], offsets)
        sino[:, a] = (w * flat[idx]).sum(axis=1)
    return sino


def adjoint(sino, n, cos_t, sin_t, offsets):
    out = np.zeros(n * n)
    for a in range(cos_t.shape[0]):
        idx, w = _ray_weights(n, cos_t[a], sin_t[a], offsets)
        out += np.bincount(idx.ravel(), weights=(w * sino[:, a][:, None]).ravel(), minlength=n * n)
    return out.reshape(n, n)
