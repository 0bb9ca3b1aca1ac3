"""Seeded synthetic images used as expert data and ground truth."""
import numpy as np

__all__ = ["ellipse_phantom", "phantom_set", "disk", "pressure_phantom"]


def _coords(size):
    h = 2.0 / size
    xs = -1.0 + (np.arange(size) + 0.5) * h
    ys = 1.0 - (np.arange(size) + 0.5) * h
    return np.meshgrid(xs, ys)


def disk(size, radius, value=1.0, centre=(0.0, 0.0)):
    x, y = _coords(size)
    return np.where((x - centre[0]) ** 2 + (y - centre[1]) ** 2 <= radius**2, value, 0.0)


def ellipse_phantom(size, rng, n_ellipses=None):
    """Background level plus a few overlapping ellipses, clipped to ``[0, 1]``."""
    x, y = _coords(size)
    img = np.full((size, size), rng.uniform(0.0, 0.3))
    n_ellipses = n_ellipses or int(rng.integers(3, 7))
    for _ in range(n_ellipses):
        cx, cy = rng.uniform(-0.6, 0.6, size=2)
        a, b = rng.uniform(0.1, 0.6, size=2)
        phi = rng.uniform(0, np.pi)
        xr = (x - cx) * np.cos(phi) + (y - cy) * np.sin(phi)
        yr = -(x - cx) * np.sin(phi) + (y - cy) * np.cos(phi)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += rng.uniform(-0.4, 0.7)
    return np.clip(img, 0.0, 1.0)


def phantom_set(n, size, seed=0):
    rng = np.random.default_rng(seed)
    return [ellipse_phantom(size, rng) for _ in range(n)]


def pressure_phantom(size, rng):
    """Signed, smooth pressure-like field supported in the unit disk."""
    x, y = _coords(size)
    img = np.zeros((size, size))
    for _ in range(int(rng.integers(2, 5))):
        cx, cy = rng.uniform(-0.5, 0.5, size=2)
        w = rng.uniform(0.1, 0.3)
        img += rng.uniform(-1.0, 1.0) * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * w * w))
    img[x**2 + y**2 > 1.0] = 0.0
    return img
