"""Discrete parallel-beam Radon transform and its exact adjoint.

The projector uses the pixel basis: a sinogram entry is the sum over the
pixels a ray crosses of (pixel value) x (length of the ray inside the
pixel).  Backprojection applies the transposed weights.

The compiled kernel in ``_radon_ext`` is used when it has been built;
otherwise the numpy implementation in ``_radon_py`` is used.  Set
``DDLANDWEBER_PURE_PYTHON=1`` to force the fallback.
"""
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import _radon_py
from .core import DimensionError, LinearOperator, ParameterError, as_grid

__all__ = [
    "BACKEND",
    "RadonGeometry",
    "radon_forward",
    "radon_adjoint",
    "RadonTransform",
    "desk_geometry",
    "paper_geometry",
]

if os.environ.get("DDLANDWEBER_PURE_PYTHON") == "1":
    _kernels = _radon_py
    BACKEND = "python"
else:
    try:
        from . import _radon_ext as _kernels

        BACKEND = "cython"
    except ImportError:
        _kernels = _radon_py
        BACKEND = "python"


def _resolve(backend):
    if backend is None:
        return _kernels
    if backend == "python":
        return _radon_py
    if backend == "cython":
        from . import _radon_ext

        return _radon_ext
    raise ParameterError(f"unknown backend {backend!r}")


@dataclass(frozen=True)
class RadonGeometry:
    """Square image on ``[-1, 1]^2`` seen under a set of parallel-beam angles.

    ``angles`` are radians in ``[0, pi)``, strictly increasing.  Detector
    bins are centred symmetrically about ``s = 0`` with the given spacing.
    With ``mask_support`` pixels whose centre lies outside the disk of
    radius ``support_radius`` are ignored by both forward and adjoint.
    """

    image_size: int
    angles: tuple
    detector_bins: int
    detector_spacing: float
    support_radius: float = math.sqrt(2.0)
    mask_support: bool = False
    _cos: np.ndarray = field(init=False, repr=False, compare=False)
    _sin: np.ndarray = field(init=False, repr=False, compare=False)
    _offsets: np.ndarray = field(init=False, repr=False, compare=False)
    _mask: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        angles = tuple(float(a) for a in self.angles)
        object.__setattr__(self, "angles", angles)
        if self.image_size < 1 or self.detector_bins < 1:
            raise ParameterError("image_size and detector_bins must be positive")
        if not angles:
            raise ParameterError("at least one angle is required")
        if any(a < 0.0 or a >= math.pi for a in angles):
            raise ParameterError("angles must lie in [0, pi)")
        if any(b <= a for a, b in zip(angles, angles[1:])):
            raise ParameterError("angles must be strictly increasing")
        if self.detector_spacing <= 0 or self.support_radius <= 0:
            raise ParameterError("detector_spacing and support_radius must be positive")
        theta = np.array(angles)
        object.__setattr__(self, "_cos", np.cos(theta))
        object.__setattr__(self, "_sin", np.sin(theta))
        centre = 0.5 * (self.detector_bins - 1)
        offsets = (np.arange(self.detector_bins) - centre) * self.detector_spacing
        object.__setattr__(self, "_offsets", offsets)
        h = self.pixel_width
        xs = -1.0 + (np.arange(self.image_size) + 0.5) * h
        ys = 1.0 - (np.arange(self.image_size) + 0.5) * h
        inside = xs[None, :] ** 2 + ys[:, None] ** 2 <= self.support_radius**2
        object.__setattr__(self, "_mask", inside.astype(np.float64))

    @classmethod
    def uniform(cls, image_size, n_angles, detector_bins=None, **kwargs):
        """Equally spaced angles ``k*pi/n_angles`` and unit-pixel detector spacing.

        The default bin count is the smallest odd number covering the image
        diagonal.
        """
        h = 2.0 / image_size
        if detector_bins is None:
            detector_bins = int(math.ceil(image_size * math.sqrt(2.0)))
            if detector_bins % 2 == 0:
                detector_bins += 1
        angles = tuple(k * math.pi / n_angles for k in range(n_angles))
        return cls(image_size, angles, detector_bins, h, **kwargs)

    @property
    def pixel_width(self):
        return 2.0 / self.image_size

    @property
    def image_shape(self):
        return (self.image_size, self.image_size)

    @property
    def sinogram_shape(self):
        return (self.detector_bins, len(self.angles))

    @property
    def angles_degrees(self):
        return np.degrees(np.array(self.angles))

    @property
    def offsets(self):
        return self._offsets.copy()

    @property
    def support_mask(self):
        return self._mask.copy()

    def with_angles(self, angles):
        return RadonGeometry(
            self.image_size,
            tuple(angles),
            self.detector_bins,
            self.detector_spacing,
            self.support_radius,
            self.mask_support,
        )


def desk_geometry(**kwargs):
    """32x32 images, 45 angles, 47 bins."""
    return RadonGeometry.uniform(32, 45, 47, **kwargs)


def paper_geometry(**kwargs):
    """128x128 images, 180 angles, 185 bins (33300 data values)."""
    return RadonGeometry.uniform(128, 180, 185, **kwargs)


def radon_forward(image, geom, backend=None):
    """Sinogram shaped ``(detector_bins, n_angles)``."""
    u = as_grid(image, geom.image_shape, "image")
    if geom.mask_support:
        u = u * geom._mask
    kernels = _resolve(backend)
    return kernels.forward(np.ascontiguousarray(u), geom._cos, geom._sin, geom._offsets)


def radon_adjoint(sino, geom, backend=None):
    """Unfiltered backprojection, the exact transpose of :func:`radon_forward`."""
    g = as_grid(sino, geom.sinogram_shape, "sinogram")
    kernels = _resolve(backend)
    out = kernels.adjoint(np.ascontiguousarray(g), geom.image_size, geom._cos, geom._sin, geom._offsets)
    if geom.mask_support:
        out *= geom._mask
    return out


class RadonTransform(LinearOperator):
    def __init__(self, geom, backend=None):
        super().__init__(geom.image_shape, geom.sinogram_shape)
        self.geometry = geom
        self.backend = backend

    def _apply(self, u):
        return radon_forward(u, self.geometry, self.backend)

    def _adjoint(self, v):
        return radon_adjoint(v, self.geometry, self.backend)

