"""Schlieren operator: the pointwise square of the Radon transform.

For every recording direction ``i`` the data is ``F_i(u) = (R_i u)^2``;
the stacked data has the sinogram layout ``(bins, angles)``.  The operator
is quadratic, so ``F(-u) = F(u)`` and the solution is only determined up
to sign.
"""
import numpy as np

from .core import as_grid, frobenius_norm
from .radon import radon_adjoint, radon_forward

__all__ = [
    "schlieren_forward",
    "schlieren_derivative",
    "schlieren_derivative_adjoint",
    "schlieren_gradient_check",
    "schlieren_inf_norm",
    "SchlierenOperator",
]


def schlieren_forward(u, geom):
    r = radon_forward(u, geom)
    return r * r


def schlieren_derivative(u, h, geom):
    """Directional derivative ``F'(u)h = 2 R(u) R(h)``."""
    return 2.0 * radon_forward(u, geom) * radon_forward(h, geom)


def schlieren_derivative_adjoint(u, residual, geom, smoother=None):
    """Gradient direction ``sum_i R_i^*(R_i(u) * residual_i)``.

    This is ``F'(u)^* residual`` without the factor 2, which is left to the
    step size.  ``smoother`` is an optional callable applied to the result
    (a hook for an H^1 Riesz map); by default nothing is applied.
    """
    residual = as_grid(residual, geom.sinogram_shape, "residual")
    out = radon_adjoint(radon_forward(u, geom) * residual, geom)
    if smoother is not None:
        out = smoother(out)
    return out


def schlieren_gradient_check(u, h, step, geom):
    """Central-difference check of the analytic derivative.

    Returns ``(error, flagged)``.  The error is relative to
    ``|2 R(u) R(h)|`` unless that norm vanishes, in which case the absolute
    error is returned and ``flagged`` is True.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    u = as_grid(u, geom.image_shape, "u")
    h = as_grid(h, geom.image_shape, "h")
    fd = (schlieren_forward(u + step * h, geom) - schlieren_forward(u - step * h, geom)) / (2.0 * step)
    exact = schlieren_derivative(u, h, geom)
    err = frobenius_norm(fd - exact)
    denom = frobenius_norm(exact)
    if denom == 0.0:
        return err, True
    return err / denom, False


def schlieren_inf_norm(residual):
    """Largest per-angle euclidean norm of a ``(bins, angles)`` array."""
    residual = np.asarray(residual, dtype=np.float64)
    return float(np.sqrt((residual * residual).sum(axis=0)).max())


class SchlierenOperator:
    """Nonlinear operator object in the form the solvers expect."""

    linear = False

    def __init__(self, geom, smoother=None):
        self.geometry = geom
        self.domain_shape = geom.image_shape
        self.range_shape = geom.sinogram_shape
        self.smoother = smoother

    def apply(self, u):
        return schlieren_forward(u, self.geometry)

    __call__ = apply

    def derivative(self, u, h):
        return schlieren_derivative(u, h, self.geometry)

    def derivative_adjoint_apply(self, u, residual):
        return schlieren_derivative_adjoint(u, residual, self.geometry, self.smoother)
