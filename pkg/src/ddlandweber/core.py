"""Grid arithmetic, operator contracts and generic operator checks.

Grids are plain 2-D ``float64`` numpy arrays.  Vectorization everywhere in
the package is column-major (Fortran order): for a sinogram shaped
``(bins, angles)`` this lists all detector bins of the first angle, then
the second angle, and so on.
"""
import numpy as np

__all__ = [
    "DimensionError",
    "ParameterError",
    "DivergenceError",
    "as_grid",
    "vec",
    "unvec",
    "inner",
    "frobenius_norm",
    "spectral_norm",
    "LinearOperator",
    "MatrixOperator",
    "IdentityOperator",
    "check_adjoint",
    "estimate_operator_norm",
]

# guards 0/0 in the relative adjoint defect
ADJOINT_EPS = 1e-300


class DimensionError(ValueError):
    """Raised when array shapes are incompatible."""


class ParameterError(ValueError):
    """Raised for out-of-range numerical parameters."""


class DivergenceError(RuntimeError):
    """Raised when an iterate blows up."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"iterate diverged at iteration {iteration}")


def as_grid(u, shape=None, name="grid"):
    """Return ``u`` as a finite 2-D float64 array, checking ``shape`` if given."""
    arr = np.asarray(u, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} has non-finite entries")
    return arr


def vec(u):
    """Column-major vectorization of a grid."""
    return np.asarray(u, dtype=np.float64).ravel(order="F")


def unvec(v, shape):
    """Inverse of :func:`vec`."""
    v = np.asarray(v, dtype=np.float64)
    if v.size != shape[0] * shape[1]:
        raise DimensionError(f"cannot reshape {v.size} entries to {tuple(shape)}")
    return v.reshape(shape, order="F")


def inner(u, v):
    """Euclidean inner product of two equally shaped grids."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionError(f"shape mismatch in inner product: {u.shape} vs {v.shape}")
    return float(np.dot(u.ravel(), v.ravel()))


def frobenius_norm(u):
    u = np.asarray(u, dtype=np.float64)
    if u.size == 0:
        raise DimensionError("norm of an empty grid")
    return float(np.sqrt(inner(u, u)))


def spectral_norm(y):
    """Largest singular value of ``y`` viewed as a matrix."""
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise DimensionError("norm of an empty grid")
    if y.ndim == 1:
        y = y[:, None]
    if 1 in y.shape:
        return frobenius_norm(y)
    return float(np.linalg.norm(y, ord=2))


class LinearOperator:
    """Matrix-free linear map between grid spaces.

    Subclasses implement ``_apply`` and ``_adjoint``; the public methods
    validate shapes.  Linear operators also satisfy the nonlinear contract
    used by the solvers: ``derivative_adjoint_apply(u, r)`` ignores ``u``.
    """

    linear = True

    def __init__(self, domain_shape, range_shape):
        self.domain_shape = tuple(domain_shape)
        self.range_shape = tuple(range_shape)

    def _apply(self, u):
        raise NotImplementedError

    def _adjoint(self, v):
        raise NotImplementedError

    def apply(self, u):
        return self._apply(as_grid(u, self.domain_shape, "operator input"))

    def apply_adjoint(self, v):
        return self._adjoint(as_grid(v, self.range_shape, "adjoint input"))

    __call__ = apply

    def derivative(self, u, h):
        return self.apply(h)

    def derivative_adjoint_apply(self, u, residual):
        return self.apply_adjoint(residual)

    def to_matrix(self):
        """Dense matrix of the operator in column-major coordinates (small sizes only)."""
        n = self.domain_shape[0] * self.domain_shape[1]
        cols = []
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            cols.append(vec(self.apply(unvec(e, self.domain_shape))))
        return np.column_stack(cols)


class MatrixOperator(LinearOperator):
    """Dense matrix acting on column-major vectorized grids."""

    def __init__(self, matrix, domain_shape=None, range_shape=None):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise DimensionError("matrix must be 2-D")
        m, n = matrix.shape
        domain_shape = tuple(domain_shape) if domain_shape is not None else (n, 1)
        range_shape = tuple(range_shape) if range_shape is not None else (m, 1)
        if domain_shape[0] * domain_shape[1] != n or range_shape[0] * range_shape[1] != m:
            raise DimensionError("grid shapes do not match matrix dimensions")
        super().__init__(domain_shape, range_shape)
        self.matrix = matrix

    def _apply(self, u):
        return unvec(self.matrix @ vec(u), self.range_shape)

    def _adjoint(self, v):
        return unvec(self.matrix.T @ vec(v), self.domain_shape)


class IdentityOperator(LinearOperator):
    def __init__(self, shape):
        super().__init__(shape, shape)

    def _apply(self, u):
        return u.copy()

    def _adjoint(self, v):
        return v.copy()


def check_adjoint(op, trials=10, seed=0):
    """Maximum relative defect of ``<Au, v> = <u, A*v>`` over random pairs.

    The defect of one pair is ``|<Au,v> - <u,A*v>| / (|u| |v| + eps)``.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        u = rng.standard_normal(op.domain_shape)
        v = rng.standard_normal(op.range_shape)
        lhs = inner(op.apply(u), v)
        rhs = inner(u, op.apply_adjoint(v))
        defect = abs(lhs - rhs) / (frobenius_norm(u) * frobenius_norm(v) + ADJOINT_EPS)
        worst = max(worst, defect)
    return worst


def estimate_operator_norm(op, iterations=100, seed=0):
    """Power-method estimate of the spectral norm of ``op``.

    Iterates ``x <- A*A x / |A*A x|`` from a seeded random start.  The
    returned value is the running maximum of ``|A x|`` over the normalized
    iterates, so it never decreases when ``iterations`` grows.
    """
    if iterations < 1:
        raise ParameterError("iterations must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.domain_shape)
    x /= frobenius_norm(x)
    best = 0.0
    for _ in range(iterations):
        ax = op.apply(x)
        best = max(best, frobenius_norm(ax))
        x = op.apply_adjoint(ax)
        nx = frobenius_norm(x)
        if nx == 0.0:
            break
        x /= nx
    return best
