"""Linear damping operator fitted to expert input/output pairs.

Given pairs ``(u_i, y_i)`` the operator ``A = Y U^+`` minimizes
``1/2 sum_i |A u_i - y_i|^2``, where the columns of ``U`` and ``Y`` are
the column-major vectorized inputs and outputs.  ``U^+`` comes from a thin
SVD of ``U`` with relative truncation ``tol``; with few pairs and many
pixels ``U`` is rank deficient and ``U^+`` picks the minimum-norm fit.
"""
import struct
from dataclasses import dataclass

import numpy as np

from .core import DimensionError, LinearOperator, ParameterError, as_grid, frobenius_norm, unvec, vec

__all__ = [
    "TrainingSet",
    "LearnedOperator",
    "assemble_training_matrices",
    "train_pseudoinverse",
    "training_loss",
    "learned_apply",
    "learned_adjoint",
    "normalized_damping",
    "save_operator",
    "load_operator",
]

DEFAULT_TOL = 1e-12
# relative size below which the damping gradient counts as zero
DAMPING_GUARD = 1e-14

MAGIC = b"IRLA"
FORMAT_VERSION = 1
FACTORED, EXPLICIT = 0, 1
_HEADER = struct.Struct("<4sIQQQdIQQQQ")


@dataclass
class TrainingSet:
    pairs: list

    def __post_init__(self):
        if not self.pairs:
            raise DimensionError("training set is empty")
        self.pairs = [
            (as_grid(u, name="training input"), as_grid(y, name="training output")) for u, y in self.pairs
        ]
        in_shape, out_shape = self.pairs[0][0].shape, self.pairs[0][1].shape
        for i, (u, y) in enumerate(self.pairs):
            if u.shape != in_shape or y.shape != out_shape:
                raise DimensionError(f"pair {i} has shapes {u.shape}/{y.shape}, expected {in_shape}/{out_shape}")

    @property
    def input_shape(self):
        return self.pairs[0][0].shape

    @property
    def output_shape(self):
        return self.pairs[0][1].shape

    def __len__(self):
        return len(self.pairs)


def assemble_training_matrices(ts):
    """Stack vectorized inputs and outputs column-wise: ``U`` is N x n, ``Y`` is M x n."""
    U = np.column_stack([vec(u) for u, _ in ts.pairs])
    Y = np.column_stack([vec(y) for _, y in ts.pairs])
    return U, Y


class LearnedOperator(LinearOperator):
    """``A = Y U^+`` kept either factored (``Y`` and ``U^+``) or as one dense matrix."""

    def __init__(self, input_shape, output_shape, *, factors=None, matrix=None,
                 singular_values=(), tol=DEFAULT_TOL, n_pairs=0):
        super().__init__(input_shape, output_shape)
        n_in = self.domain_shape[0] * self.domain_shape[1]
        n_out = self.range_shape[0] * self.range_shape[1]
        if (factors is None) == (matrix is None):
            raise ParameterError("give exactly one of factors or matrix")
        if factors is not None:
            Y, pinv = (np.asarray(f, dtype=np.float64) for f in factors)
            if Y.shape[0] != n_out or pinv.shape[1] != n_in or Y.shape[1] != pinv.shape[0]:
                raise DimensionError("factor shapes do not match operator shapes")
            self.factors = (Y, pinv)
            self._matrix = None
        else:
            matrix = np.asarray(matrix, dtype=np.float64)
            if matrix.shape != (n_out, n_in):
                raise DimensionError(f"matrix shape {matrix.shape} != {(n_out, n_in)}")
            self.factors = None
            self._matrix = matrix
        self.singular_values = np.asarray(singular_values, dtype=np.float64)
        self.tol = float(tol)
        self.n_pairs = int(n_pairs)

    @classmethod
    def from_matrix(cls, matrix, input_shape=None, output_shape=None):
        matrix = np.asarray(matrix, dtype=np.float64)
        m, n = matrix.shape
        return cls(input_shape or (n, 1), output_shape or (m, 1), matrix=matrix)

    @property
    def shape(self):
        return (self.range_shape[0] * self.range_shape[1], self.domain_shape[0] * self.domain_shape[1])

    @property
    def is_factored(self):
        return self.factors is not None

    @property
    def matrix(self):
        if self._matrix is not None:
            return self._matrix
        Y, pinv = self.factors
        return Y @ pinv

    def explicit(self):
        return LearnedOperator(self.domain_shape, self.range_shape, matrix=self.matrix,
                               singular_values=self.singular_values, tol=self.tol, n_pairs=self.n_pairs)

    def _apply(self, u):
        x = vec(u)
        if self.factors is not None:
            Y, pinv = self.factors
            return unvec(Y @ (pinv @ x), self.range_shape)
        return unvec(self._matrix @ x, self.range_shape)

    def _adjoint(self, r):
        x = vec(r)
        if self.factors is not None:
            Y, pinv = self.factors
            return unvec(pinv.T @ (Y.T @ x), self.domain_shape)
        return unvec(self._matrix.T @ x, self.domain_shape)


def train_pseudoinverse(U, Y, tol=DEFAULT_TOL, input_shape=None, output_shape=None, explicit=False):
    """Least-squares operator ``A = Y U^+``.

    Singular values of ``U`` at or below ``tol * sigma_max`` are dropped.
    ``input_shape``/``output_shape`` default to column vectors.
    """
    if tol < 0:
        raise ParameterError("tol must be non-negative")
    U = np.asarray(U, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if U.ndim != 2 or Y.ndim != 2 or U.shape[1] != Y.shape[1]:
        raise DimensionError(f"U {U.shape} and Y {Y.shape} must have the same number of columns")
    N, n = U.shape
    M = Y.shape[0]
    input_shape = tuple(input_shape) if input_shape is not None else (N, 1)
    output_shape = tuple(output_shape) if output_shape is not None else (M, 1)

    W, s, Vt = np.linalg.svd(U, full_matrices=False)
    keep = s > tol * s[0] if s.size and s[0] > 0 else np.zeros(s.shape, dtype=bool)
    # U^+ = V diag(1/s) W^T on the retained singular triplets
    pinv = (Vt[keep].T / s[keep]) @ W[:, keep].T
    op = LearnedOperator(input_shape, output_shape, factors=(Y, pinv),
                         singular_values=s, tol=tol, n_pairs=n)
    return op.explicit() if explicit else op


def training_loss(A, U, Y):
    """``1/2 sum_i |A u_i - y_i|^2`` for a dense matrix ``A``."""
    R = np.asarray(A) @ U - Y
    return 0.5 * float(np.sum(R * R))


def learned_apply(A, u):
    return A.apply(u)


def learned_adjoint(A, r):
    return A.apply_adjoint(r)


def normalized_damping(A, u, y_delta):
    """Unit-norm damping direction ``g/|g|`` with ``g = A^T(A u - y_delta)``.

    Returns ``(direction, degenerate)``; when ``|g|`` is negligible the
    zero grid is returned with ``degenerate=True``.
    """
    g = A.apply_adjoint(A.apply(u) - as_grid(y_delta, A.range_shape, "data"))
    ng = frobenius_norm(g)
    if ng <= DAMPING_GUARD * max(1.0, frobenius_norm(y_delta)):
        return np.zeros_like(g), True
    return g / ng, False


def save_operator(A, path):
    """Write ``A`` as a little-endian binary container.

    Layout: header (magic ``IRLA``, version, M, N, n_pairs, tol, form,
    input rows/cols, output rows/cols), then ``len(singular_values)`` as
    uint64 and the singular values, then either ``Y`` (M x n) and ``U^+``
    (n x N) or ``A`` (M x N).  Matrices are float64 in column-major order.
    """
    M, N = A.shape
    form = FACTORED if A.is_factored else EXPLICIT
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, M, N, A.n_pairs, A.tol, form,
                              *A.domain_shape, *A.range_shape))
        fh.write(struct.pack("<Q", A.singular_values.size))
        fh.write(A.singular_values.astype("<f8").tobytes())
        blocks = A.factors if A.is_factored else (A.matrix,)
        for block in blocks:
            fh.write(struct.pack("<QQ", *block.shape))
            fh.write(np.asarray(block, dtype="<f8").tobytes(order="F"))


def load_operator(path):
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, M, N, n_pairs, tol, form, ir, ic, orow, ocol = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a learned-operator file")
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        (ns,) = struct.unpack("<Q", fh.read(8))
        svals = np.frombuffer(fh.read(8 * ns), dtype="<f8").astype(np.float64)

        def block():
            rows, cols = struct.unpack("<QQ", fh.read(16))
            data = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8")
            if data.size != rows * cols:
                raise ValueError(f"{path}: truncated matrix block")
            return data.reshape((rows, cols), order="F").astype(np.float64)

        if form == FACTORED:
            kwargs = {"factors": (block(), block())}
        elif form == EXPLICIT:
            kwargs = {"matrix": block()}
        else:
            raise ValueError(f"{path}: unknown storage form {form}")
    op = LearnedOperator((ir, ic), (orow, ocol), singular_values=svals, tol=tol, n_pairs=n_pairs, **kwargs)
    if op.shape != (M, N):
        raise ValueError(f"{path}: header dimensions disagree with stored blocks")
    return op
