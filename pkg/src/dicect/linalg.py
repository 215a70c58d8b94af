"""Vector arithmetic, linear operators and conjugate gradients.

Vectors are plain ``float64`` numpy arrays of any shape; an operator maps
arrays of ``in_shape`` to arrays of ``out_shape`` and the flattened sizes
give its matrix dimensions ``(m, n)``.
"""

from __future__ import annotations

import math

import numpy as np

from dicect.errors import ContractError, DimensionError, NumericalError


def as_vec(x, shape=None, name="array"):
    """Return ``x`` as a float64 array, optionally checking its shape."""
    arr = np.asarray(x, dtype=np.float64)
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    return arr


def dot(a, b):
    """Euclidean inner product of two arrays of equal size."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"dot: shapes {a.shape} and {b.shape} differ")
    return float(np.dot(a.ravel(), b.ravel()))


def norm(a):
    return math.sqrt(dot(a, a))


def check_finite(x, what, where=None):
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite values in {what}", where)


class LinearOperator:
    """Abstract linear map with an explicit adjoint.

    Subclasses implement ``_apply`` and ``_adjoint``; the public methods check
    shapes and dtypes.
    """

    def __init__(self, in_shape, out_shape):
        self.in_shape = tuple(int(s) for s in np.atleast_1d(in_shape))
        self.out_shape = tuple(int(s) for s in np.atleast_1d(out_shape))

    @property
    def dims(self):
        """``(m, n)``: flattened output and input sizes."""
        return int(np.prod(self.out_shape)), int(np.prod(self.in_shape))

    def apply(self, x):
        x = as_vec(x, self.in_shape, "operator input")
        return self._apply(x)

    def apply_adjoint(self, y):
        y = as_vec(y, self.out_shape, "adjoint input")
        return self._adjoint(y)

    def normal(self, shift=0.0):
        """The operator ``x -> A^T A x + shift * x``."""
        return NormalOperator(self, shift)

    def to_matrix(self):
        """Dense ``(m, n)`` matrix, assembled column by column."""
        m, n = self.dims
        out = np.empty((m, n))
        e = np.zeros(n)
        for j in range(n):
            e[j] = 1.0
            out[:, j] = self.apply(e.reshape(self.in_shape)).ravel()
            e[j] = 0.0
        return out

    def _apply(self, x):
        raise NotImplementedError

    def _adjoint(self, y):
        raise NotImplementedError


class MatrixOperator(LinearOperator):
    """Dense (or scipy sparse) matrix acting on flattened arrays."""

    def __init__(self, matrix, in_shape=None, out_shape=None):
        self.matrix = matrix if hasattr(matrix, "tocsr") else np.asarray(matrix, dtype=np.float64)
        m, n = self.matrix.shape
        super().__init__(in_shape if in_shape is not None else n,
                         out_shape if out_shape is not None else m)
        if self.dims != (m, n):
            raise DimensionError(f"shapes {self.out_shape}/{self.in_shape} do not fit a {m}x{n} matrix")

    def _apply(self, x):
        return np.asarray(self.matrix @ x.ravel()).reshape(self.out_shape)

    def _adjoint(self, y):
        return np.asarray(self.matrix.T @ y.ravel()).reshape(self.in_shape)


class IdentityOperator(LinearOperator):
    def __init__(self, shape):
        super().__init__(shape, shape)

    def _apply(self, x):
        return x.copy()

    def _adjoint(self, y):
        return y.copy()


class NormalOperator(LinearOperator):
    """``x -> A^T A x + shift * x``; symmetric, and PD whenever ``shift > 0``."""

    def __init__(self, op, shift=0.0):
        super().__init__(op.in_shape, op.in_shape)
        self.op = op
        self.shift = float(shift)

    def _apply(self, x):
        out = self.op.apply_adjoint(self.op.apply(x))
        if self.shift:
            out = out + self.shift * x
        return out

    _adjoint = _apply


def check_symmetric(op, probes=3, seed=0, rtol=1e-8):
    """Probe ``<Ax, y> == <x, Ay>`` on random vectors; raise ``ContractError`` if not."""
    rng = np.random.default_rng(seed)
    for _ in range(probes):
        x = rng.standard_normal(op.in_shape)
        y = rng.standard_normal(op.in_shape)
        lhs, rhs = dot(op.apply(x), y), dot(x, op.apply(y))
        if abs(lhs - rhs) > rtol * max(abs(lhs), abs(rhs), 1e-300):
            raise ContractError(f"operator is not symmetric: {lhs!r} vs {rhs!r}")


def cg_solve(op, rhs, x0=None, max_iters=10, tol=1e-10, debug=False):
    """Conjugate gradients for a symmetric positive definite ``op``.

    Parameters
    ----------
    op : LinearOperator
        Square SPD operator.
    rhs : ndarray
        Right-hand side, shaped like ``op.in_shape``.
    x0 : ndarray, optional
        Initial iterate (zero if omitted).
    max_iters : int
        Number of CG steps ``P``.
    tol : float
        Stop early once ``||rhs - op(x)|| <= tol * ||rhs||``.
    debug : bool
        Probe ``op`` for symmetry before iterating.

    Returns
    -------
    x : ndarray
        Final iterate.
    trace : ndarray
        Residual norm of the initial iterate followed by one entry per step.
    """
    if max_iters < 1:
        raise ContractError("max_iters must be >= 1")
    if op.in_shape != op.out_shape:
        raise DimensionError("cg_solve needs a square operator")
    if debug:
        check_symmetric(op)
    b = as_vec(rhs, op.in_shape, "rhs")
    x = np.zeros_like(b) if x0 is None else as_vec(x0, op.in_shape, "x0").copy()

    r = b - op.apply(x) if x0 is not None else b.copy()
    rr = dot(r, r)
    stop = tol * norm(b)
    trace = [math.sqrt(rr)]
    if trace[0] <= stop or rr == 0.0:
        return x, np.asarray(trace)
    p = r.copy()
    for k in range(max_iters):
        q = op.apply(p)
        pq = dot(p, q)
        if pq <= 0.0 or not math.isfinite(pq):
            # exact convergence within round-off or a non-PD direction
            if not math.isfinite(pq):
                raise NumericalError("conjugate gradient breakdown", {"iteration": k})
            break
        alpha = rr / pq
        x += alpha * p
        r -= alpha * q
        rr_new = dot(r, r)
        if not math.isfinite(rr_new):
            raise NumericalError("conjugate gradient breakdown", {"iteration": k})
        trace.append(math.sqrt(rr_new))
        if trace[-1] <= stop or rr_new == 0.0:
            break
        p *= rr_new / rr
        p += r
        rr = rr_new
    check_finite(x, "conjugate gradient iterate")
    return x, np.asarray(trace)
