"""Dense linear-algebra substrate.

Vectors are plain one-dimensional ``numpy`` float arrays validated by
:func:`as_vec`; operators are wrapped in the immutable :class:`LinearMap`
and :class:`SymPosDefMap` containers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NoConvergence, NonSPD, SingularPivot

__all__ = [
    "as_vec",
    "LinearMap",
    "SymPosDefMap",
    "solve_spd",
    "min_eig_estimate",
    "solve_tridiagonal",
    "weighted_inner",
]


def as_vec(x, dim=None, name="vector"):
    """Validate ``x`` as a finite, non-empty real vector and return a copy."""
    v = np.atleast_1d(np.array(x, dtype=float))
    if v.ndim != 1 or v.size == 0:
        raise DimensionMismatch(f"{name} must be a non-empty 1-d array, got shape {v.shape}")
    if dim is not None and v.size != dim:
        raise DimensionMismatch(f"{name} has dimension {v.size}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def _freeze(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LinearMap:
    """Dense linear operator ``R^cols -> R^rows``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if m.ndim != 2:
            raise DimensionMismatch(f"LinearMap needs a 2-d matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("LinearMap entries must be finite")
        object.__setattr__(self, "matrix", _freeze(m))

    @property
    def rows(self):
        return self.matrix.shape[0]

    @property
    def cols(self):
        return self.matrix.shape[1]

    @property
    def T(self):
        return LinearMap(self.matrix.T)

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.cols:
            raise DimensionMismatch(f"operand has length {x.shape[0]}, map expects {self.cols}")
        return self.matrix @ x

    def apply_transpose(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.rows:
            raise DimensionMismatch(f"operand has length {y.shape[0]}, map expects {self.rows}")
        return self.matrix.T @ y

    def opnorm(self):
        """Spectral norm (largest singular value)."""
        if self.matrix.size == 0:
            return 0.0
        return float(np.linalg.norm(self.matrix, 2))

    def __matmul__(self, other):
        if isinstance(other, LinearMap):
            return LinearMap(self.matrix @ other.matrix)
        return self.apply(other)


@dataclass(frozen=True, eq=False)
class SymPosDefMap:
    """Symmetric positive definite map with a cached Cholesky factor.

    Symmetry is checked as ``max|M - M^T| <= 1e-12 * max|M|``; the stored
    matrix is the exact symmetric part so that later products stay symmetric.
    """

    map: LinearMap
    _factor: tuple = field(init=False, repr=False)

    def __post_init__(self):
        lm = self.map if isinstance(self.map, LinearMap) else LinearMap(self.map)
        m = lm.matrix
        if m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"SPD map must be square, got {m.shape}")
        scale = float(np.max(np.abs(m))) if m.size else 0.0
        asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
        if asym > 1e-12 * scale:
            raise NonSPD(f"matrix is not symmetric (max asymmetry {asym:.3e})")
        lm = LinearMap(0.5 * (m + m.T))
        try:
            factor = scipy.linalg.cho_factor(lm.matrix, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NonSPD(f"Cholesky factorization failed: {exc}") from exc
        object.__setattr__(self, "map", lm)
        object.__setattr__(self, "_factor", factor)

    @classmethod
    def from_matrix(cls, matrix):
        return cls(LinearMap(matrix))

    @property
    def matrix(self):
        return self.map.matrix

    @property
    def dim(self):
        return self.map.rows

    def apply(self, x):
        return self.map.apply(x)

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.dim:
            raise DimensionMismatch(f"rhs has length {rhs.shape[0]}, map has dimension {self.dim}")
        return scipy.linalg.cho_solve(self._factor, rhs, check_finite=False)

    def inverse_matrix(self):
        return self.solve(np.eye(self.dim))

    def opnorm(self):
        return self.map.opnorm()


def solve_spd(spd, rhs):
    """Solve ``M x = rhs`` with the cached Cholesky factor of ``M``."""
    rhs = as_vec(rhs, spd.dim, "rhs")
    return spd.solve(rhs)


def min_eig_estimate(spd, max_iter=10_000, rtol=1e-8, seed=0):
    """Smallest eigenvalue of ``spd`` by inverse power iteration.

    Iterates until the Rayleigh-quotient residual ``|M x - mu x|`` falls
    below ``rtol * ||M||_F``; for a symmetric matrix this bounds the
    eigenvalue error by the same amount.
    """
    m = spd.matrix
    n = spd.dim
    scale = float(np.linalg.norm(m))
    if scale == 0.0:
        return 0.0
    rng = np.random.default_rng(seed)
    x = 1.0 + 0.1 * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    for _ in range(max_iter):
        y = spd.solve(x)
        x = y / np.linalg.norm(y)
        mx = m @ x
        mu = float(x @ mx)
        if np.linalg.norm(mx - mu * x) <= rtol * scale:
            return mu
    raise NoConvergence(f"inverse power iteration did not converge in {max_iter} iterations")


def solve_tridiagonal(sub, diag, sup, rhs):
    """Thomas algorithm for a tridiagonal system.

    ``sub`` and ``sup`` have length ``n - 1``; ``rhs`` may carry several
    right-hand sides as columns of an ``(n, k)`` array.
    """
    diag = np.asarray(diag, dtype=float)
    n = diag.shape[0]
    sub = np.asarray(sub, dtype=float).reshape(-1)
    sup = np.asarray(sup, dtype=float).reshape(-1)
    rhs = np.asarray(rhs, dtype=float)
    if sub.shape[0] != n - 1 or sup.shape[0] != n - 1 or rhs.shape[0] != n:
        raise DimensionMismatch("tridiagonal bands and rhs have inconsistent lengths")
    scale = max(float(np.max(np.abs(diag))), 1.0) if n else 1.0
    c = np.empty(max(n - 1, 0))
    d = np.empty_like(rhs)
    piv = diag[0]
    if abs(piv) <= 1e-14 * scale:
        raise SingularPivot("zero pivot at row 0")
    if n > 1:
        c[0] = sup[0] / piv
    d[0] = rhs[0] / piv
    for i in range(1, n):
        piv = diag[i] - sub[i - 1] * c[i - 1]
        if abs(piv) <= 1e-14 * scale:
            raise SingularPivot(f"zero pivot at row {i}")
        if i < n - 1:
            c[i] = sup[i] / piv
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / piv
    x = np.empty_like(d)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def weighted_inner(spd, h1, h2):
    """Inner product ``(Q^{-1} h1, h2)`` induced by an SPD map ``Q``."""
    return float(spd.solve(np.asarray(h1, dtype=float)) @ np.asarray(h2, dtype=float))
