"""
Discrete integration/differentiation operators and SVD projectors.

T  - cumulative trapezoid matrix, (T x)_i = integral of x from t_1 to t_i
D  - stacked [I; D1; D2] finite-difference matrix penalising rough derivatives
P  - orthogonal projector onto the column space of a matrix, built from the
     left singular vectors with singular value above a relative cutoff
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.integrate import cumulative_trapezoid

from .errors import InvalidDimensionError, NonUniformGridError

DEFAULT_RANK_TOL = 1e-10

# Relative tolerance on time-step uniformity
GRID_RTOL = 1e-8


def time_step(n: int, t_end: float) -> float:
    return t_end / (n - 1)


def check_uniform_grid(times: np.ndarray) -> float:
    """Return the time step of an equispaced grid, raise otherwise."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise InvalidDimensionError("time grid needs at least two samples")
    steps = np.diff(times)
    dt = (times[-1] - times[0]) / (times.size - 1)
    if dt <= 0 or np.any(steps <= 0):
        raise NonUniformGridError("time samples must be strictly increasing")
    if not np.allclose(steps, dt, rtol=GRID_RTOL, atol=0.0):
        raise NonUniformGridError("time samples are not equispaced")
    return float(dt)


@dataclass(frozen=True)
class TrapezoidMatrix:
    """Lower-triangular cumulative trapezoid operator on n samples."""

    n: int
    dt: float

    @property
    def shape(self):
        return (self.n, self.n)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """T @ x, columnwise for 2-D input."""
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.n:
            raise InvalidDimensionError(f"expected {self.n} rows, got {x.shape[0]}")
        return cumulative_trapezoid(x, dx=self.dt, axis=0, initial=0)

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        """T.T @ y, columnwise for 2-D input."""
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.n:
            raise InvalidDimensionError(f"expected {self.n} rows, got {y.shape[0]}")
        # suffix[j] = sum_{i > j} y_i
        suffix = np.zeros_like(y)
        suffix[:-1] = np.cumsum(y[::-1], axis=0)[::-1][1:]
        out = 0.5 * self.dt * (y + 2.0 * suffix)
        out[0] = 0.5 * self.dt * suffix[0]
        return out

    def toarray(self) -> np.ndarray:
        weights = 2.0 * np.tril(np.ones((self.n, self.n)), k=-1)
        weights[1:, 0] = 1.0
        rows = np.arange(1, self.n)
        weights[rows, rows] = 1.0
        weights[0, :] = 0.0
        return 0.5 * self.dt * weights


@dataclass(frozen=True)
class DifferenceStack:
    """[I; D1; D2] with D1 first and D2 second differences on n samples."""

    n: int
    dt: float

    @property
    def shape(self):
        return (3 * self.n - 3, self.n)

    @property
    def d1(self) -> sp.csr_matrix:
        return sp.diags([-1.0, 1.0], [0, 1], shape=(self.n - 1, self.n), format="csr") / self.dt

    @property
    def d2(self) -> sp.csr_matrix:
        return sp.diags([1.0, -2.0, 1.0], [0, 1, 2], shape=(self.n - 2, self.n),
                        format="csr") / self.dt ** 2

    def tosparse(self) -> sp.csr_matrix:
        return sp.vstack([sp.identity(self.n, format="csr"), self.d1, self.d2], format="csr")

    def toarray(self) -> np.ndarray:
        return self.tosparse().toarray()

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.n:
            raise InvalidDimensionError(f"expected {self.n} rows, got {x.shape[0]}")
        return np.concatenate([x,
                               np.diff(x, n=1, axis=0) / self.dt,
                               np.diff(x, n=2, axis=0) / self.dt ** 2], axis=0)


def build_trapezoid(n: int, t_end: float) -> TrapezoidMatrix:
    if n < 2:
        raise InvalidDimensionError(f"trapezoid operator needs n >= 2, got {n}")
    if t_end <= 0:
        raise InvalidDimensionError(f"t_end must be positive, got {t_end}")
    return TrapezoidMatrix(n=n, dt=time_step(n, t_end))


def build_difference_stack(n: int, t_end: float) -> DifferenceStack:
    if n < 3:
        raise InvalidDimensionError(f"difference stack needs n >= 3, got {n}")
    if t_end <= 0:
        raise InvalidDimensionError(f"t_end must be positive, got {t_end}")
    return DifferenceStack(n=n, dt=time_step(n, t_end))


@dataclass(frozen=True)
class Projector:
    """Orthogonal projector U U^T onto a retained left singular subspace."""

    basis: np.ndarray
    singular_values: np.ndarray = field(repr=False)

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    @classmethod
    def from_matrix(cls, source: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> "Projector":
        source = np.atleast_2d(np.asarray(source, dtype=float))
        if source.ndim != 2:
            raise InvalidDimensionError("projector source must be a matrix")
        u, s, _ = scipy.linalg.svd(source, full_matrices=False)
        if s.size == 0 or s[0] == 0.0:
            return cls(basis=np.zeros((source.shape[0], 0)), singular_values=s)
        keep = s > rank_tol * s[0]
        return cls(basis=u[:, keep], singular_values=s)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.basis.shape[0]:
            raise InvalidDimensionError(
                f"projector acts on length {self.basis.shape[0]}, got {x.shape[0]}")
        return self.basis @ (self.basis.T @ x)

    def complement(self, x: np.ndarray) -> np.ndarray:
        """(I - P) x."""
        return np.asarray(x, dtype=float) - self.apply(x)


def project(source: np.ndarray, x: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    source = np.atleast_2d(np.asarray(source, dtype=float))
    x = np.asarray(x, dtype=float)
    if source.shape[0] != x.shape[0]:
        raise InvalidDimensionError(
            f"source has {source.shape[0]} rows but x has length {x.shape[0]}")
    return Projector.from_matrix(source, rank_tol).apply(x)


def pseudoinverse_apply(source: np.ndarray, x: np.ndarray,
                        rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Minimum-norm least-squares solution of source @ y = x via truncated SVD."""
    source = np.atleast_2d(np.asarray(source, dtype=float))
    x = np.asarray(x, dtype=float)
    if source.shape[0] != x.shape[0]:
        raise InvalidDimensionError(
            f"source has {source.shape[0]} rows but x has length {x.shape[0]}")
    u, s, vt = scipy.linalg.svd(source, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((source.shape[1],) + x.shape[1:])
    keep = s > rank_tol * s[0]
    coeffs = (u[:, keep].T @ x)
    coeffs = coeffs / (s[keep] if x.ndim == 1 else s[keep][:, None])
    return vt[keep].T @ coeffs


def pseudoinverse(source: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Truncated-SVD pseudoinverse as an explicit matrix."""
    source = np.atleast_2d(np.asarray(source, dtype=float))
    u, s, vt = scipy.linalg.svd(source, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(source.shape[::-1])
    keep = s > rank_tol * s[0]
    return vt[keep].T @ (u[:, keep].T / s[keep][:, None])


def numerical_rank(source: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    s = scipy.linalg.svdvals(np.atleast_2d(np.asarray(source, dtype=float)))
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def pseudoinverse_norm(source: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> float:
    """Spectral norm of the pseudoinverse: 1 / smallest retained singular value."""
    s = scipy.linalg.svdvals(np.atleast_2d(np.asarray(source, dtype=float)))
    if s.size == 0 or s[0] == 0.0:
        return 0.0
    return float(1.0 / s[s > rank_tol * s[0]][-1])
