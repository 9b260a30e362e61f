"""
WSINDy-lite: weak-form coefficient discovery.

Each test function phi(t) = (1 - ((t - t_c) / r)^2)^q is supported on
[t_c - r, t_c + r] inside the sampled window. Integrating by parts against the
dynamics gives, per state k and test function l,

    b_kl = -dt sum_i phi_l'(t_i) u_k(t_i)  ~  dt sum_i phi_l(t_i) Theta_i c_k = H_l c_k

and MSTLS picks a sparse c_k.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .basis import MonomialBasis, evaluate_library
from .errors import InvalidDimensionError
from .regression import mstls_select
from .run_logger import RunLogger
from .systems import Trajectory

logger = RunLogger("weakform")

DEFAULT_TEST_DEGREE = 8
# radius as a fraction of the sample count
DEFAULT_RADIUS_FRACTION = 1.0 / 20.0
DEFAULT_LAMBDA_GRID = tuple(np.logspace(-4, 0, 50))
# default test functions per library term when the one-radius spacing gives too few
WEAK_ROWS_PER_TERM = 2


@dataclass(frozen=True)
class TestFunctionSet:
    __test__ = False

    n: int
    dt: float
    centers: np.ndarray
    radius: int
    degree: int = DEFAULT_TEST_DEGREE
    amplitude: float = 1.0

    def __post_init__(self):
        if self.radius < 2:
            raise InvalidDimensionError(
                f"test functions need a radius of at least 2 samples, got {self.radius}")
        if self.degree < 2:
            raise InvalidDimensionError(f"test degree must be >= 2, got {self.degree}")
        centers = np.asarray(self.centers, dtype=int)
        if centers.size == 0:
            raise InvalidDimensionError("at least one test function is required")
        if centers.min() < self.radius or centers.max() > self.n - 1 - self.radius:
            raise InvalidDimensionError("test function supports must lie inside the time window")
        object.__setattr__(self, "centers", centers)

    @property
    def count(self) -> int:
        return self.centers.size

    def _scaled_offsets(self) -> np.ndarray:
        """(i - center) / radius for every test function and sample, L x N."""
        samples = np.arange(self.n)
        return (samples[None, :] - self.centers[:, None]) / self.radius

    def values(self) -> np.ndarray:
        s = self._scaled_offsets()
        inside = np.abs(s) < 1.0
        return self.amplitude * np.where(inside, (1.0 - s ** 2) ** self.degree, 0.0)

    def derivatives(self) -> np.ndarray:
        """d phi / dt, with t measured in the trajectory's time units."""
        s = self._scaled_offsets()
        inside = np.abs(s) < 1.0
        half_width = self.radius * self.dt
        slope = -2.0 * self.degree * s * (1.0 - s ** 2) ** (self.degree - 1) / half_width
        return self.amplitude * np.where(inside, slope, 0.0)


def default_test_functions(n: int, t_end: float, degree: int = DEFAULT_TEST_DEGREE,
                           radius: Optional[int] = None, count: Optional[int] = None,
                           min_count: int = 0) -> TestFunctionSet:
    """Uniform centers one radius apart (50% overlap), or `count` evenly spread centers.

    Without an explicit count the centers are packed closer when the one-radius
    spacing yields fewer than min_count test functions.
    """
    radius = int(round(n * DEFAULT_RADIUS_FRACTION)) if radius is None else int(radius)
    if radius < 2:
        raise InvalidDimensionError(
            f"{n} samples give a test radius of {radius}; at least 2 samples are needed")
    first, last = radius, n - 1 - radius
    if last < first:
        raise InvalidDimensionError(f"radius {radius} does not fit in {n} samples")
    if count is None:
        centers = np.arange(first, last + 1, radius)
        if centers.size < min_count:
            count = min_count
    if count is not None:
        centers = np.unique(np.round(np.linspace(first, last, int(count))).astype(int))
    return TestFunctionSet(n=n, dt=t_end / (n - 1), centers=centers, radius=radius, degree=degree)


def assemble_weak_system(noisy: Trajectory, basis: MonomialBasis,
                         tests: TestFunctionSet) -> Tuple[np.ndarray, np.ndarray]:
    """Weak-form right-hand sides b (L x m) and matrix H (L x p)."""
    if tests.n != noisy.n:
        raise InvalidDimensionError(f"test functions sampled on {tests.n} points, data has {noisy.n}")
    if tests.count < basis.p:
        logger.warning("Weak system is underdetermined",
                       data={"test_functions": tests.count, "p": basis.p})
    theta = evaluate_library(basis, noisy)
    b = -noisy.dt * tests.derivatives() @ noisy.values
    H = noisy.dt * tests.values() @ theta
    return b, H


def wsindy_discover(noisy: Trajectory, basis: MonomialBasis, tests: Optional[TestFunctionSet] = None,
                    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID) -> np.ndarray:
    """m x p coefficients chosen per state by MSTLS over lambda_grid."""
    if tests is None:
        tests = default_test_functions(noisy.n, noisy.t_end, min_count=WEAK_ROWS_PER_TERM * basis.p)
    b, H = assemble_weak_system(noisy, basis, tests)
    coefficients = np.zeros((noisy.m, basis.p))
    for k in range(noisy.m):
        selection = mstls_select(H, b[:, k], lambda_grid)
        coefficients[k] = selection.coefficients
        logger.debug("MSTLS selection", data={"state": k, "lambda": selection.lam,
                                              "nonzero": int(np.count_nonzero(selection.coefficients))})
    return coefficients
