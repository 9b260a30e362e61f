"""
Pareto (L-curve) corner search.

Four points x1 < x2 < x3 < x4 in log10(lambda) are kept golden-ratio spaced.
Each step compares the Menger curvature of the log-log curve through
(x1, x2, x3) with that through (x2, x3, x4) and drops the outer point on the
flatter side, so one new evaluation is needed per step.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.optimize

from .errors import InvalidDimensionError, ParetoError
from .operators import (
    DEFAULT_RANK_TOL,
    DifferenceStack,
    Projector,
    TrapezoidMatrix,
    build_difference_stack,
)
from .regression import (
    DEFAULT_EPS_W,
    DEFAULT_SOLVER_TOL,
    ConeProgram,
    TikhonovSystem,
    coefficient_map,
    data_residual,
    feasibility_witness,
    irw_lasso,
    normalize_columns,
    smoothing_radius,
    solve_socp,
)
from .run_logger import RunLogger

logger = RunLogger("pareto")

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
DEFAULT_MAX_EVALS = 30
# stop once lambda_max / lambda_min of the bracket drops below 1.01
DEFAULT_BRACKET_TOL = 0.01
FLAT_CURVATURE = 1e-9
RESIDUAL_FLOOR = 1e-300

# window around gamma_exp searched by gamma_pareto
GAMMA_WINDOW = (0.1, 10.0)
# log10(lambda) tolerance of the discrepancy root
DISCREPANCY_XTOL = 1e-3


@dataclass(frozen=True)
class ParetoCurvePoint:
    lam: float
    reg_residual: float
    sol_residual: float
    clamped: bool = False

    @classmethod
    def make(cls, lam: float, reg_residual: float, sol_residual: float) -> "ParetoCurvePoint":
        """Validate and clamp zero residuals to RESIDUAL_FLOOR."""
        if not (math.isfinite(reg_residual) and math.isfinite(sol_residual)):
            raise ParetoError(lam)
        clamped = reg_residual <= 0.0 or sol_residual <= 0.0
        return cls(lam=float(lam), reg_residual=max(float(reg_residual), RESIDUAL_FLOOR),
                   sol_residual=max(float(sol_residual), RESIDUAL_FLOOR), clamped=clamped)

    @property
    def log_point(self) -> np.ndarray:
        return np.array([math.log10(self.sol_residual), math.log10(self.reg_residual)])


@dataclass
class CornerResult:
    lam: float
    trace: List[ParetoCurvePoint] = field(default_factory=list)
    # (x1, x2, x3, x4) in log10(lambda) at every step
    brackets: List[Tuple[float, float, float, float]] = field(default_factory=list)
    no_corner: bool = False
    curvature: float = 0.0

    @property
    def evaluations(self) -> int:
        return len(self.trace)


def menger_curvature(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    """Unsigned curvature of the circle through three points; zero for collinear or repeated points."""
    ab, bc, ca = np.linalg.norm(b - a), np.linalg.norm(c - b), np.linalg.norm(a - c)
    denominator = ab * bc * ca
    if denominator == 0.0:
        return 0.0
    cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return float(2.0 * abs(cross) / denominator)


def _interior(x1: float, x4: float) -> float:
    return (x4 + GOLDEN * x1) / (1.0 + GOLDEN)


def corner_search(evaluate: Callable[[float], ParetoCurvePoint], lambda_min: float,
                  lambda_max: float, max_evals: int = DEFAULT_MAX_EVALS,
                  bracket_tol: float = DEFAULT_BRACKET_TOL) -> CornerResult:
    """Golden-section search for the maximal-curvature lambda of a Pareto curve."""
    if not 0.0 < lambda_min < lambda_max:
        raise InvalidDimensionError(
            f"need 0 < lambda_min < lambda_max, got {lambda_min}, {lambda_max}")
    if max_evals < 4:
        raise InvalidDimensionError(f"max_evals must be >= 4, got {max_evals}")

    result = CornerResult(lam=lambda_max)
    cache: Dict[float, ParetoCurvePoint] = {}

    def point(x: float) -> ParetoCurvePoint:
        if x not in cache:
            lam = 10.0 ** x
            raw = evaluate(lam)
            checked = ParetoCurvePoint.make(lam, raw.reg_residual, raw.sol_residual)
            if raw.clamped and not checked.clamped:
                checked = replace(checked, clamped=True)
            cache[x] = checked
            result.trace.append(checked)
        return cache[x]

    x1, x4 = math.log10(lambda_min), math.log10(lambda_max)
    x2 = _interior(x1, x4)
    x3 = x1 + x4 - x2
    for x in (x1, x2, x3, x4):
        point(x)

    max_curvature = 0.0
    width_limit = math.log10(1.0 + bracket_tol)
    while True:
        result.brackets.append((x1, x2, x3, x4))
        left = menger_curvature(point(x1).log_point, point(x2).log_point, point(x3).log_point)
        right = menger_curvature(point(x2).log_point, point(x3).log_point, point(x4).log_point)
        max_curvature = max(max_curvature, left, right)
        best_x, best_curvature = (x2, left) if left > right else (x3, right)
        if x4 - x1 <= width_limit or result.evaluations >= max_evals:
            break
        if left > right:
            x4, x3 = x3, x2
            x2 = _interior(x1, x4)
            point(x2)
        else:
            x1, x2 = x2, x3
            x3 = x1 + x4 - x2
            point(x3)

    if max_curvature <= FLAT_CURVATURE:
        result.no_corner = True
        result.lam = 10.0 ** x4
        logger.info("Pareto curve has no corner", data={"evaluations": result.evaluations})
    else:
        result.lam = 10.0 ** best_x
        result.curvature = best_curvature
        logger.debug("Pareto corner found", data={"lambda": result.lam, "curvature": best_curvature,
                                                  "evaluations": result.evaluations})
    return result


def gamma_pareto(evaluate: Callable[[float], ParetoCurvePoint], gamma_exp: float,
                 max_evals: int = DEFAULT_MAX_EVALS) -> float:
    """Corner of the gamma curve inside [0.1 gamma_exp, 10 gamma_exp]; gamma_exp when flat."""
    if gamma_exp <= 0:
        raise InvalidDimensionError(f"gamma_exp must be positive, got {gamma_exp}")
    low, high = GAMMA_WINDOW
    corner = corner_search(evaluate, low * gamma_exp, high * gamma_exp, max_evals)
    if corner.no_corner:
        logger.warning("No corner in gamma window, falling back to gamma_exp",
                       data={"gamma_exp": gamma_exp})
        return float(gamma_exp)
    return float(corner.lam)


class SocpGammaCurve:
    """gamma -> (||c(gamma)||_1, data residual) for one state, solved with W = I."""

    def __init__(self, u_tilde: np.ndarray, theta_tilde: np.ndarray, phi_tilde: np.ndarray,
                 t_end: float, gram: Optional[np.ndarray] = None, C: Optional[float] = None,
                 solver_tol: float = DEFAULT_SOLVER_TOL, rank_tol: float = DEFAULT_RANK_TOL):
        u_tilde = np.asarray(u_tilde, dtype=float)
        self.difference = build_difference_stack(u_tilde.size, t_end)
        self.mapping = coefficient_map(theta_tilde, gram, rank_tol)
        self.target = Projector.from_matrix(phi_tilde, rank_tol).apply(u_tilde)
        if C is None:
            _, u_dot_init = feasibility_witness(theta_tilde, phi_tilde, u_tilde, rank_tol)
            C = smoothing_radius(self.difference, u_dot_init)
        self.C = C
        self.solver_tol = solver_tol

    def __call__(self, gamma: float) -> ParetoCurvePoint:
        prog = ConeProgram(dt=self.difference.dt, coefficient_map=self.mapping,
                           weights=np.ones(self.mapping.shape[0]), difference=self.difference,
                           smooth_radius=self.C, target=self.target, data_radius=gamma,
                           solver_tol=self.solver_tol)
        solution = solve_socp(prog)
        if not solution.solved:
            raise ParetoError(gamma, f"cone program failed at gamma = {gamma:.6g} ({solution.status})")
        coefficients = self.mapping @ solution.u_dot
        return ParetoCurvePoint.make(gamma, float(np.sum(np.abs(coefficients))),
                                     data_residual(prog, solution))


class TikhonovCurve:
    """lambda -> (||D u'||, ||T u' - u||) for Tikhonov differentiation.

    With fit_offset the start value is fitted along with u', so the curve
    does not depend on the noise in the first sample.
    """

    def __init__(self, u: np.ndarray, trapezoid: TrapezoidMatrix, difference: DifferenceStack,
                 fit_offset: bool = False):
        self.u = np.asarray(u, dtype=float)
        self.trapezoid = trapezoid
        self.difference = difference
        self.system = TikhonovSystem.build(trapezoid, difference, fit_offset)

    def solve(self, lam: float) -> np.ndarray:
        return self.system.solve(self.u, lam)

    def offset(self, u_dot: np.ndarray) -> float:
        return self.system.offset(self.u, u_dot, self.trapezoid)

    def residual(self, lam: float) -> float:
        return self.system.residual(self.u, self.solve(lam))

    def discrepancy_lambda(self, target: float, lambda_min: float, lambda_max: float) -> float:
        """Largest lambda in the window whose data residual stays within target.

        The residual grows with lambda, so the root is bracketed in log10(lambda);
        a window entirely inside (or outside) the target returns its end.
        """
        if not 0.0 < lambda_min < lambda_max:
            raise InvalidDimensionError(
                f"need 0 < lambda_min < lambda_max, got {lambda_min}, {lambda_max}")

        def excess(x: float) -> float:
            return self.residual(10.0 ** x) - target

        low, high = math.log10(lambda_min), math.log10(lambda_max)
        if excess(high) <= 0.0:
            return float(lambda_max)
        if excess(low) >= 0.0:
            logger.warning("Tikhonov residual exceeds the target at the smallest lambda",
                           data={"target": target, "lambda": lambda_min})
            return float(lambda_min)
        x = scipy.optimize.brentq(excess, low, high, xtol=DISCREPANCY_XTOL)
        return float(10.0 ** x)

    def __call__(self, lam: float) -> ParetoCurvePoint:
        u_dot = self.solve(lam)
        return ParetoCurvePoint.make(lam, float(np.linalg.norm(self.difference.apply(u_dot))),
                                     self.system.residual(self.u, u_dot))


class LassoCurve:
    """lambda -> (||c||_1, ||A c - b||) for IRW-Lasso.

    With normalize the Lasso runs on unit-norm columns: lambda, the dead zone
    and ||c||_1 refer to the rescaled coefficients, while solve returns the
    coefficients of the original columns.
    """

    def __init__(self, A: np.ndarray, b: np.ndarray, irw_iters: int, eps_w: float = DEFAULT_EPS_W,
                 normalize: bool = True):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.irw_iters = irw_iters
        self.eps_w = eps_w
        if normalize:
            self.design, self.scales = normalize_columns(self.A)
        else:
            self.design, self.scales = self.A, np.ones(self.A.shape[1])

    @property
    def dead_zone(self) -> float:
        """Smallest lambda for which the first Lasso pass returns zero."""
        return float(2.0 * np.max(np.abs(self.design.T @ self.b), initial=0.0))

    def _solve_scaled(self, lam: float) -> np.ndarray:
        return irw_lasso(self.design, self.b, lam, self.irw_iters, self.eps_w)

    def solve(self, lam: float) -> np.ndarray:
        return self._solve_scaled(lam) / self.scales

    def __call__(self, lam: float) -> ParetoCurvePoint:
        scaled = self._solve_scaled(lam)
        return ParetoCurvePoint.make(lam, float(np.sum(np.abs(scaled))),
                                     float(np.linalg.norm(self.design @ scaled - self.b)))
