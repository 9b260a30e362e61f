"""
Derivative and coefficient recovery.

IRW-SOCP recovers u0 and the derivative samples u' of one state at once:

    minimize    || W M u' ||_1              M = G^-1 Theta~^T
    subject to  || D u' ||       <= C
                || u0 + T u' - P u~ || <= gamma

The trapezoid integral T u' is carried by auxiliary variables with the
recurrence z_0 = 0, z_i - z_{i-1} = dt/2 (u'_{i-1} + u'_i), so no dense N x N
matrix enters the program. Coefficients follow as c = M u'.

Baselines: Tikhonov derivative estimation, IRW-Lasso (scikit-learn Lasso on a
column-rescaled matrix) and (M)STLS.
"""

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Union

import cvxpy as cp
import numpy as np
import scipy.linalg
from sklearn.linear_model import Lasso

from .errors import InvalidDimensionError, RankDeficientLibraryError, SolverFailure
from .operators import (
    DEFAULT_RANK_TOL,
    DifferenceStack,
    Projector,
    TrapezoidMatrix,
    build_difference_stack,
    numerical_rank,
    pseudoinverse,
)
from .run_logger import RunLogger

logger = RunLogger("regression")

DEFAULT_EPS_W = 1e-4
DEFAULT_IRW_ITERS = 3
DEFAULT_SOLVER_TOL = 1e-8

# Coefficients below this fraction of the largest magnitude are reported as zero
SUPPORT_CUTOFF = 1e-3

LASSO_TOL = 1e-8
LASSO_MAX_ITER = 100_000

SOLVED_STATUSES = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)


def gamma_theory(sigma: float, p: int) -> float:
    """Expected norm of the optimal projection error, sigma * sqrt(p + 1)."""
    if sigma < 0:
        raise InvalidDimensionError(f"sigma must be nonnegative, got {sigma}")
    if p < 1:
        raise InvalidDimensionError(f"basis size must be >= 1, got {p}")
    return float(sigma * np.sqrt(p + 1))


def feasibility_witness(theta_tilde: np.ndarray, phi_tilde: np.ndarray, u_tilde: np.ndarray,
                        rank_tol: float = DEFAULT_RANK_TOL):
    """(u0, u'~) with u0 + T u'~ = P u~ exactly."""
    phi_tilde = np.asarray(phi_tilde, dtype=float)
    if numerical_rank(phi_tilde, rank_tol) < phi_tilde.shape[1]:
        raise RankDeficientLibraryError(
            "integrated library is rank deficient; reduce the library degree")
    coefficients = pseudoinverse(phi_tilde, rank_tol) @ np.asarray(u_tilde, dtype=float)
    return float(coefficients[0]), np.asarray(theta_tilde, dtype=float) @ coefficients[1:]


def initial_derivative(theta_tilde: np.ndarray, phi_tilde: np.ndarray, u_tilde: np.ndarray,
                       rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    return feasibility_witness(theta_tilde, phi_tilde, u_tilde, rank_tol)[1]


def smoothing_radius(difference: DifferenceStack, u_dot_init: np.ndarray) -> float:
    return float(np.linalg.norm(difference.apply(u_dot_init)))


def coefficient_map(theta_tilde: np.ndarray, gram: Optional[np.ndarray] = None,
                    rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """G^-1 Theta~^T as a p x N matrix; G = Theta~^T Theta~ when gram is None."""
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    if gram is None:
        return pseudoinverse(theta_tilde, rank_tol)
    try:
        return scipy.linalg.solve(gram, theta_tilde.T)
    except (scipy.linalg.LinAlgError, ValueError):
        logger.warning("Gramian not invertible, using least squares")
        return scipy.linalg.lstsq(gram, theta_tilde.T)[0]


def irw_weights(coefficients: np.ndarray, eps_w: float = DEFAULT_EPS_W) -> np.ndarray:
    """W_jj = 1 / (|c_j| + eps * max|c|); identity when c is all zero."""
    magnitude = np.abs(np.asarray(coefficients, dtype=float))
    largest = magnitude.max(initial=0.0)
    if largest == 0.0:
        logger.warning("All coefficients zero, reweighting with W = I")
        return np.ones_like(magnitude)
    return 1.0 / (magnitude + eps_w * largest)


def support(coefficients: np.ndarray, cutoff: float = SUPPORT_CUTOFF) -> np.ndarray:
    """Boolean mask of coefficients above cutoff * max|c| (row-wise for matrices)."""
    coefficients = np.asarray(coefficients, dtype=float)
    magnitude = np.abs(coefficients)
    largest = magnitude.max(axis=-1, keepdims=True, initial=0.0)
    return (magnitude > cutoff * largest) & (magnitude > 0)


@dataclass(frozen=True)
class ConeProgram:
    """One weighted IRW-SOCP instance for a single state."""

    dt: float
    coefficient_map: np.ndarray
    weights: np.ndarray
    difference: DifferenceStack
    smooth_radius: float
    target: np.ndarray
    data_radius: float
    solver_tol: float = DEFAULT_SOLVER_TOL

    def __post_init__(self):
        if self.smooth_radius < 0 or self.data_radius < 0:
            raise InvalidDimensionError("cone radii must be nonnegative")
        if self.weights.shape != (self.coefficient_map.shape[0],):
            raise InvalidDimensionError("one weight per coefficient row is required")
        if self.coefficient_map.shape[1] != self.target.size:
            raise InvalidDimensionError("coefficient map and data target disagree on N")

    @property
    def n(self) -> int:
        return self.target.size

    @property
    def n_vars(self) -> int:
        return 1 + self.n

    @property
    def objective_map(self) -> np.ndarray:
        return self.weights[:, None] * self.coefficient_map


class SocpSolution(NamedTuple):
    u0: float
    u_dot: np.ndarray
    status: str

    @property
    def solved(self) -> bool:
        return self.status in SOLVED_STATUSES


def integrate(u_dot: np.ndarray, dt: float) -> np.ndarray:
    return TrapezoidMatrix(n=len(u_dot), dt=dt).apply(u_dot)


def data_residual(prog: ConeProgram, solution: SocpSolution) -> float:
    """|| u0 + T u' - P u~ ||."""
    return float(np.linalg.norm(solution.u0 + integrate(solution.u_dot, prog.dt) - prog.target))


def solve_socp(prog: ConeProgram) -> SocpSolution:
    """Solve one cone program with Clarabel; failures come back as a status string."""
    n = prog.n
    u0 = cp.Variable()
    u_dot = cp.Variable(n)
    integral = cp.Variable(n)

    constraints = [
        integral[0] == 0,
        integral[1:] - integral[:-1] == 0.5 * prog.dt * (u_dot[:-1] + u_dot[1:]),
        cp.SOC(cp.Constant(prog.data_radius), u0 + integral - prog.target),
        cp.SOC(cp.Constant(prog.smooth_radius), prog.difference.tosparse() @ u_dot),
    ]
    problem = cp.Problem(cp.Minimize(cp.norm1(prog.objective_map @ u_dot)), constraints)

    try:
        problem.solve(solver=cp.CLARABEL, tol_feas=prog.solver_tol,
                      tol_gap_abs=prog.solver_tol, tol_gap_rel=prog.solver_tol)
    except cp.SolverError as exc:
        logger.error("Cone solver failed", data={"n": n, "error": str(exc)})
        return SocpSolution(u0=float("nan"), u_dot=np.full(n, np.nan), status="solver_error")

    if problem.status not in SOLVED_STATUSES or u_dot.value is None:
        logger.warning("Cone program not solved", data={"status": problem.status})
        return SocpSolution(u0=float("nan"), u_dot=np.full(n, np.nan), status=problem.status)

    logger.debug("Cone program solved", data={"status": problem.status, "objective": problem.value,
                                              "gamma": prog.data_radius, "C": prog.smooth_radius})
    return SocpSolution(u0=float(u0.value), u_dot=np.asarray(u_dot.value, dtype=float),
                        status=problem.status)


@dataclass
class StateDiscovery:
    """IRW-SOCP outcome for one state."""

    coefficients: np.ndarray
    derivative: np.ndarray
    u0: float
    gamma_used: List[float] = field(default_factory=list)
    solver_status: List[str] = field(default_factory=list)
    weights: List[np.ndarray] = field(default_factory=list, repr=False)
    smooth_radius: float = 0.0

    @property
    def irw_iterations(self) -> int:
        return len(self.solver_status)

    @property
    def solved(self) -> bool:
        return bool(self.solver_status) and all(s in SOLVED_STATUSES for s in self.solver_status)


@dataclass
class DiscoveryResult:
    coefficients: np.ndarray
    derivatives: Optional[np.ndarray] = None
    u0: Optional[np.ndarray] = None
    gamma_used: List[List[float]] = field(default_factory=list)
    irw_iterations: int = 0
    solver_status: List[List[str]] = field(default_factory=list)
    method: str = "dsindy"

    @classmethod
    def from_states(cls, states: Sequence[StateDiscovery], method: str = "dsindy") -> "DiscoveryResult":
        return cls(
            coefficients=np.vstack([s.coefficients for s in states]),
            derivatives=np.column_stack([s.derivative for s in states]),
            u0=np.array([s.u0 for s in states]),
            gamma_used=[list(s.gamma_used) for s in states],
            irw_iterations=max((s.irw_iterations for s in states), default=0),
            solver_status=[list(s.solver_status) for s in states],
            method=method,
        )

    @property
    def solved(self) -> bool:
        return all(s in SOLVED_STATUSES for row in self.solver_status for s in row)

    def support(self, cutoff: float = SUPPORT_CUTOFF) -> np.ndarray:
        return support(self.coefficients, cutoff)


def _gamma_at(schedule: Union[float, Sequence[float]], iteration: int) -> float:
    if np.ndim(schedule) == 0:
        return float(schedule)
    schedule = list(schedule)
    if not schedule:
        raise InvalidDimensionError("gamma schedule is empty")
    return float(schedule[min(iteration, len(schedule) - 1)])


def irw_socp(u_tilde: np.ndarray, theta_tilde: np.ndarray, phi_tilde: np.ndarray,
             gram: Optional[np.ndarray], gamma_schedule: Union[float, Sequence[float]],
             C: Optional[float] = None, irw_iters: int = DEFAULT_IRW_ITERS,
             eps_w: float = DEFAULT_EPS_W, *, t_end: float,
             solver_tol: float = DEFAULT_SOLVER_TOL,
             rank_tol: float = DEFAULT_RANK_TOL) -> StateDiscovery:
    """Iteratively reweighted cone programs for one state.

    C defaults to the smoothing radius of the initial derivative estimate.
    """
    if irw_iters < 1:
        raise InvalidDimensionError(f"irw_iters must be >= 1, got {irw_iters}")
    u_tilde = np.asarray(u_tilde, dtype=float)
    n = u_tilde.size
    difference = build_difference_stack(n, t_end)
    mapping = coefficient_map(theta_tilde, gram, rank_tol)
    target = Projector.from_matrix(phi_tilde, rank_tol).apply(u_tilde)

    u0_init, u_dot_init = feasibility_witness(theta_tilde, phi_tilde, u_tilde, rank_tol)
    if C is None:
        C = smoothing_radius(difference, u_dot_init)

    result = StateDiscovery(coefficients=np.full(mapping.shape[0], np.nan),
                            derivative=np.full(n, np.nan), u0=float("nan"), smooth_radius=C)
    weights = np.ones(mapping.shape[0])
    for iteration in range(irw_iters):
        if iteration > 0:
            weights = irw_weights(result.coefficients, eps_w)
        gamma = _gamma_at(gamma_schedule, iteration)
        prog = ConeProgram(dt=difference.dt, coefficient_map=mapping, weights=weights,
                           difference=difference, smooth_radius=C, target=target,
                           data_radius=gamma, solver_tol=solver_tol)
        solution = solve_socp(prog)
        result.gamma_used.append(gamma)
        result.solver_status.append(solution.status)
        result.weights.append(weights)
        if not solution.solved:
            if iteration == 0:
                logger.error("First cone program failed", data={"status": solution.status,
                                                                "gamma": gamma, "C": C})
                raise SolverFailure(solution.status)
            # keep the last solved iterate
            break
        result.u0 = solution.u0
        result.derivative = solution.u_dot
        result.coefficients = mapping @ solution.u_dot

    logger.debug("IRW-SOCP finished", data={"iterations": result.irw_iterations,
                                            "status": result.solver_status, "C": C})
    return result


@dataclass(frozen=True)
class TikhonovSystem:
    """Dense normal equations of argmin ||T u' - u||^2 + lam ||D u'||^2.

    With fit_offset the start value u0 is a free unknown. It is eliminated
    by centering the rows of T and the data, so u0 = mean(u - T u').
    """

    design: np.ndarray
    gram: np.ndarray
    penalty: np.ndarray
    fit_offset: bool = False

    @classmethod
    def build(cls, trapezoid: TrapezoidMatrix, difference: DifferenceStack,
              fit_offset: bool = False) -> "TikhonovSystem":
        design = trapezoid.toarray()
        if fit_offset:
            design = design - design.mean(axis=0, keepdims=True)
        d_sparse = difference.tosparse()
        return cls(design=design, gram=design.T @ design,
                   penalty=(d_sparse.T @ d_sparse).toarray(), fit_offset=fit_offset)

    def data(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.design.shape[0],):
            raise InvalidDimensionError(
                f"data has shape {u.shape}, expected ({self.design.shape[0]},)")
        return u - u.mean() if self.fit_offset else u

    def solve(self, u: np.ndarray, lam: float, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
        if lam < 0:
            raise InvalidDimensionError(f"lambda must be nonnegative, got {lam}")
        target = self.data(u)
        if lam == 0:
            # T has a one-dimensional null space; take the minimum-norm solution
            return scipy.linalg.lstsq(self.design, target, cond=rank_tol)[0]
        lhs = self.gram + lam * self.penalty
        rhs = self.design.T @ target
        try:
            return scipy.linalg.solve(lhs, rhs, assume_a="pos")
        except scipy.linalg.LinAlgError:
            return scipy.linalg.lstsq(lhs, rhs, cond=rank_tol)[0]

    def residual(self, u: np.ndarray, u_dot: np.ndarray) -> float:
        """||T u' - u|| with u0 = 0, or with the best u0 when fit_offset."""
        return float(np.linalg.norm(self.design @ u_dot - self.data(u)))

    def offset(self, u: np.ndarray, u_dot: np.ndarray, trapezoid: TrapezoidMatrix) -> float:
        if not self.fit_offset:
            return 0.0
        return float(np.mean(np.asarray(u, dtype=float) - trapezoid.apply(u_dot)))


def tikhonov_derivative(u: np.ndarray, trapezoid: TrapezoidMatrix, difference: DifferenceStack,
                        lam: float, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """argmin ||T u' - u||^2 + lam ||D u'||^2 through the normal equations."""
    return TikhonovSystem.build(trapezoid, difference).solve(u, lam, rank_tol)


def normalize_columns(A: np.ndarray):
    """Scale every column of A to unit norm; zero columns keep scale 1."""
    A = np.asarray(A, dtype=float)
    scales = np.linalg.norm(A, axis=0)
    scales[scales == 0.0] = 1.0
    return A / scales[None, :], scales


def lasso_weights(coefficients: np.ndarray, eps_w: float = DEFAULT_EPS_W) -> np.ndarray:
    """W_ii = 1 / (|c_i| + eps)."""
    return 1.0 / (np.abs(np.asarray(coefficients, dtype=float)) + eps_w)


def _weighted_lasso(A: np.ndarray, b: np.ndarray, lam: float, weights: np.ndarray) -> np.ndarray:
    if lam == 0:
        return scipy.linalg.lstsq(A, b)[0]
    n = A.shape[0]
    # ||A c - b||^2 + lam ||W c||_1  ==  2n [ (1/2n)||A W^-1 x - b||^2 + (lam/2n)||x||_1 ],  x = W c
    model = Lasso(alpha=lam / (2.0 * n), fit_intercept=False, tol=LASSO_TOL,
                  max_iter=LASSO_MAX_ITER, selection="cyclic")
    model.fit(A / weights[None, :], b)
    return model.coef_ / weights


def irw_lasso(A: np.ndarray, b: np.ndarray, lam: float, irw_iters: int = DEFAULT_IRW_ITERS,
              eps_w: float = DEFAULT_EPS_W) -> np.ndarray:
    """Iteratively reweighted Lasso; the first pass uses W = I.

    With irw_iters=1 this is the plain Lasso. Later passes reweight with
    1 / (|c| + eps_w), which fixes zeros and relaxes the shrinkage of the
    surviving terms: A = I, b = [3, 1], lam = 2 gives [2, 0] after one pass
    and about [2.5, 0] after two.
    """
    if lam < 0:
        raise InvalidDimensionError(f"lambda must be nonnegative, got {lam}")
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise InvalidDimensionError("Lasso inputs must be finite")
    weights = np.ones(A.shape[1])
    coefficients = np.zeros(A.shape[1])
    for iteration in range(max(1, irw_iters)):
        if iteration > 0:
            weights = lasso_weights(coefficients, eps_w)
        coefficients = _weighted_lasso(A, b, lam, weights)
    return coefficients


def stls(A: np.ndarray, b: np.ndarray, threshold: Union[float, np.ndarray],
         upper_bound: Optional[Union[float, np.ndarray]] = None) -> np.ndarray:
    """Sequential thresholded least squares; the support only shrinks."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    p = A.shape[1]
    lower = np.broadcast_to(np.asarray(threshold, dtype=float), (p,))
    if np.any(lower < 0):
        raise InvalidDimensionError("threshold must be nonnegative")
    upper = np.full(p, np.inf) if upper_bound is None else np.broadcast_to(
        np.asarray(upper_bound, dtype=float), (p,))

    active = np.ones(p, dtype=bool)
    coefficients = np.zeros(p)
    for _ in range(p + 1):
        coefficients = np.zeros(p)
        if not active.any():
            break
        coefficients[active] = scipy.linalg.lstsq(A[:, active], b)[0]
        magnitude = np.abs(coefficients)
        keep = active & (magnitude >= lower) & (magnitude <= upper)
        if np.array_equal(keep, active):
            break
        active = keep
    coefficients[~active] = 0.0
    return coefficients


@dataclass
class MstlsSelection:
    coefficients: np.ndarray
    lam: float
    losses: np.ndarray


def mstls_bounds(H: np.ndarray, b: np.ndarray, lam: float):
    """Per-column lower and upper magnitude bounds for one lambda."""
    column_norms = np.linalg.norm(H, axis=0)
    ratio = np.divide(np.linalg.norm(b), column_norms, out=np.full(column_norms.shape, np.inf),
                      where=column_norms > 0)
    return lam * np.maximum(1.0, ratio), np.minimum(1.0, ratio) / lam


def mstls_select(H: np.ndarray, b: np.ndarray, lambda_grid: Sequence[float]) -> MstlsSelection:
    """Scan lambda_grid and keep the MSTLS solution with the lowest fit-plus-sparsity loss."""
    H = np.asarray(H, dtype=float)
    b = np.asarray(b, dtype=float)
    lambda_grid = np.asarray(lambda_grid, dtype=float)
    if lambda_grid.size == 0 or np.any(lambda_grid <= 0):
        raise InvalidDimensionError("lambda grid must be nonempty and positive")
    p = H.shape[1]
    least_squares = scipy.linalg.lstsq(H, b)[0]
    fit_scale = np.linalg.norm(H @ least_squares)
    if fit_scale == 0.0:
        return MstlsSelection(coefficients=np.zeros(p), lam=float(lambda_grid[0]),
                              losses=np.zeros(lambda_grid.size))

    losses = np.empty(lambda_grid.size)
    candidates = []
    for i, lam in enumerate(lambda_grid):
        lower, upper = mstls_bounds(H, b, lam)
        coefficients = stls(H, b, lower, upper)
        losses[i] = (np.linalg.norm(H @ (coefficients - least_squares)) / fit_scale
                     + np.count_nonzero(coefficients) / p)
        candidates.append(coefficients)
    best = int(np.argmin(losses))
    return MstlsSelection(coefficients=candidates[best], lam=float(lambda_grid[best]), losses=losses)
