"""
End-to-end discovery methods.

dsindy       IterPSDN -> IRW-SOCP per state (gamma from theory or a Pareto corner)
l1sindy      IterPSDN -> Tikhonov derivative -> IRW-Lasso, both lambdas from Pareto corners
wsindy-lite  weak form + MSTLS on the raw measurements
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .basis import MonomialBasis, evaluate_library, gramian_consistent, integrated_library
from .denoise import DEFAULT_ALPHA, DEFAULT_CONV_TOL, DEFAULT_MAX_ITERS, DenoiseConfig, DenoiseResult, iter_psdn
from .errors import ConfigError
from .operators import build_difference_stack, build_trapezoid
from .pareto import LassoCurve, SocpGammaCurve, TikhonovCurve, corner_search, gamma_pareto
from .regression import (
    DEFAULT_EPS_W,
    DEFAULT_IRW_ITERS,
    DEFAULT_SOLVER_TOL,
    SUPPORT_CUTOFF,
    DiscoveryResult,
    gamma_theory,
    irw_socp,
    support,
)
from .run_logger import RunLogger
from .systems import Trajectory, estimate_noise_std
from .weakform import DEFAULT_LAMBDA_GRID, wsindy_discover

logger = RunLogger("pipeline")

METHOD_NAMES = ("dsindy", "l1sindy", "wsindy-lite")
GAMMA_MODES = ("theory", "pareto")

TIKHONOV_LAMBDA_BOUNDS = (1e-12, 1e2)
# the Tikhonov corner is searched this many decades below the discrepancy lambda
TIKHONOV_WINDOW_DECADES = 2.0
# Lasso search window relative to the dead-zone lambda 2 ||A^T b||_inf of the normalized library
LASSO_WINDOW = (1e-3, 1e-2)

# Lower bound on the data radius as a fraction of ||u~_k||
GAMMA_FLOOR = 1e-6


@dataclass(frozen=True)
class DsindyOptions:
    alpha: float = DEFAULT_ALPHA
    check_diverg: bool = True
    max_iters: int = DEFAULT_MAX_ITERS
    conv_tol: float = DEFAULT_CONV_TOL
    use_centered_library: bool = True
    gamma_mode: str = "theory"
    irw_iters: int = DEFAULT_IRW_ITERS
    eps_w: float = DEFAULT_EPS_W
    use_consistent_gram: bool = False
    solver_tol: float = DEFAULT_SOLVER_TOL
    sigma: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.gamma_mode not in GAMMA_MODES:
            raise ConfigError(f"gamma_mode must be one of {GAMMA_MODES}, got '{self.gamma_mode}'")
        if self.irw_iters < 1:
            raise ConfigError(f"irw_iters must be >= 1, got {self.irw_iters}")


@dataclass
class PipelineResult:
    method: str
    discovery: DiscoveryResult
    basis: MonomialBasis
    sigma: np.ndarray
    denoised: Optional[Trajectory] = None
    denoise: Optional[DenoiseResult] = None
    lambdas: List[float] = field(default_factory=list)

    @property
    def coefficients(self) -> np.ndarray:
        return self.discovery.coefficients


def resolve_sigma(noisy: Trajectory, options: DsindyOptions) -> np.ndarray:
    """Known per-state noise levels, or the second-difference estimate."""
    if options.sigma is None:
        return estimate_noise_std(noisy)
    sigma = np.atleast_1d(np.asarray(options.sigma, dtype=float))
    if sigma.size == 1:
        sigma = np.full(noisy.m, float(sigma[0]))
    if sigma.shape != (noisy.m,):
        raise ConfigError(f"expected {noisy.m} noise levels, got {sigma.size}")
    return sigma


def denoise_states(noisy: Trajectory, basis: MonomialBasis, sigma: np.ndarray,
                   options: DsindyOptions) -> DenoiseResult:
    cfg = DenoiseConfig(alpha=options.alpha, check_diverg=options.check_diverg,
                        sigma_per_state=sigma, max_iters=options.max_iters,
                        conv_tol=options.conv_tol, use_centered_library=options.use_centered_library)
    return iter_psdn(noisy, basis, cfg)


def discover_dsindy(noisy: Trajectory, basis: MonomialBasis,
                    options: DsindyOptions = DsindyOptions()) -> PipelineResult:
    sigma = resolve_sigma(noisy, options)
    denoised = denoise_states(noisy, basis, sigma, options)
    u_tilde = denoised.denoised.values

    trapezoid = build_trapezoid(noisy.n, noisy.t_end)
    theta_tilde = evaluate_library(basis, u_tilde)
    phi_tilde = integrated_library(theta_tilde, trapezoid)
    gram = gramian_consistent(theta_tilde, noisy, basis, sigma) if options.use_consistent_gram else None

    states = []
    for k in range(noisy.m):
        gamma = max(gamma_theory(float(sigma[k]), basis.p),
                    GAMMA_FLOOR * float(np.linalg.norm(u_tilde[:, k])))
        if options.gamma_mode == "pareto" and gamma > 0:
            curve = SocpGammaCurve(u_tilde[:, k], theta_tilde, phi_tilde, noisy.t_end,
                                   gram=gram, solver_tol=options.solver_tol)
            gamma = gamma_pareto(curve, gamma)
        states.append(irw_socp(u_tilde[:, k], theta_tilde, phi_tilde, gram, gamma,
                               irw_iters=options.irw_iters, eps_w=options.eps_w,
                               t_end=noisy.t_end, solver_tol=options.solver_tol))
        logger.debug("State discovered", data={"state": k, "gamma": gamma,
                                               "status": states[-1].solver_status})

    discovery = DiscoveryResult.from_states(states, method="dsindy")
    return PipelineResult(method="dsindy", discovery=discovery, basis=basis, sigma=sigma,
                          denoised=denoised.denoised, denoise=denoised)


def _corner_or_midpoint(curve: Callable, low: float, high: float, label: str) -> float:
    corner = corner_search(curve, low, high)
    if corner.no_corner:
        lam = math.sqrt(low * high)
        logger.warning("No Pareto corner, using the geometric midpoint",
                       data={"curve": label, "lambda": lam})
        return lam
    return corner.lam


def discover_l1sindy(noisy: Trajectory, basis: MonomialBasis,
                     options: DsindyOptions = DsindyOptions()) -> PipelineResult:
    """IterPSDN, then Tikhonov derivatives and IRW-Lasso with Pareto-corner lambdas.

    The Tikhonov corner is searched below the discrepancy lambda, the largest
    lambda whose fit stays inside the same data radius gamma that bounds the
    cone program. The Lasso runs on unit-norm columns and its corner is
    searched in LASSO_WINDOW times the dead-zone lambda.
    """
    sigma = resolve_sigma(noisy, options)
    denoised = denoise_states(noisy, basis, sigma, options)
    u_tilde = denoised.denoised.values

    trapezoid = build_trapezoid(noisy.n, noisy.t_end)
    difference = build_difference_stack(noisy.n, noisy.t_end)
    theta_tilde = evaluate_library(basis, u_tilde)

    derivatives = np.zeros_like(u_tilde)
    coefficients = np.zeros((noisy.m, basis.p))
    u0 = np.zeros(noisy.m)
    lambdas = []
    for k in range(noisy.m):
        tikhonov = TikhonovCurve(u_tilde[:, k], trapezoid, difference, fit_offset=True)
        target = max(gamma_theory(float(sigma[k]), basis.p),
                     GAMMA_FLOOR * float(np.linalg.norm(u_tilde[:, k])))
        lam_disc = tikhonov.discrepancy_lambda(target, *TIKHONOV_LAMBDA_BOUNDS)
        low = max(lam_disc * 10.0 ** -TIKHONOV_WINDOW_DECADES, TIKHONOV_LAMBDA_BOUNDS[0])
        lam_tik = lam_disc if low >= lam_disc else _corner_or_midpoint(tikhonov, low, lam_disc,
                                                                       label="tikhonov")
        derivatives[:, k] = tikhonov.solve(lam_tik)
        u0[k] = tikhonov.offset(derivatives[:, k])

        lasso = LassoCurve(theta_tilde, derivatives[:, k], options.irw_iters, options.eps_w)
        dead_zone = lasso.dead_zone
        if dead_zone == 0.0:
            lam_lasso = 0.0
        else:
            low, high = LASSO_WINDOW
            lam_lasso = _corner_or_midpoint(lasso, low * dead_zone, high * dead_zone, label="lasso")
            coefficients[k] = lasso.solve(lam_lasso)
        lambdas.extend([lam_tik, lam_lasso])
        logger.debug("State discovered", data={"state": k, "lambda_discrepancy": lam_disc,
                                               "lambda_tikhonov": lam_tik,
                                               "lambda_lasso": lam_lasso, "dead_zone": dead_zone})

    discovery = DiscoveryResult(coefficients=coefficients, derivatives=derivatives,
                                u0=u0, method="l1sindy")
    return PipelineResult(method="l1sindy", discovery=discovery, basis=basis, sigma=sigma,
                          denoised=denoised.denoised, denoise=denoised, lambdas=lambdas)


def discover_wsindy_lite(noisy: Trajectory, basis: MonomialBasis,
                         options: DsindyOptions = DsindyOptions()) -> PipelineResult:
    sigma = resolve_sigma(noisy, options)
    coefficients = wsindy_discover(noisy, basis, lambda_grid=DEFAULT_LAMBDA_GRID)
    discovery = DiscoveryResult(coefficients=coefficients, method="wsindy-lite")
    return PipelineResult(method="wsindy-lite", discovery=discovery, basis=basis, sigma=sigma)


METHODS: Dict[str, Callable[..., PipelineResult]] = {
    "dsindy": discover_dsindy,
    "l1sindy": discover_l1sindy,
    "wsindy-lite": discover_wsindy_lite,
}


def run_method(method: str, noisy: Trajectory, basis: MonomialBasis,
               options: DsindyOptions = DsindyOptions()) -> PipelineResult:
    try:
        discover = METHODS[method]
    except KeyError:
        raise ConfigError(f"unknown method '{method}'; valid methods: {', '.join(METHOD_NAMES)}") from None
    logger.info("Discovery started", data={"method": method, "n": noisy.n, "m": noisy.m, "p": basis.p})
    return discover(noisy, basis, options)


def _format_term(value: float, label: str, first: bool) -> str:
    magnitude = f"{abs(value):.4g}"
    body = magnitude if label == "1" else f"{magnitude} {label}"
    if first:
        return f"-{body}" if value < 0 else body
    return f" - {body}" if value < 0 else f" + {body}"


def format_equations(coefficients: np.ndarray, basis: MonomialBasis,
                     cutoff: float = SUPPORT_CUTOFF, names: Optional[Sequence[str]] = None) -> List[str]:
    """Render each row of coefficients as "u1' = -0.2 u1 + 0.5 u1 u2"."""
    coefficients = np.atleast_2d(np.asarray(coefficients, dtype=float))
    labels = basis.labels(names)
    state_names = list(names) if names is not None else [f"u{k + 1}" for k in range(basis.m)]
    mask = support(coefficients, cutoff)
    lines = []
    for k, row in enumerate(coefficients):
        terms = [_format_term(row[j], labels[j], first=(i == 0))
                 for i, j in enumerate(np.flatnonzero(mask[k]))]
        lines.append(f"{state_names[k]}' = {''.join(terms) if terms else '0'}")
    return lines
