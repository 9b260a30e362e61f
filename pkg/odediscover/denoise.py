"""
Projection-based state denoising.

psdn projects every measured state onto the column space of the integrated
library Phi = [1 | T Theta] built from the measurements. iter_psdn repeats the
projection with a partial step alpha, rebuilding the library from the current
estimates, optionally reverting states that wander further than sigma_k
(per sample, RMS) from the measurements.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .basis import MonomialBasis, build_library_matrices
from .errors import DegenerateLibraryError, InvalidDimensionError
from .operators import DEFAULT_RANK_TOL, Projector, build_trapezoid
from .run_logger import RunLogger
from .systems import Trajectory

logger = RunLogger("denoise")

DEFAULT_ALPHA = 0.1
DEFAULT_MAX_ITERS = 10000
DEFAULT_CONV_TOL = 1e-8


@dataclass(frozen=True)
class DenoiseConfig:
    alpha: float = DEFAULT_ALPHA
    check_diverg: bool = False
    sigma_per_state: Optional[Sequence[float]] = None
    max_iters: int = DEFAULT_MAX_ITERS
    conv_tol: float = DEFAULT_CONV_TOL
    use_centered_library: bool = True
    rank_tol: float = DEFAULT_RANK_TOL

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidDimensionError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.max_iters < 1:
            raise InvalidDimensionError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.conv_tol <= 0:
            raise InvalidDimensionError(f"conv_tol must be positive, got {self.conv_tol}")
        if self.sigma_per_state is not None:
            sigma = np.atleast_1d(np.asarray(self.sigma_per_state, dtype=float))
            if np.any(sigma < 0):
                raise InvalidDimensionError("sigma_per_state entries must be nonnegative")
            object.__setattr__(self, "sigma_per_state", sigma)
        elif self.check_diverg:
            raise InvalidDimensionError("check_diverg requires sigma_per_state")

    def sigma_for(self, m: int) -> Optional[np.ndarray]:
        if self.sigma_per_state is None:
            return None
        sigma = self.sigma_per_state
        if sigma.size == 1:
            return np.full(m, float(sigma[0]))
        if sigma.size != m:
            raise InvalidDimensionError(f"expected {m} noise levels, got {sigma.size}")
        return sigma


@dataclass
class DenoiseResult:
    denoised: Trajectory
    iterations: int
    per_iter_change: List[float] = field(default_factory=list)
    reverted_states: List[List[int]] = field(default_factory=list)
    converged: bool = False
    # every state was reverted in the last iteration, so nothing can move any more
    stalled: bool = False


def _check_sample_count(n: int, basis: MonomialBasis):
    if n < basis.p + 1:
        raise InvalidDimensionError(
            f"denoising needs N >= p + 1 = {basis.p + 1} samples, got {n}")


def library_projector(basis: MonomialBasis, states: np.ndarray, times_t_end: float,
                      sigma: Optional[np.ndarray] = None,
                      rank_tol: float = DEFAULT_RANK_TOL) -> Projector:
    """Projector onto range([1 | T Theta(states)]), centered when sigma is given."""
    trapezoid = build_trapezoid(states.shape[0], times_t_end)
    library = build_library_matrices(basis, states, trapezoid, sigma=sigma, rank_tol=rank_tol)
    projector = library.projector
    if projector.rank == 0:
        raise DegenerateLibraryError("integrated library has rank zero")
    return projector


def psdn(noisy: Trajectory, basis: MonomialBasis, sigma=None, use_centered: bool = True,
         rank_tol: float = DEFAULT_RANK_TOL) -> Trajectory:
    """Single projection of the measurements onto the integrated library's column space."""
    _check_sample_count(noisy.n, basis)
    centering = sigma if (use_centered and sigma is not None) else None
    projector = library_projector(basis, noisy.values, noisy.t_end, centering, rank_tol)
    logger.debug("PSDN projection", data={"n": noisy.n, "p": basis.p, "rank": projector.rank,
                                          "centered": centering is not None})
    return noisy.with_values(projector.apply(noisy.values), kind="denoised")


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    delta = np.linalg.norm(new - old, axis=0)
    scale = np.linalg.norm(old, axis=0)
    ratios = np.divide(delta, scale, out=np.where(delta > 0, np.inf, 0.0), where=scale > 0)
    return float(np.max(ratios))


def iter_psdn(noisy: Trajectory, basis: MonomialBasis, cfg: DenoiseConfig = DenoiseConfig()) -> DenoiseResult:
    """Iterated partial projection u <- alpha P u + (1 - alpha) u until the states stop moving."""
    _check_sample_count(noisy.n, basis)
    sigma = cfg.sigma_for(noisy.m)
    measured = noisy.values
    current = measured.copy()
    sqrt_n = np.sqrt(noisy.n)

    result = DenoiseResult(denoised=noisy, iterations=0)
    logger.info("IterPSDN started", data={"n": noisy.n, "m": noisy.m, "p": basis.p,
                                           "alpha": cfg.alpha, "check_diverg": cfg.check_diverg})

    for iteration in range(cfg.max_iters):
        # the centered library applies to raw measurements only
        centering = sigma if (iteration == 0 and cfg.use_centered_library) else None
        projector = library_projector(basis, current, noisy.t_end, centering, cfg.rank_tol)
        updated = cfg.alpha * projector.apply(current) + (1.0 - cfg.alpha) * current

        reverted = []
        if cfg.check_diverg:
            drift = np.linalg.norm(updated - measured, axis=0) / sqrt_n
            for k in np.flatnonzero(drift > sigma):
                updated[:, k] = current[:, k]
                reverted.append(int(k))
            if reverted:
                logger.debug("Reverted diverging states",
                             data={"iteration": iteration, "states": reverted})

        change = _relative_change(updated, current)
        current = updated
        result.per_iter_change.append(change)
        result.reverted_states.append(reverted)
        result.iterations = iteration + 1
        if len(reverted) == noisy.m:
            result.stalled = True
            break
        if change < cfg.conv_tol:
            result.converged = True
            break

    result.denoised = noisy.with_values(current, kind="denoised")
    if result.converged:
        logger.info("IterPSDN converged", data={"iterations": result.iterations})
    elif result.stalled:
        logger.warning("IterPSDN stopped, every state diverged from the measurements",
                       data={"iterations": result.iterations, "sigma": sigma.tolist()})
    else:
        logger.warning("IterPSDN hit max_iters without converging",
                       data={"iterations": result.iterations,
                             "last_change": result.per_iter_change[-1]})
    return result
