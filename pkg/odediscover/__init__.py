"""
odediscover - sparse ODE discovery from noisy state measurements.

Projection-based denoising (PSDN / IterPSDN), simultaneous derivative and
coefficient recovery by an iteratively reweighted second-order cone program,
l1-SINDy and weak-form baselines, and a Monte Carlo harness that checks the
denoising error predictions.
"""

__version__ = "0.1.0"

from .basis import MonomialBasis, enumerate_basis, evaluate_library, evaluate_unbiased_library
from .denoise import DenoiseConfig, DenoiseResult, iter_psdn, psdn
from .errors import OdeDiscoverError
from .pipeline import DsindyOptions, PipelineResult, format_equations, run_method
from .systems import SYSTEMS, OdeSystem, Trajectory, add_noise, builtin_system, simulate

__all__ = [
    "__version__",
    "DenoiseConfig",
    "DenoiseResult",
    "DsindyOptions",
    "MonomialBasis",
    "OdeDiscoverError",
    "OdeSystem",
    "PipelineResult",
    "SYSTEMS",
    "Trajectory",
    "add_noise",
    "builtin_system",
    "enumerate_basis",
    "evaluate_library",
    "evaluate_unbiased_library",
    "format_equations",
    "iter_psdn",
    "psdn",
    "run_method",
    "simulate",
]
