"""
Exception hierarchy for odediscover.

Every error raised on purpose by the library derives from OdeDiscoverError so
the CLI can map it onto an exit code without catching unrelated bugs.
"""

from typing import Optional

# CLI exit codes
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_IO = 4


class OdeDiscoverError(Exception):
    """Base class for all library errors."""


class InvalidDimensionError(OdeDiscoverError, ValueError):
    """Array shapes or sample counts do not fit the operation."""


class NonUniformGridError(OdeDiscoverError, ValueError):
    """Time samples are not equispaced."""


class UnknownSystemError(OdeDiscoverError, KeyError):
    def __init__(self, name: str, valid):
        self.name = name
        self.valid = sorted(valid)
        super().__init__(f"unknown system '{name}'; valid names: {', '.join(self.valid)}")

    def __str__(self):
        return self.args[0]


class DivergenceError(OdeDiscoverError):
    """Simulation produced a non-finite or unbounded state."""

    def __init__(self, time: float, message: Optional[str] = None, samples=None):
        self.time = float(time)
        # finite samples produced before the blow-up, when known
        self.samples = samples
        super().__init__(message or f"simulation diverged at t = {self.time:.6g}")


class DegenerateLibraryError(OdeDiscoverError):
    """The integrated library has rank zero."""


class RankDeficientLibraryError(OdeDiscoverError):
    """The integrated library is not of full column rank."""


class ZeroTruthError(OdeDiscoverError, ValueError):
    """Relative error requested against an all-zero reference."""


class ParetoError(OdeDiscoverError):
    """Non-finite residual met during a corner search."""

    def __init__(self, lam: float, message: Optional[str] = None):
        self.lam = float(lam)
        super().__init__(message or f"non-finite Pareto residual at lambda = {self.lam:.6g}")


class SolverFailure(OdeDiscoverError):
    """A convex solve finished without a usable point."""

    def __init__(self, status: str):
        self.status = status
        super().__init__(f"solver finished with status '{status}'")


class ConfigError(OdeDiscoverError):
    """Invalid run configuration."""


def exit_code_for(exc: BaseException) -> int:
    """Map an exception onto the CLI exit code."""
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, OdeDiscoverError):
        return EXIT_RUNTIME
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_RUNTIME
