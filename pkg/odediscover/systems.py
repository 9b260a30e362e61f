"""
Reference ODE systems, RK4 simulation, seeded measurement noise and noise-level estimation.
"""

import math
from dataclasses import dataclass, replace
from functools import partial
from pathlib import Path
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .basis import MonomialBasis, enumerate_basis
from .errors import DivergenceError, InvalidDimensionError, UnknownSystemError
from .operators import check_uniform_grid
from .run_logger import RunLogger

logger = RunLogger("systems")

# Largest internal RK4 step as a fraction of the simulated span
MAX_STEP_FRACTION = 1e-3

# States beyond this magnitude count as a blow-up
DIVERGENCE_BOUND = 1e12

TRAJECTORY_KINDS = ("true", "noisy", "denoised")


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    values: np.ndarray
    kind: str = "true"

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise InvalidDimensionError(f"unknown trajectory kind '{self.kind}'")
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        times = np.asarray(self.times, dtype=float)
        if values.shape[0] != times.size:
            raise InvalidDimensionError(
                f"{times.size} time samples but {values.shape[0]} value rows")
        check_uniform_grid(times)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.times.size

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def t_end(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def dt(self) -> float:
        return self.t_end / (self.n - 1)

    def state(self, k: int) -> np.ndarray:
        return self.values[:, k]

    def with_values(self, values: np.ndarray, kind: str) -> "Trajectory":
        return Trajectory(times=self.times, values=values, kind=kind)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=[f"u{k + 1}" for k in range(self.m)])
        frame.insert(0, "t", self.times)
        return frame

    def to_csv(self, path: Union[str, Path]):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, path: Union[str, Path], kind: str = "noisy") -> "Trajectory":
        frame = pd.read_csv(path, float_precision="round_trip")
        if list(frame.columns[:1]) != ["t"] or frame.shape[1] < 2:
            raise InvalidDimensionError(f"{path}: expected header t,u1,...,um")
        return cls(times=frame["t"].to_numpy(), values=frame.iloc[:, 1:].to_numpy(), kind=kind)


@dataclass(frozen=True)
class OdeSystem:
    name: str
    m: int
    rhs: Callable[[np.ndarray], np.ndarray]
    basis: MonomialBasis
    true_coefficients: np.ndarray
    default_ic: Tuple[float, ...]
    default_t_end: float
    default_degree: int
    parameters: Optional[Mapping[str, float]] = None

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.rhs(np.asarray(u, dtype=float))


def _coefficient_matrix(basis: MonomialBasis, terms: Sequence[Dict[Tuple[int, ...], float]]) -> np.ndarray:
    coefficients = np.zeros((basis.m, basis.p))
    for k, state_terms in enumerate(terms):
        for alpha, value in state_terms.items():
            coefficients[k, basis.position(alpha)] = value
    return coefficients


def _duffing_rhs(u, kappa, gamma, epsilon):
    u1, u2 = u[..., 0], u[..., 1]
    return np.stack([u2, -kappa * u1 - gamma * u2 - epsilon * u1 ** 3], axis=-1)


def _van_der_pol_rhs(u, gamma):
    u1, u2 = u[..., 0], u[..., 1]
    return np.stack([u2, -u1 + gamma * u2 - gamma * u1 ** 2 * u2], axis=-1)


def _rossler_rhs(u, alpha, beta, kappa):
    u1, u2, u3 = u[..., 0], u[..., 1], u[..., 2]
    return np.stack([-u2 - u3, u1 + alpha * u2, beta - kappa * u3 + u1 * u3], axis=-1)


def _lorenz96_rhs(u, forcing):
    return (np.roll(u, -1, axis=-1) - np.roll(u, 2, axis=-1)) * np.roll(u, 1, axis=-1) - u + forcing


def _polynomial_rhs(u, exponents, coefficients):
    theta = np.prod(u[..., None, :] ** exponents, axis=-1)
    return theta @ coefficients.T


def duffing_system(kappa: float, gamma: float, epsilon: float, name: str = "duffing") -> OdeSystem:
    basis = enumerate_basis(2, 4)
    terms = [{(0, 1): 1.0},
             {(1, 0): -kappa, (0, 1): -gamma, (3, 0): -epsilon}]
    return OdeSystem(
        name=name, m=2,
        rhs=partial(_duffing_rhs, kappa=kappa, gamma=gamma, epsilon=epsilon),
        basis=basis, true_coefficients=_coefficient_matrix(basis, terms),
        default_ic=(0.0, 1.0), default_t_end=10.0, default_degree=4,
        parameters={"kappa": kappa, "gamma": gamma, "epsilon": epsilon},
    )


def van_der_pol_system(gamma: float = 2.0) -> OdeSystem:
    basis = enumerate_basis(2, 4)
    terms = [{(0, 1): 1.0},
             {(1, 0): -1.0, (0, 1): gamma, (2, 1): -gamma}]
    return OdeSystem(
        name="van_der_pol", m=2, rhs=partial(_van_der_pol_rhs, gamma=gamma),
        basis=basis, true_coefficients=_coefficient_matrix(basis, terms),
        default_ic=(0.0, 1.0), default_t_end=10.0, default_degree=4,
        parameters={"gamma": gamma},
    )


def rossler_system(alpha: float = 0.2, beta: float = 0.2, kappa: float = 5.7) -> OdeSystem:
    basis = enumerate_basis(3, 2)
    terms = [{(0, 1, 0): -1.0, (0, 0, 1): -1.0},
             {(1, 0, 0): 1.0, (0, 1, 0): alpha},
             {(0, 0, 0): beta, (0, 0, 1): -kappa, (1, 0, 1): 1.0}]
    return OdeSystem(
        name="rossler", m=3, rhs=partial(_rossler_rhs, alpha=alpha, beta=beta, kappa=kappa),
        basis=basis, true_coefficients=_coefficient_matrix(basis, terms),
        default_ic=(0.0, -5.0, 0.0), default_t_end=10.0, default_degree=2,
        parameters={"alpha": alpha, "beta": beta, "kappa": kappa},
    )


def lorenz96_system(m: int = 6, forcing: float = 8.0) -> OdeSystem:
    if m < 4:
        raise InvalidDimensionError(f"Lorenz 96 needs at least 4 states, got {m}")
    basis = enumerate_basis(m, 3)

    def unit(*ks):
        alpha = [0] * m
        for k in ks:
            alpha[k % m] += 1
        return tuple(alpha)

    terms = []
    for i in range(m):
        terms.append({unit(i + 1, i - 1): 1.0, unit(i - 2, i - 1): -1.0,
                      unit(i): -1.0, unit(): forcing})
    ic = (1.0,) + (forcing,) * (m - 1)
    return OdeSystem(
        name="lorenz96", m=m, rhs=partial(_lorenz96_rhs, forcing=forcing),
        basis=basis, true_coefficients=_coefficient_matrix(basis, terms),
        default_ic=ic, default_t_end=5.0, default_degree=3,
        parameters={"forcing": forcing},
    )


SYSTEMS: Dict[str, Callable[[], OdeSystem]] = {
    "duffing_ps1": partial(duffing_system, 1.0, 0.1, 5.0, "duffing_ps1"),
    "duffing_ps2": partial(duffing_system, 0.2, 0.2, 1.0, "duffing_ps2"),
    "van_der_pol": van_der_pol_system,
    "rossler": rossler_system,
    "lorenz96": lorenz96_system,
}


def builtin_system(name: str) -> OdeSystem:
    try:
        factory = SYSTEMS[name]
    except KeyError:
        raise UnknownSystemError(name, SYSTEMS) from None
    return factory()


def learned_system(basis: MonomialBasis, coefficients: np.ndarray, name: str = "learned",
                   template: Optional[OdeSystem] = None) -> OdeSystem:
    """Polynomial system u' = Theta(u) c^T defined by a coefficient matrix."""
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape != (basis.m, basis.p):
        raise InvalidDimensionError(
            f"coefficients must have shape {(basis.m, basis.p)}, got {coefficients.shape}")
    system = OdeSystem(
        name=name, m=basis.m,
        rhs=partial(_polynomial_rhs, exponents=basis.as_array(), coefficients=coefficients),
        basis=basis, true_coefficients=coefficients,
        default_ic=(0.0,) * basis.m, default_t_end=1.0, default_degree=basis.d,
    )
    if template is not None:
        system = replace(system, default_ic=template.default_ic,
                         default_t_end=template.default_t_end)
    return system


def _rk4_step(rhs, u, h):
    k1 = rhs(u)
    k2 = rhs(u + 0.5 * h * k1)
    k3 = rhs(u + 0.5 * h * k2)
    k4 = rhs(u + h * k3)
    return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate(system: OdeSystem, ic: Optional[Sequence[float]] = None, t_end: Optional[float] = None,
             n: int = 1000, max_step: Optional[float] = None, t_start: float = 0.0) -> Trajectory:
    """Classic RK4 on a uniform output grid with internal substeps of at most max_step.

    max_step defaults to 1e-3 * t_end.
    """
    ic = np.asarray(system.default_ic if ic is None else ic, dtype=float)
    t_end = system.default_t_end if t_end is None else float(t_end)
    if n < 2:
        raise InvalidDimensionError(f"simulation needs n >= 2, got {n}")
    if t_end <= 0:
        raise InvalidDimensionError(f"t_end must be positive, got {t_end}")
    if ic.shape != (system.m,):
        raise InvalidDimensionError(f"{system.name} expects {system.m} initial values")

    max_step = MAX_STEP_FRACTION * t_end if max_step is None else float(max_step)
    dt = t_end / (n - 1)
    substeps = max(1, math.ceil(dt / max_step - 1e-9))
    h = dt / substeps

    values = np.empty((n, system.m))
    values[0] = ic
    u = ic.copy()
    for i in range(1, n):
        for _ in range(substeps):
            u = _rk4_step(system.rhs, u, h)
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > DIVERGENCE_BOUND:
            blow_up = t_start + i * dt
            logger.warning("Simulation diverged",
                           data={"system": system.name, "time": blow_up})
            raise DivergenceError(blow_up, samples=values[:i].copy())
        values[i] = u

    times = t_start + np.linspace(0.0, t_end, n)
    logger.debug("Simulated trajectory",
                 data={"system": system.name, "n": n, "t_end": t_end, "substeps": substeps})
    return Trajectory(times=times, values=values, kind="true")


def noise_generator(seed: int, state: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, state); draw i is row i."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(state)])))


def add_noise(traj: Trajectory, sigma: Union[float, Sequence[float]], seed: int) -> Trajectory:
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim == 0:
        sigma = np.full(traj.m, float(sigma))
    if sigma.shape != (traj.m,):
        raise InvalidDimensionError(f"expected {traj.m} noise levels, got shape {sigma.shape}")
    if np.any(sigma < 0):
        raise InvalidDimensionError("noise standard deviation must be nonnegative")
    if traj.kind != "true":
        raise InvalidDimensionError(f"noise is added to true trajectories, got '{traj.kind}'")

    noisy = traj.values.copy()
    for k in range(traj.m):
        noisy[:, k] += sigma[k] * noise_generator(seed, k).standard_normal(traj.n)
    return traj.with_values(noisy, kind="noisy")


def estimate_noise_std(noisy: Trajectory) -> np.ndarray:
    """Per-state sigma from second differences: sqrt(sum(d2 u)^2 / (6 (N - 2)))."""
    values = getattr(noisy, "values", noisy)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n = values.shape[0]
    if n < 3:
        raise InvalidDimensionError(f"noise estimation needs N >= 3, got {n}")
    second = np.diff(values, n=2, axis=0)
    return np.sqrt(np.sum(second ** 2, axis=0) / (6.0 * (n - 2)))
