"""
Error metrics, reconstruction protocols, theoretical error predictions and the
Monte Carlo harness.

Records are emitted in long format, one row per
(system, method, N, sigma, seed, state, metric). System-level metrics
(`failed`, `prediction_horizon`) use state 0.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .basis import (
    MonomialBasis,
    evaluate_library,
    evaluate_unbiased_library,
    integrated_library,
)
from .denoise import DenoiseConfig, iter_psdn, psdn
from .errors import DivergenceError, InvalidDimensionError, OdeDiscoverError, ZeroTruthError
from .operators import Projector, build_trapezoid, pseudoinverse_norm
from .parallel import run_tasks
from .pipeline import DsindyOptions, run_method
from .regression import gamma_theory
from .run_logger import RunLogger
from .systems import OdeSystem, Trajectory, add_noise, builtin_system, learned_system, simulate

logger = RunLogger("analysis")

RECON_DT = 0.01
FAILURE_CLAMP = 1.0
HORIZON_THRESHOLD = 0.1
C1_DENSE_SAMPLES = 100_000
DEFAULT_PERTURBATION_DRAWS = 200

RECORD_COLUMNS = ["system", "method", "N", "sigma", "seed", "state", "metric", "value"]
RECORD_KEYS = RECORD_COLUMNS[:-1]

# seed column of rows that involve no random draw
UNSEEDED = -1

_C1_CACHE: Dict[tuple, np.ndarray] = {}

SigmaLike = Union[float, Sequence[float], np.ndarray]


def _sigma_vector(sigma: SigmaLike, m: int) -> np.ndarray:
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    if sigma.size == 1:
        sigma = np.full(m, float(sigma[0]))
    if sigma.shape != (m,) or np.any(sigma < 0):
        raise InvalidDimensionError(f"expected {m} nonnegative noise levels, got {sigma}")
    return sigma


def relative_error(est: np.ndarray, truth: np.ndarray) -> float:
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise InvalidDimensionError(f"shapes differ: {est.shape} vs {truth.shape}")
    scale = np.linalg.norm(truth)
    if scale == 0.0:
        raise ZeroTruthError("relative error against an all-zero reference")
    return float(np.linalg.norm(est - truth) / scale)


def _resolve(system: OdeSystem, ic, t_end):
    ic = tuple(float(v) for v in (system.default_ic if ic is None else ic))
    t_end = float(system.default_t_end if t_end is None else t_end)
    return ic, t_end


# Quadrature error

def quadrature_constant(t_end: float, third_derivative_max) -> np.ndarray:
    """C1 = t_end^3 / 12 * max |u'''|."""
    return t_end ** 3 / 12.0 * np.asarray(third_derivative_max, dtype=float)


def third_derivative_max(system: OdeSystem, ic=None, t_end=None,
                         n: int = C1_DENSE_SAMPLES) -> np.ndarray:
    """Per-state max |u'''| from a dense clean simulation, cached per system, IC and span."""
    ic, t_end = _resolve(system, ic, t_end)
    params = tuple(sorted((system.parameters or {}).items()))
    key = (system.name, params, ic, t_end, n)
    if key not in _C1_CACHE:
        dense = simulate(system, ic, t_end, n)
        rates = system(dense.values)
        h = dense.dt
        # fourth-order central stencil for the second derivative of u' = F(u)
        third = (-rates[4:] + 16.0 * rates[3:-1] - 30.0 * rates[2:-2]
                 + 16.0 * rates[1:-3] - rates[:-4]) / (12.0 * h ** 2)
        _C1_CACHE[key] = np.max(np.abs(third), axis=0)
        logger.debug("Third-derivative bound computed", data={"system": system.name,
                                                              "max": _C1_CACHE[key]})
    return _C1_CACHE[key].copy()


def quadrature_error_from_samples(values: np.ndarray, rates: np.ndarray, t_end: float) -> np.ndarray:
    """e_q = u0 + T u' - u, columnwise."""
    values = np.asarray(values, dtype=float)
    trapezoid = build_trapezoid(values.shape[0], t_end)
    return values[0] + trapezoid.apply(rates) - values


def quadrature_error(system: OdeSystem, n: int, ic=None, t_end=None) -> np.ndarray:
    ic, t_end = _resolve(system, ic, t_end)
    traj = simulate(system, ic, t_end, n)
    return quadrature_error_from_samples(traj.values, system(traj.values), t_end)


# Theory

@dataclass
class TheoryEstimates:
    e_theory: np.ndarray
    e_noisy: np.ndarray
    c1: np.ndarray
    gamma_exp: np.ndarray
    state_norms: np.ndarray
    n: int
    p: int


def theory_estimates(system: OdeSystem, n: int, sigma: SigmaLike,
                     basis: Optional[MonomialBasis] = None, ic=None, t_end=None) -> TheoryEstimates:
    basis = system.basis if basis is None else basis
    ic, t_end = _resolve(system, ic, t_end)
    sigma = _sigma_vector(sigma, system.m)
    norms = np.linalg.norm(simulate(system, ic, t_end, n).values, axis=0)
    c1 = quadrature_constant(t_end, third_derivative_max(system, ic, t_end))
    return TheoryEstimates(
        e_theory=sigma * np.sqrt(basis.p + 1) / norms,
        e_noisy=sigma * np.sqrt(n) / norms,
        c1=c1,
        gamma_exp=np.array([gamma_theory(s, basis.p) for s in sigma]),
        state_norms=norms,
        n=n,
        p=basis.p,
    )


def known_projector(true_traj: Trajectory, basis: MonomialBasis) -> Projector:
    """Projector onto range(Phi*) built from the true states."""
    trapezoid = build_trapezoid(true_traj.n, true_traj.t_end)
    return Projector.from_matrix(integrated_library(evaluate_library(basis, true_traj), trapezoid))


def expected_known_projection_error(system: OdeSystem, n: int, sigma: SigmaLike,
                                    basis: Optional[MonomialBasis] = None,
                                    ic=None, t_end=None) -> np.ndarray:
    """E ||P* u - u*||^2 = sigma^2 rank(Phi*) + ||(I - P*) e_q||^2, per state.

    (I - P*) e_q = -(I - P*) u* because u0 + T u'* lies in range(Phi*).
    """
    basis = system.basis if basis is None else basis
    ic, t_end = _resolve(system, ic, t_end)
    sigma = _sigma_vector(sigma, system.m)
    truth = simulate(system, ic, t_end, n)
    projector = known_projector(truth, basis)
    residual = np.linalg.norm(projector.complement(truth.values), axis=0) ** 2
    return sigma ** 2 * projector.rank + residual


def known_projection_bounds(system: OdeSystem, n: int, sigma: SigmaLike,
                            basis: Optional[MonomialBasis] = None, ic=None,
                            t_end=None) -> Tuple[np.ndarray, np.ndarray]:
    """[sigma^2 (p+1), sigma^2 (p+1) + C1^2 / (N-1)^3] per state."""
    basis = system.basis if basis is None else basis
    ic, t_end = _resolve(system, ic, t_end)
    sigma = _sigma_vector(sigma, system.m)
    c1 = quadrature_constant(t_end, third_derivative_max(system, ic, t_end))
    lower = sigma ** 2 * (basis.p + 1)
    return lower, lower + c1 ** 2 / (n - 1) ** 3


def known_projection_errors(true_traj: Trajectory, basis: MonomialBasis, sigma: SigmaLike,
                            seeds: Iterable[int]) -> np.ndarray:
    """||P* u - u*||^2 per seed and state."""
    projector = known_projector(true_traj, basis)
    rows = []
    for seed in seeds:
        noisy = add_noise(true_traj, sigma, seed)
        rows.append(np.linalg.norm(projector.apply(noisy.values) - true_traj.values, axis=0) ** 2)
    return np.array(rows)


def _phi_pinv_norm(truth: Trajectory, basis: MonomialBasis) -> float:
    trapezoid = build_trapezoid(truth.n, truth.t_end)
    return pseudoinverse_norm(integrated_library(evaluate_library(basis, truth), trapezoid))


def psi_pinv_norm(system: OdeSystem, n: int, basis: Optional[MonomialBasis] = None,
                  ic=None, t_end=None) -> float:
    """||Psi*^+|| = sqrt(N) ||Phi*^+||, which stays O(1) as N grows."""
    basis = system.basis if basis is None else basis
    ic, t_end = _resolve(system, ic, t_end)
    return float(np.sqrt(n) * _phi_pinv_norm(simulate(system, ic, t_end, n), basis))


@dataclass
class PerturbationDiagnostics:
    mean_sq_norm: float
    mean_sq_frobenius: float
    mean_norm: float
    variance_bound: float
    phi_pinv_norm: float
    psi_pinv_norm: float
    c2: float
    draws: int

    @property
    def assumption_value(self) -> float:
        """||Phi*^+|| E||dPhi||, required below 1/4."""
        return self.phi_pinv_norm * self.mean_norm


def perturbation_diagnostics(system: OdeSystem, n: int, sigma: SigmaLike,
                             basis: Optional[MonomialBasis] = None,
                             draws: int = DEFAULT_PERTURBATION_DRAWS, base_seed: int = 0,
                             ic=None, t_end=None) -> PerturbationDiagnostics:
    """Monte Carlo estimates of the integrated-library perturbation dPhi = Phi^ - Phi*."""
    if draws < 2:
        raise InvalidDimensionError(f"need at least 2 draws, got {draws}")
    basis = system.basis if basis is None else basis
    ic, t_end = _resolve(system, ic, t_end)
    sigma = _sigma_vector(sigma, system.m)
    truth = simulate(system, ic, t_end, n)
    trapezoid = build_trapezoid(n, t_end)
    theta_true = evaluate_library(basis, truth)
    phi_pinv = _phi_pinv_norm(truth, basis)

    total = np.zeros_like(theta_true)
    total_sq = np.zeros_like(theta_true)
    sq_norms, sq_frob, norms = [], [], []
    for draw in range(draws):
        noisy = add_noise(truth, sigma, replication_seed(base_seed, 0, draw))
        delta = evaluate_unbiased_library(basis, noisy, sigma) - theta_true
        total += delta
        total_sq += delta ** 2
        delta_phi = trapezoid.apply(delta)
        spectral = np.linalg.norm(delta_phi, ord=2)
        norms.append(spectral)
        sq_norms.append(spectral ** 2)
        sq_frob.append(np.sum(delta_phi ** 2))

    mean = total / draws
    variance = (total_sq - draws * mean ** 2) / (draws - 1)
    worst = np.max(np.clip(variance, 0.0, None), axis=0)
    psi_pinv = np.sqrt(n) * phi_pinv
    return PerturbationDiagnostics(
        mean_sq_norm=float(np.mean(sq_norms)),
        mean_sq_frobenius=float(np.mean(sq_frob)),
        mean_norm=float(np.mean(norms)),
        variance_bound=float(t_end ** 2 / 2.0 * np.sum(worst)),
        phi_pinv_norm=float(phi_pinv),
        psi_pinv_norm=float(psi_pinv),
        c2=float(t_end * psi_pinv * np.sum(np.sqrt(worst))),
        draws=draws,
    )


def psdn_error_bound(system: OdeSystem, n: int, sigma: SigmaLike,
                     basis: Optional[MonomialBasis] = None,
                     diagnostics: Optional[PerturbationDiagnostics] = None,
                     ic=None, t_end=None) -> np.ndarray:
    """Upper bound on E||P^ u - u*|| / ||u*|| per state."""
    basis = system.basis if basis is None else basis
    ic, t_end = _resolve(system, ic, t_end)
    sigma = _sigma_vector(sigma, system.m)
    if diagnostics is None:
        diagnostics = perturbation_diagnostics(system, n, sigma, basis, ic=ic, t_end=t_end)
    norms = np.linalg.norm(simulate(system, ic, t_end, n).values, axis=0)
    c1 = quadrature_constant(t_end, third_derivative_max(system, ic, t_end))
    c2 = diagnostics.c2
    return (sigma * (np.sqrt(basis.p + 1) + c2) / norms
            + c1 / ((n - 1) ** 1.5 * norms)
            + c2 / np.sqrt(n))


# Reconstruction

@dataclass
class ReconstructionOutcome:
    protocol: str
    errors: np.ndarray
    failed: bool
    horizon: Optional[float] = None


def prediction_horizon(truth: np.ndarray, predicted: np.ndarray, dt: float,
                       threshold: float = HORIZON_THRESHOLD) -> float:
    """Largest elapsed time with every state's cumulative relative error below threshold."""
    rows = predicted.shape[0]
    truth = truth[:rows]
    error = np.sqrt(np.cumsum((predicted - truth) ** 2, axis=0))
    scale = np.sqrt(np.cumsum(truth ** 2, axis=0))
    ratio = np.divide(error, scale, out=np.where(error > 0, np.inf, 0.0), where=scale > 0)
    bad = np.flatnonzero(np.any(ratio >= threshold, axis=1))
    last_good = rows - 1 if bad.size == 0 else bad[0] - 1
    return max(0.0, last_good * dt)


def _state_errors(predicted: np.ndarray, truth: np.ndarray) -> np.ndarray:
    return np.array([relative_error(predicted[:, k], truth[:, k]) for k in range(truth.shape[1])])


def reconstruction_error(coefficients: np.ndarray, system_true: OdeSystem,
                         protocol: str = "double_time", basis: Optional[MonomialBasis] = None,
                         ic=None, t_end=None, dt: float = RECON_DT) -> ReconstructionOutcome:
    """Simulate the learned system against the truth.

    double_time  from the training IC over [0, 2 t_end]; per-state relative
                 errors clamped to 1, failed when any exceeds 1 or the
                 learned system blows up.
    horizon      from u*(t_end) over a window of length t_end; reports the
                 prediction horizon.
    """
    basis = system_true.basis if basis is None else basis
    ic, t_end = _resolve(system_true, ic, t_end)
    m = system_true.m
    coefficients = np.asarray(coefficients, dtype=float)
    if not np.all(np.isfinite(coefficients)):
        return ReconstructionOutcome(protocol, np.full(m, FAILURE_CLAMP), True,
                                     0.0 if protocol == "horizon" else None)
    learned = learned_system(basis, coefficients, template=system_true)
    steps = int(round(t_end / dt))

    if protocol == "double_time":
        truth = simulate(system_true, ic, 2.0 * t_end, 2 * steps + 1).values
        try:
            predicted = simulate(learned, ic, 2.0 * t_end, 2 * steps + 1).values
        except DivergenceError:
            return ReconstructionOutcome(protocol, np.full(m, FAILURE_CLAMP), True)
        errors = _state_errors(predicted, truth)
        if np.any(errors > FAILURE_CLAMP):
            return ReconstructionOutcome(protocol, np.full(m, FAILURE_CLAMP), True)
        return ReconstructionOutcome(protocol, errors, False)

    if protocol == "horizon":
        start = simulate(system_true, ic, t_end, steps + 1).values[-1]
        truth = simulate(system_true, start, t_end, steps + 1).values
        failed = False
        try:
            predicted = simulate(learned, start, t_end, steps + 1).values
        except DivergenceError as exc:
            failed = True
            predicted = exc.samples if exc.samples is not None else start[None, :]
        horizon = prediction_horizon(truth, predicted, dt)
        if failed:
            errors = np.full(m, FAILURE_CLAMP)
        else:
            errors = np.minimum(_state_errors(predicted, truth), FAILURE_CLAMP)
        return ReconstructionOutcome(protocol, errors, failed, horizon)

    raise InvalidDimensionError(f"unknown reconstruction protocol '{protocol}'")


# Records

@dataclass
class ExperimentRecord:
    system: str
    method: str
    n: int
    sigma: float
    seed: int
    denoise_rel_err: np.ndarray
    deriv_rel_err: np.ndarray
    coeff_rel_err: np.ndarray
    recon_rel_err: np.ndarray
    failed: bool = False
    prediction_horizon: Optional[float] = None
    grid_index: int = 0
    replication: int = 0
    error: Optional[str] = None
    # learned m x p matrix; not part of the CSV rows
    coefficients: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.failed:
            self.recon_rel_err = np.full(np.shape(self.recon_rel_err), FAILURE_CLAMP)

    def to_rows(self) -> List[dict]:
        base = {"system": self.system, "method": self.method, "N": int(self.n),
                "sigma": float(self.sigma), "seed": int(self.seed)}
        rows = []
        for metric in ("denoise_rel_err", "deriv_rel_err", "coeff_rel_err", "recon_rel_err"):
            for k, value in enumerate(getattr(self, metric), start=1):
                rows.append({**base, "state": k, "metric": metric, "value": float(value)})
        rows.append({**base, "state": 0, "metric": "failed", "value": float(self.failed)})
        if self.prediction_horizon is not None:
            rows.append({**base, "state": 0, "metric": "prediction_horizon",
                         "value": float(self.prediction_horizon)})
        return rows


def records_frame(rows: Iterable[Union[dict, ExperimentRecord]]) -> pd.DataFrame:
    """Long-format records sorted by every key column."""
    flat = []
    for row in rows:
        flat.extend(row.to_rows() if isinstance(row, ExperimentRecord) else [row])
    frame = pd.DataFrame(flat, columns=RECORD_COLUMNS)
    return frame.sort_values(RECORD_KEYS, kind="mergesort").reset_index(drop=True)


def replication_seed(base_seed: int, grid_index: int, replication: int) -> int:
    """Noise seed for one replication, independent of execution order."""
    sequence = np.random.SeedSequence([int(base_seed), int(grid_index), int(replication)])
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


# Monte Carlo

@dataclass(frozen=True)
class StudyConfig:
    system: str
    n_list: Tuple[int, ...]
    sigma_list: Tuple[float, ...]
    methods: Tuple[str, ...] = ("dsindy",)
    replications: int = 1
    base_seed: int = 0
    t_end: Optional[float] = None
    options: DsindyOptions = field(default_factory=DsindyOptions)
    known_sigma: bool = True
    horizon: Optional[bool] = None
    threads: Optional[int] = None

    def __post_init__(self):
        if self.replications < 1:
            raise InvalidDimensionError(f"replications must be >= 1, got {self.replications}")
        if not self.n_list or not self.sigma_list or not self.methods:
            raise InvalidDimensionError("study grid needs at least one N, sigma and method")

    @property
    def with_horizon(self) -> bool:
        return self.system == "lorenz96" if self.horizon is None else self.horizon

    def grid(self) -> List[Tuple[int, int, float]]:
        """(grid index, N, sigma) in N-major order."""
        points = []
        for n in self.n_list:
            for sigma in self.sigma_list:
                points.append((len(points), int(n), float(sigma)))
        return points


@dataclass(frozen=True)
class ReplicationTask:
    study: StudyConfig
    grid_index: int
    replication: int
    n: int
    sigma: float

    @property
    def seed(self) -> int:
        return replication_seed(self.study.base_seed, self.grid_index, self.replication)


def _failed_record(task: ReplicationTask, method: str, m: int, message: str) -> ExperimentRecord:
    nan = np.full(m, np.nan)
    return ExperimentRecord(system=task.study.system, method=method, n=task.n, sigma=task.sigma,
                            seed=task.seed, denoise_rel_err=nan, deriv_rel_err=nan.copy(),
                            coeff_rel_err=nan.copy(), recon_rel_err=nan.copy(), failed=True,
                            grid_index=task.grid_index, replication=task.replication,
                            error=message)


def _column_errors(estimate: Optional[np.ndarray], truth: np.ndarray) -> np.ndarray:
    if estimate is None:
        return np.full(truth.shape[1], np.nan)
    return _state_errors(np.asarray(estimate, dtype=float), truth)


def run_replication(task: ReplicationTask) -> List[ExperimentRecord]:
    """Simulate, add noise and run every method of the study for one replication."""
    study = task.study
    system = builtin_system(study.system)
    t_end = system.default_t_end if study.t_end is None else study.t_end
    try:
        truth = simulate(system, None, t_end, task.n)
        noisy = add_noise(truth, task.sigma, task.seed)
    except OdeDiscoverError as exc:
        logger.error("Replication setup failed", data={"grid": task.grid_index,
                                                       "replication": task.replication}, exc_info=True)
        return [_failed_record(task, method, system.m, str(exc)) for method in study.methods]

    rates = system(truth.values)
    records = []
    for method in study.methods:
        options = replace(study.options, sigma=task.sigma if study.known_sigma else None)
        try:
            outcome = run_method(method, noisy, system.basis, options)
            coefficients = outcome.coefficients
            recon = reconstruction_error(coefficients, system, "double_time", t_end=t_end)
            horizon = None
            if study.with_horizon:
                horizon = reconstruction_error(coefficients, system, "horizon", t_end=t_end).horizon
            records.append(ExperimentRecord(
                system=study.system, method=method, n=task.n, sigma=task.sigma, seed=task.seed,
                denoise_rel_err=_column_errors(
                    None if outcome.denoised is None else outcome.denoised.values, truth.values),
                deriv_rel_err=_column_errors(outcome.discovery.derivatives, rates),
                coeff_rel_err=_state_errors(coefficients.T, system.true_coefficients.T),
                recon_rel_err=recon.errors, failed=recon.failed, prediction_horizon=horizon,
                grid_index=task.grid_index, replication=task.replication,
                coefficients=coefficients,
            ))
        except Exception as exc:
            logger.error("Replication failed", data={"method": method, "grid": task.grid_index,
                                                     "replication": task.replication}, exc_info=True)
            records.append(_failed_record(task, method, system.m, str(exc)))
    return records


def monte_carlo(study: StudyConfig, progress: bool = False) -> List[ExperimentRecord]:
    tasks = [ReplicationTask(study=study, grid_index=g, replication=r, n=n, sigma=sigma)
             for g, n, sigma in study.grid() for r in range(study.replications)]
    logger.info("Monte Carlo study started", data={"system": study.system, "tasks": len(tasks),
                                                   "methods": list(study.methods)})
    batches = run_tasks(run_replication, tasks, threads=study.threads, desc=study.system,
                        progress=progress)
    records = [record for batch in batches for record in batch]
    records.sort(key=lambda r: (r.grid_index, r.replication, r.method))
    failures = sum(r.failed for r in records)
    logger.info("Monte Carlo study finished", data={"records": len(records), "failed": failures})
    return records


# Denoising theory study

@dataclass(frozen=True)
class TheoryTask:
    system: str
    n: int
    sigma: float
    grid_index: int
    replication: int
    base_seed: int
    alpha: float
    t_end: Optional[float] = None

    @property
    def seed(self) -> int:
        return replication_seed(self.base_seed, self.grid_index, self.replication)


def run_theory_replication(task: TheoryTask) -> List[dict]:
    """Known-Phi*, PSDN and IterPSDN errors for one noise draw."""
    system = builtin_system(task.system)
    basis = system.basis
    truth = simulate(system, None, task.t_end, task.n)
    noisy = add_noise(truth, task.sigma, task.seed)
    sigma = np.full(system.m, task.sigma)
    base = {"system": task.system, "N": task.n, "sigma": task.sigma, "seed": task.seed}

    known = known_projector(truth, basis).apply(noisy.values)
    single = psdn(noisy, basis, sigma=sigma).values
    iterated = iter_psdn(noisy, basis, DenoiseConfig(
        alpha=task.alpha, check_diverg=True, sigma_per_state=sigma)).denoised.values

    rows = []
    for k in range(system.m):
        state = {**base, "state": k + 1}
        rows.append({**state, "method": "known_phi", "metric": "sq_err",
                     "value": float(np.sum((known[:, k] - truth.values[:, k]) ** 2))})
        for method, estimate in (("known_phi", known), ("psdn", single), ("iter_psdn", iterated)):
            rows.append({**state, "method": method, "metric": "denoise_rel_err",
                         "value": relative_error(estimate[:, k], truth.values[:, k])})
        rows.append({**state, "method": "noisy", "metric": "denoise_rel_err",
                     "value": relative_error(noisy.values[:, k], truth.values[:, k])})
    return rows


def denoise_theory_study(system: str, n_list: Sequence[int], sigma: float, replications: int,
                         base_seed: int = 0, alpha: float = 0.1, t_end: Optional[float] = None,
                         threads: Optional[int] = None, progress: bool = False,
                         perturbation_draws: int = DEFAULT_PERTURBATION_DRAWS) -> pd.DataFrame:
    """Denoising errors vs N next to the theory predictions, in records format.

    Theory rows (seed UNSEEDED) per state: e_theory, e_noisy, the known-projector
    bounds, the quadrature error with its bound, and the PSDN error bound. State 0
    carries the library perturbation diagnostics.
    """
    if replications < 1:
        raise InvalidDimensionError(f"replications must be >= 1, got {replications}")
    reference = builtin_system(system)
    tasks = [TheoryTask(system=system, n=int(n), sigma=float(sigma), grid_index=g, replication=r,
                        base_seed=base_seed, alpha=alpha, t_end=t_end)
             for g, n in enumerate(n_list) for r in range(replications)]
    rows = [row for batch in run_tasks(run_theory_replication, tasks, threads=threads,
                                       desc=f"{system} theory", progress=progress)
            for row in batch]

    for n in n_list:
        n = int(n)
        estimates = theory_estimates(reference, n, sigma, t_end=t_end)
        lower, upper = known_projection_bounds(reference, n, sigma, t_end=t_end)
        expected = expected_known_projection_error(reference, n, sigma, t_end=t_end)
        quadrature = np.linalg.norm(quadrature_error(reference, n, t_end=t_end), axis=0)
        diagnostics = perturbation_diagnostics(reference, n, sigma, draws=perturbation_draws,
                                               base_seed=base_seed, t_end=t_end)
        bound = psdn_error_bound(reference, n, sigma, diagnostics=diagnostics, t_end=t_end)
        base = {"system": system, "method": "theory", "N": n, "sigma": float(sigma),
                "seed": UNSEEDED}
        for k in range(reference.m):
            for metric, values in (("e_theory", estimates.e_theory), ("e_noisy", estimates.e_noisy),
                                   ("sq_err_lower", lower), ("sq_err_upper", upper),
                                   ("sq_err_expected", expected), ("quad_err_norm", quadrature),
                                   ("quad_err_bound", estimates.c1 / (n - 1) ** 1.5),
                                   ("psdn_bound", bound)):
                rows.append({**base, "state": k + 1, "metric": metric, "value": float(values[k])})
        for metric, value in (("perturbation_assumption", diagnostics.assumption_value),
                              ("perturbation_sq_norm", diagnostics.mean_sq_norm),
                              ("perturbation_sq_bound", diagnostics.variance_bound),
                              ("psi_pinv_norm", diagnostics.psi_pinv_norm)):
            rows.append({**base, "state": 0, "metric": metric, "value": float(value)})
        if diagnostics.assumption_value >= 0.25:
            logger.warning("Library perturbation too large for the PSDN bound",
                           data={"N": n, "assumption": diagnostics.assumption_value})
    return records_frame(rows)
