#!/usr/bin/env python3
"""
odediscover command line.

Usage:
    python -m odediscover simulate --system lorenz96 --N 2000
    python -m odediscover denoise --system duffing_ps1 --sigma2 0.1 --output-dir runs/denoise
    python -m odediscover discover --system duffing_ps2 --N 1000 --sigma 0.1 --seed 7 --method dsindy --gamma-mode theory
    python -m odediscover discover --input measurements.csv --system duffing_ps2 --method l1sindy
    python -m odediscover verify-theory --system duffing_ps1 --sigma2 0.1 --replications 50
    python -m odediscover benchmark --system duffing_ps2 --n-list 250,500,1000 --sigma-list 0.01,0.1 --methods dsindy,l1sindy --replications 10
    python -m odediscover discover --config runs/discover/manifest.json

Every run writes its CSV/SVG artifacts and a manifest.json into --output-dir.
Exit codes: 0 success, 2 configuration error, 3 runtime or solver failure,
4 I/O error.
"""

import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .aggregate import save_summary, summarize_records
from .analysis import StudyConfig, denoise_theory_study, monte_carlo, records_frame, relative_error, replication_seed
from .basis import MonomialBasis, enumerate_basis
from .config import HELP, RunConfig, build_config, config_keys, load_config_file, write_manifest
from .denoise import DenoiseConfig, iter_psdn, psdn
from .errors import EXIT_OK, exit_code_for
from .pipeline import DsindyOptions, format_equations, resolve_sigma, run_method
from .plots import line_chart, save_svg, summary_series
from .run_logger import RunLogger
from .systems import OdeSystem, Trajectory, add_noise, builtin_system, simulate

logger = RunLogger("cli")

RECORDS_FILE = "records.csv"
SUMMARY_FILE = "summary.csv"
COEFFICIENTS_FILE = "coefficients.csv"
ERROR_VS_N_FILE = "error_vs_N.svg"
ERROR_VS_SIGMA_FILE = "error_vs_sigma.svg"
# printed by verify-theory, per N, method and state
THEORY_SUMMARY_METRICS = ("denoise_rel_err", "e_theory", "psdn_bound", "perturbation_assumption")

COMMAND_HELP = {
    "simulate": "simulate a builtin system and write its trajectory",
    "denoise": "denoise measurements with IterPSDN",
    "discover": "discover governing equations",
    "verify-theory": "compare denoising errors with the theoretical predictions",
    "benchmark": "Monte Carlo comparison of methods over N and sigma",
}


def _options(config: RunConfig, sigma: Optional[float] = None) -> DsindyOptions:
    return DsindyOptions(alpha=config.alpha, check_diverg=config.check_diverg,
                         gamma_mode=config.gamma_mode, irw_iters=config.irw_iters,
                         use_consistent_gram=config.use_consistent_gram, sigma=sigma)


def _write_csv(frame: pd.DataFrame, path: Path) -> str:
    frame.to_csv(path, index=False, float_format="%.17g")
    return path.name


def _write_trajectory(traj: Trajectory, output_dir: Path, label: str) -> str:
    path = output_dir / f"trajectory_{label}.csv"
    traj.to_csv(path)
    return path.name


def _write_tables(records: pd.DataFrame, output_dir: Path) -> Tuple[List[str], pd.DataFrame]:
    summary = summarize_records(records)
    _write_csv(records, output_dir / RECORDS_FILE)
    save_summary(summary, output_dir / SUMMARY_FILE)
    return [RECORDS_FILE, SUMMARY_FILE], summary


def _write_plots(summary: pd.DataFrame, metric: str, output_dir: Path,
                 extra_metric: Optional[str] = None) -> List[str]:
    written = []
    for x, name, xlabel in (("N", ERROR_VS_N_FILE, "N"), ("sigma", ERROR_VS_SIGMA_FILE, "sigma")):
        series = summary_series(summary, metric, x)
        if extra_metric:
            series.update({f"{label} ({extra_metric})": points for label, points
                           in summary_series(summary, extra_metric, x).items()})
        svg = line_chart(series, title=f"{metric} vs {xlabel}", xlabel=xlabel, ylabel=metric)
        written.append(save_svg(svg, output_dir / name).name)
    return written


def _write_coefficients(coefficients: np.ndarray, basis: MonomialBasis, output_dir: Path) -> str:
    frame = pd.DataFrame(coefficients, columns=basis.labels())
    frame.insert(0, "state", [f"u{k + 1}" for k in range(basis.m)])
    return _write_csv(frame, output_dir / COEFFICIENTS_FILE)


def _measurements(config: RunConfig) -> Tuple[OdeSystem, Optional[Trajectory], Trajectory, MonomialBasis]:
    """(system, truth or None, measurements, basis) from --input or a seeded simulation."""
    system = builtin_system(config.system)
    if config.input:
        noisy = Trajectory.from_csv(config.input)
        return system, None, noisy, enumerate_basis(noisy.m, system.default_degree)
    truth = simulate(system, None, config.t_end, config.N)
    noisy = add_noise(truth, config.noise_std, replication_seed(config.seed, 0, 0))
    return system, truth, noisy, system.basis


def run_simulate(config: RunConfig, output_dir: Path, progress: bool = False) -> List[str]:
    system = builtin_system(config.system)
    truth = simulate(system, None, config.t_end, config.N)
    artifacts = [_write_trajectory(truth, output_dir, "true")]
    if config.noise_std > 0:
        noisy = add_noise(truth, config.noise_std, replication_seed(config.seed, 0, 0))
        artifacts.append(_write_trajectory(noisy, output_dir, "noisy"))
    print(f"Simulated {system.name}: N={truth.n}, t_end={truth.t_end:g}, m={truth.m}")
    return artifacts


def run_denoise(config: RunConfig, output_dir: Path, progress: bool = False) -> List[str]:
    _, truth, noisy, basis = _measurements(config)
    known = config.known_sigma and truth is not None
    sigma = resolve_sigma(noisy, _options(config, config.noise_std if known else None))
    result = iter_psdn(noisy, basis, DenoiseConfig(alpha=config.alpha, check_diverg=config.check_diverg,
                                                   sigma_per_state=sigma))
    artifacts = [_write_trajectory(noisy, output_dir, "noisy"),
                 _write_trajectory(result.denoised, output_dir, "denoised")]
    print(f"IterPSDN: {result.iterations} iterations, converged={result.converged}, "
          f"stalled={result.stalled}")
    if truth is None:
        return artifacts

    artifacts.append(_write_trajectory(truth, output_dir, "true"))
    single = psdn(noisy, basis, sigma=sigma)
    rows = []
    base = {"system": config.system, "N": noisy.n, "sigma": config.noise_std,
            "seed": replication_seed(config.seed, 0, 0), "metric": "denoise_rel_err"}
    for method, estimate in (("psdn", single), ("iter_psdn", result.denoised), ("noisy", noisy)):
        for k in range(noisy.m):
            error = relative_error(estimate.values[:, k], truth.values[:, k])
            rows.append({**base, "method": method, "state": k + 1, "value": error})
            if method == "iter_psdn":
                print(f"  u{k + 1}: relative error {error:.4g}")
    tables, _ = _write_tables(records_frame(rows), output_dir)
    return artifacts + tables


def _study(config: RunConfig) -> StudyConfig:
    return StudyConfig(system=config.system, n_list=config.n_list, sigma_list=config.sigma_list,
                       methods=config.methods, replications=config.replications,
                       base_seed=config.seed, t_end=config.t_end, options=_options(config),
                       known_sigma=config.known_sigma, threads=config.threads)


def run_discover(config: RunConfig, output_dir: Path, progress: bool = False) -> List[str]:
    if config.input:
        _, _, noisy, basis = _measurements(config)
        result = run_method(config.method, noisy, basis, _options(config))
        artifacts = [_write_coefficients(result.coefficients, basis, output_dir)]
        if result.denoised is not None:
            artifacts.append(_write_trajectory(result.denoised, output_dir, "denoised"))
        print("\n".join(format_equations(result.coefficients, basis)))
        return artifacts

    system, truth, noisy, basis = _measurements(config)
    artifacts = [_write_trajectory(truth, output_dir, "true"), _write_trajectory(noisy, output_dir, "noisy")]
    records = monte_carlo(_study(config), progress=progress)
    tables, summary = _write_tables(records_frame(records), output_dir)
    artifacts += tables + _write_plots(summary, "coeff_rel_err", output_dir)

    first = records[0]
    if first.coefficients is not None:
        artifacts.append(_write_coefficients(first.coefficients, basis, output_dir))
        print("\n".join(format_equations(first.coefficients, basis)))
    else:
        print(f"Discovery failed: {first.error}")
    print(f"coefficient error per state: {np.array2string(first.coeff_rel_err, precision=4)}")
    return artifacts


def run_verify_theory(config: RunConfig, output_dir: Path, progress: bool = False) -> List[str]:
    frame = denoise_theory_study(config.system, config.n_list, config.noise_std, config.replications,
                                 base_seed=config.seed, alpha=config.alpha, t_end=config.t_end,
                                 threads=config.threads, progress=progress)
    artifacts, summary = _write_tables(frame, output_dir)
    artifacts += _write_plots(summary, "denoise_rel_err", output_dir, extra_metric="e_theory")

    means = summary[summary["metric"].isin(THEORY_SUMMARY_METRICS)]
    for row in means.itertuples(index=False):
        print(f"N={row.N:<6} {row.method:<10} u{row.state} {row.metric:<24} {row.mean:.4g}")
    return artifacts


def run_benchmark(config: RunConfig, output_dir: Path, progress: bool = False) -> List[str]:
    records = monte_carlo(_study(config), progress=progress)
    artifacts, summary = _write_tables(records_frame(records), output_dir)
    artifacts += _write_plots(summary, "coeff_rel_err", output_dir)
    failed = sum(record.failed for record in records)
    print(f"{len(records)} runs, {failed} failed; summary in {output_dir / SUMMARY_FILE}")
    return artifacts


COMMANDS: Dict[str, Callable[[RunConfig, Path, bool], List[str]]] = {
    "simulate": run_simulate,
    "denoise": run_denoise,
    "discover": run_discover,
    "verify-theory": run_verify_theory,
    "benchmark": run_benchmark,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odediscover",
        description="Discover sparse ODEs from noisy measurements",
        allow_abbrev=False,
    )
    parser.add_argument("--progress", action="store_true", help="Show progress bars")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command, help_text in COMMAND_HELP.items():
        sub = subparsers.add_parser(command, help=help_text, allow_abbrev=False)
        sub.add_argument("--config", help="key = value file or a previous manifest.json")
        for key in config_keys():
            sub.add_argument(f"--{key.replace('_', '-')}", dest=key, default=argparse.SUPPRESS,
                             help=HELP.get(key))
    return parser


def run(command: str, config_path: Optional[str] = None,
        flag_values: Optional[Dict[str, str]] = None, progress: bool = False) -> RunConfig:
    """Resolve the configuration, execute the command and write the manifest."""
    file_values = load_config_file(config_path) if config_path else {}
    config = build_config(command, file_values, flag_values)
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    logger.info("Run started", data={"command": command, "output_dir": str(output_dir)})
    artifacts = COMMANDS[command](config, output_dir, progress)
    write_manifest(config, output_dir, artifacts)
    logger.info("Run finished", data={"command": command, "artifacts": artifacts})
    return config


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    flags = {key: value for key, value in vars(args).items() if key in config_keys()}
    try:
        run(args.command, args.config, flags, progress=args.progress)
    except Exception as e:
        logger.error("Run failed", data={"command": args.command}, exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return exit_code_for(e)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
