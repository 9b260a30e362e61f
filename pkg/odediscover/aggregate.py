#!/usr/bin/env python3
"""
Aggregate long-format experiment records into per-grid-point summaries.

Usage:
    python -m odediscover.aggregate <results_dir>
    python -m odediscover.aggregate runs/duffing --format json
    python -m odediscover.aggregate runs/duffing --pattern "records*.csv" --output summary.csv

Reads every records CSV under the directory, and reports mean, std, standard
error and count for each (system, method, N, sigma, state, metric), together
with the failure rate of the grid point.
"""

import argparse
import json
import sys
from glob import glob
from pathlib import Path
from typing import List

import numpy as np
import pandas as pd

from .analysis import RECORD_COLUMNS, RECORD_KEYS
from .errors import EXIT_CONFIG, EXIT_IO, ConfigError
from .run_logger import RunLogger

logger = RunLogger("aggregate")

GROUP_KEYS = ["system", "method", "N", "sigma", "state", "metric"]
POINT_KEYS = ["system", "method", "N", "sigma"]
SUMMARY_COLUMNS = GROUP_KEYS + ["mean", "std", "sem", "count", "failure_rate"]


def read_records(results_dir: str, pattern: str = "records*.csv") -> pd.DataFrame:
    """Concatenate every matching records file, sorted by the key columns."""
    path = Path(results_dir)
    if not path.is_dir():
        raise ConfigError(f"Directory not found: {results_dir}")
    files = sorted(glob(str(path / pattern)))
    if not files:
        raise ConfigError(f"No files matching '{pattern}' found in {results_dir}")

    frames = []
    for filepath in files:
        frame = pd.read_csv(filepath, float_precision="round_trip")
        missing = [c for c in RECORD_COLUMNS if c not in frame.columns]
        if missing:
            raise ConfigError(f"{filepath}: missing columns {', '.join(missing)}")
        frames.append(frame[RECORD_COLUMNS])
    logger.info("Records read", data={"files": len(files), "dir": str(path)})
    records = pd.concat(frames, ignore_index=True)
    return records.sort_values(RECORD_KEYS, kind="mergesort").reset_index(drop=True)


def summarize_records(records: pd.DataFrame) -> pd.DataFrame:
    """Mean, std, sem and count per metric; failure rate per grid point.

    NaN values (failed replications) are excluded from the moments but still
    count towards the failure rate.
    """
    values = records[~records["metric"].isin(["failed"])]
    grouped = values.groupby(GROUP_KEYS, sort=True)["value"]
    summary = grouped.agg(mean="mean", std="std", count="count").reset_index()
    summary["std"] = summary["std"].fillna(0.0)
    summary["sem"] = summary["std"] / np.sqrt(summary["count"].clip(lower=1))

    failures = records[records["metric"] == "failed"]
    if failures.empty:
        summary["failure_rate"] = 0.0
    else:
        rate = failures.groupby(POINT_KEYS, sort=True)["value"].mean().rename("failure_rate")
        summary = summary.merge(rate.reset_index(), on=POINT_KEYS, how="left")
        summary["failure_rate"] = summary["failure_rate"].fillna(0.0)
    return summary[SUMMARY_COLUMNS].sort_values(GROUP_KEYS, kind="mergesort").reset_index(drop=True)


def save_summary(summary: pd.DataFrame, output_path: str):
    summary.to_csv(output_path, index=False, float_format="%.17g")


def format_text(summary: pd.DataFrame) -> str:
    lines: List[str] = [f"# Summary ({len(summary)} rows)", ""]
    for keys, block in summary.groupby(POINT_KEYS, sort=True):
        system, method, n, sigma = keys
        failure = block["failure_rate"].iloc[0]
        lines.append(f"## {system} / {method}  N={n}  sigma={sigma:g}  failed={failure:.0%}")
        for row in block.itertuples(index=False):
            lines.append(f"  {row.metric:<20} state {row.state}: "
                         f"{row.mean:.4g} +/- {row.sem:.2g} (n={row.count})")
        lines.append("")
    return "\n".join(lines)


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="Aggregate experiment records into summary statistics"
    )
    parser.add_argument("results_dir", help="Directory containing records CSV files")
    parser.add_argument("--pattern", "-p", default="records*.csv",
                        help="Glob pattern for records files (default: records*.csv)")
    parser.add_argument("--format", "-f", choices=["text", "json", "csv"], default="text",
                        help="Output format")
    parser.add_argument("--output", "-o", help="Output file (default: stdout)")

    args = parser.parse_args(argv)

    try:
        summary = summarize_records(read_records(args.results_dir, args.pattern))
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)

    if args.format == "json":
        output = json.dumps(summary.to_dict(orient="records"), indent=2)
    elif args.format == "csv":
        output = summary.to_csv(index=False, float_format="%.17g")
    else:
        output = format_text(summary)

    if args.output:
        try:
            with open(args.output, "w", encoding="utf-8") as f:
                f.write(output)
        except OSError as e:
            print(f"Error: {e}", file=sys.stderr)
            sys.exit(EXIT_IO)
        print(f"Output saved to: {args.output}")
    else:
        print(output)


if __name__ == "__main__":
    main()
