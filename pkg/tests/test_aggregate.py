import json

import numpy as np
import pandas as pd
import pytest

from odediscover.aggregate import (
    SUMMARY_COLUMNS,
    format_text,
    main,
    read_records,
    summarize_records,
)
from odediscover.analysis import RECORD_COLUMNS
from odediscover.errors import EXIT_CONFIG, ConfigError


def _rows(method, values, failed):
    rows = []
    for seed, (value, fail) in enumerate(zip(values, failed)):
        base = {"system": "duffing_ps2", "method": method, "N": 500, "sigma": 0.1, "seed": seed}
        rows.append({**base, "state": 1, "metric": "coeff_rel_err", "value": value})
        rows.append({**base, "state": 0, "metric": "failed", "value": float(fail)})
    return rows


@pytest.fixture()
def records():
    rows = _rows("dsindy", [0.1, 0.3, np.nan], [False, False, True])
    rows += _rows("l1sindy", [0.2, 0.2], [False, False])
    return pd.DataFrame(rows, columns=RECORD_COLUMNS)


def test_summary_statistics(records):
    summary = summarize_records(records)
    assert list(summary.columns) == SUMMARY_COLUMNS
    assert set(summary["metric"]) == {"coeff_rel_err"}

    dsindy = summary[summary["method"] == "dsindy"].iloc[0]
    assert dsindy["mean"] == pytest.approx(0.2)
    assert dsindy["count"] == 2
    assert dsindy["std"] == pytest.approx(np.std([0.1, 0.3], ddof=1))
    assert dsindy["sem"] == pytest.approx(dsindy["std"] / np.sqrt(2))
    assert dsindy["failure_rate"] == pytest.approx(1 / 3)

    l1sindy = summary[summary["method"] == "l1sindy"].iloc[0]
    assert l1sindy["std"] == 0.0 and l1sindy["failure_rate"] == 0.0


def test_summary_without_failure_rows():
    frame = pd.DataFrame([{"system": "s", "method": "theory", "N": 10, "sigma": 0.1, "seed": -1,
                           "state": 1, "metric": "e_theory", "value": 0.5}])
    summary = summarize_records(frame)
    assert summary["failure_rate"].tolist() == [0.0]
    assert summary["count"].tolist() == [1]


def test_read_records(tmp_path, records):
    records.iloc[:4].to_csv(tmp_path / "records_a.csv", index=False)
    records.iloc[4:].to_csv(tmp_path / "records_b.csv", index=False)
    (tmp_path / "notes.csv").write_text("x\n1\n")
    loaded = read_records(str(tmp_path))
    assert len(loaded) == len(records)
    assert list(loaded.columns) == RECORD_COLUMNS

    with pytest.raises(ConfigError, match="not found"):
        read_records(str(tmp_path / "missing"))
    with pytest.raises(ConfigError, match="No files"):
        read_records(str(tmp_path), pattern="*.parquet")
    with pytest.raises(ConfigError, match="missing columns"):
        read_records(str(tmp_path), pattern="notes.csv")


def test_format_text(records):
    text = format_text(summarize_records(records))
    assert "## duffing_ps2 / dsindy  N=500  sigma=0.1  failed=33%" in text
    assert "coeff_rel_err" in text


def test_main_writes_json(tmp_path, records, capsys):
    records.to_csv(tmp_path / "records.csv", index=False)
    output = tmp_path / "summary.json"
    main([str(tmp_path), "--format", "json", "--output", str(output)])
    assert "Output saved to" in capsys.readouterr().out
    rows = json.loads(output.read_text())
    assert {row["method"] for row in rows} == {"dsindy", "l1sindy"}


def test_main_reports_config_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main([str(tmp_path)])
    assert info.value.code == EXIT_CONFIG
    assert capsys.readouterr().err.startswith("Error:")
