import json
import logging

import numpy as np

from odediscover.errors import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_RUNTIME,
    ConfigError,
    DivergenceError,
    SolverFailure,
    UnknownSystemError,
    exit_code_for,
)
from odediscover.run_logger import LOG_DIR_ENV, JsonLineFormatter, RunLogger, log_dir


def _record(**extra):
    record = logging.LogRecord("odediscover.denoise", logging.INFO, __file__, 1,
                               "IterPSDN converged", None, None)
    for key, value in extra.items():
        setattr(record, key, value)
    return record


def test_json_line_format():
    line = JsonLineFormatter().format(_record(data={"iterations": np.int64(12),
                                                    "change": np.array([1e-9, 2e-9])}))
    entry = json.loads(line)
    assert entry["component"] == "denoise"
    assert entry["level"] == "INFO"
    assert entry["message"] == "IterPSDN converged"
    assert entry["data"] == {"iterations": 12, "change": [1e-9, 2e-9]}
    assert "traceback" not in entry


def test_logger_writes_to_the_configured_directory(tmp_path, monkeypatch):
    monkeypatch.setenv(LOG_DIR_ENV, str(tmp_path))
    assert log_dir() == tmp_path
    logger = RunLogger("logger_check")
    try:
        raise SolverFailure("infeasible")
    except SolverFailure:
        logger.error("Solve failed", data={"state": 1}, exc_info=True)
    for handler in logging.getLogger("odediscover.logger_check").handlers:
        handler.flush()
    entry = json.loads((tmp_path / "logger_check.log").read_text().splitlines()[-1])
    assert entry["data"] == {"state": 1}
    assert "infeasible" in entry["traceback"]


def test_exit_codes():
    assert exit_code_for(ConfigError("bad key")) == EXIT_CONFIG
    assert exit_code_for(DivergenceError(1.5)) == EXIT_RUNTIME
    assert exit_code_for(UnknownSystemError("x", ["a"])) == EXIT_RUNTIME
    assert exit_code_for(FileNotFoundError("missing.csv")) == EXIT_IO
    assert exit_code_for(RuntimeError("bug")) == EXIT_RUNTIME


def test_error_messages():
    assert str(UnknownSystemError("x", ["b", "a"])) == "unknown system 'x'; valid names: a, b"
    assert "1.5" in str(DivergenceError(1.5))
    assert SolverFailure("infeasible").status == "infeasible"
