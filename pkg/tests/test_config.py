import json

import pytest

from odediscover import __version__
from odediscover.config import (
    BENCHMARK_N_LIST,
    THEORY_N_LIST,
    RunConfig,
    build_config,
    coerce,
    config_keys,
    load_config_file,
    parse_config_text,
    write_manifest,
)
from odediscover.errors import ConfigError


def test_parse_config_text():
    raw = parse_config_text("""
        # duffing run
        system = duffing_ps1
        sigma2 = 0.1   # variance
        n_list = 250, 1000
    """)
    assert raw == {"system": "duffing_ps1", "sigma2": "0.1", "n_list": "250, 1000"}
    with pytest.raises(ConfigError, match=":2:"):
        parse_config_text("system = rossler\nsigma 0.1")


def test_coerce_parses_by_key():
    values = coerce({"N": "500", "n_list": "250,500,", "check_diverg": "no",
                     "methods": ["dsindy", "l1sindy"], "output_dir": None})
    assert values == {"N": 500, "n_list": (250, 500), "check_diverg": False,
                      "methods": ("dsindy", "l1sindy")}
    with pytest.raises(ConfigError, match="unknown config keys: lambda"):
        coerce({"lambda": "1"})
    with pytest.raises(ConfigError, match="'N'"):
        coerce({"N": "many"})
    with pytest.raises(ConfigError):
        coerce({"N": 2.5})


def test_run_config_collects_every_problem():
    with pytest.raises(ConfigError) as info:
        RunConfig(command="discover", system="lorenz63", alpha=2.0, sigma=-1.0)
    message = str(info.value)
    assert "lorenz63" in message and "alpha" in message and "noise" in message


def test_noise_variance_overrides_sigma():
    config = RunConfig(command="denoise", sigma=0.5, sigma2=0.1)
    assert config.noise_std == pytest.approx(0.1 ** 0.5)
    assert config.resolved().sigma_list == (config.noise_std,)


def test_resolved_defaults_depend_on_command():
    assert RunConfig(command="verify-theory").resolved().n_list == THEORY_N_LIST
    assert RunConfig(command="benchmark").resolved().n_list == BENCHMARK_N_LIST
    discover = RunConfig(command="discover", N=300, method="l1sindy").resolved()
    assert discover.n_list == (300,)
    assert discover.methods == ("l1sindy",)


def test_flags_override_file_values():
    config = build_config("discover", {"system": "rossler", "N": "400", "seed": "3"},
                          {"N": "800"})
    assert (config.system, config.N, config.seed) == ("rossler", 800, 3)
    assert config.command == "discover"


def test_load_config_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config_file(tmp_path / "missing.cfg")
    broken = tmp_path / "manifest.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config_file(broken)
    broken.write_text(json.dumps({"version": "0"}))
    with pytest.raises(ConfigError, match="config"):
        load_config_file(broken)


def test_manifest_reproduces_the_config(tmp_path):
    config = build_config("benchmark", {}, {"system": "van_der_pol", "sigma_list": "0.01,0.1",
                                            "replications": "4", "threads": "2"})
    path = write_manifest(config, tmp_path, ["summary.csv", "records.csv"])
    manifest = json.loads(path.read_text())
    assert manifest["version"] == __version__
    assert manifest["artifacts"] == ["manifest.json", "records.csv", "summary.csv"]
    assert build_config("benchmark", load_config_file(path)) == config
    # byte-stable output
    text = path.read_text()
    write_manifest(config, tmp_path, ["records.csv", "summary.csv"])
    assert path.read_text() == text


def test_config_keys_cover_every_field_but_command():
    keys = config_keys()
    assert "command" not in keys
    assert {"N", "sigma2", "gamma_mode", "output_dir"} <= set(keys)
