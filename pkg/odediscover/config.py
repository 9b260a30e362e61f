"""
Run configuration.

A run is described by flat `key = value` pairs, read from a text file, from the
`config` object of a previous run's manifest.json, or from `--kebab-case`
command-line flags (flags win). Every key is validated before any computation.
"""

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple, Union

from . import __version__
from .errors import ConfigError
from .pipeline import GAMMA_MODES, METHOD_NAMES
from .run_logger import RunLogger
from .systems import SYSTEMS

logger = RunLogger("config")

COMMANDS = ("simulate", "denoise", "discover", "verify-theory", "benchmark")
MANIFEST_NAME = "manifest.json"

DEFAULT_OUTPUT_DIR = "odediscover-out"
# N grids used when n_list is not given
THEORY_N_LIST = (250, 1000, 4000)
BENCHMARK_N_LIST = (250, 500, 1000, 2000)


def _parse_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got '{value}'")


def _list_of(parse: Callable[[Any], Any]) -> Callable[[Any], Tuple]:
    def parse_list(value: Any) -> Tuple:
        items = value if isinstance(value, (list, tuple)) else str(value).split(",")
        parsed = tuple(parse(item.strip() if isinstance(item, str) else item) for item in items
                       if not (isinstance(item, str) and not item.strip()))
        if not parsed:
            raise ValueError("empty list")
        return parsed
    return parse_list


def _parse_int(value: Any) -> int:
    if isinstance(value, float) and not value.is_integer():
        raise ValueError(f"expected an integer, got {value}")
    return int(value)


PARSERS: Dict[str, Callable[[Any], Any]] = {
    "command": str,
    "system": str,
    "N": _parse_int,
    "n_list": _list_of(_parse_int),
    "t_end": float,
    "sigma": float,
    "sigma2": float,
    "sigma_list": _list_of(float),
    "seed": _parse_int,
    "method": str,
    "methods": _list_of(str),
    "gamma_mode": str,
    "replications": _parse_int,
    "alpha": float,
    "check_diverg": _parse_bool,
    "irw_iters": _parse_int,
    "use_consistent_gram": _parse_bool,
    "known_sigma": _parse_bool,
    "input": str,
    "output_dir": str,
    "threads": _parse_int,
}

HELP: Dict[str, str] = {
    "system": "builtin system name",
    "N": "number of samples",
    "n_list": "comma-separated sample counts for studies",
    "t_end": "time span override",
    "sigma": "noise standard deviation",
    "sigma2": "noise variance (overrides sigma)",
    "sigma_list": "comma-separated noise levels for studies",
    "seed": "base random seed",
    "method": "discovery method",
    "methods": "comma-separated discovery methods for benchmark",
    "gamma_mode": "data radius selection: theory or pareto",
    "replications": "Monte Carlo replications per grid point",
    "alpha": "IterPSDN partial-projection weight",
    "check_diverg": "revert states that drift further than sigma",
    "irw_iters": "reweighting iterations",
    "use_consistent_gram": "use the consistent Gramian estimate",
    "known_sigma": "pass the true noise level to the methods",
    "input": "measurements CSV (t,u1,...,um) instead of a simulation",
    "output_dir": "directory for CSV, SVG and manifest output",
    "threads": "worker processes (default $ODEDISCOVER_THREADS or all cores)",
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    system: str = "duffing_ps2"
    N: int = 1000
    n_list: Optional[Tuple[int, ...]] = None
    t_end: Optional[float] = None
    sigma: float = 0.1
    sigma2: Optional[float] = None
    sigma_list: Optional[Tuple[float, ...]] = None
    seed: int = 0
    method: str = "dsindy"
    methods: Optional[Tuple[str, ...]] = None
    gamma_mode: str = "theory"
    replications: int = 1
    alpha: float = 0.1
    check_diverg: bool = True
    irw_iters: int = 3
    use_consistent_gram: bool = False
    known_sigma: bool = True
    input: Optional[str] = None
    output_dir: str = DEFAULT_OUTPUT_DIR
    threads: Optional[int] = None

    def __post_init__(self):
        errors = self._problems()
        if errors:
            raise ConfigError("; ".join(errors))

    def _problems(self) -> List[str]:
        problems = []
        if self.command not in COMMANDS:
            problems.append(f"command must be one of {', '.join(COMMANDS)}, got '{self.command}'")
        if self.system not in SYSTEMS:
            problems.append(f"unknown system '{self.system}'; valid names: {', '.join(sorted(SYSTEMS))}")
        for method in (self.method,) + tuple(self.methods or ()):
            if method not in METHOD_NAMES:
                problems.append(f"unknown method '{method}'; valid methods: {', '.join(METHOD_NAMES)}")
        if self.gamma_mode not in GAMMA_MODES:
            problems.append(f"gamma_mode must be one of {', '.join(GAMMA_MODES)}")
        if self.N < 3 or any(n < 3 for n in self.n_list or ()):
            problems.append("sample counts must be >= 3")
        if self.t_end is not None and not self.t_end > 0:
            problems.append(f"t_end must be positive, got {self.t_end}")
        noise = (self.sigma,) + tuple(self.sigma_list or ())
        if self.sigma2 is not None:
            noise += (self.sigma2,)
        if any(not math.isfinite(s) or s < 0 for s in noise):
            problems.append("noise levels must be finite and nonnegative")
        if self.replications < 1:
            problems.append(f"replications must be >= 1, got {self.replications}")
        if not 0.0 <= self.alpha <= 1.0:
            problems.append(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.irw_iters < 1:
            problems.append(f"irw_iters must be >= 1, got {self.irw_iters}")
        if self.threads is not None and self.threads < 1:
            problems.append(f"threads must be >= 1, got {self.threads}")
        if self.seed < 0:
            problems.append(f"seed must be nonnegative, got {self.seed}")
        return problems

    @property
    def noise_std(self) -> float:
        return math.sqrt(self.sigma2) if self.sigma2 is not None else self.sigma

    def resolved(self) -> "RunConfig":
        """Fill the command-dependent defaults so the manifest records every value used."""
        updates: Dict[str, Any] = {}
        if self.n_list is None:
            if self.command == "verify-theory":
                updates["n_list"] = THEORY_N_LIST
            elif self.command == "benchmark":
                updates["n_list"] = BENCHMARK_N_LIST
            else:
                updates["n_list"] = (self.N,)
        if self.sigma_list is None:
            updates["sigma_list"] = (self.noise_std,)
        if self.methods is None:
            updates["methods"] = (self.method,)
        return replace(self, **updates) if updates else self

    def to_dict(self) -> Dict[str, Any]:
        return {key: list(value) if isinstance(value, tuple) else value
                for key, value in asdict(self).items()}


def coerce(raw: Mapping[str, Any]) -> Dict[str, Any]:
    """Parse raw values by key; unknown keys and bad values raise ConfigError."""
    unknown = sorted(set(raw) - set(PARSERS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values = {}
    for key, value in raw.items():
        if value is None:
            continue
        try:
            values[key] = PARSERS[key](value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid value for '{key}': {e}") from None
    return values


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """`key = value` lines; `#` starts a comment."""
    raw: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{number}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{number}: missing key")
        raw[key] = value
    return raw


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Raw values from a key = value file or a manifest.json."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    if path.suffix == ".json":
        try:
            manifest = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        if not isinstance(manifest, dict) or not isinstance(manifest.get("config"), dict):
            raise ConfigError(f"{path}: manifest has no 'config' object")
        return dict(manifest["config"])
    return parse_config_text(text, str(path))


def build_config(command: str, file_values: Optional[Mapping[str, Any]] = None,
                 flag_values: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Merge file values and flag values (flags win) into a resolved RunConfig."""
    merged: Dict[str, Any] = dict(file_values or {})
    merged.update(flag_values or {})
    file_command = merged.pop("command", command)
    if file_command != command:
        logger.warning("Config command overridden by subcommand",
                       data={"file": file_command, "cli": command})
    config = RunConfig(command=command, **coerce(merged)).resolved()
    logger.log_config(config.to_dict())
    return config


def write_manifest(config: RunConfig, output_dir: Union[str, Path], artifacts: List[str]) -> Path:
    """manifest.json with the resolved config, package version and written artifacts."""
    path = Path(output_dir) / MANIFEST_NAME
    manifest = {
        "version": __version__,
        "config": config.to_dict(),
        "artifacts": sorted(artifacts + [MANIFEST_NAME]),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def config_keys() -> List[str]:
    return [f.name for f in fields(RunConfig) if f.name != "command"]
