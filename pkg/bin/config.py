"""Configuration from conf/ringsynth.conf and the environment"""

import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from dotenv import dotenv_values

from .machine import Timing
from .synth import EXTERNAL_PREFIX, SynthOptions

CONFIG_NAME = "ringsynth.conf"
BASE_DIR_VARIABLE = "RINGSYNTH_BASE_DIR"

DEFAULTS = {
    "BOUND_MIN": "2",
    "BOUND_MAX": "6",
    "SOLVER": "builtin",
    "SOLVER_TIMEOUT": "600",
    "BUILTIN_CELL_CAP": "256",
    "BUILTIN_NODE_BUDGET": "2000000",
    "TIMING": "sync",
    "OPTIMIZATIONS": "hardcode-token,hub",
    "OUTPUT_DIR": "out",
}

OPTIMIZATIONS = ("gr1-direct", "hardcode-token", "hub")


class ConfigError(ValueError):
    pass


def find_config_file() -> Optional[str]:
    """First existing ringsynth.conf: $RINGSYNTH_BASE_DIR/conf, ./conf, then next to the package"""
    possible_config_paths = []
    base_dir = os.environ.get(BASE_DIR_VARIABLE)
    if base_dir:
        possible_config_paths.append(os.path.join(base_dir, "conf", CONFIG_NAME))
    possible_config_paths += [
        os.path.join(os.getcwd(), "conf", CONFIG_NAME),
        os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "conf", CONFIG_NAME),
    ]
    for path in possible_config_paths:
        if os.path.exists(path):
            return os.path.normpath(path)
    return None


_warned = False


def load_config_value(key: str, default: Optional[str] = None) -> Optional[str]:
    """Value of key from the environment, else from ringsynth.conf, else the built-in default"""
    global _warned
    if key in os.environ:
        return os.environ[key]
    config_path = find_config_file()
    if config_path is None:
        if not _warned:
            print(f"⚠️  Warning: Could not find {CONFIG_NAME}, using built-in defaults")
            _warned = True
    else:
        value = dotenv_values(config_path).get(key)
        if value is not None:
            return value
    return default if default is not None else DEFAULTS.get(key)


def load_config_int(key: str, default: Optional[int] = None) -> int:
    value = load_config_value(key, None if default is None else str(default))
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be an integer, got {value!r}")


def parse_bound_range(text: str) -> Tuple[int, int]:
    """'2..6' -> (2, 6); a single number is a one-element range"""
    try:
        if ".." in text:
            low, high = text.split("..", 1)
            return int(low), int(high)
        return int(text), int(text)
    except ValueError:
        raise ConfigError(f"bound range must look like A..B, got {text!r}")


def parse_optimizations(text: str) -> List[str]:
    names = [n.strip() for n in text.split(",") if n.strip() and n.strip() != "none"]
    unknown = [n for n in names if n not in OPTIMIZATIONS]
    if unknown:
        raise ConfigError(f"unknown optimization(s) {', '.join(unknown)}; "
                          f"choose from {', '.join(OPTIMIZATIONS)}")
    return names


@dataclass
class PipelineConfig:
    command: str = "synth"
    spec_paths: List[str] = field(default_factory=list)
    bound_min: int = 2
    bound_max: int = 6
    timing: Timing = Timing.SYNCHRONOUS
    optimizations: List[str] = field(default_factory=lambda: ["hardcode-token", "hub"])
    solver: str = "builtin"
    timeout: int = 600
    cell_cap: int = 256
    node_budget: int = 2_000_000
    jobs: int = 1
    stages_path: Optional[str] = None
    output_dir: str = "out"
    out_dot: Optional[str] = None
    out_json: Optional[str] = None
    emit_smt: Optional[str] = None
    verbose: bool = False

    @classmethod
    def from_config(cls) -> "PipelineConfig":
        """Defaults from ringsynth.conf (and the environment)"""
        try:
            timing = Timing(load_config_value("TIMING"))
        except ValueError:
            raise ConfigError(f"TIMING must be one of {', '.join(t.value for t in Timing)}")
        return cls(
            bound_min=load_config_int("BOUND_MIN"),
            bound_max=load_config_int("BOUND_MAX"),
            timing=timing,
            optimizations=parse_optimizations(load_config_value("OPTIMIZATIONS")),
            solver=load_config_value("SOLVER"),
            timeout=load_config_int("SOLVER_TIMEOUT"),
            cell_cap=load_config_int("BUILTIN_CELL_CAP"),
            node_budget=load_config_int("BUILTIN_NODE_BUDGET"),
            output_dir=load_config_value("OUTPUT_DIR"),
        )

    @property
    def bounds(self) -> range:
        return range(self.bound_min, self.bound_max + 1)

    def uses(self, optimization: str) -> bool:
        return optimization in self.optimizations

    def validate(self) -> "PipelineConfig":
        """
        Raises:
            ConfigError: empty or descending bound range, bad solver selection
        """
        if self.bound_min > self.bound_max:
            raise ConfigError(f"bound range {self.bound_min}..{self.bound_max} is empty")
        if self.bound_min < 2:
            raise ConfigError("bounds start at 2 (one state with and one without the token)")
        if self.solver != "builtin":
            if not self.solver.startswith(EXTERNAL_PREFIX):
                raise ConfigError(f"solver must be 'builtin' or '{EXTERNAL_PREFIX}<command>', got {self.solver!r}")
            if not self.solver[len(EXTERNAL_PREFIX):].strip():
                raise ConfigError("external solver command is empty")
        if self.timeout <= 0:
            raise ConfigError("solver timeout must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        return self

    def synth_options(self) -> SynthOptions:
        return SynthOptions(
            gr1_direct=self.uses("gr1-direct"),
            hardcode_token=self.uses("hardcode-token"),
            solver=self.solver,
            timeout=self.timeout,
            cell_cap=self.cell_cap,
            node_budget=self.node_budget,
            jobs=self.jobs,
            timing=self.timing,
            smt_dir=self.emit_smt,
            verbose=self.verbose,
        )
