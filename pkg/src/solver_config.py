"""
Configuration loading.

Defaults live in config.json at the project root; environment variables
(optionally from a .env file) override them, and CLI flags override both.
"""
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator

from errors import InvalidArgumentError

SOLVER_NAMES = ("bruteforce", "reference", "poly", "block")
REGULARIZER_NAMES = ("linear", "quadratic", "huber")


class SolverSettings(BaseModel):
    default_solver: str = "block"
    brute_force_cap: int = Field(default=10_000_000, ge=1)
    sample_every: int = Field(default=1, ge=1)
    log_level: str = "WARNING"

    @field_validator("default_solver")
    @classmethod
    def _known_solver(cls, value: str) -> str:
        if value not in SOLVER_NAMES:
            raise ValueError(f"unknown solver {value!r}")
        return value


class GridSettings(BaseModel):
    width: int = Field(default=16, ge=1)
    height: int = Field(default=16, ge=1)
    labels: int = Field(default=8, ge=2)
    regularizer: str = "quadratic"
    weight: int = Field(default=1, ge=0)
    huber_delta: int = Field(default=2, ge=1)
    unary_max: int = Field(default=20, ge=1)
    seed: int = 0

    @field_validator("regularizer")
    @classmethod
    def _known_regularizer(cls, value: str) -> str:
        if value not in REGULARIZER_NAMES:
            raise ValueError(f"unknown regularizer {value!r}")
        return value


class MemflowConfig(BaseModel):
    solver: SolverSettings = SolverSettings()
    grid: GridSettings = GridSettings()


DEFAULT_CONFIG_PATH = Path(__file__).parent.parent / "config.json"

# env var -> (section, key, converter)
ENV_OVERRIDES = {
    "MEMFLOW_DEFAULT_SOLVER": ("solver", "default_solver", str),
    "MEMFLOW_BRUTE_FORCE_CAP": ("solver", "brute_force_cap", int),
    "MEMFLOW_SAMPLE_EVERY": ("solver", "sample_every", int),
    "MEMFLOW_LOG_LEVEL": ("solver", "log_level", str),
}


def load_config(config_path: Optional[str] = None, use_env: bool = True) -> MemflowConfig:
    """
    Load configuration from a JSON file.

    Falls back to built-in defaults when the file does not exist. Unknown
    keys are ignored so older config files keep working.

    Args:
        config_path: Path to a JSON config file, defaults to the project's config.json
        use_env: Apply MEMFLOW_* environment overrides (a .env file is read first)

    Returns:
        Validated MemflowConfig

    Raises:
        InvalidArgumentError: unreadable JSON or a value that fails validation
    """
    path = Path(config_path) if config_path else DEFAULT_CONFIG_PATH
    raw: Dict[str, Any] = {}
    if path.exists():
        with open(path, 'r') as f:
            try:
                raw = json.load(f)
            except json.JSONDecodeError as e:
                raise InvalidArgumentError(f"{path}: {e}") from None

    if use_env:
        load_dotenv()
        for var, (section, key, convert) in ENV_OVERRIDES.items():
            value = os.getenv(var)
            if value is None or value == "":
                continue
            try:
                raw.setdefault(section, {})[key] = convert(value)
            except ValueError:
                raise InvalidArgumentError(f"{var}={value!r} is not a valid {key}") from None

    try:
        return MemflowConfig.model_validate(raw)
    except (ValidationError, ValueError) as e:
        raise InvalidArgumentError(f"invalid configuration: {e}") from None
