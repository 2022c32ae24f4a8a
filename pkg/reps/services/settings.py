"""
Configuration layer.
Defaults are resolved from environment variables first, then a JSON config
file, then built-in values. CLI flags override the result for one run.
"""
import os
import json
import logging
from typing import Any, Dict, Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from reps.services.errors import InvalidConfig

logger = logging.getLogger(__name__)

load_dotenv()

SOLVERS = ("projected_gradient", "cutting_plane")

# Built-in defaults
DEFAULT_SETTINGS: Dict[str, Any] = {
    "beta": 2.0,
    "C": 0.001,
    "epsilon": 1e-4,
    "solver": "projected_gradient",
    "weight_floor": 1e-12,
    "window": 5,
    "folds": 5,
    "seed": 0,
}

# Iteration caps when the config leaves max_iterations unset
DEFAULT_MAX_ITERATIONS = {
    "projected_gradient": 10000,
    "cutting_plane": 1000,
}

# env var -> (settings key, parser)
_ENV_KEYS = {
    "REPS_BETA": ("beta", float),
    "REPS_C": ("C", float),
    "REPS_EPSILON": ("epsilon", float),
    "REPS_SOLVER": ("solver", str),
    "REPS_WINDOW": ("window", int),
    "REPS_FOLDS": ("folds", int),
    "REPS_SEED": ("seed", int),
}

# camelCase keys accepted in the JSON config file
_CAMEL_KEYS = {
    "weightFloor": "weight_floor",
    "maxIterations": "max_iterations",
    "keepHighest": "keep_highest",
    "invertAlpha": "invert_alpha",
    "perClass": "per_class",
}


class RepsConfig(BaseModel):
    """Parameters of one prototype selection run."""
    model_config = ConfigDict(frozen=True)

    beta: float = Field(2.0, gt=1.0)
    C: float = Field(0.001, ge=0.0)
    epsilon: float = Field(1e-4, gt=0.0)
    solver: Literal["projected_gradient", "cutting_plane"] = "projected_gradient"
    max_iterations: Optional[int] = Field(None, ge=1)
    weight_floor: float = Field(1e-12, gt=0.0)
    keep_highest: bool = True
    # read w as beta^-alpha when scoring, so heavy prototypes rank first
    invert_alpha: bool = True
    # split k over the classes in proportion to their sizes
    per_class: bool = True

    @property
    def iteration_cap(self) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        return DEFAULT_MAX_ITERATIONS[self.solver]


def _config_file_path() -> str:
    return os.getenv("REPS_CONFIG") or os.path.join(os.getcwd(), "reps_config.json")


def _read_config_file() -> Dict[str, Any]:
    path = _config_file_path()
    if not os.path.exists(path):
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
        if not isinstance(raw, dict):
            raise ValueError("top level must be an object")
        return {_CAMEL_KEYS.get(k, k): v for k, v in raw.items()}
    except Exception as e:
        logger.error(f"Error reading config file {path}: {e}")
        return {}


def load_settings() -> Dict[str, Any]:
    """Resolve defaults: environment > config file > built-in."""
    settings = dict(DEFAULT_SETTINGS)
    settings.update(_read_config_file())

    for env_name, (key, parse) in _ENV_KEYS.items():
        value = os.getenv(env_name)
        if value is None or value == "":
            continue
        try:
            settings[key] = parse(value)
        except ValueError:
            logger.warning(f"Ignoring {env_name}={value!r}: not a valid {parse.__name__}")
    return settings


def make_config(**overrides: Any) -> RepsConfig:
    """Build a RepsConfig from the resolved settings plus explicit overrides (None = not given)."""
    settings = load_settings()
    fields = {k: settings[k] for k in RepsConfig.model_fields if k in settings}
    fields.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RepsConfig(**fields)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ()))
        raise InvalidConfig(f"{where}: {first.get('msg')}") from None


def get_thread_count() -> int:
    """Worker threads for parallel stages (REPS_THREADS, default cpu count)."""
    value = os.getenv("REPS_THREADS")
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            logger.warning(f"Ignoring REPS_THREADS={value!r}")
    return max(1, os.cpu_count() or 1)


def get_log_level() -> int:
    name = os.getenv("REPS_LOG_LEVEL", "INFO").upper()
    return getattr(logging, name, logging.INFO)


def get_cache_size() -> int:
    try:
        return max(1, int(os.getenv("REPS_CACHE_SIZE", "16")))
    except ValueError:
        return 16
