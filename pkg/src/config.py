"""Run configuration for the command-line front end.

Values are merged with the precedence flags > JSON file (--config) >
OTA_INVERSE_SEED (seed only) > built-in defaults, then validated in one pass
so that every problem is reported in a single message.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Set, Tuple
import json
import logging
import os

from .concentration import DofMode
from .errors import UsageError
from .experiments import FIG1_GRID, SweepSpec
from .fl_models import FadingKind, ModelKind, SystemParams

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "OTA_INVERSE_SEED"

COMMANDS = ("estimate", "solvability", "security", "fig1", "concentration")

MODEL_NAMES = {"shared": ModelKind.SHARED_A, "per-user": ModelKind.PER_USER_B}
FADING_NAMES = {"identity": FadingKind.IDENTITY, "gaussian": FadingKind.GAUSSIAN}
DOF_NAMES = {mode.value: mode for mode in DofMode}
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
SECURITY_GRID = (2, 4, 8, 16, 32)

# Keys accepted in the JSON file; they mirror the flag names with underscores.
CONFIG_KEYS = (
    "model", "fading", "d", "s", "M", "M_grid", "alphas", "sigma_gamma", "delta",
    "epsilon", "trials", "transmissions", "seed", "out", "dof", "grads_file",
    "workers", "log_level",
)

DEFAULTS: Dict[str, Any] = {
    "model": "per-user",
    "fading": "gaussian",
    "d": 100,
    "s": 25,
    "M": None,
    "M_grid": (1, 2, 4, 8, 16, 32),
    "alphas": "1.0",
    "sigma_gamma": 0.1,
    "delta": 0.1,
    "epsilon": 2.0,
    "trials": 200,
    "transmissions": 2000,
    "seed": 0,
    "out": ".",
    "dof": "paper-d",
    "grads_file": None,
    "workers": 1,
    "log_level": "INFO",
}

COMMAND_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "fig1": {"M_grid": FIG1_GRID, "trials": 50},
    # A single square fading matrix has no finite expected condition number.
    "security": {"M_grid": SECURITY_GRID},
}

# Settings a command refuses to take from the defaults.
REQUIRED: Dict[str, Tuple[str, ...]] = {
    "estimate": ("d", "s", "M"),
}


@dataclass(frozen=True)
class RunConfig:
    """Fully validated settings of one CLI invocation."""
    command: str
    model: ModelKind
    fading: FadingKind
    d: int
    s: int
    M_grid: Tuple[int, ...]
    alphas: Tuple[float, ...]
    sigma_gamma: float
    delta: float
    epsilon: float
    trials: int
    transmissions: int
    seed: int
    out: Path
    dof: DofMode
    grads_file: Optional[Path]
    workers: int
    log_level: str

    def resolve_alphas(self, M: int) -> Tuple[float, ...]:
        if len(self.alphas) == M:
            return self.alphas
        return (self.alphas[0],) * M

    def params(self, M: int) -> SystemParams:
        return SystemParams(self.d, self.s, M, self.resolve_alphas(M),
                            self.sigma_gamma, self.delta)

    def sweep_spec(self) -> SweepSpec:
        return SweepSpec(self.d, self.s, self.M_grid, self.trials, self.seed,
                         self.model, self.fading, self.alphas[0], self.workers)


def _read_json(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise UsageError(f"config file {path} is not UTF-8 text: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must contain a JSON object")
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise UsageError(f"unknown keys in {path}: {', '.join(unknown)}")
    return data


def merge_sources(command: str, flags: Mapping[str, Any],
                  config_path: Optional[str] = None,
                  env: Optional[Mapping[str, str]] = None) -> Tuple[Dict[str, Any], Set[str]]:
    """Layer defaults, environment, JSON file and flags.

    M and M_grid are alternatives: the highest-precedence source naming
    either of them decides which one is used.

    Returns:
        The merged raw values and the set of keys supplied explicitly
        (by the JSON file or a flag)

    Raises:
        UsageError: one source sets both M and M_grid
    """
    env = os.environ if env is None else env
    raw = dict(DEFAULTS)
    raw.update(COMMAND_DEFAULTS.get(command, {}))
    if env.get(SEED_ENV_VAR):
        raw["seed"] = env[SEED_ENV_VAR]
    layers = []
    if config_path:
        layers.append((f"config file {config_path}", _read_json(config_path)))
    layers.append(("the flags",
                   {k: v for k, v in flags.items() if v is not None and k in CONFIG_KEYS}))

    provided: Set[str] = set()
    users_from = None
    for source, values in layers:
        sets_M = values.get("M") is not None
        sets_grid = values.get("M_grid") is not None
        if sets_M and sets_grid:
            raise UsageError(f"{source} sets both M and M_grid; choose one")
        if sets_M or sets_grid:
            users_from = "M" if sets_M else "M_grid"
        raw.update(values)
        provided.update(values)
    if users_from == "M":
        raw["M_grid"] = None
    elif users_from == "M_grid":
        raw["M"] = None
        provided.discard("M")
    return raw, provided


def _to_int(name: str, value: Any, errors: List[str], minimum: int = 1) -> Optional[int]:
    try:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ValueError
        result = int(value)
    except (TypeError, ValueError):
        errors.append(f"--{name.replace('_', '-')}: expected an integer, got {value!r}")
        return None
    if result < minimum:
        errors.append(f"--{name.replace('_', '-')}: must be >= {minimum}, got {result}")
        return None
    return result


def _to_float(name: str, value: Any, errors: List[str], minimum: float = 0.0,
              strict: bool = True) -> Optional[float]:
    flag = f"--{name.replace('_', '-')}"
    try:
        result = float(value)
    except (TypeError, ValueError):
        errors.append(f"{flag}: expected a number, got {value!r}")
        return None
    if result != result or result in (float("inf"), float("-inf")):
        errors.append(f"{flag}: must be finite")
        return None
    if (strict and result <= minimum) or (not strict and result < minimum):
        relation = ">" if strict else ">="
        errors.append(f"{flag}: must be {relation} {minimum}, got {result}")
        return None
    return result


def _to_list(value: Any) -> List[Any]:
    if isinstance(value, (list, tuple)):
        return list(value)
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return [value]


def _choice(name: str, value: Any, choices: Mapping[str, Any], errors: List[str]):
    if not isinstance(value, str) or value not in choices:
        errors.append(f"--{name}: expected one of {', '.join(choices)}, got {value!r}")
        return None
    return choices[value]


def validate(command: str, raw: Mapping[str, Any], provided: Set[str]) -> RunConfig:
    """Convert merged raw values into a RunConfig.

    Raises:
        UsageError: listing every invalid or missing setting
    """
    errors: List[str] = []
    if command not in COMMANDS:
        errors.append(f"unknown command {command!r}")
    missing = [key for key in REQUIRED.get(command, ())
               if key not in provided or raw.get(key) is None]
    errors.extend(f"--{key} is required for {command}" for key in missing)

    model = _choice("model", raw["model"], MODEL_NAMES, errors)
    fading = _choice("fading", raw["fading"], FADING_NAMES, errors)
    dof = _choice("dof", raw["dof"], DOF_NAMES, errors)
    d = _to_int("d", raw["d"], errors)
    s = _to_int("s", raw["s"], errors)

    if raw.get("M_grid") is None:
        grid_values = [raw.get("M")]
    else:
        grid_values = _to_list(raw["M_grid"])
    grid = [_to_int("M_grid", v, errors) for v in grid_values if v is not None]
    if not grid_values or any(v is None for v in grid_values):
        if "M" not in missing:
            errors.append("--M or --M-grid must name at least one user count")
    elif None not in grid and any(a >= b for a, b in zip(grid, grid[1:])):
        errors.append(f"--M-grid: must be strictly increasing, got {grid}")

    alphas = [_to_float("alphas", a, errors) for a in _to_list(raw["alphas"])]
    if not alphas:
        errors.append("--alphas: at least one value is required")
    elif None not in alphas and len(set(alphas)) > 1:
        if len(grid) != 1 or grid[0] != len(alphas):
            errors.append(f"--alphas: {len(alphas)} distinct values need a single "
                          f"M={len(alphas)}")

    sigma_gamma = _to_float("sigma_gamma", raw["sigma_gamma"], errors, strict=False)
    delta = _to_float("delta", raw["delta"], errors)
    epsilon = _to_float("epsilon", raw["epsilon"], errors)
    trials = _to_int("trials", raw["trials"], errors, minimum=2)
    transmissions = _to_int("transmissions", raw["transmissions"], errors)
    workers = _to_int("workers", raw["workers"], errors)
    seed = _to_int("seed", raw["seed"], errors, minimum=0)
    if seed is not None and seed >= 2 ** 64:
        errors.append(f"--seed: must fit in 64 unsigned bits, got {seed}")

    out = raw.get("out")
    if not isinstance(out, str) or not out:
        errors.append(f"--out: expected a directory path, got {out!r}")
    grads_file = raw.get("grads_file")
    if grads_file is not None and (not isinstance(grads_file, str) or not grads_file):
        errors.append(f"--grads-file: expected a file path, got {grads_file!r}")

    log_level = str(raw["log_level"]).upper()
    if log_level not in LOG_LEVELS:
        errors.append(f"--log-level: expected one of {', '.join(LOG_LEVELS)}, "
                      f"got {raw['log_level']!r}")

    if errors:
        raise UsageError("; ".join(errors))

    return RunConfig(
        command=command,
        model=model,
        fading=fading,
        d=d,
        s=s,
        M_grid=tuple(grid),
        alphas=tuple(alphas),
        sigma_gamma=sigma_gamma,
        delta=delta,
        epsilon=epsilon,
        trials=trials,
        transmissions=transmissions,
        seed=seed,
        out=Path(out),
        dof=dof,
        grads_file=Path(grads_file) if grads_file is not None else None,
        workers=workers,
        log_level=log_level,
    )


def load_config(command: str, flags: Mapping[str, Any], config_path: Optional[str] = None,
                env: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Merge every configuration source for `command` and validate the result."""
    raw, provided = merge_sources(command, flags, config_path, env)
    return validate(command, raw, provided)
