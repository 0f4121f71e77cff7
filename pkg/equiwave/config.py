"""Run configuration: flat `key = value` files validated before any compute.

Config lookup order:
1) explicit `--config` path
2) $EQUIWAVE_CONFIG
3) ./equiwave.conf (current working directory)

Lines starting with `#` and blank lines are ignored; lists are comma separated.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Optional
import math
import os

from platformdirs import user_data_dir

from .analytics import DEFAULT_GRAM_CAP
from .ensemble import MAX_MASTER_SEED
from .errors import ConfigError
from .experiments import MIN_TAIL_SAMPLES, WindowRule
from .manifold import (
    MIN_QUADRATURE_ORDER,
    ManifoldKind,
    manifold_from_name,
)

APP_NAME = "equiwave"
APP_AUTHOR = "equiwave"

CONFIG_ENV = "EQUIWAVE_CONFIG"
CONFIG_FILENAME = "equiwave.conf"

EXPERIMENTS = (
    "weyl",
    "expectation",
    "variance",
    "tail",
    "uniform",
    "sweep",
    "kernel-profile",
    "sogge",
    "amplitude",
)

MIN_FREQUENCY = 1.0
MAX_SAMPLES = 10_000_000
MIN_THREADS = 1
MAX_THREADS = 64
MIN_PROFILE_SAMPLES = 2
MAX_PROFILE_SAMPLES = 100_000
DEFAULT_PROFILE_SAMPLES = 512
DEFAULT_DIRECTION = 0.3


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    manifold: str
    frequency: Optional[float] = None
    frequencies: tuple[float, ...] = ()
    degrees: tuple[int, ...] = ()
    width: Optional[float] = None
    window: WindowRule = WindowRule.CONSTANT
    beta: float = 0.5
    radius: Optional[float] = None
    r_scale: float = 1.0
    r_alpha: Optional[float] = None
    radii: tuple[float, ...] = ()
    center: tuple[float, float] = (0.0, 0.0)
    direction: float = DEFAULT_DIRECTION
    delta: float = 0.0
    samples: int = 0
    seed: int = 0
    t_grid: tuple[float, ...] = ()
    max_separation: Optional[float] = None
    profile_samples: int = DEFAULT_PROFILE_SAMPLES
    order: Optional[int] = None
    gram_cap: int = DEFAULT_GRAM_CAP
    out_dir: Optional[str] = None
    plot: bool = False
    threads: int = 1

    def resolved_frequency(self) -> float:
        """lambda, or sqrt(l(l+1)) for a single sphere degree."""
        if self.frequency is not None:
            return self.frequency
        return math.sqrt(self.degrees[0] * (self.degrees[0] + 1))

    def resolved_frequencies(self) -> tuple[float, ...]:
        if self.degrees and not self.frequencies:
            return tuple(math.sqrt(ell * (ell + 1)) for ell in self.degrees)
        return self.frequencies

    def radius_at(self, frequency: float) -> float:
        if self.radius is not None:
            return self.radius
        return self.r_scale * frequency ** (-self.r_alpha)

    def echo(self) -> dict:
        """Config as key -> value using the file's key names; unset keys omitted."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None or value == ():
                continue
            if isinstance(value, WindowRule):
                value = value.value
            elif isinstance(value, tuple):
                value = list(value)
            out[FIELD_KEYS.get(f.name, f.name)] = value
        return out


# --- Value parsers --------------------------------------------------------------


def _number(key: str, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {raw!r}") from None
    if not math.isfinite(value):
        raise ConfigError(key, f"expected a finite number, got {raw!r}")
    return value


def _integer(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {raw!r}") from None


def _items(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def _numbers(key: str, raw: str) -> tuple[float, ...]:
    values = tuple(_number(key, item) for item in _items(raw))
    if not values:
        raise ConfigError(key, "expected a comma-separated list of numbers")
    return values


def _integers(key: str, raw: str) -> tuple[int, ...]:
    values = tuple(_integer(key, item) for item in _items(raw))
    if not values:
        raise ConfigError(key, "expected a comma-separated list of integers")
    return values


def _boolean(key: str, raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected true or false, got {raw!r}")


def _experiment(key: str, raw: str) -> str:
    if raw not in EXPERIMENTS:
        raise ConfigError(key, f"must be one of {', '.join(EXPERIMENTS)}")
    return raw


def _manifold(key: str, raw: str) -> str:
    choices = [k.value for k in ManifoldKind]
    if raw not in choices:
        raise ConfigError(key, f"must be one of {', '.join(choices)}, got {raw!r}")
    return raw


def _window(key: str, raw: str) -> WindowRule:
    try:
        return WindowRule(raw)
    except ValueError:
        choices = ", ".join(w.value for w in WindowRule)
        raise ConfigError(key, f"must be one of {choices}, got {raw!r}") from None


def _center(key: str, raw: str) -> tuple[float, float]:
    values = _numbers(key, raw)
    if len(values) != 2:
        raise ConfigError(key, "expected two chart coordinates")
    return values[0], values[1]


def _text(key: str, raw: str) -> str:
    return raw


# key in the file -> (RunConfig field, parser)
KEYS: dict[str, tuple[str, Callable[[str, str], object]]] = {
    "experiment": ("experiment", _experiment),
    "manifold": ("manifold", _manifold),
    "lambda": ("frequency", _number),
    "lambdas": ("frequencies", _numbers),
    "degrees": ("degrees", _integers),
    "W": ("width", _number),
    "window": ("window", _window),
    "beta": ("beta", _number),
    "r": ("radius", _number),
    "r_scale": ("r_scale", _number),
    "r_alpha": ("r_alpha", _number),
    "radii": ("radii", _numbers),
    "center": ("center", _center),
    "direction": ("direction", _number),
    "delta": ("delta", _number),
    "samples": ("samples", _integer),
    "seed": ("seed", _integer),
    "t_grid": ("t_grid", _numbers),
    "max_separation": ("max_separation", _number),
    "profile_samples": ("profile_samples", _integer),
    "order": ("order", _integer),
    "gram_cap": ("gram_cap", _integer),
    "out_dir": ("out_dir", _text),
    "plot": ("plot", _boolean),
    "threads": ("threads", _integer),
}
FIELD_KEYS = {field_name: key for key, (field_name, _) in KEYS.items()}

# Keys each experiment needs; a tuple means any one of them.
REQUIRED: dict[str, list] = {
    "weyl": [("lambdas", "degrees")],
    "expectation": [("lambda", "degrees"), "W", ("r", "r_alpha")],
    "variance": [("lambda", "degrees"), "W", ("r", "r_alpha")],
    "tail": [("lambda", "degrees"), "W", ("r", "r_alpha"), "samples", "t_grid"],
    "uniform": [("lambda", "degrees"), "W", ("r", "r_alpha"), "delta", "samples"],
    "sweep": [("lambdas", "degrees"), "r_alpha"],
    "kernel-profile": [("lambda", "degrees"), "W", "max_separation"],
    "sogge": [("lambda", "degrees"), "W", "radii"],
    "amplitude": [("lambda", "degrees"), "W", "samples"],
}


def _split_lines(text: str) -> dict[str, str]:
    raw: dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {number}", "expected `key = value`")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in KEYS:
            raise ConfigError(key, "unknown key")
        if key in raw:
            raise ConfigError(key, "duplicate key")
        raw[key] = value
    return raw


def _missing(experiment: str, present: set[str]) -> list[str]:
    missing = []
    for need in ["manifold"] + REQUIRED[experiment]:
        options = need if isinstance(need, tuple) else (need,)
        if not any(option in present for option in options):
            missing.append(" or ".join(options))
    return missing


def parse_config(text: str, experiment: Optional[str] = None) -> RunConfig:
    """Parse and validate a config; `experiment` overrides the file's key."""
    raw = _split_lines(text)
    values: dict[str, object] = {}
    for key, value in raw.items():
        field_name, parser = KEYS[key]
        values[field_name] = parser(key, value)

    if experiment is not None:
        _experiment("experiment", experiment)
        if "experiment" in values and values["experiment"] != experiment:
            raise ConfigError(
                "experiment",
                f"file says {values['experiment']!r} but {experiment!r} was requested",
            )
        values["experiment"] = experiment
    if "experiment" not in values:
        raise ConfigError("experiment", "missing required keys: experiment, manifold")

    config = None
    if "manifold" in values:
        config = RunConfig(**values)
        validate_config(config)
    missing = _missing(values["experiment"], set(raw))
    if missing:
        raise ConfigError(missing[0], "missing required keys: " + ", ".join(missing))
    return config


def validate_config(config: RunConfig) -> None:
    """Check every numeric field against the preconditions of the operation it feeds."""
    m = manifold_from_name(config.manifold)
    cap = m.frequency_cap
    inj = m.injectivity_radius

    if config.degrees:
        if not m.is_sphere:
            raise ConfigError("degrees", "degrees apply only to manifold = sphere2")
        for ell in config.degrees:
            if not (1 <= ell and ell * (ell + 1) <= cap * cap * (1 + 1e-12)):
                raise ConfigError("degrees", f"each degree must be between 1 and the cap, got {ell}")
        if config.experiment in ("weyl", "sweep"):
            if config.frequencies:
                raise ConfigError("degrees", "give either lambdas or degrees, not both")
        elif config.frequency is not None:
            raise ConfigError("degrees", "give either lambda or degrees, not both")
        elif len(config.degrees) != 1:
            raise ConfigError("degrees", "single-window experiments take exactly one degree")

    if config.frequency is not None and not (MIN_FREQUENCY <= config.frequency <= cap):
        raise ConfigError("lambda", f"must satisfy 1 <= lambda <= {cap:.6g}")
    for lam in config.frequencies:
        low = 0.0 if config.experiment == "weyl" else MIN_FREQUENCY
        if not (low <= lam <= cap):
            raise ConfigError("lambdas", f"each lambda must satisfy {low:g} <= lambda <= {cap:.6g}")

    single = config.experiment not in ("weyl", "sweep")
    has_frequency = config.frequency is not None or bool(config.degrees)
    has_radius = config.radius is not None or config.r_alpha is not None
    if single and config.width is not None and has_frequency:
        lam = config.resolved_frequency()
        if not (1.0 <= config.width <= lam):
            raise ConfigError("W", f"must satisfy 1 <= W <= lambda (W={config.width:g}, lambda={lam:g})")
        if has_radius:
            r = config.radius_at(lam)
            if not (0.0 < r <= inj):
                raise ConfigError("r", f"must satisfy 0 < r <= {inj:.6g}, got {r:.6g}")

    if config.experiment == "sweep":
        for lam in config.resolved_frequencies():
            w = _sweep_width(config, lam)
            if not (1.0 <= w <= lam):
                raise ConfigError("W", f"W({lam:g}) = {w:g} violates 1 <= W <= lambda")
            r = config.radius_at(lam) if has_radius else inj
            if not (0.0 < r <= inj):
                raise ConfigError("r_alpha", f"r({lam:g}) = {r:.6g} violates 0 < r <= {inj:.6g}")

    for r in config.radii:
        if not (0.0 < r <= inj):
            raise ConfigError("radii", f"each radius must satisfy 0 < r <= {inj:.6g}")
    if config.max_separation is not None and not (0.0 < config.max_separation <= inj):
        raise ConfigError("max_separation", f"must satisfy 0 < d <= {inj:.6g}")
    if config.delta < 0.0:
        raise ConfigError("delta", "must be nonnegative")
    if not (0 <= config.samples <= MAX_SAMPLES):
        raise ConfigError("samples", f"must be between 0 and {MAX_SAMPLES}")
    if config.experiment == "tail" and config.samples < MIN_TAIL_SAMPLES:
        raise ConfigError("samples", f"tail experiment needs at least {MIN_TAIL_SAMPLES}")
    if config.experiment in ("uniform", "amplitude") and config.samples < 1:
        raise ConfigError("samples", "must be at least 1")
    if not (0 <= config.seed <= MAX_MASTER_SEED):
        raise ConfigError("seed", f"must be between 0 and {MAX_MASTER_SEED}")
    if config.t_grid and (
        any(t < 0.0 for t in config.t_grid)
        or any(b < a for a, b in zip(config.t_grid, config.t_grid[1:]))
    ):
        raise ConfigError("t_grid", "must be ascending and nonnegative")
    if not (MIN_PROFILE_SAMPLES <= config.profile_samples <= MAX_PROFILE_SAMPLES):
        raise ConfigError(
            "profile_samples",
            f"must be between {MIN_PROFILE_SAMPLES} and {MAX_PROFILE_SAMPLES}",
        )
    if config.order is not None and config.order < MIN_QUADRATURE_ORDER:
        raise ConfigError("order", f"must be at least {MIN_QUADRATURE_ORDER}")
    if config.gram_cap < 1:
        raise ConfigError("gram_cap", "must be at least 1")
    if not (MIN_THREADS <= config.threads <= MAX_THREADS):
        raise ConfigError("threads", f"must be between {MIN_THREADS} and {MAX_THREADS}")
    if len(config.center) != 2:
        raise ConfigError("center", "expected two chart coordinates")


def _sweep_width(config: RunConfig, frequency: float) -> float:
    if config.window is WindowRule.FULL:
        return frequency
    if config.window is WindowRule.POWER:
        return frequency**config.beta
    return config.width if config.width is not None else 1.0


def resolve_config_path(path: Optional[Path] = None) -> Path:
    if path is None:
        env_path = os.environ.get(CONFIG_ENV)
        if env_path:
            path = Path(env_path).expanduser()
        else:
            path = Path.cwd() / CONFIG_FILENAME
    if not path.exists():
        raise ConfigError("config", f"no configuration file at {path}")
    return path


def load_config(path: Optional[Path] = None, experiment: Optional[str] = None) -> RunConfig:
    resolved = resolve_config_path(path)
    return parse_config(resolved.read_text(encoding="utf-8"), experiment)


def resolve_out_dir(cli_value: Optional[Path], config: RunConfig) -> Path:
    """--out-dir, then the `out_dir` key, then the user data directory."""
    if cli_value is not None:
        return cli_value
    if config.out_dir:
        return Path(config.out_dir).expanduser()
    return Path(user_data_dir(APP_NAME, APP_AUTHOR)) / "runs"
