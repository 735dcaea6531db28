"""Experimental inputs: visibility profiles, product settings and config files."""

from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .errors import ConfigError, UsageError
from .market import Condition, ProductCatalog, VisibilityProfile
from .policies import PolicyKind, PolicySchedule
from .simulator import MAX_SEED, SimulationConfig, TraceGranularity

EPSILON = 0.01
GAUSSIAN_MEAN = 0.5
GAUSSIAN_SD = 0.2


class SettingKind(enum.Enum):
    GAUSSIAN_INDEPENDENT = "gaussian_independent"
    GAUSSIAN_ANTICORRELATED = "gaussian_anticorrelated"
    UNIFORM_INDEPENDENT = "uniform_independent"
    UNIFORM_ANTICORRELATED = "uniform_anticorrelated"

    @classmethod
    def parse(cls, text) -> "SettingKind":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower()
        numbered = {"1": 0, "2": 1, "3": 2, "4": 3}
        if key in numbered:
            return list(cls)[numbered[key]]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown setting {text!r}") from None

    @property
    def anticorrelated(self) -> bool:
        return self in (SettingKind.GAUSSIAN_ANTICORRELATED, SettingKind.UNIFORM_ANTICORRELATED)


@dataclass(frozen=True)
class VisibilitySpec:
    """Shape of a list whose visibility decays with position and ticks up at the bottom.

    ``decay`` is the e-folding length in positions (``n / 5`` when None).
    """

    n: int = 50
    v_max: float = 0.8
    v_min: float = 0.2
    decay: Optional[float] = None
    uptick_count: int = 3
    uptick_gain: float = 0.05

    def __post_init__(self) -> None:
        if self.n < 2:
            raise UsageError("a visibility profile needs n >= 2")
        if not (self.v_max >= self.v_min > 0):
            raise UsageError(f"need v_max >= v_min > 0, got {self.v_max}, {self.v_min}")
        if self.decay is not None and not self.decay > 0:
            raise UsageError("decay must be positive")
        if self.uptick_count < 0 or self.uptick_gain < 0:
            raise UsageError("uptick_count and uptick_gain must be non-negative")
        if self.uptick_count > 0 and self.uptick_gain > self.v_max - self.v_min:
            raise UsageError("uptick_gain cannot exceed v_max - v_min")


def musiclab_visibility(spec: VisibilitySpec = VisibilitySpec()) -> VisibilityProfile:
    """Exponentially decaying visibility from ``v_max`` to ``v_min``, then a small linear uptick.

    The top position gets exactly ``v_max`` and the last decaying position
    exactly ``v_min``, so max / min equals ``v_max / v_min``.
    """
    n = spec.n
    upticks = min(spec.uptick_count, n - 2) if spec.v_max > spec.v_min else 0
    m = n - upticks
    tau = spec.decay if spec.decay is not None else n / 5.0
    decay = np.exp(-np.arange(m) / tau)
    scaled = (decay - decay[-1]) / (1.0 - decay[-1])
    v = np.empty(n)
    v[:m] = spec.v_min + (spec.v_max - spec.v_min) * scaled
    v[0] = spec.v_max
    v[m - 1] = spec.v_min
    if upticks:
        v[m:] = spec.v_min + spec.uptick_gain * np.arange(1, upticks + 1) / upticks
    return VisibilityProfile(v)


def _minmax(x: np.ndarray, eps: float) -> np.ndarray:
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.ones_like(x)
    return eps + (1.0 - eps) * (x - lo) / (hi - lo)


def setting_catalog(
    kind: SettingKind,
    n: int,
    rng: Union[np.random.Generator, int],
    eps: float = EPSILON,
) -> ProductCatalog:
    """Draw qualities and appeals for one of the four experimental settings.

    Qualities are drawn first and appeals second in every setting, so an
    anticorrelated setting shares its qualities with the independent setting
    of the same family and seed. Anticorrelated appeals are ``1 - q`` with a
    floor at ``eps``.
    """
    kind = SettingKind.parse(kind)
    if n < 1:
        raise UsageError("n must be positive")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    if kind in (SettingKind.GAUSSIAN_INDEPENDENT, SettingKind.GAUSSIAN_ANTICORRELATED):
        q = _minmax(rng.normal(GAUSSIAN_MEAN, GAUSSIAN_SD, n), eps)
        a = _minmax(rng.normal(GAUSSIAN_MEAN, GAUSSIAN_SD, n), eps)
    else:
        q = rng.uniform(eps, 1.0, n)
        a = rng.uniform(eps, 1.0, n)
    if kind.anticorrelated:
        a = np.maximum(1.0 - q, eps)
    return ProductCatalog(q, a)


def clamped_count(catalog: ProductCatalog, eps: float = EPSILON) -> int:
    """How many anticorrelated appeals were raised to the ``eps`` floor."""
    return int(np.sum(1.0 - catalog.qualities < eps))


# ---------------------------------------------------------------------------
# configuration files


@dataclass(frozen=True)
class ExperimentConfig:
    """Contents of a JSON configuration file, before products are drawn.

    Products are either explicit (``qualities``/``appeals``) or drawn from
    ``setting`` with ``setting_seed``. Visibility is either explicit
    (``visibilities``) or generated from ``visibility_spec``.
    """

    policy: PolicyKind
    condition: Condition
    refresh_rate: int
    steps: int
    worlds: int
    master_seed: int
    n: int
    qualities: Optional[tuple[float, ...]] = None
    appeals: Optional[tuple[float, ...]] = None
    setting: Optional[SettingKind] = None
    setting_seed: Optional[int] = None
    visibilities: Optional[tuple[float, ...]] = None
    visibility_spec: Optional[VisibilitySpec] = None
    trace_granularity: TraceGranularity = TraceGranularity.DOWNLOADS
    initial_shuffle: bool = False
    checkpoint_every: int = 100

    def __post_init__(self) -> None:
        object.__setattr__(self, "policy", PolicyKind.parse(self.policy))
        object.__setattr__(self, "condition", Condition.parse(self.condition))
        object.__setattr__(self, "trace_granularity", TraceGranularity.parse(self.trace_granularity))
        if self.setting is not None:
            object.__setattr__(self, "setting", SettingKind.parse(self.setting))

    def catalog(self) -> ProductCatalog:
        if self.qualities is not None:
            return ProductCatalog(self.qualities, self.appeals)
        return setting_catalog(self.setting, self.n, self.setting_seed)

    def visibility(self) -> VisibilityProfile:
        if self.visibilities is not None:
            return VisibilityProfile(self.visibilities)
        return musiclab_visibility(self.visibility_spec)

    def with_overrides(self, **changes: Any) -> "ExperimentConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update({k: v for k, v in changes.items() if v is not None})
        spec = values["visibility_spec"]
        if spec is not None and spec.n != values["n"] and "visibility_spec" not in changes:
            values["visibility_spec"] = dataclasses.replace(spec, n=values["n"])
        return ExperimentConfig(**values)

    def to_simulation(self) -> SimulationConfig:
        return SimulationConfig(
            catalog=self.catalog(),
            visibility=self.visibility(),
            schedule=PolicySchedule(self.policy, self.condition, self.refresh_rate),
            steps=self.steps,
            worlds=self.worlds,
            master_seed=self.master_seed,
            trace_granularity=self.trace_granularity,
            initial_shuffle=self.initial_shuffle,
            checkpoint_every=self.checkpoint_every,
        )

    def to_dict(self) -> dict:
        if self.qualities is not None:
            products: dict = {"q": list(self.qualities), "A": list(self.appeals)}
        else:
            products = {"n": self.n}
        if self.visibilities is not None:
            visibility: dict = {"v": list(self.visibilities)}
        else:
            spec = self.visibility_spec
            visibility = {
                "spec": {
                    "v_max": spec.v_max,
                    "v_min": spec.v_min,
                    "decay": spec.decay,
                    "uptick_count": spec.uptick_count,
                    "uptick_gain": spec.uptick_gain,
                }
            }
        out: dict = {"products": products}
        if self.setting is not None:
            out["setting"] = {"kind": self.setting.value, "seed": self.setting_seed}
        out.update(
            visibility=visibility,
            policy=self.policy.value,
            condition=self.condition.value,
            refresh_rate=self.refresh_rate,
            steps=self.steps,
            worlds=self.worlds,
            master_seed=self.master_seed,
            trace_granularity=self.trace_granularity.value,
            initial_shuffle=self.initial_shuffle,
            checkpoint_every=self.checkpoint_every,
        )
        return out


def default_config() -> ExperimentConfig:
    """Setting 1, 50 songs, quality ranking under social influence."""
    return ExperimentConfig(
        policy=PolicyKind.QUALITY,
        condition=Condition.SOCIAL_INFLUENCE,
        refresh_rate=1,
        steps=20_000,
        worlds=400,
        master_seed=20_150_101,
        n=50,
        setting=SettingKind.GAUSSIAN_INDEPENDENT,
        setting_seed=1,
        visibility_spec=VisibilitySpec(n=50),
    )


_TOP_LEVEL = {
    "products": True,
    "setting": False,
    "visibility": True,
    "policy": True,
    "condition": True,
    "refresh_rate": True,
    "steps": True,
    "worlds": True,
    "master_seed": True,
    "trace_granularity": False,
    "initial_shuffle": False,
    "checkpoint_every": False,
}
_SPEC_FIELDS = ("v_max", "v_min", "decay", "uptick_count", "uptick_gain")


class _Reader:
    """Field-level validation that reports the offending path and its line."""

    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def fail(self, path: str, message: str) -> ConfigError:
        key = path.rsplit(".", 1)[-1]
        line = None
        for number, content in enumerate(self.text.splitlines(), start=1):
            if f'"{key}"' in content:
                line = number
                break
        where = f"{self.source}:{line}" if line else self.source
        return ConfigError(f"{where}: field '{path}': {message}")

    def obj(self, value, path: str, allowed, required=()) -> dict:
        if not isinstance(value, dict):
            raise self.fail(path, "expected an object")
        for key in value:
            if key not in allowed:
                raise self.fail(f"{path}.{key}" if path else key, "unknown field")
        for key in required:
            if key not in value:
                raise self.fail(f"{path}.{key}" if path else key, "missing required field")
        return value

    def integer(self, value, path: str, lo: int, hi: Optional[int] = None) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.fail(path, f"expected an integer, got {value!r}")
        if value < lo or (hi is not None and value >= hi):
            raise self.fail(path, f"value {value} out of range")
        return value

    def number(self, value, path: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise self.fail(path, f"expected a finite number, got {value!r}")
        return float(value)

    def numbers(self, value, path: str) -> tuple[float, ...]:
        if not isinstance(value, list) or not value:
            raise self.fail(path, "expected a non-empty array of numbers")
        return tuple(self.number(x, f"{path}[{i}]") for i, x in enumerate(value))

    def choice(self, value, path: str, parse):
        try:
            return parse(value)
        except (ValueError, TypeError) as exc:
            raise self.fail(path, str(exc)) from None


def config_from_dict(raw: Any, text: str = "", source: str = "<config>") -> ExperimentConfig:
    rd = _Reader(text, source)
    rd.obj(raw, "", _TOP_LEVEL, [k for k, req in _TOP_LEVEL.items() if req])

    products = raw["products"]
    rd.obj(products, "products", ("n", "q", "A"))
    values: dict = {}
    if "q" in products or "A" in products:
        if "n" in products:
            raise rd.fail("products.n", "give either n or explicit q/A arrays, not both")
        for key in ("q", "A"):
            if key not in products:
                raise rd.fail(f"products.{key}", "missing required field")
        values["qualities"] = rd.numbers(products["q"], "products.q")
        values["appeals"] = rd.numbers(products["A"], "products.A")
        if len(values["qualities"]) != len(values["appeals"]):
            raise rd.fail("products.A", "q and A must have the same length")
        values["n"] = len(values["qualities"])
        if "setting" in raw:
            raise rd.fail("setting", "not allowed with explicit q/A arrays")
    else:
        if "n" not in products:
            raise rd.fail("products.n", "missing required field")
        values["n"] = rd.integer(products["n"], "products.n", 1)
        if "setting" not in raw:
            raise rd.fail("setting", "missing required field (products given by n)")
        setting = rd.obj(raw["setting"], "setting", ("kind", "seed"), ("kind", "seed"))
        values["setting"] = rd.choice(setting["kind"], "setting.kind", SettingKind.parse)
        values["setting_seed"] = rd.integer(setting["seed"], "setting.seed", 0, MAX_SEED)

    vis = rd.obj(raw["visibility"], "visibility", ("spec", "v"))
    if ("spec" in vis) == ("v" in vis):
        raise rd.fail("visibility", "give exactly one of 'spec' or 'v'")
    if "v" in vis:
        values["visibilities"] = rd.numbers(vis["v"], "visibility.v")
        if len(values["visibilities"]) != values["n"]:
            raise rd.fail("visibility.v", f"expected {values['n']} entries")
    else:
        spec_raw = rd.obj(vis["spec"], "visibility.spec", _SPEC_FIELDS)
        kwargs: dict = {"n": values["n"]}
        for key in ("v_max", "v_min", "uptick_gain"):
            if key in spec_raw:
                kwargs[key] = rd.number(spec_raw[key], f"visibility.spec.{key}")
        if spec_raw.get("decay") is not None:
            kwargs["decay"] = rd.number(spec_raw["decay"], "visibility.spec.decay")
        if "uptick_count" in spec_raw:
            kwargs["uptick_count"] = rd.integer(spec_raw["uptick_count"], "visibility.spec.uptick_count", 0)
        try:
            values["visibility_spec"] = VisibilitySpec(**kwargs)
        except UsageError as exc:
            raise rd.fail("visibility.spec", str(exc)) from None

    values["policy"] = rd.choice(raw["policy"], "policy", PolicyKind.parse)
    values["condition"] = rd.choice(raw["condition"], "condition", Condition.parse)
    values["refresh_rate"] = rd.integer(raw["refresh_rate"], "refresh_rate", 1)
    values["steps"] = rd.integer(raw["steps"], "steps", 1)
    values["worlds"] = rd.integer(raw["worlds"], "worlds", 1)
    values["master_seed"] = rd.integer(raw["master_seed"], "master_seed", 0, MAX_SEED)
    if "trace_granularity" in raw:
        values["trace_granularity"] = rd.choice(
            raw["trace_granularity"], "trace_granularity", TraceGranularity.parse
        )
    if "initial_shuffle" in raw:
        if not isinstance(raw["initial_shuffle"], bool):
            raise rd.fail("initial_shuffle", "expected true or false")
        values["initial_shuffle"] = raw["initial_shuffle"]
    if "checkpoint_every" in raw:
        values["checkpoint_every"] = rd.integer(raw["checkpoint_every"], "checkpoint_every", 1)
    config = ExperimentConfig(**values)
    try:
        config.catalog()
        config.visibility()
    except ValueError as exc:
        raise rd.fail("products", str(exc)) from None
    return config


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return config_from_dict(raw, text, source)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def dump_config(config: ExperimentConfig) -> str:
    return json.dumps(config.to_dict(), indent=2) + "\n"


def save_config(config: ExperimentConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(dump_config(config))
