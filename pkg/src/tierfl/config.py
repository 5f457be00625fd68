"""Run configuration: typed settings plus strict JSON parsing.

``parse_config`` accepts a JSON object and rejects unknown keys, wrong
types, and out-of-range values in one pass, reporting every problem with
its dotted field path. An empty object parses to the fully defaulted
config, so configs only need to state what they change.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .data import PARTITION_MODES
from .errors import ConfigError
from .protocols import Schedule, StrategyConfig

COMPONENTS = ("full", "no_contrastive", "no_role_split", "neither")

SWEEP_AXES = ("margin", "schedule", "component")


@dataclass(frozen=True)
class ModelSettings:
    """Hidden widths and the two split points of the layer chain."""

    hidden_dims: tuple[int, ...] = (64, 64, 32, 32)
    cut1: int = 2
    cut2: int = 4

    def __post_init__(self):
        errors = []
        if not self.hidden_dims:
            errors.append("hidden_dims: at least one hidden layer required")
        elif any(d < 1 for d in self.hidden_dims):
            errors.append("hidden_dims: widths must be >= 1")
        if self.cut1 < 1:
            errors.append(f"cut1: must be >= 1, got {self.cut1}")
        if self.cut2 < 1:
            errors.append(f"cut2: must be >= 1, got {self.cut2}")
        if errors:
            raise ConfigError(errors)


@dataclass(frozen=True)
class DataSettings:
    """Synthetic data shape, partitioning, and batch sizes.

    When ``csv_path`` is set the synthetic generator is bypassed and
    ``test_fraction`` of the rows is held out; otherwise ``per_class``
    train and ``test_per_class`` held-out points are drawn per class.
    """

    classes: int = 4
    per_class: int = 50
    test_per_class: int = 50
    dim: int = 16
    spread: float = 1.0
    partition: str = "iid"
    alpha: float = 0.3
    shards_per_client: int = 2
    batch_size: int = 8
    pairs_per_batch: int = 8
    pos_fraction: float = 0.5
    with_masks: bool = False
    csv_path: Optional[str] = None
    test_fraction: float = 0.2

    def __post_init__(self):
        errors = []
        if self.classes < 2:
            errors.append(f"classes: must be >= 2, got {self.classes}")
        if self.per_class < 1:
            errors.append(f"per_class: must be >= 1, got {self.per_class}")
        if self.test_per_class < 1:
            errors.append(f"test_per_class: must be >= 1, got {self.test_per_class}")
        if self.dim < 1:
            errors.append(f"dim: must be >= 1, got {self.dim}")
        if self.spread < 0:
            errors.append(f"spread: must be >= 0, got {self.spread}")
        if self.partition not in PARTITION_MODES:
            errors.append(f"partition: unknown mode {self.partition!r}")
        if self.alpha <= 0:
            errors.append(f"alpha: must be positive, got {self.alpha}")
        if self.shards_per_client < 1:
            errors.append(f"shards_per_client: must be >= 1, got {self.shards_per_client}")
        if self.batch_size < 1:
            errors.append(f"batch_size: must be >= 1, got {self.batch_size}")
        if self.pairs_per_batch < 1:
            errors.append(f"pairs_per_batch: must be >= 1, got {self.pairs_per_batch}")
        if not (0.0 <= self.pos_fraction <= 1.0):
            errors.append(f"pos_fraction: must lie in [0, 1], got {self.pos_fraction}")
        if not (0.0 < self.test_fraction < 1.0):
            errors.append(f"test_fraction: must lie in (0, 1), got {self.test_fraction}")
        if errors:
            raise ConfigError(errors)


@dataclass(frozen=True)
class TopologySettings:
    n_clients: int = 20
    n_edges: int = 2

    def __post_init__(self):
        errors = []
        if self.n_clients < 1:
            errors.append(f"n_clients: must be >= 1, got {self.n_clients}")
        if self.n_edges < 1:
            errors.append(f"n_edges: must be >= 1, got {self.n_edges}")
        if self.n_edges > self.n_clients:
            errors.append("n_edges: must not exceed n_clients")
        if errors:
            raise ConfigError(errors)


@dataclass(frozen=True)
class RunConfig:
    strategy: StrategyConfig = field(default_factory=lambda: StrategyConfig(kind="sherl"))
    schedule: Schedule = field(default_factory=lambda: Schedule(rounds=20, t1=5, t2=10))
    topology: TopologySettings = field(default_factory=TopologySettings)
    model: ModelSettings = field(default_factory=ModelSettings)
    data: DataSettings = field(default_factory=DataSettings)
    seed: int = 0
    bytes_per_scalar: int = 4
    sync_clients_at_t2: bool = True

    def __post_init__(self):
        errors = []
        if self.seed < 0:
            errors.append(f"seed: must be >= 0, got {self.seed}")
        if self.bytes_per_scalar not in (4, 8):
            errors.append(f"bytes_per_scalar: must be 4 or 8, got {self.bytes_per_scalar}")
        if errors:
            raise ConfigError(errors)


# ---- strict JSON parsing ---- #

Converter = Callable[[object, str, list], object]


def _expect_int(value, path, errors):
    if isinstance(value, bool) or not isinstance(value, int):
        errors.append(f"{path}: expected an integer, got {value!r}")
        return None
    return value


def _expect_float(value, path, errors):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errors.append(f"{path}: expected a number, got {value!r}")
        return None
    return float(value)


def _expect_str(value, path, errors):
    if not isinstance(value, str):
        errors.append(f"{path}: expected a string, got {value!r}")
        return None
    return value


def _expect_bool(value, path, errors):
    if not isinstance(value, bool):
        errors.append(f"{path}: expected true or false, got {value!r}")
        return None
    return value


def _expect_opt_str(value, path, errors):
    if value is None:
        return None
    return _expect_str(value, path, errors)


def _expect_int_list(value, path, errors):
    if not isinstance(value, list) or not all(
        isinstance(v, int) and not isinstance(v, bool) for v in value
    ):
        errors.append(f"{path}: expected a list of integers, got {value!r}")
        return None
    return tuple(value)


_STRATEGY_FIELDS: dict[str, Converter] = {
    "kind": _expect_str,
    "margin": _expect_float,
    "lr": _expect_float,
    "local_epochs": _expect_int,
    "optimizer": _expect_str,
    "mu": _expect_float,
    "beta1": _expect_float,
    "beta2": _expect_float,
    "eps": _expect_float,
}

_SCHEDULE_FIELDS: dict[str, Converter] = {
    "rounds": _expect_int,
    "t1": _expect_int,
    "t2": _expect_int,
    "sample_rate": _expect_float,
}

_TOPOLOGY_FIELDS: dict[str, Converter] = {
    "n_clients": _expect_int,
    "n_edges": _expect_int,
}

_MODEL_FIELDS: dict[str, Converter] = {
    "hidden_dims": _expect_int_list,
    "cut1": _expect_int,
    "cut2": _expect_int,
}

_DATA_FIELDS: dict[str, Converter] = {
    "classes": _expect_int,
    "per_class": _expect_int,
    "test_per_class": _expect_int,
    "dim": _expect_int,
    "spread": _expect_float,
    "partition": _expect_str,
    "alpha": _expect_float,
    "shards_per_client": _expect_int,
    "batch_size": _expect_int,
    "pairs_per_batch": _expect_int,
    "pos_fraction": _expect_float,
    "with_masks": _expect_bool,
    "csv_path": _expect_opt_str,
    "test_fraction": _expect_float,
}

_TOP_LEVEL = ("strategy", "schedule", "topology", "model", "data", "seed", "bytes_per_scalar", "sync_clients_at_t2")


def _collect(section: str, raw: dict, fields: dict[str, Converter], errors: list) -> dict:
    kwargs = {}
    for key in sorted(raw):
        if key not in fields:
            errors.append(f"{section}.{key}: unknown key")
            continue
        value = fields[key](raw[key], f"{section}.{key}", errors)
        if value is not None or (section == "data" and key == "csv_path"):
            kwargs[key] = value
    return kwargs


def _section(raw: dict, key: str, errors: list) -> dict:
    value = raw.get(key, {})
    if not isinstance(value, dict):
        errors.append(f"{key}: expected an object, got {value!r}")
        return {}
    return value


def _construct(section: str, factory, kwargs: dict, errors: list):
    try:
        return factory(**kwargs)
    except ConfigError as exc:
        prefix = f"{section}." if section else ""
        errors.extend(f"{prefix}{msg}" for msg in exc.errors)
        return None


def parse_config_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError([f"config: expected a JSON object, got {type(raw).__name__}"])
    errors: list[str] = []
    for key in sorted(raw):
        if key not in _TOP_LEVEL:
            errors.append(f"{key}: unknown key")

    strategy_kwargs = _collect("strategy", _section(raw, "strategy", errors), _STRATEGY_FIELDS, errors)
    strategy_kwargs.setdefault("kind", "sherl")
    strategy = _construct("strategy", StrategyConfig, strategy_kwargs, errors)
    schedule_kwargs = _collect("schedule", _section(raw, "schedule", errors), _SCHEDULE_FIELDS, errors)
    schedule_kwargs.setdefault("rounds", 20)
    schedule_kwargs.setdefault("t1", 5)
    schedule_kwargs.setdefault("t2", 10)
    schedule = _construct("schedule", Schedule, schedule_kwargs, errors)
    topology = _construct(
        "topology", TopologySettings, _collect("topology", _section(raw, "topology", errors), _TOPOLOGY_FIELDS, errors), errors
    )
    model = _construct(
        "model", ModelSettings, _collect("model", _section(raw, "model", errors), _MODEL_FIELDS, errors), errors
    )
    data = _construct(
        "data", DataSettings, _collect("data", _section(raw, "data", errors), _DATA_FIELDS, errors), errors
    )

    top_kwargs = {}
    if "seed" in raw:
        value = _expect_int(raw["seed"], "seed", errors)
        if value is not None:
            top_kwargs["seed"] = value
    if "bytes_per_scalar" in raw:
        value = _expect_int(raw["bytes_per_scalar"], "bytes_per_scalar", errors)
        if value is not None:
            top_kwargs["bytes_per_scalar"] = value
    if "sync_clients_at_t2" in raw:
        value = _expect_bool(raw["sync_clients_at_t2"], "sync_clients_at_t2", errors)
        if value is not None:
            top_kwargs["sync_clients_at_t2"] = value

    if errors:
        # Sections failed; still surface top-level range problems so one
        # parse reports everything. The probe uses default sections.
        _construct("", RunConfig, top_kwargs, errors)
        raise ConfigError(errors)
    cfg = _construct(
        "",
        RunConfig,
        dict(strategy=strategy, schedule=schedule, topology=topology, model=model, data=data, **top_kwargs),
        errors,
    )
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_config(text: str) -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config: invalid JSON ({exc})"]) from exc
    return parse_config_dict(raw)


# ---- sweeps ---- #


@dataclass(frozen=True)
class SweepSpec:
    """One swept axis over a shared base config."""

    base: RunConfig
    axis: str
    margins: tuple[float, ...] = ()
    schedules: tuple[tuple[int, int], ...] = ()
    components: tuple[str, ...] = ()

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError([f"axis: unknown sweep axis {self.axis!r}"])


def component_config(base: RunConfig, name: str) -> RunConfig:
    """Ablation variants: drop the pair objective (task gradient instead),
    shrink the client segment to one layer, or both."""
    if name not in COMPONENTS:
        raise ConfigError([f"component: unknown component {name!r}"])
    kind = "sherl" if name in ("full", "no_role_split") else "hsfl"
    cfg = replace(base, strategy=replace(base.strategy, kind=kind))
    if name in ("no_role_split", "neither"):
        cfg = replace(cfg, model=replace(cfg.model, cut1=1))
    return cfg


def sweep_points(spec: SweepSpec) -> list[tuple[str, RunConfig]]:
    """Materialize (label, config) pairs along the swept axis. Schedule
    points are labeled A, B, C, ... in listed order."""
    if spec.axis == "margin":
        return [
            (f"margin_{m:g}", replace(spec.base, strategy=replace(spec.base.strategy, margin=m)))
            for m in spec.margins
        ]
    if spec.axis == "schedule":
        points = []
        for i, (t1, t2) in enumerate(spec.schedules):
            label = chr(ord("A") + i) if i < 26 else f"S{i}"
            sched = Schedule(
                rounds=spec.base.schedule.rounds,
                t1=t1,
                t2=t2,
                sample_rate=spec.base.schedule.sample_rate,
            )
            points.append((label, replace(spec.base, schedule=sched)))
        return points
    return [(name, component_config(spec.base, name)) for name in spec.components]


def parse_sweep(text: str) -> SweepSpec:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"sweep: invalid JSON ({exc})"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError([f"sweep: expected a JSON object, got {type(raw).__name__}"])
    errors: list[str] = []
    for key in sorted(raw):
        if key not in ("base", "margins", "schedules", "components"):
            errors.append(f"{key}: unknown key")
    base_raw = raw.get("base", {})
    base = None
    try:
        base = parse_config_dict(base_raw)
    except ConfigError as exc:
        errors.extend(f"base.{msg}" for msg in exc.errors)

    axes = [k for k in ("margins", "schedules", "components") if k in raw]
    if len(axes) != 1:
        errors.append("sweep: exactly one of margins, schedules, components required")
        raise ConfigError(errors)
    axis_key = axes[0]
    value = raw[axis_key]
    if not isinstance(value, list) or not value:
        errors.append(f"{axis_key}: expected a non-empty list")
        raise ConfigError(errors)

    kwargs: dict = {}
    if axis_key == "margins":
        axis = "margin"
        items = [_expect_float(v, f"margins[{i}]", errors) for i, v in enumerate(value)]
        kwargs["margins"] = tuple(v for v in items if v is not None)
    elif axis_key == "schedules":
        axis = "schedule"
        pairs = []
        for i, entry in enumerate(value):
            if not isinstance(entry, dict) or set(entry) != {"t1", "t2"}:
                errors.append(f"schedules[{i}]: expected an object with keys t1 and t2")
                continue
            t1 = _expect_int(entry["t1"], f"schedules[{i}].t1", errors)
            t2 = _expect_int(entry["t2"], f"schedules[{i}].t2", errors)
            if t1 is not None and t2 is not None:
                pairs.append((t1, t2))
        kwargs["schedules"] = tuple(pairs)
    else:
        axis = "component"
        names = []
        for i, entry in enumerate(value):
            name = _expect_str(entry, f"components[{i}]", errors)
            if name is not None and name not in COMPONENTS:
                errors.append(f"components[{i}]: unknown component {name!r}")
            elif name is not None:
                names.append(name)
        kwargs["components"] = tuple(names)

    if errors:
        raise ConfigError(errors)
    return SweepSpec(base=base, axis=axis, **kwargs)
