"""Run configuration: YAML documents mapped onto dataclasses."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from .channel import RadioParams
from .forest import ForestParams
from .scene import ConfigError, SceneConfig
from .scheduling import CostVector, QosRequirement

PRESETS = {
    "desk": {"n_train": 50, "n_test": 10},
    "paper": {"n_train": 500, "n_test": 10},
}


@dataclass
class CostConfig:
    lb: float = 100.0
    ap: float = 1.0
    # explicit per-link costs (LB-BS first) override lb/ap when given
    per_link: Optional[list[float]] = None


@dataclass
class SweepConfig:
    betas: list[float] = field(default_factory=lambda: [round(0.1 * i, 1) for i in range(11)])
    train_sizes: list[int] = field(default_factory=lambda: [1000, 5000, 10000])
    tree_counts: list[int] = field(default_factory=lambda: [10, 50, 200])
    beta: float = 0.0  # forest threshold used by the training sweep


@dataclass
class RunConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    scene_path: Optional[str] = None  # YAML file with a scene mapping; replaces ``scene``
    preset: str = "desk"
    n_train: Optional[int] = None  # realizations; None takes the preset value
    n_test: Optional[int] = None
    duration: int = 10_000  # slots per realization
    slot_duration: float = 1e-3
    D: int = 100
    K: int = 50
    gamma_db: float = 10.0
    costs: CostConfig = field(default_factory=CostConfig)
    radio: RadioParams = field(default_factory=RadioParams)
    forest: ForestParams = field(default_factory=ForestParams)
    betas: list[float] = field(default_factory=lambda: [0.0, 0.5])
    policies: list[str] = field(default_factory=lambda: ["genie", "greedy", "min-multi-x", "forest"])
    train_seed: int = 0
    test_seed: int = 1_000_000
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output_dir: str = "runs"
    workers: Optional[int] = None  # None means all logical cores

    def __post_init__(self):
        if self.scene_path is not None:
            self.scene = load_scene(self.scene_path)

    # derived -------------------------------------------------------------

    @property
    def train_realizations(self) -> int:
        return self.n_train if self.n_train is not None else PRESETS[self.preset]["n_train"]

    @property
    def test_realizations(self) -> int:
        return self.n_test if self.n_test is not None else PRESETS[self.preset]["n_test"]

    @property
    def qos(self) -> QosRequirement:
        return QosRequirement(self.D, self.K)

    @property
    def cost_vector(self) -> CostVector:
        if self.costs.per_link is not None:
            return CostVector(tuple(float(c) for c in self.costs.per_link))
        return CostVector.default(len(self.scene.aps), self.costs.lb, self.costs.ap)

    @property
    def n_workers(self) -> int:
        return self.workers or os.cpu_count() or 1

    def validate(self) -> None:
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; expected one of {sorted(PRESETS)}")
        if self.D < 1 or self.K < 1 or self.duration < 1:
            raise ConfigError("D, K and duration must be positive")
        if self.duration % self.K:
            raise ConfigError(f"duration {self.duration} is not a multiple of K={self.K}")
        if self.slot_duration <= 0:
            raise ConfigError("slot_duration must be positive")
        for name in ("n_train", "n_test"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be positive")
        for b in [*self.betas, *self.sweep.betas, self.sweep.beta]:
            if not 0.0 <= b <= 1.0:
                raise ConfigError(f"beta {b} outside [0, 1]")
        for p in self.policies:
            if p not in ("genie", "greedy", "min-multi-x", "forest"):
                raise ConfigError(f"unknown policy {p!r}")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be positive")
        if min(self.scene.codebooks[s.codebook].n_beams for s in self.scene.aps) < 1:
            raise ConfigError("codebooks need at least one beam")
        if self.forest.n_trees < 1:
            raise ConfigError("forest needs at least one tree")
        try:
            self.cost_vector
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if len(self.cost_vector) != len(self.scene.aps) + 1:
            raise ConfigError("one cost per link (LB-BS plus each mmAP) is required")
        self.scene.validate()


# --------------------------------------------------------------------------
# dict <-> dataclass
# --------------------------------------------------------------------------


def _convert(tp, value, where: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        non_none = [a for a in args if a is not type(None)]
        for a in non_none:
            try:
                return _convert(a, value, where)
            except ConfigError:
                pass
        raise ConfigError(f"{where}: {value!r} does not match {tp}")
    if dataclasses.is_dataclass(tp):
        if isinstance(value, tp):
            return value
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping")
        return from_dict(tp, value, where)
    if origin in (list, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        if origin is tuple and args and args[-1] is not Ellipsis:
            if len(args) != len(value):
                raise ConfigError(f"{where}: expected {len(args)} items")
            return tuple(_convert(a, v, f"{where}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
        item = args[0] if args else Any
        out = [_convert(item, v, f"{where}[{i}]") for i, v in enumerate(value)]
        return tuple(out) if origin is tuple else out
    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping")
        kt, vt = args
        return {_convert(kt, k, where): _convert(vt, v, f"{where}.{k}") for k, v in value.items()}
    if tp is Any:
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported type {tp}")


def from_dict(cls, data: dict, where: str = "config"):
    """Build dataclass ``cls`` from a plain mapping, rejecting unknown keys."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {k: _convert(hints[k], v, f"{where}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def to_dict(obj) -> Any:
    """Plain YAML/JSON-safe structure (tuples become lists)."""
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {k: to_dict(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_dict(v) for v in obj]
    return obj


# --------------------------------------------------------------------------
# files
# --------------------------------------------------------------------------


def _read_yaml(path) -> dict:
    if not Path(path).is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def load_scene(path) -> SceneConfig:
    if not Path(path).exists():
        raise ConfigError(f"scene file {path} does not exist")
    return from_dict(SceneConfig, _read_yaml(path), "scene")


def config_from_dict(data: dict) -> RunConfig:
    cfg = from_dict(RunConfig, data)
    cfg.validate()
    return cfg


def load_config(path=None) -> RunConfig:
    """Defaults when ``path`` is None. A relative scene_path resolves against the config file."""
    if path is None:
        return config_from_dict({})
    data = _read_yaml(path)
    sp = data.get("scene_path")
    if isinstance(sp, str) and not os.path.isabs(sp):
        data["scene_path"] = str(Path(path).parent / sp)
    return config_from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=True)


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_config(cfg))


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply ``dotted.key=value`` overrides; values are parsed as YAML scalars or lists."""
    data = to_dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {item!r}: {exc}") from exc
        node = data
        parts = key.strip().split(".")
        for p in parts[:-1]:
            if not isinstance(node, dict) or p not in node:
                raise ConfigError(f"unknown config key {key!r}")
            node = node[p]
        if not isinstance(node, dict) or (parts[-1] not in node and node is data):
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = value
    if any(o.split("=", 1)[0].strip() == "scene_path" for o in overrides):
        data.pop("scene", None)
    else:
        data["scene_path"] = None  # the scene is already loaded inline
    return config_from_dict(data)


# keys that do not change any result file
_NON_SEMANTIC = ("output_dir", "workers", "scene_path")


def config_hash(cfg: RunConfig) -> str:
    data = {k: v for k, v in to_dict(cfg).items() if k not in _NON_SEMANTIC}
    blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()

