"""Experiment configuration: strict JSON blocks, defaults, validation.

A config file describes one experiment: task block, optional model block
(blobs only), adapter block, train block and a seed list.  Unknown keys
are rejected anywhere in the tree so a typo can never silently fall back
to a default, and the validated config echoes into every report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .activations import ActivationSpec, sinter
from .tasks import BlobsTask, TeacherTask
from .training import TrainConfig


class ConfigError(ValueError):
    """Malformed experiment configuration."""


ADAPTER_KINDS = ("lora", "loran")


@dataclass(frozen=True)
class AdapterConfig:
    kind: str = "loran"
    rank: int = 8
    alpha: float = 16.0
    scale_inside: bool = True
    activation: ActivationSpec = field(default_factory=sinter)

    def __post_init__(self):
        if self.kind not in ADAPTER_KINDS:
            raise ConfigError(f"adapter kind must be one of {ADAPTER_KINDS}, got {self.kind!r}")
        if self.rank < 1:
            raise ConfigError("adapter rank must be >= 1")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "rank": self.rank,
            "alpha": self.alpha,
            "scale_inside": self.scale_inside,
            "activation": self.activation.to_config(),
        }


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 32
    seed: int = 101

    def to_dict(self) -> dict:
        return {"hidden": self.hidden, "seed": self.seed}


@dataclass(frozen=True)
class GridConfig:
    """Sinter sweep ranges; defaults bracket the tuned operating point."""

    amplitudes: tuple = (5e-6, 5e-5, 5e-4)
    omegas: tuple = (1e3, 1e4, 1e5)

    def __post_init__(self):
        if not self.amplitudes or not self.omegas:
            raise ConfigError("grid needs non-empty amplitude and omega lists")

    def to_dict(self) -> dict:
        return {"amplitudes": list(self.amplitudes), "omegas": list(self.omegas)}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    task: BlobsTask | TeacherTask
    adapter: AdapterConfig
    train: TrainConfig
    seeds: tuple
    model: ModelConfig | None = None
    grid: GridConfig = field(default_factory=GridConfig)
    ranks: tuple = (8, 64)

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("config needs at least one seed")
        if isinstance(self.task, BlobsTask) and self.model is None:
            raise ConfigError("blobs task needs a model block")

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "task": self.task.describe(),
            "adapter": self.adapter.to_dict(),
            "train": {
                "optimizer": self.train.optimizer,
                "lr": self.train.lr,
                "epochs": self.train.epochs,
                "batch_size": self.train.batch_size,
                "eval_every": self.train.eval_every,
                "beta1": self.train.beta1,
                "beta2": self.train.beta2,
                "eps": self.train.eps,
                "weight_decay": self.train.weight_decay,
            },
            "seeds": list(self.seeds),
            "grid": self.grid.to_dict(),
            "ranks": list(self.ranks),
        }
        if self.model is not None:
            out["model"] = self.model.to_dict()
        return out


def _require_keys(block: dict, allowed: set[str], where: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _get(block: dict, key: str, types, where: str, default=None, required=False):
    if key not in block:
        if required:
            raise ConfigError(f"missing required key {key!r} in {where}")
        return default
    value = block[key]
    if types is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, types) or isinstance(value, bool) and types is not bool:
        raise ConfigError(f"{where}.{key} has wrong type {type(value).__name__}")
    return value


def _parse_task(block: dict) -> BlobsTask | TeacherTask:
    kind = _get(block, "kind", str, "task", required=True)
    if kind == "blobs":
        _require_keys(block, {"kind", "classes", "n_per_class", "dim", "spread", "seed"}, "task")
        try:
            return BlobsTask(
                classes=_get(block, "classes", int, "task", 4),
                n_per_class=_get(block, "n_per_class", int, "task", 40),
                dim=_get(block, "dim", int, "task", 16),
                spread=_get(block, "spread", float, "task", 6.0),
                seed=_get(block, "seed", int, "task", 0),
            )
        except ValueError as err:
            raise ConfigError(str(err)) from err
    if kind == "teacher":
        _require_keys(block, {"kind", "d", "k", "target_rank", "seed"}, "task")
        try:
            return TeacherTask(
                d=_get(block, "d", int, "task", 32),
                k=_get(block, "k", int, "task", 32),
                target_rank=_get(block, "target_rank", int, "task", 16),
                seed=_get(block, "seed", int, "task", 0),
            )
        except ValueError as err:
            raise ConfigError(str(err)) from err
    raise ConfigError(f"unknown task kind {kind!r}; expected 'blobs' or 'teacher'")


def _parse_adapter(block: dict) -> AdapterConfig:
    _require_keys(block, {"kind", "rank", "alpha", "scale_inside", "activation"}, "adapter")
    activation_block = block.get("activation", {"kind": "sinter", "amplitude": 5e-5, "omega": 1e4})
    if not isinstance(activation_block, dict):
        raise ConfigError("adapter.activation must be an object")
    try:
        activation = ActivationSpec.from_config(activation_block)
    except ValueError as err:
        raise ConfigError(f"adapter.activation: {err}") from err
    return AdapterConfig(
        kind=_get(block, "kind", str, "adapter", "loran"),
        rank=_get(block, "rank", int, "adapter", 8),
        alpha=_get(block, "alpha", float, "adapter", 16.0),
        scale_inside=_get(block, "scale_inside", bool, "adapter", True),
        activation=activation,
    )


def _parse_train(block: dict) -> TrainConfig:
    allowed = {
        "optimizer", "lr", "epochs", "batch_size", "eval_every",
        "beta1", "beta2", "eps", "weight_decay",
    }
    _require_keys(block, allowed, "train")
    try:
        return TrainConfig(
            optimizer=_get(block, "optimizer", str, "train", "adamw"),
            lr=_get(block, "lr", float, "train", 2e-4),
            epochs=_get(block, "epochs", int, "train", 5),
            batch_size=_get(block, "batch_size", int, "train", 16),
            eval_every=_get(block, "eval_every", int, "train", 0),
            beta1=_get(block, "beta1", float, "train", 0.9),
            beta2=_get(block, "beta2", float, "train", 0.999),
            eps=_get(block, "eps", float, "train", 1e-8),
            weight_decay=_get(block, "weight_decay", float, "train", 0.0),
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    allowed = {"name", "task", "model", "adapter", "train", "seeds", "grid", "ranks"}
    _require_keys(raw, allowed, "config")
    task_block = raw.get("task")
    if not isinstance(task_block, dict):
        raise ConfigError("config needs a 'task' object")
    task = _parse_task(task_block)

    model = None
    if "model" in raw:
        block = raw["model"]
        if not isinstance(block, dict):
            raise ConfigError("model block must be an object")
        _require_keys(block, {"hidden", "seed"}, "model")
        model = ModelConfig(
            hidden=_get(block, "hidden", int, "model", 32),
            seed=_get(block, "seed", int, "model", 101),
        )
    elif isinstance(task, BlobsTask):
        model = ModelConfig()

    adapter_block = raw.get("adapter", {})
    if not isinstance(adapter_block, dict):
        raise ConfigError("adapter block must be an object")
    train_block = raw.get("train", {})
    if not isinstance(train_block, dict):
        raise ConfigError("train block must be an object")

    seeds = raw.get("seeds", [0, 1, 2, 3, 4])
    if not isinstance(seeds, list) or not all(
        isinstance(s, int) and not isinstance(s, bool) for s in seeds
    ):
        raise ConfigError("seeds must be a list of integers")

    grid = GridConfig()
    if "grid" in raw:
        block = raw["grid"]
        if not isinstance(block, dict):
            raise ConfigError("grid block must be an object")
        _require_keys(block, {"amplitudes", "omegas"}, "grid")
        amplitudes = block.get("amplitudes", list(grid.amplitudes))
        omegas = block.get("omegas", list(grid.omegas))
        if not isinstance(amplitudes, list) or not isinstance(omegas, list):
            raise ConfigError("grid.amplitudes and grid.omegas must be lists")
        grid = GridConfig(
            amplitudes=tuple(float(a) for a in amplitudes),
            omegas=tuple(float(w) for w in omegas),
        )

    ranks = raw.get("ranks", [8, 64])
    if not isinstance(ranks, list) or not all(
        isinstance(r, int) and not isinstance(r, bool) for r in ranks
    ):
        raise ConfigError("ranks must be a list of integers")

    return ExperimentConfig(
        name=_get(raw, "name", str, "config", "experiment"),
        task=task,
        adapter=_parse_adapter(adapter_block),
        train=_parse_train(train_block),
        seeds=tuple(seeds),
        model=model,
        grid=grid,
        ranks=tuple(ranks),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from err
    return parse_config(raw)


def default_config(task_kind: str = "teacher") -> dict:
    """Fully-expanded default config, printable for provenance."""
    if task_kind == "blobs":
        task: BlobsTask | TeacherTask = BlobsTask()
        raw: dict = {"name": "blobs-default", "task": task.describe(), "model": ModelConfig().to_dict()}
    elif task_kind == "teacher":
        task = TeacherTask()
        raw = {"name": "teacher-default", "task": task.describe()}
    else:
        raise ConfigError(f"unknown task kind {task_kind!r}")
    cfg = parse_config({**raw, "adapter": {}, "train": {}})
    return cfg.to_dict()
