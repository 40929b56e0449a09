"""Deterministic training loop, optimizers and run statistics.

A run is a pure function of (task seed, model seed, adapter seed, train
seed): batches are ordered by the portable generator, optimizer math is
plain numpy, and reports echo the full configuration.  Divergence is data,
not failure -- a non-finite loss flags the report and the run returns, so
ablation matrices always complete.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .adapters import Adapter, trainable_parameters
from .engine import Tape, Tensor, zero_grad
from .rng import SplitMix64
from .tasks import BlobsTask, TeacherTask, ToyClassifier, gen_blobs, teacher_loss

OPTIMIZER_KINDS = ("adamw", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop settings; defaults mirror the reference protocol
    (AdamW, lr 2e-4, 5 epochs, batch 16)."""

    optimizer: str = "adamw"
    lr: float = 2e-4
    epochs: int = 5
    batch_size: int = 16
    seed: int = 0
    eval_every: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.optimizer not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        # lr == 0 is allowed as a frozen-run diagnostic.
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass
class AdamWState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0


def adamw_state(params: Sequence[Tensor]) -> AdamWState:
    return AdamWState(
        m=[np.zeros_like(p.data) for p in params],
        v=[np.zeros_like(p.data) for p in params],
    )


def adamw_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
    state: AdamWState,
    cfg: TrainConfig,
) -> None:
    """One decoupled-weight-decay Adam step, in place, bias-corrected."""
    state.t += 1
    bc1 = 1.0 - cfg.beta1**state.t
    bc2 = 1.0 - cfg.beta2**state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * (g * g)
        update = (state.m[i] / bc1) / (np.sqrt(state.v[i] / bc2) + cfg.eps)
        p.data -= cfg.lr * (update + cfg.weight_decay * p.data)


def sgd_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
    cfg: TrainConfig,
) -> None:
    for p, g in zip(params, grads):
        p.data -= cfg.lr * (g + cfg.weight_decay * p.data)


class Optimizer:
    """Thin stepper over a fixed parameter list, reading .grad buffers."""

    def __init__(self, params: Sequence[Tensor], cfg: TrainConfig):
        self.params = list(params)
        self.cfg = cfg
        self.state = adamw_state(self.params) if cfg.optimizer == "adamw" else None

    def step(self) -> None:
        grads = [p.grad for p in self.params]
        if any(g is None for g in grads):
            raise RuntimeError("optimizer stepped before gradients were populated")
        if self.state is not None:
            adamw_step(self.params, grads, self.state, self.cfg)
        else:
            sgd_step(self.params, grads, self.cfg)


@dataclass
class RunReport:
    """Everything needed to compare, aggregate and reproduce one run."""

    config: dict
    seed: int
    epoch_losses: list  # one entry per configured epoch; None past divergence
    final_metric: float | None
    metric_name: str
    diverged: bool
    diverged_epoch: int | None
    wall_seconds: float
    frozen_hash: str
    eval_trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))


def _finite(value: float) -> bool:
    return bool(np.isfinite(value))


def train(
    model: ToyClassifier | None,
    adapter: Adapter,
    task: BlobsTask | TeacherTask,
    cfg: TrainConfig,
) -> RunReport:
    """Train the adapter parameters only; the base model never moves.

    Blobs tasks run minibatched cross-entropy with the portable shuffle;
    teacher tasks run one full-batch Frobenius step per epoch so the
    best-rank-r floor comparison stays clean.
    """
    started = time.perf_counter()
    params = trainable_parameters(adapter)
    opt = Optimizer(params, cfg)
    losses: list[float | None] = []
    diverged = False
    diverged_epoch: int | None = None
    eval_trace: list[list] = []
    # Divergence is data, not failure: let overflow produce inf/nan quietly
    # and catch it through the finite-loss check below.
    errstate = np.errstate(over="ignore", invalid="ignore")

    if isinstance(task, BlobsTask):
        if model is None:
            raise ValueError("blobs task needs a classifier model")
        x_all, y_all = gen_blobs(task)
        n = y_all.shape[0]
        shuffler = SplitMix64(cfg.seed)
        metric_name = "train_accuracy"
        with errstate:
            for epoch in range(cfg.epochs):
                if diverged:
                    losses.append(None)
                    continue
                order = shuffler.permutation(n)
                total = 0.0
                for start in range(0, n, cfg.batch_size):
                    idx = order[start : start + cfg.batch_size]
                    xb = Tensor(x_all[:, idx])
                    yb = y_all[idx]
                    zero_grad(params)
                    with Tape() as tape:
                        loss = model.loss(adapter, xb, yb)
                    value = loss.item()
                    if not _finite(value):
                        diverged, diverged_epoch = True, epoch
                        break
                    tape.backward(loss)
                    opt.step()
                    total += value * idx.size
                if diverged:
                    losses.append(None)
                else:
                    losses.append(total / n)
                    if cfg.eval_every and (epoch + 1) % cfg.eval_every == 0:
                        eval_trace.append([epoch, model.accuracy(adapter, x_all, y_all)])
            final = None if diverged else model.accuracy(adapter, x_all, y_all)
        frozen = model.frozen_hash()
    elif isinstance(task, TeacherTask):
        metric_name = "teacher_loss"
        with errstate:
            for epoch in range(cfg.epochs):
                if diverged:
                    losses.append(None)
                    continue
                zero_grad(params)
                with Tape() as tape:
                    loss = teacher_loss(adapter, task)
                value = loss.item()
                if not _finite(value):
                    diverged, diverged_epoch = True, epoch
                    losses.append(None)
                    continue
                tape.backward(loss)
                opt.step()
                losses.append(value)
                if cfg.eval_every and (epoch + 1) % cfg.eval_every == 0:
                    eval_trace.append([epoch, teacher_loss(adapter, task).item()])
            if diverged:
                final = None
            else:
                final = teacher_loss(adapter, task).item()
                if not _finite(final):
                    diverged, diverged_epoch, final = True, cfg.epochs - 1, None
        frozen = task.target_hash()
    else:
        raise TypeError(f"unknown task type {type(task).__name__}")

    config_echo = {
        "task": task.describe(),
        "adapter": adapter.describe(),
        "train": asdict(cfg),
    }
    if model is not None:
        config_echo["model"] = model.describe()

    return RunReport(
        config=config_echo,
        seed=cfg.seed,
        epoch_losses=losses,
        final_metric=final,
        metric_name=metric_name,
        diverged=diverged,
        diverged_epoch=diverged_epoch,
        wall_seconds=time.perf_counter() - started,
        frozen_hash=frozen,
        eval_trace=eval_trace,
    )


def variance_report(groups: dict[str, list[RunReport]]) -> dict[str, dict]:
    """Unbiased sample variance of the final metric per config group.

    Diverged runs are excluded from the moments but counted.  Groups with
    fewer than two finished runs are refused.
    """
    out: dict[str, dict] = {}
    for name, reports in groups.items():
        metrics = [r.final_metric for r in reports if not r.diverged]
        n_diverged = sum(1 for r in reports if r.diverged)
        if len(metrics) < 2:
            raise ValueError(
                f"variance for group {name!r} needs at least 2 finished runs, "
                f"got {len(metrics)} ({n_diverged} diverged)"
            )
        mean = sum(metrics) / len(metrics)
        var = sum((m - mean) ** 2 for m in metrics) / (len(metrics) - 1)
        out[name] = {
            "n": len(metrics),
            "n_diverged": n_diverged,
            "mean": mean,
            "variance": var,
        }
    return out
