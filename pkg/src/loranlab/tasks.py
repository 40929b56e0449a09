"""Desk-scale tasks that make adapter mechanics observable.

Two objectives:

* ``BlobsTask`` -- Gaussian class clusters fed through a tiny frozen
  two-layer network.  The adapter sits on the first (feature) layer, ahead
  of the tanh, so a map that shifts the zero point distorts every feature
  the frozen head relies on.  The head stays frozen at random init.
* ``TeacherTask`` -- fit a known matrix of exact rank t with a
  rank-constrained update; the Frobenius gap to the best rank-r
  approximation is then computable in closed form.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .adapters import Adapter, FrozenLinear, adapter_forward, delta_weight
from .engine import (
    Tensor,
    map_unary,
    scale,
    softmax_cross_entropy,
    sub,
    sum_all,
    transpose,
)
from .activations import tanh
from .rng import SplitMix64

_TANH = tanh()


@dataclass(frozen=True)
class BlobsTask:
    """C Gaussian clusters around seeded unit-norm centers scaled by spread."""

    classes: int = 4
    n_per_class: int = 40
    dim: int = 16
    spread: float = 6.0
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("blobs task needs at least 2 classes")
        if self.n_per_class < 1 or self.dim < 1:
            raise ValueError("blobs task needs positive n_per_class and dim")

    def describe(self) -> dict:
        return {
            "kind": "blobs",
            "classes": self.classes,
            "n_per_class": self.n_per_class,
            "dim": self.dim,
            "spread": self.spread,
            "seed": self.seed,
        }


def gen_blobs(task: BlobsTask) -> tuple[np.ndarray, np.ndarray]:
    """Columns-as-samples dataset: X is (dim, N), y is (N,) int labels.

    Unit noise around each center, so classes separate cleanly once
    spread >= 4.  Regeneration from the same seed is bit-identical.
    """
    rng = SplitMix64(task.seed)
    n_total = task.classes * task.n_per_class
    x = np.empty((task.dim, n_total), dtype=np.float64)
    y = np.empty(n_total, dtype=np.int64)
    col = 0
    for c in range(task.classes):
        center = rng.normal_vector(task.dim)
        norm = np.sqrt(np.sum(center * center))
        center = center / norm * task.spread
        for _ in range(task.n_per_class):
            x[:, col] = center + rng.normal_vector(task.dim)
            y[col] = c
            col += 1
    return x, y


def dataset_hash(x: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha256(x.tobytes())
    h.update(y.tobytes())
    return h.hexdigest()


def export_blobs_csv(task: BlobsTask, path) -> None:
    """Dump the generated dataset for inspection: label, then coordinates."""
    import csv

    x, y = gen_blobs(task)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"x{i}" for i in range(task.dim)])
        for col in range(y.shape[0]):
            writer.writerow([int(y[col])] + [float(v) for v in x[:, col]])


@dataclass
class ToyClassifier:
    """Frozen feature layer (adapted, then tanh) feeding a frozen head."""

    feature: FrozenLinear
    head: FrozenLinear

    @property
    def hidden(self) -> int:
        return self.feature.d_out

    @property
    def n_in(self) -> int:
        return self.feature.d_in

    @property
    def n_classes(self) -> int:
        return self.head.d_out

    def logits(self, adapter: Adapter, x: Tensor) -> Tensor:
        h = map_unary(adapter_forward(self.feature, adapter, x), _TANH)
        return self.head.forward(h)

    def loss(self, adapter: Adapter, x: Tensor, labels: np.ndarray) -> Tensor:
        return softmax_cross_entropy(transpose(self.logits(adapter, x)), labels)

    def accuracy(self, adapter: Adapter, x: np.ndarray, labels: np.ndarray) -> float:
        logits = self.logits(adapter, Tensor(x)).data
        return float(np.mean(np.argmax(logits, axis=0) == labels))

    def frozen_hash(self) -> str:
        h = hashlib.sha256(self.feature.content_hash().encode())
        h.update(self.head.content_hash().encode())
        return h.hexdigest()

    def describe(self) -> dict:
        return {"hidden": self.hidden, "n_in": self.n_in, "n_classes": self.n_classes}


def build_toy_classifier(n_in: int, hidden: int, n_classes: int, seed: int) -> ToyClassifier:
    """Both layers seeded Gaussian with 1/sqrt(fan_in) std, then frozen."""
    rng = SplitMix64(seed)
    w1 = rng.normal_matrix(hidden, n_in, std=1.0 / np.sqrt(n_in))
    w2 = rng.normal_matrix(n_classes, hidden, std=1.0 / np.sqrt(hidden))
    return ToyClassifier(
        feature=FrozenLinear(Tensor(w1)),
        head=FrozenLinear(Tensor(w2)),
    )


@dataclass(frozen=True)
class TeacherTask:
    """Target W (d x k) of exact rank t, built from seeded Gaussian factors."""

    d: int = 32
    k: int = 32
    target_rank: int = 16
    seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not (1 <= self.target_rank <= min(self.d, self.k)):
            raise ValueError(
                f"target rank {self.target_rank} must lie in [1, min({self.d}, {self.k})]"
            )

    def target(self) -> np.ndarray:
        if "w" not in self._cache:
            rng = SplitMix64(self.seed)
            p = rng.normal_matrix(self.d, self.target_rank)
            q = rng.normal_matrix(self.target_rank, self.k)
            # 1/sqrt(t) keeps entry variance ~1 regardless of target rank.
            self._cache["w"] = (p @ q) / np.sqrt(self.target_rank)
        return self._cache["w"]

    def target_hash(self) -> str:
        return hashlib.sha256(self.target().tobytes()).hexdigest()

    def describe(self) -> dict:
        return {
            "kind": "teacher",
            "d": self.d,
            "k": self.k,
            "target_rank": self.target_rank,
            "seed": self.seed,
        }


def teacher_loss(adapter: Adapter, task: TeacherTask) -> Tensor:
    """Mean squared Frobenius gap ||delta - W_target||_F^2 / (d * k)."""
    target = task.target()
    delta = delta_weight(adapter)
    if delta.shape != target.shape:
        raise ValueError(
            f"adapter update shape {delta.shape} does not match target {target.shape}"
        )
    diff = sub(delta, Tensor(target))
    return scale(sum_all(diff * diff), 1.0 / (task.d * task.k))


def eckart_young_floor(task: TeacherTask, rank: int, singular_values: np.ndarray) -> float:
    """Best achievable teacher loss for any rank-``rank`` update: the
    discarded squared singular values of the target, normalised by d * k."""
    tail = singular_values[rank:]
    return float(np.sum(tail * tail) / (task.d * task.k))
