"""Frozen linear layers plus attachable low-rank adapters.

A ``LoRAAdapter`` keeps the classic update ``delta = (alpha / r) * B @ A``
with B zero-initialised and A Gaussian, so the update vanishes at init.
``LoRANAdapter`` wraps the same two factors and applies an elementwise map
to the product; with a zero-fixing map the init-identity property carries
over unchanged, and the trainable parameter set is identical.

Because the map acts entrywise on B @ A, the update matrix is materialised
on every forward pass; at desk scale (d, k at most a few hundred) that is
the honest cost of the nonlinearity, not a shortcut.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .activations import ActivationSpec, identity
from .engine import Tensor, add, add_bias, map_unary, matmul, scale
from .rng import SplitMix64


class AdapterError(ValueError):
    """Invalid adapter construction (rank out of range, bad dims)."""


@dataclass
class FrozenLinear:
    """d x k weight (and optional length-d bias) that never receives grads."""

    w0: Tensor
    bias: Tensor | None = None

    def __post_init__(self):
        if self.w0.data.ndim != 2:
            raise AdapterError(f"frozen weight must be rank 2, got {self.w0.shape}")
        if self.w0.requires_grad or (self.bias is not None and self.bias.requires_grad):
            raise AdapterError("frozen layer tensors must not require grad")
        if self.bias is not None and self.bias.shape != (self.w0.shape[0],):
            raise AdapterError(
                f"bias shape {self.bias.shape} does not match output dim {self.w0.shape[0]}"
            )

    @property
    def d_out(self) -> int:
        return self.w0.shape[0]

    @property
    def d_in(self) -> int:
        return self.w0.shape[1]

    def forward(self, x: Tensor) -> Tensor:
        out = matmul(self.w0, x)
        if self.bias is not None:
            out = add_bias(out, self.bias)
        return out

    def content_hash(self) -> str:
        h = hashlib.sha256(self.w0.data.tobytes())
        if self.bias is not None:
            h.update(self.bias.data.tobytes())
        return h.hexdigest()


@dataclass
class LoRAAdapter:
    """Trainable factors b (d x r) and a (r x k) with scale alpha / r."""

    b: Tensor
    a: Tensor
    rank: int
    alpha: float

    @property
    def scale(self) -> float:
        return self.alpha / self.rank

    @property
    def shape(self) -> tuple[int, int]:
        return (self.b.shape[0], self.a.shape[1])

    def describe(self) -> dict:
        return {"kind": "lora", "rank": self.rank, "alpha": self.alpha}


@dataclass
class LoRANAdapter:
    """LoRA factors plus an elementwise map over the low-rank product.

    ``scale_inside`` picks where alpha / r lands: True applies the map to
    the scaled product f(s * B @ A); False scales the mapped product
    s * f(B @ A).  With the identity map both placements reproduce plain
    LoRA bit for bit.
    """

    inner: LoRAAdapter
    activation: ActivationSpec
    scale_inside: bool = True

    @property
    def rank(self) -> int:
        return self.inner.rank

    @property
    def alpha(self) -> float:
        return self.inner.alpha

    @property
    def shape(self) -> tuple[int, int]:
        return self.inner.shape

    def describe(self) -> dict:
        return {
            "kind": "loran",
            "rank": self.rank,
            "alpha": self.alpha,
            "scale_inside": self.scale_inside,
            "activation": self.activation.to_config(),
        }


@dataclass
class DenseUpdate:
    """Unconstrained d x k trainable update; the full fine-tuning analog."""

    w: Tensor

    @property
    def shape(self) -> tuple[int, int]:
        return self.w.shape

    def describe(self) -> dict:
        return {"kind": "dense"}


Adapter = LoRAAdapter | LoRANAdapter | DenseUpdate


def init_adapter(d: int, k: int, rank: int, alpha: float, seed: int) -> LoRAAdapter:
    """B = 0 exactly; A ~ N(0, 1/rank) from the portable generator."""
    if rank < 1 or rank > min(d, k):
        raise AdapterError(f"rank {rank} must lie in [1, min({d}, {k})]")
    rng = SplitMix64(seed)
    b = Tensor(np.zeros((d, rank)), requires_grad=True)
    a = Tensor(rng.normal_matrix(rank, k, std=1.0 / np.sqrt(rank)), requires_grad=True)
    return LoRAAdapter(b=b, a=a, rank=rank, alpha=alpha)


def init_loran(
    d: int,
    k: int,
    rank: int,
    alpha: float,
    seed: int,
    activation: ActivationSpec,
    scale_inside: bool = True,
) -> LoRANAdapter:
    return LoRANAdapter(
        inner=init_adapter(d, k, rank, alpha, seed),
        activation=activation,
        scale_inside=scale_inside,
    )


def init_dense(d: int, k: int) -> DenseUpdate:
    return DenseUpdate(w=Tensor(np.zeros((d, k)), requires_grad=True))


def delta_weight(adapter: Adapter) -> Tensor:
    """Materialise the d x k update matrix (on the active tape, if any)."""
    if isinstance(adapter, DenseUpdate):
        return adapter.w
    if isinstance(adapter, LoRAAdapter):
        return scale(matmul(adapter.b, adapter.a), adapter.scale)
    product = matmul(adapter.inner.b, adapter.inner.a)
    if adapter.scale_inside:
        return map_unary(scale(product, adapter.inner.scale), adapter.activation)
    return scale(map_unary(product, adapter.activation), adapter.inner.scale)


def adapter_forward(layer: FrozenLinear, adapter: Adapter, x: Tensor) -> Tensor:
    """W0 x (+ bias) + delta x, fully on the tape so grads reach b and a."""
    d, k = adapter.shape
    if (d, k) != (layer.d_out, layer.d_in):
        raise AdapterError(
            f"adapter shape {(d, k)} does not match layer {(layer.d_out, layer.d_in)}"
        )
    return add(layer.forward(x), matmul(delta_weight(adapter), x))


def trainable_parameters(adapter: Adapter) -> list[Tensor]:
    if isinstance(adapter, DenseUpdate):
        return [adapter.w]
    if isinstance(adapter, LoRAAdapter):
        return [adapter.b, adapter.a]
    return [adapter.inner.b, adapter.inner.a]


def parameter_count(adapter: Adapter) -> int:
    return sum(p.data.size for p in trainable_parameters(adapter))


def as_identity_baseline(adapter: LoRANAdapter) -> LoRANAdapter:
    """Same factors and scale placement, identity map: the LoRA baseline."""
    return LoRANAdapter(
        inner=adapter.inner, activation=identity(), scale_inside=adapter.scale_inside
    )
