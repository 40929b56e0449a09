"""Elementwise update maps with closed-form values and first derivatives.

The family mirrors the ablation lineup: identity, sigmoid, relu, tanh,
swish (with sharpness beta) and the oscillatory sine map

    sinter(x) = A * x * sin(omega * x) + x,

computed here as x * (1 + A * sin(omega * x)), which is algebraically the
same but saves a multiply and rounds symmetrically around zero.  All maps
except sigmoid fix zero, which is why a zero-initialised adapter perturbs
nothing at init and a sigmoid adapter perturbs everything.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("identity", "sigmoid", "relu", "tanh", "swish", "sinter")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument only; stable for any magnitude.
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


@dataclass(frozen=True)
class ActivationSpec:
    """Tagged activation: a kind plus the scalar parameters it needs.

    swish needs beta > 0; sinter needs omega > 0 and any real amplitude
    (amplitude 0 degenerates to the identity).  Instances are immutable and
    safe to share across threads.
    """

    kind: str
    beta: float | None = None
    amplitude: float | None = None
    omega: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "swish":
            if self.beta is None or self.beta <= 0:
                raise ValueError("swish requires beta > 0")
        elif self.beta is not None:
            raise ValueError(f"{self.kind} takes no beta parameter")
        if self.kind == "sinter":
            if self.omega is None or self.omega <= 0:
                raise ValueError("sinter requires omega > 0")
            if self.amplitude is None:
                raise ValueError("sinter requires an amplitude")
        else:
            if self.amplitude is not None or self.omega is not None:
                raise ValueError(f"{self.kind} takes no amplitude/omega parameters")

    @property
    def fixes_zero(self) -> bool:
        """True when value(0) == 0 (every kind except sigmoid)."""
        return self.kind != "sigmoid"

    @property
    def label(self) -> str:
        if self.kind == "swish":
            return f"swish-{self.beta:g}"
        if self.kind == "sinter":
            return f"sinter(A={self.amplitude:g},omega={self.omega:g})"
        return self.kind

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "identity":
            return x.copy()
        if self.kind == "sigmoid":
            return _sigmoid(x)
        if self.kind == "relu":
            return np.maximum(x, 0.0)
        if self.kind == "tanh":
            return np.tanh(x)
        if self.kind == "swish":
            return x * _sigmoid(self.beta * x)
        return x * (1.0 + self.amplitude * np.sin(self.omega * x))

    def deriv(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "identity":
            return np.ones_like(x)
        if self.kind == "sigmoid":
            s = _sigmoid(x)
            return s * (1.0 - s)
        if self.kind == "relu":
            # Subgradient at 0 fixed to 0 for deterministic gradients.
            return np.where(x > 0, 1.0, 0.0)
        if self.kind == "tanh":
            t = np.tanh(x)
            return 1.0 - t * t
        if self.kind == "swish":
            s = _sigmoid(self.beta * x)
            return s + self.beta * x * s * (1.0 - s)
        wx = self.omega * x
        return 1.0 + self.amplitude * np.sin(wx) + self.amplitude * self.omega * x * np.cos(wx)

    def to_config(self) -> dict:
        cfg: dict = {"kind": self.kind}
        if self.kind == "swish":
            cfg["beta"] = self.beta
        if self.kind == "sinter":
            cfg["amplitude"] = self.amplitude
            cfg["omega"] = self.omega
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "ActivationSpec":
        extra = set(cfg) - {"kind", "beta", "amplitude", "omega"}
        if extra:
            raise ValueError(f"unknown activation keys: {sorted(extra)}")
        if "kind" not in cfg:
            raise ValueError("activation config needs a 'kind'")
        return cls(
            kind=cfg["kind"],
            beta=cfg.get("beta"),
            amplitude=cfg.get("amplitude"),
            omega=cfg.get("omega"),
        )


def identity() -> ActivationSpec:
    return ActivationSpec("identity")


def sigmoid() -> ActivationSpec:
    return ActivationSpec("sigmoid")


def relu() -> ActivationSpec:
    return ActivationSpec("relu")


def tanh() -> ActivationSpec:
    return ActivationSpec("tanh")


def swish(beta: float = 1.0) -> ActivationSpec:
    return ActivationSpec("swish", beta=beta)


def sinter(amplitude: float = 5e-5, omega: float = 1e4) -> ActivationSpec:
    """Defaults are the tuned operating point (A = 5e-5, omega = 1e4)."""
    return ActivationSpec("sinter", amplitude=amplitude, omega=omega)


def ablation_family(sinter_amplitude: float = 5e-5, sinter_omega: float = 1e4):
    """The seven ablation rows: identity, sigmoid, relu, tanh, swish-1,
    swish-25, sinter -- in table order."""
    return [
        identity(),
        sigmoid(),
        relu(),
        tanh(),
        swish(1.0),
        swish(25.0),
        sinter(sinter_amplitude, sinter_omega),
    ]
