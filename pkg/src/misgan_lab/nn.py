"""Multilayer perceptrons, weight clipping and the RMSProp optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

ACTIVATIONS = ("relu", "identity", "sigmoid", "temperature_sigmoid")


@dataclass
class Layer:
    weight: Tensor  # (fan_in, fan_out)
    bias: Tensor  # (fan_out,)
    activation: str = "relu"
    lam: float | None = None

    def __call__(self, x: Tensor) -> Tensor:
        h = ad.add(ad.matmul(x, self.weight), self.bias)
        if self.activation == "relu":
            return ad.relu(h)
        if self.activation == "identity":
            return h
        if self.activation == "sigmoid":
            return ad.sigmoid(h)
        return ad.temperature_sigmoid(h, self.lam)


class Network:
    """Dense feed-forward network; rows of the input are examples."""

    def __init__(self, layers: Sequence[Layer]):
        layers = list(layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for i, layer in enumerate(layers):
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {layer.activation!r}")
            if layer.activation == "temperature_sigmoid" and not (
                layer.lam is not None and 0.0 < layer.lam < 1.0
            ):
                raise ValueError(f"layer {i}: temperature must lie in (0, 1), got {layer.lam}")
            if layer.weight.shape[1] != layer.bias.shape[0]:
                raise ValueError(f"layer {i}: weight {layer.weight.shape} vs bias {layer.bias.shape}")
            if i and layers[i - 1].weight.shape[1] != layer.weight.shape[0]:
                raise ValueError(
                    f"layer {i}: input dim {layer.weight.shape[0]} does not match "
                    f"previous output dim {layers[i - 1].weight.shape[1]}"
                )
        self.layers = layers

    @classmethod
    def mlp(
        cls,
        sizes: Sequence[int],
        rng: np.random.Generator,
        hidden_activation: str = "relu",
        output_activation: str = "identity",
        lam: float | None = None,
    ) -> "Network":
        """Glorot-uniform weights, zero biases."""
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            a = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-a, a, size=(fan_in, fan_out))
            last = i == len(sizes) - 2
            act = output_activation if last else hidden_activation
            layers.append(
                Layer(
                    ad.parameter(w),
                    ad.parameter(np.zeros(fan_out)),
                    act,
                    lam if act == "temperature_sigmoid" else None,
                )
            )
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[1]

    def __call__(self, x) -> Tensor:
        h = ad.tensor(x)
        for layer in self.layers:
            h = layer(h)
        return h

    def parameters(self) -> list[Tensor]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def copy(self) -> "Network":
        return Network(
            Layer(ad.parameter(l.weight.data.copy()), ad.parameter(l.bias.data.copy()), l.activation, l.lam)
            for l in self.layers
        )

    def checksum(self) -> bytes:
        return b"".join(p.data.tobytes() for p in self.parameters())


def clip_parameters(net: Network, c: float) -> Network:
    """Clamp every weight and bias into [-c, c] in place."""
    if not c > 0:
        raise ValueError(f"clip constant must be positive, got {c}")
    for p in net.parameters():
        np.clip(p.data, -c, c, out=p.data)
    return net


@dataclass
class RMSProp:
    """RMSProp without momentum.

    ``step(sign=-1)`` descends the last backpropagated objective, ``sign=+1``
    ascends it (critic updates).
    """

    params: list[Tensor]
    lr: float = 5e-5
    decay: float = 0.99
    eps: float = 1e-8
    square_avg: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.square_avg:
            self.square_avg = [np.zeros_like(p.data) for p in self.params]

    def step(self, sign: float = -1.0) -> None:
        for p, v in zip(self.params, self.square_avg):
            g = p.grad
            if g is None:
                continue
            v *= self.decay
            v += (1.0 - self.decay) * g * g
            p.data += sign * self.lr * g / (np.sqrt(v) + self.eps)

    def state(self) -> list[np.ndarray]:
        return self.square_avg

    def load_state(self, arrays: Sequence[np.ndarray]) -> None:
        if len(arrays) != len(self.params):
            raise ValueError("optimizer state does not match parameter count")
        for v, a in zip(self.square_avg, arrays):
            v[...] = a
