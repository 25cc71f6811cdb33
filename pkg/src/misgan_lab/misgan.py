"""Mask and data GAN pair trained on incomplete data (Wasserstein losses).

Critics are kept bounded by weight clipping after every update.  Generated
masks stay soft (temperature sigmoid outputs in (0, 1)) during training and
are thresholded at 0.5 only when reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .masking import apply_mask
from .nn import Network, RMSProp, clip_parameters
from .rng import Streams

DEFAULT_ALPHA = 0.2
DEFAULT_TEMPERATURE = 0.66
DEFAULT_TAU = 0.0
DEFAULT_NOISE_DIM = 16


class TrainingError(RuntimeError):
    pass


@dataclass
class IncompleteDataset:
    """Rows of ``x`` with masks ``m``; unobserved entries of ``x`` carry no information."""

    x: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.m = np.asarray(self.m, dtype=np.float64)
        if self.x.ndim != 2 or self.x.shape != self.m.shape:
            raise ValueError(f"data {self.x.shape} and masks {self.m.shape} must be equal 2-D shapes")
        if not np.isin(self.m, (0.0, 1.0)).all():
            raise ValueError("masks must be exactly 0 or 1")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def n(self) -> int:
        return self.x.shape[1]


@dataclass
class MisganModel:
    G_x: Network
    G_m: Network
    D_x: Network
    D_m: Network
    tau: float = DEFAULT_TAU
    lam: float = DEFAULT_TEMPERATURE
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"temperature must lie in (0, 1), got {self.lam}")
        if self.G_x.in_dim != self.G_m.in_dim:
            raise ValueError("G_x and G_m must share the noise dimension")
        n = self.G_x.out_dim
        if self.G_m.out_dim != n or self.D_x.in_dim != n or self.D_m.in_dim != n:
            raise ValueError("generator outputs and critic inputs must share the data dimension")
        if self.D_x.out_dim != 1 or self.D_m.out_dim != 1:
            raise ValueError("critics must have scalar output")

    @classmethod
    def build(
        cls,
        n: int,
        rng: np.random.Generator,
        hidden: int = 64,
        noise_dim: int = DEFAULT_NOISE_DIM,
        tau: float = DEFAULT_TAU,
        lam: float = DEFAULT_TEMPERATURE,
        alpha: float = DEFAULT_ALPHA,
        data_activation: str = "identity",
    ) -> "MisganModel":
        return cls(
            G_x=Network.mlp([noise_dim, hidden, hidden, n], rng, output_activation=data_activation),
            G_m=Network.mlp(
                [noise_dim, hidden, hidden, n], rng, output_activation="temperature_sigmoid", lam=lam
            ),
            D_x=Network.mlp([n, hidden, hidden, 1], rng),
            D_m=Network.mlp([n, hidden, hidden, 1], rng),
            tau=tau,
            lam=lam,
            alpha=alpha,
        )

    @property
    def n(self) -> int:
        return self.G_x.out_dim

    @property
    def noise_dim(self) -> int:
        return self.G_x.in_dim

    def networks(self) -> dict[str, Network]:
        return {"G_x": self.G_x, "G_m": self.G_m, "D_x": self.D_x, "D_m": self.D_m}


@dataclass
class TrainConfig:
    batch_size: int = 64
    n_critic: int = 5
    learning_rate: float = 5e-5
    clip_c: float = 0.01
    total_steps: int = 1000
    seed: int = 0
    ambientgan_mode: bool = False
    log_every: int = 100

    def __post_init__(self):
        for name in ("batch_size", "n_critic", "total_steps", "log_every"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate < 0 or not self.clip_c > 0:
            raise ValueError("learning_rate must be >= 0 and clip_c > 0")


def soft_mask(x: Tensor, m: Tensor, tau: float) -> Tensor:
    """``x * m + tau * (1 - m)`` for a relaxed mask."""
    out = ad.mul(x, m)
    if tau != 0.0:
        out = ad.add(out, ad.scale(ad.sub(1.0, m), tau))
    return out


def _check_batch(name: str, *arrays) -> None:
    for a in arrays:
        if len(a) == 0:
            raise ValueError(f"{name}: empty batch")


def critic_gap(D: Network, real, fake) -> Tensor:
    """``E[D(real)] - E[D(fake)]`` over batch rows."""
    return ad.sub(ad.mean(D(real)), ad.mean(D(fake)))


def loss_mask(D_m: Network, G_m: Network, real_masks, eps) -> Tensor:
    _check_batch("loss_mask", real_masks, eps)
    return critic_gap(D_m, real_masks, G_m(eps))


def loss_data(D_x: Network, G_x: Network, G_m: Network, x, m, z, eps, tau: float = 0.0) -> Tensor:
    _check_batch("loss_data", x, m, z, eps)
    real = apply_mask(x, m, tau)
    fake = soft_mask(G_x(z), G_m(eps), tau)
    if fake.shape[1] != real.shape[1]:
        raise ValueError(f"loss_data: generated dim {fake.shape[1]} != data dim {real.shape[1]}")
    return critic_gap(D_x, real, fake)


def sample_data(G_x: Network, rng: np.random.Generator, count: int) -> np.ndarray:
    if count == 0:
        return np.zeros((0, G_x.out_dim))
    with ad.no_grad():
        return G_x(rng.standard_normal((count, G_x.in_dim))).data


def sample_masks(G_m: Network, rng: np.random.Generator, count: int) -> np.ndarray:
    """Soft masks in (0, 1); threshold at 0.5 for binary patterns."""
    return sample_data(G_m, rng, count)


def _finite(value: float, what: str, step: int) -> float:
    if not math.isfinite(value):
        raise TrainingError(f"non-finite {what} at step {step}")
    return value


@dataclass
class MetricLog:
    columns: list[str]
    rows: list[list] = field(default_factory=list)

    def append(self, row: dict) -> None:
        self.rows.append([row.get(c, "") for c in self.columns])

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


Monitor = Callable[["MisganModel", np.random.Generator], dict]


class MisganTrainer:
    """Alternates ``n_critic`` critic updates with one generator update."""

    columns = ["step", "L_m", "L_x"]

    def __init__(
        self,
        model: MisganModel,
        dataset: IncompleteDataset,
        cfg: TrainConfig,
        monitor: Monitor | None = None,
        streams: Streams | None = None,
    ):
        if len(dataset) == 0:
            raise ValueError("dataset is empty")
        if dataset.n != model.n:
            raise ValueError(f"dataset dim {dataset.n} != model dim {model.n}")
        self.model = model
        self.data = dataset
        self.cfg = cfg
        self.monitor = monitor
        self.streams = streams or Streams(cfg.seed)
        self.step_count = 0
        self.nets = {**model.networks(), **self._extra_networks()}
        self.opt = {
            name: RMSProp(net.parameters(), lr=cfg.learning_rate)
            for name, net in self.nets.items()
            if name in self.trained_networks()
        }
        self.log = MetricLog(list(self.columns))
        self._monitor_cols: list[str] | None = None

    def _extra_networks(self) -> dict[str, Network]:
        return {}

    def trained_networks(self) -> list[str]:
        names = list(self.nets)
        if self.cfg.ambientgan_mode:
            names.remove("D_m")
        return names

    def _batch(self) -> tuple[np.ndarray, np.ndarray]:
        idx = self.streams["data"].integers(0, len(self.data), size=self.cfg.batch_size)
        return self.data.x[idx], self.data.m[idx]

    def _noise(self, stream: str) -> np.ndarray:
        return self.streams[stream].standard_normal((self.cfg.batch_size, self.model.noise_dim))

    def _ascend(self, name: str, objective: Tensor) -> None:
        ad.backward(objective)
        self.opt[name].step(sign=+1.0)
        clip_parameters(self.nets[name], self.cfg.clip_c)

    def critic_step(self) -> dict:
        model, tau = self.model, self.model.tau
        x, m = self._batch()
        z, eps = self._noise("z"), self._noise("eps")
        with ad.no_grad():
            gx = model.G_x(z)
            gm = model.G_m(eps)
            fake = soft_mask(gx, gm, tau)
        real = apply_mask(x, m, tau)
        out = {}
        L_x = critic_gap(model.D_x, real, fake)
        self._ascend("D_x", L_x)
        out["L_x"] = L_x.item()
        if not self.cfg.ambientgan_mode:
            L_m = critic_gap(model.D_m, m, gm)
            self._ascend("D_m", L_m)
            out["L_m"] = L_m.item()
        self._last_real = (x, m)
        return out

    def generator_grads(self, x, m, z, eps) -> tuple[dict[str, list[np.ndarray]], dict]:
        """Gradients of the G_x objective ``L_x`` and the G_m objective ``L_m + alpha L_x``."""
        model = self.model
        gx = model.G_x(z)
        gm = model.G_m(eps)
        L_x = critic_gap(model.D_x, apply_mask(x, m, model.tau), soft_mask(gx, gm, model.tau))
        ad.backward(L_x)
        grads = {"G_x": [p.grad for p in model.G_x.parameters()]}
        values = {"L_x": L_x.item()}
        if self.cfg.ambientgan_mode:
            obj_m = ad.scale(L_x, model.alpha)
        else:
            L_m = critic_gap(model.D_m, m, gm)
            obj_m = ad.add(L_m, ad.scale(L_x, model.alpha))
            values["L_m"] = L_m.item()
        ad.backward(obj_m)
        grads["G_m"] = [p.grad for p in model.G_m.parameters()]
        return grads, values

    def _apply(self, grads: dict[str, list[np.ndarray]]) -> None:
        for name, gs in grads.items():
            for p, g in zip(self.nets[name].parameters(), gs):
                p.grad = g
            self.opt[name].step(sign=-1.0)

    def generator_step(self) -> dict:
        x, m = self._last_real
        grads, values = self.generator_grads(x, m, self._noise("z"), self._noise("eps"))
        self._apply(grads)
        return values

    def step(self) -> dict:
        for _ in range(self.cfg.n_critic):
            critic_vals = self.critic_step()
        gen_vals = self.generator_step()
        self.step_count += 1
        for k, v in critic_vals.items():
            _finite(v, f"critic {k}", self.step_count)
        for k, v in gen_vals.items():
            _finite(v, f"generator {k}", self.step_count)
        return gen_vals

    def run(self, steps: int | None = None) -> MetricLog:
        steps = self.cfg.total_steps - self.step_count if steps is None else steps
        for _ in range(steps):
            values = self.step()
            if self.step_count % self.cfg.log_every == 0 or self.step_count == self.cfg.total_steps:
                self._record(values)
        return self.log

    def _record(self, values: dict) -> None:
        row = {"step": self.step_count, **values}
        if self.monitor is not None:
            extra = self.monitor(self.model, self.streams["eval"])
            if self._monitor_cols is None:
                self._monitor_cols = list(extra)
                for c in extra:
                    if c not in self.log.columns:
                        self.log.columns.append(c)
            row.update(extra)
        self.log.append(row)

    def optimizer_state(self) -> dict[str, list[np.ndarray]]:
        return {name: opt.state() for name, opt in self.opt.items()}

    def load_optimizer_state(self, state: dict[str, list[np.ndarray]]) -> None:
        for name, arrays in state.items():
            self.opt[name].load_state(arrays)


def train(
    model: MisganModel,
    dataset: IncompleteDataset,
    cfg: TrainConfig,
    monitor: Monitor | None = None,
) -> tuple[MisganModel, MetricLog]:
    """Train in place for ``cfg.total_steps`` generator updates."""
    trainer = MisganTrainer(model, dataset, cfg, monitor)
    log = trainer.run()
    return model, log
