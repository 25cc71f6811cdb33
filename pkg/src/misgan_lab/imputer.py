"""Adversarially trained imputer that keeps observed entries intact.

The completed vector is ``x*m + G(x*m + w*(1-m)) * (1-m)`` where ``G`` is a
dense network and ``w`` is noise, so more missing coordinates mean more
injected noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .masking import MaskMechanism, apply_mask
from .misgan import (
    IncompleteDataset,
    MetricLog,
    MisganModel,
    MisganTrainer,
    Monitor,
    TrainConfig,
    _finite,
    critic_gap,
    soft_mask,
)
from .nn import Network, RMSProp, clip_parameters
from .rng import Streams

DEFAULT_BETA = 0.1


@dataclass
class ImputerModel:
    G_i_hat: Network
    D_i: Network
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        if self.G_i_hat.in_dim != self.G_i_hat.out_dim:
            raise ValueError("imputer network must map R^n to R^n")
        if self.D_i.in_dim != self.n or self.D_i.out_dim != 1:
            raise ValueError("imputer critic must map R^n to a scalar")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")

    @classmethod
    def build(
        cls,
        n: int,
        rng: np.random.Generator,
        hidden: int = 500,
        critic_hidden: int = 64,
        output_activation: str = "sigmoid",
        beta: float = DEFAULT_BETA,
    ) -> "ImputerModel":
        """Three dense layers for the imputer network (two hidden layers)."""
        return cls(
            G_i_hat=Network.mlp([n, hidden, hidden, n], rng, output_activation=output_activation),
            D_i=Network.mlp([n, critic_hidden, critic_hidden, 1], rng),
            beta=beta,
        )

    @property
    def n(self) -> int:
        return self.G_i_hat.in_dim

    def networks(self) -> dict[str, Network]:
        return {"G_i": self.G_i_hat, "D_i": self.D_i}


def imputer_input(x, m, omega) -> np.ndarray:
    """Observed entries of ``x``, noise ``omega`` elsewhere."""
    x, m, omega = (np.asarray(a, dtype=np.float64) for a in (x, m, omega))
    if not x.shape == m.shape == omega.shape:
        raise ValueError(f"impute: shapes differ {x.shape}, {m.shape}, {omega.shape}")
    return np.where(m == 1, x, omega)


def impute(imp: ImputerModel, x, m, omega) -> np.ndarray:
    """Complete ``x``; observed coordinates are copied through untouched."""
    inp = imputer_input(x, m, omega)
    single = inp.ndim == 1
    with ad.no_grad():
        out = imp.G_i_hat(inp[None, :] if single else inp).data
    if single:
        out = out[0]
    return np.where(np.asarray(m) == 1, np.asarray(x, dtype=np.float64), out)


def impute_graph(G_i_hat: Network, x, m, omega) -> Tensor:
    """Differentiable form of :func:`impute` for batches of binary masks."""
    m = np.asarray(m, dtype=np.float64)
    filled = G_i_hat(imputer_input(x, m, omega))
    return ad.add(np.where(m == 1, x, 0.0), ad.mul(filled, 1.0 - m))


def loss_imputer(D_i: Network, G_i_hat: Network, G_x: Network, z, x, m, omega) -> Tensor:
    """``E[D_i(G_x(z))] - E[D_i(G_i(x, m, omega))]``."""
    if len(z) == 0 or len(x) == 0:
        raise ValueError("loss_imputer: empty batch")
    return critic_gap(D_i, G_x(z), impute_graph(G_i_hat, x, m, omega))


@dataclass
class JointConfig(TrainConfig):
    # Drops G_m, D_m and L_x: G_x and the imputer chase each other through L_i alone.
    without_mask_model: bool = False


class JointTrainer(MisganTrainer):
    """MisGAN plus imputer: D_i joins the critics, ``beta * L_i`` joins the G_x objective."""

    columns = ["step", "L_m", "L_x", "L_i"]

    def __init__(
        self,
        model: MisganModel,
        imputer: ImputerModel,
        dataset: IncompleteDataset,
        cfg: TrainConfig,
        monitor: Monitor | None = None,
        streams: Streams | None = None,
    ):
        if imputer.n != model.n:
            raise ValueError("imputer and MisGAN dimensions differ")
        self.imputer = imputer
        super().__init__(model, dataset, cfg, monitor, streams)

    def _extra_networks(self) -> dict[str, Network]:
        return self.imputer.networks()

    @property
    def _no_masks(self) -> bool:
        return getattr(self.cfg, "without_mask_model", False)

    def trained_networks(self) -> list[str]:
        if self._no_masks:
            return ["G_x", "G_i", "D_i"]
        return super().trained_networks()

    def _omega(self) -> np.ndarray:
        return self.streams["omega"].standard_normal((self.cfg.batch_size, self.model.n))

    def critic_step(self) -> dict:
        if self._no_masks:
            out = {}
            self._last_real = self._batch()
        else:
            out = super().critic_step()
        x, m = self._last_real
        z, omega = self._noise("z"), self._omega()
        with ad.no_grad():
            generated = self.model.G_x(z).data
            imputed = impute_graph(self.imputer.G_i_hat, x, m, omega).data
        L_i = critic_gap(self.imputer.D_i, generated, imputed)
        self._ascend("D_i", L_i)
        out["L_i"] = L_i.item()
        return out

    def generator_grads(self, x, m, z, eps, omega=None) -> tuple[dict[str, list[np.ndarray]], dict]:
        """Adds ``beta * L_i`` to the G_x gradient and the G_i gradient of ``L_i``."""
        omega = self._omega() if omega is None else omega
        model, imp = self.model, self.imputer
        gx = model.G_x(z)
        L_i = critic_gap(imp.D_i, gx, impute_graph(imp.G_i_hat, x, m, omega))
        values = {"L_i": L_i.item()}
        if self._no_masks:
            ad.backward(L_i)
            return {
                "G_x": [p.grad for p in model.G_x.parameters()],
                "G_i": [p.grad for p in imp.G_i_hat.parameters()],
            }, values

        gm = model.G_m(eps)
        L_x = critic_gap(model.D_x, apply_mask(x, m, model.tau), soft_mask(gx, gm, model.tau))
        values["L_x"] = L_x.item()
        grads = {}
        ad.backward(ad.add(L_x, ad.scale(L_i, imp.beta)))
        grads["G_x"] = [p.grad for p in model.G_x.parameters()]
        ad.backward(L_i)
        grads["G_i"] = [p.grad for p in imp.G_i_hat.parameters()]
        obj_m = ad.scale(L_x, model.alpha)
        if not self.cfg.ambientgan_mode:
            L_m = critic_gap(model.D_m, m, gm)
            values["L_m"] = L_m.item()
            obj_m = ad.add(L_m, obj_m)
        ad.backward(obj_m)
        grads["G_m"] = [p.grad for p in model.G_m.parameters()]
        return grads, values


def train_joint(
    model: MisganModel,
    imputer: ImputerModel,
    dataset: IncompleteDataset,
    cfg: TrainConfig,
    monitor: Monitor | None = None,
) -> tuple[MisganModel, ImputerModel, MetricLog]:
    trainer = JointTrainer(model, imputer, dataset, cfg, monitor)
    log = trainer.run()
    return model, imputer, log


class StandaloneTrainer:
    """Imputer trained against a frozen data generator and a chosen mask law.

    Both critic terms share one ``z`` batch: the imputer completes masked
    copies of the very samples the critic sees as "real".
    """

    columns = ["step", "L_i"]

    def __init__(
        self,
        imputer: ImputerModel,
        G_x: Network,
        mask_source: MaskMechanism,
        cfg: TrainConfig,
        streams: Streams | None = None,
    ):
        if G_x.out_dim != imputer.n:
            raise ValueError("generator and imputer dimensions differ")
        self.imputer = imputer
        self.G_x = G_x
        self.mask_source = mask_source
        self.cfg = cfg
        self.streams = streams or Streams(cfg.seed)
        self.step_count = 0
        self.nets = imputer.networks()
        self.opt = {name: RMSProp(net.parameters(), lr=cfg.learning_rate) for name, net in self.nets.items()}
        self.log = MetricLog(list(self.columns))

    def _sides(self):
        bs, n = self.cfg.batch_size, self.imputer.n
        z = self.streams["z"].standard_normal((bs, self.G_x.in_dim))
        m = self.mask_source.sample(self.streams["mask"], bs, n)
        omega = self.streams["omega"].standard_normal((bs, n))
        with ad.no_grad():
            x = self.G_x(z).data
        return x, m, omega

    def step(self) -> dict:
        D_i, G_i = self.imputer.D_i, self.imputer.G_i_hat
        for _ in range(self.cfg.n_critic):
            x, m, omega = self._sides()
            with ad.no_grad():
                filled = impute_graph(G_i, x, m, omega).data
            L_i = critic_gap(D_i, x, filled)
            ad.backward(L_i)
            self.opt["D_i"].step(sign=+1.0)
            clip_parameters(D_i, self.cfg.clip_c)
        x, m, omega = self._sides()
        L_i = critic_gap(D_i, x, impute_graph(G_i, x, m, omega))
        ad.backward(L_i)
        self.opt["G_i"].step(sign=-1.0)
        self.step_count += 1
        return {"L_i": _finite(L_i.item(), "L_i", self.step_count)}

    def run(self, steps: int | None = None) -> MetricLog:
        steps = self.cfg.total_steps - self.step_count if steps is None else steps
        for _ in range(steps):
            values = self.step()
            if self.step_count % self.cfg.log_every == 0 or self.step_count == self.cfg.total_steps:
                self.log.append({"step": self.step_count, **values})
        return self.log

    def optimizer_state(self) -> dict[str, list[np.ndarray]]:
        return {name: opt.state() for name, opt in self.opt.items()}

    def load_optimizer_state(self, state) -> None:
        for name, arrays in state.items():
            self.opt[name].load_state(arrays)


def train_standalone(
    imputer: ImputerModel, G_x: Network, mask_source: MaskMechanism, cfg: TrainConfig
) -> tuple[ImputerModel, MetricLog]:
    """Only the imputer and its critic are updated; ``G_x`` stays frozen."""
    trainer = StandaloneTrainer(imputer, G_x, mask_source, cfg)
    log = trainer.run()
    return imputer, log
