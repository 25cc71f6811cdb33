"""``misgan-lab`` command line: one task per invocation, driven by a JSON config.

Relative paths inside a config are resolved against the config file's
directory.  Outputs go to ``output_dir``; existing files are only replaced with
``--force``, and every output is computed in memory before anything is written.

Exit codes: 0 success, 1 usage or config error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import identifiability as ident
from .evaluation import FeatureMap, MetricError, MetricReport, frechet_distance, rmse_imputation, tv_distance
from .imputer import ImputerModel, JointConfig, JointTrainer, StandaloneTrainer, impute
from .masking import MaskError, MaskMechanism
from .misgan import IncompleteDataset, MisganModel, MisganTrainer, TrainConfig, TrainingError, sample_data
from .monitors import RingMonitor, dropout_mask_law
from .rng import Streams
from .storage import (
    Checkpoint,
    DatasetFile,
    StorageError,
    load_checkpoint,
    metrics_csv,
    read_dataset,
    write_bytes_atomic,
)
from .toys import BARS_SIDE, assignment_histogram, bars_tv, ring_centers, sample_toy

TASKS = ("identify", "train", "impute-train", "impute-run", "eval", "make-data")

COMMON_KEYS = {"task", "seed", "output_dir"}
MECHANISM_KEYS = {"mechanism", "k", "rate", "image_shape"}
MODEL_DEFAULTS = {
    "alpha": 0.2,
    "lam": 0.66,
    "tau": 0.0,
    "clip_c": 0.01,
    "n_critic": 5,
    "learning_rate": 5e-5,
    "batch_size": 64,
    "total_steps": 1000,
    "noise_dim": 16,
    "hidden": 64,
    "log_every": 100,
    "ambientgan_mode": False,
    "data_activation": "identity",
}
IMPUTER_DEFAULTS = {
    "beta": 0.1,
    "imputer_hidden": 500,
    "critic_hidden": 64,
    "imputer_activation": "sigmoid",
    "without_mask_model": False,
}
SCHEMAS = {
    "identify": {"alphabet", "n", "q", "p_star", "tau_list", "augmented"},
    "make-data": {"toy", "source", "count"} | MECHANISM_KEYS,
    "train": set(MODEL_DEFAULTS) | {"dataset", "monitor", "rate", "resume"},
    "impute-train": set(MODEL_DEFAULTS) | set(IMPUTER_DEFAULTS) | {"dataset"} | MECHANISM_KEYS,
    "impute-run": {"checkpoint", "dataset"},
    "eval": {"samples_a", "samples_b", "checkpoint", "count", "ground_truth", "feature_map", "feature_dim",
             "feature_seed", "toy"},
}
HELDOUT_KEYS = {"heldout", "ground_truth"}
OUTPUTS = {
    "identify": ["report.json"],
    "make-data": ["data.bin", "heldout.bin"],
    "train": ["metrics.csv", "checkpoint.json"],
    "impute-train": ["metrics.csv", "checkpoint.json"],
    "impute-run": ["completed.bin"],
    "eval": ["report.json"],
}


class UsageError(Exception):
    pass


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="misgan-lab", description="Identifiability checks, MisGAN training and imputation.")
    p.add_argument("task", choices=TASKS)
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--frozen-gx", default=None, help="impute-train: train only the imputer against this checkpoint's G_x")
    return p


# --------------------------------------------------------------------------
# config handling


@dataclass
class Context:
    task: str
    cfg: dict
    base: Path
    seed: int
    frozen_gx: Path | None

    def path(self, key: str) -> Path:
        value = self.cfg.get(key)
        if not isinstance(value, str):
            raise ConfigError(f"{key!r} must be a file path")
        p = Path(value)
        p = p if p.is_absolute() else self.base / p
        if not p.is_file():
            raise ConfigError(f"{key}: file not found: {p}")
        return p

    def get(self, key, default=None):
        return self.cfg.get(key, default)


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def load_config(args: argparse.Namespace) -> Context:
    path = Path(args.config)
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    _require(isinstance(cfg, dict), "config must be a JSON object")
    task = args.task
    _require(cfg.get("task", task) == task, f"config task {cfg.get('task')!r} does not match command {task!r}")
    allowed = COMMON_KEYS | SCHEMAS[task]
    if task in ("train", "impute-train"):
        leaked = HELDOUT_KEYS & set(cfg)
        _require(not leaked, f"training configs may not reference held-out data: {sorted(leaked)}")
    unknown = sorted(set(cfg) - allowed)
    _require(not unknown, f"unknown config keys for {task}: {unknown}")
    seed = cfg.get("seed", 0) if args.seed is None else args.seed
    _require(_is_int(seed) and 0 <= seed < 2**64, f"seed must be a 64-bit unsigned integer, got {seed!r}")
    _require(isinstance(cfg.get("output_dir"), str), "'output_dir' is required")
    if args.frozen_gx is not None and task != "impute-train":
        raise UsageError("--frozen-gx only applies to impute-train")
    frozen = None
    if args.frozen_gx is not None:
        frozen = Path(args.frozen_gx)
        _require(frozen.is_file(), f"--frozen-gx: file not found: {frozen}")
    cfg = dict(cfg, seed=seed)
    return Context(task, cfg, path.resolve().parent, seed, frozen)


def _model_params(ctx: Context, defaults: dict) -> dict:
    out = {k: ctx.get(k, v) for k, v in defaults.items()}
    for k in ("n_critic", "batch_size", "total_steps", "noise_dim", "hidden", "log_every",
              "imputer_hidden", "critic_hidden"):
        if k in out:
            _require(_is_int(out[k]) and out[k] >= 1, f"{k} must be a positive integer")
    for k in ("alpha", "lam", "tau", "clip_c", "learning_rate", "beta"):
        if k in out:
            _require(_is_num(out[k]), f"{k} must be a number")
    _require(out["alpha"] >= 0, "alpha must be >= 0")
    _require(0 < out["lam"] < 1, "lam must lie in (0, 1)")
    _require(out["clip_c"] > 0, "clip_c must be > 0")
    _require(out["learning_rate"] >= 0, "learning_rate must be >= 0")
    _require(out.get("beta", 0) >= 0, "beta must be >= 0")
    for k in ("ambientgan_mode", "without_mask_model"):
        if k in out:
            _require(isinstance(out[k], bool), f"{k} must be true or false")
    _require(out["data_activation"] in ("identity", "sigmoid"), "data_activation must be identity or sigmoid")
    if "imputer_activation" in out:
        _require(out["imputer_activation"] in ("identity", "sigmoid"), "imputer_activation must be identity or sigmoid")
    return out


def _mechanism(ctx: Context, n: int | None = None) -> MaskMechanism:
    kind = ctx.get("mechanism")
    _require(isinstance(kind, str), "'mechanism' is required")
    try:
        return MaskMechanism(kind, k=ctx.get("k"), rate=ctx.get("rate"), image_shape=ctx.get("image_shape"), n=n)
    except MaskError as exc:
        raise ConfigError(f"mechanism: {exc}") from None


def _train_config(p: dict, seed: int, cls=TrainConfig, **extra):
    return cls(
        batch_size=p["batch_size"],
        n_critic=p["n_critic"],
        learning_rate=float(p["learning_rate"]),
        clip_c=float(p["clip_c"]),
        total_steps=p["total_steps"],
        seed=seed,
        ambientgan_mode=p["ambientgan_mode"],
        log_every=p["log_every"],
        **extra,
    )


# --------------------------------------------------------------------------
# tasks


def _identify(ctx: Context) -> dict[str, bytes]:
    values, n, q = ctx.get("alphabet"), ctx.get("n"), ctx.get("q")
    _require(isinstance(values, list) and len(values) >= 1, "'alphabet' must be a list of values")
    _require(_is_int(n) and n >= 1, "'n' must be a positive integer")
    _require(isinstance(q, list), "'q' must be a list of 2^n probabilities")
    try:
        alphabet = ident.Alphabet(tuple(values), n)
    except ident.IdentifiabilityError as exc:
        raise ConfigError(f"alphabet: {exc}") from None
    taus = ctx.get("tau_list", list(values))
    _require(isinstance(taus, list) and taus, "'tau_list' must be a non-empty list")
    p_star = ctx.get("p_star")
    if p_star is not None:
        _require(isinstance(p_star, list) and len(p_star) == alphabet.size, f"'p_star' must have {alphabet.size} entries")
        p_star = np.asarray(p_star, dtype=np.float64)

    mats = {repr(t): ident.build_transition(q, alphabet, t).entries for t in taus}
    nulls = {k: ident.null_space(T).shape[1] for k, T in mats.items()}
    keys = list(mats)
    invariant = all(ident.same_nullspace(mats[keys[0]], mats[k]) for k in keys[1:])
    report = {"n": n, "alphabet": values, "nullspace_dim": nulls, "tau_invariance": invariant}
    if p_star is not None:
        uniq, witnesses = {}, {}
        for k, T in mats.items():
            verdict = ident.unique_nonneg_solution(T, T @ p_star)
            uniq[k] = "Unique" if verdict.unique else "NonUnique"
            witnesses[k] = None if verdict.witnesses is None else [w.tolist() for w in verdict.witnesses]
        report["uniqueness"] = uniq
        report["witnesses"] = witnesses
        if ctx.get("augmented", False):
            verdict = ident.augmented_uniqueness(q, alphabet, p_star)
            report["augmented_uniqueness"] = "Unique" if verdict.unique else "NonUnique"
    return {"report.json": (json.dumps(report, sort_keys=True, indent=1) + "\n").encode()}


def _make_data(ctx: Context) -> dict[str, bytes]:
    streams = Streams(ctx.seed)
    toy, source = ctx.get("toy"), ctx.get("source")
    _require((toy is None) != (source is None), "give exactly one of 'toy' or 'source'")
    image_shape = None
    if toy is not None:
        count = ctx.get("count")
        _require(_is_int(count) and count >= 1, "'count' must be a positive integer for toy data")
        try:
            x = sample_toy(toy, streams["data"], count)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if toy == "bars":
            image_shape = (BARS_SIDE, BARS_SIDE)
    else:
        complete = read_dataset(ctx.path("source"))
        x, image_shape = complete.x, complete.image_shape
    mech = _mechanism(ctx, x.shape[1])
    if mech.kind != "dropout":
        _require(mech.dim() == x.shape[1], f"mechanism image {mech.image_shape} does not match n={x.shape[1]}")
        image_shape = mech.image_shape
    m = mech.sample(streams["mask"], len(x), x.shape[1])
    return {
        "data.bin": DatasetFile(x, m, image_shape, role="incomplete").to_bytes(),
        "heldout.bin": DatasetFile(x, None, image_shape, role="heldout").to_bytes(),
    }


def _training_data(ctx: Context) -> IncompleteDataset:
    data = read_dataset(ctx.path("dataset"))
    if data.role == "heldout":
        raise ConfigError("dataset is a held-out ground-truth file; training never reads those")
    if data.m is None:
        raise ConfigError("training data must carry masks")
    return IncompleteDataset(data.x, data.m)


def _model(ctx: Context, p: dict, n: int, streams: Streams) -> MisganModel:
    return MisganModel.build(
        n, streams["init"], hidden=p["hidden"], noise_dim=p["noise_dim"], tau=float(p["tau"]),
        lam=float(p["lam"]), alpha=float(p["alpha"]), data_activation=p["data_activation"],
    )


def _monitor(ctx: Context, p: dict, n: int):
    kind = ctx.get("monitor")
    if kind is None:
        return None
    _require(kind == "ring", f"unknown monitor {kind!r}; only 'ring' is built in")
    _require(n == 2, "the ring monitor needs 2-D data")
    rate = ctx.get("rate")
    _require(_is_num(rate) and 0 <= rate <= 1, "the ring monitor needs the dropout 'rate' of the data")
    return RingMonitor(dropout_mask_law(2, rate), float(p["tau"]))


_RESUME_FREE = {"total_steps", "resume", "output_dir", "task"}


def _restore(trainer, ckpt: Checkpoint, cfg: dict) -> None:
    mine = {k: v for k, v in cfg.items() if k not in _RESUME_FREE}
    theirs = {k: v for k, v in ckpt.config.items() if k not in _RESUME_FREE}
    if mine != theirs:
        diff = sorted(k for k in set(mine) | set(theirs) if mine.get(k) != theirs.get(k))
        raise ConfigError(f"resume: config differs from the checkpoint's in {diff}")
    for name, net in trainer.nets.items():
        saved = ckpt.networks[name]
        for p, q in zip(net.parameters(), saved.parameters()):
            p.data[...] = q.data
    trainer.load_optimizer_state(ckpt.optimizer)
    trainer.streams.load_state(ckpt.rng)
    trainer.step_count = ckpt.step
    trainer.log.columns = list(ckpt.log["columns"])
    trainer.log.rows = [list(r) for r in ckpt.log["rows"]]


def _finish(kind: str, trainer, hyper: dict, cfg: dict) -> dict[str, bytes]:
    ckpt = Checkpoint(
        kind=kind,
        networks=trainer.nets,
        hyper=hyper,
        optimizer=trainer.optimizer_state(),
        config=cfg,
        rng=trainer.streams.state(),
        step=trainer.step_count,
        log={"columns": trainer.log.columns, "rows": trainer.log.rows},
    )
    return {
        "metrics.csv": metrics_csv(trainer.log.columns, trainer.log.rows),
        "checkpoint.json": ckpt.to_json().encode("utf-8"),
    }


def _train(ctx: Context) -> dict[str, bytes]:
    p = _model_params(ctx, MODEL_DEFAULTS)
    data = _training_data(ctx)
    streams = Streams(ctx.seed)
    model = _model(ctx, p, data.n, streams)
    trainer = MisganTrainer(model, data, _train_config(p, ctx.seed), _monitor(ctx, p, data.n), streams)
    if ctx.get("resume") is not None:
        ckpt = load_checkpoint(ctx.path("resume"))
        _require(ckpt.kind == "misgan", f"resume: expected a misgan checkpoint, got {ckpt.kind!r}")
        _restore(trainer, ckpt, ctx.cfg)
    trainer.run()
    hyper = {"tau": model.tau, "lam": model.lam, "alpha": model.alpha}
    return _finish("misgan", trainer, hyper, ctx.cfg)


def _impute_train(ctx: Context) -> dict[str, bytes]:
    p = _model_params(ctx, {**MODEL_DEFAULTS, **IMPUTER_DEFAULTS})
    streams = Streams(ctx.seed)
    if ctx.frozen_gx is not None:
        frozen = load_checkpoint(ctx.frozen_gx)
        _require("G_x" in frozen.networks, "--frozen-gx checkpoint has no G_x network")
        G_x = frozen.networks["G_x"]
        mech = _mechanism(ctx, G_x.out_dim)
        imp = ImputerModel.build(G_x.out_dim, streams["init"], p["imputer_hidden"], p["critic_hidden"],
                                 p["imputer_activation"], float(p["beta"]))
        trainer = StandaloneTrainer(imp, G_x, mech, _train_config(p, ctx.seed), streams)
        trainer.run()
        return _finish("imputer", trainer, {"beta": imp.beta}, ctx.cfg)

    data = _training_data(ctx)
    model = _model(ctx, p, data.n, streams)
    imp = ImputerModel.build(data.n, streams["init"], p["imputer_hidden"], p["critic_hidden"],
                             p["imputer_activation"], float(p["beta"]))
    cfg = _train_config(p, ctx.seed, JointConfig, without_mask_model=p["without_mask_model"])
    trainer = JointTrainer(model, imp, data, cfg, None, streams)
    trainer.run()
    hyper = {"tau": model.tau, "lam": model.lam, "alpha": model.alpha, "beta": imp.beta}
    return _finish("joint", trainer, hyper, ctx.cfg)


def _impute_run(ctx: Context) -> dict[str, bytes]:
    ckpt = load_checkpoint(ctx.path("checkpoint"))
    _require(ckpt.kind in ("joint", "imputer"), f"checkpoint kind {ckpt.kind!r} holds no imputer")
    data = read_dataset(ctx.path("dataset"))
    _require(data.m is not None, "dataset must carry masks")
    G_i, D_i = ckpt.networks["G_i"], ckpt.networks["D_i"]
    _require(G_i.in_dim == data.n, f"imputer dimension {G_i.in_dim} != data dimension {data.n}")
    imp = ImputerModel(G_i, D_i, ckpt.hyper.get("beta", 0.1))
    omega = Streams(ctx.seed)["omega"].standard_normal(data.x.shape)
    out = impute(imp, data.x, data.m, omega)
    return {"completed.bin": DatasetFile(out, data.m, data.image_shape, role="completed").to_bytes()}


def _eval(ctx: Context) -> dict[str, bytes]:
    a = read_dataset(ctx.path("samples_a"))
    have_b, have_ckpt = ctx.get("samples_b") is not None, ctx.get("checkpoint") is not None
    _require(have_b != have_ckpt, "give exactly one of 'samples_b' or 'checkpoint'")
    if have_b:
        b = read_dataset(ctx.path("samples_b")).x
    else:
        ckpt = load_checkpoint(ctx.path("checkpoint"))
        _require("G_x" in ckpt.networks, "checkpoint has no G_x network")
        count = ctx.get("count", len(a.x))
        _require(_is_int(count) and count >= 2, "'count' must be an integer >= 2")
        b = sample_data(ckpt.networks["G_x"], Streams(ctx.seed)["eval"], count)
    fmap = FeatureMap(
        ctx.get("feature_map", "identity"), ctx.get("feature_seed", FeatureMap.seed), ctx.get("feature_dim", FeatureMap.out_dim)
    )
    rmse = None
    if ctx.get("ground_truth") is not None:
        truth = read_dataset(ctx.path("ground_truth"))
        _require(a.m is not None, "RMSE needs masks on samples_a")
        rmse = rmse_imputation(a.x, truth.x, a.m)
    tv = None
    toy = ctx.get("toy")
    if toy == "ring":
        centers = ring_centers()
        tv = tv_distance(assignment_histogram(a.x, centers), np.full(len(centers), 1 / len(centers)))
    elif toy == "bars":
        tv = bars_tv(a.x)
    elif toy is not None:
        raise ConfigError(f"unknown toy {toy!r}")
    report = MetricReport(frechet_distance(a.x, b, fmap), rmse, tv, {"a": len(a.x), "b": len(b)})
    return {"report.json": (json.dumps(report.to_dict(), sort_keys=True, indent=1) + "\n").encode()}


HANDLERS = {
    "identify": _identify,
    "make-data": _make_data,
    "train": _train,
    "impute-train": _impute_train,
    "impute-run": _impute_run,
    "eval": _eval,
}

RUNTIME_ERRORS = (
    StorageError,
    TrainingError,
    ident.IdentifiabilityError,
    MaskError,
    MetricError,
    ValueError,
    OSError,
)


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        ctx = load_config(args)
        out_dir = Path(ctx.cfg["output_dir"])
        out_dir = out_dir if out_dir.is_absolute() else ctx.base / out_dir
        targets = [out_dir / name for name in OUTPUTS[ctx.task]]
        clash = [str(t) for t in targets if t.exists()]
        if clash and not args.force:
            raise ConfigError(f"refusing to overwrite {clash}; pass --force")
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        outputs = HANDLERS[ctx.task](ctx)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, payload in outputs.items():
            write_bytes_atomic(out_dir / name, payload)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RUNTIME_ERRORS as exc:
        print(f"error: {ctx.task} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
