import json

import numpy as np
import pytest

from misgan_lab.cli import run
from misgan_lab.storage import DatasetFile, load_checkpoint, read_dataset, write_dataset


def call(tmp_path, task, cfg, *flags, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return run([task, "--config", str(path), *flags])


def make_data(tmp_path, out="data", **kw):
    cfg = dict(toy="ring", count=300, mechanism="dropout", rate=0.5, seed=3, output_dir=out)
    cfg.update(kw)
    assert call(tmp_path, "make-data", cfg, name=f"{out}.json") == 0
    return tmp_path / out


TRAIN = dict(dataset="data/data.bin", hidden=8, noise_dim=4, batch_size=16, n_critic=2, total_steps=6,
             log_every=2, learning_rate=1e-3, clip_c=0.05, seed=1)


# identify


def test_identify_all_missing_single_coordinate(tmp_path):
    cfg = dict(alphabet=[0, 1], n=1, q=[1.0, 0.0], tau_list=[0, 1], p_star=[0.5, 0.5], output_dir="out")
    assert call(tmp_path, "identify", cfg) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert set(report["nullspace_dim"].values()) == {1}
    assert report["tau_invariance"] is True
    assert set(report["uniqueness"].values()) == {"NonUnique"}


def test_identify_full_rank(tmp_path):
    cfg = dict(alphabet=[0, 1], n=2, q=[0.1, 0.2, 0.3, 0.4], p_star=[0.25] * 4, output_dir="out")
    assert call(tmp_path, "identify", cfg) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert set(report["nullspace_dim"].values()) == {0}
    assert set(report["uniqueness"].values()) == {"Unique"}


# make-data


def test_make_data_is_seeded(tmp_path):
    a = make_data(tmp_path, "a")
    b = make_data(tmp_path, "b")
    for name in ("data.bin", "heldout.bin"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_make_data_zero_rate_observes_everything(tmp_path):
    out = make_data(tmp_path, rate=0.0)
    assert (read_dataset(out / "data.bin").m == 1).all()


def test_make_data_ninety_percent_dropout(tmp_path):
    out = make_data(tmp_path, toy="bars", count=10_000, rate=0.9)
    data = read_dataset(out / "data.bin")
    assert abs((1 - data.m.mean()) - 0.9) <= 0.01
    assert (data.x[data.m == 0] == 0).all()
    held = read_dataset(out / "heldout.bin")
    assert held.role == "heldout" and held.m is None
    assert (held.x[data.m == 1] == data.x[data.m == 1]).all()


def test_make_data_invalid_mechanism(tmp_path):
    cfg = dict(toy="ring", count=10, mechanism="dropout", rate=1.5, output_dir="out")
    assert call(tmp_path, "make-data", cfg) == 1
    assert not (tmp_path / "out").exists()


# train


def test_train_twice_gives_identical_csv(tmp_path):
    make_data(tmp_path)
    assert call(tmp_path, "train", dict(TRAIN, output_dir="r1")) == 0
    assert call(tmp_path, "train", dict(TRAIN, output_dir="r2")) == 0
    a, b = (tmp_path / "r1" / "metrics.csv").read_bytes(), (tmp_path / "r2" / "metrics.csv").read_bytes()
    assert a == b
    assert a.decode().splitlines()[0] == "step,L_m,L_x"
    assert len(a.decode().splitlines()) == 4


def test_resume_matches_uninterrupted_run(tmp_path):
    make_data(tmp_path)
    assert call(tmp_path, "train", dict(TRAIN, total_steps=8, output_dir="full")) == 0
    assert call(tmp_path, "train", dict(TRAIN, total_steps=4, output_dir="half")) == 0
    cfg = dict(TRAIN, total_steps=8, output_dir="rest", resume="half/checkpoint.json")
    assert call(tmp_path, "train", cfg) == 0
    assert (tmp_path / "full" / "metrics.csv").read_bytes() == (tmp_path / "rest" / "metrics.csv").read_bytes()
    full, rest = load_checkpoint(tmp_path / "full" / "checkpoint.json"), load_checkpoint(tmp_path / "rest" / "checkpoint.json")
    for name, net in full.networks.items():
        assert net.checksum() == rest.networks[name].checksum()


def test_resume_rejects_changed_config(tmp_path):
    make_data(tmp_path)
    assert call(tmp_path, "train", dict(TRAIN, total_steps=2, output_dir="half")) == 0
    cfg = dict(TRAIN, clip_c=0.5, output_dir="rest", resume="half/checkpoint.json")
    assert call(tmp_path, "train", cfg) == 1


def test_missing_dataset_leaves_no_outputs(tmp_path):
    assert call(tmp_path, "train", dict(TRAIN, output_dir="out")) != 0
    assert not (tmp_path / "out").exists()


def test_existing_outputs_need_force(tmp_path):
    make_data(tmp_path)
    cfg = dict(TRAIN, output_dir="out")
    assert call(tmp_path, "train", cfg) == 0
    before = (tmp_path / "out" / "checkpoint.json").read_bytes()
    assert call(tmp_path, "train", cfg) == 1
    assert (tmp_path / "out" / "checkpoint.json").read_bytes() == before
    assert call(tmp_path, "train", cfg, "--force") == 0


@pytest.mark.parametrize(
    "change",
    [dict(learnin_rate=0.1), dict(heldout="data/heldout.bin"), dict(ground_truth="x"), dict(seed=-1), dict(lam=1.5)],
)
def test_bad_train_configs_exit_one(tmp_path, change):
    make_data(tmp_path)
    assert call(tmp_path, "train", dict(TRAIN, output_dir="out", **change)) == 1
    assert not (tmp_path / "out").exists()


def test_training_refuses_heldout_file(tmp_path):
    make_data(tmp_path)
    assert call(tmp_path, "train", dict(TRAIN, dataset="data/heldout.bin", output_dir="out")) == 1


def test_usage_errors_exit_one(tmp_path):
    assert run(["fly", "--config", "x.json"]) == 1
    assert run(["train"]) == 1
    assert call(tmp_path, "train", dict(TRAIN, output_dir="o"), "--frozen-gx", "nope.json") == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_runtime_error_exits_two(tmp_path):
    write_dataset(tmp_path / "bad.bin", DatasetFile(np.full((20, 2), np.inf), np.ones((20, 2))))
    assert call(tmp_path, "train", dict(TRAIN, dataset="bad.bin", output_dir="out")) == 2
    assert not (tmp_path / "out" / "metrics.csv").exists()


def test_seed_flag_overrides_config(tmp_path):
    a = make_data(tmp_path, "a")
    cfg = dict(toy="ring", count=300, mechanism="dropout", rate=0.5, seed=99, output_dir="b")
    assert call(tmp_path, "make-data", cfg, "--seed", "3") == 0
    assert (a / "data.bin").read_bytes() == (tmp_path / "b" / "data.bin").read_bytes()


# impute-train, impute-run, eval


IMPUTE = dict(TRAIN, imputer_hidden=8, critic_hidden=8, imputer_activation="identity")


def test_joint_impute_pipeline(tmp_path):
    make_data(tmp_path)
    assert call(tmp_path, "impute-train", dict(IMPUTE, output_dir="imp")) == 0
    assert (tmp_path / "imp" / "metrics.csv").read_text().splitlines()[0] == "step,L_m,L_x,L_i"
    cfg = dict(checkpoint="imp/checkpoint.json", dataset="data/data.bin", output_dir="done")
    assert call(tmp_path, "impute-run", cfg, name="run.json") == 0
    data, done = read_dataset(tmp_path / "data" / "data.bin"), read_dataset(tmp_path / "done" / "completed.bin")
    assert done.role == "completed"
    assert done.x[data.m == 1].tobytes() == data.x[data.m == 1].tobytes()
    cfg = dict(samples_a="done/completed.bin", samples_b="data/heldout.bin", ground_truth="data/heldout.bin",
               toy="ring", output_dir="ev")
    assert call(tmp_path, "eval", cfg, name="ev.json") == 0
    report = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert report["fid"] >= 0 and report["rmse"] >= 0 and 0 <= report["tv"] <= 1


def test_standalone_impute_train(tmp_path):
    make_data(tmp_path)
    assert call(tmp_path, "train", dict(TRAIN, output_dir="gan")) == 0
    gx = str(tmp_path / "gan" / "checkpoint.json")
    cfg = dict(IMPUTE, mechanism="dropout", rate=0.5, output_dir="imp")
    del cfg["dataset"]
    assert call(tmp_path, "impute-train", cfg, "--frozen-gx", gx) == 0
    ckpt = load_checkpoint(tmp_path / "imp" / "checkpoint.json")
    assert ckpt.kind == "imputer" and set(ckpt.networks) == {"G_i", "D_i"}


def test_eval_against_checkpoint_samples(tmp_path):
    make_data(tmp_path)
    assert call(tmp_path, "train", dict(TRAIN, output_dir="gan")) == 0
    cfg = dict(samples_a="data/heldout.bin", checkpoint="gan/checkpoint.json", count=100, output_dir="ev")
    assert call(tmp_path, "eval", cfg, name="ev.json") == 0
    report = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert report["sample_counts"] == {"a": 300, "b": 100}
    assert report["rmse"] is None
