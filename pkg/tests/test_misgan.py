import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from misgan_lab import autodiff as ad
from misgan_lab.masking import sample_dropout_masks
from misgan_lab.misgan import (
    IncompleteDataset,
    MisganModel,
    MisganTrainer,
    TrainConfig,
    TrainingError,
    loss_data,
    loss_mask,
    sample_data,
    sample_masks,
    train,
)
from misgan_lab.nn import Layer, Network
from misgan_lab.rng import Streams


def linear(weight, bias=0.0, activation="identity"):
    w = np.atleast_2d(np.asarray(weight, dtype=float))
    b = np.broadcast_to(np.asarray(bias, dtype=float), (w.shape[1],)).copy()
    return Network([Layer(ad.parameter(w), ad.parameter(b), activation)])


def constant(in_dim, value):
    value = np.asarray(value, dtype=float)
    return linear(np.zeros((in_dim, len(value))), value)


def small_problem(seed=0, n=3, count=256, rate=0.3):
    r = np.random.default_rng(seed)
    x = r.standard_normal((count, n))
    m = sample_dropout_masks(r, n, rate, count)
    return IncompleteDataset(np.where(m == 1, x, 0.0), m)


def small_model(n=3, seed=0, hidden=8, **kw):
    return MisganModel.build(n, np.random.default_rng(seed), hidden=hidden, noise_dim=4, **kw)


# losses


def test_loss_mask_constant_critic_is_zero():
    D = constant(2, [0.7])
    G = constant(3, [0.2, 0.9])
    assert loss_mask(D, G, np.array([[1.0, 0.0], [0.0, 0.0]]), np.zeros((5, 3))).item() == 0.0


def test_loss_mask_sum_critic_example():
    D = linear([[1.0], [1.0]])
    G = constant(1, [1.0, 1.0])
    assert loss_mask(D, G, np.array([[1.0, 0.0]]), np.zeros((1, 1))).item() == -1.0


def test_loss_mask_equal_batches_is_zero():
    r = np.random.default_rng(1)
    D = Network.mlp([2, 6, 1], r)
    G = constant(1, [0.0, 1.0])
    assert loss_mask(D, G, np.array([[0.0, 1.0]] * 4), np.zeros((4, 1))).item() == 0.0


def test_loss_mask_empty_batch():
    with pytest.raises(ValueError):
        loss_mask(constant(2, [0.0]), constant(1, [0.0, 0.0]), np.zeros((0, 2)), np.zeros((0, 1)))


def test_loss_data_constant_critic_is_zero():
    r = np.random.default_rng(2)
    D = constant(2, [3.0])
    out = loss_data(D, Network.mlp([2, 2], r), constant(2, [0.5, 0.5]), r.random((4, 2)), np.ones((4, 2)),
                    r.standard_normal((4, 2)), r.standard_normal((4, 2)))
    assert out.item() == 0.0


def test_loss_data_generator_reproduces_batch():
    x = np.array([[0.3, -1.0]])
    m = np.array([[1.0, 0.0]])
    D = Network.mlp([2, 5, 1], np.random.default_rng(3))
    out = loss_data(D, constant(1, x[0]), constant(1, m[0]), x, m, np.zeros((1, 1)), np.zeros((1, 1)))
    assert out.item() == 0.0


def test_loss_data_sum_critic_example():
    D = linear([[1.0], [1.0]])
    out = loss_data(D, constant(1, [0.5, 0.5]), constant(1, [1.0, 1.0]), np.array([[1.0, 1.0]]),
                    np.array([[1.0, 0.0]]), np.zeros((1, 1)), np.zeros((1, 1)), tau=0.0)
    assert out.item() == 0.0


def test_loss_data_dimension_mismatch():
    with pytest.raises(ValueError):
        loss_data(constant(2, [0.0]), constant(1, [0.5, 0.5, 0.5]), constant(1, [1.0, 1.0, 1.0]),
                  np.ones((1, 2)), np.ones((1, 2)), np.zeros((1, 1)), np.zeros((1, 1)))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_batch_order_does_not_change_losses(seed):
    r = np.random.default_rng(seed)
    model = small_model(seed=seed % 1000)
    x = r.standard_normal((16, 3))
    m = (r.random((16, 3)) < 0.5).astype(float)
    z, eps = r.standard_normal((16, 4)), r.standard_normal((16, 4))
    perm = r.permutation(16)
    a = loss_data(model.D_x, model.G_x, model.G_m, x, m, z, eps).item()
    b = loss_data(model.D_x, model.G_x, model.G_m, x[perm], m[perm], z[perm], eps[perm]).item()
    assert a == pytest.approx(b, rel=1e-12, abs=1e-15)
    a = loss_mask(model.D_m, model.G_m, m, eps).item()
    b = loss_mask(model.D_m, model.G_m, m[perm], eps[perm]).item()
    assert a == pytest.approx(b, rel=1e-12, abs=1e-15)


# mask generator outputs


SATURATION = 0.66 * np.log(9.0)  # sigma_lam(x) = 0.9 exactly here, about 1.45016


@settings(max_examples=300, deadline=None)
@given(x=st.floats(SATURATION + 1e-9, 60.0), sign=st.sampled_from([-1.0, 1.0]))
def test_temperature_sigmoid_saturates_beyond_threshold(x, sign):
    s = ad.temperature_sigmoid(ad.tensor(sign * x), 0.66).item()
    assert abs(s - round(s)) < 0.1


def test_rounded_saturation_bound_has_a_thin_gap():
    # 1.45 is the threshold rounded down; just above it the output is still 0.1 from {0, 1}
    assert 1.45 < SATURATION < 1.4502
    s = ad.temperature_sigmoid(ad.tensor(1.4501), 0.66).item()
    assert 0.1 < 1 - s < 0.1001


def test_sampling_shapes_and_ranges():
    model = small_model()
    r = np.random.default_rng(0)
    assert sample_data(model.G_x, r, 0).shape == (0, 3)
    m = sample_masks(model.G_m, r, 500)
    assert m.shape == (500, 3)
    assert ((m > 0) & (m < 1)).all()


def test_model_validation():
    with pytest.raises(ValueError):
        small_model(lam=1.2)
    ok = small_model()
    with pytest.raises(ValueError):
        MisganModel(ok.G_x, ok.G_m, Network.mlp([4, 1], np.random.default_rng(0)), ok.D_m)


# training


def _cfg(**kw):
    base = dict(batch_size=16, n_critic=2, learning_rate=1e-3, clip_c=0.05, total_steps=6, log_every=2, seed=5)
    base.update(kw)
    return TrainConfig(**base)


def test_same_seed_same_log():
    logs = []
    for _ in range(2):
        _, log = train(small_model(), small_problem(), _cfg())
        logs.append(repr(log.rows))
    assert logs[0] == logs[1]
    assert len(eval(logs[0])) == 3


def test_zero_learning_rate_changes_nothing():
    model = small_model()
    before = {k: net.checksum() for k, net in model.networks().items()}
    # a clip box wider than every initial weight isolates the optimizer step
    train(model, small_problem(), _cfg(learning_rate=0.0, clip_c=10.0))
    assert {k: net.checksum() for k, net in model.networks().items()} == before


def test_critics_stay_in_clip_box():
    model = small_model()
    train(model, small_problem(), _cfg(clip_c=0.03))
    for net in (model.D_x, model.D_m):
        for p in net.parameters():
            assert np.abs(p.data).max() <= 0.03


def test_alpha_zero_leaves_only_mask_loss_in_mask_gradient():
    model = small_model(alpha=0.0)
    trainer = MisganTrainer(model, small_problem(), _cfg())
    r = np.random.default_rng(4)
    x, m = trainer._batch()
    z, eps = r.standard_normal((16, 4)), r.standard_normal((16, 4))
    grads, _ = trainer.generator_grads(x, m, z, eps)
    ad.backward(loss_mask(model.D_m, model.G_m, m, eps))
    for g, p in zip(grads["G_m"], model.G_m.parameters()):
        np.testing.assert_array_equal(g, p.grad)


def test_ambient_mode_never_touches_mask_critic():
    model = small_model()
    before = model.D_m.checksum()
    _, log = train(model, small_problem(), _cfg(ambientgan_mode=True))
    assert model.D_m.checksum() == before
    assert set(log.column("L_m")) == {""}


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_reports_step():
    data = small_problem()
    data.x[data.m == 1] = np.inf
    with pytest.raises(TrainingError, match="step 1"):
        train(small_model(), data, _cfg())


@pytest.mark.parametrize("bad", [dict(n_critic=0), dict(batch_size=0), dict(clip_c=0.0), dict(learning_rate=-1.0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        _cfg(**bad)


def test_dataset_and_model_dimensions_must_agree():
    with pytest.raises(ValueError):
        MisganTrainer(small_model(n=4), small_problem(n=3), _cfg())


@pytest.mark.slow
def test_mask_generator_learns_observed_rate():
    streams = Streams(1)
    n = 4
    x = streams["data"].standard_normal((4000, n))
    m = sample_dropout_masks(streams["mask"], n, 0.9, 4000)
    data = IncompleteDataset(np.where(m == 1, x, 0.0), m)
    model = MisganModel.build(n, streams["init"], hidden=32)
    cfg = TrainConfig(batch_size=64, learning_rate=3e-4, clip_c=0.1, total_steps=1000, seed=1, log_every=1000)
    MisganTrainer(model, data, cfg, streams=streams).run()
    observed = (sample_masks(model.G_m, streams["eval"], 10_000) > 0.5).mean()
    assert abs(observed - 0.1) <= 0.05
