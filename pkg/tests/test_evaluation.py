import numpy as np
import pytest
from scipy.linalg import sqrtm

from misgan_lab.evaluation import (
    FeatureMap,
    MetricError,
    MetricReport,
    als_factorize,
    baseline_impute,
    frechet_distance,
    pattern_histograms,
    rmse_imputation,
    tv_distance,
)


def reference_fid(a, b):
    # textbook form with a general matrix square root, no ridge
    a, b = np.atleast_2d(a.T).T, np.atleast_2d(b.T).T
    ca, cb = np.atleast_2d(np.cov(a, rowvar=False)), np.atleast_2d(np.cov(b, rowvar=False))
    cross = np.real(sqrtm(ca @ cb))
    return float(((a.mean(0) - b.mean(0)) ** 2).sum() + np.trace(ca + cb - 2 * cross))


# Frechet distance


def test_fid_identical_sets_is_zero():
    a = np.random.default_rng(0).standard_normal((500, 6))
    assert frechet_distance(a, a) <= 1e-8
    assert frechet_distance(a, a, FeatureMap("random_linear", out_dim=4)) <= 1e-8


def test_fid_symmetric():
    r = np.random.default_rng(1)
    a, b = r.standard_normal((300, 4)), 1.5 * r.standard_normal((400, 4)) + 0.3
    assert frechet_distance(a, b) == pytest.approx(frechet_distance(b, a), rel=1e-10)


def test_fid_matches_reference_formula():
    r = np.random.default_rng(2)
    for _ in range(20):
        n = int(r.integers(1, 6))
        a = r.standard_normal((200, n)) @ r.standard_normal((n, n))
        b = r.standard_normal((250, n)) @ r.standard_normal((n, n)) + r.standard_normal(n)
        assert frechet_distance(a, b) == pytest.approx(reference_fid(a, b), rel=1e-4, abs=1e-4)


def test_fid_equal_covariances_gives_mean_gap():
    r = np.random.default_rng(3)
    mu_a, mu_b = np.array([0.0, 1.0, -1.0]), np.array([1.5, 0.0, 0.5])
    a = r.standard_normal((10_000, 3)) + mu_a
    b = r.standard_normal((10_000, 3)) + mu_b
    want = ((mu_a - mu_b) ** 2).sum()
    assert abs(frechet_distance(a, b) - want) <= 0.05 * want


def test_fid_univariate_scale_example():
    r = np.random.default_rng(4)
    a, b = r.standard_normal(100_000), 2.0 * r.standard_normal(100_000)
    want = (0.0 - 0.0) ** 2 + (1.0 - 2.0) ** 2
    assert abs(frechet_distance(a, b) - want) <= 0.05 * want


def test_fid_needs_two_samples():
    with pytest.raises(MetricError):
        frechet_distance(np.zeros((1, 2)), np.zeros((5, 2)))


def test_feature_map_is_seeded_and_bounded():
    x = np.random.default_rng(5).standard_normal((10, 12))
    f = FeatureMap("random_linear")
    np.testing.assert_array_equal(f(x), FeatureMap("random_linear")(x))
    assert f(x).shape == (10, 8)
    assert not np.array_equal(f(x), FeatureMap("random_linear", seed=1)(x))
    with pytest.raises(MetricError):
        FeatureMap("random_linear", out_dim=20)(x)


# RMSE


def test_rmse_examples():
    truth = np.array([[0.2, 0.4], [0.6, 0.8]])
    assert rmse_imputation(truth, truth, [[0, 1], [1, 0]]) == 0.0
    assert rmse_imputation([[1.0, 2.5]], [[1.0, 2.0]], [[1, 0]]) == 0.5
    assert rmse_imputation(np.zeros((3, 4)), np.ones((3, 4)), np.zeros((3, 4))) == 1.0


def test_rmse_ignores_observed_coordinates():
    assert rmse_imputation([[100.0, 3.0]], [[0.0, 1.0]], [[1, 0]]) == 2.0


def test_rmse_needs_missing_coordinates():
    with pytest.raises(MetricError):
        rmse_imputation(np.zeros((2, 2)), np.zeros((2, 2)), np.ones((2, 2)))


# total variation


def test_tv_examples():
    assert tv_distance([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert tv_distance([1, 0, 0], [0, 0, 1]) == 1.0
    assert tv_distance([0.5, 0.5], [1.0, 0.0]) == 0.5


def test_tv_rejects_unnormalized():
    with pytest.raises(MetricError):
        tv_distance([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(MetricError):
        tv_distance([0.5, 0.5], [1.0])


def test_tv_triangle_inequality():
    r = np.random.default_rng(6)
    for _ in range(500):
        k = int(r.integers(2, 10))
        a, b, c = r.dirichlet(np.ones(k), size=3)
        assert tv_distance(a, c) <= tv_distance(a, b) + tv_distance(b, c) + 1e-12


def test_pattern_histograms_share_support():
    ha, hb, support = pattern_histograms([[1, 0], [1, 0], [0, 0]], [[1, 1]])
    assert len(support) == 3
    assert tv_distance(ha, hb) == 1.0


# baselines


def _incomplete(seed=7, shape=(40, 6), rate=0.3):
    r = np.random.default_rng(seed)
    x = r.standard_normal(shape)
    m = (r.random(shape) >= rate).astype(float)
    return x, m


@pytest.mark.parametrize("kind", ["zero", "mean", "mf"])
def test_baselines_preserve_observed_bits(kind):
    x, m = _incomplete()
    kw = dict(rank=2, iters=5) if kind == "mf" else {}
    out = baseline_impute(x, m, kind, **kw)
    assert out[m == 1].tobytes() == x[m == 1].tobytes()


def test_zero_fill():
    x, m = _incomplete()
    assert (baseline_impute(x, m, "zero")[m == 0] == 0).all()


def test_mean_fill_example():
    x = np.array([[0.2, 5.0], [0.4, 6.0], [9.0, 7.0]])
    m = np.array([[1, 1], [1, 0], [0, 0]])
    out = baseline_impute(x, m, "mean")
    assert out[2, 0] == pytest.approx(0.3, abs=1e-15)
    assert out[1, 1] == out[2, 1] == 5.0


def test_mean_fill_never_observed_column_falls_back_to_zero():
    out = baseline_impute(np.ones((3, 2)), np.array([[1, 0]] * 3), "mean")
    assert (out[:, 1] == 0).all()


def test_rank_one_recovery():
    r = np.random.default_rng(8)
    truth = np.outer(r.uniform(0.5, 2.0, 60), r.uniform(0.5, 2.0, 40))
    m = (r.random(truth.shape) >= 0.3).astype(float)
    out = baseline_impute(np.where(m == 1, truth, 0.0), m, "mf", rank=1, reg=1e-9)
    assert rmse_imputation(out, truth, m) < 1e-3


def test_rank_must_be_below_dims():
    x, m = _incomplete(shape=(10, 4))
    with pytest.raises(MetricError):
        als_factorize(x, m, rank=4)
    with pytest.raises(MetricError):
        baseline_impute(x, m, "median")
    with pytest.raises(MetricError):
        baseline_impute(np.zeros((0, 3)), np.zeros((0, 3)), "mean")


def test_metric_report_bounds():
    assert MetricReport(fid=0.1, tv=1.0).to_dict()["tv"] == 1.0
    with pytest.raises(MetricError):
        MetricReport(fid=-1.0)
    with pytest.raises(MetricError):
        MetricReport(fid=0.0, tv=1.5)
