import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reviewnet import nfs
from reviewnet.nfs import FitError, NfsModel, SvmSettings
from reviewnet.structure import StructureProfiles


def two_blobs(n=60, seed=0, gap=2.0):
    rng = np.random.default_rng(seed)
    y = np.r_[np.zeros(n // 2), np.ones(n - n // 2)].astype(int)
    x = rng.normal(size=(n, 2)) + gap * y[:, None] * np.array([-1.0, 1.0])
    return x, y


def toy_model(threshold=0.5):
    return NfsModel(
        feature_means=np.zeros(1), feature_stds=np.ones(1), pca_basis=np.eye(1), pca_kept=1,
        svm_weights=np.ones(1), bias=0.0, score_min=-1.0, score_max=1.0, threshold=threshold,
    )


def test_assemble_features_order_and_shape():
    zeros = np.zeros(3)
    prof = StructureProfiles(zeros, zeros, np.array([0.0, 0.2, 0.4]), np.array([0.0, 0.5, 1.0]),
                             zeros, zeros, zeros, zeros)
    f = nfs.assemble_features(prof)
    assert f.shape == (3, 2)
    assert f[0].tolist() == [0.0, 0.0]
    assert f[2].tolist() == [0.4, 1.0]


def test_separable_one_dimensional_fit():
    x = np.r_[-np.ones(10), np.ones(10)].reshape(-1, 1)
    y = np.r_[np.zeros(10), np.ones(10)].astype(int)
    model = nfs.fit(x, y, pca_kept=1)
    raw = nfs.score(model, x).raw
    assert raw[y == 1].min() > raw[y == 0].max()
    assert model.validation_j == 1.0


def test_fit_needs_both_classes():
    with pytest.raises(FitError):
        nfs.fit(np.random.default_rng(0).normal(size=(20, 2)), np.zeros(20, int))


def test_normalization_endpoints_and_threshold_rule():
    model = toy_model(threshold=0.68)
    out = nfs.score(model, np.array([[-1.0], [1.0], [0.36]]))
    assert out.normalized[:2].tolist() == [0.0, 1.0]
    assert out.labels[:2] == [nfs.NORMAL, nfs.SUSPICIOUS]
    assert out.normalized[2] == pytest.approx(0.68)
    assert nfs.minmax(model, np.array([0.36]))[0] >= 0.68 - 1e-15


def test_youden_separable_toy():
    scores = [0.1, 0.2, 0.8, 0.9]
    labels = [0, 0, 1, 1]
    t = nfs.youden_threshold(scores, labels)
    assert t == pytest.approx(0.5)
    assert nfs.youden_j(scores, labels, t) == 1.0


def test_youden_matches_exhaustive_sweep():
    rng = np.random.default_rng(4)
    s = np.round(rng.random(40), 2)
    y = rng.random(40) < 0.4
    best = max(nfs.youden_j(s, y, t) for t in np.r_[np.unique(s), np.inf])
    t = nfs.youden_threshold(s, y)
    assert nfs.youden_j(s, y, t) == pytest.approx(best)


def test_youden_constant_scores_degenerate():
    cand, j = nfs.youden_curve([0.3] * 4, [0, 1, 0, 1])
    assert np.all(j == 0)
    assert nfs.youden_threshold([0.3] * 4, [0, 1, 0, 1]) == cand[-1]


def test_pipeline_steps_equal_fused_score():
    x, y = two_blobs()
    model = nfs.fit(x, y)
    fused = nfs.score(model, x)
    z = nfs.pca_transform(model, nfs.standardize(model, x))
    raw = nfs.project(model, z)
    assert np.allclose(raw, fused.raw, atol=1e-12)
    assert np.allclose(nfs.minmax(model, raw), fused.normalized, atol=1e-12)


def test_pca_reconstruction_with_two_components():
    x, y = two_blobs()
    model = nfs.fit(x, y, pca_kept=2)
    std = nfs.standardize(model, x)
    assert np.allclose(nfs.pca_inverse(model, nfs.pca_transform(model, std)), std, atol=1e-9)


@given(st.lists(st.integers(-1000, 1000), min_size=2, max_size=30))
def test_normalized_score_monotone_in_raw(raw):
    model = toy_model()
    raw = np.sort(np.asarray(raw)) / 100.0
    norm = nfs.minmax(model, raw)
    assert np.all(np.diff(norm) >= 0)
    inside = (raw > -1) & (raw < 1)
    strict = raw[inside]
    if len(np.unique(strict)) > 1:
        n = nfs.minmax(model, np.unique(strict))
        assert np.all(np.diff(n) > 0)


def test_svm_loss_non_increasing_on_separable_toy():
    z = np.r_[-np.ones(10), np.ones(10)].reshape(-1, 1)
    y = np.r_[np.zeros(10), np.ones(10)]
    _, _, history = nfs.train_linear_svm(z, y, SvmSettings(epochs=300))
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))


@pytest.mark.parametrize("scale", [0.01, 3.0, 1000.0])
def test_labels_ignore_feature_scale(scale):
    x, y = two_blobs(seed=2)
    base = nfs.score(nfs.fit(x, y), x)
    scaled = nfs.score(nfs.fit(x * scale, y), x * scale)
    assert np.array_equal(base.suspicious, scaled.suspicious)
    assert np.allclose(base.normalized, scaled.normalized, atol=1e-9)


def test_model_json_round_trip():
    x, y = two_blobs()
    model = nfs.fit(x, y)
    back = NfsModel.from_json(model.to_json())
    assert np.allclose(nfs.score(back, x).raw, nfs.score(model, x).raw)
    assert back.threshold == model.threshold


def test_fit_is_deterministic():
    x, y = two_blobs()
    assert nfs.fit(x, y, seed=5).to_json() == nfs.fit(x, y, seed=5).to_json()
