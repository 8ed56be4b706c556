import numpy as np
import pytest

from hamscope.embed import (
    StateTrajectory,
    TsneConfig,
    conditional_affinities,
    embed_joint,
    fit_pca,
    joint_probabilities,
    project,
    run_tsne,
    squared_distances,
    tsne_embed,
)
from hamscope.errors import DegenerateDistances, DimensionMismatch, PerplexityTooLarge, RankDeficient
from hamscope.ingest import TimeSeriesMatrix


def _tsm(samples):
    """Build an N x T matrix from T x N samples."""
    samples = np.asarray(samples, dtype=float)
    return TimeSeriesMatrix(samples.T, [f"s{k}" for k in range(samples.shape[1])], np.arange(samples.shape[0]))


def _clusters(rng, per=30, dim=5):
    centers = np.array([np.zeros(dim), np.full(dim, 8.0), np.r_[8.0, -8.0, np.zeros(dim - 2)]])
    return np.vstack([c + rng.normal(size=(per, dim)) for c in centers])


# -- PCA --------------------------------------------------------------------


def test_pca_line():
    t = np.arange(1.0, 11.0)
    model = fit_pca(_tsm(np.c_[t, 2 * t]), 1)
    np.testing.assert_allclose(model.components[0], np.array([1.0, 2.0]) / np.sqrt(5), atol=1e-12)
    np.testing.assert_allclose(model.explained_variance_ratio, [1.0])


def test_pca_rank_deficient_warns():
    t = np.arange(1.0, 11.0)
    with pytest.warns(RankDeficient):
        model = fit_pca(_tsm(np.c_[t, 2 * t]), 2)
    assert model.n_components == 1


def test_pca_isotropic(rng):
    model = fit_pca(_tsm(rng.normal(size=(5000, 2))), 2)
    np.testing.assert_allclose(model.explained_variance_ratio, [0.5, 0.5], atol=0.03)


def test_pca_invariants(rng):
    x = _tsm(rng.normal(size=(40, 6)) @ rng.normal(size=(6, 6)))
    model = fit_pca(x, 6)
    np.testing.assert_allclose(model.components @ model.components.T, np.eye(6), atol=1e-8)
    assert np.all(np.diff(model.explained_variance_ratio) <= 1e-12)
    assert model.explained_variance_ratio.sum() == pytest.approx(1.0, abs=1e-8)
    # sign convention: largest-magnitude entry of each component positive
    for row in model.components:
        assert row[np.argmax(np.abs(row))] > 0
    z = project(model, x)
    np.testing.assert_allclose(model.reconstruct(z.states), x.values, atol=1e-8)
    np.testing.assert_allclose(z.states.mean(axis=0), 0.0, atol=1e-8)
    assert z.provenance == "pca_only"
    assert z.dt == x.dt


def test_project_mean_column_maps_to_origin(rng):
    x = _tsm(rng.normal(size=(30, 4)))
    model = fit_pca(x, 2)
    at_mean = TimeSeriesMatrix(np.tile(model.mean[:, None], (1, 3)), x.segment_ids, [0, 1, 2])
    np.testing.assert_allclose(project(model, at_mean).states, 0.0, atol=1e-12)


def test_project_dimension_mismatch(rng):
    model = fit_pca(_tsm(rng.normal(size=(30, 4))), 2)
    with pytest.raises(DimensionMismatch):
        project(model, _tsm(rng.normal(size=(30, 3))))


def test_pca_reconstruction_error_non_increasing(rng):
    x = _tsm(rng.normal(size=(50, 8)))
    errors = []
    for d in range(1, 6):
        model = fit_pca(x, d)
        errors.append(np.linalg.norm(model.reconstruct(project(model, x).states) - x.values))
    assert all(b <= a + 1e-10 for a, b in zip(errors, errors[1:]))


def test_pca_d_out_of_range(rng):
    with pytest.raises(ValueError):
        fit_pca(_tsm(rng.normal(size=(10, 3))), 4)


# -- t-SNE ------------------------------------------------------------------


def test_perplexity_bisection_hits_target(rng):
    sq = squared_distances(rng.normal(size=(60, 4)))
    P, _ = conditional_affinities(sq, 10.0)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.diag(P) == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.nansum(np.where(P > 0, P * np.log2(P), 0.0), axis=1)
    np.testing.assert_allclose(2.0**h, 10.0, rtol=1e-4)


def test_joint_probabilities_normalised(rng):
    P = joint_probabilities(rng.normal(size=(50, 3)), 10.0)
    assert P.sum() == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_array_equal(P, P.T)


def test_degenerate_distances():
    with pytest.raises(DegenerateDistances):
        joint_probabilities(np.ones((10, 3)), 2.0)


def test_tsne_shape_and_finite(rng):
    Y = tsne_embed(rng.normal(size=(100, 5)), TsneConfig(perplexity=10, n_iter=300))
    assert Y.shape == (100, 2)
    assert np.all(np.isfinite(Y))


def test_tsne_preconditions():
    cfg = TsneConfig(perplexity=30)
    with pytest.raises(PerplexityTooLarge):
        cfg.check(90)
    cfg.check(91)
    with pytest.raises(ValueError):
        TsneConfig(perplexity=1).check(3)


def test_tsne_kl_decreases_after_exaggeration(rng):
    res = run_tsne(_clusters(rng), TsneConfig(perplexity=15))
    assert len(res.kl_trace) == 1001
    assert res.final_kl <= res.kl_after_exaggeration
    assert np.all(np.isfinite(res.kl_trace))


def test_tsne_separates_clusters(rng):
    Y = tsne_embed(_clusters(rng), TsneConfig(perplexity=15))
    labels = np.repeat(np.arange(3), 30)
    centroids = np.array([Y[labels == k].mean(axis=0) for k in range(3)])
    nearest = np.argmin(((Y[:, None, :] - centroids[None]) ** 2).sum(-1), axis=1)
    assert np.mean(nearest == labels) == 1.0


def test_tsne_bit_reproducible(rng):
    pts = rng.normal(size=(60, 4))
    for init in ("pca", "random"):
        cfg = TsneConfig(perplexity=10, n_iter=200, init=init, seed=3)
        assert np.array_equal(tsne_embed(pts, cfg), tsne_embed(pts, cfg))


def test_embed_joint_window_sizes(rng):
    zb = StateTrajectory(rng.normal(size=(168, 3)), 3600.0, window_label="before")
    za = StateTrajectory(rng.normal(size=(168, 3)), 3600.0, window_label="after")
    ob, oa = embed_joint(zb, za, TsneConfig(n_iter=250))
    assert ob.states.shape == oa.states.shape == (168, 2)
    assert ob.provenance == oa.provenance == "pca_tsne"
    assert ob.frame_id == oa.frame_id and ob.frame_id.startswith("tsne-")
    assert (ob.window_label, oa.window_label) == ("before", "after")


def test_embed_joint_identical_sets_coincide(rng):
    pts = rng.normal(size=(80, 4))
    zb = StateTrajectory(pts, 1.0)
    za = StateTrajectory(pts[rng.permutation(80)], 1.0)
    ob, oa = embed_joint(zb, za, TsneConfig(perplexity=15, n_iter=500))
    key = lambda a: a[np.lexsort(a.T[::-1])]
    np.testing.assert_array_equal(key(ob.states), key(oa.states))


def test_embed_joint_empty_after(rng):
    zb = StateTrajectory(rng.normal(size=(20, 3)), 1.0)
    za = StateTrajectory(np.zeros((0, 3)), 1.0)
    with pytest.raises(ValueError):
        embed_joint(zb, za, TsneConfig(perplexity=3))


def test_embed_joint_dimension_mismatch(rng):
    with pytest.raises(DimensionMismatch):
        embed_joint(StateTrajectory(rng.normal(size=(20, 3)), 1.0), StateTrajectory(rng.normal(size=(20, 2)), 1.0))
