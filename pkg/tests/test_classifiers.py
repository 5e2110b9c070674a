import numpy as np
import pytest

from shiftselect.classifiers import (ClassWeights, HyperParams, TrainingError,
                                     build_grid, class_weight_candidates,
                                     default_model, load_model, lr_loss_grad,
                                     mlp_loss_grad, model_from_record,
                                     model_to_record, save_model, train)
from shiftselect.dataspace import Dataset


def blob_dataset(counts, centers, spread=0.5, seed=0, dims=None):
    rng = np.random.default_rng(seed)
    dims = dims or len(centers[0])
    parts, labels = [], []
    for j, (c, mu) in enumerate(zip(counts, centers)):
        parts.append(rng.normal(mu, spread, size=(c, dims)))
        labels.append(np.full(c, j))
    X = np.vstack(parts)
    y = np.concatenate(labels)
    return Dataset(X, y, n_classes=len(counts))


@pytest.fixture(scope="module")
def two_blobs():
    return blob_dataset([40, 40], [(0.0, 0.0), (4.0, 4.0)], spread=0.4)


# ---------------------------------------------------------------------------
# class weights and grids
# ---------------------------------------------------------------------------

def test_class_weight_candidates_binary():
    cands = class_weight_candidates(2)
    assert cands[0].mode == "balanced" and cands[1].mode == "none"
    explicit = [c.explicit for c in cands[2:]]
    assert explicit == [(0.2, 0.8), (0.4, 0.6), (0.6, 0.4), (0.8, 0.2)]


def test_class_weight_candidates_three_classes_exact_fractions():
    cands = class_weight_candidates(3)
    explicit = np.array([c.explicit for c in cands if c.mode == "explicit"])
    high, low = 2.0 / 3.0, 1.0 / 6.0
    expected = np.array([[high, low, low], [low, high, low], [low, low, high]])
    assert np.allclose(explicit, expected, atol=1e-15)
    assert np.allclose(explicit.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 5, 11])
def test_class_weight_explicit_vectors_sum_to_one(n):
    for cand in class_weight_candidates(n):
        if cand.explicit is not None:
            assert sum(cand.explicit) == pytest.approx(1.0, abs=1e-12)


def test_grid_sizes():
    assert len(build_grid("LR", 2)) == 30       # (4 + 2) * 5
    assert len(build_grid("LR", 3)) == 25       # (3 + 2) * 5
    assert len(build_grid("LR", 7)) == 45       # (7 + 2) * 5
    assert len(build_grid("KNN", 2)) == 10
    assert len(build_grid("KNN", 9)) == 10
    assert len(build_grid("MLP", 2)) == 10


@pytest.mark.parametrize("family", ["LR", "KNN", "MLP"])
def test_default_inside_grid(family):
    assert default_model(family) in build_grid(family, 2)
    assert default_model(family) in build_grid(family, 4)


def test_default_values():
    assert default_model("LR")["C"] == 1.0
    assert default_model("LR")["class_weight"].mode == "none"
    assert default_model("KNN")["n_neighbors"] == 5
    assert default_model("KNN")["weights"] == "uniform"
    assert default_model("MLP")["alpha"] == 1e-4
    assert default_model("MLP")["learning_rate"] == "constant"


def test_class_weights_reject_inconsistent():
    with pytest.raises(ValueError):
        ClassWeights("explicit")            # missing vector
    with pytest.raises(ValueError):
        ClassWeights("none", (0.5, 0.5))    # vector without explicit mode
    with pytest.raises(ValueError):
        ClassWeights("explicit", (0.5, 0.6))  # not on the simplex


def test_hyperparams_schema_enforced():
    with pytest.raises(ValueError):
        HyperParams.make("LR", C=-1.0, class_weight=ClassWeights("none"))
    with pytest.raises(ValueError):
        HyperParams.make("KNN", n_neighbors=5, weights="quadratic")
    with pytest.raises(ValueError):
        HyperParams.make("MLP", alpha=1e-4)  # missing learning_rate


# ---------------------------------------------------------------------------
# instance weighting
# ---------------------------------------------------------------------------

def test_instance_weights_balanced():
    y = np.array([0, 0, 0, 1])
    w = ClassWeights("balanced").instance_weights(y, 2)
    # N/(n*N_j): class 0 -> 4/(2*3), class 1 -> 4/(2*1)
    assert np.allclose(w, [2 / 3, 2 / 3, 2 / 3, 2.0])


def test_instance_weights_uniform_explicit_equals_none():
    y = np.array([0, 1, 1, 0])
    none = ClassWeights("none").instance_weights(y, 2)
    uniform = ClassWeights("explicit", (0.5, 0.5)).instance_weights(y, 2)
    assert np.array_equal(none, uniform)


# ---------------------------------------------------------------------------
# logistic regression
# ---------------------------------------------------------------------------

def test_lr_separable_blob_reaches_perfect_training_accuracy(two_blobs):
    lset = two_blobs.all_instances()
    model = train("LR", default_model("LR"), lset, seed=0)
    assert (model.predict_labels(lset.X) == lset.y).mean() == 1.0


def test_lr_zero_weights_give_uniform_posterior():
    from shiftselect.classifiers import LRModel
    hp = default_model("LR")
    model = LRModel(hp, np.zeros((3, 4)), np.zeros(4), n_classes=4, seed=0)
    post = model.predict_posteriors(np.random.default_rng(0).normal(size=(5, 3)))
    assert np.allclose(post, 0.25)


def test_lr_objective_is_convex(two_blobs):
    lset = two_blobs.all_instances()
    X, y = lset.X, lset.y
    w = ClassWeights("none").instance_weights(y, 2)
    rng = np.random.default_rng(7)
    for _ in range(20):
        Wa, Wb = rng.normal(size=(2, 2, 2))
        ba, bb = rng.normal(size=(2, 2))
        ja = lr_loss_grad(Wa, ba, X, y, w, C=1.0)[0]
        jb = lr_loss_grad(Wb, bb, X, y, w, C=1.0)[0]
        jm = lr_loss_grad((Wa + Wb) / 2, (ba + bb) / 2, X, y, w, C=1.0)[0]
        assert jm <= (ja + jb) / 2 + 1e-9


def test_lr_uniform_explicit_matches_none_on_balanced_data(two_blobs):
    lset = two_blobs.all_instances()
    hp_none = HyperParams.make("LR", C=1.0, class_weight=ClassWeights("none"))
    hp_unif = HyperParams.make("LR", C=1.0,
                               class_weight=ClassWeights("explicit", (0.5, 0.5)))
    m1 = train("LR", hp_none, lset, seed=0)
    m2 = train("LR", hp_unif, lset, seed=0)
    assert np.allclose(m1.W, m2.W, atol=1e-12)
    assert np.allclose(m1.b, m2.b, atol=1e-12)


def _relative_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def _numeric_grad(f, x, eps=1e-5):
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f()
        flat[i] = orig - eps
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return g


def test_lr_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(30, 4))
    y = rng.integers(0, 3, size=30)
    w = rng.uniform(0.5, 2.0, size=30)
    for _ in range(10):
        W = rng.normal(size=(4, 3))
        b = rng.normal(size=3)
        _, gW, gb = lr_loss_grad(W, b, X, y, w, C=0.7)
        fdW = _numeric_grad(lambda: lr_loss_grad(W, b, X, y, w, C=0.7)[0], W)
        fdb = _numeric_grad(lambda: lr_loss_grad(W, b, X, y, w, C=0.7)[0], b)
        assert _relative_error(gW, fdW) < 1e-4
        assert _relative_error(gb, fdb) < 1e-4


def test_mlp_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(12, 3))
    y = rng.integers(0, 2, size=12)
    for _ in range(10):
        params = [rng.normal(size=(3, 5)), rng.normal(size=5),
                  rng.normal(size=(5, 2)), rng.normal(size=2)]
        _, grads = mlp_loss_grad(params, X, y, 2, alpha=1e-3)
        for p, g in zip(params, grads):
            fd = _numeric_grad(
                lambda: mlp_loss_grad(params, X, y, 2, alpha=1e-3)[0], p)
            assert _relative_error(g, fd) < 1e-4


# ---------------------------------------------------------------------------
# knn
# ---------------------------------------------------------------------------

def test_knn_unanimous_vote():
    ds = blob_dataset([10, 10], [(0.0,), (100.0,)], spread=0.1, seed=1)
    model = train("KNN", default_model("KNN"), ds.all_instances(), seed=0)
    post = model.predict_posteriors(np.array([[100.0]]))
    assert np.allclose(post, [[0.0, 1.0]])


def test_knn_training_accuracy_beats_majority_baseline():
    ds = blob_dataset([30, 15], [(0.0, 0.0), (2.5, 2.5)], spread=0.8, seed=2)
    lset = ds.all_instances()
    model = train("KNN", default_model("KNN"), lset, seed=0)
    acc = (model.predict_labels(lset.X) == lset.y).mean()
    majority = max(np.bincount(lset.y)) / len(lset)
    assert acc >= majority


def test_knn_distance_weights_handle_duplicate_points():
    hp = HyperParams.make("KNN", n_neighbors=3, weights="distance")
    X = np.array([[0.0], [0.0], [5.0], [6.0]])
    y = np.array([0, 0, 1, 1])
    ds = Dataset(X, y, 2)
    model = train("KNN", hp, ds.all_instances(), seed=0)
    post = model.predict_posteriors(np.array([[0.0]]))   # exact duplicates
    assert np.isfinite(post).all()
    assert post[0, 0] > 0.99


# ---------------------------------------------------------------------------
# shared prediction contracts
# ---------------------------------------------------------------------------

def _trained_models(dataset):
    lset = dataset.all_instances()
    return [train(fam, default_model(fam), lset, seed=5)
            for fam in ("LR", "KNN", "MLP")]


def test_posterior_rows_sum_to_one(two_blobs):
    rng = np.random.default_rng(11)
    queries = rng.normal(scale=3.0, size=(50, 2))
    for model in _trained_models(two_blobs):
        post = model.predict_posteriors(queries)
        assert post.shape == (50, 2)
        assert (post >= 0).all()
        assert np.abs(post.sum(axis=1) - 1.0).max() < 1e-9


def test_labels_equal_argmax_of_posteriors(two_blobs):
    rng = np.random.default_rng(12)
    queries = rng.normal(scale=3.0, size=(100, 2))
    for model in _trained_models(two_blobs):
        post = model.predict_posteriors(queries)
        assert np.array_equal(model.predict_labels(queries),
                              np.argmax(post, axis=1))


def test_argmax_tie_breaks_to_lowest_index():
    assert np.argmax(np.array([0.5, 0.5])) == 0
    assert np.argmax(np.array([0.2, 0.8])) == 1
    from shiftselect.classifiers import LRModel
    model = LRModel(default_model("LR"), np.zeros((2, 2)), np.zeros(2),
                    n_classes=2, seed=0)
    labels = model.predict_labels(np.ones((4, 2)))   # uniform posteriors
    assert (labels == 0).all()


def test_dimension_mismatch_rejected(two_blobs):
    for model in _trained_models(two_blobs):
        with pytest.raises(ValueError):
            model.predict_posteriors(np.zeros((3, 5)))


def test_training_determinism(two_blobs):
    lset = two_blobs.all_instances()
    for family in ("LR", "MLP"):
        m1 = train(family, default_model(family), lset, seed=123)
        m2 = train(family, default_model(family), lset, seed=123)
        if family == "LR":
            assert np.array_equal(m1.W, m2.W) and np.array_equal(m1.b, m2.b)
        else:
            assert np.array_equal(m1.W1, m2.W1) and np.array_equal(m1.W2, m2.W2)


def test_mlp_diverges_with_huge_penalty_raises(two_blobs):
    hp = HyperParams.make("MLP", alpha=1e8, learning_rate="constant")
    with pytest.raises(TrainingError) as err:
        train("MLP", hp, two_blobs.all_instances(), seed=0)
    assert err.value.last_state is not None


def test_train_requires_all_classes(two_blobs):
    from shiftselect.dataspace import LabelledSet
    only_zero = np.nonzero(two_blobs.labels == 0)[0]
    lset = LabelledSet(two_blobs, only_zero)
    with pytest.raises(ValueError):
        train("LR", default_model("LR"), lset, seed=0)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def test_model_records_round_trip_bit_exact(two_blobs, tmp_path):
    lset = two_blobs.all_instances()
    rng = np.random.default_rng(13)
    queries = rng.normal(size=(20, 2))
    for family in ("LR", "KNN", "MLP"):
        model = train(family, default_model(family), lset, seed=99)
        path = tmp_path / f"{family}.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.family == model.family
        assert loaded.hyperparams == model.hyperparams
        assert loaded.n_classes == model.n_classes
        assert loaded.seed == model.seed
        assert np.array_equal(loaded.predict_posteriors(queries),
                              model.predict_posteriors(queries))


def test_record_arrays_are_little_endian_floats(two_blobs):
    model = train("LR", default_model("LR"), two_blobs.all_instances(), seed=0)
    rec = model_to_record(model)
    assert rec["format_version"] == 1
    assert rec["arrays"]["W"]["dtype"] == "<f8"
    clone = model_from_record(rec)
    assert np.array_equal(clone.W, model.W)
    assert clone.W.dtype == np.float64
