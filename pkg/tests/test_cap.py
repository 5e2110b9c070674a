import numpy as np
import pytest

from shiftselect.cap import (CapPredictor, ContingencyTable, RateMatrix,
                             accuracy_from_table, cap_predict,
                             cap_predict_detailed, estimate_rate_matrix,
                             fit_cap, leap_solve, pps_accuracy_identity,
                             project_to_simplex)
from shiftselect.classifiers import default_model, train
from shiftselect.dataspace import DataError, Dataset, stratified_split, synth_gaussian_pps
from shiftselect.protocol import draw_bag, reveal_labels


class PassThroughModel:
    def __init__(self, n_classes):
        self.n_classes = n_classes

    def predict_posteriors(self, X):
        return np.asarray(X, dtype=float)

    def predict_labels(self, X):
        return np.argmax(self.predict_posteriors(X), axis=1)


class OracleQuantifier:
    """Feeds the true bag prevalence to the solver (test harness only)."""

    def estimate(self, bag, posteriors=None):
        return bag.realized_prevalence


def posterior_dataset(posterior_rows, labels):
    """Dataset whose features *are* posterior rows, for PassThroughModel."""
    return Dataset(np.asarray(posterior_rows, dtype=float),
                   np.asarray(labels, dtype=int),
                   n_classes=len(posterior_rows[0]))


# ---------------------------------------------------------------------------
# rate matrix
# ---------------------------------------------------------------------------

def test_rate_matrix_perfect_classifier_is_identity():
    rows = [[0.9, 0.1]] * 5 + [[0.2, 0.8]] * 7
    labels = [0] * 5 + [1] * 7
    ds = posterior_dataset(rows, labels)
    m = estimate_rate_matrix(PassThroughModel(2), ds.all_instances())
    assert np.array_equal(m.m, np.eye(2))


def test_rate_matrix_counts_tpr():
    # 10 true class-1 instances, 9 predicted 1 -> m[1][1] = 0.9
    rows = [[0.1, 0.9]] * 9 + [[0.9, 0.1]] * 1 + [[0.8, 0.2]] * 5
    labels = [1] * 10 + [0] * 5
    ds = posterior_dataset(rows, labels)
    m = estimate_rate_matrix(PassThroughModel(2), ds.all_instances())
    assert m.m[1, 1] == pytest.approx(0.9)
    assert m.m[0, 1] == pytest.approx(0.1)
    assert m.m[0, 0] == pytest.approx(1.0)


def test_rate_matrix_columns_sum_to_one_random_fixtures():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = rng.integers(2, 5)
        size = rng.integers(2 * n, 60)
        labels = np.concatenate([np.arange(n), rng.integers(0, n, size - n)])
        rows = rng.dirichlet(np.ones(n), size=size)
        ds = posterior_dataset(rows, labels)
        m = estimate_rate_matrix(PassThroughModel(n), ds.all_instances())
        assert np.allclose(m.m.sum(axis=0), 1.0, atol=1e-12)
        assert (m.m >= 0).all()


def test_rate_matrix_missing_class_rejected():
    rows = [[0.9, 0.1]] * 5
    ds = Dataset(np.asarray(rows), np.zeros(5, dtype=int), n_classes=2,
                 require_all_classes=False)
    with pytest.raises(DataError):
        estimate_rate_matrix(PassThroughModel(2), ds.all_instances())


def test_rate_matrix_auto_smooths_never_predicted_class():
    # the model never predicts class 1: without smoothing row 1 would be all
    # zeros, so the 1e-6 fallback kicks in and every entry is positive
    rows = [[0.9, 0.1]] * 4 + [[0.8, 0.2]] * 4
    labels = [0] * 4 + [1] * 4
    ds = posterior_dataset(rows, labels)
    m = estimate_rate_matrix(PassThroughModel(2), ds.all_instances())
    assert (m.m > 0).all()
    assert np.allclose(m.m.sum(axis=0), 1.0)


# ---------------------------------------------------------------------------
# simplex projection and the solver
# ---------------------------------------------------------------------------

def test_simplex_projection_properties():
    rng = np.random.default_rng(1)
    for _ in range(200):
        v = rng.normal(scale=3.0, size=rng.integers(2, 6))
        p = project_to_simplex(v)
        assert (p >= 0).all()
        assert p.sum() == pytest.approx(1.0, abs=1e-9)
        # projection of a simplex point is itself
        q = rng.dirichlet(np.ones(v.size))
        assert np.allclose(project_to_simplex(q), q, atol=1e-12)


def test_leap_consistent_system_identity():
    m = RateMatrix(np.eye(2))
    table = leap_solve(m, [0.3, 0.7], [0.3, 0.7])
    assert table.converged
    assert np.allclose(table.theta, [0.3, 0.7], atol=1e-6)
    assert np.allclose(table.c, np.diag([0.3, 0.7]), atol=1e-6)


def test_leap_consistent_two_class_accuracy():
    tpr, tnr = 0.9, 0.8
    M = np.array([[tnr, 1 - tpr], [1 - tnr, tpr]])
    theta = np.array([0.7, 0.3])
    rho = M @ theta
    table = leap_solve(RateMatrix(M), rho, theta)
    assert accuracy_from_table(table) == pytest.approx(tnr * 0.7 + tpr * 0.3, abs=1e-6)
    assert accuracy_from_table(table) == pytest.approx(0.83, abs=1e-6)


def test_leap_table_columns_sum_to_theta():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = rng.integers(2, 5)
        M = RateMatrix(rng.dirichlet(np.ones(n), size=n).T)
        rho = rng.dirichlet(np.ones(n))
        qhat = rng.dirichlet(np.ones(n))
        table = leap_solve(M, rho, qhat)
        assert np.allclose(table.c.sum(axis=0), table.theta, atol=1e-9)
        assert table.c.sum() == pytest.approx(1.0, abs=1e-9)
        assert (table.c >= 0).all()


def test_leap_matches_grid_search_on_inconsistent_instances():
    rng = np.random.default_rng(3)
    grid = np.arange(0.0, 1.0 + 1e-12, 1e-4)
    thetas = np.column_stack([grid, 1.0 - grid])
    for _ in range(10):
        M = rng.dirichlet(np.ones(2), size=2).T
        rho = rng.dirichlet(np.ones(2))
        qhat = rng.dirichlet(np.ones(2))
        table = leap_solve(RateMatrix(M), rho, qhat)
        objective = ((thetas @ M.T - rho) ** 2).sum(axis=1) \
            + ((thetas - qhat) ** 2).sum(axis=1)
        best = grid[np.argmin(objective)]
        assert abs(table.theta[0] - best) <= 1e-3


def test_leap_weight_limits():
    M = np.array([[0.8, 0.3], [0.2, 0.7]])
    theta0 = np.array([0.6, 0.4])
    rho = M @ theta0
    qhat = np.array([0.25, 0.75])
    # weight -> inf: the quantifier equation dominates, theta -> qhat
    heavy = leap_solve(RateMatrix(M), rho, qhat, weight=1e6)
    assert np.allclose(heavy.theta, qhat, atol=1e-4)
    # weight -> 0: the classifier-count equations dominate, theta -> M^-1 rho
    light = leap_solve(RateMatrix(M), rho, qhat, weight=1e-6)
    assert np.allclose(light.theta, theta0, atol=1e-3)


def test_leap_rejects_bad_weight():
    with pytest.raises(ValueError):
        leap_solve(RateMatrix(np.eye(2)), [0.5, 0.5], [0.5, 0.5], weight=0.0)


def test_leap_nonconvergence_returns_best_iterate_with_flag():
    M = RateMatrix(np.array([[0.6, 0.4], [0.4, 0.6]]))
    table = leap_solve(M, [0.9, 0.1], [0.1, 0.9], max_iter=1)
    assert not table.converged
    assert table.iterations == 1
    assert table.c.sum() == pytest.approx(1.0, abs=1e-9)   # still a valid table


# ---------------------------------------------------------------------------
# accuracy from a table
# ---------------------------------------------------------------------------

def test_accuracy_is_the_trace():
    assert accuracy_from_table(ContingencyTable(np.diag([0.3, 0.7]))) == 1.0
    assert accuracy_from_table(ContingencyTable(np.full((2, 2), 0.25))) == 0.5


def test_contingency_table_validation():
    with pytest.raises(ValueError):
        ContingencyTable(np.array([[0.5, 0.2], [0.1, 0.1]]))  # sums to 0.9
    with pytest.raises(ValueError):
        ContingencyTable(np.array([[1.2, 0.0], [-0.2, 0.0]]))


# ---------------------------------------------------------------------------
# cap predictor end to end
# ---------------------------------------------------------------------------

def test_cap_perfect_classifier_with_oracle_quantifier_gives_one():
    rows = [[0.95, 0.05]] * 6 + [[0.1, 0.9]] * 6
    labels = [0] * 6 + [1] * 6
    ds = posterior_dataset(rows, labels)
    model = PassThroughModel(2)
    rates = estimate_rate_matrix(model, ds.all_instances())
    psi = CapPredictor(rates, OracleQuantifier(), model)
    bag = draw_bag(ds.all_instances(), [0.5, 0.5], 40, np.random.default_rng(0))
    assert cap_predict(psi, bag) == pytest.approx(1.0, abs=1e-9)


@pytest.fixture(scope="module")
def overlapping_pipeline():
    """LR on overlapping 2-class Gaussians: imperfect but stable rates."""
    ds = synth_gaussian_pps(2, 2, [0.6, 0.4], 4000, 2.0, seed=51)
    train_set, rest = stratified_split(ds.all_instances(), 0.35, seed=0)
    validation, test = stratified_split(rest, 0.5, seed=1)
    model = train("LR", default_model("LR"), train_set, seed=0)
    return model, train_set, validation, test


def test_cap_monte_carlo_error_bound(overlapping_pipeline):
    model, _, validation, test = overlapping_pipeline
    rates = estimate_rate_matrix(model, validation)
    psi = CapPredictor(rates, OracleQuantifier(), model)
    rng = np.random.default_rng(7)
    s = 100
    bound = 3.0 / np.sqrt(s)
    hits = 0
    n_bags = 200
    for _ in range(n_bags):
        target = rng.dirichlet([1.0, 1.0])
        bag = draw_bag(test, target, s, rng)
        estimate = cap_predict(psi, bag)
        true_acc = (model.predict_labels(bag.features) == reveal_labels(bag)).mean()
        if abs(estimate - true_acc) <= bound:
            hits += 1
    assert hits / n_bags >= 0.95


def test_cap_zero_shift_matches_validation_accuracy(overlapping_pipeline):
    model, train_set, validation, test = overlapping_pipeline
    psi = fit_cap(model, validation)
    val_acc = (model.predict_labels(validation.X) == validation.y).mean()
    rng = np.random.default_rng(8)
    bag = draw_bag(test, train_set.prevalence(), 500, rng)
    assert abs(cap_predict(psi, bag) - val_acc) <= 0.05


def test_cap_detailed_reports_solver_state(overlapping_pipeline):
    model, _, validation, test = overlapping_pipeline
    psi = fit_cap(model, validation)
    bag = draw_bag(test, [0.3, 0.7], 100, np.random.default_rng(9))
    pred = cap_predict_detailed(psi, bag)
    assert 0.0 <= pred.accuracy <= 1.0
    assert pred.converged
    assert np.allclose(pred.table.c.sum(axis=0), pred.table.theta, atol=1e-9)


def test_fit_cap_rejects_unknown_quantifier(overlapping_pipeline):
    model, _, validation, _ = overlapping_pipeline
    with pytest.raises(ValueError):
        fit_cap(model, validation, quantifier_kind="EMQ")


def test_fit_cap_with_counting_quantifier(overlapping_pipeline):
    model, _, validation, test = overlapping_pipeline
    psi = fit_cap(model, validation, quantifier_kind="CC")
    bag = draw_bag(test, [0.4, 0.6], 200, np.random.default_rng(10))
    estimate = cap_predict(psi, bag)
    assert 0.0 <= estimate <= 1.0
    true_acc = (model.predict_labels(bag.features) == reveal_labels(bag)).mean()
    assert abs(estimate - true_acc) <= 0.25   # coarse but sane ablation baseline


# ---------------------------------------------------------------------------
# the non-transfer identity
# ---------------------------------------------------------------------------

def test_identity_equal_rates_transfer():
    for p in (0.1, 0.5, 0.9):
        for q in (0.2, 0.7):
            acc_p, acc_q = pps_accuracy_identity(0.8, 0.8, p, q)
            assert acc_p == pytest.approx(0.8) and acc_q == pytest.approx(0.8)


def test_identity_worked_example():
    acc_p, acc_q = pps_accuracy_identity(0.9, 0.8, 0.5, 0.1)
    assert acc_p == pytest.approx(0.85)
    assert acc_q == pytest.approx(0.81)


def test_identity_no_shift_transfers():
    for tpr, tnr in ((0.3, 0.9), (1.0, 0.0), (0.6, 0.55)):
        acc_p, acc_q = pps_accuracy_identity(tpr, tnr, 0.4, 0.4)
        assert acc_p == acc_q


def test_identity_rejects_out_of_range():
    with pytest.raises(ValueError):
        pps_accuracy_identity(1.1, 0.5, 0.5, 0.5)
    with pytest.raises(ValueError):
        pps_accuracy_identity(0.9, 0.5, -0.1, 0.5)
