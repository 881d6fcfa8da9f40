import csv
import io
import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainent.features import FeatureMatrix
from chainent.features import schema as S
from chainent.learn import (
    GBDTParams,
    SplitError,
    evaluate,
    evaluate_predictions,
    feature_importance,
    fit,
    gp_optimize,
    incremental_groups_study,
    log_loss,
    logreg_objective,
    model_from_json,
    model_to_json,
    selection_curve,
    split,
    train_gbdt,
    train_logreg,
)
from chainent.learn.data import Dataset, split_indices, stratified_counts
from chainent.learn.gbdt import BoostedEnsemble, softmax_loss
from chainent.learn.gp import SurrogateGP, expected_improvement
from chainent.learn.logreg import LogisticModel
from chainent.learn.studies import GROUP_ORDER, gain_by_feature, rows_to_csv
from chainent.txmodel import CATEGORY_ORDER, Category

C5 = CATEGORY_ORDER


def matrix(labels, X=None, columns=None):
    n = len(labels)
    if X is None:
        X = np.arange(n, dtype=np.float64).reshape(n, 1)
    columns = columns or tuple(f"c{j}" for j in range(X.shape[1]))
    return FeatureMatrix(tuple(columns), np.arange(n), X, list(labels))


def xor_set(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 2))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(np.int64)
    return X, y


def blobs(n_per=30, k=3, d=4, sep=3.0, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=sep, size=(k, d))
    X = np.vstack([centers[c] + rng.normal(size=(n_per, d)) for c in range(k)])
    y = np.repeat(np.arange(k), n_per)
    return X, y


def toy_dataset(n_per=20, k=5, d=315, seed=0, columns=S.COLUMNS):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_per * k, d))
    y = np.repeat(np.arange(k), n_per)
    X[:, 0] += 2.0 * y
    X[:, d - 1] += 1.5 * y
    return split(matrix([C5[c] for c in y], X, columns), seed=seed)


# -- split -------------------------------------------------------------------


def test_ten_rows_one_class_splits_seven_three():
    ds = split(matrix([Category.MINING] * 10), seed=1)
    assert (len(ds.y_train), len(ds.y_test)) == (7, 3)


def test_balanced_five_classes_split_fourteen_six_each():
    labels = [c for c in C5 for _ in range(20)]
    ds = split(matrix(labels), seed=3)
    assert np.bincount(ds.y_train).tolist() == [14] * 5
    assert np.bincount(ds.y_test).tolist() == [6] * 5


def test_same_seed_same_split():
    labels = [C5[i % 5] for i in range(47)]
    a, b = split(matrix(labels), 9), split(matrix(labels), 9)
    assert a.ids_train.tolist() == b.ids_train.tolist()
    assert a.ids_test.tolist() == b.ids_test.tolist()


def test_single_row_class_is_rejected():
    with pytest.raises(SplitError):
        split(matrix([Category.MINING] * 5 + [Category.DARKNET]), 0)


@given(st.lists(st.integers(2, 40), min_size=1, max_size=5), st.integers(0, 2**32 - 1))
def test_split_is_stratified_disjoint_and_covering(sizes, seed):
    y = np.repeat(np.arange(len(sizes)), sizes)
    tr, te = split_indices(y, seed)
    assert set(tr).isdisjoint(te) and len(tr) + len(te) == len(y)
    assert abs(len(tr) - 0.7 * len(y)) <= 1 + 1e-9 * len(y) or min(sizes) <= 3
    for c, n in enumerate(sizes):
        k = int((y[tr] == c).sum())
        assert 1 <= k <= n - 1
        assert abs(k - 0.7 * n) < 1 + 1e-9 or n <= 3


def test_stratified_counts_hit_rounded_total():
    assert sum(stratified_counts([33, 33, 34])) == 70
    assert stratified_counts([10]) == [7]


# -- logistic regression -------------------------------------------------------


def test_sigmoid_is_half_at_zero_score():
    m = LogisticModel((0, 1), np.zeros((2, 3)), np.zeros(2), 1.0)
    assert np.allclose(m.predict_proba(np.zeros((1, 3))), 0.5)


def test_separable_two_class_set_is_fit_exactly():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(80, 3))
    y = (X @ np.array([1.0, -2.0, 0.5]) > 0).astype(int)
    X[y == 1] += 0.3 * np.array([1.0, -2.0, 0.5])
    m = train_logreg(X, y, (0, 1), inverse_l2=100.0)
    assert (m.predict(X) == y).all()


def finite_difference_error(seed, eps=1e-5):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(3, 30)), int(rng.integers(1, 8))
    X = rng.normal(size=(n, d))
    s = rng.choice([-1.0, 1.0], size=n)
    params = rng.normal(size=d + 1)
    C = float(rng.uniform(0.01, 3.0))
    _, grad = logreg_objective(params, X, s, C)
    num = np.empty_like(params)
    for j in range(len(params)):
        e = np.zeros_like(params)
        e[j] = eps
        num[j] = (logreg_objective(params + e, X, s, C)[0] - logreg_objective(params - e, X, s, C)[0]) / (2 * eps)
    return float(np.max(np.abs(grad - num) / np.maximum(np.abs(num), 1.0)))


def test_gradient_matches_finite_differences():
    assert max(finite_difference_error(seed) for seed in range(100)) < 1e-4


def test_logreg_rejects_non_finite_and_bad_strength():
    X = np.ones((4, 2))
    with pytest.raises(ValueError):
        train_logreg(X, [0, 1, 0, 1], (0, 1), inverse_l2=0.0)
    X[0, 0] = np.nan
    with pytest.raises(ValueError):
        train_logreg(X, [0, 1, 0, 1], (0, 1))


def test_width_mismatch_is_rejected():
    m = train_logreg(np.eye(4), [0, 1, 0, 1], (0, 1))
    with pytest.raises(ValueError):
        m.predict(np.ones((2, 3)))
    g = train_gbdt(np.eye(4), [0, 1, 0, 1], (0, 1), GBDTParams(min_samples_leaf=1, max_iters=2))
    with pytest.raises(ValueError):
        g.predict(np.ones((2, 3)))


# -- boosting ------------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 4), st.sampled_from([0.05, 0.3, 1.0]))
def test_training_loss_never_increases(seed, k, lr):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 60))
    X = rng.normal(size=(n, 3))
    X[:, 2] = np.round(X[:, 2])
    y = rng.integers(0, k, size=n)
    model = train_gbdt(X, y, tuple(range(k)), GBDTParams(learning_rate=lr, min_samples_leaf=2, max_leaves=6, max_iters=15))
    assert np.all(np.diff(model.train_loss) <= 1e-12)


def test_xor_is_learned_within_fifty_stages_but_not_by_lr():
    X, y = xor_set()
    model = train_gbdt(X, y, (0, 1), GBDTParams(max_iters=50))
    assert model.n_stages <= 50
    assert (model.predict(X) == y).all()
    assert (train_logreg(X, y, (0, 1)).predict(X) == y).mean() < 0.8


def test_pure_class_training_set_keeps_only_the_prior():
    X = np.random.default_rng(0).normal(size=(30, 2))
    model = train_gbdt(X, np.full(30, 2), tuple(C5[:3]))
    assert model.n_stages == 0
    assert (model.predict(X) == 2).all()


def test_fewer_than_two_classes_is_an_error():
    with pytest.raises(ValueError):
        train_gbdt(np.ones((5, 1)), np.zeros(5, dtype=int), (Category.MINING,))


def test_early_stopping_ends_after_ten_flat_rounds():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(120, 5))
    y = (X[:, 0] + rng.normal(scale=1.5, size=120) > 0).astype(int)
    valid = (X[80:], y[80:])
    model = train_gbdt(X[:80], y[:80], (0, 1), GBDTParams(learning_rate=0.5, min_samples_leaf=3), valid=valid)
    vl = model.valid_loss
    best = int(np.argmin(vl))
    assert len(vl) - 1 < 500
    assert len(vl) - 1 - best == 10
    assert all(v >= vl[best] for v in vl[best + 1:])
    assert model.n_stages == model.best_iteration == best
    assert math.isclose(softmax_loss(model.decision_function(valid[0]), valid[1]), vl[best], rel_tol=1e-9)


def test_iteration_cap_without_stall_keeps_every_stage():
    X, y = blobs()
    model = train_gbdt(X[::2], y[::2], (0, 1, 2), GBDTParams(max_iters=5, min_samples_leaf=3), valid=(X[1::2], y[1::2]))
    assert len(model.valid_loss) == 6 and model.n_stages <= 5


def test_every_row_reaches_exactly_one_leaf():
    X, y = blobs(k=3)
    model = train_gbdt(X, y, (0, 1, 2), GBDTParams(max_iters=3, min_samples_leaf=2))
    for trees in model.stages:
        for tree in trees:
            leaves = tree.apply(X)
            assert set(leaves.tolist()) <= set(tree.leaves)


# -- prediction --------------------------------------------------------------


def test_uniform_scores_pick_first_class():
    lr = LogisticModel(C5, np.zeros((5, 2)), np.zeros(5), 1.0)
    gb = BoostedEnsemble(C5, 2, np.zeros(5), 0.1)
    X = np.ones((3, 2))
    assert lr.predict(X).tolist() == [0, 0, 0]
    assert gb.predict(X).tolist() == [0, 0, 0]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_probabilities_lie_on_simplex(seed):
    rng = np.random.default_rng(seed)
    X, y = blobs(n_per=10, k=3, d=3, seed=seed)
    Z = rng.normal(scale=50, size=(20, 3))
    for model in (train_logreg(X, y, (0, 1, 2)), train_gbdt(X, y, (0, 1, 2), GBDTParams(max_iters=5, min_samples_leaf=2))):
        P = model.predict_proba(Z)
        assert np.all(P >= 0) and np.allclose(P.sum(axis=1), 1.0, atol=1e-9)


def test_perfectly_fit_training_rows_keep_their_label():
    X, y = blobs(sep=8.0)
    for model in (train_logreg(X, y, (0, 1, 2)), train_gbdt(X, y, (0, 1, 2), GBDTParams(min_samples_leaf=5))):
        assert (model.predict(X) == y).all()


# -- metrics -----------------------------------------------------------------


def test_perfect_predictions():
    y = np.arange(5).repeat(4)
    m = evaluate_predictions(y, y, C5)
    assert m.accuracy == 1.0 and m.macro_f1 == 1.0 and m.macro_precision == 1.0


def test_constant_predictor_on_balanced_set():
    y = np.arange(5).repeat(4)
    assert evaluate_predictions(y, np.zeros_like(y), C5).accuracy == 0.2


def test_evaluate_rejects_empty_test_set():
    m = train_logreg(np.eye(2), [0, 1], (0, 1))
    with pytest.raises(ValueError):
        evaluate(m, np.zeros((0, 2)), np.zeros(0, dtype=int), (0, 1))


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=60))
def test_metrics_match_recount(pairs):
    yt = np.array([p[0] for p in pairs])
    yp = np.array([p[1] for p in pairs])
    m = evaluate_predictions(yt, yp, C5)
    assert m.confusion.sum(axis=1).tolist() == [sum(t == c for t, _ in pairs) for c in range(5)]
    assert m.accuracy == sum(t == p for t, p in pairs) / len(pairs)
    f1s, precs = [], []
    for c in range(5):
        tp = sum(t == c and p == c for t, p in pairs)
        pred = sum(p == c for _, p in pairs)
        true = sum(t == c for t, _ in pairs)
        prec = tp / pred if pred else 0.0
        rec = tp / true if true else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        assert math.isclose(m.recall[c], rec) and math.isclose(m.precision[c], prec)
        f1s.append(f1)
        precs.append(prec)
    assert math.isclose(m.macro_f1, sum(f1s) / 5, abs_tol=1e-12)
    assert math.isclose(m.macro_precision, sum(precs) / 5, abs_tol=1e-12)


def test_metrics_csv_has_overall_row_then_classes():
    y = np.array([0, 1, 1, 2])
    rows = list(csv.reader(io.StringIO(evaluate_predictions(y, y, C5[:3]).to_csv())))
    assert rows[0] == ["class", "support", "accuracy", "f1", "precision"]
    assert rows[1][:3] == ["all", "4", "1.000000"]
    assert [r[0] for r in rows[2:]] == ["Exchange", "Gambling", "Mining"]


def test_log_loss_of_certain_correct_predictions_is_zero():
    assert log_loss(np.eye(3), np.arange(3)) == 0.0


# -- GP tuning ---------------------------------------------------------------


def test_gp_finds_quadratic_optimum():
    r = gp_optimize(lambda t: (t - 0.3) ** 2, (0.0, 1.0), n_iters=50, seed=4)
    assert abs(r.best_theta - 0.3) < 0.05


def test_constant_objective_gives_full_trace():
    r = gp_optimize(lambda t: 1.0, (0.0, 2.0), n_iters=50, seed=0)
    assert len(r.thetas) == 50 and all(0.0 <= t <= 2.0 for t in r.thetas)
    assert len(r.trace_csv().splitlines()) == 51


def test_seeded_search_repeats_exactly():
    f = lambda t: math.sin(7 * t) + t
    a, b = gp_optimize(f, (0, 3), 20, seed=11), gp_optimize(f, (0, 3), 20, seed=11)
    assert a.trace_csv() == b.trace_csv()


def test_non_finite_values_do_not_stop_the_search():
    r = gp_optimize(lambda t: math.nan if t > 0.5 else (t - 0.2) ** 2, (0, 1), 30, seed=2)
    assert len(r.values) == 30 and math.isfinite(r.best_value) and r.best_theta <= 0.5


def test_degenerate_box_is_rejected():
    with pytest.raises(ValueError):
        gp_optimize(lambda t: t, (1.0, 1.0))


@given(st.lists(st.floats(0, 1), min_size=2, max_size=12, unique=True), st.integers(0, 1000))
@settings(deadline=None)
def test_expected_improvement_vanishes_at_observations(us, seed):
    us = np.array(sorted(set(np.round(us, 3))))
    if len(us) < 2:
        return
    y = np.random.default_rng(seed).normal(size=len(us))
    gp = SurrogateGP(us, y)
    mu, sigma = gp.predict(us)
    assert np.all(expected_improvement(mu, sigma, float(gp.z.min())) < 1e-3)
    grid = np.linspace(0, 1, 501)
    assert np.all(expected_improvement(*gp.predict(grid), float(gp.z.min())) >= 0)


# -- importance and studies --------------------------------------------------


def test_single_feature_ranks_first():
    X, y = blobs(d=1)
    model = train_gbdt(X, y, (0, 1, 2), GBDTParams(max_iters=5, min_samples_leaf=3))
    ranked = feature_importance(model, ("only",))
    assert ranked[0][0] == "only" and ranked[0][1] > 0


def test_unused_feature_has_zero_gain_and_ties_keep_order():
    X, y = blobs(d=2)
    X = np.column_stack([np.zeros(len(y)), X, np.zeros(len(y))])
    model = train_gbdt(X, y, (0, 1, 2), GBDTParams(max_iters=5, min_samples_leaf=3))
    ranked = dict(feature_importance(model, ("z0", "a", "b", "z1")))
    assert ranked["z0"] == 0.0 and ranked["z1"] == 0.0
    assert [c for c, _ in feature_importance(model, ("z0", "a", "b", "z1"))][-2:] == ["z0", "z1"]


def test_gains_add_up_to_second_order_loss_reduction():
    X, y = blobs(k=3, d=4)
    params = GBDTParams(max_iters=8, min_samples_leaf=4)
    model = train_gbdt(X, y, (0, 1, 2), params)
    lam = params.reg_lambda
    total = 0.0
    for trees in model.stages:
        for t in trees:
            score = lambda j: t.grad_sum[j] ** 2 / (t.hess_sum[j] + lam)
            total += sum(score(j) for j in t.leaves) - score(0)
    assert math.isclose(gain_by_feature(model).sum(), total, rel_tol=1e-9)


def test_group_prefix_widths():
    ds = toy_dataset(n_per=6)
    rows = incremental_groups_study(ds, algorithms=("lr",))
    assert [r["n_features"] for r in rows] == [10, 18, 62, 78, 120, 201, 315]
    assert rows[0]["groups"] == "Address"


def test_group_cells_match_standalone_runs():
    ds = toy_dataset(n_per=8)
    rows = incremental_groups_study(ds)
    for r in rows:
        groups = set(r["groups"].split("+"))
        idx = [j for g in GROUP_ORDER if g in groups for j, c in enumerate(ds.columns) if c.startswith(g + ".")]
        sub = ds.select(idx)
        m = evaluate(fit(sub, r["alg"]), sub.X_test, sub.y_test, sub.classes)
        assert (m.accuracy, m.macro_f1, m.macro_precision) == (r["accuracy"], r["f1"], r["precision"])


def test_selection_curve_full_width_equals_full_model():
    ds = toy_dataset(n_per=10)
    ranking = list(reversed(ds.columns))
    rows = selection_curve(ds, ranking, ks=(1, 315), thetas={"gbdt": 0.2})
    full = {alg: evaluate(fit(ds, alg, {"gbdt": 0.2}.get(alg)), ds.X_test, ds.y_test, ds.classes).summary() for alg in ("lr", "gbdt")}
    for r in rows:
        if r["k"] == 315:
            assert {k: r[k] for k in ("accuracy", "f1", "precision")} == full[r["alg"]]
    loss = {r["k"]: r["train_log_loss"] for r in rows if r["alg"] == "gbdt"}
    assert loss[1] >= loss[315]
    header = rows_to_csv(rows).splitlines()[0].split(",")
    assert header[:4] == ["k", "alg", "accuracy", "f1"]


def test_selection_rejects_k_beyond_ranking():
    ds = toy_dataset(n_per=4, d=3, columns=("Address.a", "Address.b", "Address.c"))
    with pytest.raises(ValueError):
        selection_curve(ds, list(ds.columns), ks=(4,))


# -- serialisation -----------------------------------------------------------


@pytest.mark.parametrize("alg", ["lr", "gbdt"])
def test_model_json_round_trip(alg):
    ds = toy_dataset(n_per=10, d=12, columns=tuple(f"Address.f{j}" for j in range(12)))
    model = fit(ds, alg, 0.3)
    back, columns = model_from_json(model_to_json(model, ds.columns))
    assert columns == ds.columns and back.classes == model.classes
    assert np.array_equal(back.predict_proba(ds.X_test), model.predict_proba(ds.X_test))
    assert model_to_json(back, columns) == model_to_json(model, ds.columns)


def test_fit_rejects_unknown_algorithm():
    with pytest.raises(ValueError):
        fit(toy_dataset(n_per=4, d=2, columns=("Address.a", "Address.b")), "svm")


def test_dataset_select_keeps_rows():
    ds = toy_dataset(n_per=4, d=3, columns=("Address.a", "Address.b", "Address.c"))
    sub = ds.select([2, 0])
    assert sub.columns == ("Address.c", "Address.a")
    assert np.array_equal(sub.X_train[:, 1], ds.X_train[:, 0]) and isinstance(sub, Dataset)


def test_split_finder_backends_agree():
    from chainent import _kernels_py, kernels

    rng = np.random.default_rng(8)
    X = np.ascontiguousarray(np.round(rng.normal(size=(300, 6)), 1))
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T, dtype=np.int64)
    node_of = rng.integers(0, 3, size=300).astype(np.int64)
    grad, hess = rng.normal(size=300), rng.uniform(0.01, 0.25, size=300)
    for node in range(3):
        for min_leaf in (1, 5, 40):
            args = (X, order, node_of, node, grad, hess, min_leaf, 1e-3, 1.0)
            assert kernels.best_split(*args) == _kernels_py.best_split(*args)


def test_pure_python_switch_selects_fallback():
    code = "from chainent import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env={**os.environ, "CHAINENT_PURE": "1"},
                         capture_output=True, text=True, check=True).stdout.strip()
    assert out == "python"
