import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from driftwatch.core import ScenarioSpec, sample_triplet
from driftwatch.detectors import OutputType, fusion_configs
from driftwatch.errors import EmptyTable, SingleClassTable
from driftwatch.fusion import (
    FusionKind,
    FusionModel,
    FusionTable,
    Standardizer,
    apply_standardizer,
    average_model,
    avg_decide,
    build_training_table,
    calibrate_threshold,
    classifier_detect,
    classifier_probability,
    drift_probability,
    fit_standardizer,
    fusion_decide,
    load_model,
    mlp_init,
    mlp_loss_and_grad,
    model_from_dict,
    model_to_dict,
    pl_decide,
    save_model,
    train_classifier,
    train_perceptron,
    _train_mlp,
)


def random_table(seed=0, rows=60, sep=1.5, output_type="statistics"):
    rng = np.random.default_rng(seed)
    y = np.arange(rows) % 2
    x = rng.normal(size=(rows, 4)) + sep * y[:, None]
    return FusionTable(x, y, output_type)


# ---------------------------------------------------------------- oracles

def knn_oracle(train_x, train_y, point, neighbours):
    """Exhaustive scan, ties broken by table order."""
    d = [(float(np.sum((row - point) ** 2)), i) for i, row in enumerate(train_x)]
    d.sort()
    return sum(train_y[i] for _, i in d[:neighbours]) / neighbours


def finite_difference_grads(params, x, y, h=1e-6):
    out = {}
    for key, w in params.items():
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            up = {k: v.copy() for k, v in params.items()}
            dn = {k: v.copy() for k, v in params.items()}
            up[key][idx] += h
            dn[key][idx] -= h
            g[idx] = (mlp_loss_and_grad(up, x, y)[0] - mlp_loss_and_grad(dn, x, y)[0]) / (2 * h)
        out[key] = g
    return out


# ---------------------------------------------------------------- tables

def test_table_validation():
    with pytest.raises(ValueError):
        FusionTable(np.zeros((3, 4)), [0, 1], "pvalues")
    with pytest.raises(ValueError):
        FusionTable(np.zeros((2, 4)), [0, 2], "pvalues")
    with pytest.raises(SingleClassTable):
        FusionTable(np.zeros((2, 4)), [1, 1], "pvalues").require_both_classes()


def test_build_training_table_single_prior_and_toggle():
    cfgs = fusion_configs(4, 25)
    priors = [(sample_triplet(ScenarioSpec("mean", 0.5, 3), 100, s), s % 2) for s in range(3)]
    one = build_training_table(priors[:1], OutputType.PVALUES, cfgs, 0)
    assert len(one) == 1
    p = build_training_table(priors, OutputType.PVALUES, cfgs, 5)
    s = build_training_table(priors, OutputType.STATISTICS, cfgs, 5)
    np.testing.assert_array_equal(p.labels, s.labels)
    assert not np.allclose(p.features, s.features)
    assert ((p.features >= 0) & (p.features <= 1)).all()
    with pytest.raises(EmptyTable):
        build_training_table([], OutputType.PVALUES, cfgs, 0)


# ---------------------------------------------------------------- standardizer

def test_standardizer_hand_values():
    s = fit_standardizer(np.array([[0.0], [2.0]]))
    assert s.mean[0] == 1.0 and s.sd[0] == pytest.approx(np.sqrt(2.0))
    np.testing.assert_allclose(s.apply(np.array([[0.0], [2.0]])).ravel(), [-0.70710678, 0.70710678], atol=1e-8)


def test_standardizer_constant_column_and_unseen_point():
    f = np.array([[1.0, 3.0], [1.0, 5.0], [1.0, 7.0]])
    s = fit_standardizer(f)
    assert (s.apply(f)[:, 0] == 0).all()
    np.testing.assert_allclose(apply_standardizer(s, [[9.0, 9.0]]), [[0.0, 2.0]])
    with pytest.raises(EmptyTable):
        fit_standardizer(np.zeros((0, 4)))


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.tuples(st.integers(3, 30), st.integers(1, 5)), elements=st.floats(-1e3, 1e3)))
def test_standardizer_moments(f):
    s = fit_standardizer(f)
    z = s.apply(f)
    live = s.sd > 1e-6 * (1 + np.abs(f).max())
    assert np.all(np.abs(z.mean(axis=0)[live]) < 1e-10 * (1 + np.abs(f).max()))
    np.testing.assert_allclose(z.std(axis=0, ddof=1)[live], 1.0, atol=1e-8)
    assert (s.sd >= 0).all()


# ---------------------------------------------------------------- AVG and PL

def test_avg_decide_examples():
    assert avg_decide([0.01] * 4, 0.05)
    assert not avg_decide([0.0, 0.08, 0.06, 0.06], 0.05)


def test_perceptron_separable_converges():
    rng = np.random.default_rng(1)
    drift = rng.uniform(0, 0.02, size=(20, 4))
    null = rng.uniform(0.5, 1.0, size=(20, 4))
    table = FusionTable(np.vstack([null, drift]), [0] * 20 + [1] * 20, "pvalues")
    model = train_perceptron(table, 0.05)
    preds = [pl_decide(model, p) for p in table.features]
    assert preds == [bool(z) for z in table.labels]


def test_perceptron_single_update():
    p = np.array([0.3, 0.6, 0.2, 0.9])
    # w = 0 predicts drift; a z = 0 example is a mistake and subtracts p
    model = train_perceptron(FusionTable(np.vstack([p, np.zeros(4)]), [0, 1], "pvalues"), 0.05, max_epochs=1)
    np.testing.assert_array_equal(model.params["w"], -p)


def test_perceptron_needs_both_classes():
    with pytest.raises(SingleClassTable):
        train_perceptron(FusionTable(np.zeros((3, 4)), [0, 0, 0], "pvalues"))


@settings(max_examples=200, deadline=None)
@given(arrays(float, 4, elements=st.floats(0, 1)), st.floats(0.001, 0.5))
def test_pl_with_negative_quarter_weights_is_avg(p, alpha):
    model = FusionModel(FusionKind.PL, "pvalues", alpha, params={"w": -np.ones(4) / 4})
    # both sides evaluate mean(p) against alpha; allow the last-ulp rounding difference
    if abs(np.mean(p) - alpha) > 1e-12:
        assert pl_decide(model, p) == avg_decide(p, alpha)


# ---------------------------------------------------------------- classifiers

def test_lr_two_points_straddle_half():
    table = FusionTable(np.array([[-1.0] * 4, [1.0] * 4]), [0, 1], "statistics")
    model = train_classifier(table, FusionKind.LR)
    p = drift_probability(model, table.features)
    assert p[0] < 0.5 < p[1]


def test_lr_rescaling_invariance():
    table = random_table(3)
    scaled = FusionTable(table.features * np.array([1.0, 7.5, 0.01, 300.0]), table.labels, table.output_type)
    a = train_classifier(table, "LR")
    b = train_classifier(scaled, "LR")
    test = np.random.default_rng(9).normal(size=(50, 4)) + 0.75
    pa = drift_probability(a, test)
    pb = drift_probability(b, test * np.array([1.0, 7.5, 0.01, 300.0]))
    np.testing.assert_allclose(pa, pb, atol=1e-9)
    assert [fusion_decide(a, t) for t in test] == [fusion_decide(b, t * np.array([1.0, 7.5, 0.01, 300.0]))
                                                  for t in test]


def test_knn_matches_exhaustive_oracle():
    table = random_table(4, rows=170, sep=0.8)
    model = train_classifier(table, "KNN")
    x = model.standardizer.apply(table.features)
    queries = np.random.default_rng(5).normal(size=(40, 4)) + 0.4
    got = drift_probability(model, queries)
    for q, g in zip(queries, got):
        assert g == knn_oracle(x, table.labels, model.standardizer.apply(q), 10)
    # no-drift reading is one minus the neighbour share of drift examples
    np.testing.assert_allclose(classifier_probability(model, queries), 1 - got)


def test_knn_invariant_to_stored_order():
    table = random_table(6, rows=50)
    model = train_classifier(table, "KNN")
    perm = np.random.default_rng(0).permutation(50)
    shuffled = FusionModel(model.kind, model.output_type, model.threshold, model.standardizer,
                           {"X": model.params["X"][perm], "y": model.params["y"][perm],
                            "neighbours": model.params["neighbours"]})
    q = np.random.default_rng(1).normal(size=(30, 4))
    np.testing.assert_array_equal(drift_probability(model, q), drift_probability(shuffled, q))


def test_mlp_gradient_matches_finite_differences():
    table = random_table(7)
    std = fit_standardizer(table)
    x0, y0 = std.apply(table.features), table.labels.astype(float)
    for seed in range(3):
        x, y = x0, y0
        params = mlp_init(seed)
        # central differences are only valid away from ReLU kinks
        z1 = x @ params["W1"]
        z2 = np.maximum(z1, 0) @ params["W2"]
        smooth = (np.abs(z1).min(axis=1) > 1e-4) & (np.abs(z2).min(axis=1) > 1e-4)
        x, y = x[smooth], y[smooth]
        assert len(y) > 20
        _, grads = mlp_loss_and_grad(params, x, y)
        fd = finite_difference_grads(params, x, y)
        for k in params:
            scale = np.maximum(np.abs(fd[k]), 1e-6)
            assert np.all(np.abs(grads[k] - fd[k]) <= 1e-5 * scale + 1e-9), k


def test_mlp_topology_and_seeded_init():
    p = mlp_init(3)
    assert [p[f"W{i}"].shape for i in (1, 2, 3)] == [(4, 4), (4, 2), (2, 1)]
    assert all((p[f"b{i}"] == 0).all() for i in (1, 2, 3))
    for key, w in mlp_init(3).items():
        np.testing.assert_array_equal(w, p[key])


def test_mlp_loss_decreases_with_pinned_schedule():
    table = random_table(8, rows=170)
    std = fit_standardizer(table)
    _, hist = _train_mlp(std.apply(table.features), table.labels.astype(float), 0, record_loss=True)
    tail = np.array(hist[len(hist) // 10:])
    assert np.all(np.diff(tail) <= 1e-12)


def test_classifier_rejects_bad_kind_and_single_class():
    with pytest.raises(ValueError):
        train_classifier(random_table(), "AVG")
    with pytest.raises(SingleClassTable):
        train_classifier(FusionTable(np.ones((4, 4)), [1, 1, 1, 1], "pvalues"), "LR")


def test_pc_reading_and_threshold_rule():
    table = random_table(2)
    nd = train_classifier(table, "LR", xi=0.8)
    dr = train_classifier(table, "LR", xi=0.8, pc_reading="drift")
    q = np.random.default_rng(0).normal(size=(20, 4))
    np.testing.assert_allclose(classifier_probability(nd, q) + classifier_probability(dr, q), 1.0)
    for row in q:
        assert fusion_decide(nd, row) == bool(classifier_probability(nd, row)[0] <= 0.8)


def test_degenerate_no_drift_model_never_detects():
    # all neighbours are no-drift examples, so p_c = 1
    x = np.random.default_rng(0).normal(size=(20, 4))
    model = FusionModel(FusionKind.KNN, "statistics", 0.99, fit_standardizer(x),
                        {"X": x, "y": np.zeros(20, dtype=int), "neighbours": np.array([10])})
    assert not any(fusion_decide(model, row) for row in np.random.default_rng(1).normal(size=(50, 4)))


def test_calibrate_threshold_hits_target():
    table = random_table(10, rows=100, sep=1.0)
    model = train_classifier(table, "LR")
    null = np.random.default_rng(3).normal(size=(200, 4))
    xi = calibrate_threshold(model, null, 0.05)
    fires = np.mean([fusion_decide(FusionModel(model.kind, model.output_type, xi, model.standardizer,
                                               model.params), row) for row in null])
    assert fires <= 0.05
    pc = np.sort(classifier_probability(model, null))
    assert np.mean(pc <= np.nextafter(pc[pc > xi].min(), np.inf)) > 0.05


def test_classifier_detect_report():
    table = random_table(11)
    model = train_classifier(table, "KNN")
    cfgs = fusion_configs(4, 25)
    tr = sample_triplet(ScenarioSpec("mean", 0.8, 3), 100, 2)
    rep = classifier_detect(model, tr, cfgs, 1)
    assert rep.detector == "kNN-s"
    assert len(rep.extra["features"]) == 4
    assert rep.drift_detected == fusion_decide(model, np.array(rep.extra["features"]))


# ---------------------------------------------------------------- persistence

@pytest.mark.parametrize("kind", ["AVG", "PL", "LR", "KNN", "MLP"])
def test_model_round_trip_bit_exact(kind, tmp_path):
    table = random_table(12)
    if kind == "AVG":
        model = average_model(0.05)
    elif kind == "PL":
        pt = FusionTable(np.clip(np.abs(table.features) / 5, 0, 1), table.labels, "pvalues")
        model = train_perceptron(pt)
    else:
        model = train_classifier(table, kind, rng=4)
    path = tmp_path / "model.json"
    save_model(model, path)
    back = load_model(path)
    assert back.kind == model.kind and back.threshold == model.threshold
    assert back.output_type == model.output_type and back.pc_reading == model.pc_reading
    for k, v in model.params.items():
        assert back.params[k].dtype == v.dtype
        np.testing.assert_array_equal(back.params[k], v)
    if model.standardizer is not None:
        np.testing.assert_array_equal(back.standardizer.mean, model.standardizer.mean)
        np.testing.assert_array_equal(back.standardizer.sd, model.standardizer.sd)
    q = np.random.default_rng(0).uniform(size=(10, 4))
    assert [fusion_decide(model, r) for r in q] == [fusion_decide(back, r) for r in q]
    assert json.loads(path.read_text())["format"] == "driftwatch-fusion-model"


def test_model_from_dict_rejects_other_formats():
    with pytest.raises(ValueError):
        model_from_dict({"format": "something-else", "version": 1})
    d = model_to_dict(average_model())
    d["version"] = 2
    with pytest.raises(ValueError):
        model_from_dict(d)


@pytest.mark.slow
@pytest.mark.parametrize("output_type", ["pvalues", "statistics"])
def test_mlp_loss_non_increasing_on_default_mix(default_fusion_training, output_type):
    from driftwatch.fusion import table_from_outputs

    outputs, labels = default_fusion_training
    table = table_from_outputs(outputs, labels, output_type)
    assert len(table) == 170 and int((table.labels == 0).sum()) == 50
    std = fit_standardizer(table)
    _, hist = _train_mlp(std.apply(table.features), table.labels.astype(float), 0, record_loss=True)
    tail = np.array(hist[len(hist) // 10:])
    assert np.all(np.diff(tail) <= 0)
