import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corgan import evaluation as ev
from corgan.data import RecordMatrix, synth_continuous, synth_corpus
from corgan.errors import ConfigurationError, ShapeError

from oracles import auprc_by_thresholds, auroc_by_pairs, f1_by_counting, random_instance


# -- metrics ------------------------------------------------------------------

def test_f1_examples():
    assert ev.f1_score([1, 0, 1], [1, 0, 1]) == 1.0
    assert ev.f1_score([1, 1, 0], [1, 0, 1]) == 0.5  # TP=1, FN=1, FP=1
    assert ev.f1_score([0, 0], [0, 0]) == 0.0


def test_auc_examples():
    y = np.array([0, 1, 1, 0, 1])
    assert ev.auroc(y, y) == 1.0 and ev.auprc(y, y) == 1.0
    assert ev.auroc(y, 1 - y) == 0.0
    with pytest.raises(ValueError):
        ev.auroc([1, 1], [0.2, 0.3])
    with pytest.raises(ValueError):
        ev.auprc([0, 0], [0.2, 0.3])


def test_metrics_match_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        y, s = random_instance(rng)
        pred = (s >= 0.5).astype(int)
        assert abs(ev.f1_score(y, pred) - f1_by_counting(y, pred)) <= 1e-12
        assert abs(ev.auroc(y, s) - auroc_by_pairs(y, s)) <= 1e-12
        assert abs(ev.auprc(y, s) - auprc_by_thresholds(y, s)) <= 1e-12


def test_random_scores_baseline():
    rng = np.random.default_rng(1)
    y = rng.permutation(np.repeat([0, 1], 5000))
    s = rng.random(10_000)
    assert abs(ev.auroc(y, s) - 0.5) < 0.02
    assert abs(ev.auprc(y, s) - y.mean()) < 0.02


@given(st.integers(0, 10_000))
def test_metric_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    y, s = random_instance(rng, 20)
    perm = rng.permutation(len(y))
    pred = (s > 0.4).astype(int)
    assert ev.f1_score(y, pred) == ev.f1_score(y[perm], pred[perm])
    assert ev.auroc(y, s) == pytest.approx(ev.auroc(y[perm], s[perm]), abs=1e-12)
    assert ev.auprc(y, s) == pytest.approx(ev.auprc(y[perm], s[perm]), abs=1e-12)


@given(st.integers(0, 10_000))
def test_auroc_monotone_transform_invariance(seed):
    rng = np.random.default_rng(seed)
    y, s = random_instance(rng, 20)
    assert ev.auroc(y, s) == ev.auroc(y, np.exp(3 * s) - 7)


@settings(max_examples=50)
@given(st.integers(0, 10_000))
def test_metrics_in_unit_interval(seed):
    y, s = random_instance(np.random.default_rng(seed), 30)
    for v in (ev.auroc(y, s), ev.auprc(y, s), ev.f1_score(y, s > 0.5)):
        assert 0.0 <= v <= 1.0


# -- classifiers --------------------------------------------------------------

@pytest.mark.parametrize("kind", ev.CLASSIFIER_KINDS)
def test_two_separable_points(kind):
    X = np.array([[0.0, 1.0], [1.0, 0.0]])
    y = np.array([0, 1])
    model = ev.train_classifier(kind, X, y, min_leaf=1)
    assert np.array_equal(model.predict(X), y)


@pytest.mark.parametrize("kind", ev.CLASSIFIER_KINDS)
def test_single_class_is_degenerate(kind):
    model = ev.train_classifier(kind, np.random.default_rng(0).random((10, 3)), np.zeros(10))
    assert model.degenerate
    assert np.all(model.predict(np.ones((4, 3))) == 0)
    assert np.all(model.predict_proba(np.ones((4, 3))) == 0.0)


def test_xor_enumeration():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1, 1, 0])
    tree = ev.train_classifier("decision_tree", X, y, max_depth=2, min_leaf=1)
    assert np.mean(tree.predict(X) == y) == 1.0
    logit = ev.train_classifier("logistic_regression", X, y)
    assert np.mean(logit.predict(X) == y) <= 0.75


def test_classifier_validation():
    with pytest.raises(ConfigurationError):
        ev.train_classifier("svm", np.ones((3, 2)), [0, 1, 0])
    with pytest.raises(ShapeError):
        ev.train_classifier("decision_tree", np.ones((3, 2)), [0, 1])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(ev.CLASSIFIER_KINDS))
def test_classifier_outputs_in_range(seed, kind):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((40, 3))
    y = (X[:, 0] + 0.5 * rng.standard_normal(40) > 0).astype(int)
    model = ev.train_classifier(kind, X, y)
    p = model.predict_proba(rng.standard_normal((10, 3)) * 5)
    assert np.all((p >= 0) & (p <= 1))
    assert set(model.predict(X)) <= {0, 1}


def test_logistic_learns_a_linear_rule():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((500, 4))
    y = (X @ [1.0, -2.0, 0.0, 0.5] > 0).astype(int)
    model = ev.train_classifier("logistic_regression", X, y)
    assert np.mean(model.predict(X) == y) > 0.95


# -- dimension-wise probability ----------------------------------------------

def test_dimension_probability_identity_and_column():
    S = synth_corpus(200, 10, seed=0)
    rep = ev.dimension_wise_probability(S, S)
    assert rep.max_deviation == 0.0 and rep.mean_abs_deviation == 0.0
    col = ev.dimension_wise_probability(np.array([[1.0], [0.0], [1.0], [1.0]]), np.zeros((2, 1)))
    assert col.p_real[0] == 0.75 and col.p_syn[0] == 0.0
    with pytest.raises(ShapeError):
        ev.dimension_wise_probability(np.zeros((2, 3)), np.zeros((2, 4)))


def test_dimension_probability_files(tmp_path):
    rep = ev.dimension_wise_probability(synth_corpus(50, 5, seed=1), synth_corpus(80, 5, seed=2))
    rep.write_csv(tmp_path / "p.csv")
    rep.write_scatter(tmp_path / "s.txt")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert len(lines) == 6
    assert len((tmp_path / "s.txt").read_text().splitlines()[-1].split()) == 2


# -- dimension-wise prediction -----------------------------------------------

def test_dimension_prediction_identity_is_exact():
    S_tr = synth_corpus(300, 12, seed=3)
    S_te = synth_corpus(150, 12, seed=4)
    rep = ev.dimension_wise_prediction(S_tr, S_te, S_tr, runs=12, seed=0)
    assert np.all(rep.diffs() == 0.0)
    assert rep.mean_diff == 0.0


def test_dimension_prediction_skips_constant_columns_and_notes_shortfall():
    rng = np.random.default_rng(0)
    te = (rng.random((60, 6)) < 0.4).astype(float)
    te[:, 2] = 0.0
    tr = (rng.random((80, 6)) < 0.4).astype(float)
    rep = ev.dimension_wise_prediction(tr, te, tr, runs=10, kinds=("logistic_regression",), seed=1)
    assert rep.usable_dimensions == 5 and rep.shortfall == 5
    assert 2 not in {r.dimension for r in rep.runs}
    assert len({r.dimension for r in rep.runs}) == 5


def test_dimension_prediction_aggregates_recompute(tmp_path):
    rep = ev.dimension_wise_prediction(synth_corpus(200, 8, seed=5), synth_corpus(100, 8, seed=6),
                                       synth_corpus(200, 8, seed=7), runs=5, seed=2)
    d = np.array([r.f1_real - r.f1_syn for r in rep.runs])
    assert rep.mean_diff == pytest.approx(d.mean(), abs=1e-15)
    assert rep.std_diff == pytest.approx(d.std(), abs=1e-15)
    assert rep.mean_abs_diff == pytest.approx(np.abs(d).mean(), abs=1e-15)
    assert all(0 <= r.f1_real <= 1 and 0 <= r.f1_syn <= 1 for r in rep.runs)
    rep.write_csv(tmp_path / "d.csv")
    assert len((tmp_path / "d.csv").read_text().splitlines()) == 1 + len(rep.runs)


# -- binary classification ---------------------------------------------------

def _eeg():
    data = synth_continuous(600, 20, seed=0)
    return data.take(np.arange(400)), data.take(np.arange(400, 600))


def test_binary_classification_identity():
    tr, te = _eeg()
    rep = ev.binary_classification_eval(tr, te, tr)
    a = [(r.classifier, r.auroc, r.auprc) for r in rep.results if r.setting == "A"]
    b = [(r.classifier, r.auroc, r.auprc) for r in rep.results if r.setting == "B"]
    assert a == b
    assert rep.average("A") == rep.average("B")
    roc, prc = rep.average("A")
    assert 0 <= prc <= 1 and 0.5 < roc <= 1


def test_binary_classification_degenerate_synthetic():
    tr, te = _eeg()
    one_class = RecordMatrix(tr.values[:50], "continuous", np.zeros(50, dtype=int))
    rep = ev.binary_classification_eval(tr, te, one_class)
    assert rep.degenerate
    assert all(r.auroc == 0.5 for r in rep.results if r.setting == "B")


def test_binary_classification_needs_labels():
    tr, te = _eeg()
    with pytest.raises(ConfigurationError):
        ev.binary_classification_eval(tr, te, RecordMatrix(tr.values, "continuous"))
