import numpy as np
import pytest

from webdvfs.device import Metric, ProcessorConfig, BIG, LITTLE, oracle_best
from webdvfs.features import FeatureVector, DOM_NODES, fit_normalizer, normalize
from webdvfs.learn import (LabelSet, LabeledExample, kernel, kernel_matrix, smo_solve, smo_train, kkt_violations,
                           BinarySvm, MulticlassSvmModel, train_multiclass, vote, predict_label, save_model,
                           load_model, stratified_folds, cross_val_accuracy, grid_search, generate_training_data,
                           oracle_labels)
from webdvfs.utils import TrainingError, SchemaMismatch, WebdvfsException

from webdvfs.test.mocks import make_vector, wikipedia_vector, vector_corpus


CONFIGS = (ProcessorConfig(BIG, 0.9, 0.4), ProcessorConfig(LITTLE, 0.4, 0.4),
           ProcessorConfig(LITTLE, 1.0, 1.0), ProcessorConfig(BIG, 2.0, 1.4))


def examples_from(X, labels):
    return [LabeledExample(f"p{n}", FeatureVector('toy', tuple(float(v) for v in x), normalized=True), int(label))
            for n, (x, label) in enumerate(zip(X, labels))]


def clusters(k, per_cluster=6, seed=0):
    # k well separated blobs on the unit square
    rng = np.random.default_rng(seed)
    centres = np.array([[0.1, 0.1], [0.9, 0.9], [0.1, 0.9], [0.9, 0.1]])[:k]
    X = np.concatenate([c + 0.03 * rng.standard_normal((per_cluster, 2)) for c in centres])
    labels = np.repeat(np.arange(k), per_cluster)
    return X, labels


def test_kernel():
    assert kernel([1.0, 2.0], [1.0, 2.0], 5.0) == 1.0
    assert kernel([0.0], [1.0], np.log(2)) == pytest.approx(0.5)
    K = kernel_matrix([[0.0], [1.0]], [[0.0], [1.0]], np.log(2))
    assert K == pytest.approx(np.array([[1.0, 0.5], [0.5, 1.0]]))
    with pytest.raises(SchemaMismatch):
        kernel([0.0], [0.0, 1.0], 1.0)


def test_two_points_split_at_midpoint():
    svm = smo_train([[0.0], [1.0]], [-1, 1], C=10.0, gamma=1.0)
    assert svm.decision([[0.5]])[0] == pytest.approx(0.0, abs=1e-9)
    assert svm.predict([[0.0], [1.0]]).tolist() == [-1, 1]
    assert svm.bias == pytest.approx(0.0, abs=1e-9)


def test_xor_is_separable():
    X = [[0, 0], [1, 1], [0, 1], [1, 0]]
    svm = smo_train(X, [-1, -1, 1, 1], C=10.0, gamma=1.0)
    assert svm.predict(X).tolist() == [-1, -1, 1, 1]


def test_binary_training_errors():
    with pytest.raises(TrainingError):
        smo_train([[0.0], [1.0]], [1, 1], C=1.0, gamma=1.0)
    with pytest.raises(TrainingError):
        smo_train([[0.0], [1.0]], [0, 1], C=1.0, gamma=1.0)
    with pytest.raises(TrainingError):
        smo_train([[0.0], [1.0]], [-1, 1], C=0.0, gamma=1.0)


def test_kkt_conditions_hold_after_convergence():
    tol = 1e-3
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = rng.random((30, 3))
        y = np.where(X[:, 0] + 0.2 * rng.standard_normal(30) > 0.5, 1.0, -1.0)
        y[0], y[1] = 1.0, -1.0
        C, gamma = [0.5, 1.0, 10.0][seed % 3], [0.5, 2.0][seed % 2]
        K = kernel_matrix(X, X, gamma)
        alpha, bias, iterations = smo_solve(K, y, C, tol)
        assert np.all(alpha >= 0) and np.all(alpha <= C)
        assert abs(np.dot(alpha, y)) < 1e-9
        svm = BinarySvm(X, y * alpha, bias, gamma, C, iterations)
        assert len(kkt_violations(X, y, alpha, svm, tol * 1.001)) == 0


def test_binary_svm_json():
    svm = smo_train([[0.0, 0.0], [1.0, 1.0], [0.2, 0.1]], [-1, 1, -1], C=1.0, gamma=2.0)
    again = BinarySvm.from_json(svm.to_json())
    points = [[0.5, 0.5], [0.0, 1.0], [0.9, 0.8]]
    assert again.decision(points).tolist() == svm.decision(points).tolist()


def test_four_labels_give_six_machines():
    X, labels = clusters(4)
    label_set = LabelSet(Metric.ENERGY, CONFIGS)
    model = train_multiclass(examples_from(X, labels), label_set, C=10.0, gamma=5.0)
    assert len(model.machines) == 6
    assert sorted(model.machines) == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    assert vote(model, X).tolist() == labels.tolist()


def test_model_round_trip(tmp_path):
    X, labels = clusters(3)
    label_set = LabelSet(Metric.EDP, CONFIGS[:3])
    model = train_multiclass(examples_from(X, labels), label_set, C=1.0, gamma=2.0)
    path = save_model(model, tmp_path / 'model_edp.json')
    again = load_model(path)
    assert again.metric is Metric.EDP
    assert again.label_set == label_set
    points = np.random.default_rng(1).random((1000, 2))
    assert vote(again, points).tolist() == vote(model, points).tolist()


def test_malformed_model(tmp_path):
    path = tmp_path / 'model.json'
    path.write_text('{"format": "something-else"}')
    with pytest.raises(WebdvfsException):
        load_model(path)


def test_single_label_gives_constant_predictor():
    X, _ = clusters(2)
    label_set = LabelSet(Metric.LOAD_TIME, CONFIGS[:2])
    model = train_multiclass(examples_from(X, [1] * len(X)), label_set, C=1.0, gamma=1.0)
    assert model.constant_label == 1
    assert model.machines == {}
    assert vote(model, [[0.5, 0.5], [5.0, -3.0]]).tolist() == [1, 1]


def test_vote_ties_go_to_lowest_label():
    X, labels = clusters(3)
    model = train_multiclass(examples_from(X, labels), LabelSet(Metric.ENERGY, CONFIGS[:3]), C=1.0, gamma=1.0)
    # 0 beats 1, 1 beats 2, 2 beats 0: one vote each
    fixed = {(0, 1): 1.0, (1, 2): 1.0, (0, 2): -1.0}
    machines = {pair: BinarySvm(np.zeros((0, 2)), np.zeros(0), fixed[pair], 1.0, 1.0)
                for pair in model.machines}
    cyclic = MulticlassSvmModel(model.metric, model.label_set, machines, model.normalization, model.schema_version)
    assert vote(cyclic, [[0.5, 0.5]]).tolist() == [0]


def test_crafted_model_predicts_wikipedia_like_page():
    pages = [('wiki', wikipedia_vector()), ('tiny', make_vector({DOM_NODES: 4}))]
    table = fit_normalizer([v for _, v in pages])
    label_set = LabelSet(Metric.LOAD_TIME, (ProcessorConfig(BIG, 0.9, 0.4), ProcessorConfig(LITTLE, 0.4, 0.4)))
    examples = [LabeledExample(pid, normalize(v, table), k) for k, (pid, v) in enumerate(pages)]
    model = train_multiclass(examples, label_set, C=10.0, gamma=1.0, normalization=table)
    assert predict_label(model, wikipedia_vector()) == ProcessorConfig(BIG, 0.9, 0.4)
    assert predict_label(model, make_vector({DOM_NODES: 4})) == ProcessorConfig(LITTLE, 0.4, 0.4)
    with pytest.raises(SchemaMismatch):
        predict_label(model, FeatureVector('webfeatures-0', wikipedia_vector().values))


def test_stratified_folds():
    folds = stratified_folds([0, 0, 0, 1, 1, 0, 1], folds=3)
    assert folds.tolist() == [0, 1, 2, 0, 1, 0, 2]


def test_grid_search_prefers_small_values_on_ties():
    X = np.r_[np.linspace(0.0, 0.1, 5), np.linspace(0.9, 1.0, 5)].reshape(-1, 1)
    labels = [0] * 5 + [1] * 5
    examples = examples_from(X, labels)
    label_set = LabelSet(Metric.ENERGY, CONFIGS[:2])
    assert cross_val_accuracy(examples, label_set, 10.0, 2.0) == 1.0
    assert grid_search(examples, label_set, C_grid=(10.0, 1.0), gamma_grid=(2.0, 1.0)) == (1.0, 1.0)


def test_grid_search_on_noisy_xor():
    rng = np.random.default_rng(5)
    corners = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=float)
    X = np.concatenate([c + 0.05 * rng.standard_normal((25, 2)) for c in corners])
    labels = np.repeat([0, 0, 1, 1], 25)
    examples = examples_from(X, labels)
    label_set = LabelSet(Metric.EDP, CONFIGS[:2])
    C, gamma = grid_search(examples, label_set, C_grid=(1.0, 10.0, 100.0), gamma_grid=(0.1, 1.0, 10.0))
    assert cross_val_accuracy(examples, label_set, C, gamma) >= 0.95
    model = train_multiclass(examples, label_set, C, gamma)
    assert (vote(model, X) == labels).mean() >= 0.95


def test_grid_search_needs_enough_examples():
    examples = examples_from([[0.0], [1.0]], [0, 1])
    with pytest.raises(TrainingError):
        grid_search(examples, LabelSet(Metric.ENERGY, CONFIGS[:2]))


def test_training_data_labels_are_oracle_optima():
    corpus = vector_corpus(8)
    cache = {}
    training = generate_training_data(corpus, Metric.ENERGY, cache=cache)
    label_set, examples = training
    assert len(examples) == 8
    assert len(set(label_set.configs)) == len(label_set)
    for (page_id, vector), example in zip(corpus, examples):
        assert label_set.configs[example.label] == oracle_best(vector, Metric.ENERGY)[0]
        assert example.features.normalized
        assert min(example.features.values) >= 0 and max(example.features.values) <= 1
    assert len(cache) == 8
    # memoised on page id, metric and feature values
    assert oracle_labels(corpus[:1], Metric.ENERGY, cache=cache)[0] == cache[(corpus[0][0], Metric.ENERGY,
                                                                               corpus[0][1].values)]
    with pytest.raises(TrainingError):
        generate_training_data([], Metric.ENERGY)
