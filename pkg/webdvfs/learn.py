'''
Oracle labelling of training pages and the multiclass RBF-kernel SVM that maps
web page features to a processor configuration, one model per metric.
'''

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from webdvfs.device import Metric, ProcessorConfig, CostModelParams, oracle_best
from webdvfs.features import FeatureVector, NormalizationTable, fit_normalizer, normalize, normalize_array
from webdvfs.utils import WebdvfsException, SchemaMismatch, TrainingError, read_json, write_json

logger = logging.getLogger('webdvfs')

DEFAULT_TOL = 1e-3
DEFAULT_C_GRID = (0.1, 1.0, 10.0, 100.0)
DEFAULT_GAMMA_GRID = tuple(g / 73 for g in (0.01, 0.1, 1.0, 10.0))
DEFAULT_FOLDS = 5
MAX_SMO_ITERATIONS = 100000
# LIBSVM's floor on the curvature of a working pair
TAU = 1e-12

MODEL_FORMAT = 'webdvfs-svm-1'


@dataclass(frozen=True)
class LabelSet:
    metric: Metric
    configs: tuple

    def __post_init__(self):
        if len(set(self.configs)) != len(self.configs):
            raise WebdvfsException("Label set contains duplicate configurations")

    def __len__(self):
        return len(self.configs)

    def index(self, config):
        return self.configs.index(config)

    def to_json(self):
        return [c.to_json() for c in self.configs]


@dataclass(frozen=True)
class LabeledExample:
    page_id: str
    features: FeatureVector
    label: int


@dataclass(frozen=True)
class TrainingSet:
    label_set: LabelSet
    examples: tuple
    normalization: NormalizationTable
    # raw oracle costs per page, kept for evaluation
    oracle: dict = field(default_factory=dict, compare=False)

    def __iter__(self):
        # unpacks as (label_set, examples)
        return iter((self.label_set, list(self.examples)))


def oracle_labels(corpus, metric, params=CostModelParams(), cache=None):
    '''
    Oracle-best configuration of every page, memoised in cache on (page_id, metric, feature values).
    '''
    metric = Metric.parse(metric)
    labels = []
    for page_id, vector in corpus:
        key = (page_id, metric, vector.values)
        if cache is not None and key in cache:
            labels.append(cache[key])
            continue
        best = oracle_best(vector, metric, params)
        if cache is not None:
            cache[key] = best
        labels.append(best)
    return labels


def generate_training_data(corpus, metric, params=CostModelParams(), cache=None):
    '''
    Label each page with its oracle optimum for one metric.

    Parameters
    ----------
    corpus : sequence of (page_id, FeatureVector)
        Raw feature vectors of the training pages
    metric : Metric
    params : CostModelParams
        Noise is ignored while labelling
    cache : dict, optional
        Shared oracle memo, so repeated folds do not re-run the brute force search

    Returns
    -------
    TrainingSet
        Unpacks as (LabelSet, list of LabeledExample); also carries the
        normalization table fitted on this corpus.
    '''
    corpus = list(corpus)
    if not corpus:
        raise TrainingError("Cannot generate training data from an empty corpus")
    metric = Metric.parse(metric)
    best = oracle_labels(corpus, metric, params, cache)
    configs = []
    for config, _ in best:
        if config not in configs:
            configs.append(config)
    label_set = LabelSet(metric, tuple(configs))
    table = fit_normalizer([v for _, v in corpus])
    examples = tuple(LabeledExample(page_id, normalize(vector, table), label_set.index(config))
                     for (page_id, vector), (config, _) in zip(corpus, best))
    oracle = {page_id: cost for (page_id, _), (_, cost) in zip(corpus, best)}
    logger.debug(f"{metric.value}: {len(corpus)} pages, {len(label_set)} distinct optima")
    return TrainingSet(label_set, examples, table, oracle)


def _as_array(x):
    if isinstance(x, FeatureVector):
        return x.array
    return np.asarray(x, dtype=float)


def kernel(x, y, gamma):
    # exp(-gamma * ||x - y||^2)
    x = _as_array(x)
    y = _as_array(y)
    if x.shape != y.shape:
        raise SchemaMismatch(f"Kernel of vectors with {x.size} and {y.size} features")
    d = x - y
    return float(np.exp(-gamma * np.dot(d, d)))


def kernel_matrix(X, Y, gamma):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise SchemaMismatch(f"Kernel of vectors with {X.shape[1]} and {Y.shape[1]} features")
    return np.exp(-gamma * cdist(X, Y, 'sqeuclidean'))


@dataclass(frozen=True, eq=False)
class BinarySvm:
    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    gamma: float
    C: float
    iterations: int = 0

    def decision(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(self.dual_coef) == 0:
            return np.full(X.shape[0], self.bias)
        return kernel_matrix(X, self.support_vectors, self.gamma) @ self.dual_coef + self.bias

    def predict(self, X):
        return np.where(self.decision(X) >= 0, 1, -1)

    def to_json(self):
        return {'support_vectors': self.support_vectors.tolist(), 'dual_coef': self.dual_coef.tolist(),
                'bias': self.bias, 'gamma': self.gamma, 'C': self.C}

    @classmethod
    def from_json(cls, data):
        sv = np.asarray(data['support_vectors'], dtype=float)
        if sv.size == 0:
            sv = sv.reshape(0, 0)
        return cls(sv, np.asarray(data['dual_coef'], dtype=float), float(data['bias']),
                   float(data['gamma']), float(data['C']))


def _violating_sets(alpha, y, C):
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    return up, low


def smo_solve(K, y, C, tol=DEFAULT_TOL, max_iter=MAX_SMO_ITERATIONS):
    '''
    Soft-margin SVM dual by sequential minimal optimization.

    Each step optimises the maximal KKT-violating pair, scanning in index order,
    and stops once max(-y G) over I_up minus min(-y G) over I_low drops below tol.

    Parameters
    ----------
    K : ndarray, (n, n)
        Kernel matrix of the training points
    y : ndarray of +1/-1

    Returns
    -------
    alpha : ndarray
    bias : float
    iterations : int
    '''
    y = np.asarray(y, dtype=float)
    n = len(y)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(K)
    iterations = 0
    while True:
        up, low = _violating_sets(alpha, y, C)
        score = -y * grad
        up_scores = np.where(up, score, -np.inf)
        low_scores = np.where(low, score, np.inf)
        i = int(np.argmax(up_scores))
        j = int(np.argmin(low_scores))
        gap = up_scores[i] - low_scores[j]
        if gap < tol:
            break
        if iterations >= max_iter:
            logger.warning(f"SMO stopped after {max_iter} iterations with KKT gap {gap:.2e}")
            break
        iterations += 1

        old_i, old_j = alpha[i], alpha[j]
        quad = max(diag[i] + diag[j] - 2.0 * K[i, j], TAU)
        if y[i] != y[j]:
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            elif alpha[j] > C:
                alpha[j] = C
                alpha[i] = C + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total

        # G = Q alpha - e, Q_ts = y_t y_s K_ts
        d_i = alpha[i] - old_i
        d_j = alpha[j] - old_j
        grad += y * (K[:, i] * (y[i] * d_i) + K[:, j] * (y[j] * d_j))

    score = -y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        bias = float(score[free].mean())
    else:
        up, low = _violating_sets(alpha, y, C)
        top = score[up].max() if up.any() else score.max()
        bottom = score[low].min() if low.any() else score.min()
        bias = float((top + bottom) / 2)
    return alpha, bias, iterations


def smo_train(X, y, C, gamma, tol=DEFAULT_TOL):
    '''
    Train one binary RBF-kernel SVM.

    Parameters
    ----------
    X : array-like, (n, d)
        Normalized training points (FeatureVectors or rows)
    y : array-like of +1/-1
    C : float
        Box constraint
    gamma : float
        RBF width

    Returns
    -------
    BinarySvm
    '''
    X = np.atleast_2d(np.asarray([_as_array(x) for x in X], dtype=float))
    y = np.asarray(y, dtype=float)
    if len(X) != len(y):
        raise TrainingError(f"{len(X)} training points but {len(y)} labels")
    if not set(np.unique(y)) <= {-1.0, 1.0}:
        raise TrainingError("Binary labels must be +1 or -1")
    if not ((y > 0).any() and (y < 0).any()):
        raise TrainingError("Binary SVM training needs both classes")
    if C <= 0 or gamma <= 0:
        raise TrainingError(f"C and gamma must be positive, got C={C}, gamma={gamma}")
    K = kernel_matrix(X, X, gamma)
    alpha, bias, iterations = smo_solve(K, y, C, tol)
    support = alpha > 0
    logger.debug(f"SMO converged in {iterations} iterations, {int(support.sum())} support vectors")
    return BinarySvm(X[support], (y * alpha)[support], bias, float(gamma), float(C), iterations)


def kkt_violations(X, y, alpha, svm, tol=DEFAULT_TOL):
    '''
    Indices of training points whose margin disagrees with their dual
    coefficient bucket {0, (0, C), C} by more than tol.
    '''
    margin = np.asarray(y, dtype=float) * svm.decision(X)
    alpha = np.asarray(alpha, dtype=float)
    at_zero = alpha <= 0
    at_bound = alpha >= svm.C
    free = ~(at_zero | at_bound)
    bad = (at_zero & (margin < 1 - tol)) | (at_bound & (margin > 1 + tol)) | (free & (np.abs(margin - 1) > tol))
    return np.flatnonzero(bad)


@dataclass(frozen=True, eq=False)
class MulticlassSvmModel:
    metric: Metric
    label_set: LabelSet
    machines: dict
    normalization: NormalizationTable
    schema_version: str
    constant_label: int = None

    @property
    def labels_present(self):
        if self.constant_label is not None:
            return [self.constant_label]
        return sorted({k for pair in self.machines for k in pair})

    def to_json(self):
        return {'format': MODEL_FORMAT,
                'metric': self.metric.value,
                'schema_version': self.schema_version,
                'label_set': self.label_set.to_json(),
                'normalization': {'mins': list(self.normalization.mins), 'maxs': list(self.normalization.maxs)},
                'constant_label': self.constant_label,
                'machines': [dict(pair=list(pair), **svm.to_json()) for pair, svm in sorted(self.machines.items())]}

    @classmethod
    def from_json(cls, data):
        if data.get('format') != MODEL_FORMAT:
            raise WebdvfsException(f"Unknown model format {data.get('format')!r}")
        try:
            metric = Metric.parse(data['metric'])
            label_set = LabelSet(metric, tuple(ProcessorConfig.from_json(c) for c in data['label_set']))
            norm = data['normalization']
            table = NormalizationTable(data['schema_version'], tuple(float(x) for x in norm['mins']),
                                       tuple(float(x) for x in norm['maxs']))
            machines = {tuple(int(k) for k in m['pair']): BinarySvm.from_json(m) for m in data['machines']}
        except (KeyError, TypeError, ValueError) as e:
            raise WebdvfsException(f"Malformed model file: {e}")
        return cls(metric, label_set, machines, table, data['schema_version'], data.get('constant_label'))


def save_model(model, path):
    return write_json(path, model.to_json())


def load_model(path):
    return MulticlassSvmModel.from_json(read_json(path))


def _identity_table(dim, version):
    return NormalizationTable(version, (0.0,) * dim, (1.0,) * dim)


def train_multiclass(examples, label_set, C, gamma, normalization=None, tol=DEFAULT_TOL):
    '''
    One-vs-one RBF SVMs over every pair of labels that has examples.

    A label set with a single populated label gives a constant predictor.
    '''
    examples = list(examples)
    if not examples:
        raise TrainingError("Cannot train on an empty example set")
    version = examples[0].features.schema_version
    X = np.asarray([e.features.values for e in examples], dtype=float)
    labels = np.asarray([e.label for e in examples])
    if labels.min() < 0 or labels.max() >= len(label_set):
        raise TrainingError("Example label outside the label set")
    if normalization is None:
        normalization = _identity_table(X.shape[1], version)
    present = sorted(set(labels.tolist()))
    if len(present) == 1:
        logger.warning(f"{label_set.metric.value}: only one configuration in the training set, "
                       f"model always predicts {label_set.configs[present[0]]}")
        return MulticlassSvmModel(label_set.metric, label_set, {}, normalization, version, present[0])
    machines = {}
    for n, a in enumerate(present):
        for b in present[n + 1:]:
            mask = (labels == a) | (labels == b)
            y = np.where(labels[mask] == a, 1.0, -1.0)
            machines[(a, b)] = smo_train(X[mask], y, C, gamma, tol)
    return MulticlassSvmModel(label_set.metric, label_set, machines, normalization, version)


def vote(model, X):
    '''
    Label indices for rows of already-normalized features. Majority vote over
    the pairwise machines, ties to the lowest label index.
    '''
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if model.constant_label is not None:
        return np.full(X.shape[0], model.constant_label, dtype=int)
    votes = np.zeros((X.shape[0], len(model.label_set)), dtype=int)
    rows = np.arange(X.shape[0])
    for (a, b), svm in model.machines.items():
        winner = np.where(svm.decision(X) >= 0, a, b)
        np.add.at(votes, (rows, winner), 1)
    # argmax returns the first maximum
    return votes.argmax(axis=1)


def predict_label(model, vector):
    '''
    Predict the configuration of a page from its raw feature vector.

    Parameters
    ----------
    model : MulticlassSvmModel
    vector : FeatureVector
        Raw features, normalized here with the model's table (clamped to [0, 1])

    Returns
    -------
    ProcessorConfig
        Always a member of model.label_set
    '''
    if vector.schema_version != model.schema_version or len(vector) != len(model.normalization.mins):
        raise SchemaMismatch(f"Page features use schema {vector.schema_version}, "
                             f"model expects {model.schema_version}")
    x = normalize_array(vector.array, model.normalization) if not vector.normalized else vector.array
    return model.label_set.configs[int(vote(model, x)[0])]


def stratified_folds(labels, folds=DEFAULT_FOLDS):
    # Deal each label's examples round-robin over the folds, in input order
    labels = list(labels)
    assignment = [0] * len(labels)
    seen = {}
    for n, label in enumerate(labels):
        k = seen.get(label, 0)
        assignment[n] = k % folds
        seen[label] = k + 1
    return np.asarray(assignment)


def cross_val_accuracy(examples, label_set, C, gamma, folds=DEFAULT_FOLDS, tol=DEFAULT_TOL):
    examples = list(examples)
    assignment = stratified_folds([e.label for e in examples], folds)
    X = np.asarray([e.features.values for e in examples], dtype=float)
    truth = np.asarray([e.label for e in examples])
    scores = []
    for k in range(folds):
        test = assignment == k
        if not test.any():
            continue
        train = [e for e, t in zip(examples, test) if not t]
        model = train_multiclass(train, label_set, C, gamma, tol=tol)
        scores.append(float((vote(model, X[test]) == truth[test]).mean()))
    return float(np.mean(scores))


def grid_search(examples, label_set, C_grid=DEFAULT_C_GRID, gamma_grid=DEFAULT_GAMMA_GRID, folds=DEFAULT_FOLDS,
                tol=DEFAULT_TOL):
    '''
    Pick (C, gamma) by stratified k-fold accuracy.

    Highest mean accuracy wins; ties go to the smaller C, then the smaller gamma.
    '''
    examples = list(examples)
    if len(examples) < folds:
        raise TrainingError(f"Grid search with {folds} folds needs at least {folds} examples, got {len(examples)}")
    if not C_grid or not gamma_grid:
        raise TrainingError("Empty hyperparameter grid")
    best = None
    for C in sorted(C_grid):
        for gamma in sorted(gamma_grid):
            accuracy = cross_val_accuracy(examples, label_set, C, gamma, folds, tol)
            logger.debug(f"C={C:g} gamma={gamma:.4g}: fold accuracy {accuracy:.3f}")
            if best is None or accuracy > best[0]:
                best = (accuracy, C, gamma)
    return best[1], best[2]
