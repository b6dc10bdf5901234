'''
Leave-one-out cross-validation of the per-metric configuration predictor.
'''

import logging
import sys
from collections import Counter
from dataclasses import dataclass

import numpy as np

from webdvfs.device import Metric, CostModelParams, evaluate, hmp_baseline
from webdvfs.features import NormalizationTable
from webdvfs.learn import (generate_training_data, oracle_labels, train_multiclass, predict_label, grid_search,
                           DEFAULT_C_GRID, DEFAULT_GAMMA_GRID, DEFAULT_TOL, DEFAULT_FOLDS)
from webdvfs.utils import TrainingError

logger = logging.getLogger('webdvfs')


@dataclass(frozen=True)
class PredictionRow:
    page_id: str
    predicted: object
    oracle: object
    predicted_cost: object
    oracle_cost: object
    hmp_cost: object
    normalization: NormalizationTable = None
    C: float = None
    gamma: float = None

    @property
    def correct(self):
        return self.predicted == self.oracle


@dataclass(frozen=True)
class LoocvResult:
    metric: Metric
    rows: tuple

    @property
    def accuracy(self):
        return float(np.mean([r.correct for r in self.rows]))

    @property
    def hyperparameters(self):
        # (C, gamma) -> number of folds that chose it
        return Counter((r.C, r.gamma) for r in self.rows)

    @property
    def C(self):
        return self.hyperparameters.most_common(1)[0][0][0]

    @property
    def gamma(self):
        return self.hyperparameters.most_common(1)[0][0][1]


def _select(training, C_grid, gamma_grid, folds):
    if len(training.examples) < folds or len(training.label_set) < 2:
        return min(C_grid), min(gamma_grid)
    return grid_search(training.examples, training.label_set, C_grid, gamma_grid, folds)


def choose_hyperparameters(corpus, metric, params=CostModelParams(), C_grid=DEFAULT_C_GRID,
                           gamma_grid=DEFAULT_GAMMA_GRID, folds=DEFAULT_FOLDS, cache=None):
    '''
    Grid search over the given pages. With fewer pages than folds the smallest
    grid point is used.
    '''
    return _select(generate_training_data(corpus, metric, params, cache), C_grid, gamma_grid, folds)


def loocv(corpus, metric, params=CostModelParams(), C=None, gamma=None, cache=None, tol=DEFAULT_TOL):
    '''
    Hold out each page in turn, train on the rest and predict it.

    Normalization, labels and hyperparameters are all chosen on each fold's
    training pages alone; the held-out page never takes part in the grid search
    for its own model. Passing both C and gamma fixes them for every fold.

    Parameters
    ----------
    corpus : sequence of (page_id, FeatureVector)
    metric : Metric
    params : CostModelParams
    C, gamma : float, optional
    cache : dict, optional
        Oracle memo shared between folds and metrics

    Returns
    -------
    LoocvResult
    '''
    corpus = list(corpus)
    if len(corpus) < 2:
        raise TrainingError("Leave-one-out cross-validation needs at least 2 pages")
    metric = Metric.parse(metric)
    quiet = params.quiet()
    cache = {} if cache is None else cache
    fixed = C is not None and gamma is not None
    if fixed:
        logger.debug(f"LOOCV {metric.value} with C={C:g}, gamma={gamma:.4g}")
    hmp = hmp_baseline()
    rows = []
    for n, (page_id, vector) in enumerate(corpus):
        training = generate_training_data(corpus[:n] + corpus[n + 1:], metric, quiet, cache)
        if fixed:
            fold_C, fold_gamma = C, gamma
        else:
            fold_C, fold_gamma = _select(training, DEFAULT_C_GRID, DEFAULT_GAMMA_GRID, DEFAULT_FOLDS)
        model = train_multiclass(training.examples, training.label_set, fold_C, fold_gamma,
                                 training.normalization, tol)
        predicted = predict_label(model, vector)
        oracle, oracle_cost = oracle_labels([(page_id, vector)], metric, quiet, cache)[0]
        rows.append(PredictionRow(page_id, predicted, oracle, evaluate(vector, predicted, quiet, page_id),
                                  oracle_cost, evaluate(vector, hmp, quiet, page_id), training.normalization,
                                  fold_C, fold_gamma))
        if (n + 1) % 50 == 0:
            sys.stdout.write(f"🔁 {metric.value}: {n + 1}/{len(corpus)} folds\n")
    result = LoocvResult(metric, tuple(rows))
    logger.debug(f"LOOCV {metric.value} accuracy {result.accuracy:.3f}, "
                 f"{len(result.hyperparameters)} distinct (C, gamma) choices over {len(rows)} folds")
    return result
