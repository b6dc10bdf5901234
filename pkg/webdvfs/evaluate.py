'''
Evaluation of the predictor against the oracle and the HMP proxy, with repeated
noisy measurements until the confidence interval is tight enough.
'''

import logging
import sys
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from webdvfs.crossval import loocv, choose_hyperparameters
from webdvfs.device import (Metric, ProcessorConfig, CostModelParams, WorkloadCost, evaluate, hmp_baseline,
                            fixed_config_sweep, oracle_sweep_ratio)
from webdvfs.features import feature_importance
from webdvfs.learn import generate_training_data, train_multiclass, predict_label, oracle_labels
from webdvfs.sched import run_session, PHASES
from webdvfs.utils import WebdvfsException, TrainingError, geometric_mean, read_json, write_json, write_csv

logger = logging.getLogger('webdvfs')

MAX_REPETITIONS = 50
CI_LEVEL = 0.95
CI_RELATIVE_WIDTH = 0.05
HOLDOUT_FRACTION = 0.2
MODES = ('loocv', 'holdout')
COST_FIELDS = (('time_s', 'load_time'), ('energy_j', 'energy'), ('edp_js', 'edp'))


@dataclass(frozen=True)
class Measurement:
    cost: WorkloadCost
    repetitions: int
    ci_width: float

    @property
    def converged(self):
        return self.repetitions == 1 or self.ci_width < CI_RELATIVE_WIDTH


def ci_relative_width(values, level=CI_LEVEL):
    # Width of the Student-t confidence interval of the mean, relative to the mean
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n < 2:
        return float('inf')
    half = stats.t.ppf(0.5 + level / 2, n - 1) * values.std(ddof=1) / np.sqrt(n)
    return float(2 * half / values.mean())


# Quantities whose confidence interval stops the repetitions, EDP comes from their means
CI_QUANTITIES = {
    Metric.LOAD_TIME: ('load_time',),
    Metric.ENERGY: ('energy',),
    Metric.EDP: ('load_time', 'energy'),
}


def measure(vector, config, metric, params=CostModelParams(), page_id=None, max_repetitions=MAX_REPETITIONS):
    '''
    Cost of one (page, configuration) pair.

    Without noise this is a single evaluation. With noise the measurement is
    repeated until the 95% confidence interval of each measured quantity the
    metric depends on is narrower than 5% of its mean, or max_repetitions is
    reached. Load time and energy are reported as sample means and EDP as their
    product.
    '''
    metric = Metric.parse(metric)
    if params.noise_sigma == 0:
        return Measurement(evaluate(vector, config, params, page_id), 1, 0.0)
    samples = []
    width = float('inf')
    for repetition in range(max_repetitions):
        samples.append(evaluate(vector, config, params, page_id, repetition))
        width = max(ci_relative_width([getattr(s, name) for s in samples]) for name in CI_QUANTITIES[metric])
        if width < CI_RELATIVE_WIDTH:
            break
    else:
        logger.warning(f"{page_id} {config}: confidence interval still {width:.1%} wide "
                       f"after {max_repetitions} repetitions")
    load_time = float(np.mean([s.load_time for s in samples]))
    energy = float(np.mean([s.energy for s in samples]))
    return Measurement(WorkloadCost(load_time, energy, load_time * energy), len(samples), width)


@dataclass(frozen=True)
class EvaluationRow:
    page_id: str
    predicted: ProcessorConfig
    oracle: ProcessorConfig
    hmp_cost: WorkloadCost
    predicted_cost: WorkloadCost
    oracle_cost: WorkloadCost
    repetitions: int = 1
    ci_width: float = 0.0

    @property
    def correct(self):
        return self.predicted == self.oracle

    def ratio(self, metric):
        # predicted relative to HMP, lower is better
        return self.predicted_cost.value(metric) / self.hmp_cost.value(metric)

    def oracle_fraction(self, metric):
        return self.oracle_cost.value(metric) / self.predicted_cost.value(metric)

    def to_json(self):
        return {'page_id': self.page_id, 'predicted': self.predicted.to_json(), 'oracle': self.oracle.to_json(),
                'hmp_cost': self.hmp_cost.to_json(), 'predicted_cost': self.predicted_cost.to_json(),
                'oracle_cost': self.oracle_cost.to_json(), 'repetitions': self.repetitions,
                'ci_width': self.ci_width}

    @classmethod
    def from_json(cls, data):
        return cls(str(data['page_id']), ProcessorConfig.from_json(data['predicted']),
                   ProcessorConfig.from_json(data['oracle']), WorkloadCost(**data['hmp_cost']),
                   WorkloadCost(**data['predicted_cost']), WorkloadCost(**data['oracle_cost']),
                   int(data['repetitions']), float(data['ci_width']))

    def csv_row(self):
        row = [self.page_id, self.predicted.key, self.oracle.key]
        for cost in (self.hmp_cost, self.predicted_cost, self.oracle_cost):
            row.extend(repr(getattr(cost, name)) for _, name in COST_FIELDS)
        return row + [str(self.repetitions), repr(self.ci_width)]


ROW_HEADER = (['page_id', 'predicted', 'oracle']
              + [f"{who}_{unit}" for who in ('hmp', 'predicted', 'oracle') for unit, _ in COST_FIELDS]
              + ['repetitions', 'ci_width'])


def rows_from_csv(header, records):
    if header != ROW_HEADER:
        raise WebdvfsException("Row file does not carry the evaluation columns")
    rows = []
    for r in records:
        costs = [WorkloadCost(*(float(x) for x in r[k:k + 3])) for k in (3, 6, 9)]
        rows.append(EvaluationRow(r[0], ProcessorConfig.parse(r[1]), ProcessorConfig.parse(r[2]), *costs,
                                  int(r[12]), float(r[13])))
    return rows


def improvement(ratio, metric):
    # speedup for load time, fractional reduction for energy and EDP
    return 1.0 / ratio if Metric.parse(metric) is Metric.LOAD_TIME else 1.0 - ratio


def aggregate(rows, metric):
    '''
    Summary statistics of evaluation rows; everything here is recomputable from
    the rows alone.
    '''
    metric = Metric.parse(metric)
    rows = list(rows)
    if not rows:
        raise WebdvfsException("Cannot aggregate an empty evaluation")
    ratios = [r.ratio(metric) for r in rows]
    fractions = [r.oracle_fraction(metric) for r in rows]
    ratio = geometric_mean(ratios)
    result = {
        'pages': len(rows),
        'accuracy': float(np.mean([r.correct for r in rows])),
        'ratio_vs_hmp': ratio,
        'improvement': improvement(ratio, metric),
        'min_ratio': float(min(ratios)),
        'max_ratio': float(max(ratios)),
        'best_improvement': improvement(float(min(ratios)), metric),
        'worst_improvement': improvement(float(max(ratios)), metric),
        'oracle_fraction': geometric_mean(fractions),
        'oracle_ratio_vs_hmp': geometric_mean(r.oracle_cost.value(metric) / r.hmp_cost.value(metric) for r in rows),
        'max_repetitions': int(max(r.repetitions for r in rows)),
        'ci_converged': float(np.mean([r.repetitions == 1 or r.ci_width < CI_RELATIVE_WIDTH for r in rows])),
    }
    missed = [r for r in rows if not r.correct]
    if missed:
        result['mispredicted'] = {
            'pages': len(missed),
            'ratio_vs_hmp': geometric_mean(r.ratio(metric) for r in missed),
            'mean_oracle_fraction': float(np.mean([r.oracle_fraction(metric) for r in missed])),
        }
    else:
        result['mispredicted'] = None
    return result


@dataclass
class EvaluationReport:
    metric: Metric
    mode: str
    rows: list
    C: float
    gamma: float
    params: CostModelParams
    label_set: list = field(default_factory=list)
    label_histogram: dict = field(default_factory=dict)
    fixed_configs: list = field(default_factory=list)
    importance: list = field(default_factory=list)

    @property
    def aggregates(self):
        return aggregate(self.rows, self.metric)

    def to_json(self):
        return {'metric': self.metric.value, 'mode': self.mode, 'C': self.C, 'gamma': self.gamma,
                'params': self.params.to_json(), 'aggregates': self.aggregates,
                'rows': [r.to_json() for r in self.rows], 'label_set': [c.to_json() for c in self.label_set],
                'label_histogram': self.label_histogram, 'fixed_configs': self.fixed_configs,
                'importance': self.importance}

    @classmethod
    def from_json(cls, data):
        try:
            return cls(Metric.parse(data['metric']), data['mode'], [EvaluationRow.from_json(r) for r in data['rows']],
                       float(data['C']), float(data['gamma']), CostModelParams.from_json(data['params']),
                       [ProcessorConfig.from_json(c) for c in data.get('label_set', [])],
                       dict(data.get('label_histogram', {})), list(data.get('fixed_configs', [])),
                       [tuple(x) for x in data.get('importance', [])])
        except (KeyError, TypeError, ValueError) as e:
            raise WebdvfsException(f"Malformed evaluation report: {e}")

    def write(self, paths):
        name = self.metric.short
        report = write_json(paths['reports'] / f"report_{name}.json", self.to_json())
        write_csv(paths['reports'] / f"rows_{name}.csv", ROW_HEADER, [r.csv_row() for r in self.rows])
        return report


def load_report(path):
    return EvaluationReport.from_json(read_json(path))


def holdout_split(page_ids, seed=0, fraction=HOLDOUT_FRACTION):
    '''
    Seeded split of page ids into (train, test); test holds at least one page.
    '''
    page_ids = list(page_ids)
    if len(page_ids) < 2:
        raise TrainingError("A holdout split needs at least 2 pages")
    order = np.random.default_rng(seed).permutation(len(page_ids))
    n_test = min(len(page_ids) - 1, max(1, int(round(fraction * len(page_ids)))))
    test = sorted(page_ids[i] for i in order[:n_test])
    train = sorted(page_ids[i] for i in order[n_test:])
    return train, test


def _holdout_predictions(corpus, metric, params, seed, cache):
    train_ids, test_ids = holdout_split([pid for pid, _ in corpus], seed)
    by_id = dict(corpus)
    train = [(pid, by_id[pid]) for pid in train_ids]
    C, gamma = choose_hyperparameters(train, metric, params, cache=cache)
    training = generate_training_data(train, metric, params, cache)
    model = train_multiclass(training.examples, training.label_set, C, gamma, training.normalization)
    predictions = []
    for pid in test_ids:
        oracle, _ = oracle_labels([(pid, by_id[pid])], metric, params, cache)[0]
        predictions.append((pid, predict_label(model, by_id[pid]), oracle))
    return predictions, C, gamma


def cmd_evaluate(corpus, metric, params=CostModelParams(), mode='loocv', seed=0, cache=None):
    '''
    Evaluate the predictor for one metric over a corpus.

    Parameters
    ----------
    corpus : sequence of (page_id, FeatureVector)
    metric : Metric
    params : CostModelParams
        With noise_sigma > 0 every measurement follows the repetition protocol
    mode : str
        'loocv' or 'holdout' (seeded 80/20 split)
    seed : int
        Seeds the holdout split

    Returns
    -------
    EvaluationReport
    '''
    if mode not in MODES:
        raise WebdvfsException(f"Unknown evaluation mode '{mode}'")
    corpus = sorted(corpus, key=lambda item: item[0])
    if len(corpus) < 2:
        raise TrainingError(f"Evaluation needs at least 2 pages, got {len(corpus)}")
    metric = Metric.parse(metric)
    quiet = params.quiet()
    cache = {} if cache is None else cache
    sys.stdout.write(f"📏 Evaluating {metric.value} predictor ({mode}) on {len(corpus)} pages\n")

    if mode == 'loocv':
        result = loocv(corpus, metric, quiet, cache=cache)
        predictions = [(r.page_id, r.predicted, r.oracle) for r in result.rows]
        C, gamma = result.C, result.gamma
    else:
        predictions, C, gamma = _holdout_predictions(corpus, metric, quiet, seed, cache)

    by_id = dict(corpus)
    hmp = hmp_baseline()
    rows = []
    for page_id, predicted, oracle in predictions:
        vector = by_id[page_id]
        measured = measure(vector, predicted, metric, params, page_id)
        rows.append(EvaluationRow(page_id, predicted, oracle,
                                  measure(vector, hmp, metric, params, page_id).cost,
                                  measured.cost,
                                  measure(vector, oracle, metric, params, page_id).cost,
                                  measured.repetitions, measured.ci_width))

    training = generate_training_data(corpus, metric, quiet, cache)
    labels = [e.label for e in training.examples]
    histogram = {c.key: labels.count(k) for k, c in enumerate(training.label_set.configs)}
    sweep = fixed_config_sweep(corpus, training.label_set.configs, metric, quiet)
    fixed = [{'config': c.key, 'ratio_vs_hmp': r} for c, r in sweep.items()]
    fixed.append({'config': 'oracle', 'ratio_vs_hmp': oracle_sweep_ratio(corpus, metric, quiet)})
    importance = []
    if len(training.label_set) > 1:
        importance = feature_importance([e.features for e in training.examples], labels)

    report = EvaluationReport(metric, mode, rows, C, gamma, params, list(training.label_set.configs),
                              histogram, fixed, importance)
    agg = report.aggregates
    sys.stdout.write(f"✅ {metric.value}: accuracy {agg['accuracy']:.1%}, "
                     f"{agg['ratio_vs_hmp']:.3f}x of HMP, {agg['oracle_fraction']:.1%} of oracle\n")
    return report


OVERHEAD_CHUNK_SIZE = 65536


def overhead_profile(pages, model, params=CostModelParams(), chunk_size=OVERHEAD_CHUNK_SIZE):
    '''
    Run a runtime session on every page and break the overheads down by phase.

    Returns
    -------
    dict
        Mean milliseconds per phase and per page, total overhead as a share of
        the device load time, and re-prediction counts. Measured times vary from
        run to run, so this is kept apart from the evaluation report.
    '''
    totals = {phase: [] for phase in PHASES}
    shares = []
    repredictions = 0
    pages_seen = 0
    for page in pages:
        trace = run_session(page, model, params, chunk_size)
        for phase in PHASES:
            totals[phase].append(trace.overhead_by_phase[phase])
        shares.append(trace.overhead_ms / 1000 / trace.load_time_without_overheads)
        repredictions += trace.repredictions
        pages_seen += 1
    if not pages_seen:
        raise WebdvfsException("Overhead profile of an empty corpus")
    return {'metric': model.metric.value, 'pages': pages_seen, 'chunk_size': chunk_size,
            'mean_ms': {phase: float(np.mean(v)) for phase, v in totals.items()},
            'mean_total_ms': float(np.sum([np.mean(v) for v in totals.values()])),
            'share_of_load_time': float(np.mean(shares)),
            'repredictions': repredictions}
