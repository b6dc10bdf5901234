import pytest

from webdvfs.corpus import gen_corpus, corpus_features
from webdvfs.device import Metric, ProcessorConfig, CostModelParams, WorkloadCost, BIG, hmp_baseline
from webdvfs.evaluate import (MAX_REPETITIONS, CI_RELATIVE_WIDTH, ROW_HEADER, EvaluationRow, ci_relative_width,
                              measure, improvement, aggregate, holdout_split, cmd_evaluate, rows_from_csv,
                              load_report, overhead_profile)
from webdvfs.pipeline import train_model
from webdvfs.utils import WebdvfsException, TrainingError, folder_setup, geometric_mean, read_csv

from webdvfs.test.mocks import wikipedia_vector, vector_corpus


def row(page_id, predicted, oracle, hmp_time, predicted_time, oracle_time, repetitions=1, ci_width=0.0):
    def cost(t):
        return WorkloadCost(t, 2 * t, 2 * t * t)
    return EvaluationRow(page_id, ProcessorConfig.parse(predicted), ProcessorConfig.parse(oracle), cost(hmp_time),
                         cost(predicted_time), cost(oracle_time), repetitions, ci_width)


def test_geometric_mean():
    assert geometric_mean([1, 4]) == pytest.approx(2.0)
    with pytest.raises(WebdvfsException):
        geometric_mean([])
    with pytest.raises(WebdvfsException):
        geometric_mean([1.0, 0.0])


def test_improvement():
    assert improvement(0.5, Metric.LOAD_TIME) == pytest.approx(2.0)
    assert improvement(0.8, Metric.ENERGY) == pytest.approx(0.2)
    assert improvement(1.25, 'edp') == pytest.approx(-0.25)


def test_noise_free_measurement_is_single():
    m = measure(wikipedia_vector(), hmp_baseline(), Metric.ENERGY)
    assert m.repetitions == 1
    assert m.converged


def test_noisy_measurement_repeats_until_confident():
    params = CostModelParams(noise_sigma=0.05, seed=1)
    m = measure(wikipedia_vector(), ProcessorConfig(BIG, 1.2, 0.4), Metric.LOAD_TIME, params, 'wiki')
    assert 2 <= m.repetitions <= MAX_REPETITIONS
    assert m.ci_width < CI_RELATIVE_WIDTH
    again = measure(wikipedia_vector(), ProcessorConfig(BIG, 1.2, 0.4), Metric.LOAD_TIME, params, 'wiki')
    assert again == m


def test_noisy_edp_comes_from_mean_time_and_energy():
    params = CostModelParams(noise_sigma=0.05, seed=1)
    config = ProcessorConfig(BIG, 1.2, 0.4)
    m = measure(wikipedia_vector(), config, Metric.EDP, params, 'wiki')
    assert m.converged
    assert m.repetitions < MAX_REPETITIONS
    assert m.cost.edp == pytest.approx(m.cost.load_time * m.cost.energy)
    # the time-only stopping rule needs no more repetitions than the joint one
    assert measure(wikipedia_vector(), config, Metric.LOAD_TIME, params, 'wiki').repetitions <= m.repetitions


def test_measurement_gives_up_at_the_cap():
    params = CostModelParams(noise_sigma=2.0, seed=1)
    m = measure(wikipedia_vector(), hmp_baseline(), Metric.EDP, params, 'wiki', max_repetitions=5)
    assert m.repetitions == 5
    assert not m.converged


def test_ci_width():
    assert ci_relative_width([1.0]) == float('inf')
    assert ci_relative_width([2.0, 2.0, 2.0]) == 0.0
    assert ci_relative_width([1.0, 3.0]) > 1.0


def test_aggregates():
    rows = [row('a', 'big:0.9:0.4', 'big:0.9:0.4', 2.0, 1.0, 1.0),
            row('b', 'big:0.9:0.4', 'little:0.4:0.4', 2.0, 4.0, 2.0)]
    agg = aggregate(rows, Metric.LOAD_TIME)
    assert agg['pages'] == 2
    assert agg['accuracy'] == 0.5
    assert agg['ratio_vs_hmp'] == pytest.approx(1.0)
    assert agg['improvement'] == pytest.approx(1.0)
    assert agg['best_improvement'] == pytest.approx(2.0)
    assert agg['worst_improvement'] == pytest.approx(0.5)
    assert agg['oracle_fraction'] == pytest.approx(geometric_mean([1.0, 0.5]))
    assert agg['mispredicted']['pages'] == 1
    assert agg['mispredicted']['ratio_vs_hmp'] == pytest.approx(2.0)
    energy = aggregate(rows, Metric.ENERGY)
    assert energy['improvement'] == pytest.approx(0.0)
    with pytest.raises(WebdvfsException):
        aggregate([], Metric.ENERGY)


def test_holdout_split():
    ids = [f"p{k}" for k in range(10)]
    train, test = holdout_split(ids, seed=7)
    assert len(test) == 2
    assert sorted(train + test) == ids
    assert holdout_split(ids, seed=7) == (train, test)
    assert len(holdout_split(ids[:2], seed=0)[1]) == 1
    with pytest.raises(TrainingError):
        holdout_split(ids[:1])


def test_report_aggregates_recomputed_from_rows(tmp_path):
    paths = folder_setup(tmp_path)
    report = cmd_evaluate(vector_corpus(8), Metric.ENERGY, mode='loocv')
    assert len(report.rows) == 8
    report_path = report.write(paths)
    assert report_path == paths['reports'] / 'report_energy.json'

    header, records = read_csv(paths['reports'] / 'rows_energy.csv')
    assert header == ROW_HEADER
    rows = rows_from_csv(header, records)
    assert aggregate(rows, Metric.ENERGY) == report.aggregates

    loaded = load_report(report_path)
    assert loaded.aggregates == report.aggregates
    assert loaded.label_set == report.label_set
    assert sum(loaded.label_histogram.values()) == 8
    assert loaded.fixed_configs[-1]['config'] == 'oracle'
    # predictions are never better than the oracle without noise
    assert all(r.oracle_fraction(Metric.ENERGY) <= 1.0 for r in rows)


def test_report_is_reproducible():
    first = cmd_evaluate(vector_corpus(6), Metric.EDP, mode='holdout', seed=2)
    second = cmd_evaluate(vector_corpus(6), Metric.EDP, mode='holdout', seed=2)
    assert first.to_json() == second.to_json()
    assert first.aggregates['pages'] == 1


def test_evaluation_needs_two_pages():
    with pytest.raises(TrainingError):
        cmd_evaluate(vector_corpus(1), Metric.ENERGY)
    with pytest.raises(WebdvfsException):
        cmd_evaluate(vector_corpus(4), Metric.ENERGY, mode='kfold')


@pytest.mark.slow
@pytest.mark.parametrize('metric', list(Metric))
def test_noisy_evaluation_follows_the_repetition_protocol(metric):
    params = CostModelParams(noise_sigma=0.05, seed=7)
    report = cmd_evaluate(vector_corpus(8), metric, params)
    agg = report.aggregates
    assert 1 < agg['max_repetitions'] <= MAX_REPETITIONS
    assert agg['ci_converged'] >= 0.95


def test_overhead_profile(tmp_path):
    manifest = gen_corpus(tmp_path / 'corpus', 5, seed=1, profile='small')
    model = train_model(corpus_features(manifest), Metric.LOAD_TIME)
    profile = overhead_profile(manifest.iter_pages(), model, chunk_size=1024)
    assert profile['pages'] == 5
    assert set(profile['mean_ms']) == {'feature_extraction', 'prediction', 'frequency_setting', 'migration'}
    assert profile['mean_total_ms'] == pytest.approx(sum(profile['mean_ms'].values()))
    with pytest.raises(WebdvfsException):
        overhead_profile([], model)


@pytest.fixture(scope='module')
def default_corpus(tmp_path_factory):
    return corpus_features(gen_corpus(tmp_path_factory.mktemp('corpus'), 400, seed=7))


@pytest.mark.slow
@pytest.mark.parametrize('metric', list(Metric))
def test_default_corpus_predictor(default_corpus, metric):
    report = cmd_evaluate(default_corpus, metric)
    agg = report.aggregates
    assert agg['accuracy'] >= 0.75
    assert agg['oracle_fraction'] >= 0.80
    assert agg['ratio_vs_hmp'] < 1.0
    # a per-page choice beats any single labelled configuration
    fixed = [e['ratio_vs_hmp'] for e in report.fixed_configs if e['config'] != 'oracle']
    assert agg['ratio_vs_hmp'] < min(fixed)
