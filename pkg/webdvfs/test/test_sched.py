import json
import logging
import os
from pathlib import Path

import pytest

from webdvfs.device import Metric, ProcessorConfig, CostModelParams, BIG, LITTLE, hmp_baseline, evaluate
from webdvfs.features import DOM_NODES, fit_normalizer, normalize, page_features
from webdvfs.learn import LabelSet, LabeledExample, train_multiclass, predict_label
from webdvfs.sched import (OVERHEADS, RuntimeSession, NetworkClass, ALL_NETWORK_CLASSES, PHASES, recommend_goal,
                           repredict_needed, initial_predict, maybe_repredict, apply_config, run_session)
from webdvfs.utils import ConfigurationError, WebdvfsException
from webdvfs.webparse import Page, load_page, snapshot_stream

from webdvfs.test.mocks import make_vector, fake_clock, backloaded_html, large_page

logger = logging.getLogger('webdvfs')


TEST_PATH_PARENT = Path(os.path.dirname(__file__)) / 'test_files'

TEST_PATHS = {'mixed': TEST_PATH_PARENT / 'mixed'}

SMALL = ProcessorConfig(LITTLE, 0.4, 0.4)
LARGE = ProcessorConfig(BIG, 0.9, 0.4)


def two_label_model(metric=Metric.LOAD_TIME):
    # pages of a few dozen elements go to SMALL, a few hundred to LARGE
    raw = [make_vector({DOM_NODES: n}) for n in (1, 10, 20, 200, 300, 400)]
    table = fit_normalizer(raw)
    examples = [LabeledExample(f"p{k}", normalize(v, table), 0 if k < 3 else 1) for k, v in enumerate(raw)]
    return train_multiclass(examples, LabelSet(metric, (SMALL, LARGE)), C=10.0, gamma=10.0, normalization=table)


def constant_model(config=LARGE):
    raw = [make_vector({DOM_NODES: n}) for n in (1, 100)]
    table = fit_normalizer(raw)
    examples = [LabeledExample(f"p{k}", normalize(v, table), 0) for k, v in enumerate(raw)]
    return train_multiclass(examples, LabelSet(Metric.ENERGY, (config,)), C=1.0, gamma=1.0, normalization=table)


def test_reprediction_threshold():
    assert not repredict_needed(100, 130)
    assert repredict_needed(100, 131)
    assert repredict_needed(100, 69)
    assert not repredict_needed(100, 70)
    assert repredict_needed(0, 3)
    assert not repredict_needed(0, 0)


def test_apply_config_overheads():
    session = RuntimeSession(None)
    assert session.current_config == hmp_baseline()
    assert apply_config(session, hmp_baseline()) == 0
    assert apply_config(session, ProcessorConfig(LITTLE, 2.0, 1.4)) == 15
    assert apply_config(session, ProcessorConfig(BIG, 0.9, 0.4)) == 17
    assert apply_config(session, ProcessorConfig(BIG, 0.9, 0.5)) == 1
    assert session.total_overhead_ms == 33
    by_phase = session.overhead_by_phase()
    assert by_phase['migration'] == 30
    assert by_phase['frequency_setting'] == 3
    with pytest.raises(ConfigurationError):
        apply_config(session, 'big:0.9:0.4')


def test_network_goals():
    goals = {str(n): recommend_goal(n) for n in ALL_NETWORK_CLASSES}
    assert len(goals) == 8
    assert goals == {'2G:poor': Metric.ENERGY, '2G:good': Metric.ENERGY, '3G:poor': Metric.ENERGY,
                     '3G:good': Metric.EDP, '4G:poor': Metric.EDP, 'WiFi:poor': Metric.EDP,
                     '4G:good': Metric.LOAD_TIME, 'WiFi:good': Metric.LOAD_TIME}
    assert recommend_goal('wifi:good') is Metric.LOAD_TIME


def test_network_class_parsing():
    assert NetworkClass.parse('3g:Poor') == NetworkClass('3G', 'poor')
    assert NetworkClass.from_packet_loss('4G', 0.35).quality == 'poor'
    assert NetworkClass.from_packet_loss('4G', 0.30).quality == 'good'
    for bad in ['5G:good', '3G', '3G:ok']:
        with pytest.raises(ConfigurationError):
            NetworkClass.parse(bad)


def test_predictions_follow_the_model():
    session = RuntimeSession(two_label_model(), clock=fake_clock())
    snapshots = list(snapshot_stream(backloaded_html(), chunk_size=1024))
    assert initial_predict(session, snapshots[0]) == SMALL
    assert session.overhead_by_phase()['feature_extraction'] == pytest.approx(1.0)
    assert session.overhead_by_phase()['prediction'] == pytest.approx(1.0)
    changed, config = maybe_repredict(session, snapshots[-1])
    assert changed
    assert config == LARGE
    assert session.reprediction_count == 1
    changed, config = maybe_repredict(session, snapshots[-1])
    assert (changed, config) == (False, LARGE)
    assert session.prediction_count == 2


def test_maybe_repredict_needs_a_first_prediction():
    session = RuntimeSession(constant_model())
    snapshot = next(snapshot_stream(b'<p></p>'))
    with pytest.raises(WebdvfsException):
        maybe_repredict(session, snapshot)


def test_whole_page_in_one_chunk():
    page = load_page(TEST_PATHS['mixed'])
    trace = run_session(page, constant_model(), chunk_size=1 << 20, clock=fake_clock())
    assert trace.snapshots == 1
    assert trace.predictions == 1
    assert trace.repredictions == 0
    assert trace.final_config == LARGE
    # both core frequencies change, the render core stays big
    assert trace.overhead_by_phase['frequency_setting'] == 2.0
    assert trace.overhead_by_phase['migration'] == 0.0
    assert trace.overhead_ms == pytest.approx(4.0)
    assert trace.decision_overhead_ms == pytest.approx(4.0)
    assert trace.load_time == pytest.approx(trace.cost.load_time + trace.overhead_ms / 1000)
    assert trace.load_time_without_overheads == trace.cost.load_time


def test_backloaded_page_is_predicted_again():
    page = Page('backloaded', backloaded_html())
    trace = run_session(page, two_label_model(), chunk_size=512, clock=fake_clock())
    assert trace.snapshots > 1
    assert trace.repredictions >= 1
    assert trace.predictions == 1 + trace.repredictions
    assert trace.final_config == LARGE
    # off HMP onto the little core, then back to the big one
    assert trace.overhead_by_phase['migration'] >= 30.0
    events = [r['event'] for r in trace.records]
    assert events[0] == 'snapshot'
    assert events[-1] == 'final_cost'
    assert 'migration' in events


def test_trace_file(tmp_path):
    page = load_page(TEST_PATHS['mixed'])
    trace = run_session(page, constant_model(SMALL), chunk_size=256, clock=fake_clock(), params=CostModelParams())
    path = trace.write(tmp_path / 'mixed_energy.jsonl')
    records = [json.loads(line) for line in path.read_text().splitlines()]
    assert records[-1]['config'] == SMALL.key
    assert records[-1]['overhead_ms'] == pytest.approx(trace.overhead_ms)
    assert sum(r['event'] == 'snapshot' for r in records) == trace.snapshots
    assert set(trace.overhead_by_phase) == set(PHASES)
    assert trace.final_config == SMALL
    assert trace.cost.value(Metric.ENERGY) > 0


def test_single_chunk_session_matches_offline_prediction():
    page = load_page(TEST_PATHS['mixed'])
    model = constant_model(SMALL)
    trace = run_session(page, model, chunk_size=1 << 20, clock=fake_clock())
    vector = page_features(page)
    assert trace.final_config == predict_label(model, vector) == SMALL
    assert trace.cost == evaluate(vector, SMALL)
    # sessions start on HMP, so going to the little core also pays a migration
    assert trace.overhead_by_phase['migration'] == 15.0
    assert trace.overhead_by_phase['frequency_setting'] == 2.0
    # one fake-clock millisecond each for extraction and prediction
    assert trace.overhead_ms == pytest.approx(19.0)
    assert trace.load_time == pytest.approx(evaluate(vector, SMALL).load_time + trace.overhead_ms / 1000)


@pytest.mark.slow
def test_large_page_decision_overhead(caplog):
    page = large_page()
    assert page.size_bytes == pytest.approx(5 * 1024 * 1024, rel=0.01)
    with caplog.at_level(logging.DEBUG, logger='webdvfs'):
        trace = run_session(page, two_label_model(), chunk_size=4096)
    assert any('ms of decision overhead' in r.getMessage() for r in caplog.records)
    predictions = [r for r in trace.records if r['event'] == 'prediction']
    assert len(predictions) == trace.predictions
    worst = max(r['extraction_ms'] + r['prediction_ms'] for r in predictions)
    worst += 2 * OVERHEADS.frequency_ms_per_core
    logger.info(f"{page.page_id}: worst extract+predict+set {worst:.2f} ms against {OVERHEADS.budget_ms:.0f} ms")
    if os.environ.get('WEBDVFS_REFERENCE_HARDWARE'):
        assert worst <= OVERHEADS.budget_ms
