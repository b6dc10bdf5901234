'''
Runtime deployment of a trained model while a page loads: predict as soon as a
DOM tree exists, re-predict when the tree grows a lot, and charge the cost of
switching cores and frequencies.
'''

import logging
import time
from dataclasses import dataclass, field

from webdvfs.device import Metric, ProcessorConfig, CostModelParams, evaluate, hmp_baseline
from webdvfs.features import snapshot_features, page_features
from webdvfs.learn import predict_label
from webdvfs.utils import WebdvfsException, ConfigurationError, write_jsonl
from webdvfs.webparse import snapshot_stream

logger = logging.getLogger('webdvfs')

REPREDICT_THRESHOLD = 0.30
POOR_PACKET_LOSS = 0.30

PHASES = ('feature_extraction', 'prediction', 'frequency_setting', 'migration')
TECHNOLOGIES = ('2G', '3G', '4G', 'WiFi')
QUALITIES = ('poor', 'good')


@dataclass(frozen=True)
class OverheadBudget:
    budget_ms: float = 20.0
    migration_ms: float = 15.0
    frequency_ms_per_core: float = 1.0


OVERHEADS = OverheadBudget()


@dataclass(frozen=True)
class NetworkClass:
    technology: str
    quality: str

    def __post_init__(self):
        if self.technology not in TECHNOLOGIES:
            raise ConfigurationError(f"Unknown network technology '{self.technology}'")
        if self.quality not in QUALITIES:
            raise ConfigurationError(f"Network quality must be poor or good, not '{self.quality}'")

    @classmethod
    def parse(cls, text):
        # "3G:good", case-insensitive on the technology
        try:
            technology, quality = text.split(':')
        except ValueError:
            raise ConfigurationError(f"Network class '{text}' is not TECH:QUALITY")
        lookup = {t.lower(): t for t in TECHNOLOGIES}
        return cls(lookup.get(technology.strip().lower(), technology.strip()), quality.strip().lower())

    @classmethod
    def from_packet_loss(cls, technology, packet_loss):
        return cls(technology, 'poor' if packet_loss > POOR_PACKET_LOSS else 'good')

    def __str__(self):
        return f"{self.technology}:{self.quality}"


ALL_NETWORK_CLASSES = tuple(NetworkClass(t, q) for t in TECHNOLOGIES for q in QUALITIES)

_GOALS = {
    NetworkClass('2G', 'poor'): Metric.ENERGY,
    NetworkClass('2G', 'good'): Metric.ENERGY,
    NetworkClass('3G', 'poor'): Metric.ENERGY,
    NetworkClass('3G', 'good'): Metric.EDP,
    NetworkClass('4G', 'poor'): Metric.EDP,
    NetworkClass('WiFi', 'poor'): Metric.EDP,
    NetworkClass('4G', 'good'): Metric.LOAD_TIME,
    NetworkClass('WiFi', 'good'): Metric.LOAD_TIME,
}


def recommend_goal(network):
    '''
    Optimisation goal for a network environment: the slower the download, the
    less rendering speed matters.
    '''
    if isinstance(network, str):
        network = NetworkClass.parse(network)
    return _GOALS[network]


class RuntimeSession:
    '''
    Single page load under one model. Starts in the HMP configuration; every
    prediction and configuration change is recorded in the overhead log and the
    event records.

    Parameters
    ----------
    model : MulticlassSvmModel
    clock : callable
        Seconds counter used to time feature extraction and prediction
    '''

    def __init__(self, model, clock=time.perf_counter, budget=OVERHEADS):
        self.model = model
        self.clock = clock
        self.budget = budget
        self.current_config = hmp_baseline()
        self.predicted_config = None
        self.last_predicted_node_count = None
        self.overhead_log = []
        self.reprediction_count = 0
        self.prediction_count = 0
        self.records = []

    @property
    def total_overhead_ms(self):
        return sum(ms for _, ms in self.overhead_log)

    def overhead_by_phase(self):
        totals = {phase: 0.0 for phase in PHASES}
        for phase, ms in self.overhead_log:
            totals[phase] += ms
        return totals

    def _log(self, phase, ms):
        if phase not in PHASES:
            raise WebdvfsException(f"Unknown overhead phase '{phase}'")
        self.overhead_log.append((phase, float(ms)))
        return ms

    def _predict(self, snapshot):
        start = self.clock()
        vector = snapshot_features(snapshot)
        extracted = self.clock()
        config = predict_label(self.model, vector)
        done = self.clock()
        extraction_ms = self._log('feature_extraction', (extracted - start) * 1000)
        prediction_ms = self._log('prediction', (done - extracted) * 1000)
        self.prediction_count += 1
        self.last_predicted_node_count = snapshot.tree.node_count
        self.predicted_config = config
        self.records.append({'event': 'prediction', 'bytes': snapshot.bytes_consumed,
                             'nodes': snapshot.tree.node_count, 'config': config.key,
                             'extraction_ms': extraction_ms, 'prediction_ms': prediction_ms})
        return config


def initial_predict(session, snapshot):
    '''
    First prediction, made on the first DOM snapshot of the load.
    '''
    if session.model is None:
        raise WebdvfsException("Runtime session has no model")
    return session._predict(snapshot)


def repredict_needed(n_old, n_new, threshold=REPREDICT_THRESHOLD):
    # Growth from an empty tree always counts as a large change
    if n_old == 0:
        return n_new > 0
    return abs(n_new - n_old) / n_old > threshold


def maybe_repredict(session, snapshot):
    '''
    Predict again if the DOM node count moved by more than 30% since the last
    prediction.

    Returns
    -------
    changed : bool
        True only when the new prediction differs from the previous one
    config : ProcessorConfig
        The latest predicted configuration
    '''
    if session.last_predicted_node_count is None:
        raise WebdvfsException("maybe_repredict called before initial_predict")
    n_new = snapshot.tree.node_count
    if not repredict_needed(session.last_predicted_node_count, n_new):
        return False, session.predicted_config
    previous = session.predicted_config
    logger.debug(f"DOM grew from {session.last_predicted_node_count} to {n_new} nodes, predicting again")
    config = session._predict(snapshot)
    session.reprediction_count += 1
    return config != previous, config


def apply_config(session, config):
    '''
    Switch the session to a configuration.

    Returns
    -------
    float
        Overhead in milliseconds: the migration cost when the render core
        changes plus a frequency-setting cost per core whose frequency changes.
    '''
    if not isinstance(config, ProcessorConfig):
        raise ConfigurationError(f"{config!r} is not a processor configuration")
    current = session.current_config
    overhead = 0.0
    changed_cores = int(config.f_big != current.f_big) + int(config.f_little != current.f_little)
    if changed_cores:
        overhead += session._log('frequency_setting', changed_cores * session.budget.frequency_ms_per_core)
    if config.render_core != current.render_core:
        overhead += session._log('migration', session.budget.migration_ms)
    if overhead:
        session.records.append({'event': 'migration' if config.render_core != current.render_core else 'frequency',
                                'from': current.key, 'to': config.key, 'overhead_ms': overhead})
    session.current_config = config
    return overhead


@dataclass(frozen=True)
class SessionTrace:
    page_id: str
    metric: Metric
    final_config: ProcessorConfig
    cost: object
    overhead_ms: float
    overhead_by_phase: dict
    predictions: int
    repredictions: int
    snapshots: int
    records: tuple = field(default_factory=tuple)

    @property
    def load_time(self):
        # device time plus every charged overhead
        return self.cost.load_time + self.overhead_ms / 1000

    @property
    def load_time_without_overheads(self):
        return self.cost.load_time

    @property
    def decision_overhead_ms(self):
        return sum(ms for phase, ms in self.overhead_by_phase.items() if phase != 'migration')

    def write(self, path):
        return write_jsonl(path, self.records)


def run_session(page, model, params=CostModelParams(), chunk_size=4096, clock=time.perf_counter):
    '''
    Load a page end to end under a model.

    Snapshots are streamed from the page, the first one is predicted on, every
    later one is checked for re-prediction, and each predicted configuration is
    applied. The final configuration is costed with the device model and the
    accumulated overheads are reported alongside.

    Returns
    -------
    SessionTrace
    '''
    session = RuntimeSession(model, clock)
    snapshots = 0
    for snapshot in snapshot_stream(page.html, page.css, chunk_size):
        snapshots += 1
        session.records.append({'event': 'snapshot', 'bytes': snapshot.bytes_consumed,
                                'nodes': snapshot.tree.node_count, 'rules': len(snapshot.styles)})
        if session.last_predicted_node_count is None:
            config = initial_predict(session, snapshot)
        else:
            changed, config = maybe_repredict(session, snapshot)
            if not changed:
                continue
        apply_config(session, config)

    by_phase = session.overhead_by_phase()
    decision = by_phase['feature_extraction'] + by_phase['prediction'] + by_phase['frequency_setting']
    logger.debug(f"{page.page_id}: {session.prediction_count} predictions over {snapshots} snapshots, "
                 f"{decision:.2f} ms of decision overhead")
    if decision > session.budget.budget_ms * max(1, session.prediction_count):
        logger.warning(f"{page.page_id}: prediction overheads {decision:.1f} ms exceed "
                       f"{session.budget.budget_ms:.0f} ms per prediction")
    cost = evaluate(page_features(page), session.current_config, params, page.page_id)
    session.records.append({'event': 'final_cost', 'config': session.current_config.key,
                            'overhead_ms': session.total_overhead_ms, **cost.to_json()})
    return SessionTrace(page.page_id, model.metric, session.current_config, cost, session.total_overhead_ms,
                        by_phase, session.prediction_count, session.reprediction_count, snapshots,
                        tuple(session.records))
