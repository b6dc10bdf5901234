'''
Simulated big.LITTLE platform: the processor-configuration space and an analytic
render time / power model standing in for energy-sensor readings.
'''

import logging
import zlib
from dataclasses import dataclass, asdict, fields, replace
from enum import Enum
from pathlib import Path

import numpy as np

from webdvfs.features import DEFAULT_SCHEMA, DOM_NODES, DOM_DEPTH, STYLE_RULES, PAGE_SIZE, tag_feature
from webdvfs.utils import WebdvfsException, ConfigurationError, geometric_mean, read_json, write_csv

logger = logging.getLogger('webdvfs')

BIG = 'big'
LITTLE = 'little'
CORES = (BIG, LITTLE)

# Frequencies are kept in tenths of a GHz to stay exact on the grid
BIG_TENTHS = tuple(range(4, 21))
LITTLE_TENTHS = tuple(range(4, 15))
BIG_FREQS = tuple(t / 10 for t in BIG_TENTHS)
LITTLE_FREQS = tuple(t / 10 for t in LITTLE_TENTHS)

MEDIA_TAGS = ('img', 'table', 'iframe')


class Metric(str, Enum):
    LOAD_TIME = 'load_time'
    ENERGY = 'energy'
    EDP = 'edp'

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        aliases = {'time': cls.LOAD_TIME, 'load_time': cls.LOAD_TIME, 'energy': cls.ENERGY, 'edp': cls.EDP}
        try:
            return aliases[str(name).lower()]
        except KeyError:
            raise ConfigurationError(f"Unknown metric '{name}'")

    @property
    def short(self):
        return 'time' if self is Metric.LOAD_TIME else self.value


METRICS = (Metric.LOAD_TIME, Metric.ENERGY, Metric.EDP)


def _tenths(f):
    return int(round(float(f) * 10))


@dataclass(frozen=True, order=True)
class ProcessorConfig:
    render_core: str
    f_big: float
    f_little: float

    def __post_init__(self):
        if self.render_core not in CORES:
            raise ConfigurationError(f"Unknown core '{self.render_core}'")
        if _tenths(self.f_big) not in BIG_TENTHS or abs(self.f_big * 10 - _tenths(self.f_big)) > 1e-6:
            raise ConfigurationError(f"Big-core frequency {self.f_big} GHz is off the grid")
        if _tenths(self.f_little) not in LITTLE_TENTHS or abs(self.f_little * 10 - _tenths(self.f_little)) > 1e-6:
            raise ConfigurationError(f"Little-core frequency {self.f_little} GHz is off the grid")
        # snap to the canonical float for each grid point
        object.__setattr__(self, 'f_big', _tenths(self.f_big) / 10)
        object.__setattr__(self, 'f_little', _tenths(self.f_little) / 10)

    @property
    def render_frequency(self):
        return self.f_big if self.render_core == BIG else self.f_little

    @property
    def other_core(self):
        return LITTLE if self.render_core == BIG else BIG

    @property
    def other_frequency(self):
        return self.f_little if self.render_core == BIG else self.f_big

    @property
    def key(self):
        return f"{self.render_core}:{self.f_big:.1f}:{self.f_little:.1f}"

    def to_json(self):
        return [self.render_core, self.f_big, self.f_little]

    @classmethod
    def from_json(cls, data):
        return cls(str(data[0]), float(data[1]), float(data[2]))

    @classmethod
    def parse(cls, key):
        try:
            core, f_big, f_little = key.split(':')
            return cls(core, float(f_big), float(f_little))
        except ValueError:
            raise ConfigurationError(f"Cannot read processor configuration '{key}'")

    def __str__(self):
        return f"({self.render_core}, {self.f_big:.1f}, {self.f_little:.1f})"


@dataclass(frozen=True)
class CostModelParams:
    ipc_big: float = 2.0
    ipc_little: float = 1.0
    alpha_aux: float = 0.05
    p_stat_big: float = 0.3
    p_stat_little: float = 0.05
    kappa_big: float = 1.0
    kappa_little: float = 0.15
    throttle_knee: float = 1.8
    throttle_slope: float = 0.5
    beta0: float = 1.0
    beta1: float = 0.01
    beta2: float = 0.005
    beta3: float = 0.002
    beta4: float = 0.05
    beta5: float = 0.1
    noise_sigma: float = 0.0
    seed: int = 0
    # Zero for any of these four gives the plain proportional model
    thermal_knee_drop: float = 0.6
    thermal_work_scale: float = 10.0
    t_setup: float = 0.5
    idle_dyn_fraction: float = 0.3

    def __post_init__(self):
        positive = ['ipc_big', 'ipc_little', 'alpha_aux', 'p_stat_big', 'p_stat_little', 'kappa_big',
                    'kappa_little', 'throttle_knee', 'throttle_slope', 'beta0', 'beta1', 'beta2', 'beta3',
                    'beta4', 'beta5']
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"Cost model parameter {name} must be positive")
        for name in ['noise_sigma', 'thermal_knee_drop', 'thermal_work_scale', 't_setup', 'idle_dyn_fraction']:
            if getattr(self, name) < 0:
                raise ConfigurationError(f"Cost model parameter {name} must not be negative")
        if self.throttle_knee > 2.0:
            raise ConfigurationError("throttle_knee must not exceed 2.0 GHz")

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"Unknown cost model parameters: {', '.join(unknown)}")
        values = {k: (int(v) if k == 'seed' else float(v)) for k, v in data.items()}
        return cls(**values)

    def quiet(self):
        return self if self.noise_sigma == 0 else replace(self, noise_sigma=0.0)


def load_params(path=None):
    if path is None:
        return CostModelParams()
    return CostModelParams.from_json(read_json(Path(path)))


@dataclass(frozen=True)
class WorkloadCost:
    load_time: float
    energy: float
    edp: float

    def value(self, metric):
        return getattr(self, Metric.parse(metric).value)

    def to_json(self):
        return {'load_time': self.load_time, 'energy': self.energy, 'edp': self.edp}


def workload_weight(vector, params=CostModelParams(), schema=DEFAULT_SCHEMA):
    '''
    Work units of a page, a linear function of its raw features.

    W = b0 + b1*nodes + b2*rules + b3*size_kb + b4*depth + b5*(#img + #table + #iframe)
    '''
    if vector.normalized:
        raise WebdvfsException("workload_weight needs a raw feature vector")
    media = sum(vector.value(tag_feature(t), schema) for t in MEDIA_TAGS)
    return (params.beta0
            + params.beta1 * vector.value(DOM_NODES, schema)
            + params.beta2 * vector.value(STYLE_RULES, schema)
            + params.beta3 * vector.value(PAGE_SIZE, schema)
            + params.beta4 * vector.value(DOM_DEPTH, schema)
            + params.beta5 * media)


def effective_knee(params, weight=None):
    if weight is None or params.thermal_knee_drop == 0:
        return params.throttle_knee
    return params.throttle_knee - params.thermal_knee_drop * weight / (weight + params.thermal_work_scale)


def _throttle(is_big, f, params, weight=None):
    knee = effective_knee(params, weight)
    theta = 1.0 - params.throttle_slope * np.maximum(0.0, f - knee)
    return np.where(is_big, np.maximum(theta, 1e-3), 1.0)


def speed(core, f, params=CostModelParams(), weight=None):
    '''
    Work units per second of a core at frequency f (GHz).

    Without a weight the big core throttles above throttle_knee; with one, above
    the knee lowered for that amount of sustained work.
    '''
    is_big = core == BIG
    ipc = params.ipc_big if is_big else params.ipc_little
    return float(ipc * f * _throttle(is_big, f, params, weight))


def power(core, f, params=CostModelParams()):
    if core == BIG:
        return params.p_stat_big + params.kappa_big * f * f * f
    return params.p_stat_little + params.kappa_little * f * f * f


def _costs(weight, render_big, f_big, f_little, params, noise=None):
    # Element-wise cost of each (render core, f_big, f_little) row
    render_big = np.asarray(render_big, dtype=bool)
    f_big = np.asarray(f_big, dtype=float)
    f_little = np.asarray(f_little, dtype=float)
    f_render = np.where(render_big, f_big, f_little)
    f_other = np.where(render_big, f_little, f_big)
    ipc_render = np.where(render_big, params.ipc_big, params.ipc_little)
    ipc_other = np.where(render_big, params.ipc_little, params.ipc_big)
    p_stat_render = np.where(render_big, params.p_stat_big, params.p_stat_little)
    p_stat_other = np.where(render_big, params.p_stat_little, params.p_stat_big)
    kappa_render = np.where(render_big, params.kappa_big, params.kappa_little)
    kappa_other = np.where(render_big, params.kappa_little, params.kappa_big)

    speed_render = ipc_render * f_render * _throttle(render_big, f_render, params, weight)
    speed_other = ipc_other * f_other * _throttle(~render_big, f_other, params, weight)
    t_render = weight / speed_render
    if noise is not None:
        t_render = t_render * noise
    t_aux = params.alpha_aux * weight / speed_other

    dyn_render = kappa_render * f_render * f_render * f_render
    dyn_other = kappa_other * f_other * f_other * f_other
    energy_render = t_render * (p_stat_render + dyn_render + p_stat_other)
    energy_aux = t_aux * (p_stat_other + dyn_other + p_stat_render)
    # the render cluster idles through setup, the other one is power-gated
    energy_setup = params.t_setup * (p_stat_render + params.idle_dyn_fraction * dyn_render)

    load_time = params.t_setup + t_render + t_aux
    energy = energy_setup + energy_render + energy_aux
    return load_time, energy, energy * load_time


def page_seed(page_id):
    return zlib.crc32(str(page_id).encode('utf-8'))


def noise_factor(params, page_id, config_index, repetition=0, size=None):
    '''
    Unit-mean log-normal multiplier for the render time, seeded per
    (seed, page, configuration, repetition).
    '''
    rng = np.random.default_rng([params.seed, page_seed(page_id), config_index, repetition])
    sigma = params.noise_sigma
    return np.exp(sigma * rng.standard_normal(size) - 0.5 * sigma * sigma)


def evaluate(vector, config, params=CostModelParams(), page_id=None, repetition=0):
    '''
    Load time, energy and EDP of rendering a page under one configuration.

    Parameters
    ----------
    vector : FeatureVector
        Raw feature values of the page
    config : ProcessorConfig
    params : CostModelParams
    page_id : str
        Seeds the measurement noise; only used when params.noise_sigma > 0
    repetition : int
        Index of a repeated measurement of the same (page, config)

    Returns
    -------
    WorkloadCost
    '''
    if not isinstance(config, ProcessorConfig):
        raise ConfigurationError(f"{config!r} is not a processor configuration")
    weight = workload_weight(vector, params)
    noise = None
    if params.noise_sigma > 0:
        if page_id is None:
            page_id = ','.join(repr(x) for x in vector.values)
        noise = np.atleast_1d(noise_factor(params, page_id, config_index(config), repetition))
    load_time, energy, edp = _costs(weight, [config.render_core == BIG], [config.f_big], [config.f_little], params, noise)
    return WorkloadCost(float(load_time[0]), float(energy[0]), float(edp[0]))


def enumerate_configs():
    '''
    All 374 configurations in lexicographic order: render core, then big-core
    frequency, then little-core frequency.
    '''
    return [ProcessorConfig(core, fb, fl) for core in CORES for fb in BIG_FREQS for fl in LITTLE_FREQS]


ALL_CONFIGS = tuple(enumerate_configs())
_CONFIG_INDEX = {c: i for i, c in enumerate(ALL_CONFIGS)}
_GRID_BIG = np.asarray([c.render_core == BIG for c in ALL_CONFIGS])
_GRID_FB = np.asarray([c.f_big for c in ALL_CONFIGS])
_GRID_FL = np.asarray([c.f_little for c in ALL_CONFIGS])


def config_index(config):
    return _CONFIG_INDEX[config]


def evaluate_all(vector, params=CostModelParams()):
    '''
    Noise-free (load_time, energy, edp) arrays over enumerate_configs() order.
    '''
    weight = workload_weight(vector, params)
    return _costs(weight, _GRID_BIG, _GRID_FB, _GRID_FL, params)


def metric_values(vector, metric, params=CostModelParams()):
    load_time, energy, edp = evaluate_all(vector, params)
    return {Metric.LOAD_TIME: load_time, Metric.ENERGY: energy, Metric.EDP: edp}[Metric.parse(metric)]


def oracle_best(vector, metric, params=CostModelParams()):
    '''
    Brute-force optimum over every configuration, ties going to the earliest
    configuration in enumeration order. Measurement noise is ignored.
    '''
    params = params.quiet()
    values = metric_values(vector, metric, params)
    best = int(np.argmin(values))
    config = ALL_CONFIGS[best]
    return config, evaluate(vector, config, params)


def hmp_baseline():
    # performance-governor proxy: render on big, everything at maximum frequency
    return ProcessorConfig(BIG, BIG_FREQS[-1], LITTLE_FREQS[-1])


def fixed_config_sweep(corpus, configs, metric, params=CostModelParams()):
    '''
    Geometric-mean metric of each fixed configuration across a corpus, relative
    to the HMP proxy (lower is better).

    Parameters
    ----------
    corpus : sequence of (page_id, FeatureVector)
    configs : sequence of ProcessorConfig, typically a label set

    Returns
    -------
    dict
        ProcessorConfig -> geometric mean of value(config) / value(hmp)
    '''
    corpus = list(corpus)
    configs = list(configs)
    if not corpus:
        raise WebdvfsException("Fixed-configuration sweep over an empty corpus")
    if not configs:
        raise WebdvfsException("Fixed-configuration sweep needs at least one configuration")
    params = params.quiet()
    hmp = config_index(hmp_baseline())
    ratios = {c: [] for c in configs}
    for page_id, vector in corpus:
        values = metric_values(vector, metric, params)
        for c in configs:
            ratios[c].append(values[config_index(c)] / values[hmp])
    return {c: geometric_mean(r) for c, r in ratios.items()}


def oracle_sweep_ratio(corpus, metric, params=CostModelParams()):
    # Geometric mean of the per-page oracle relative to HMP
    params = params.quiet()
    hmp = config_index(hmp_baseline())
    ratios = []
    for page_id, vector in corpus:
        values = metric_values(vector, metric, params)
        ratios.append(values.min() / values[hmp])
    return geometric_mean(ratios)


def write_sweep_csv(path, corpus, params=CostModelParams()):
    # One row per (page, configuration)
    params = params.quiet()
    rows = []
    for page_id, vector in corpus:
        load_time, energy, edp = evaluate_all(vector, params)
        for i, c in enumerate(ALL_CONFIGS):
            rows.append([page_id, c.key, repr(float(load_time[i])), repr(float(energy[i])), repr(float(edp[i]))])
    return write_csv(path, ['page_id', 'config', 'time_s', 'energy_j', 'edp_js'], rows)


def config_transfer(vector_a, vector_b, params=CostModelParams()):
    '''
    How much page b loses by running under page a's optimum instead of its own,
    per metric: 1 - best_b / cost_b(best_a).
    '''
    params = params.quiet()
    loss = {}
    for metric in METRICS:
        best_a, _ = oracle_best(vector_a, metric, params)
        best_b, cost_b = oracle_best(vector_b, metric, params)
        borrowed = evaluate(vector_b, best_a, params)
        loss[metric] = 1.0 - cost_b.value(metric) / borrowed.value(metric)
    return loss
