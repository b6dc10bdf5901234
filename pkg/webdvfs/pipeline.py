from dataclasses import replace
from pathlib import Path
import logging
import sys

from webdvfs.corpus import gen_corpus, load_corpus, corpus_features, diversity_summary
from webdvfs.crossval import choose_hyperparameters
from webdvfs.device import Metric, METRICS, CostModelParams, load_params, write_sweep_csv, fixed_config_sweep, \
    oracle_sweep_ratio, config_transfer
from webdvfs.evaluate import cmd_evaluate, overhead_profile
from webdvfs.features import (DEFAULT_SCHEMA, extract_raw_features, fit_normalizer, write_feature_csv,
                              page_features)
from webdvfs.learn import generate_training_data, train_multiclass, save_model, load_model
from webdvfs.report import cmd_report
from webdvfs.sched import run_session, recommend_goal, NetworkClass
from webdvfs.utils import WebdvfsException, folder_setup, setup_logger, write_json, write_jsonl, write_csv
from webdvfs.webparse import load_page, parse_page

logger = logging.getLogger('webdvfs')


def model_path(model_dir, metric):
    return Path(model_dir) / f"model_{Metric.parse(metric).short}.json"


def train_model(corpus, metric, params=CostModelParams(), cache=None):
    '''
    Label, tune and train the model of one metric over a whole corpus.
    '''
    metric = Metric.parse(metric)
    cache = {} if cache is None else cache
    training = generate_training_data(corpus, metric, params.quiet(), cache)
    C, gamma = choose_hyperparameters(corpus, metric, params.quiet(), cache=cache)
    logger.debug(f"{metric.value}: C={C:g}, gamma={gamma:.4g}")
    return train_multiclass(training.examples, training.label_set, C, gamma, training.normalization)


def cmd_train(corpus, metric, params, paths, cache=None):
    '''
    Train and save the model of one metric, printing its label set.

    Returns
    -------
    Path
        models/model_<metric>.json
    '''
    metric = Metric.parse(metric)
    sys.stdout.write(f"🧪 Training {metric.value} model on {len(corpus)} pages\n")
    model = train_model(corpus, metric, params, cache)
    path = save_model(model, model_path(paths['models'], metric))
    sys.stdout.write(f"🏷️  {len(model.label_set)} configurations for {metric.value}:\n")
    for k, config in enumerate(model.label_set.configs):
        sys.stdout.write(f"   {k:>3}  {config}\n")
    return path


def cmd_predict(page_dir, model_dir, paths, goal=None, network=None, chunk_size=4096, params=CostModelParams()):
    '''
    Predict a configuration for one saved page and simulate its load.

    The goal decides which model file is used; without a goal the network
    class picks one, and without either the load time model is used.

    Returns
    -------
    SessionTrace
    '''
    if goal is None and network is not None:
        goal = recommend_goal(NetworkClass.parse(network) if isinstance(network, str) else network)
        sys.stdout.write(f"📶 {network} network: optimising for {goal.value}\n")
    metric = Metric.parse(goal or Metric.LOAD_TIME)
    path = model_path(model_dir, metric)
    if not path.exists():
        raise WebdvfsException(f"No {metric.value} model in {model_dir}")
    model = load_model(path)
    page = load_page(page_dir)
    trace = run_session(page, model, params, chunk_size)
    trace.write(paths['traces'] / f"{page.page_id}_{metric.short}.jsonl")
    sys.stdout.write(f"⚙️  {page.page_id}: {trace.final_config} for {metric.value} "
                     f"({trace.predictions} predictions, {trace.snapshots} snapshots)\n")
    for phase, ms in trace.overhead_by_phase.items():
        sys.stdout.write(f"   {phase:<20} {ms:8.3f} ms\n")
    sys.stdout.write(f"   load time {trace.load_time:.4f} s "
                     f"({trace.load_time_without_overheads:.4f} s without overheads)\n")
    return trace


class Browser:
    '''
    One working directory of experiments: corpus features, trained models,
    evaluation reports and traces all go under ``outdir``.
    '''

    def __init__(self, outdir, **kwargs):
        self.outdir = Path(outdir)
        params = kwargs.get('params', None)
        if params is None or isinstance(params, (str, Path)):
            params = load_params(params)
        self.seed = kwargs.get('seed', 7)
        if 'seed' in kwargs:
            params = replace(params, seed=int(self.seed))
        self.params = params
        verbose = kwargs.get('verbose', False)
        self.paths = folder_setup(self.outdir)
        logger = setup_logger('webdvfs', verbose)
        self.cache = {}
        self._features = {}

    def gen_corpus(self, dest, n=400, profile='desktop'):
        manifest = gen_corpus(dest, n, self.seed, profile)
        summary = diversity_summary(corpus_features(manifest))
        write_json(Path(dest) / 'diversity.json', summary)
        return manifest

    def features(self, corpus_dir):
        corpus_dir = Path(corpus_dir)
        if corpus_dir not in self._features:
            self._features[corpus_dir] = corpus_features(load_corpus(corpus_dir))
        return self._features[corpus_dir]

    def extract(self, corpus_dir, raw=False):
        '''
        Feature CSV and normalization table of a corpus; with raw, also every
        candidate feature count per page as JSON lines.
        '''
        manifest = load_corpus(corpus_dir)
        corpus = self.features(corpus_dir)
        ids = [pid for pid, _ in corpus]
        csv_path = write_feature_csv(self.paths['features'] / 'features.csv', ids, [v for _, v in corpus])
        table = fit_normalizer([v for _, v in corpus])
        write_json(self.paths['features'] / 'normalization.json', table.to_json())
        if raw:
            records = []
            for page in manifest.iter_pages():
                tree, styles, size = parse_page(page)
                records.append({'page_id': page.page_id, 'features': extract_raw_features(tree, styles, size)})
            write_jsonl(self.paths['features'] / 'raw_features.jsonl', records)
        sys.stdout.write(f"🔎 {len(DEFAULT_SCHEMA)} features of {len(ids)} pages written to {csv_path}\n")
        return csv_path

    def train(self, corpus_dir, metrics=METRICS):
        corpus = self.features(corpus_dir)
        return {Metric.parse(m): cmd_train(corpus, m, self.params, self.paths, self.cache) for m in metrics}

    def evaluate(self, corpus_dir, metrics=METRICS, mode='loocv', overheads=True):
        corpus = self.features(corpus_dir)
        written = {}
        for m in metrics:
            metric = Metric.parse(m)
            report = cmd_evaluate(corpus, metric, self.params, mode, self.seed, self.cache)
            written[metric] = report.write(self.paths)
            if overheads:
                model = train_model(corpus, metric, self.params, self.cache)
                profile = overhead_profile(load_corpus(corpus_dir).iter_pages(), model, self.params)
                write_json(self.paths['reports'] / f"overheads_{metric.short}.json", profile)
        return written

    def predict(self, page_dir, model_dir=None, goal=None, network=None, chunk_size=4096):
        model_dir = self.paths['models'] if model_dir is None else model_dir
        return cmd_predict(page_dir, model_dir, self.paths, goal, network, chunk_size, self.params)

    def sweep(self, corpus_dir, metrics=METRICS):
        '''
        Every configuration on every page, plus the geometric mean of each
        oracle-used configuration relative to HMP.
        '''
        corpus = self.features(corpus_dir)
        path = write_sweep_csv(self.paths['reports'] / 'sweep.csv', corpus, self.params)
        for m in metrics:
            metric = Metric.parse(m)
            training = generate_training_data(corpus, metric, self.params.quiet(), self.cache)
            table = fixed_config_sweep(corpus, training.label_set.configs, metric, self.params)
            rows = [[c.key, repr(r)] for c, r in table.items()]
            rows.append(['oracle', repr(oracle_sweep_ratio(corpus, metric, self.params))])
            write_csv(self.paths['reports'] / f"fixed_{metric.short}.csv", ['config', 'ratio_vs_hmp'], rows)
        sys.stdout.write(f"🧹 Configuration sweep written to {path}\n")
        return path

    def report(self, report_path, corpus_dir=None):
        corpus = self.features(corpus_dir) if corpus_dir else None
        return cmd_report(report_path, self.paths, corpus)

    def transfer(self, page_a, page_b):
        a = load_page(page_a)
        b = load_page(page_b)
        losses = config_transfer(page_features(a), page_features(b), self.params)
        for metric, loss in losses.items():
            sys.stdout.write(f"🔀 {b.page_id} under the best {metric.value} configuration of {a.page_id}: "
                             f"{loss:.1%} worse than its own\n")
        return losses
