from webdvfs.webparse import parse_html, parse_css, snapshot_stream, load_page
from webdvfs.features import FeatureVector, DEFAULT_SCHEMA, page_features, fit_normalizer, normalize
from webdvfs.device import Metric, ProcessorConfig, CostModelParams, enumerate_configs, oracle_best, hmp_baseline
from webdvfs.learn import generate_training_data, train_multiclass, predict_label, load_model, save_model
from webdvfs.crossval import loocv
from webdvfs.sched import run_session, recommend_goal, NetworkClass
from webdvfs.corpus import gen_corpus, load_corpus, corpus_features
from webdvfs.pipeline import Browser
from webdvfs.utils import WebdvfsException
