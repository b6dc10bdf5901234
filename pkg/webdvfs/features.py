import logging
from dataclasses import dataclass
from collections import Counter

import numpy as np
from scipy.stats import entropy, rankdata

from webdvfs.utils import WebdvfsException, SchemaMismatch, write_csv, read_csv

logger = logging.getLogger('webdvfs')

HTML_TAGS = ('a', 'b', 'br', 'button', 'div', 'h1', 'h2', 'h3', 'h4', 'i', 'iframe', 'li',
             'link', 'meta', 'nav', 'img', 'noscript', 'p', 'script', 'section', 'span',
             'style', 'table', 'tbody')

HTML_ATTRIBUTES = ('alt', 'async', 'border', 'charset', 'class', 'height', 'content', 'href',
                   'media', 'method', 'onclick', 'placeholder', 'property', 'rel', 'role',
                   'style', 'target', 'type', 'value', 'background', 'cellspacing', 'width',
                   'xmlns', 'src')

SELECTOR_PATTERNS = ('class', 'descendant', 'element', 'id')

# Feature name -> stylesheet property
STYLE_PROPERTIES = {
    'background.attachment': 'background-attachment',
    'background.clip': 'background-clip',
    'background.color': 'background-color',
    'background.image': 'background-image',
    'background.repeat.x': 'background-repeat-x',
    'background.repeat.y': 'background-repeat-y',
    'background.size': 'background-size',
    'background.border.image.repeat': 'border-image-repeat',
    'background.border.image.slice': 'border-image-slice',
    'background.border.image.source': 'border-image-source',
    'background.border.image.width': 'border-image-width',
    'font.family': 'font-family',
    'font.size': 'font-size',
    'font.weight': 'font-weight',
    'color': 'color',
    'display': 'display',
    'float': 'float',
}
_PROPERTY_ALIASES = {prop: name for name, prop in STYLE_PROPERTIES.items()}

DOM_DEPTH = 'dom.depth'
DOM_NODES = 'dom.nodes'
STYLE_RULES = 'style.rules'
PAGE_SIZE = 'page.size_kb'
OTHER_FEATURES = (DOM_DEPTH, DOM_NODES, STYLE_RULES, PAGE_SIZE)

SCHEMA_VERSION = 'webfeatures-73.1'


def tag_feature(tag):
    return f'tag.{tag}'


def attr_feature(attr):
    return f'attr.{attr}'


def selector_feature(kind):
    return f'selector.{kind}'


def property_feature(prop):
    return _PROPERTY_ALIASES.get(prop, prop.replace('-', '.'))


@dataclass(frozen=True)
class FeatureSchema:
    version: str
    names: tuple

    def __len__(self):
        return len(self.names)

    def index(self, name):
        return self.names.index(name)


DEFAULT_SCHEMA = FeatureSchema(
    version=SCHEMA_VERSION,
    names=tuple([tag_feature(t) for t in HTML_TAGS]
                + [attr_feature(a) for a in HTML_ATTRIBUTES]
                + [selector_feature(s) for s in SELECTOR_PATTERNS]
                + list(STYLE_PROPERTIES)
                + list(OTHER_FEATURES)))

SCHEMAS = {SCHEMA_VERSION: DEFAULT_SCHEMA.names}


def check_schema(schema):
    if SCHEMAS.get(schema.version) != schema.names:
        raise SchemaMismatch(f"Unknown feature schema '{schema.version}'")
    return schema


@dataclass(frozen=True)
class FeatureVector:
    schema_version: str
    values: tuple
    normalized: bool = False

    @property
    def array(self):
        return np.asarray(self.values, dtype=float)

    def __len__(self):
        return len(self.values)

    def value(self, name, schema=DEFAULT_SCHEMA):
        return self.values[schema.index(name)]


@dataclass(frozen=True)
class NormalizationTable:
    schema_version: str
    mins: tuple
    maxs: tuple

    def to_json(self, schema=DEFAULT_SCHEMA):
        return {name: {'min': lo, 'max': hi} for name, lo, hi in zip(schema.names, self.mins, self.maxs)}

    @classmethod
    def from_json(cls, data, schema=DEFAULT_SCHEMA):
        missing = [name for name in schema.names if name not in data]
        if missing:
            raise SchemaMismatch(f"Normalization table lacks {len(missing)} features, e.g. {missing[0]}")
        return cls(schema.version,
                   tuple(float(data[name]['min']) for name in schema.names),
                   tuple(float(data[name]['max']) for name in schema.names))


def extract_raw_features(tree, styles, page_bytes=None):
    '''
    Count every tag, attribute, style property and selector kind of a parsed page.

    Parameters
    ----------
    tree : DomTree
    styles : list of StyleRule
    page_bytes : int
        Total bytes of the HTML document and its stylesheets. Defaults to the
        document size alone.

    Returns
    -------
    dict
        Raw candidate feature map. Features absent from the page are simply not
        present (read as 0).
    '''
    counts = Counter()
    for node in tree.iter_elements():
        counts[tag_feature(node.tag_name)] += 1
        for name, _ in node.attributes:
            counts[attr_feature(name)] += 1
    for rule in styles:
        for selector in rule.selectors:
            counts[selector_feature(selector.kind)] += 1
        for prop, _ in rule.declarations:
            counts[property_feature(prop)] += 1
    raw = {key: float(value) for key, value in counts.items()}
    raw[DOM_NODES] = float(tree.node_count)
    raw[DOM_DEPTH] = float(tree.depth)
    raw[STYLE_RULES] = float(len(styles))
    if page_bytes is None:
        page_bytes = tree.source_bytes
    raw[PAGE_SIZE] = page_bytes / 1024.0
    return raw


def project(raw, schema=DEFAULT_SCHEMA):
    # Keep the schema features in schema order, drop everything else
    check_schema(schema)
    return FeatureVector(schema.version, tuple(float(raw.get(name, 0.0)) for name in schema.names))


def page_features(page, schema=DEFAULT_SCHEMA):
    from webdvfs.webparse import parse_page
    tree, styles, size = parse_page(page)
    return project(extract_raw_features(tree, styles, size), schema)


def snapshot_features(snapshot, schema=DEFAULT_SCHEMA):
    return project(extract_raw_features(snapshot.tree, snapshot.styles, snapshot.bytes_consumed), schema)


def _stack(vectors):
    vectors = list(vectors)
    if vectors and isinstance(vectors[0], FeatureVector):
        versions = {v.schema_version for v in vectors}
        if len(versions) > 1:
            raise SchemaMismatch(f"Mixed schema versions {sorted(versions)}")
        return np.asarray([v.values for v in vectors], dtype=float)
    return np.atleast_2d(np.asarray(vectors, dtype=float))


def fit_normalizer(vectors):
    '''
    Record per-feature min and max over a set of raw vectors.
    '''
    vectors = list(vectors)
    if not vectors:
        raise WebdvfsException("Cannot fit a normalizer on an empty training set")
    if any(v.normalized for v in vectors):
        raise WebdvfsException("fit_normalizer needs raw vectors")
    X = _stack(vectors)
    return NormalizationTable(vectors[0].schema_version, tuple(X.min(axis=0).tolist()), tuple(X.max(axis=0).tolist()))


def normalize_array(X, table):
    X = np.asarray(X, dtype=float)
    lo = np.asarray(table.mins)
    hi = np.asarray(table.maxs)
    span = hi - lo
    degenerate = span <= 0
    scaled = (X - lo) / np.where(degenerate, 1.0, span)
    scaled = np.clip(scaled, 0.0, 1.0)
    return np.where(degenerate, 0.0, scaled)


def normalize(vector, table):
    '''
    Min-max scale a raw vector into [0, 1] with a fitted table.

    Values outside the fitted range are clamped; features whose fitted range is
    a single value map to 0.
    '''
    if vector.schema_version != table.schema_version or len(vector) != len(table.mins):
        raise SchemaMismatch(f"Vector schema {vector.schema_version} does not match table {table.schema_version}")
    if vector.normalized:
        raise WebdvfsException("Vector is already normalized")
    return FeatureVector(vector.schema_version, tuple(normalize_array(vector.array, table).tolist()), normalized=True)


class CorrelationMatrix:
    def __init__(self, names, matrix):
        self.names = tuple(names)
        self.matrix = np.asarray(matrix, dtype=float)

    def r(self, a, b):
        return self.matrix[self.names.index(a), self.names.index(b)]


def correlation_matrix(vectors, names=None):
    '''
    Pearson correlation between every pair of raw features.

    Zero-variance features correlate 0 with every other feature and 1 with
    themselves.
    '''
    X = _stack(vectors)
    if X.shape[0] < 2:
        raise WebdvfsException("Correlation needs at least 2 samples")
    if names is None:
        names = [f'f{i}' for i in range(X.shape[1])]
    std = X.std(axis=0)
    varying = std > 0
    Xc = X - X.mean(axis=0)
    denom = np.outer(np.where(varying, std, 1.0), np.where(varying, std, 1.0)) * X.shape[0]
    corr = (Xc.T @ Xc) / denom
    corr[~varying, :] = 0.0
    corr[:, ~varying] = 0.0
    corr = np.clip(corr, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return CorrelationMatrix(names, corr)


def prune_correlated(candidates, matrix, threshold=0.75):
    '''
    Greedy correlation filter.

    Candidates are visited in the given order; a feature is dropped when the
    absolute correlation with any already retained feature exceeds threshold.
    '''
    retained = []
    for name in candidates:
        i = matrix.names.index(name)
        clash = [other for other in retained if abs(matrix.matrix[i, matrix.names.index(other)]) > threshold]
        if clash:
            logger.debug(f"Dropping {name}: correlated with {clash[0]}")
            continue
        retained.append(name)
    return retained


def select_features(raw_maps, threshold=0.75, schema=DEFAULT_SCHEMA):
    '''
    Re-derive a feature selection over raw candidate maps collected from a corpus.

    Candidate order is the schema order followed by the remaining raw features in
    name order, so the shipped schema features win ties against new candidates.
    '''
    raw_maps = list(raw_maps)
    seen = set()
    for raw in raw_maps:
        seen.update(raw)
    candidates = [n for n in schema.names] + sorted(seen - set(schema.names))
    X = np.asarray([[raw.get(name, 0.0) for name in candidates] for raw in raw_maps], dtype=float)
    return prune_correlated(candidates, correlation_matrix(X, candidates), threshold)


def discretize(column, bins=10):
    '''
    Rank-based equal-frequency binning.

    Columns with no more distinct values than bins get one bin per value.
    '''
    column = np.asarray(column, dtype=float)
    distinct = np.unique(column)
    if distinct.size <= bins:
        return np.searchsorted(distinct, column)
    ranks = rankdata(column, method='min')
    return np.floor((ranks - 1) * bins / column.size).astype(int)


def _entropy_of(codes):
    _, counts = np.unique(codes, return_counts=True)
    return float(entropy(counts, base=2))


def information_gain_ratio(vectors, labels, bins=10):
    '''
    Information gain ratio of each discretized feature about the label.

    Parameters
    ----------
    vectors : list of FeatureVector or 2-d array
    labels : sequence of int
    bins : int
        Equal-frequency bins per feature

    Returns
    -------
    numpy.ndarray
        One score per feature; features with zero split entropy score 0.
    '''
    X = _stack(vectors)
    labels = np.asarray(labels)
    if np.unique(labels).size < 2:
        raise WebdvfsException("Information gain ratio needs at least 2 distinct labels")
    h_y = _entropy_of(labels)
    scores = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        codes = discretize(X[:, j], bins)
        h_x = _entropy_of(codes)
        if h_x <= 0:
            continue
        h_y_given_x = 0.0
        for code in np.unique(codes):
            mask = codes == code
            h_y_given_x += mask.mean() * _entropy_of(labels[mask])
        scores[j] = max(0.0, h_y - h_y_given_x) / h_x
    return scores


def feature_importance(vectors, labels, schema=DEFAULT_SCHEMA):
    scores = information_gain_ratio(vectors, labels)
    return list(zip(schema.names, scores.tolist()))


def write_feature_csv(path, page_ids, vectors, schema=DEFAULT_SCHEMA):
    rows = [[pid] + [repr(x) for x in v.values] for pid, v in zip(page_ids, vectors)]
    return write_csv(path, ['page_id'] + list(schema.names), rows)


def read_feature_csv(path, schema=DEFAULT_SCHEMA):
    header, rows = read_csv(path)
    if tuple(header[1:]) != schema.names:
        raise SchemaMismatch(f"{path} does not carry the {schema.version} feature columns")
    return [r[0] for r in rows], [FeatureVector(schema.version, tuple(float(x) for x in r[1:])) for r in rows]
