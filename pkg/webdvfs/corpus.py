'''
Local web page corpora: the manifest describing one, feature extraction over all
of its pages, and a seeded generator of synthetic pages spanning the size range
of real landing pages.
'''

import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from webdvfs.features import DOM_NODES, PAGE_SIZE, page_features
from webdvfs.utils import WebdvfsException, ConfigurationError, read_json, write_json
from webdvfs.webparse import load_page

logger = logging.getLogger('webdvfs')

MANIFEST_NAME = 'manifest.json'


@dataclass(frozen=True)
class SizeProfile:
    min_nodes: int
    max_nodes: int
    min_bytes: int
    max_bytes: int
    max_rules: int


PROFILES = {
    'desktop': SizeProfile(4, 8000, 40 * 1024, 5 * 1024 * 1024, 3000),
    'small': SizeProfile(4, 300, 2 * 1024, 40 * 1024, 60),
}


@dataclass(frozen=True)
class PageEntry:
    page_id: str
    directory: str
    size_bytes: int

    def to_json(self):
        return {'id': self.page_id, 'directory': self.directory, 'bytes': self.size_bytes}


@dataclass(frozen=True)
class CorpusManifest:
    root: Path
    pages: tuple
    seed: int = None
    profile: str = None

    def __post_init__(self):
        ids = [p.page_id for p in self.pages]
        if len(set(ids)) != len(ids):
            raise WebdvfsException(f"Duplicate page ids in corpus {self.root}")

    def __len__(self):
        return len(self.pages)

    @property
    def page_ids(self):
        return [p.page_id for p in self.pages]

    def page_dir(self, entry):
        return Path(self.root) / entry.directory

    def iter_pages(self):
        for entry in self.pages:
            yield load_page(self.page_dir(entry))

    def to_json(self):
        return {'seed': self.seed, 'profile': self.profile, 'pages': [p.to_json() for p in self.pages]}

    def write(self):
        return write_json(Path(self.root) / MANIFEST_NAME, self.to_json())


def load_corpus(root):
    '''
    Read a corpus directory.

    A manifest.json is used when present, otherwise every sub-directory holding
    an index.html is a page named after the directory. Pages are ordered by id.
    '''
    root = Path(root)
    if not root.is_dir():
        raise WebdvfsException(f"Corpus directory {root} does not exist")
    manifest = root / MANIFEST_NAME
    if manifest.exists():
        data = read_json(manifest)
        try:
            entries = [PageEntry(str(p['id']), str(p['directory']), int(p['bytes'])) for p in data['pages']]
        except (KeyError, TypeError, ValueError) as e:
            raise WebdvfsException(f"Malformed corpus manifest {manifest}: {e}")
        seed, profile = data.get('seed'), data.get('profile')
    else:
        entries = []
        for directory in sorted(d for d in root.iterdir() if d.is_dir()):
            if (directory / 'index.html').exists():
                size = sum(f.stat().st_size for f in directory.iterdir() if f.suffix in ('.html', '.css'))
                entries.append(PageEntry(directory.name, directory.name, size))
        seed, profile = None, None
    for entry in entries:
        if not (root / entry.directory / 'index.html').exists():
            raise WebdvfsException(f"Page {entry.page_id} has no index.html in {root / entry.directory}")
    entries.sort(key=lambda e: e.page_id)
    if not entries:
        raise WebdvfsException(f"No pages found in {root}")
    return CorpusManifest(root, tuple(entries), seed, profile)


def corpus_features(manifest):
    '''
    Raw feature vectors of every page as a list of (page_id, FeatureVector),
    in page id order.
    '''
    features = []
    for page in manifest.iter_pages():
        features.append((page.page_id, page_features(page)))
    logger.debug(f"Extracted features of {len(features)} pages from {manifest.root}")
    return features


def diversity_summary(corpus, bins=12):
    '''
    Spread of DOM node counts and page sizes over a corpus, with log-spaced
    histograms of each.
    '''
    corpus = list(corpus)
    if not corpus:
        raise WebdvfsException("Diversity summary of an empty corpus")
    summary = {}
    for name in (DOM_NODES, PAGE_SIZE):
        values = np.asarray([v.value(name) for _, v in corpus], dtype=float)
        low = max(values.min(), 1e-3)
        high = max(values.max(), low * 1.001)
        counts, edges = np.histogram(np.clip(values, low, high), bins=np.geomspace(low, high, bins + 1))
        summary[name] = {'min': float(values.min()), 'median': float(np.median(values)),
                         'max': float(values.max()), 'bin_edges': edges.tolist(), 'counts': counts.tolist()}
    return summary


# --- synthetic pages -------------------------------------------------------

LOREM = ("lorem ipsum dolor sit amet consectetur adipiscing elit sed do eiusmod tempor incididunt "
         "ut labore et dolore magna aliqua ut enim ad minim veniam quis nostrud exercitation ")

BLOCK_KINDS = ('div', 'section', 'nav', 'p', 'heading', 'ul', 'table', 'img', 'br', 'a', 'button',
               'script', 'noscript', 'iframe', 'span')
CONTAINERS = ('div', 'section', 'nav')
INLINE_KINDS = ('span', 'a', 'b', 'i', 'br', 'img', 'button')
SELECTOR_STYLES = ('class', 'id', 'element', 'descendant')
ELEMENT_SELECTORS = ('div', 'p', 'a', 'span', 'li', 'h1', 'h2', 'img', 'table', 'nav', 'section', 'button')
PROPERTY_VALUES = {
    'background-attachment': ('scroll', 'fixed'),
    'background-clip': ('border-box', 'content-box'),
    'background-color': ('#fff', '#f4f4f4', '#202124', 'rgb(0, 120, 215)'),
    'background-image': ('url(bg.png)', 'none', 'linear-gradient(#fff, #eee)'),
    'background-repeat-x': ('repeat', 'no-repeat'),
    'background-repeat-y': ('repeat', 'no-repeat'),
    'background-size': ('cover', 'contain', '100% auto'),
    'border-image-repeat': ('stretch', 'round'),
    'border-image-slice': ('30', '10%'),
    'border-image-source': ('url(border.png)', 'none'),
    'border-image-width': ('1', '10px'),
    'font-family': ('Arial, sans-serif', 'Georgia, serif', 'monospace'),
    'font-size': ('12px', '14px', '1.2em', 'small'),
    'font-weight': ('bold', 'normal', '600'),
    'color': ('#333', '#000', 'red', '#1a0dab'),
    'display': ('block', 'inline-block', 'none', 'flex'),
    'float': ('left', 'right', 'none'),
    'margin': ('0', '0 auto', '4px 8px'),
    'padding': ('0', '8px', '2px 4px'),
    'width': ('100%', '320px', 'auto'),
}


def _filler(n, offset):
    if n <= 0:
        return ''
    offset = offset % len(LOREM)
    repeats = (offset + n) // len(LOREM) + 1
    return (LOREM * repeats)[offset:offset + n]


class PageWriter:
    '''
    Emits one well-formed page with an exact element count. Text slots are
    reserved while the markup is written and filled afterwards to reach the
    byte target.
    '''

    def __init__(self, rng, nodes, max_depth):
        self.rng = rng
        self.remaining = nodes
        self.max_depth = max_depth
        self.parts = []
        self.slots = []
        self.mix = rng.dirichlet(np.ones(len(BLOCK_KINDS)))
        self.inline_mix = rng.dirichlet(np.ones(len(INLINE_KINDS)))
        self.fanout = rng.uniform(1.5, 4.0)
        self.attr_rate = rng.uniform(0.2, 0.9)
        self.classes = [f"c{k}" for k in range(int(rng.integers(3, 40)))]
        self.ids = [f"n{k}" for k in range(int(rng.integers(1, 20)))]
        self.id_count = 0

    def _pick(self, options):
        return options[int(self.rng.integers(len(options)))]

    def _maybe(self):
        return self.rng.random() < self.attr_rate

    def attributes(self, tag):
        rng = self.rng
        attrs = []
        if tag not in ('html', 'head', 'title', 'meta', 'link', 'script', 'br', 'tbody', 'tr'):
            if self._maybe():
                attrs.append(('class', self._pick(self.classes)))
            if self.rng.random() < 0.1:
                attrs.append(('style', f"color: {self._pick(PROPERTY_VALUES['color'])}"))
            if tag in CONTAINERS and self.rng.random() < 0.2:
                attrs.append(('id', f"{self._pick(self.ids)}-{self.id_count}"))
                self.id_count += 1
        if tag == 'html':
            attrs.append(('xmlns', 'http://www.w3.org/1999/xhtml'))
        elif tag == 'a':
            attrs.append(('href', f"/p/{int(rng.integers(1000))}.html"))
            if self._maybe():
                attrs.append(('target', '_blank'))
            if self._maybe():
                attrs.append(('rel', 'noopener'))
            if rng.random() < 0.15:
                attrs.append(('onclick', 'track(this)'))
        elif tag == 'img':
            attrs.append(('src', f"/img/{int(rng.integers(1000))}.png"))
            if self._maybe():
                attrs.append(('alt', 'picture'))
            if self._maybe():
                attrs.extend([('width', str(int(rng.integers(16, 800)))), ('height', str(int(rng.integers(16, 600))))])
            if rng.random() < 0.1:
                attrs.append(('border', '0'))
        elif tag == 'iframe':
            attrs.extend([('src', f"/embed/{int(rng.integers(100))}"), ('width', '300'), ('height', '250')])
        elif tag == 'button':
            attrs.append(('type', 'button'))
            if self._maybe():
                attrs.append(('onclick', 'toggle()'))
            if rng.random() < 0.3:
                attrs.append(('value', 'go'))
        elif tag == 'table':
            if self._maybe():
                attrs.extend([('border', '0'), ('cellspacing', '0')])
            if rng.random() < 0.3:
                attrs.append(('width', '100%'))
            if rng.random() < 0.1:
                attrs.append(('background', '/img/table.png'))
        elif tag == 'nav':
            attrs.append(('role', 'navigation'))
        elif tag == 'section' and self._maybe():
            attrs.append(('role', 'main'))
        elif tag == 'script':
            attrs.append(('type', 'text/javascript'))
            if self._maybe():
                attrs.extend([('src', f"/js/{int(rng.integers(50))}.js"), ('async', '')])
        return attrs

    def _tag(self, tag, attrs):
        rendered = ''.join(f' {name}' if value == '' else f' {name}="{value}"' for name, value in attrs)
        return f"<{tag}{rendered}>"

    def open(self, tag, attrs=None):
        self.remaining -= 1
        self.parts.append(self._tag(tag, self.attributes(tag) if attrs is None else attrs))

    def close(self, tag):
        self.parts.append(f"</{tag}>")

    def void(self, tag, attrs=None):
        self.open(tag, attrs)

    def text(self):
        self.slots.append(len(self.parts))
        self.parts.append('')

    def _children(self):
        return 1 + int(self.rng.poisson(self.fanout))

    def inline(self, depth):
        kind = INLINE_KINDS[int(self.rng.choice(len(INLINE_KINDS), p=self.inline_mix))]
        if kind in ('br', 'img'):
            self.void(kind)
            return
        self.open(kind)
        self.text()
        if depth < self.max_depth and self.remaining > 0 and kind != 'button' and self.rng.random() < 0.3:
            self.inline(depth + 1)
        self.close(kind)

    def block(self, depth):
        if depth >= self.max_depth:
            self.inline(depth)
            return
        kind = BLOCK_KINDS[int(self.rng.choice(len(BLOCK_KINDS), p=self.mix))]
        if kind in CONTAINERS:
            self.open(kind)
            for _ in range(self._children()):
                if self.remaining <= 0:
                    break
                self.block(depth + 1)
            self.close(kind)
        elif kind in ('p', 'heading'):
            tag = 'p' if kind == 'p' else f"h{int(self.rng.integers(1, 5))}"
            self.open(tag)
            self.text()
            for _ in range(int(self.rng.poisson(1.0))):
                if self.remaining <= 0:
                    break
                self.inline(depth + 1)
            self.close(tag)
        elif kind == 'ul' and self.remaining >= 2:
            self.open('ul')
            for _ in range(self._children()):
                if self.remaining <= 0:
                    break
                self.open('li')
                self.text()
                if self.remaining > 0 and self.rng.random() < 0.4:
                    self.inline(depth + 2)
                self.close('li')
            self.close('ul')
        elif kind == 'table' and self.remaining >= 4:
            self.open('table')
            self.open('tbody', [])
            for _ in range(self._children()):
                if self.remaining < 2:
                    break
                self.open('tr', [])
                for _ in range(self._children()):
                    if self.remaining <= 0:
                        break
                    self.open('td', [])
                    self.text()
                    if self.remaining > 0 and depth + 4 < self.max_depth and self.rng.random() < 0.2:
                        self.block(depth + 4)
                    self.close('td')
                self.close('tr')
            self.close('tbody')
            self.close('table')
        elif kind == 'script':
            self.open('script')
            self.parts.append('var loaded = true;')
            self.close('script')
        elif kind == 'noscript' and self.remaining >= 2:
            self.open('noscript')
            self.void('img')
            self.close('noscript')
        elif kind == 'iframe':
            self.open('iframe')
            self.close('iframe')
        else:
            self.inline(depth)

    def document(self):
        '''
        Markup of the whole document, text slots still empty.
        '''
        self.parts.append('<!DOCTYPE html>\n')
        self.open('html')
        self.open('head', [])
        self.open('title', [])
        self.text()
        self.close('title')
        # body is still to come
        self.remaining -= 1
        extras = [('meta', [('charset', 'utf-8')]),
                  ('link', [('rel', 'stylesheet'), ('href', 'style.css'), ('type', 'text/css'), ('media', 'all')]),
                  ('meta', [('property', 'og:title'), ('content', 'page')]),
                  ('script', None),
                  ('style', [])]
        for tag, attrs in extras:
            if self.remaining <= 0 or self.rng.random() > 0.8:
                continue
            self.open(tag, attrs)
            if tag == 'script':
                self.parts.append('window.ready = 1;')
                self.close(tag)
            elif tag == 'style':
                self.parts.append('body { margin: 0 }')
                self.close(tag)
        self.close('head')
        self.remaining += 1
        self.open('body')
        self.text()
        while self.remaining > 0:
            self.block(3)
        self.close('body')
        self.close('html')
        self.parts.append('\n')

    def fill(self, target_bytes, fixed_bytes):
        # Spread text over the reserved slots until the page reaches its byte target
        markup = sum(len(p) for p in self.parts)
        pad = max(0, target_bytes - fixed_bytes - markup)
        weights = self.rng.random(len(self.slots)) ** 3 + 1e-9
        shares = np.floor(pad * weights / weights.sum()).astype(int)
        shares[0] += pad - int(shares.sum())
        for slot, share in zip(self.slots, shares):
            self.parts[slot] = _filler(int(share), int(self.rng.integers(len(LOREM))))
        return ''.join(self.parts)


def stylesheet(rng, n_rules, writer):
    '''
    Style rules over the page's class names and ids, some of them inside @media
    blocks.
    '''
    kinds_mix = rng.dirichlet(np.ones(len(SELECTOR_STYLES)))
    props = sorted(PROPERTY_VALUES)
    lines = ['/* generated stylesheet */']
    media = []
    for k in range(n_rules):
        selectors = []
        for _ in range(1 + int(rng.poisson(0.4))):
            kind = SELECTOR_STYLES[int(rng.choice(len(SELECTOR_STYLES), p=kinds_mix))]
            if kind == 'class':
                selectors.append(f".{writer._pick(writer.classes)}")
            elif kind == 'id':
                selectors.append(f"#{writer._pick(writer.ids)}-{int(rng.integers(max(1, writer.id_count)))}")
            elif kind == 'element':
                selectors.append(writer._pick(ELEMENT_SELECTORS))
            else:
                joiner = ' > ' if rng.random() < 0.3 else ' '
                selectors.append(f".{writer._pick(writer.classes)}{joiner}{writer._pick(ELEMENT_SELECTORS)}")
        declarations = []
        for _ in range(1 + int(rng.poisson(2.0))):
            prop = props[int(rng.integers(len(props)))]
            declarations.append(f"{prop}: {writer._pick(PROPERTY_VALUES[prop])};")
        rule = f"{', '.join(selectors)} {{ {' '.join(declarations)} }}"
        if rng.random() < 0.05:
            media.append(rule)
        else:
            lines.append(rule)
    if media:
        lines.append('@media (max-width: 600px) {')
        lines.extend(f"  {rule}" for rule in media)
        lines.append('}')
    return '\n'.join(lines) + '\n'


def _log_uniform(low, high, fraction):
    return float(np.exp(np.log(low) + fraction * (np.log(high) - np.log(low))))


def synthetic_page(seed, index, profile='desktop'):
    '''
    One synthetic page as (html text, css text).

    A single scale draw drives the node count, the byte size and the number of
    style rules, each with its own jitter, so large pages tend to be large in
    every respect. The page depends only on (seed, index, profile).
    '''
    if profile not in PROFILES:
        raise ConfigurationError(f"Unknown corpus profile '{profile}'")
    size = PROFILES[profile]
    rng = np.random.default_rng([seed, index])
    scale = rng.random()
    node_frac, byte_frac, rule_frac = np.clip(scale + 0.08 * rng.standard_normal(3), 0.0, 1.0)
    nodes = int(round(_log_uniform(size.min_nodes, size.max_nodes, node_frac)))
    target_bytes = int(round(_log_uniform(size.min_bytes, size.max_bytes, byte_frac)))
    n_rules = int(round(_log_uniform(1, size.max_rules, rule_frac)))
    max_depth = int(rng.integers(5, 9)) + int(round(node_frac * 20))

    writer = PageWriter(rng, nodes, max_depth)
    writer.document()
    css = stylesheet(rng, n_rules, writer)
    html = writer.fill(target_bytes, len(css))
    return html, css


def gen_corpus(dest, n, seed=0, profile='desktop'):
    '''
    Write n synthetic pages, one directory each with index.html and style.css,
    plus the corpus manifest.

    Parameters
    ----------
    dest : Path
        Corpus root, created if missing
    n : int
    seed : int
    profile : str
        'desktop' spans 4 to 8000 DOM nodes and 40 KB to 5 MB, 'small' is a
        scaled-down range for quick experiments

    Returns
    -------
    CorpusManifest
    '''
    if n < 1:
        raise ConfigurationError("A corpus needs at least one page")
    if profile not in PROFILES:
        raise ConfigurationError(f"Unknown corpus profile '{profile}'")
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(n - 1)))
    entries = []
    for index in range(n):
        page_id = f"page{index:0{width}d}"
        html, css = synthetic_page(seed, index, profile)
        page_dir = dest / page_id
        page_dir.mkdir(exist_ok=True)
        html_bytes = html.encode('utf-8')
        css_bytes = css.encode('utf-8')
        (page_dir / 'index.html').write_bytes(html_bytes)
        (page_dir / 'style.css').write_bytes(css_bytes)
        entries.append(PageEntry(page_id, page_id, len(html_bytes) + len(css_bytes)))
        if (index + 1) % 50 == 0:
            sys.stdout.write(f"🕸️  {index + 1}/{n} pages written\n")
    manifest = CorpusManifest(dest, tuple(entries), seed, profile)
    manifest.write()
    sys.stdout.write(f"🌐 Corpus of {n} pages written to {dest}\n")
    return manifest
