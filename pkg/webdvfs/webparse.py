'''
Tolerant parsing of saved web pages into a DOM tree and a list of style rules.

Only the structure needed for feature counting is kept: element nodes, their
attributes and the stylesheet rules. Text is dropped, scripts are never run and
iframes are counted but not descended into.
'''

import bisect
import codecs
import html
import logging
import re
from dataclasses import dataclass
from html.parser import HTMLParser
from pathlib import Path

import tinycss2

from webdvfs.utils import WebdvfsException

logger = logging.getLogger('webdvfs')

VOID_ELEMENTS = frozenset(['area', 'base', 'br', 'col', 'embed', 'hr', 'img', 'input',
                           'link', 'meta', 'param', 'source', 'track', 'wbr'])

# Opening the key tag implicitly closes an open element from the value set
AUTO_CLOSE = {
    'p': {'p'},
    'li': {'li'},
    'dt': {'dt', 'dd'},
    'dd': {'dt', 'dd'},
    'tr': {'tr', 'td', 'th'},
    'td': {'td', 'th'},
    'th': {'td', 'th'},
    'option': {'option'},
}
for _block in ('div', 'ul', 'ol', 'table', 'section', 'nav', 'h1', 'h2', 'h3', 'h4', 'h5', 'h6', 'form', 'pre'):
    AUTO_CLOSE.setdefault(_block, set()).add('p')

SELECTOR_KINDS = ('class', 'id', 'element', 'descendant')

# @-rules whose block holds ordinary style rules
NESTING_AT_RULES = ('media', 'supports', 'document', 'layer')

DOCUMENT_TAG = '#document'


@dataclass(frozen=True)
class DomNode:
    tag_name: str
    attributes: tuple = ()
    children: tuple = ()


@dataclass(frozen=True)
class DomTree:
    root: DomNode
    node_count: int
    depth: int
    source_bytes: int
    recovery_events: int = 0

    @property
    def size_kb(self):
        return self.source_bytes / 1024.0

    def iter_elements(self):
        # Pre-order walk over the real element nodes, the synthetic root excluded
        stack = list(reversed(self.root.children))
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


@dataclass(frozen=True)
class SelectorPattern:
    kind: str
    raw: str


@dataclass(frozen=True)
class StyleRule:
    selectors: tuple
    declarations: tuple = ()


@dataclass(frozen=True)
class DomSnapshot:
    tree: DomTree
    styles: tuple
    bytes_consumed: int


@dataclass(frozen=True)
class Page:
    page_id: str
    html: bytes
    css: tuple = ()
    directory: Path = None

    @property
    def size_bytes(self):
        return len(self.html) + sum(len(c) for c in self.css)


class _OpenNode:
    # children holds the frozen closed children; an open child is the next stack entry
    __slots__ = ('tag_name', 'attributes', 'children')

    def __init__(self, tag_name, attributes=()):
        self.tag_name = tag_name
        self.attributes = attributes
        self.children = []

    def freeze(self, open_child=None):
        children = tuple(self.children)
        if open_child is not None:
            children += (open_child,)
        return DomNode(self.tag_name, self.attributes, children)


class TagSoupBuilder(HTMLParser):
    '''
    Stack-based tree builder on top of the standard tokenizer.

    Misnested and unclosed markup is repaired instead of rejected: an end tag
    closes everything opened after its matching start tag, stray end tags are
    dropped and a few elements (p, li, td, ...) close their open siblings. Every
    repair is counted in ``recovery_events``.

    Elements are frozen into DomNodes as they close, so taking a tree while the
    document is still arriving only rebuilds the open elements on the stack.
    '''

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.document = _OpenNode(DOCUMENT_TAG)
        self.stack = [self.document]
        self.recovery_events = 0
        self.node_count = 0
        self.max_depth = 0

    def _append(self, tag, attrs):
        attributes = tuple((name.lower(), value if value is not None else '') for name, value in attrs)
        self.node_count += 1
        # the synthetic document sits at stack position 0
        self.max_depth = max(self.max_depth, len(self.stack))
        if tag in VOID_ELEMENTS:
            self.stack[-1].children.append(DomNode(tag, attributes))
        else:
            self.stack.append(_OpenNode(tag, attributes))

    def _close_above(self, index):
        # Close stack entries from the top down to index, inclusive
        while len(self.stack) > index:
            node = self.stack.pop()
            self.stack[-1].children.append(node.freeze())

    def handle_starttag(self, tag, attrs):
        tag = tag.lower()
        closes = AUTO_CLOSE.get(tag)
        if closes and len(self.stack) > 1 and self.stack[-1].tag_name in closes:
            self._close_above(len(self.stack) - 1)
            self.recovery_events += 1
        self._append(tag, attrs)

    def handle_startendtag(self, tag, attrs):
        tag = tag.lower()
        self._append(tag, attrs)
        if tag not in VOID_ELEMENTS:
            self._close_above(len(self.stack) - 1)

    def handle_endtag(self, tag):
        tag = tag.lower()
        if tag in VOID_ELEMENTS:
            return
        for i in range(len(self.stack) - 1, 0, -1):
            if self.stack[i].tag_name == tag:
                # everything above the match was left open
                self.recovery_events += len(self.stack) - 1 - i
                self._close_above(i)
                return
        logger.debug(f"Stray end tag </{tag}> ignored")
        self.recovery_events += 1

    def tree(self, source_bytes, final=False):
        events = self.recovery_events
        if final:
            events += len(self.stack) - 1
        root = None
        for node in reversed(self.stack):
            root = node.freeze(root)
        return DomTree(root=root,
                       node_count=self.node_count,
                       depth=self.max_depth,
                       source_bytes=source_bytes,
                       recovery_events=events)


def _read(source):
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    if isinstance(source, str):
        return source.encode('utf-8')
    if isinstance(source, Path):
        return source.read_bytes()
    return source.read()


def parse_html(source):
    '''
    Parse an HTML document into a DomTree

    Parameters
    ----------
    source : bytes, str, Path or binary file object
        The document. Invalid UTF-8 is decoded lossily.

    Returns
    -------
    DomTree
        Never fails on malformed markup. An empty document gives the synthetic
        root alone, with node_count 0 and depth 0.
    '''
    data = _read(source)
    builder = TagSoupBuilder()
    builder.feed(data.decode('utf-8', errors='replace'))
    builder.close()
    return builder.tree(len(data), final=True)


def classify_selector(raw):
    if re.search(r'[\s>]', raw):
        return 'descendant'
    if raw.startswith('#'):
        return 'id'
    if raw.startswith('.'):
        return 'class'
    return 'element'


def _parse_selectors(prelude):
    selectors = []
    current = []
    # commas nested in :not(...) or [...] sit inside blocks, not at this level
    for token in list(prelude) + [None]:
        if token is None or (token.type == 'literal' and token.value == ','):
            raw = ' '.join(tinycss2.serialize(current).split())
            raw = re.sub(r'\s*>\s*', ' > ', raw)
            if raw:
                selectors.append(SelectorPattern(classify_selector(raw), raw))
            current = []
        elif token.type != 'comment':
            current.append(token)
    return tuple(selectors)


def _parse_declarations(content):
    declarations = []
    for node in tinycss2.parse_declaration_list(content, skip_comments=True, skip_whitespace=True):
        if node.type != 'declaration':
            continue
        value = tinycss2.serialize([t for t in node.value if t.type != 'comment']).strip()
        if node.important:
            value += ' !important'
        declarations.append((node.lower_name, value))
    return tuple(declarations)


def _rules_of(node):
    # StyleRules contributed by one top-level stylesheet node
    if node.type == 'qualified-rule':
        selectors = _parse_selectors(node.prelude)
        if not selectors:
            return []
        return [StyleRule(selectors, _parse_declarations(node.content))]
    if node.type == 'at-rule':
        if node.content is None:
            # statement at-rule such as @import or @charset
            return []
        if node.lower_at_keyword not in NESTING_AT_RULES:
            logger.debug(f"Skipping @{node.lower_at_keyword} block")
            return []
        rules = []
        for inner in tinycss2.parse_rule_list(node.content, skip_comments=True, skip_whitespace=True):
            rules.extend(_rules_of(inner))
        return rules
    if node.type == 'error':
        logger.debug(f"CSS parse error at {node.source_line}:{node.source_column}: {node.message}")
    return []


def _node_offsets(text, nodes):
    '''
    Character offset in ``text`` at which each top-level node starts.

    Positions are reported as (line, column) in the tokenizer's copy of the
    text, where each CRLF pair has become a single newline.
    '''
    normalized = text.replace('\r\n', '\n').replace('\r', '\n').replace('\f', '\n')
    line_starts = [0] + [m.end() for m in re.finditer('\n', normalized)]
    crlf = [m.start() - k for k, m in enumerate(re.finditer('\r\n', text))]
    offsets = []
    for node in nodes:
        n = line_starts[node.source_line - 1] + node.source_column - 1
        offsets.append(n + bisect.bisect_left(crlf, n))
    return offsets


@dataclass(frozen=True)
class ParsedStylesheet:
    '''
    A stylesheet parsed once, with the character offset at which each group of
    rules is complete: a rule counts as received once every character up to the
    start of the following top-level node has arrived.
    '''
    blocks: tuple

    @classmethod
    def parse(cls, source):
        text = _read(source).decode('utf-8', errors='replace')
        nodes = tinycss2.parse_stylesheet(text, skip_comments=False, skip_whitespace=False)
        starts = _node_offsets(text, nodes)
        ends = starts[1:] + [len(text)]
        blocks = []
        for node, end in zip(nodes, ends):
            rules = _rules_of(node)
            if rules:
                blocks.append((end, tuple(rules)))
        return cls(tuple(blocks))

    @property
    def rules(self):
        return [rule for _, rules in self.blocks for rule in rules]

    def rules_received(self, n_chars):
        # Rules whose text lies entirely within the first n_chars characters
        received = []
        for end, rules in self.blocks:
            if end > n_chars:
                break
            received.extend(rules)
        return received


def parse_css(source):
    '''
    Parse a stylesheet into StyleRule objects.

    Rules whose selector list and declaration block can be recovered are kept,
    rules inside @media/@supports blocks included; other at-rules are skipped.
    '''
    return ParsedStylesheet.parse(source).rules


def snapshot_stream(html_source, css_sources=(), chunk_size=4096):
    '''
    Simulate parser progress over a page.

    The page is treated as one byte stream, the HTML document followed by each
    stylesheet in turn, consumed ``chunk_size`` bytes at a time. A DomSnapshot is
    yielded after every chunk; the last one equals the one-shot parse of the full
    inputs.
    '''
    if chunk_size is None or chunk_size < 1:
        raise WebdvfsException("chunk_size must be at least 1")
    html_data = _read(html_source)
    if isinstance(css_sources, (bytes, bytearray, str, Path)):
        css_sources = [css_sources]
    css_data = [_read(c) for c in css_sources]
    stylesheets = [ParsedStylesheet.parse(c) for c in css_data]
    total = len(html_data) + sum(len(c) for c in css_data)

    builder = TagSoupBuilder()
    decoder = codecs.getincrementaldecoder('utf-8')(errors='replace')
    html_done = False
    finished_rules = []
    css_index = 0
    css_offset = 0
    css_decoder = codecs.getincrementaldecoder('utf-8')(errors='replace')
    css_chars = 0
    consumed = 0

    while True:
        budget = chunk_size
        while budget > 0 and not html_done:
            take = html_data[consumed:consumed + budget]
            builder.feed(decoder.decode(take))
            consumed += len(take)
            budget -= len(take)
            if consumed >= len(html_data):
                builder.feed(decoder.decode(b'', final=True))
                builder.close()
                html_done = True
        while budget > 0 and css_index < len(css_data):
            current = css_data[css_index]
            take = min(budget, len(current) - css_offset)
            css_chars += len(css_decoder.decode(current[css_offset:css_offset + take]))
            css_offset += take
            consumed += take
            budget -= take
            if css_offset >= len(current):
                finished_rules.extend(stylesheets[css_index].rules)
                css_index += 1
                css_offset = 0
                css_chars = 0
                css_decoder.reset()
        styles = list(finished_rules)
        if css_index < len(css_data) and css_offset > 0:
            styles.extend(stylesheets[css_index].rules_received(css_chars))
        done = html_done and css_index >= len(css_data)
        yield DomSnapshot(tree=builder.tree(len(html_data) if html_done else consumed, final=html_done),
                          styles=tuple(styles),
                          bytes_consumed=consumed)
        if done or consumed >= total:
            break


def serialize_html(tree):
    # Markup for the element structure only, text is not kept by the parser
    out = []

    def emit(node):
        attrs = ''.join(f' {name}="{html.escape(value, quote=True)}"' for name, value in node.attributes)
        out.append(f'<{node.tag_name}{attrs}>')
        if node.tag_name in VOID_ELEMENTS:
            return
        for child in node.children:
            emit(child)
        out.append(f'</{node.tag_name}>')

    for child in tree.root.children:
        emit(child)
    return ''.join(out)


def load_page(directory):
    '''
    Read a saved page: ``index.html`` plus every ``.css`` file in the directory,
    stylesheets in name order.
    '''
    directory = Path(directory)
    index = directory / 'index.html'
    if not index.exists():
        raise WebdvfsException(f"No index.html in {directory}")
    css = tuple(p.read_bytes() for p in sorted(directory.glob('*.css')))
    return Page(page_id=directory.name, html=index.read_bytes(), css=css, directory=directory)


def parse_page(page):
    # Returns (tree, styles, page size in bytes)
    tree = parse_html(page.html)
    styles = []
    for sheet in page.css:
        styles.extend(parse_css(sheet))
    return tree, styles, page.size_bytes
