import os
import time
from pathlib import Path

import pytest

from webdvfs.utils import WebdvfsException
from webdvfs.webparse import parse_html, parse_css, snapshot_stream, serialize_html, load_page, parse_page

from webdvfs.test.mocks import large_page


TEST_PATH_PARENT = Path(os.path.dirname(__file__)) / 'test_files'

TEST_PATHS = {'mixed': TEST_PATH_PARENT / 'mixed'}


def test_unclosed_paragraph_is_recovered():
    tree = parse_html('<div><p></div>')
    assert tree.node_count == 2
    div, = tree.root.children
    assert div.tag_name == 'div'
    assert [c.tag_name for c in div.children] == ['p']
    assert tree.recovery_events >= 1


def test_stray_end_tag_dropped():
    tree = parse_html('<div></span></div>')
    assert tree.node_count == 1
    assert tree.recovery_events == 1


def test_empty_document():
    tree = parse_html(b'')
    assert tree.node_count == 0
    assert tree.depth == 0
    assert tree.root.children == ()


def test_auto_close_siblings():
    tree = parse_html('<ul><li>one<li>two</ul>')
    ul, = tree.root.children
    assert [c.tag_name for c in ul.children] == ['li', 'li']
    assert tree.depth == 2


def test_invalid_utf8_is_tolerated():
    tree = parse_html(b'<div>\xff\xfe</div>')
    assert tree.node_count == 1


def test_mixed_page_shape():
    tree, styles, size = parse_page(load_page(TEST_PATHS['mixed']))
    assert tree.node_count == 38
    assert tree.depth == 7
    assert tree.recovery_events == 0
    assert len(styles) == 7
    assert size == 1917


def test_css_rules():
    rules = parse_css('''
        /* comment { not: a rule } */
        @import url("x.css");
        a.b, #c { color: red; float : left }
        @media print { div > p { display: none } }
        @font-face { font-family: X; }
        ul li { background-image: url("a;b.png") }
    ''')
    assert len(rules) == 3
    assert [s.kind for s in rules[0].selectors] == ['element', 'id']
    assert rules[0].declarations == (('color', 'red'), ('float', 'left'))
    assert rules[1].selectors[0].kind == 'descendant'
    assert rules[2].declarations == (('background-image', 'url("a;b.png")'),)


def test_single_byte_chunks_end_at_full_parse():
    page = load_page(TEST_PATHS['mixed'])
    snapshots = list(snapshot_stream(page.html, page.css, chunk_size=1))
    assert len(snapshots) == page.size_bytes
    final = snapshots[-1]
    assert final.tree == parse_html(page.html)
    assert list(final.styles) == parse_css(page.css[0])
    assert final.bytes_consumed == page.size_bytes
    consumed = [s.bytes_consumed for s in snapshots]
    assert consumed == sorted(consumed)
    nodes = [s.tree.node_count for s in snapshots]
    assert nodes == sorted(nodes)


def test_one_chunk_gives_one_snapshot():
    page = load_page(TEST_PATHS['mixed'])
    snapshots = list(snapshot_stream(page.html, page.css, chunk_size=1 << 20))
    assert len(snapshots) == 1
    assert snapshots[0].tree == parse_html(page.html)


def test_partial_stylesheet_keeps_complete_rules():
    css = b'a { color: red } b { color: blue } i { col'
    snapshots = list(snapshot_stream(b'<p></p>', [css], chunk_size=len(b'<p></p>') + 20))
    assert [r.selectors[0].raw for r in snapshots[0].styles] == ['a']


def test_bad_chunk_size():
    with pytest.raises(WebdvfsException):
        list(snapshot_stream(b'<p></p>', chunk_size=0))


def test_serialization_is_idempotent():
    page = load_page(TEST_PATHS['mixed'])
    once = serialize_html(parse_html(page.html))
    twice = serialize_html(parse_html(once))
    assert once == twice
    assert parse_html(once).node_count == 38


def test_missing_index(tmp_path):
    with pytest.raises(WebdvfsException):
        load_page(tmp_path)


def test_comment_markers_inside_strings_keep_rules():
    rules = parse_css(b'a::after { content: "/*" } b { color: red } .c { float: left }')
    assert [r.selectors[0].raw for r in rules] == ['a::after', 'b', '.c']
    assert rules[0].declarations == (('content', '"/*"'),)
    assert [r.selectors[0].kind for r in rules] == ['element', 'element', 'class']


def test_escaped_quotes_and_nested_commas():
    rules = parse_css(r'''
        q::before { content: "say \"}\"" }
        li:not(.a, .b), em { color: blue !important }
        p { margin: 0 }
    ''')
    assert len(rules) == 3
    assert rules[0].declarations == (('content', r'"say \"}\""'),)
    assert [s.raw for s in rules[1].selectors] == ['li:not(.a, .b)', 'em']
    assert rules[1].declarations == (('color', 'blue !important'),)
    assert rules[2].selectors[0].raw == 'p'


def test_partial_rules_respect_strings_and_crlf():
    css = b'a { content: "}" }\r\nb { color: blue }\r\ni { col'
    html = b'<p></p>'
    cut = len(html) + css.index(b'b {') + 5
    first, *_ = snapshot_stream(html, [css], chunk_size=cut)
    assert [r.selectors[0].raw for r in first.styles] == ['a']
    cut = len(html) + css.index(b'\r\ni')
    first, *_ = snapshot_stream(html, [css], chunk_size=cut)
    assert [r.selectors[0].raw for r in first.styles] == ['a', 'b']


def test_snapshots_share_closed_subtrees():
    html = b'<div><p>one</p><p>two</p></div><section><span>x</span>' + b'<i></i>' * 20 + b'</section>'
    snapshots = list(snapshot_stream(html, chunk_size=40))
    assert len(snapshots) > 2
    first_div = snapshots[1].tree.root.children[0]
    for later in snapshots[2:]:
        assert later.tree.root.children[0] is first_div
    assert snapshots[-1].tree == parse_html(html)


@pytest.mark.slow
def test_snapshot_stream_scales_linearly():
    def stream_seconds(mb):
        page = large_page(mb * 1024 * 1024, nodes=2000 * mb, n_rules=750 * mb)
        start = time.perf_counter()
        count = sum(1 for _ in snapshot_stream(page.html, page.css, chunk_size=4096))
        assert count == -(-page.size_bytes // 4096)
        return time.perf_counter() - start

    small, large = stream_seconds(1), stream_seconds(4)
    # four times the bytes: quadratic work would take about sixteen times as long
    assert large < 8 * small
