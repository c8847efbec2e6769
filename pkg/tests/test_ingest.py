import ast
import textwrap
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpus import FUNCTIONS, write_corpus
from mlap2seq.autodiff import ContractError
from mlap2seq.diagnostics import random_tree
from mlap2seq.ingest import (
    MASK,
    EdgeType,
    RejectedExample,
    augment_edges,
    build_source_graph,
    extract_functions,
    parse_function,
    read_corpus,
    tokenize_name,
)

SKIPPED = {"type_comment", "kind", "level", "conversion", "is_async", "type_ignores"}


def oracle_counts(source):
    """Recursive re-count of nodes and leaves straight off the stdlib AST.

    Every AST object except load/store contexts is a node; every non-None
    primitive field value (and a Constant's value, even None) is an extra
    leaf node; AST nodes without children are leaves themselves.
    """
    fn = ast.parse(textwrap.dedent(source)).body[0]

    def visit(node):
        n_nodes, n_leaves, has_child = 1, 0, False
        for name, value in ast.iter_fields(node):
            if name in SKIPPED:
                continue
            for item in value if isinstance(value, list) else [value]:
                if isinstance(item, ast.expr_context):
                    continue
                if isinstance(item, ast.AST):
                    a, b = visit(item)
                    n_nodes, n_leaves, has_child = n_nodes + a, n_leaves + b, True
                elif item is not None or (isinstance(node, ast.Constant) and name == "value"):
                    n_nodes, n_leaves, has_child = n_nodes + 1, n_leaves + 1, True
        return n_nodes, n_leaves + (0 if has_child else 1)

    return visit(fn)


GET_MEAN = "def get_mean(x):\n    return sum(x) / len(x)\n"


def test_get_mean_root_and_mask():
    p = parse_function(GET_MEAN)
    root = p.nodes[0]
    assert (root.node_type, root.depth, root.attribute) == ("FunctionDef", 0, "")
    assert p.name == "get_mean"
    names = [n for n in p.nodes if n.node_type == "name"]
    assert [n.attribute for n in names] == [MASK]
    assert all("get_mean" not in n.attribute for n in p.nodes)


def test_get_mean_leaves_in_source_order():
    p = parse_function(GET_MEAN)
    assert [p.nodes[i].attribute for i in p.leaves] == [MASK, "x", "sum", "x", "/", "len", "x"]


def test_recursive_call_is_masked():
    p = parse_function(FUNCTIONS[13])  # factorial
    assert p.name == "factorial"
    assert sum(n.attribute == MASK for n in p.nodes) == 2


def test_single_statement_leaf_attribute_rule():
    p = parse_function("def f(a):\n    return a + 1\n")
    leaves = set(p.leaves)
    parents = {s for s, _ in p.ast_edges}
    for n in p.nodes:
        if n.id in leaves:
            assert n.attribute != ""
            assert n.id not in parents
        else:
            assert n.attribute == ""


@pytest.mark.parametrize("i", range(len(FUNCTIONS)))
def test_node_counts_match_oracle(i):
    p = parse_function(FUNCTIONS[i])
    n_nodes, n_leaves = oracle_counts(FUNCTIONS[i])
    assert len(p.nodes) == n_nodes
    assert len(p.leaves) == n_leaves
    assert len(p.ast_edges) == n_nodes - 1


@pytest.mark.parametrize("i", range(len(FUNCTIONS)))
def test_depth_invariant_and_edge_identity(i):
    g = build_source_graph(FUNCTIONS[i])
    p = parse_function(FUNCTIONS[i])
    depth = {n.id: n.depth for n in p.nodes}
    assert depth[0] == 0
    for s, d in p.ast_edges:
        assert depth[d] == depth[s] + 1
    assert len(g.edges) == 2 * len(p.ast_edges) + 2 * max(0, len(p.leaves) - 1)


def test_parse_errors():
    with pytest.raises(RejectedExample, match="syntax error"):
        parse_function("def broken(:\n    pass\n")
    with pytest.raises(ContractError):
        parse_function("   \n")
    with pytest.raises(RejectedExample):
        parse_function("x = 1\n")


def test_augment_small_example():
    typed = augment_edges([(0, 1), (0, 2)], [1, 2])
    assert len(typed) == 6
    counts = Counter(int(k) for _, _, k in typed)
    assert counts == {EdgeType.AST: 2, EdgeType.AST_REVERSE: 2, EdgeType.NEXT_TOKEN: 1, EdgeType.NEXT_TOKEN_REVERSE: 1}
    assert (1, 2, EdgeType.NEXT_TOKEN) in typed and (2, 1, EdgeType.NEXT_TOKEN_REVERSE) in typed


def test_augment_single_leaf_has_no_next_token():
    typed = augment_edges([(0, 1)], [1])
    assert all(k in (EdgeType.AST, EdgeType.AST_REVERSE) for _, _, k in typed)


def test_augment_rejects_duplicates():
    with pytest.raises(ContractError):
        augment_edges([(0, 1), (0, 1)], [1])


def test_edge_type_has_four_members():
    assert len(EdgeType) == 4


def _check_pairing(typed, n_ast, n_leaves):
    assert len(typed) == 2 * n_ast + 2 * max(0, n_leaves - 1)
    by_type = {k: Counter() for k in EdgeType}
    for s, d, k in typed:
        by_type[EdgeType(k)][(s, d)] += 1
    assert by_type[EdgeType.AST_REVERSE] == Counter({(d, s): c for (s, d), c in by_type[EdgeType.AST].items()})
    assert by_type[EdgeType.NEXT_TOKEN_REVERSE] == Counter(
        {(d, s): c for (s, d), c in by_type[EdgeType.NEXT_TOKEN].items()}
    )


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_augment_invariants_on_random_trees(n, seed):
    edges, _, leaves = random_tree(np.random.default_rng(seed), n)
    typed = augment_edges(edges, leaves)
    _check_pairing(typed, len(edges), len(leaves))
    nt = [(s, d) for s, d, k in typed if k == EdgeType.NEXT_TOKEN]
    assert nt == list(zip(leaves[:-1], leaves[1:]))


@pytest.mark.parametrize(
    "name,expected",
    [
        ("get_mean", ["get", "mean"]),
        ("f", ["f"]),
        ("parseHTTPResponse2", ["parse", "http", "response", "2"]),
        ("__init__", ["init"]),
        ("XMLParser", ["xml", "parser"]),
        ("to_utf8", ["to", "utf", "8"]),
        ("_", ["_"]),
    ],
)
def test_tokenize_examples(name, expected):
    assert tokenize_name(name) == expected


identifiers = st.from_regex(r"[A-Za-z_][A-Za-z0-9_]{0,20}", fullmatch=True)


@settings(max_examples=200, deadline=None)
@given(identifiers)
def test_tokenize_nonempty_lowercase_idempotent(name):
    toks = tokenize_name(name)
    assert toks and all(t == t.lower() and t for t in toks)
    joined = "_".join(toks)
    if joined.strip("_"):
        assert tokenize_name(joined) == toks


def test_extract_functions_nested_and_methods():
    src = textwrap.dedent(
        """
        def outer():
            def inner():
                return 1
            return inner

        class Box:
            def get_size(self):
                return self.size
        """
    )
    names = [q for q, _, _ in extract_functions(src)]
    assert names == ["outer", "outer.inner", "Box.get_size"]
    seg = [s for q, _, s in extract_functions(src) if q == "Box.get_size"][0]
    assert build_source_graph(seg).target == ["get", "size"]


def test_extract_functions_form_feed_crlf_and_unicode():
    # \x0c is a line break for str.splitlines but not for the parser
    src = "x = 1\r\n\x0c\r\ndef first_one(a):\r\n    return 'é' + a\r\n\r\ndef second_one():\r\n    return 2"
    segs = {q: s for q, _, s in extract_functions(src)}
    assert list(segs) == ["first_one", "second_one"]
    assert build_source_graph(segs["first_one"]).target == ["first", "one"]
    assert build_source_graph(segs["second_one"]).target == ["second", "one"]
    assert segs["second_one"].rstrip().endswith("return 2")


def test_read_corpus_counts_and_skips(tmp_path, caplog):
    write_corpus(tmp_path, FUNCTIONS[:10])
    (tmp_path / "bad.py").write_text("def oops(:\n")
    graphs, stats = read_corpus(tmp_path)
    assert len(graphs) == 10 and stats.functions == 10
    assert stats.failed_files == ["bad.py"] and stats.files == 11
    assert graphs[0].provenance.startswith("mod_000.py::get_mean")
    assert any("bad.py" in r.message for r in caplog.records)
