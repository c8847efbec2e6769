"""Python source -> augmented program graphs.

A function definition is parsed with :mod:`ast` into a tree whose leaves carry
token text. Primitive fields of an AST node (identifiers, constant values,
attribute names, ...) become separate leaf children typed by the field name,
so internal nodes never carry an attribute. The tree is then augmented with
reverse AST edges and NextToken edges (plus their reverses) between
consecutive leaves.
"""

from __future__ import annotations

import ast
import enum
import logging
import re
import textwrap
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

MASK = "<MASK>"

# fields that carry no token text worth modelling
_SKIP_FIELDS = frozenset({"type_comment", "kind", "level", "conversion", "is_async", "type_ignores"})

# identifier-valued fields; a match against the function name is masked
_IDENTIFIER_FIELDS = frozenset({"name", "id", "attr", "arg", "names"})

_TOKEN_TEXT = {
    "Add": "+", "Sub": "-", "Mult": "*", "MatMult": "@", "Div": "/", "Mod": "%", "Pow": "**",
    "LShift": "<<", "RShift": ">>", "BitOr": "|", "BitXor": "^", "BitAnd": "&", "FloorDiv": "//",
    "And": "and", "Or": "or", "Invert": "~", "Not": "not", "UAdd": "+", "USub": "-",
    "Eq": "==", "NotEq": "!=", "Lt": "<", "LtE": "<=", "Gt": ">", "GtE": ">=",
    "Is": "is", "IsNot": "is not", "In": "in", "NotIn": "not in",
    "Pass": "pass", "Break": "break", "Continue": "continue",
}  # fmt: skip


class RejectedExample(ValueError):
    """Source that cannot be turned into a graph (syntax error, not a function, ...)."""


class EdgeType(enum.IntEnum):
    AST = 0
    AST_REVERSE = 1
    NEXT_TOKEN = 2
    NEXT_TOKEN_REVERSE = 3


@dataclass
class AstNode:
    id: int
    depth: int
    node_type: str
    attribute: str = ""


@dataclass
class ParsedFunction:
    name: str
    nodes: list
    ast_edges: list  # (parent, child)
    leaves: list  # leaf ids in source-token order


@dataclass
class SourceGraph:
    """Augmented graph with string-valued node features (pre-vocabulary)."""

    nodes: list
    edges: list  # (src, dst, EdgeType)
    target: list
    provenance: str = ""


@dataclass(eq=False)
class ProgramGraph:
    """Augmented graph with id-encoded node features.

    ``nodes`` is an ``(N, 3)`` int array of (depth_id, type_id, attr_id);
    ``edges`` is an ``(E, 3)`` int array of (src, dst, edge_type).
    """

    nodes: np.ndarray
    edges: np.ndarray
    target: list
    provenance: str = ""

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.int64).reshape(-1, 3)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 3)
        self.target = list(self.target)

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_edges(self):
        return len(self.edges)

    def __eq__(self, other):
        if not isinstance(other, ProgramGraph):
            return NotImplemented
        return (
            np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.edges, other.edges)
            and self.target == other.target
            and self.provenance == other.provenance
        )


# ---------------------------------------------------------------------------
# name subtokenization
# ---------------------------------------------------------------------------

_SUBTOKEN_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|[0-9]+|[^\W\d_]+")


def tokenize_name(name):
    """Split an identifier into lowercase subtokens.

    >>> tokenize_name("parseHTTPResponse2")
    ['parse', 'http', 'response', '2']
    """
    out = []
    for part in name.split("_"):
        out.extend(m.lower() for m in _SUBTOKEN_RE.findall(part))
    if not out and name:
        return [name.lower()]
    return out


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _position(node, fallback):
    if hasattr(node, "lineno") and hasattr(node, "col_offset"):
        return (node.lineno, node.col_offset)
    return fallback


def _primitive_text(owner, fld, value):
    if isinstance(owner, ast.Constant):
        return repr(value)
    return str(value)


def parse_function(source):
    """Parse one function definition into an attributed AST.

    The function's own name (and any identifier leaf spelling it, e.g. a
    recursive call) is replaced by :data:`MASK`.
    """
    if not source or not source.strip():
        from .autodiff import ContractError

        raise ContractError("parse_function: empty source")
    try:
        module = ast.parse(textwrap.dedent(source))
    except SyntaxError as exc:
        raise RejectedExample(f"syntax error: {exc.msg} (line {exc.lineno})") from exc
    body = module.body
    if len(body) != 1 or not isinstance(body[0], (ast.FunctionDef, ast.AsyncFunctionDef)):
        raise RejectedExample("source must contain exactly one function definition")
    fn = body[0]
    fname = fn.name

    nodes = []
    edges = []
    leaf_keys = []

    def new_node(depth, node_type, attribute=""):
        nodes.append(AstNode(len(nodes), depth, node_type, attribute))
        return len(nodes) - 1

    def add_leaf(parent, depth, node_type, text, key):
        nid = new_node(depth, node_type, text)
        edges.append((parent, nid))
        leaf_keys.append((key, nid))

    # iterative DFS keeps deep expressions clear of the recursion limit
    root = new_node(0, type(fn).__name__)
    # ``path`` (child indices from the root) gives preorder among equal positions
    stack = [(fn, root, 0, _position(fn, (0, 0)), ())]
    while stack:
        node, nid, depth, pos, path = stack.pop()
        # position-less children (operators, field leaves) sit right after the
        # previous positioned sibling, e.g. the ``/`` in ``a / b`` follows ``a``
        children = []
        anchor = pos
        for fld in node._fields:
            if fld in _SKIP_FIELDS:
                continue
            value = getattr(node, fld, None)
            items = value if isinstance(value, list) else [value]
            for item in items:
                if isinstance(item, ast.expr_context):
                    continue
                if isinstance(item, ast.AST):
                    children.append(("ast", item, _position(item, anchor)))
                    if getattr(item, "end_lineno", None) is not None:
                        anchor = (item.end_lineno, item.end_col_offset)
                elif item is not None or (isinstance(node, ast.Constant) and fld == "value"):
                    text = _primitive_text(node, fld, item)
                    if fld in _IDENTIFIER_FIELDS and text == fname:
                        text = MASK
                    children.append(("leaf", fld, text, anchor))
        if not children:
            # childless syntax node (operator, pass, empty arguments): it is a leaf itself
            nodes[nid].attribute = _TOKEN_TEXT.get(nodes[nid].node_type, nodes[nid].node_type)
            leaf_keys.append(((pos, path), nid))
            continue
        pending = []
        for i, child in enumerate(children):
            if child[0] == "leaf":
                add_leaf(nid, depth + 1, child[1], child[2], (child[3], path + (i,)))
            else:
                item = child[1]
                cid = new_node(depth + 1, type(item).__name__)
                edges.append((nid, cid))
                pending.append((item, cid, depth + 1, child[2], path + (i,)))
        stack.extend(reversed(pending))

    leaf_keys.sort(key=lambda k: k[0])
    edges.sort(key=lambda e: e[1])
    return ParsedFunction(fname, nodes, edges, [nid for _, nid in leaf_keys])


def augment_edges(ast_edges, leaves):
    """Typed edge list: AST, reversed AST, NextToken, reversed NextToken."""
    ast_edges = [(int(s), int(d)) for s, d in ast_edges]
    if len(set(ast_edges)) != len(ast_edges):
        from .autodiff import ContractError

        raise ContractError("augment_edges: duplicate edge in input")
    out = [(s, d, EdgeType.AST) for s, d in ast_edges]
    out += [(d, s, EdgeType.AST_REVERSE) for s, d in ast_edges]
    nxt = list(zip(leaves[:-1], leaves[1:]))
    out += [(a, b, EdgeType.NEXT_TOKEN) for a, b in nxt]
    out += [(b, a, EdgeType.NEXT_TOKEN_REVERSE) for a, b in nxt]
    return out


def build_source_graph(source, provenance=""):
    parsed = parse_function(source)
    edges = augment_edges(parsed.ast_edges, parsed.leaves)
    return SourceGraph(parsed.nodes, edges, tokenize_name(parsed.name), provenance)


# ---------------------------------------------------------------------------
# corpus walking
# ---------------------------------------------------------------------------


_LINE_RE = re.compile(r"[^\r\n]*(?:\r\n|\r|\n)|[^\r\n]+$")


def extract_functions(source):
    """Yield ``(qualified_name, lineno, function_source)`` for every def in a module."""
    module = ast.parse(source)
    # ast.get_source_segment re-splits the whole file on every call; split once,
    # on the same line breaks the parser counts (not form feeds etc.)
    lines = _LINE_RE.findall(source)

    def segment(node):
        if node.end_lineno is None:
            return None
        chunk = lines[node.lineno - 1 : node.end_lineno]
        last = chunk[-1].encode("utf-8")[: node.end_col_offset].decode("utf-8", errors="replace")
        return "".join(chunk[:-1]) + last + "\n"

    def walk(node, prefix):
        for child in ast.iter_child_nodes(node):
            if isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef)):
                seg = segment(child)
                if seg is not None:
                    yield f"{prefix}{child.name}", child.lineno, seg
                yield from walk(child, f"{prefix}{child.name}.")
            elif isinstance(child, ast.ClassDef):
                yield from walk(child, f"{prefix}{child.name}.")
            else:
                yield from walk(child, prefix)

    yield from walk(module, "")


@dataclass
class CorpusStats:
    files: int = 0
    functions: int = 0
    rejected: int = 0
    failed_files: list = field(default_factory=list)


def read_corpus(corpus_dir, pattern="*.py"):
    """Parse every function under ``corpus_dir`` into :class:`SourceGraph` objects.

    Files are visited in sorted order so the output is deterministic. Files or
    functions that fail to parse are logged, counted and skipped.
    """
    root = Path(corpus_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    stats = CorpusStats()
    graphs = []
    for path in sorted(root.rglob(pattern)):
        rel = path.relative_to(root).as_posix()
        stats.files += 1
        try:
            text = path.read_text(encoding="utf-8")
            funcs = list(extract_functions(text))
        except (SyntaxError, UnicodeDecodeError, ValueError) as exc:
            log.warning("skipping %s: %s", rel, exc)
            stats.failed_files.append(rel)
            continue
        for qualname, lineno, seg in funcs:
            try:
                g = build_source_graph(seg, provenance=f"{rel}::{qualname}:{lineno}")
            except RejectedExample as exc:
                log.warning("rejected %s::%s: %s", rel, qualname, exc)
                stats.rejected += 1
                continue
            if not g.target:
                stats.rejected += 1
                continue
            stats.functions += 1
            graphs.append(g)
    return graphs, stats


def source_file(provenance):
    return provenance.split("::", 1)[0]
