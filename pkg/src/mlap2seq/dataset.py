"""Encoded datasets: splits, on-disk format, and disjoint-union batching.

Directory layout::

    graphs.txt        one graph per line (see below)
    vocab_target.txt  one token per line; line number (0-based) is the id
    vocab_attr.txt
    vocab_type.txt
    meta.json         format version, caps, split index lists

A graph line has four tab-separated fields::

    provenance <TAB> d,t,a d,t,a ... <TAB> s,d,k s,d,k ... <TAB> sub tokens

Vocabulary tokens and provenance strings are written with ``unicode_escape``
so embedded newlines and tabs cannot break the line structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import ProgramGraph, source_file
from .vocab import NO_ATTR, Vocabulary

FORMAT_VERSION = 1
SPLITS = ("train", "valid", "test")


class DatasetFormatError(ValueError):
    pass


class IncompatibleFormatError(DatasetFormatError):
    pass


@dataclass
class Dataset:
    graphs: list
    target_vocab: Vocabulary
    attr_vocab: Vocabulary
    type_vocab: Vocabulary
    depth_cap: int
    splits: dict
    max_len: int = 5
    extra: dict = field(default_factory=dict)

    def split(self, name):
        return [self.graphs[i] for i in self.splits[name]]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.graphs == other.graphs
            and self.target_vocab == other.target_vocab
            and self.attr_vocab == other.attr_vocab
            and self.type_vocab == other.type_vocab
            and self.depth_cap == other.depth_cap
            and {k: list(v) for k, v in self.splits.items()} == {k: list(v) for k, v in other.splits.items()}
            and self.max_len == other.max_len
        )


def encode_graph(graph, attr_vocab, type_vocab, depth_cap):
    """:class:`SourceGraph` -> :class:`ProgramGraph` using the given vocabularies."""
    nodes = [
        (min(n.depth, depth_cap), type_vocab.encode(n.node_type), attr_vocab.encode(n.attribute or NO_ATTR))
        for n in graph.nodes
    ]
    edges = [(s, d, int(k)) for s, d, k in graph.edges]
    return ProgramGraph(nodes, edges, graph.target, graph.provenance)


def split_by_file(provenances, seed=0, fractions=(0.8, 0.1, 0.1)):
    """Partition example indices into train/valid/test by source file.

    Whole files go to one split. With fewer than three files the split falls
    back to individual examples so every split can be nonempty.
    """
    rng = np.random.default_rng(seed)
    files = sorted({source_file(p) for p in provenances})
    if len(files) >= 3:
        units = [[i for i, p in enumerate(provenances) if source_file(p) == f] for f in files]
    else:
        units = [[i] for i in range(len(provenances))]
    order = rng.permutation(len(units))
    n = len(units)
    n_valid = max(1, int(round(fractions[1] * n))) if n >= 3 else 0
    n_test = max(1, int(round(fractions[2] * n))) if n >= 3 else 0
    n_train = n - n_valid - n_test
    buckets = {"train": order[:n_train], "valid": order[n_train : n_train + n_valid], "test": order[n_train + n_valid :]}
    return {name: sorted(i for u in buckets[name] for i in units[u]) for name in SPLITS}


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _esc(s):
    return s.encode("unicode_escape").decode("ascii")


def _unesc(s):
    return s.encode("ascii").decode("unicode_escape")


def _write_vocab(path, vocab):
    path.write_text("".join(_esc(t) + "\n" for t in vocab.tokens), encoding="ascii")


def _read_vocab(path):
    lines = path.read_text(encoding="ascii").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    tokens = [_unesc(t) for t in lines]
    from .vocab import SPECIALS

    if tuple(tokens[: len(SPECIALS)]) != SPECIALS:
        raise DatasetFormatError(f"{path}: first lines must be the special tokens {SPECIALS}")
    return Vocabulary(tokens[len(SPECIALS) :])


def format_graph_line(g):
    nodes = " ".join(f"{d},{t},{a}" for d, t, a in g.nodes)
    edges = " ".join(f"{s},{d},{k}" for s, d, k in g.edges)
    return f"{_esc(g.provenance)}\t{nodes}\t{edges}\t{' '.join(_esc(t) for t in g.target)}"


def _triples(text, lineno, what):
    if not text:
        return np.zeros((0, 3), dtype=np.int64)
    try:
        rows = [tuple(int(v) for v in item.split(",")) for item in text.split(" ")]
    except ValueError:
        raise DatasetFormatError(f"line {lineno}: malformed {what} field") from None
    if any(len(r) != 3 for r in rows):
        raise DatasetFormatError(f"line {lineno}: {what} entries must be integer triples")
    return np.asarray(rows, dtype=np.int64)


def parse_graph_line(line, lineno=0):
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 4:
        raise DatasetFormatError(f"line {lineno}: expected 4 tab-separated fields, got {len(parts)}")
    prov, nodes, edges, target = parts
    nodes = _triples(nodes, lineno, "node")
    edges = _triples(edges, lineno, "edge")
    if len(nodes) == 0:
        raise DatasetFormatError(f"line {lineno}: graph has no nodes")
    if edges.size and (edges[:, :2].min() < 0 or edges[:, :2].max() >= len(nodes)):
        raise DatasetFormatError(f"line {lineno}: edge endpoint out of range")
    return ProgramGraph(nodes, edges, [_unesc(t) for t in target.split(" ")] if target else [], _unesc(prov))


def serialize_dataset(dataset, path):
    """Write ``dataset`` to directory ``path`` (created if missing)."""
    if set(dataset.splits) != set(SPLITS):
        raise ValueError(f"serialize_dataset: splits must be exactly {SPLITS}, got {sorted(dataset.splits)}")
    seen = sorted(i for s in SPLITS for i in dataset.splits[s])
    if seen != list(range(len(dataset.graphs))):
        raise ValueError("serialize_dataset: splits must partition the example indices")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "graphs.txt", "w", encoding="ascii", newline="\n") as fh:
        for g in dataset.graphs:
            fh.write(format_graph_line(g) + "\n")
    _write_vocab(out / "vocab_target.txt", dataset.target_vocab)
    _write_vocab(out / "vocab_attr.txt", dataset.attr_vocab)
    _write_vocab(out / "vocab_type.txt", dataset.type_vocab)
    meta = {
        "format_version": FORMAT_VERSION,
        "depth_cap": dataset.depth_cap,
        "max_len": dataset.max_len,
        "num_graphs": len(dataset.graphs),
        "splits": {s: [int(i) for i in dataset.splits[s]] for s in SPLITS},
        **dataset.extra,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return out


def load_dataset(path):
    root = Path(path)
    try:
        meta = json.loads((root / "meta.json").read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DatasetFormatError(f"{root}: not a dataset directory (meta.json missing)") from None
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise IncompatibleFormatError(f"{root}: dataset format version {version}, this build reads {FORMAT_VERSION}")
    graphs = []
    with open(root / "graphs.txt", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            graphs.append(parse_graph_line(line, lineno))
    splits = meta.get("splits", {})
    if set(splits) != set(SPLITS):
        raise DatasetFormatError(f"{root}/meta.json: all of {SPLITS} splits are required")
    extra = {k: v for k, v in meta.items() if k not in {"format_version", "depth_cap", "max_len", "num_graphs", "splits"}}
    return Dataset(
        graphs=graphs,
        target_vocab=_read_vocab(root / "vocab_target.txt"),
        attr_vocab=_read_vocab(root / "vocab_attr.txt"),
        type_vocab=_read_vocab(root / "vocab_type.txt"),
        depth_cap=int(meta["depth_cap"]),
        splits={s: list(splits[s]) for s in SPLITS},
        max_len=int(meta.get("max_len", 5)),
        extra=extra,
    )


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------


@dataclass
class BatchedGraph:
    """Disjoint union of graphs with batch-global node indices."""

    depth: np.ndarray
    node_type: np.ndarray
    attr: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    edge_type: np.ndarray
    node_graph: np.ndarray
    num_graphs: int

    @property
    def num_nodes(self):
        return len(self.depth)

    @classmethod
    def from_graphs(cls, graphs):
        if not graphs:
            raise ValueError("BatchedGraph: empty batch")
        nodes, edges, assign = [], [], []
        offset = 0
        for gi, g in enumerate(graphs):
            if g.num_nodes == 0:
                raise ValueError(f"BatchedGraph: graph {gi} has no nodes")
            nodes.append(g.nodes)
            e = g.edges.copy()
            e[:, :2] += offset
            edges.append(e)
            assign.append(np.full(g.num_nodes, gi, dtype=np.int64))
            offset += g.num_nodes
        nodes = np.concatenate(nodes)
        edges = np.concatenate(edges) if edges else np.zeros((0, 3), dtype=np.int64)
        return cls(
            depth=nodes[:, 0].copy(),
            node_type=nodes[:, 1].copy(),
            attr=nodes[:, 2].copy(),
            src=edges[:, 0].copy(),
            dst=edges[:, 1].copy(),
            edge_type=edges[:, 2].copy(),
            node_graph=np.concatenate(assign),
            num_graphs=len(graphs),
        )


def build_dataset(source_graphs, seed=0, target_cap=5000, attr_cap=10000, depth_cap=20, max_len=5):
    """Split :class:`SourceGraph` objects by file, build vocabularies on train, encode all."""
    from .vocab import build_vocabularies

    if not source_graphs:
        raise ValueError("build_dataset: no graphs")
    splits = split_by_file([g.provenance for g in source_graphs], seed=seed)
    target_vocab, attr_vocab, type_vocab, depth_cap = build_vocabularies(
        (source_graphs[i] for i in splits["train"]), target_cap, attr_cap, depth_cap
    )
    graphs = [encode_graph(g, attr_vocab, type_vocab, depth_cap) for g in source_graphs]
    extra = {"seed": seed, "target_cap": target_cap, "attr_cap": attr_cap}
    return Dataset(graphs, target_vocab, attr_vocab, type_vocab, depth_cap, splits, max_len, extra)


def corpus_statistics(graphs):
    """Graph count and mean node / edge / target-length figures."""
    n = len(graphs)
    if n == 0:
        return {"graphs": 0, "nodes_mean": 0.0, "edges_mean": 0.0, "target_len_mean": 0.0}
    return {
        "graphs": n,
        "nodes_mean": float(np.mean([g.num_nodes for g in graphs])),
        "edges_mean": float(np.mean([g.num_edges for g in graphs])),
        "target_len_mean": float(np.mean([len(g.target) for g in graphs])),
    }


def format_statistics(s):
    return f"graphs={s['graphs']} nodes_mean={s['nodes_mean']:.2f} edges_mean={s['edges_mean']:.2f} target_len_mean={s['target_len_mean']:.2f}"
