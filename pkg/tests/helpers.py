"""Shared builders for encoder / decoder tests."""

import numpy as np

from mlap2seq.dataset import BatchedGraph
from mlap2seq.diagnostics import random_program_graph
from mlap2seq.encoder import Encoder, EncoderConfig
from mlap2seq.ingest import ProgramGraph


def make_encoder(d=8, layers=2, graph_norm=True, residual=True, seed=0, readout="mlap", spread=0.3):
    cfg = EncoderConfig(
        num_layers=layers,
        hidden_dim=d,
        residual=residual,
        graph_norm=graph_norm,
        dropout=0.0,
        num_depths=21,
        num_types=10,
        num_attrs=12,
        readout=readout,
    )
    rng = np.random.default_rng(seed)
    enc = Encoder(cfg, rng, np.float64)
    for p in enc.parameters():  # wider than the default init so layers differ visibly
        p.data += rng.normal(0.0, spread, size=p.shape)
    enc.eval()
    return enc


def random_graphs(seed, count, max_nodes=30, min_nodes=1):
    rng = np.random.default_rng(seed)
    return [random_program_graph(rng, int(rng.integers(min_nodes, max_nodes + 1))) for _ in range(count)]


def permute_graph(g, rng):
    """Same graph with node ids relabelled by a random permutation and edges shuffled."""
    n = g.num_nodes
    perm = rng.permutation(n)  # old id -> new id
    nodes = np.empty_like(g.nodes)
    nodes[perm] = g.nodes
    edges = g.edges.copy()
    edges[:, 0] = perm[g.edges[:, 0]]
    edges[:, 1] = perm[g.edges[:, 1]]
    edges = edges[rng.permutation(len(edges))]
    return ProgramGraph(nodes, edges, g.target, g.provenance)


def encode(enc, graphs):
    return enc.encode_batch(BatchedGraph.from_graphs(graphs))
