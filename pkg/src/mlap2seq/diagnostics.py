"""Synthetic graphs and the end-to-end finite-difference check."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ContractError, grad_check, ops
from .dataset import BatchedGraph
from .ingest import ProgramGraph, augment_edges
from .model import Graph2Seq, ModelConfig
from .train import sequence_loss
from .vocab import EOS

GRADCHECK_TOLERANCE = 1e-4


def random_tree(rng, n_nodes):
    """Random rooted tree as (parent, child) edges plus depths and leaf ids in DFS order."""
    parents = [-1] + [int(rng.integers(0, i)) for i in range(1, n_nodes)]
    depth = [0] * n_nodes
    children = [[] for _ in range(n_nodes)]
    for c in range(1, n_nodes):
        depth[c] = depth[parents[c]] + 1
        children[parents[c]].append(c)
    leaves, stack = [], [0]
    while stack:
        v = stack.pop()
        if not children[v]:
            leaves.append(v)
        stack.extend(reversed(children[v]))
    edges = [(parents[c], c) for c in range(1, n_nodes)]
    return edges, depth, leaves


def random_program_graph(rng, n_nodes, num_types=10, num_attrs=12, depth_cap=20, num_targets=8, max_len=5):
    edges, depth, leaves = random_tree(rng, n_nodes)
    typed = augment_edges(edges, leaves)
    nodes = [(min(d, depth_cap), int(rng.integers(0, num_types)), int(rng.integers(0, num_attrs))) for d in depth]
    n_words = int(rng.integers(1, max_len + 1))
    target = [f"w{int(rng.integers(3, num_targets))}" for _ in range(n_words)]
    return ProgramGraph(nodes, [(s, d, int(k)) for s, d, k in typed], target, f"random.py::g{n_nodes}")


@dataclass
class GradcheckReport:
    decoder: str
    errors: dict  # parameter name -> max relative error

    @property
    def max_error(self):
        return max(self.errors.values())

    @property
    def passed(self):
        return self.max_error < GRADCHECK_TOLERANCE


def build_gradcheck_problem(decoder, seed=0, hidden_dim=8, num_layers=2, dropout=0.0, n_graphs=3, graph_norm=True):
    """Tiny double-precision model, batch and loss closure for finite-difference checks."""
    rng = np.random.default_rng(seed)
    num_types, num_attrs, num_targets, max_len = 10, 12, 8, 5
    graphs = [random_program_graph(rng, int(rng.integers(3, 9)), num_types, num_attrs, 20, num_targets, max_len) for _ in range(n_graphs)]
    config = ModelConfig(
        decoder=decoder,
        num_layers=num_layers,
        hidden_dim=hidden_dim,
        residual=True,
        graph_norm=graph_norm,
        dropout=dropout,
        max_len=max_len,
        num_depths=21,
        num_types=num_types,
        num_attrs=num_attrs,
        num_targets=num_targets,
    )
    model = Graph2Seq(config, seed=seed, dtype=np.float64)
    # larger-than-default init so no gradient is vanishingly small
    for p in model.parameters():
        p.data += rng.normal(0.0, 0.3, size=p.shape)
    batch = BatchedGraph.from_graphs(graphs)
    targets = rng.integers(3, num_targets, size=(n_graphs, max_len))
    targets[:, -1] = EOS
    return model, batch, targets


def model_gradcheck(decoder, seed=0, dropout=0.0, corrupt=False, step=1e-6, floor=1e-6):
    """Max relative gradient error per parameter for a tiny model (d=8, L=2, 3 graphs)."""
    if dropout > 0.0:
        raise ContractError(
            "gradcheck needs a deterministic loss; dropout is random at train time, so run it with dropout=0"
        )
    model, batch, targets = build_gradcheck_problem(decoder, seed=seed, dropout=dropout)
    model.train()

    def loss_fn():
        loss = sequence_loss(model(batch, targets).probs, targets)
        return ops.scale_grad(loss, 1.5) if corrupt else loss

    names = [n for n, _ in model.named_parameters()]
    errors = grad_check(loss_fn, model.parameters(), step=step, floor=floor, per_param=True)
    return GradcheckReport(decoder, dict(zip(names, errors)))
