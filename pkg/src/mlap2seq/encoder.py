"""GIN encoder with multi-level attention pooling (MLAP-Weighted readout).

Every GIN layer's node embeddings are pooled into a graph vector by a
per-layer attention gate; the per-layer vectors are then combined with a
softmax-normalised learnable weight per layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ContractError, ops
from .ingest import EdgeType
from .nn import Embedding, Linear, Module, param

NUM_EDGE_TYPES = len(EdgeType)


@dataclass
class EncoderConfig:
    num_layers: int = 6
    hidden_dim: int = 300
    residual: bool = True
    graph_norm: bool = False
    dropout: float = 0.1
    num_depths: int = 21
    num_types: int = 1
    num_attrs: int = 1
    readout: str = "mlap"  # "mlap" or "naive" (pool the last layer only)

    def __post_init__(self):
        if self.num_layers < 1 or self.hidden_dim < 1:
            raise ContractError("EncoderConfig: num_layers and hidden_dim must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError("EncoderConfig: dropout must be in [0, 1)")
        if self.readout not in ("mlap", "naive"):
            raise ContractError(f"EncoderConfig: unknown readout {self.readout!r}")


@dataclass
class LayerRepresentations:
    """Pooled graph vectors ``layers[l]`` (B, d) per layer and the aggregate ``graph`` (B, d)."""

    layers: list
    graph: object
    weights: object = None  # aggregation weights (L,), None for the naive readout

    def all(self):
        """The L layer vectors followed by the aggregate, as used by the LSTM attention."""
        return list(self.layers) + [self.graph]


def graph_norm(x, batch, alpha, gamma, beta, eps=1e-5):
    """Normalise node features per graph: (x - alpha*mean) / std * gamma + beta."""
    g, n = batch.node_graph, batch.num_graphs
    counts = np.bincount(g, minlength=n).astype(x.dtype)
    if np.any(counts == 0):
        raise ContractError("graph_norm: every graph needs at least one node")
    inv_counts = (1.0 / counts)[:, None]
    mean = ops.mul(ops.segment_sum(x, g, n), inv_counts)
    shifted = ops.sub(x, ops.mul(ops.embedding(mean, g), alpha))
    var = ops.mul(ops.segment_sum(ops.mul(shifted, shifted), g, n), inv_counts)
    std = ops.sqrt(ops.add(var, eps))
    return ops.add(ops.mul(ops.div(shifted, ops.embedding(std, g)), gamma), beta)


def mlap_pool_layer(h, batch, gate):
    """Attention pooling: per-graph softmax over ``gate(h)`` scores, then a weighted sum of rows."""
    g, n = batch.node_graph, batch.num_graphs
    if np.bincount(g, minlength=n).min(initial=1) == 0:
        raise ContractError("mlap_pool_layer: empty graph in batch")
    scores = ops.reshape(gate(h), (h.shape[0],))
    attn = ops.segment_softmax(scores, g, n)
    return ops.segment_sum(ops.mul(h, ops.reshape(attn, (h.shape[0], 1))), g, n)


def aggregate_weighted(layer_reps, scores):
    """``sum_l softmax(scores)_l * layer_reps[l]``; returns (aggregate, weights)."""
    if len(layer_reps) != scores.shape[0]:
        raise ContractError(f"aggregate_weighted: {len(layer_reps)} layers but {scores.shape[0]} scores")
    w = ops.softmax(scores, axis=0)
    stacked = ops.stack(layer_reps, axis=0)
    return ops.sum(ops.mul(stacked, ops.reshape(w, (len(layer_reps), 1, 1))), axis=0), w


class AttentionGate(Module):
    """Two-layer perceptron d -> d -> 1 producing one attention score per node."""

    def __init__(self, rng, d, dtype):
        self.hidden = Linear(rng, d, d, dtype)
        self.out = Linear(rng, d, 1, dtype)

    def __call__(self, h):
        return self.out(ops.relu(self.hidden(h)))


class GraphNorm(Module):
    def __init__(self, d, dtype):
        self.alpha = param(np.ones(d), dtype)
        self.gamma = param(np.ones(d), dtype)
        self.beta = param(np.zeros(d), dtype)

    def __call__(self, x, batch):
        return graph_norm(x, batch, self.alpha, self.gamma, self.beta)


class GINLayer(Module):
    def __init__(self, rng, config, dtype):
        d = config.hidden_dim
        self.config = config
        self.edge_emb = Embedding(rng, NUM_EDGE_TYPES, d, dtype)
        self.eps = param(np.zeros(1), dtype)
        self.mlp_in = Linear(rng, d, 2 * d, dtype)
        self.mlp_out = Linear(rng, 2 * d, d, dtype)
        self.norm = GraphNorm(d, dtype) if config.graph_norm else None

    def __call__(self, h, batch, rng=None):
        return gin_layer_forward(h, batch, self, self.config, training=self.training, rng=rng)


def gin_layer_forward(h, batch, layer, config, training=False, rng=None):
    """One GIN layer followed by [GraphNorm] -> ReLU -> dropout [-> + residual]."""
    n = h.shape[0]
    if batch.src.size and (batch.src.max() >= n or batch.dst.max() >= n or min(batch.src.min(), batch.dst.min()) < 0):
        raise ContractError("gin_layer_forward: edge index out of range")
    messages = ops.add(ops.embedding(h, batch.src), layer.edge_emb(batch.edge_type))
    agg = ops.segment_sum(messages, batch.dst, n)
    m = ops.add(ops.mul(ops.add(1.0, layer.eps), h), agg)
    out = layer.mlp_out(ops.relu(layer.mlp_in(m)))
    if layer.norm is not None:
        out = layer.norm(out, batch)
    out = ops.relu(out)
    out = ops.dropout(out, config.dropout, training, rng)
    if config.residual:
        out = ops.add(out, h)
    return out


class Encoder(Module):
    def __init__(self, config, rng, dtype=np.float32):
        d = config.hidden_dim
        self.config = config
        self.depth_emb = Embedding(rng, config.num_depths, d, dtype)
        self.type_emb = Embedding(rng, config.num_types, d, dtype)
        self.attr_emb = Embedding(rng, config.num_attrs, d, dtype)
        self.layers = [GINLayer(rng, config, dtype) for _ in range(config.num_layers)]
        n_gates = config.num_layers if config.readout == "mlap" else 1
        self.gates = [AttentionGate(rng, d, dtype) for _ in range(n_gates)]
        self.layer_scores = param(np.zeros(config.num_layers), dtype) if config.readout == "mlap" else None
        self.rng = None  # dropout generator, set by the trainer

    def embed_nodes(self, batch):
        """Sum of depth, node-type and attribute embeddings per node."""
        for name, ids, table in (
            ("depth", batch.depth, self.depth_emb),
            ("type", batch.node_type, self.type_emb),
            ("attr", batch.attr, self.attr_emb),
        ):
            if ids.size and (ids.min() < 0 or ids.max() >= len(table)):
                raise ContractError(f"embed_nodes: {name} id out of range [0, {len(table)})")
        return ops.add(ops.add(self.depth_emb(batch.depth), self.type_emb(batch.node_type)), self.attr_emb(batch.attr))

    def node_layers(self, batch):
        """Node embeddings after every GIN layer, h^1 .. h^L."""
        h = self.embed_nodes(batch)
        out = []
        for layer in self.layers:
            h = layer(h, batch, self.rng)
            out.append(h)
        return out

    def __call__(self, batch):
        return self.encode_batch(batch)

    def encode_batch(self, batch):
        hs = self.node_layers(batch)
        if self.config.readout == "naive":
            pooled = mlap_pool_layer(hs[-1], batch, self.gates[0])
            return LayerRepresentations([pooled], pooled)
        pooled = [mlap_pool_layer(h, batch, gate) for h, gate in zip(hs, self.gates)]
        graph, w = aggregate_weighted(pooled, self.layer_scores)
        return LayerRepresentations(pooled, graph, w)
