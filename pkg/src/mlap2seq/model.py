"""Encoder + decoder bundle."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .autodiff import ContractError, no_grad
from .dataset import BatchedGraph
from .decoders import LinearDecoder, LSTMDecoder
from .encoder import Encoder, EncoderConfig
from .nn import Module

DECODERS = ("linear", "lstm")

# best configurations per decoder kind (layers, residual, graph norm)
DECODER_DEFAULTS = {
    "linear": {"num_layers": 6, "residual": True, "graph_norm": False},
    "lstm": {"num_layers": 5, "residual": True, "graph_norm": True},
}


@dataclass
class ModelConfig:
    decoder: str = "linear"
    num_layers: int = 6
    hidden_dim: int = 300
    residual: bool = True
    graph_norm: bool = False
    dropout: float = 0.1
    readout: str = "mlap"
    max_len: int = 5
    teacher_forcing: bool = False
    num_depths: int = 21
    num_types: int = 1
    num_attrs: int = 1
    num_targets: int = 3

    def __post_init__(self):
        if self.decoder not in DECODERS:
            raise ContractError(f"unknown decoder kind {self.decoder!r}; expected one of {DECODERS}")
        if self.max_len < 1:
            raise ContractError("ModelConfig: max_len must be >= 1")
        self.encoder_config()  # validates the encoder fields

    @classmethod
    def for_decoder(cls, decoder, **overrides):
        base = dict(DECODER_DEFAULTS[decoder], decoder=decoder)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_dict(self):
        return asdict(self)

    def encoder_config(self):
        return EncoderConfig(
            num_layers=self.num_layers,
            hidden_dim=self.hidden_dim,
            residual=self.residual,
            graph_norm=self.graph_norm,
            dropout=self.dropout,
            num_depths=self.num_depths,
            num_types=self.num_types,
            num_attrs=self.num_attrs,
            readout=self.readout,
        )


class Graph2Seq(Module):
    def __init__(self, config, seed=0, dtype=np.float32):
        self.config = config
        rng = np.random.default_rng(seed)
        self.encoder = Encoder(config.encoder_config(), rng, dtype)
        d, v, n = config.hidden_dim, config.num_targets, config.max_len
        if config.decoder == "linear":
            self.decoder = LinearDecoder(rng, n, v, d, dtype)
        else:
            self.decoder = LSTMDecoder(rng, n, v, d, dtype, teacher_forcing=config.teacher_forcing)
        self.set_rng(np.random.default_rng([seed, 2]))

    @property
    def dtype(self):
        return self.encoder.depth_emb.weight.dtype

    def set_rng(self, rng):
        self.encoder.rng = rng

    def __call__(self, batch, targets=None):
        reps = self.encoder(batch)
        return self.decoder(reps, targets)

    def predict(self, graphs, batch_size=256):
        """Greedy decoded word-id lists for ``graphs``, in order."""
        was_training = self.training
        self.eval()
        out = []
        try:
            with no_grad():
                for start in range(0, len(graphs), batch_size):
                    batch = BatchedGraph.from_graphs(graphs[start : start + batch_size])
                    out.extend(self(batch).predictions)
        finally:
            self.train(was_training)
        return out
