"""Sequence decoders over graph representations.

``LinearDecoder`` scores each output position independently from the
aggregated graph vector. ``LSTMDecoder`` starts from the graph vector,
attends over the per-layer vectors at each step and feeds its own output
vector back in as the next input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ContractError, ops
from .nn import Embedding, Linear, Module, param
from .vocab import EOS, SOS


@dataclass
class DecoderOutput:
    probs: list  # one (B, V) probability tensor per position / step
    predictions: list  # per example: decoded word ids, truncated before the first EOS
    steps: int = 0
    attention: list = field(default_factory=list)  # LSTM only: (B, L+1) weights per step


def truncate_at_eos(ids):
    """Drop the first EOS and everything after it; SOS never survives either."""
    out = []
    for i in ids:
        i = int(i)
        if i == EOS:
            break
        if i != SOS:
            out.append(i)
    return out


def greedy(probs):
    # np.argmax returns the first maximum, i.e. ties go to the lowest id
    return np.argmax(probs, axis=-1)


class LinearDecoder(Module):
    """Position-wise vocabulary embeddings and biases, one softmax per position."""

    def __init__(self, rng, max_len, vocab_size, d, dtype=np.float32):
        self.max_len = max_len
        self.embeddings = [Embedding(rng, vocab_size, d, dtype) for _ in range(max_len)]
        self.biases = [param(np.zeros(vocab_size), dtype) for _ in range(max_len)]

    def __call__(self, reps, targets=None):
        return self.decode(reps.graph)

    def position_probs(self, h_graph):
        return [
            ops.softmax(ops.add(ops.matmul(h_graph, ops.transpose(emb.weight)), bias), axis=-1)
            for emb, bias in zip(self.embeddings, self.biases)
        ]

    def decode(self, h_graph):
        d = self.embeddings[0].weight.shape[1]
        if h_graph.ndim != 2 or h_graph.shape[1] != d:
            raise ContractError(f"linear_decode: graph vector shape {h_graph.shape}, expected (B, {d})")
        probs = self.position_probs(h_graph)
        choice = np.stack([greedy(p.data) for p in probs], axis=1)
        return DecoderOutput(probs, [truncate_at_eos(row) for row in choice], steps=self.max_len)


def linear_decode(h_graph, decoder):
    return decoder.decode(h_graph)


class LSTMDecoder(Module):
    def __init__(self, rng, max_len, vocab_size, d, dtype=np.float32, teacher_forcing=False):
        self.max_len = max_len
        self.d = d
        self.teacher_forcing = teacher_forcing
        self.vocab = Embedding(rng, vocab_size, d, dtype)
        # gate order: input, forget, cell, output
        self.w_input = Linear(rng, d, 4 * d, dtype)
        self.w_state = Linear(rng, d, 4 * d, dtype)
        self.proj = Linear(rng, 2 * d, d, dtype)
        self.ln_gamma = param(np.ones(d), dtype)
        self.ln_beta = param(np.zeros(d), dtype)
        self.word_bias = param(np.zeros(vocab_size), dtype)

    def __call__(self, reps, targets=None):
        mode = "train" if targets is not None else "infer"
        return lstm_decode_sequence(reps, self, self.max_len, mode=mode, targets=targets)


def lstm_cell(x, s, c, dec):
    d = dec.d
    z = ops.add(dec.w_input(x), dec.w_state(s))
    i = ops.sigmoid(ops.slice_axis(z, 0, d))
    f = ops.sigmoid(ops.slice_axis(z, d, 2 * d))
    g = ops.tanh(ops.slice_axis(z, 2 * d, 3 * d))
    o = ops.sigmoid(ops.slice_axis(z, 3 * d, 4 * d))
    c_new = ops.add(ops.mul(f, c), ops.mul(i, g))
    s_new = ops.mul(o, ops.tanh(c_new))
    return s_new, c_new


def attend(stacked, s):
    """Dot-product attention of state ``s`` (B, d) over ``stacked`` (B, K, d)."""
    b, k, d = stacked.shape
    scores = ops.sum(ops.mul(stacked, ops.reshape(s, (b, 1, d))), axis=2)
    alpha = ops.softmax(scores, axis=1)
    context = ops.sum(ops.mul(stacked, ops.reshape(alpha, (b, k, 1))), axis=1)
    return context, alpha


def lstm_step(s, c, r, stacked, dec):
    """One decoder step; returns (state, memory, output vector, word probabilities, attention)."""
    if s.shape[-1] != dec.d or r.shape[-1] != dec.d or stacked.shape[-1] != dec.d:
        raise ContractError(f"lstm_step: expected width {dec.d}, got {s.shape}, {r.shape}, {stacked.shape}")
    s, c = lstm_cell(r, s, c, dec)
    context, alpha = attend(stacked, s)
    o = ops.tanh(ops.layer_norm(dec.proj(ops.concat([context, s], axis=1)), dec.ln_gamma, dec.ln_beta))
    logits = ops.add(ops.matmul(o, ops.transpose(dec.vocab.weight)), dec.word_bias)
    return s, c, o, ops.softmax(logits, axis=-1), alpha


def lstm_decode_sequence(reps, dec, max_steps, mode="infer", targets=None):
    """Run the LSTM decoder.

    Training always runs ``max_steps`` steps and returns every probability
    vector. Inference is greedy and stops once every sequence in the batch
    has produced EOS (or after ``max_steps``).
    """
    if max_steps < 1:
        raise ContractError("lstm_decode_sequence: max_steps must be >= 1")
    if mode not in ("train", "infer"):
        raise ContractError(f"lstm_decode_sequence: unknown mode {mode!r}")
    if (targets is not None) != (mode == "train"):
        raise ContractError("lstm_decode_sequence: targets must be given exactly in train mode")
    if targets is not None:
        targets = np.asarray(targets)
        if targets.ndim != 2 or targets.shape[1] != max_steps:
            raise ContractError(f"lstm_decode_sequence: targets must have {max_steps} columns, got {targets.shape}")

    h_graph = reps.graph
    b = h_graph.shape[0]
    stacked = ops.stack(reps.all(), axis=1)
    s, c = h_graph, h_graph
    r = dec.vocab(np.full(b, SOS, dtype=np.int64))
    probs, attention, chosen = [], [], []
    done = np.zeros(b, dtype=bool)
    steps = 0
    for t in range(max_steps):
        s, c, o, p, alpha = lstm_step(s, c, r, stacked, dec)
        steps += 1
        probs.append(p)
        attention.append(alpha)
        word = greedy(p.data)
        chosen.append(word)
        done |= word == EOS
        if dec.teacher_forcing:
            r = dec.vocab(targets[:, t] if mode == "train" else word)
        else:
            r = o
        if mode == "infer" and done.all():
            break
    choice = np.stack(chosen, axis=1)
    return DecoderOutput(probs, [truncate_at_eos(row) for row in choice], steps=steps, attention=attention)
