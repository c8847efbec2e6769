"""Training: sequence cross-entropy, plateau LR decay, checkpointed epoch loop."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import AdamState, NumericInstabilityError, adam_step, backward, ops
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .dataset import BatchedGraph
from .metrics import evaluate_split
from .model import Graph2Seq, ModelConfig
from .vocab import encode_target

log = logging.getLogger(__name__)

PROB_EPS = 1e-12
LOG_FIELDS = ("epoch", "lr", "train_loss", "valid_f1", "wall_time")

# number of target probabilities clamped to PROB_EPS since import
clamp_events = 0


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 256
    lr: float = 5e-4
    decay_factor: float = 0.2
    patience: int = 3
    min_lr: float = 1e-6
    seed: int = 0
    eval_batch_size: int = 256

    def __post_init__(self):
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError("TrainConfig: decay_factor must be in (0, 1)")
        if self.patience < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("TrainConfig: patience and batch_size must be >= 1, epochs >= 0")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class LrScheduleState:
    lr: float
    best: float | None = None
    counter: int = 0


def update_lr_on_plateau(state, val_f1, config):
    """Reduce-on-plateau: after ``patience`` epochs without a new best F1, scale lr by ``decay_factor``."""
    if state.best is None or val_f1 > state.best:
        state.best = float(val_f1)
        state.counter = 0
        return state
    state.counter += 1
    if state.counter >= config.patience:
        state.lr = max(state.lr * config.decay_factor, config.min_lr)
        state.counter = 0
    return state


def sequence_loss(probs, targets):
    """Mean over examples and positions of -log p(target).

    ``probs`` is a list of (B, V) probability tensors, one per position;
    ``targets`` is a (B, I) id array padded with EOS.
    """
    global clamp_events
    targets = np.asarray(targets)
    if targets.shape[1] != len(probs):
        raise ValueError(f"sequence_loss: {len(probs)} positions but targets have {targets.shape[1]}")
    picked = []
    for t, p in enumerate(probs):
        onehot = np.zeros(p.shape, dtype=p.dtype)
        onehot[np.arange(p.shape[0]), targets[:, t]] = 1.0
        pt = ops.sum(ops.mul(p, onehot), axis=1)
        n_small = int(np.sum(pt.data < PROB_EPS))
        if n_small:
            clamp_events += n_small
            log.warning("sequence_loss: %d target probabilities clamped to %g", n_small, PROB_EPS)
        picked.append(ops.log(pt, eps=PROB_EPS))
    return ops.mul(ops.mean(ops.stack(picked, axis=1)), -1.0)


def encode_targets(graphs, target_vocab, max_len):
    return np.asarray([encode_target(g.target, target_vocab, max_len) for g in graphs], dtype=np.int64).reshape(-1, max_len)


@dataclass
class EpochStats:
    mean_loss: float
    seconds: float
    batches: int
    losses: list = field(default_factory=list)


def train_epoch(model, graphs, targets, opt, config, rng):
    """One pass over ``graphs`` in a seeded random order with an Adam step per batch."""
    if not graphs:
        raise ValueError("train_epoch: empty training split")
    t0 = time.perf_counter()
    model.train()
    model.set_rng(rng)
    params = model.parameters()
    order = rng.permutation(len(graphs))
    losses = []
    for bi, start in enumerate(range(0, len(order), config.batch_size)):
        idx = order[start : start + config.batch_size]
        batch = BatchedGraph.from_graphs([graphs[i] for i in idx])
        tgt = targets[idx]
        for p in params:
            p.grad = np.zeros_like(p.data)
        try:
            out = model(batch, tgt)
            loss = sequence_loss(out.probs, tgt)
        except NumericInstabilityError as exc:
            raise TrainingDiverged(f"non-finite values in batch {bi} at lr={opt.lr:g}: {exc}") from exc
        if not np.isfinite(loss.data):
            raise TrainingDiverged(f"non-finite loss in batch {bi} at lr={opt.lr:g}")
        backward(loss)
        adam_step(params, opt)
        losses.append(float(loss.data))
    for p in params:
        p.grad = None
    return EpochStats(float(np.mean(losses)), time.perf_counter() - t0, len(losses), losses)


# ---------------------------------------------------------------------------
# checkpoint plumbing
# ---------------------------------------------------------------------------


def make_checkpoint(model, opt, sched, train_config, epoch, rng, extra=None):
    tensors = {f"model.{k}": v for k, v in model.state_dict().items()}
    names = [n for n, _ in model.named_parameters()]
    if opt.m:
        for name, m, v in zip(names, opt.m, opt.v):
            tensors[f"adam.m.{name}"] = m.copy()
            tensors[f"adam.v.{name}"] = v.copy()
    return Checkpoint(
        tensors=tensors,
        model_config=model.config.to_dict(),
        train_config=asdict(train_config),
        schedule={"lr": sched.lr, "best": sched.best, "counter": sched.counter, "adam_t": opt.t, "adam_lr": opt.lr},
        epoch=epoch,
        rng_state=rng.bit_generator.state if rng is not None else None,
        extra={"tool_version": __version__, **(extra or {})},
    )


def model_from_checkpoint(ckpt, dtype=None):
    config = ModelConfig.from_dict(ckpt.model_config)
    state = ckpt.model_state()
    if dtype is None:
        dtype = next(iter(state.values())).dtype if state else np.float32
    model = Graph2Seq(config, seed=0, dtype=dtype)
    model.load_state_dict(state)
    return model


def _restore_optimizer(ckpt, model):
    names = [n for n, _ in model.named_parameters()]
    opt = AdamState(lr=ckpt.schedule["adam_lr"])
    if f"adam.m.{names[0]}" in ckpt.tensors:
        opt.m = [ckpt.tensors[f"adam.m.{n}"].copy() for n in names]
        opt.v = [ckpt.tensors[f"adam.v.{n}"].copy() for n in names]
    else:
        opt.init_for(model.parameters())
    opt.t = int(ckpt.schedule["adam_t"])
    return opt


def _write_log(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_FIELDS)
        for r in rows:
            w.writerow([r["epoch"], repr(r["lr"]), repr(r["train_loss"]), repr(r["valid_f1"]), f"{r['wall_time']:.3f}"])


def read_log(path):
    with open(path, newline="") as fh:
        return [
            {
                "epoch": int(r["epoch"]),
                "lr": float(r["lr"]),
                "train_loss": float(r["train_loss"]),
                "valid_f1": float(r["valid_f1"]),
                "wall_time": float(r["wall_time"]),
            }
            for r in csv.DictReader(fh)
        ]


@dataclass
class FitResult:
    best: Checkpoint
    log: list
    model: Graph2Seq


def fit(model_config, train_config, dataset, out_dir=None, resume=False):
    """Train with per-epoch validation, plateau LR decay and best-checkpoint tracking.

    With ``out_dir``, ``last.ckpt`` and ``best.ckpt`` are written after every
    epoch along with ``epochs.csv``; ``resume=True`` continues from
    ``last.ckpt`` if it exists.
    """
    train_graphs = dataset.split("train")
    valid_graphs = dataset.split("valid")
    if not train_graphs or not valid_graphs:
        raise ValueError("fit: dataset needs nonempty train and valid splits")
    max_len = model_config.max_len
    train_targets = encode_targets(train_graphs, dataset.target_vocab, max_len)

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    seed = train_config.seed
    model = Graph2Seq(model_config, seed=seed)
    rng = np.random.default_rng([seed, 1])
    opt = AdamState(lr=train_config.lr).init_for(model.parameters())
    sched = LrScheduleState(lr=train_config.lr)
    rows = []
    start_epoch = 0
    best = make_checkpoint(model, opt, sched, train_config, 0, rng)
    best_f1 = None

    if resume and out is not None and (out / "last.ckpt").exists():
        last = load_checkpoint(out / "last.ckpt")
        model.load_state_dict(last.model_state())
        opt = _restore_optimizer(last, model)
        sched = LrScheduleState(lr=last.schedule["lr"], best=last.schedule["best"], counter=last.schedule["counter"])
        rng.bit_generator.state = last.rng_state
        start_epoch = last.epoch
        rows = [r for r in read_log(out / "epochs.csv") if r["epoch"] <= start_epoch]
        if (out / "best.ckpt").exists():
            best = load_checkpoint(out / "best.ckpt")
            best_f1 = best.extra.get("valid_f1")
        log.info("resumed from %s at epoch %d", out / "last.ckpt", start_epoch)

    for epoch in range(start_epoch + 1, train_config.epochs + 1):
        opt.lr = sched.lr
        stats = train_epoch(model, train_graphs, train_targets, opt, train_config, rng)
        val_f1 = evaluate_split(model, valid_graphs, dataset.target_vocab, batch_size=train_config.eval_batch_size)
        row = {"epoch": epoch, "lr": opt.lr, "train_loss": stats.mean_loss, "valid_f1": val_f1, "wall_time": stats.seconds}
        rows.append(row)
        update_lr_on_plateau(sched, val_f1, train_config)
        log.info("epoch %d lr=%g loss=%.5f valid_f1=%.4f (%.1fs)", epoch, row["lr"], stats.mean_loss, val_f1, stats.seconds)
        snapshot = make_checkpoint(model, opt, sched, train_config, epoch, rng, extra={"valid_f1": val_f1})
        if best_f1 is None or val_f1 > best_f1:
            best, best_f1 = snapshot, val_f1
            if out is not None:
                save_checkpoint(best, out / "best.ckpt")
        if out is not None:
            save_checkpoint(snapshot, out / "last.ckpt")
            _write_log(out / "epochs.csv", rows)

    if out is not None:
        if best_f1 is None:
            save_checkpoint(best, out / "best.ckpt")
        _write_log(out / "epochs.csv", rows)
    return FitResult(best, rows, model)
