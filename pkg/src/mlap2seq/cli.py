"""``mlap2seq`` command line: preprocess, train, evaluate, predict, gradcheck.

Log verbosity comes from ``MLAP2SEQ_LOG_LEVEL`` (default ``INFO``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__, config as cfgmod
from .checkpoint import CheckpointError, load_checkpoint
from .dataset import (
    DatasetFormatError,
    build_dataset,
    corpus_statistics,
    encode_graph,
    format_statistics,
    load_dataset,
    serialize_dataset,
)
from .ingest import RejectedExample, build_source_graph, extract_functions, read_corpus
from .metrics import aggregate_runs, compare_runs, evaluate_split
from .model import ModelConfig
from .train import TrainConfig, fit, model_from_checkpoint

log = logging.getLogger("mlap2seq")


class CommandError(Exception):
    """Hard failure of a subcommand; reported on stderr with exit status 1."""


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _common(p):
    p.add_argument("--config", help="INI config file with [paths] [preprocess] [model] [train] sections")
    p.add_argument("--out", help="output directory")


def _model_flags(p):
    p.add_argument("--decoder", choices=("linear", "lstm"))
    p.add_argument("--layers", type=int)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--residual", choices=("on", "off"))
    p.add_argument("--graphnorm", choices=("on", "off"))
    p.add_argument("--dropout", type=float)
    p.add_argument("--readout", choices=("mlap", "naive"))
    p.add_argument("--teacher-forcing", choices=("on", "off"), help="LSTM only; off by default")


def build_parser():
    parser = argparse.ArgumentParser(prog="mlap2seq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mlap2seq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="parse a corpus of .py files into a dataset directory")
    _common(p)
    p.add_argument("--corpus", help="directory of Python source files")
    p.add_argument("--dataset", help="dataset directory to write (alias of --out)")
    p.add_argument("--seed", help="split seed")
    p.add_argument("--target-cap", type=int)
    p.add_argument("--attr-cap", type=int)
    p.add_argument("--depth-cap", type=int)
    p.add_argument("--max-len", type=int)

    p = sub.add_parser("train", help="train one model per seed")
    _common(p)
    p.add_argument("--dataset")
    p.add_argument("--seed", help="seed or comma-separated seed list")
    _model_flags(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--resume", action="store_true", help="continue each seed from its last.ckpt")

    p = sub.add_parser("evaluate", help="F1 of a checkpoint or of every seed in a run directory")
    _common(p)
    p.add_argument("--dataset")
    p.add_argument("--checkpoint", help="single checkpoint file")
    p.add_argument("--run", help="run directory produced by train")
    p.add_argument("--compare", help="second run directory for a Welch t-test / Cohen's d comparison")
    p.add_argument("--split", default="test", choices=("train", "valid", "test"))
    p.add_argument("--which", default="best", choices=("best", "last"), help="checkpoint to use inside run dirs")

    p = sub.add_parser("predict", help="predict the name of a function in a source file")
    _common(p)
    p.add_argument("--dataset")
    p.add_argument("--checkpoint")
    p.add_argument("--function", help="function name to pick when the file defines several")
    p.add_argument("source", help="Python source file")

    p = sub.add_parser("gradcheck", help="finite-difference check of both decoders on a tiny model")
    _common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--corrupt-grad", action="store_true", help=argparse.SUPPRESS)
    return parser


def _overrides(args):
    g = lambda name: getattr(args, name, None)  # noqa: E731
    return {
        "paths": {
            "corpus": g("corpus"),
            "dataset": g("dataset"),
            "checkpoint": g("checkpoint"),
            "out": g("out"),
        },
        "preprocess": {
            "target_cap": g("target_cap"),
            "attr_cap": g("attr_cap"),
            "depth_cap": g("depth_cap"),
            "max_len": g("max_len"),
            "split_seed": g("seed") if args.command == "preprocess" else None,
        },
        "model": {
            "decoder": g("decoder"),
            "layers": g("layers"),
            "hidden_dim": g("hidden_dim"),
            "residual": g("residual"),
            "graphnorm": g("graphnorm"),
            "dropout": g("dropout") if args.command != "gradcheck" else None,
            "readout": g("readout"),
            "teacher_forcing": g("teacher_forcing"),
        },
        "train": {
            "epochs": g("epochs"),
            "batch_size": g("batch_size"),
            "lr": g("lr"),
            "patience": g("patience"),
            "seeds": g("seed") if args.command == "train" else None,
        },
    }


def _require(cfg, key, flag):
    value = cfg["paths"][key]
    if not value:
        raise CommandError(f"missing required path: pass {flag} or set [paths] {key}")
    return Path(value)


def model_config_for(cfg, dataset):
    m = cfg["model"]
    return ModelConfig(
        decoder=m["decoder"],
        num_layers=m["layers"],
        hidden_dim=m["hidden_dim"],
        residual=m["residual"],
        graph_norm=m["graphnorm"],
        dropout=m["dropout"],
        readout=m["readout"],
        teacher_forcing=m["teacher_forcing"],
        max_len=dataset.max_len,
        num_depths=dataset.depth_cap + 1,
        num_types=len(dataset.type_vocab),
        num_attrs=len(dataset.attr_vocab),
        num_targets=len(dataset.target_vocab),
    )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_preprocess(cfg):
    corpus = _require(cfg, "corpus", "--corpus")
    out = Path(cfg["paths"]["out"] or cfg["paths"]["dataset"] or "")
    if not str(out) or str(out) == ".":
        raise CommandError("missing output: pass --out or --dataset")
    if not corpus.is_dir():
        raise CommandError(f"corpus directory not found: {corpus}")
    graphs, stats = read_corpus(corpus)
    if not graphs:
        raise CommandError(f"no parseable functions under {corpus}")
    pp = cfg["preprocess"]
    dataset = build_dataset(
        graphs,
        seed=pp["split_seed"],
        target_cap=pp["target_cap"],
        attr_cap=pp["attr_cap"],
        depth_cap=pp["depth_cap"],
        max_len=pp["max_len"],
    )
    serialize_dataset(dataset, out)
    cfgmod.write_resolved(cfg, out)
    print(format_statistics(corpus_statistics(dataset.graphs)))
    print(
        f"files={stats.files} functions={stats.functions} rejected={stats.rejected} "
        f"failed_files={len(stats.failed_files)} "
        + " ".join(f"{k}={len(v)}" for k, v in dataset.splits.items())
    )
    return out


def cmd_train(cfg, resume=False):
    dataset = load_dataset(_require(cfg, "dataset", "--dataset"))
    out = _require(cfg, "out", "--out")
    model_config = model_config_for(cfg, dataset)
    seeds = cfgmod.parse_seeds(cfg["train"]["seeds"])
    if not seeds:
        raise CommandError("no seeds given")
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.write_resolved(cfg, out)
    t = cfg["train"]
    results = {}
    for seed in seeds:
        tc = TrainConfig(
            epochs=t["epochs"],
            batch_size=t["batch_size"],
            lr=t["lr"],
            decay_factor=t["decay_factor"],
            patience=t["patience"],
            min_lr=t["min_lr"],
            seed=seed,
        )
        seed_dir = out / f"seed_{seed}"
        res = fit(model_config, tc, dataset, out_dir=seed_dir, resume=resume)
        cfgmod.write_resolved(dict(cfg, train=dict(t, seeds=str(seed))), seed_dir)
        best_f1 = max((r["valid_f1"] for r in res.log), default=0.0)
        results[seed] = best_f1
        print(f"seed={seed} best_valid_f1={best_f1:.4f} epochs={len(res.log)} checkpoint={seed_dir / 'best.ckpt'}")
    report = aggregate_runs(list(results.values()))
    payload = {
        "metric": "best validation F1",
        "seeds": seeds,
        "scores": report.scores,
        "mean": report.mean,
        "std": report.std,
        "n": report.n,
        "parameters": _count_parameters(model_config),
        "model": model_config.to_dict(),
    }
    (out / "report.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(f"valid_f1 {report}")
    return report


def _count_parameters(model_config):
    from .model import Graph2Seq

    return Graph2Seq(model_config, seed=0).num_parameters()


def _seed_checkpoints(run_dir, which):
    run_dir = Path(run_dir)
    ckpts = sorted(run_dir.glob(f"seed_*/{which}.ckpt"), key=lambda p: int(p.parent.name.split("_", 1)[1]))
    if not ckpts:
        raise CommandError(f"no seed_*/{which}.ckpt under {run_dir}")
    return ckpts


def _evaluate_run(run_dir, dataset, split, which, out):
    scores = []
    for ckpt_path in _seed_checkpoints(run_dir, which):
        model = model_from_checkpoint(load_checkpoint(ckpt_path))
        score_file = None
        if out is not None:
            score_file = out / f"scores_{Path(run_dir).name}_{ckpt_path.parent.name}_{split}.tsv"
        scores.append(evaluate_split(model, dataset.split(split), dataset.target_vocab, score_file))
    return aggregate_runs(scores)


def cmd_evaluate(cfg, args):
    dataset = load_dataset(_require(cfg, "dataset", "--dataset"))
    out = Path(cfg["paths"]["out"]) if cfg["paths"]["out"] else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        cfgmod.write_resolved(cfg, out)
    split = args.split
    graphs = dataset.split(split)
    if not graphs:
        raise CommandError(f"split {split!r} is empty")
    report = {"split": split}
    if args.run:
        a = _evaluate_run(args.run, dataset, split, args.which, out)
        report["run"] = {"path": args.run, "scores": a.scores, "mean": a.mean, "std": a.std, "n": a.n}
        print(f"{args.run} {split}_f1 {a}")
        if args.compare:
            b = _evaluate_run(args.compare, dataset, split, args.which, out)
            report["compare"] = {"path": args.compare, "scores": b.scores, "mean": b.mean, "std": b.std, "n": b.n}
            print(f"{args.compare} {split}_f1 {b}")
            if a.n >= 2 and b.n >= 2:
                cmp = compare_runs(a.scores, b.scores)
                report["comparison"] = {"test": cmp.test, "p_value": cmp.p_value, "cohens_d": cmp.cohens_d}
                print(f"comparison ({cmp.test}): p={cmp.p_value:.4g} cohens_d={cmp.cohens_d:.3f}")
            else:
                print("comparison skipped: each run needs at least two seeds")
    else:
        ckpt_path = _require(cfg, "checkpoint", "--checkpoint")
        model = model_from_checkpoint(load_checkpoint(ckpt_path))
        score_file = out / f"scores_{split}.tsv" if out is not None else None
        f1 = evaluate_split(model, graphs, dataset.target_vocab, score_file)
        report["checkpoint"] = str(ckpt_path)
        report["f1"] = f1
        print(f"{split}_f1={f1:.4f} n={len(graphs)}")
    if out is not None:
        (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


def cmd_predict(cfg, args):
    dataset = load_dataset(_require(cfg, "dataset", "--dataset"))
    model = model_from_checkpoint(load_checkpoint(_require(cfg, "checkpoint", "--checkpoint")))
    text = Path(args.source).read_text(encoding="utf-8")
    funcs = list(extract_functions(text))
    if args.function:
        funcs = [f for f in funcs if f[0].split(".")[-1] == args.function or f[0] == args.function]
    if not funcs:
        raise CommandError(f"no matching function definition in {args.source}")
    names = []
    for qualname, lineno, seg in funcs:
        try:
            sg = build_source_graph(seg, provenance=f"{args.source}::{qualname}:{lineno}")
        except RejectedExample as exc:
            raise CommandError(f"{args.source}::{qualname}: {exc}") from exc
        g = encode_graph(sg, dataset.attr_vocab, dataset.type_vocab, dataset.depth_cap)
        ids = model.predict([g])[0]
        name = "_".join(dataset.target_vocab.decode_all(ids))
        names.append(name)
        if len(funcs) > 1:
            print(f"{qualname}\t{name}")
        else:
            print(name)
    return names


def cmd_gradcheck(cfg, args):
    from .diagnostics import GRADCHECK_TOLERANCE, model_gradcheck

    if args.dropout > 0.0:
        raise CommandError(
            f"gradcheck refuses to run with dropout={args.dropout}: dropout makes the loss random, "
            "so finite differences cannot be compared with the tape gradient"
        )
    ok = True
    for decoder in ("linear", "lstm"):
        report = model_gradcheck(decoder, seed=args.seed, corrupt=args.corrupt_grad)
        for name, err in report.errors.items():
            print(f"{decoder:6s} {name:45s} {err:.3e}")
        status = "PASS" if report.passed else "FAIL"
        print(f"{decoder:6s} max_rel_error={report.max_error:.3e} tol={GRADCHECK_TOLERANCE:g} {status}")
        ok = ok and report.passed
    return ok


def main(argv=None):
    level = os.environ.get("MLAP2SEQ_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = cfgmod.resolve(args.config, _overrides(args))
    except (ValueError, FileNotFoundError) as exc:
        parser.error(str(exc))  # usage error, exit status 2
    try:
        if args.command == "preprocess":
            cmd_preprocess(cfg)
        elif args.command == "train":
            cmd_train(cfg, resume=args.resume)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args)
        elif args.command == "predict":
            cmd_predict(cfg, args)
        elif args.command == "gradcheck":
            if not cmd_gradcheck(cfg, args):
                return 1
    except (CommandError, DatasetFormatError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"mlap2seq {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
