#!/usr/bin/env python3
"""
Command-line tool for coarse-to-fine question answering: generate synthetic
data, train, evaluate, answer single questions, benchmark encoding speed and
print dataset statistics.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd

from src.config import RunConfig
from src.errors import C2FError, ConfigError, DataError
from src.evaluation.baselines import run_baseline
from src.evaluation.benchmark import benchmark_encoding
from src.evaluation.metrics import evaluate_model
from src.evaluation.stats import dataset_stats
from src.ingestion.jsonl_io import load_jsonl, parse_record
from src.ingestion.synthetic import POSITION_DISTRIBUTIONS, GeneratorConfig, gen_synthetic, write_splits
from src.models.coarse_to_fine import BaseModel, CoarseToFineModel
from src.nn import ops
from src.nn.checkpoint import load_checkpoint
from src.parsing.document import Limits, RawExample, prepare_example, prepare_flat_example
from src.parsing.vocab import Vocabulary, build_vocab, oov_rate
from src.training.trainer import TrainConfig, run_training

logger = logging.getLogger("c2f")

EPILOG = """
Examples:
  # Generate a synthetic corpus (train/dev/test JSONL)
  python main.py gen-data --n 1000 --seed 1 --out-dir data/synthetic

  # Train with REINFORCE, two sentences per summary, curriculum decay 0.5
  python main.py train --data-dir data/synthetic --method reinforce --k 2 --decay 0.5 --out-dir runs/rl

  # Train the flat Base model on the first 300 tokens
  python main.py train --data-dir data/synthetic --method base --out-dir runs/base

  # Evaluate the best checkpoint, or a baseline
  python main.py evaluate --run-dir runs/rl --split test --data-dir data/synthetic
  python main.py evaluate --run-dir runs/rl --split data/synthetic/test.jsonl --baseline oracle

  # Answer one question (JSONL example on stdin)
  head -1 data/synthetic/dev.jsonl | python main.py answer --run-dir runs/rl

  # Encoding throughput against Base
  python main.py benchmark --run-dir runs/rl --base-run runs/base --data data/synthetic/dev.jsonl \\
      --batch-sizes 1,16,64 --k 1,2 --out bench.csv

  # Answer-match statistics
  python main.py stats --data data/synthetic/train.jsonl
"""


class UsageError(Exception):
    """Bad command-line usage; reported with exit code 2."""


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _key_value(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Coarse-to-fine question answering over long documents",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def config_options(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="Config file (JSON or key=value lines)")
        p.add_argument("--set", dest="settings", action="append", type=_key_value, default=[],
                       metavar="KEY=VALUE", help="Override any config key (repeatable)")

    gen = sub.add_parser("gen-data", help="Generate a synthetic train/dev/test corpus")
    gen.add_argument("--n", type=int, default=1000, help="Number of examples (default: 1000)")
    gen.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    gen.add_argument("--out-dir", default="data/synthetic", help="Output directory (default: data/synthetic)")
    gen.add_argument("--min-sentences", type=int, default=10)
    gen.add_argument("--max-sentences", type=int, default=35)
    gen.add_argument("--position", choices=POSITION_DISTRIBUTIONS, default="first-heavy",
                     help="Where the evidence sentence goes (default: first-heavy)")
    gen.add_argument("--distractor-rate", type=float, default=0.0)
    gen.add_argument("--missing-rate", type=float, default=0.0,
                     help="Probability that the answer string appears nowhere")
    gen.add_argument("--natural", action="store_true", help="Question-style queries")
    config_options(gen)

    train = sub.add_parser("train", help="Train a model")
    train.add_argument("--data-dir", help="Directory with train.jsonl and dev.jsonl")
    train.add_argument("--train", help="Training JSONL (overrides --data-dir)")
    train.add_argument("--dev", help="Dev JSONL (overrides --data-dir)")
    train.add_argument("--out-dir", default="runs/latest", help="Run directory (default: runs/latest)")
    train.add_argument("--method", choices=("pipeline", "reinforce", "soft", "base"))
    train.add_argument("--k", type=int, help="Sentences per hard summary")
    train.add_argument("--decay", type=float, help="Curriculum decay r in [0.3, 1]")
    train.add_argument("--epochs", type=int)
    train.add_argument("--batch-size", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument("--seed", type=int)
    train.add_argument("--selector", choices=("bow", "chunk", "cnn"))
    train.add_argument("--title-append", action="store_true", default=None,
                       help="Append the document's first five tokens to every sentence")
    config_options(train)

    evaluate = sub.add_parser("evaluate", help="Evaluate a trained run or a baseline")
    evaluate.add_argument("--run-dir", required=True, help="Run directory written by train")
    evaluate.add_argument("--checkpoint", help="Checkpoint (default: <run-dir>/best.npz)")
    evaluate.add_argument("--split", "--data", dest="data", required=True,
                          help="Split name in --data-dir (train, dev, test) or a JSONL path")
    evaluate.add_argument("--data-dir", default="data/synthetic", help="Where split names are looked up")
    evaluate.add_argument("--baseline", choices=("none", "first", "oracle", "base"), default="none")
    evaluate.add_argument("--out", help="Write the report as JSON")
    config_options(evaluate)

    answer = sub.add_parser("answer", help="Answer one question")
    answer.add_argument("--run-dir", required=True)
    answer.add_argument("--checkpoint")
    answer.add_argument("--query", help="Query text (otherwise one JSONL example is read from stdin)")
    answer.add_argument("--document", help="Document text, split into sentences")
    config_options(answer)

    bench = sub.add_parser("benchmark", help="Time document encoding against Base")
    bench.add_argument("--run-dir", required=True, help="Hierarchical run directory")
    bench.add_argument("--base-run", help="Base run directory (default: untrained Base of the same size)")
    bench.add_argument("--data", required=True)
    bench.add_argument("--batch-sizes", type=_int_list, default=[1, 16, 64])
    bench.add_argument("--k", type=_int_list, default=[1, 2])
    bench.add_argument("--repetitions", type=int, default=5)
    bench.add_argument("--limit", type=int, default=64, help="Number of documents timed (default: 64)")
    bench.add_argument("--out", help="CSV output path")
    config_options(bench)

    stats = sub.add_parser("stats", help="Answer-match statistics of a dataset")
    stats.add_argument("--data", required=True, nargs="+")
    stats.add_argument("--out", help="CSV output path")
    config_options(stats)

    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, object]:
    flags = {
        "train.method": getattr(args, "method", None),
        "summary.k": getattr(args, "k", None) if args.command == "train" else None,
        "train.decay": getattr(args, "decay", None),
        "train.epochs": getattr(args, "epochs", None),
        "train.batch_size": getattr(args, "batch_size", None),
        "train.lr": getattr(args, "lr", None),
        "train.seed": getattr(args, "seed", None) if args.command == "train" else None,
        "selector.kind": getattr(args, "selector", None),
        "data.title_append": getattr(args, "title_append", None),
    }
    if flags["train.method"] == "soft":
        flags["summary.mode"] = "soft"
    values = {k: v for k, v in flags.items() if v is not None}
    values.update(dict(getattr(args, "settings", [])))
    return values


def _setup_logging(level: str) -> None:
    logging.basicConfig(level=getattr(logging, level), format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def load_run(run_dir: str, checkpoint: Optional[str] = None, config: Optional[RunConfig] = None):
    """
    Config, vocabulary and model of a finished run. Keys that `config` sets
    explicitly (file, environment, --set) override the saved run config.
    """
    run = Path(run_dir)
    for name in ("config.json", "vocab.json"):
        if not (run / name).exists():
            raise DataError(f"{run / name} not found; is {run_dir} a run directory?")
    saved = RunConfig.from_file(str(run / "config.json"))
    config = saved if config is None else saved.overlay(config)
    vocab = Vocabulary.load(str(run / "vocab.json"))
    model_cls = BaseModel if config["train.method"] == "base" else CoarseToFineModel
    model = model_cls.from_config(config, vocab)
    load_checkpoint(checkpoint or str(run / "best.npz"), model, expected_vocab_hash=vocab.vocab_hash())
    model.eval()
    return config, vocab, model


def split_path(split: str, data_dir: str) -> str:
    """A split name (train, dev, test) resolves inside data_dir; anything else is a path."""
    if split in ("train", "dev", "test") and not Path(split).exists():
        return str(Path(data_dir) / f"{split}.jsonl")
    return split


def _prepare(raws: Sequence[RawExample], vocab: Vocabulary, config: RunConfig):
    limits = Limits.from_config(config)
    return [prepare_example(raw, vocab, limits) for raw in raws]


def _prepare_flat(raws: Sequence[RawExample], vocab: Vocabulary, config: RunConfig):
    return [prepare_flat_example(raw, vocab, config["base.tokens"]) for raw in raws]


def cmd_gen_data(args, config: RunConfig) -> int:
    cfg = GeneratorConfig(
        num_examples=args.n,
        min_sentences=args.min_sentences,
        max_sentences=args.max_sentences,
        position=args.position,
        distractor_rate=args.distractor_rate,
        missing_evidence_rate=args.missing_rate,
        natural=args.natural,
        seed=args.seed,
    )
    splits = gen_synthetic(cfg)
    paths = write_splits(splits, args.out_dir, cfg, config_hash=config.config_hash())
    print(f"📄 Generated {args.n} examples (seed {args.seed})")
    for name, path in paths.items():
        print(f"   {name:5} {len(splits[name]):6} -> {path}")
    return 0


def cmd_train(args, config: RunConfig) -> int:
    train_path = args.train or (args.data_dir and str(Path(args.data_dir) / "train.jsonl"))
    dev_path = args.dev or (args.data_dir and str(Path(args.data_dir) / "dev.jsonl"))
    if not train_path or not dev_path:
        raise UsageError("train needs --data-dir or both --train and --dev")
    TrainConfig.from_config(config)

    train_raw, dev_raw = load_jsonl(train_path), load_jsonl(dev_path)
    vocab = build_vocab(train_raw, config["vocab.size"], config["vocab.placeholders"])
    print(f"📚 Vocabulary: {len(vocab)} ids, dev OOV rate {oov_rate(dev_raw, vocab):.2%}")

    if config["train.method"] == "base":
        train_set, dev_set = _prepare_flat(train_raw, vocab, config), _prepare_flat(dev_raw, vocab, config)
    else:
        train_set, dev_set = _prepare(train_raw, vocab, config), _prepare(dev_raw, vocab, config)

    print(f"🚀 Training {config['train.method']} on {len(train_set)} examples ({len(dev_set)} dev)")
    result = run_training(train_set, dev_set, vocab, config, args.out_dir)
    last = result.metrics[result.metrics["split"] == "dev"].iloc[-1]
    print(f"✅ Done: dev answer_acc {last['answer_acc']:.3f}, best {result.best_dev_accuracy:.3f}")
    print(f"   checkpoints: {len(result.checkpoints)} in {args.out_dir}/checkpoints, best -> {result.best_checkpoint}")
    return 0


def cmd_evaluate(args, config: RunConfig) -> int:
    run_config, vocab, model = load_run(args.run_dir, args.checkpoint, config)
    raws = load_jsonl(split_path(args.data, args.data_dir))

    if run_config["train.method"] == "base":
        if args.baseline not in ("none", "base"):
            raise UsageError(f"--baseline {args.baseline} needs a hierarchical run")
        report = run_baseline("base", vocab, flat_examples=_prepare_flat(raws, vocab, run_config), base_model=model)
    else:
        if args.baseline == "base":
            raise UsageError("--baseline base needs the run directory of a base model")
        examples = _prepare(raws, vocab, run_config)
        if args.baseline in ("first", "oracle"):
            report = run_baseline(args.baseline, vocab, model=model, examples=examples)
        else:
            cfg = TrainConfig.from_config(run_config)
            report = evaluate_model(model, examples, vocab, method=cfg.method, mode=cfg.mode, k=cfg.k)

    print(f"📊 {report.summary()}")
    if report.first_match_accuracy is not None:
        print(f"   first-match sent_acc={report.first_match_accuracy:.3f}")
    if report.mean_entropy is not None:
        print(f"   mean selection entropy={report.mean_entropy:.3f}")
    if args.out:
        payload = dict(report.as_row(), config_hash=run_config.config_hash())
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    return 0


def cmd_answer(args, config: RunConfig) -> int:
    run_config, vocab, model = load_run(args.run_dir, args.checkpoint, config)
    if args.query:
        if not args.document:
            raise UsageError("--query needs --document")
        raw = parse_record({"query": args.query, "document": args.document, "answer": "?"}, line=1)
    else:
        line = sys.stdin.readline()
        if not line.strip():
            raise UsageError("no example on stdin; pass --query and --document")
        record = json.loads(line)
        record.setdefault("answer", "?")
        raw = parse_record(record, line=1)

    if run_config["train.method"] == "base":
        prediction = model.predict(prepare_flat_example(raw, vocab, run_config["base.tokens"]), vocab)
        result = {"sentence_index": None, "probability": None, "answer": prediction.surface,
                  "log_prob": prediction.log_prob}
    else:
        cfg = TrainConfig.from_config(run_config)
        ex = prepare_example(raw, vocab, Limits.from_config(run_config))
        prediction = model.predict(ex, vocab, mode=cfg.mode, k=cfg.k)
        result = {"sentence_index": prediction.sentence_index, "probability": prediction.sentence_prob,
                  "answer": prediction.answer.surface, "log_prob": prediction.answer.log_prob}
    print(json.dumps(result))
    return 0


def cmd_benchmark(args, config: RunConfig) -> int:
    run_config, vocab, model = load_run(args.run_dir, config=config)
    if run_config["train.method"] == "base":
        raise UsageError("--run-dir must be a hierarchical run; pass the Base run as --base-run")
    if args.base_run:
        _, base_vocab, base_model = load_run(args.base_run, config=config)
        if base_vocab.vocab_hash() != vocab.vocab_hash():
            raise DataError("hierarchical and base runs use different vocabularies")
    else:
        base_model = BaseModel.from_config(run_config, vocab)
        base_model.eval()

    raws = load_jsonl(args.data)[: args.limit]
    examples = _prepare(raws, vocab, run_config)
    flat = _prepare_flat(raws, vocab, run_config)
    report = benchmark_encoding(model, base_model, examples, flat, vocab=vocab, batch_sizes=args.batch_sizes,
                                ks=args.k, repetitions=args.repetitions)

    print(f"⏱️  Encoding throughput over {len(examples)} documents ({args.repetitions} repetitions, median)")
    for row in report.table.itertuples():
        print(f"   {row.config:16} batch={row.batch_size:3} {row.docs_per_sec:10.1f} docs/s "
              f"speedup={row.speedup:5.2f}x steps/doc={row.encoder_steps_per_doc:.1f}")
    if args.out:
        report.to_csv(args.out)
        print(f"💾 Saved {args.out}")
    return 0


def cmd_stats(args, config: RunConfig) -> int:
    tables = []
    for path in args.data:
        raws = load_jsonl(path)
        vocab = build_vocab(raws, config["vocab.size"], config["vocab.placeholders"])
        tables.append(dataset_stats(raws, _prepare(raws, vocab, config), name=Path(path).stem))
    table = pd.concat(tables, ignore_index=True)
    print("📊 Answer-match statistics")
    print(table.to_string(index=False, float_format=lambda v: f"{v:.2f}"))
    if args.out:
        table.to_csv(args.out, index=False)
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "answer": cmd_answer,
    "benchmark": cmd_benchmark,
    "stats": cmd_stats,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        config = RunConfig.load(getattr(args, "config", None), overrides=_overrides(args))
    except ConfigError as e:
        parser.print_usage(sys.stderr)
        print(f"error: ConfigError: {e}", file=sys.stderr)
        return 2

    _setup_logging(config["log.level"])
    ops.set_finite_checks(config["tensor.check_finite"])
    try:
        return COMMANDS[args.command](args, config)
    except (UsageError, ConfigError) as e:
        parser.print_usage(sys.stderr)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except (C2FError, OSError, json.JSONDecodeError) as e:
        logger.debug("%s failed", args.command, exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
