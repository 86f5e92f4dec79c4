"""Command-line surface.

Subcommands:

    train       fit a model, write checkpoint.bin / history.csv / metrics.json
    eval        print a metrics report for a checkpoint on a dataset
    predict     write per-instance probabilities and doc attention as JSONL
    gradcheck   run the finite-difference suites (nonzero exit on failure)
    synth-data  emit the deterministic synthetic keyword corpus

Flag precedence: explicit flags > --config file entries > defaults.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, TrainConfig, parse_config_file, resolve_config
from .data import DatasetError, instance_to_json, load_dataset, make_synthetic, write_dataset
from .gradcheck import run_suite
from .metrics import MetricsReport
from .model import (
    IngestError,
    ModelParams,
    build_vocab,
    collect_side_ids,
    make_bank,
    prepare_instance,
)
from .rng import RngState
from .textgraph import TextGraphError, load_embeddings, random_embeddings
from .train import TrainingError, evaluate, history_to_csv, k_folds, predict
from .train import stratified_split, train
from .rng import stream


class CliError(Exception):
    pass


def _add_config_flags(parser):
    for field in dataclasses.fields(TrainConfig):
        flag = "--" + field.name.replace("_", "-")
        kind = type(field.default)
        if kind is bool:
            parser.add_argument(flag, dest=field.name, default=None,
                                action=argparse.BooleanOptionalAction)
        else:
            parser.add_argument(flag, dest=field.name, type=kind, default=None)


def _flag_values(args) -> dict:
    out = {}
    for field in dataclasses.fields(TrainConfig):
        value = getattr(args, field.name, None)
        if value is not None:
            out[field.name] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="getral", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--embeddings", default=None,
                         help="text embedding file; omitted -> random table of --embed-dim")
    p_train.add_argument("--out-dir", required=True)
    p_train.add_argument("--config", default=None, help="key = value config file")
    p_train.add_argument("--folds", type=int, default=None,
                         help="k-fold cross validation instead of a single split")
    p_train.add_argument("--valid-data", default=None,
                         help="explicit validation JSONL (otherwise a seeded stratified split)")
    _add_config_flags(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)

    p_pred = sub.add_parser("predict", help="per-instance predictions")
    p_pred.add_argument("--checkpoint", required=True)
    p_pred.add_argument("--data", required=True)
    p_pred.add_argument("--out", default=None, help="output JSONL (default stdout)")

    p_gc = sub.add_parser("gradcheck", help="finite-difference verification suites")
    p_gc.add_argument("--seed", type=int, default=0)

    p_synth = sub.add_parser("synth-data", help="deterministic synthetic corpus")
    p_synth.add_argument("--seed", type=int, required=True)
    p_synth.add_argument("--n", type=int, required=True)
    p_synth.add_argument("--out", default=None, help="output JSONL (default stdout)")
    p_synth.add_argument("--vocab-size", type=int, default=50)
    p_synth.add_argument("--distractor-rate", type=float, default=0.0)
    return parser


def _prepare_all(instances, vocab, cfg, warn=True):
    prepared = []
    kept_raw = []
    for inst in instances:
        try:
            prepared.append(prepare_instance(inst, vocab, cfg))
            kept_raw.append(inst)
        except IngestError as exc:
            if warn:
                print(f"warning: skipping instance: {exc}", file=sys.stderr)
    return prepared, kept_raw


def _fit_one(train_raw, valid_raw, cfg, embeddings_path):
    """Build vocab/model from the training side only, then train."""
    rng_state = RngState(cfg.seed)
    vocab = build_vocab(train_raw)
    if embeddings_path:
        table = load_embeddings(embeddings_path, vocab, rng_state)
        cfg = cfg.replace(embed_dim=table.dim)
    else:
        table = random_embeddings(vocab, cfg.embed_dim, rng_state)
    train_prepared, train_kept = _prepare_all(train_raw, vocab, cfg)
    valid_prepared, _ = _prepare_all(valid_raw, vocab, cfg)
    if not train_prepared or not valid_prepared:
        raise CliError("no usable instances after ingestion")
    speakers, publishers = collect_side_ids(train_kept)
    params = ModelParams.build(table.matrix, speakers, publishers, cfg, rng_state)
    result = train(params, train_prepared, valid_prepared, cfg, make_bank(cfg))
    report = evaluate(result.best_params, valid_prepared, make_bank(cfg),
                      cfg.crossed_contextualization)
    return result, report, vocab, cfg


def _cmd_train(args) -> int:
    if args.folds is not None and args.valid_data is not None:
        print("error: --folds and --valid-data conflict; pick one protocol", file=sys.stderr)
        return 2
    file_values = parse_config_file(args.config) if args.config else {}
    cfg = resolve_config(file_values, _flag_values(args))
    instances = load_dataset(args.data)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.folds is not None:
        gen = stream(RngState(cfg.seed), "fold-split")
        fold_reports = []
        for i, (fold_train, fold_valid) in enumerate(k_folds(instances, args.folds, gen)):
            result, report, vocab, fold_cfg = _fit_one(fold_train, fold_valid, cfg, args.embeddings)
            save_checkpoint(out_dir / f"checkpoint_fold{i}.bin", result.best_params,
                            fold_cfg, vocab, metric=report.to_dict())
            (out_dir / f"history_fold{i}.csv").write_text(history_to_csv(result.history))
            fold_reports.append(report.to_dict())
        summary = {
            "folds": fold_reports,
            "mean": _mean_report(fold_reports),
        }
        (out_dir / "metrics.json").write_text(json.dumps(summary, indent=2) + "\n")
        print(json.dumps(summary["mean"], indent=2))
        return 0

    if args.valid_data:
        train_raw = instances
        valid_raw = load_dataset(args.valid_data)
    else:
        gen = stream(RngState(cfg.seed), "train-valid-split")
        train_raw, valid_raw = stratified_split(instances, cfg.valid_fraction, gen)
    result, report, vocab, cfg = _fit_one(train_raw, valid_raw, cfg, args.embeddings)
    save_checkpoint(out_dir / "checkpoint.bin", result.best_params, cfg, vocab,
                    metric=report.to_dict())
    with open(out_dir / "history.csv", "w", encoding="utf-8", newline="\n") as handle:
        handle.write(history_to_csv(result.history))
    (out_dir / "metrics.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(f"best epoch {result.best_epoch}: valid F1-macro {result.best_f1_macro:.4f}")
    return 0


def _mean_report(reports: list[dict]) -> dict:
    mean = {}
    for key in reports[0]:
        if key == "confusion":
            mean[key] = {
                c: sum(r[key][c] for r in reports) for c in ("tp", "fp", "fn", "tn")
            }
        else:
            mean[key] = sum(r[key] for r in reports) / len(reports)
    return mean


def _load_for_inference(args):
    loaded = load_checkpoint(args.checkpoint)
    instances = load_dataset(args.data)
    prepared, _ = _prepare_all(instances, loaded.vocab, loaded.config)
    if not prepared:
        raise CliError("no usable instances after ingestion")
    return loaded, prepared


def _cmd_eval(args) -> int:
    loaded, prepared = _load_for_inference(args)
    report = evaluate(loaded.params, prepared, make_bank(loaded.config),
                      loaded.config.crossed_contextualization)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def _cmd_predict(args) -> int:
    loaded, prepared = _load_for_inference(args)
    rows = predict(loaded.params, prepared, make_bank(loaded.config),
                   loaded.config.crossed_contextualization)
    lines = "".join(json.dumps(row) + "\n" for row in rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(lines)
    else:
        sys.stdout.write(lines)
    return 0


def _cmd_gradcheck(args) -> int:
    return 0 if run_suite(seed=args.seed) else 1


def _cmd_synth(args) -> int:
    instances = make_synthetic(args.n, args.seed, vocab_size=args.vocab_size,
                               distractor_rate=args.distractor_rate)
    if args.out:
        write_dataset(instances, args.out)
    else:
        for inst in instances:
            sys.stdout.write(instance_to_json(inst) + "\n")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "gradcheck": _cmd_gradcheck,
    "synth-data": _cmd_synth,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (CliError, ConfigError, DatasetError, CheckpointError,
            TextGraphError, TrainingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
