"""Command line: corpus synthesis, statistics, training, evaluation,
dataset filtering, and ad-hoc decoding.

Every report-writing path also renders its matplotlib figures next to
the text and JSON outputs. Exit codes: 0 on success, 1 for usage or
configuration problems, 2 for data problems, 3 for numeric failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from . import figures, reports
from .data import load_dataset, load_features_for, resolve_feature_path, \
    save_dataset
from .errors import DataError, InputError, NumericError, UsageError
from .model import VARIANTS, ModelConfig
from .protocol import BEAM_SIZE, FILTER_THRESHOLD
from .scorer import filter_dataset, train_two_stream
from .synth import SynthConfig, synth_generate
from .textproc import EMPTY_LEXICON, Lexicon, Vocabulary, detokenize, tokenize
from .train import (
    RunConfig,
    load_fusion_checkpoint,
    load_run_config,
    load_scorer_checkpoint,
    run_config_dict,
    run_config_rows,
    save_fusion_checkpoint,
    save_scorer_checkpoint,
    train_fusion,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _default_sibling(data_path, name):
    return Path(data_path).parent / name


def _load_vocab(args):
    path = Path(args.vocab) if args.vocab else \
        _default_sibling(args.data, "vocab.txt")
    if not path.is_file():
        raise DataError(
            f"no vocabulary at {path}; generate one or pass --vocab"
        )
    return Vocabulary.load(path)


def _load_lexicon(args):
    path = Path(args.lexicon) if args.lexicon else \
        _default_sibling(args.data, "lexicon.txt")
    if args.lexicon and not path.is_file():
        raise DataError(f"no lexicon at {path}")
    return Lexicon.load(path) if path.is_file() else EMPTY_LEXICON


def _load_corpus(args):
    records = load_dataset(args.data)
    features = load_features_for(records, args.data)
    return records, features


# -- commands -------------------------------------------------------------------


def cmd_synth(args):
    try:
        config = SynthConfig(
            seed=args.seed, items=args.items, tag_universe=args.tag_universe,
            tags_per_item=args.tags_per_item, frames_per_item=args.frames,
            feature_dim=args.feature_dim, noise=args.noise,
            captions_per_item=args.captions,
        )
        paths = synth_generate(config, args.out, holdout=args.holdout)
    except InputError as exc:
        raise UsageError(str(exc)) from exc
    for name in sorted(paths):
        print(f"{name}: {paths[name]}")
    return 0


def cmd_stats(args):
    records = load_dataset(args.data, check_features=not args.skip_features)
    features = None
    if not args.skip_features:
        features = load_features_for(records, args.data)
    rows, extras = reports.corpus_stats(records, features)
    out = _out_dir(args)
    report = reports.write_text_report(out / "stats.txt", rows)
    reports.write_json_report(out / "stats.json",
                              {"stats": {key: value for key, value, _ in rows}})
    figures.length_histogram(out / "title_lengths.png",
                             extras["title_lengths"], "title length (chars)")
    if extras["caption_lengths"]:
        figures.length_histogram(out / "caption_lengths.png",
                                 extras["caption_lengths"],
                                 "caption length (chars)")
    if extras["tag_counts"]:
        figures.tag_frequency(out / "tag_frequency.png", extras["tag_counts"])
    print(f"stats report: {report}")
    return 0


def cmd_train(args):
    run = load_run_config(args.config) if args.config else RunConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.variant is not None:
        overrides["variant"] = args.variant
    if overrides:
        try:
            run = dataclasses.replace(run, **overrides)
        except InputError as exc:
            raise UsageError(str(exc)) from exc
    records, features = _load_corpus(args)
    vocab = _load_vocab(args)
    val_records = None
    if args.holdout:
        val_records = load_dataset(args.holdout)
        features.update(load_features_for(val_records, args.holdout))
    result = train_fusion(records, features, vocab, run,
                          val_records=val_records)
    out = _out_dir(args)
    checkpoint = out / "checkpoint.tack"
    save_fusion_checkpoint(checkpoint, result.model, run.variant,
                           vocab.content_hash())
    reports.write_json_report(out / "loss_log.json", {
        "run": run_config_dict(run),
        "loss_log": result.loss_log,
        "val_log": result.val_log,
    })
    rows = run_config_rows(run)
    rows.append(("train.items", len(records), False))
    rows.append(("train.parameters", result.model.parameter_count(), False))
    for stage in dict.fromkeys(row["stage"] for row in result.loss_log):
        last = [row for row in result.loss_log if row["stage"] == stage][-1]
        rows.append((f"train.final_loss.{stage}", last["loss"], False))
    if result.val_log:
        rows.append(("train.final_val_t2v_r1",
                     result.val_log[-1]["t2v_r1"], True))
        rows.append(("train.best_val_t2v_r1",
                     max(row["t2v_r1"] for row in result.val_log), True))
    report = reports.write_text_report(out / "report.txt", rows)
    if result.loss_log:
        figures.loss_curve(out / "loss_curve.png", result.loss_log)
    print(f"checkpoint: {checkpoint}")
    print(f"train report: {report}")
    return 0


def cmd_eval(args):
    if args.beam < 1:
        raise UsageError(f"beam size must be >= 1, got {args.beam}")
    records, features = _load_corpus(args)
    vocab = _load_vocab(args)
    lexicon = _load_lexicon(args)
    model, meta = load_fusion_checkpoint(args.checkpoint, vocab=vocab)
    report, decoded = reports.run_evaluation(model, records, features, vocab,
                                             lexicon, beam_size=args.beam)
    out = _out_dir(args)
    context = [
        ("eval.dataset", str(args.data), False),
        ("eval.items", len(records), False),
        ("eval.beam_size", args.beam, False),
        ("eval.variant", meta.get("variant", "unknown"), False),
    ]
    path = reports.write_text_report(out / "report.txt",
                                     context + report.key_values())
    reports.write_json_report(out / "report.json", {
        "eval": {
            "dataset": str(args.data),
            "items": len(records),
            "beam_size": args.beam,
            "variant": meta.get("variant", "unknown"),
        },
        "metrics": report.to_json_dict(),
    })
    reports.write_jsonl(out / "decoded.jsonl", decoded)
    figures.recall_bars(out / "recall.png", report)
    print(f"eval report: {path}")
    for key, value, one_decimal in report.key_values():
        print(f"{key} = {reports.format_value(value, one_decimal)}")
    return 0


def cmd_filter(args):
    if not -1.0 <= args.threshold <= 1.0:
        raise UsageError(f"threshold {args.threshold} outside [-1, 1]")
    if args.epochs < 0:
        raise UsageError(f"epochs must be >= 0, got {args.epochs}")
    records, features = _load_corpus(args)
    vocab = _load_vocab(args)
    out = _out_dir(args)
    trained = False
    if args.scorer:
        model, _ = load_scorer_checkpoint(args.scorer, vocab=vocab)
    else:
        d_v = features[records[0].video_id].shape[1]
        config = ModelConfig(vocab_size=len(vocab), d_v=d_v)
        pairs = [
            (features[rec.video_id],
             tokenize(rec.title, vocab)[:config.max_text_len])
            for rec in records
        ]
        model, _ = train_two_stream(pairs, config, epochs=args.epochs,
                                    seed=args.seed)
        trained = True
    items = [
        (rec.video_id, features[rec.video_id], rec.title,
         tokenize(rec.title, vocab)[:model.config.max_text_len])
        for rec in records
    ]
    kept, removed = filter_dataset(items, model, args.threshold)
    kept_ids = {pair.video_id for pair in kept}
    relocated = [
        dataclasses.replace(rec, feature_file=os.path.relpath(
            resolve_feature_path(args.data, rec), out))
        for rec in records
    ]
    save_dataset(out / "kept.jsonl",
                 [rec for rec in relocated if rec.video_id in kept_ids])
    save_dataset(out / "removed.jsonl",
                 [rec for rec in relocated if rec.video_id not in kept_ids])
    scored = sorted(kept + removed, key=lambda pair: pair.video_id)
    with open(out / "scores.tsv", "w", encoding="utf-8") as fh:
        fh.write("video_id\tscore\tkept\n")
        for pair in scored:
            fh.write(f"{pair.video_id}\t{pair.score!r}\t{int(pair.kept)}\n")
    rows = reports.filter_rows(args.threshold, kept, removed)
    rows.append(("filter.scorer",
                 "loaded" if args.scorer else f"trained {args.epochs} epochs",
                 False))
    report = reports.write_text_report(out / "report.txt", rows)
    reports.write_json_report(out / "report.json", {
        "filter": {key: value for key, value, _ in rows},
        "scores": [
            {"video_id": pair.video_id, "score": pair.score,
             "kept": pair.kept}
            for pair in scored
        ],
    })
    figures.score_histogram(out / "scores.png",
                            [pair.score for pair in scored],
                            threshold=args.threshold)
    if trained:
        save_scorer_checkpoint(out / "scorer.tack", model,
                               vocab.content_hash())
    print(f"filter report: {report}")
    print(f"kept {len(kept)} of {len(records)} pairs "
          f"at threshold {args.threshold}")
    return 0


def cmd_decode(args):
    if args.beam < 1:
        raise UsageError(f"beam size must be >= 1, got {args.beam}")
    records, features = _load_corpus(args)
    vocab = _load_vocab(args)
    model, _ = load_fusion_checkpoint(args.checkpoint, vocab=vocab)
    if args.video_id is not None:
        records = [rec for rec in records if rec.video_id == args.video_id]
        if not records:
            raise DataError(f"video id {args.video_id!r} not in {args.data}")
    if args.limit is not None:
        records = records[:args.limit]
    for rec in records:
        ids = model.decode_item(features[rec.video_id], rec.tags, vocab,
                                beam_size=args.beam)
        print(f"{rec.video_id}\t{detokenize(ids, vocab)}")
    return 0


# -- wiring ---------------------------------------------------------------------


def build_parser():
    parser = _Parser(
        prog="tagalign",
        description="Tag-driven video-text alignment and captioning toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=SynthConfig.seed)
    p.add_argument("--items", type=int, default=SynthConfig.items)
    p.add_argument("--tag-universe", type=int, default=SynthConfig.tag_universe)
    p.add_argument("--tags-per-item", type=int,
                   default=SynthConfig.tags_per_item)
    p.add_argument("--frames", type=int, default=SynthConfig.frames_per_item)
    p.add_argument("--feature-dim", type=int, default=SynthConfig.feature_dim)
    p.add_argument("--noise", type=float, default=SynthConfig.noise)
    p.add_argument("--captions", type=int,
                   default=SynthConfig.captions_per_item)
    p.add_argument("--holdout", type=int, default=0,
                   help="move this many tail items into holdout.jsonl")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="summarize a dataset with figures")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--skip-features", action="store_true",
                   help="do not open the referenced feature files")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train an aligner-generator")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="key = value run configuration file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--variant", choices=VARIANTS,
                   help="override the config variant")
    p.add_argument("--holdout",
                   help="JSONL records for per-epoch validation recall")
    p.add_argument("--vocab", help="vocabulary file "
                                   "(default: vocab.txt beside --data)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score retrieval and captioning")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beam", type=int, default=BEAM_SIZE)
    p.add_argument("--vocab")
    p.add_argument("--lexicon", help="word list for segmentation "
                                     "(default: lexicon.txt beside --data)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("filter", help="score pairs and split a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=FILTER_THRESHOLD)
    p.add_argument("--scorer", help="reuse a trained scorer checkpoint")
    p.add_argument("--epochs", type=int, default=5,
                   help="scorer training epochs when no --scorer is given")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("decode", help="print decoded text for videos")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--video-id")
    p.add_argument("--limit", type=int)
    p.add_argument("--beam", type=int, default=BEAM_SIZE)
    p.add_argument("--vocab")
    p.set_defaults(func=cmd_decode)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


def entrypoint(argv=None):
    try:
        return main(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, InputError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except SystemExit as exc:
        code = exc.code
        if isinstance(code, int):
            return code
        return 0 if code is None else 1


if __name__ == "__main__":
    sys.exit(entrypoint())
