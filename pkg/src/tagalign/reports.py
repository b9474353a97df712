"""Report assembly. Every text or JSON artifact the command line writes
goes through here, so the protocol header lands on all of them.

Text reports are ``key = value`` lines: the protocol block first, then
whatever rows the caller provides. x100-scaled metric rows render with
one decimal; JSON reports keep full precision under a ``protocol`` key
plus the caller's payload.
"""

from __future__ import annotations

import json
from collections import Counter
from pathlib import Path

import numpy as np

from .metrics import RECALL_KS, evaluate_split
from .protocol import BEAM_SIZE, header_dict, header_lines
from .textproc import detokenize, segment
from .train import encode_corpus, prepare_items


def format_value(value, one_decimal=False):
    if one_decimal:
        return f"{float(value):.1f}"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_text_report(path, rows):
    """Write protocol header plus (key, value, one_decimal) rows."""
    lines = list(header_lines())
    for key, value, one_decimal in rows:
        lines.append(f"{key} = {format_value(value, one_decimal)}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_json_report(path, payload):
    blob = {"protocol": header_dict()}
    blob.update(payload)
    path = Path(path)
    path.write_text(
        json.dumps(blob, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return path


def write_jsonl(path, rows):
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    return path


# -- evaluation ----------------------------------------------------------------


def run_evaluation(model, records, features, vocab, lexicon,
                   beam_size=BEAM_SIZE, ks=RECALL_KS):
    """Retrieval plus generation scoring of a record set.

    Titles act as the retrieval queries; each video's decoded text is
    scored against its title and against its captions (falling back to
    the title when a record carries no captions, which is flagged).

    Returns ``(report, decoded)`` where decoded holds one
    ``{"video_id", "text"}`` row per record.
    """
    items = prepare_items(records, features, vocab,
                          model.config.max_text_len)
    f_cls, w_cls = encode_corpus(model, items)
    sim = model.similarity_matrix(f_cls, w_cls)
    hyps = []
    decoded = []
    for rec, item in zip(records, items):
        ids = model.decode_item(item.frames, rec.tags, vocab,
                                beam_size=beam_size)
        text = detokenize(ids, vocab)
        hyps.append(segment(text, lexicon))
        decoded.append({"video_id": rec.video_id, "text": text})
    title_refs = [[segment(rec.title, lexicon)] for rec in records]
    caption_refs = []
    missing = 0
    for rec in records:
        refs = [segment(cap, lexicon) for cap in rec.captions]
        if not refs:
            refs = [segment(rec.title, lexicon)]
            missing += 1
        caption_refs.append(refs)
    report = evaluate_split(hyps, title_refs, caption_refs, sim,
                            list(range(len(records))), ks)
    if missing:
        report.flags.append(
            f"{missing} items lack captions; title used as caption reference"
        )
    return report, decoded


# -- corpus statistics -----------------------------------------------------------


def corpus_stats(records, features=None):
    """Summary rows plus the raw distributions figures are drawn from."""
    title_lengths = [len(rec.title) for rec in records]
    caption_lengths = [len(cap) for rec in records for cap in rec.captions]
    tag_counts = Counter(tag for rec in records for tag in rec.tags)
    rows = [
        ("stats.items", len(records), False),
        ("stats.captions", sum(len(rec.captions) for rec in records), False),
        ("stats.distinct_tags", len(tag_counts), False),
        ("stats.mean_tags_per_item",
         float(np.mean([len(rec.tags) for rec in records])), False),
        ("stats.mean_title_chars", float(np.mean(title_lengths)), False),
        ("stats.mean_caption_chars",
         float(np.mean(caption_lengths)) if caption_lengths else 0.0, False),
    ]
    extras = {
        "title_lengths": title_lengths,
        "caption_lengths": caption_lengths,
        "tag_counts": tag_counts,
    }
    if features is not None:
        frame_counts = [features[rec.video_id].shape[0] for rec in records]
        rows.append(("stats.mean_frames", float(np.mean(frame_counts)), False))
        rows.append(("stats.feature_dim",
                     int(features[records[0].video_id].shape[1]), False))
        extras["frame_counts"] = frame_counts
    return rows, extras


def filter_rows(threshold, kept, removed):
    """Summary rows for a filtering run over scored pairs."""
    total = len(kept) + len(removed)
    return [
        ("filter.threshold", float(threshold), False),
        ("filter.scored", total, False),
        ("filter.kept", len(kept), False),
        ("filter.removed", len(removed), False),
        ("filter.kept_fraction",
         float(len(kept) / total) if total else 0.0, False),
    ]
