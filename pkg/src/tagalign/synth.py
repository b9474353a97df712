"""Seeded synthetic corpus with alignment checkable by construction.

Every tag owns an orthonormal latent direction in feature space and a
two-character word. An item samples a sorted tag subset; its frames are
noisy copies of the directions of its VISIBLE tags (the first half of
the sorted subset, rounded up, cycled across frames), and its title and
captions interleave all of its tag words with filler characters. The
remaining tags exist only as annotations, the way real tags name things
the sampled frames never show. Tag-aware models therefore hold
information that frames alone do not carry, so both retrieval and the
tag ablation have ground truth built in: with zero noise, items sharing
no tags have orthogonal mean features while items with identical tag
sets coincide.

By default every item draws a tag subset unseen so far, which makes the
title-to-video map injective and retrieval ground truth unambiguous.
Setting ``distinct_tag_sets=False`` draws subsets independently instead;
repeated sets then put an explicit ceiling on retrieval accuracy, which
is useful for studying ambiguity but not for grading a trained model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DatasetRecord, save_dataset, write_features
from .errors import InputError
from .textproc import Lexicon, Vocabulary

CHAR_BASE = 0x4E00  # contiguous CJK block keeps synthetic text Chinese-like


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the generator; every field is part of the seed."""

    seed: int = 7
    items: int = 200
    tag_universe: int = 12
    tags_per_item: int = 4
    frames_per_item: int = 8
    feature_dim: int = 16
    noise: float = 0.2
    filler_chars: int = 24
    captions_per_item: int = 2
    title_filler: tuple[int, int] = (2, 5)
    caption_filler: tuple[int, int] = (6, 10)
    distinct_tag_sets: bool = True

    def __post_init__(self):
        if self.items < 1:
            raise InputError("items must be >= 1")
        if not 1 <= self.tags_per_item <= self.tag_universe:
            raise InputError(
                f"tags_per_item {self.tags_per_item} outside "
                f"[1, {self.tag_universe}]"
            )
        if self.distinct_tag_sets:
            combos = math.comb(self.tag_universe, self.tags_per_item)
            if combos < self.items:
                raise InputError(
                    f"only {combos} distinct tag sets available for "
                    f"{self.items} items; grow the universe or set "
                    f"distinct_tag_sets=False"
                )
        if self.frames_per_item < 1:
            raise InputError("frames_per_item must be >= 1")
        if not 0.0 <= self.noise <= 1.0:
            raise InputError(f"noise {self.noise} outside [0, 1]")
        if self.feature_dim < 1:
            raise InputError("feature_dim must be >= 1")
        if self.captions_per_item < 1:
            raise InputError("captions_per_item must be >= 1")


def _char(i):
    return chr(CHAR_BASE + i)


def tag_words(config):
    """The two-character word owned by each tag id."""
    return [_char(2 * t) + _char(2 * t + 1) for t in range(config.tag_universe)]


def _filler_pool(config):
    base = 2 * config.tag_universe
    return [_char(base + i) for i in range(config.filler_chars)]


def _latent_directions(config, rng):
    raw = rng.normal(0.0, 1.0, (config.feature_dim, config.feature_dim))
    q, _ = np.linalg.qr(raw)
    if config.tag_universe <= config.feature_dim:
        return q[:, :config.tag_universe].T
    # more tags than dimensions: fall back to random unit directions
    extra = rng.normal(0.0, 1.0, (config.tag_universe, config.feature_dim))
    extra /= np.linalg.norm(extra, axis=1, keepdims=True)
    out = extra
    out[:config.feature_dim] = q.T
    return out


def _compose_text(rng, words, fillers, filler_range):
    lo, hi = filler_range
    n_fill = int(rng.integers(lo, hi + 1))
    picks = [fillers[int(i)] for i in rng.integers(0, len(fillers), n_fill)]
    parts = list(words) + picks
    rng.shuffle(parts)
    return "".join(parts)


def synth_generate(config: SynthConfig, out_dir, holdout=0):
    """Write a synthetic corpus under ``out_dir``.

    Produces dataset.jsonl (and holdout.jsonl when ``holdout`` > 0, cut
    from the tail), a features/ directory of CRTF files, vocab.txt, and
    lexicon.txt. Identical config and seed give byte-identical output.

    Returns a dict of the written paths.
    """
    if not 0 <= holdout < config.items:
        raise InputError(
            f"holdout {holdout} outside [0, {config.items - 1}]"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    feature_dir = out_dir / "features"
    feature_dir.mkdir(exist_ok=True)
    rng = np.random.default_rng(config.seed)
    directions = _latent_directions(config, rng)
    words = tag_words(config)
    fillers = _filler_pool(config)
    vocab = Vocabulary.from_characters(
        [c for w in words for c in w] + fillers
    )
    lexicon = Lexicon.from_words(words)
    records = []
    seen_sets = set()
    for i in range(config.items):
        while True:
            tag_idx = np.sort(rng.choice(config.tag_universe,
                                         config.tags_per_item, replace=False))
            key = tuple(int(t) for t in tag_idx)
            if not config.distinct_tag_sets or key not in seen_sets:
                break
        seen_sets.add(key)
        visible = (tag_idx.size + 1) // 2
        frames = np.empty((config.frames_per_item, config.feature_dim))
        for j in range(config.frames_per_item):
            base = directions[tag_idx[j % visible]]
            jitter = rng.normal(0.0, 1.0, config.feature_dim)
            jitter /= np.sqrt(config.feature_dim)
            frames[j] = base + config.noise * jitter
        video_id = f"v{i:05d}"
        feature_file = f"features/{video_id}.crtf"
        write_features(out_dir / feature_file, frames)
        item_words = [words[t] for t in tag_idx]
        title = _compose_text(rng, item_words, fillers, config.title_filler)
        captions = [
            _compose_text(rng, item_words, fillers, config.caption_filler)
            for _ in range(config.captions_per_item)
        ]
        records.append(DatasetRecord(
            video_id=video_id,
            feature_file=feature_file,
            category=f"cat{int(tag_idx[0]):02d}",
            tags=item_words,
            title=title,
            captions=captions,
        ))
    paths = {
        "dataset": out_dir / "dataset.jsonl",
        "vocab": out_dir / "vocab.txt",
        "lexicon": out_dir / "lexicon.txt",
        "features": feature_dir,
    }
    main = records[:config.items - holdout] if holdout else records
    save_dataset(paths["dataset"], main)
    if holdout:
        paths["holdout"] = out_dir / "holdout.jsonl"
        save_dataset(paths["holdout"], records[config.items - holdout:])
    vocab.save(paths["vocab"])
    lexicon.save(paths["lexicon"])
    return paths
