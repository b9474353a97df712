"""Training harness: run configuration, the two-stage trainer, corpus
encoding for retrieval, and checkpoint metadata.

A run is described by a flat ``key = value`` config. Training happens
in two stages over the same records: a pretraining pass that aligns
each video with its title, then a finetuning pass that additionally
treats every caption as its own (video, text) pair. Both stages
optimize the summed alignment and generation objectives; the
``no_pretrain`` variant simply skips the first stage.
"""

from __future__ import annotations

import ast
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError, InputError, NumericError
from .metrics import recall_at_k
from .model import VARIANTS, ModelConfig, VideoTextModel, ablate
from .optim import AdamW, WarmupCosineSchedule, lr_at
from .scorer import TwoStreamModel
from .textproc import BOS_ID, EOS_ID, PAD_ID, tokenize

FUSION_FORMAT = "tagalign.fusion.v1"
SCORER_FORMAT = "tagalign.scorer.v1"


@dataclass(frozen=True)
class RunConfig:
    """Flat training-run description, one key per knob.

    The learning-rate anchors default to the long-schedule values used
    for full-scale runs; desk-scale experiments override ``peak_lr``
    (and usually the epoch counts) in their config files.
    """

    seed: int = 0
    variant: str = "full"
    d_v: int = 16
    d_h: int = 32
    d_s: int = 16
    encoder_layers: int = 2
    decoder_layers: int = 2
    attention_heads: int = 4
    max_text_len: int = 32
    max_frames: int = 16
    tau_init: float = 0.07
    batch_size: int = 8
    pretrain_epochs: int = 10
    finetune_epochs: int = 20
    warmup_epochs: float = 10.0
    peak_lr: float = 1e-5
    final_lr: float = 1e-6
    weight_decay: float = 0.02

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InputError(
                f"unknown variant {self.variant!r}, expected one of {VARIANTS}"
            )
        if self.batch_size < 1:
            raise InputError("batch_size must be >= 1")
        if self.pretrain_epochs < 0 or self.finetune_epochs < 0:
            raise InputError("epoch counts cannot be negative")
        if self.warmup_epochs < 0:
            raise InputError("warmup_epochs cannot be negative")
        if self.peak_lr <= 0 or self.final_lr < 0:
            raise InputError("learning rates must be positive")
        if self.weight_decay < 0:
            raise InputError("weight_decay cannot be negative")


_RUN_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name, type_name, value, where):
    try:
        if type_name == "int":
            return int(value)
        if type_name == "float":
            return float(value)
        if type_name == "bool":
            lowered = value.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(value)
        return value
    except ValueError:
        raise ConfigError(
            f"{where}: cannot parse {value!r} as {type_name} for key {name!r}"
        ) from None


def parse_run_config(text, source="<config>") -> RunConfig:
    """Parse ``key = value`` lines; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not sep or not key or not value:
            raise ConfigError(
                f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}"
            )
        if key not in _RUN_FIELDS:
            raise ConfigError(
                f"{source}:{lineno}: unknown key {key!r}; known keys: "
                + ", ".join(sorted(_RUN_FIELDS))
            )
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, _RUN_FIELDS[key].type, value,
                              f"{source}:{lineno}")
    try:
        return RunConfig(**values)
    except InputError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_run_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return parse_run_config(text, source=str(path))


def run_config_rows(run: RunConfig):
    """The run as (key, value, one_decimal) rows for report rendering."""
    return [(f"run.{f.name}", getattr(run, f.name), False)
            for f in dataclasses.fields(RunConfig)]


def run_config_dict(run: RunConfig):
    return {f.name: getattr(run, f.name) for f in dataclasses.fields(RunConfig)}


def model_config_for(run: RunConfig, vocab_size) -> ModelConfig:
    base = ModelConfig(
        vocab_size=vocab_size, d_v=run.d_v, d_h=run.d_h, d_s=run.d_s,
        encoder_layers=run.encoder_layers, decoder_layers=run.decoder_layers,
        attention_heads=run.attention_heads, max_text_len=run.max_text_len,
        max_frames=run.max_frames, tau_init=run.tau_init,
    )
    return ablate(base, run.variant)


# -- corpus preparation ------------------------------------------------------


@dataclass
class PreparedItem:
    """One video with pre-tokenized texts, ready for batching."""

    video_id: str
    frames: np.ndarray
    tag_char_ids: list[tuple[int, ...]]
    title_ids: list[int]
    caption_ids: list[list[int]] = field(default_factory=list)


def prepare_items(records, features, vocab, max_text_len):
    """Tokenize records against ``vocab``, clamping to ``max_text_len``."""
    items = []
    for rec in records:
        if rec.video_id not in features:
            raise DataError(f"no features loaded for video {rec.video_id!r}")
        caption_ids = []
        for cap in rec.captions:
            ids = tokenize(cap, vocab)[:max_text_len]
            if not ids:
                raise DataError(f"video {rec.video_id!r} has an empty caption")
            caption_ids.append(ids)
        items.append(PreparedItem(
            video_id=rec.video_id,
            frames=features[rec.video_id],
            tag_char_ids=[tuple(tokenize(t, vocab)) for t in rec.tags],
            title_ids=tokenize(rec.title, vocab)[:max_text_len],
            caption_ids=caption_ids,
        ))
    return items


def _batch_inputs(items, batch):
    """Pad one (item_idx, token_ids) batch into model-ready arrays."""
    idxs = [i for i, _ in batch]
    d_v = items[idxs[0]].frames.shape[1]
    n_max = max(items[i].frames.shape[0] for i in idxs)
    frames = np.zeros((len(idxs), n_max, d_v))
    counts = np.empty(len(idxs), dtype=np.int64)
    tag_ids = []
    for row, i in enumerate(idxs):
        f = items[i].frames
        frames[row, :f.shape[0]] = f
        counts[row] = f.shape[0]
        tag_ids.append(items[i].tag_char_ids)
    token_lists = [ids for _, ids in batch]
    width = max(len(ids) for ids in token_lists) + 2
    targets = np.full((len(idxs), width), PAD_ID, dtype=np.int64)
    for row, ids in enumerate(token_lists):
        targets[row, 0] = BOS_ID
        targets[row, 1:1 + len(ids)] = ids
        targets[row, 1 + len(ids)] = EOS_ID
    return frames, counts, tag_ids, token_lists, targets


def encode_corpus(model, items, batch_size=32):
    """Encode every item's video and title, without gradients.

    Returns ``(f_cls, w_cls)`` arrays of shape (items, d_h): the fused
    video CLS rows and the title CLS rows, in corpus order.
    """
    f_rows = []
    w_rows = []
    with ad.no_grad():
        for start in range(0, len(items), batch_size):
            chunk = items[start:start + batch_size]
            batch = [(start + j, it.title_ids) for j, it in enumerate(chunk)]
            frames, counts, tag_ids, token_lists, _ = _batch_inputs(items, batch)
            out, _ = model.cross_encode_batch(frames, counts, tag_ids)
            f_rows.append(out.data[:, 0, :])
            text_out, _ = model.text_encode_batch(token_lists)
            w_rows.append(text_out.data[:, 0, :])
    return np.concatenate(f_rows, axis=0), np.concatenate(w_rows, axis=0)


def retrieval_r1(model, items):
    """Text-to-video Recall@1 with each title querying its own video."""
    f_cls, w_cls = encode_corpus(model, items)
    sim = model.similarity_matrix(f_cls, w_cls)
    return recall_at_k(sim, list(range(len(items))), 1, "t2v")


# -- the trainer ---------------------------------------------------------------


@dataclass
class TrainResult:
    model: VideoTextModel
    loss_log: list
    val_log: list


def _stage_schedule(run, epochs):
    # Warmup never eats more than a third of a stage, so short desk-scale
    # stages still get a cosine phase.
    warmup = min(run.warmup_epochs, epochs / 3.0)
    return WarmupCosineSchedule(warmup_epochs=warmup, peak_lr=run.peak_lr,
                                final_lr=run.final_lr, total_epochs=epochs)


def _run_stage(model, opt, items, samples, stage, epochs, run, rng,
               loss_log, val_log, val_items):
    if epochs == 0 or not samples:
        return
    schedule = _stage_schedule(run, epochs)
    for epoch in range(epochs):
        order = rng.permutation(len(samples))
        starts = range(0, len(samples), run.batch_size)
        n_batches = len(starts)
        epoch_losses = []
        for step, start in enumerate(starts):
            batch = [samples[i] for i in order[start:start + run.batch_size]]
            frames, counts, tag_ids, token_lists, targets = \
                _batch_inputs(items, batch)
            lr = lr_at(schedule, epoch + (step + 1) / n_batches)
            opt.zero_grad()
            out, valid = model.cross_encode_batch(frames, counts, tag_ids)
            text_out, _ = model.text_encode_batch(token_lists)
            align = model.align_loss_from_cls(out[:, 0, :], text_out[:, 0, :])
            gen = model.gen_loss_batch(out, valid, targets)
            loss = align + gen
            loss.backward()
            try:
                opt.step(lr)
            except NumericError as exc:
                raise NumericError(
                    f"{stage} stage, epoch {epoch}, step {step}: {exc}"
                ) from exc
            model.clamp_tau()
            epoch_losses.append(float(loss.data))
        loss_log.append({
            "stage": stage,
            "epoch": epoch,
            "loss": float(np.mean(epoch_losses)),
        })
        if val_items is not None:
            val_log.append({
                "stage": stage,
                "epoch": epoch,
                "t2v_r1": retrieval_r1(model, val_items),
            })


def train_fusion(records, features, vocab, run: RunConfig,
                 val_records=None) -> TrainResult:
    """Train an aligner-generator on loaded records.

    ``features`` maps video_id to its (frames, d_v) array, covering the
    validation records too when ``val_records`` is given.
    """
    config = model_config_for(run, len(vocab))
    model = VideoTextModel(config, seed=run.seed)
    items = prepare_items(records, features, vocab, config.max_text_len)
    val_items = None
    if val_records is not None:
        val_items = prepare_items(val_records, features, vocab,
                                  config.max_text_len)
    opt = AdamW(model.params, weight_decay=run.weight_decay)
    rng = np.random.default_rng(run.seed + 1)
    loss_log = []
    val_log = []
    title_samples = [(i, it.title_ids) for i, it in enumerate(items)]
    if not config.skip_pretrain:
        _run_stage(model, opt, items, title_samples, "pretrain",
                   run.pretrain_epochs, run, rng, loss_log, val_log, val_items)
    finetune_samples = list(title_samples)
    for i, it in enumerate(items):
        finetune_samples.extend((i, ids) for ids in it.caption_ids)
    _run_stage(model, opt, items, finetune_samples, "finetune",
               run.finetune_epochs, run, rng, loss_log, val_log, val_items)
    return TrainResult(model=model, loss_log=loss_log, val_log=val_log)


# -- checkpoints with metadata --------------------------------------------------


def _config_meta(config):
    meta = {}
    for f in dataclasses.fields(ModelConfig):
        meta[f"config.{f.name}"] = repr(getattr(config, f.name))
    return meta


def _config_from_meta(meta, path):
    kwargs = {}
    for f in dataclasses.fields(ModelConfig):
        key = f"config.{f.name}"
        if key not in meta:
            raise DataError(f"{path}: checkpoint is missing {key!r}")
        try:
            kwargs[f.name] = ast.literal_eval(meta[key])
        except (ValueError, SyntaxError):
            raise DataError(
                f"{path}: cannot parse {key!r} value {meta[key]!r}"
            ) from None
    try:
        return ModelConfig(**kwargs)
    except InputError as exc:
        raise DataError(f"{path}: invalid checkpoint config: {exc}") from exc


def save_fusion_checkpoint(path, model, variant, vocab_hash):
    meta = {"format": FUSION_FORMAT, "variant": variant,
            "vocab_hash": vocab_hash}
    meta.update(_config_meta(model.config))
    save_checkpoint(path, model.state_dict(), meta)


def load_fusion_checkpoint(path, vocab=None):
    """Rebuild a trained model; returns ``(model, meta)``."""
    params, meta = load_checkpoint(path)
    if meta.get("format") != FUSION_FORMAT:
        raise DataError(
            f"{path}: not an aligner-generator checkpoint "
            f"(format {meta.get('format')!r})"
        )
    config = _config_from_meta(meta, path)
    if vocab is not None and meta.get("vocab_hash") != vocab.content_hash():
        raise DataError(
            f"{path}: checkpoint was trained against a different vocabulary"
        )
    model = VideoTextModel(config, seed=0)
    model.load_state_dict(params)
    return model, meta


def save_scorer_checkpoint(path, model, vocab_hash):
    meta = {"format": SCORER_FORMAT, "vocab_hash": vocab_hash}
    meta.update(_config_meta(model.config))
    save_checkpoint(path, model.state_dict(), meta)


def load_scorer_checkpoint(path, vocab=None):
    """Rebuild a trained filtering scorer; returns ``(model, meta)``."""
    params, meta = load_checkpoint(path)
    if meta.get("format") != SCORER_FORMAT:
        raise DataError(
            f"{path}: not a filtering-scorer checkpoint "
            f"(format {meta.get('format')!r})"
        )
    config = _config_from_meta(meta, path)
    if vocab is not None and meta.get("vocab_hash") != vocab.content_hash():
        raise DataError(
            f"{path}: checkpoint was trained against a different vocabulary"
        )
    model = TwoStreamModel(config, seed=0)
    model.load_state_dict(params)
    return model, meta
