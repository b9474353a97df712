"""Two-stream video/title matching scorer and threshold filtering.

The video tower encodes each (subsampled) frame independently and
average-pools over time; the text tower is a CLS-pooled bidirectional
encoder. Both project into a shared space and L2-normalize, so the
match score is a cosine in [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InputError
from .layers import Linear, ParamDict, TransformerStack, key_padding_mask
from .model import ModelConfig, info_nce
from .optim import AdamW
from .textproc import CLS_ID, PAD_ID

POOLED_FRAMES = 8


def subsample_indices(n_frames, target=POOLED_FRAMES):
    """Uniform-stride frame subsample: floor(i * n / target) for i < target."""
    if n_frames < 1:
        raise InputError("empty video: a clip needs at least one frame")
    if n_frames <= target:
        return np.arange(n_frames)
    return (np.arange(target) * n_frames) // target


class TwoStreamModel:
    """Separate video and title towers meeting in a shared cosine space."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        p = ParamDict()
        d = config.d_h
        self.frame_proj = Linear(p, "vid.proj", rng, config.d_v, d)
        self.vid = TransformerStack(p, "vid", rng, config.encoder_layers,
                                    d, config.attention_heads)
        self.vid_head = Linear(p, "vid.head", rng, d, config.d_s)
        self.tok = p.add("txt.tokens",
                         rng.normal(0.0, 0.02, (config.vocab_size, d)))
        self.text_pos = p.add("txt.pos",
                              rng.normal(0.0, 0.02, (config.max_text_len + 1, d)))
        self.txt = TransformerStack(p, "txt", rng, config.encoder_layers,
                                    d, config.attention_heads)
        self.txt_head = Linear(p, "txt.head", rng, d, config.d_s)
        self.tau = p.add("match.tau", np.asarray(config.tau_init))
        self.params = p

    def state_dict(self):
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_state_dict(self, arrays):
        missing = sorted(set(self.params) - set(arrays))
        unexpected = sorted(set(arrays) - set(self.params))
        if missing or unexpected:
            raise InputError(
                f"parameter name mismatch: missing {missing}, "
                f"unexpected {unexpected}"
            )
        for name, arr in arrays.items():
            self.params[name].data = np.asarray(arr, dtype=np.float64).copy()

    def clamp_tau(self, floor=1e-3):
        self.tau.data = np.maximum(self.tau.data, floor)

    def encode_video_batch(self, frames) -> Tensor:
        """Unit-norm (B, d_s) video embeddings.

        Frames are encoded independently (attention never crosses the
        time axis) and mean-pooled, so frame order cannot matter and a
        clip of identical frames encodes like a single frame.
        """
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 3:
            raise InputError(f"frame batch must be 3-d, got {frames.shape}")
        if not np.isfinite(frames).all():
            raise InputError("frame features contain non-finite values")
        b, n, d_v = frames.shape
        if d_v != self.config.d_v:
            raise InputError(
                f"frame features are {d_v}-wide, model expects {self.config.d_v}"
            )
        idx = subsample_indices(n)
        k = idx.size
        x = self.frame_proj(Tensor(frames[:, idx]))
        per_frame = self.vid(x.reshape((b * k, 1, self.config.d_h)))
        pooled = per_frame.reshape((b, k, self.config.d_h)).mean(axis=1)
        return ad.l2_normalize(self.vid_head(pooled))

    def encode_title_batch(self, token_lists) -> Tensor:
        """Unit-norm (B, d_s) title embeddings via the CLS position."""
        if not token_lists:
            raise InputError("text batch is empty")
        lengths = []
        for ids in token_lists:
            if not 1 <= len(ids) <= self.config.max_text_len:
                raise InputError(
                    f"title length {len(ids)} outside "
                    f"[1, {self.config.max_text_len}]"
                )
            lengths.append(len(ids))
        b = len(token_lists)
        l_max = max(lengths)
        ids = np.full((b, l_max + 1), PAD_ID, dtype=np.int64)
        ids[:, 0] = CLS_ID
        for i, toks in enumerate(token_lists):
            ids[i, 1:1 + len(toks)] = toks
        emb = ad.embedding(self.tok, ids) + self.text_pos[:l_max + 1]
        valid = np.arange(l_max + 1)[None, :] <= np.asarray(lengths)[:, None]
        out = self.txt(emb, key_padding_mask(valid))
        return ad.l2_normalize(self.txt_head(out[:, 0, :]))

    def encode_video(self, frames):
        with ad.no_grad():
            return self.encode_video_batch(np.asarray(frames)[None]).data[0]

    def encode_title(self, tokens):
        with ad.no_grad():
            return self.encode_title_batch([list(tokens)]).data[0]

    def score_pairs(self, frames_list, token_lists, chunk=64):
        """Cosine per (video, title) pair, batched for throughput."""
        if len(frames_list) != len(token_lists):
            raise InputError("score_pairs needs one title per video")
        scores = []
        with ad.no_grad():
            for lo in range(0, len(frames_list), chunk):
                fr = frames_list[lo:lo + chunk]
                counts = {f.shape[0] for f in fr}
                if len(counts) == 1:
                    u = self.encode_video_batch(np.stack(fr)).data
                else:
                    u = np.stack([self.encode_video(f) for f in fr])
                v = self.encode_title_batch(token_lists[lo:lo + chunk]).data
                scores.extend((u * v).sum(axis=1).tolist())
        return np.asarray(scores)


def match_score(video_vec, title_vec):
    """Dot product of two unit vectors; symmetric by construction."""
    v = np.asarray(video_vec, dtype=np.float64)
    t = np.asarray(title_vec, dtype=np.float64)
    if v.shape != t.shape or v.ndim != 1:
        raise InputError(f"match_score needs matching vectors, got "
                         f"{v.shape} and {t.shape}")
    return float(np.dot(v, t))


@dataclass(frozen=True)
class ScoredPair:
    """One (video, title) pair with its match score and keep decision."""

    video_id: str
    title: str
    score: float
    kept: bool


def filter_dataset(items, model, threshold=0.3):
    """Partition ``items`` by match score; order is preserved.

    Args:
        items: iterable of (video_id, frames, title_text, title_token_ids).
        model: anything exposing ``score_pairs(frames_list, token_lists)``.
        threshold: boundary in [-1, 1]; pairs scoring exactly at the
            threshold are kept, only strictly lower scores are removed.

    Returns:
        (kept, removed) lists of ScoredPair covering every input once.
    """
    if not -1.0 <= threshold <= 1.0:
        raise InputError(f"threshold {threshold} outside [-1, 1]")
    items = list(items)
    scores = model.score_pairs([it[1] for it in items],
                               [it[3] for it in items])
    if len(scores) != len(items):
        raise InputError("scorer returned a mismatched number of scores")
    kept, removed = [], []
    for (video_id, _, title, _), score in zip(items, scores):
        score = float(score)
        keep = not (score < threshold)
        pair = ScoredPair(video_id=video_id, title=title, score=score,
                          kept=keep)
        (kept if keep else removed).append(pair)
    return kept, removed


def train_two_stream(pairs, config: ModelConfig, epochs, lr=1e-3,
                     batch_size=8, weight_decay=0.02, seed=0):
    """Fit a scorer with symmetric in-batch contrastive learning.

    ``pairs`` is a list of (frames, title_token_ids); at least two are
    required so every batch has a negative. Returns the trained model
    together with the per-epoch loss trace.
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise InputError("contrastive training needs at least 2 pairs")
    if epochs < 0:
        raise InputError("epochs must be >= 0")
    model = TwoStreamModel(config, seed=seed)
    opt = AdamW(model.params, weight_decay=weight_decay)
    rng = np.random.default_rng(seed)
    trace = []
    for _ in range(epochs):
        order = rng.permutation(len(pairs))
        total = 0.0
        batches = 0
        for lo in range(0, len(order), batch_size):
            take = order[lo:lo + batch_size]
            if take.size < 2:
                continue
            frames = np.stack([pairs[i][0] for i in take])
            tokens = [pairs[i][1] for i in take]
            opt.zero_grad()
            u = model.encode_video_batch(frames)
            v = model.encode_title_batch(tokens)
            loss = info_nce(u @ v.transpose((1, 0)), model.tau)
            loss.backward()
            opt.step(lr)
            model.clamp_tau()
            total += loss.item()
            batches += 1
        trace.append(total / max(batches, 1))
    return model, trace
