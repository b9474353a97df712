"""Video-text model: tag-conditioned fusion encoder, text encoder,
contrastive alignment heads, and a soft-prompt generation decoder.

The fusion encoder runs full self-attention over a tag block
(CLS + tag vectors + SEP, no position signal, so tag order cannot
matter) concatenated with projected frame features (with temporal
position embeddings). Position 0 of the output is the fused CLS used
for retrieval; the whole output sequence doubles as the decoder's
soft prompt.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .decoding import beam_search
from .errors import InputError
from .layers import (
    Linear,
    ParamDict,
    TransformerStack,
    key_padding_mask,
    prefix_causal_mask,
)
from .textproc import BOS_ID, CLS_ID, EOS_ID, PAD_ID, RESERVED, SEP_ID, tokenize

VARIANTS = ("full", "no_tag", "no_gpt", "no_pretrain")


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions and switches for the aligner-generator.

    Defaults are sized for CPU experiments. A production-scale twin of
    this architecture would use a 768-wide hidden state with a 512-wide
    shared similarity space; nothing in the code depends on the small
    sizes chosen here.
    """

    vocab_size: int
    d_v: int = 16
    d_h: int = 32
    d_s: int = 16
    encoder_layers: int = 2
    decoder_layers: int = 2
    attention_heads: int = 4
    max_text_len: int = 32
    max_frames: int = 16
    use_tags: bool = True
    skip_pretrain: bool = False
    tau_init: float = 0.07

    def __post_init__(self):
        if self.vocab_size <= len(RESERVED):
            raise InputError(
                f"vocab_size {self.vocab_size} leaves no room after the "
                f"{len(RESERVED)} reserved ids"
            )
        for field in ("d_v", "d_h", "d_s", "encoder_layers", "decoder_layers",
                      "attention_heads", "max_text_len", "max_frames"):
            if getattr(self, field) < 1:
                raise InputError(f"{field} must be >= 1")
        if self.d_s > self.d_h:
            raise InputError(f"d_s {self.d_s} larger than hidden width {self.d_h}")
        if self.d_h % self.attention_heads:
            raise InputError(
                f"attention_heads {self.attention_heads} must divide d_h {self.d_h}"
            )
        if self.tau_init <= 0:
            raise InputError("tau_init must be positive")


def ablate(config: ModelConfig, variant: str) -> ModelConfig:
    """Return the configuration for a named ablation variant.

    ``no_tag`` drops the tag block, ``no_gpt`` swaps in a fresh
    single-layer generation stack, ``no_pretrain`` flags the training
    harness to skip the first-stage pass over weakly labeled pairs.
    """
    if variant == "full":
        return dataclasses.replace(config)
    if variant == "no_tag":
        return dataclasses.replace(config, use_tags=False)
    if variant == "no_gpt":
        return dataclasses.replace(config, decoder_layers=1)
    if variant == "no_pretrain":
        return dataclasses.replace(config, skip_pretrain=True)
    raise InputError(f"unknown variant {variant!r}, expected one of {VARIANTS}")


@dataclass
class VideoClipFeatures:
    """Frame feature matrix of shape (frames, d_v)."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise InputError(
                f"frame features must be 2-d, got shape {self.frames.shape}"
            )
        if self.frames.shape[0] < 1:
            raise InputError("empty video: a clip needs at least one frame")
        if not np.isfinite(self.frames).all():
            raise InputError("frame features contain non-finite values")


@dataclass
class TagEmbeddingSequence:
    """CLS + M tag vectors + SEP, plus the source character ids per tag."""

    tag_ids: list[tuple[int, ...]]
    embeddings: Tensor


@dataclass
class FusionEmbeddings:
    """Fusion encoder output; position 0 is the fused CLS."""

    vectors: Tensor
    tag_count: int
    frame_count: int

    @property
    def fused_cls(self) -> Tensor:
        return self.vectors[0]

    def __len__(self):
        return self.vectors.shape[0]


@dataclass
class TextEmbeddings:
    """Text encoder output; position 0 is the prepended CLS."""

    vectors: Tensor

    @property
    def text_cls(self) -> Tensor:
        return self.vectors[0]


def info_nce(scores: Tensor, tau: Tensor) -> Tensor:
    """Symmetric contrastive loss over a square in-batch score matrix.

    Row i and column i both treat entry (i, i) as the positive; the two
    cross-entropy terms are summed per pair and averaged over the batch.
    A batch of one yields exactly zero.
    """
    k = scores.shape[0]
    if scores.ndim != 2 or scores.shape != (k, k):
        raise InputError(f"score matrix must be square, got {scores.shape}")
    labels = np.arange(k)
    logits = scores / tau
    rows = ad.cross_entropy(logits, labels)
    cols = ad.cross_entropy(logits.transpose((1, 0)), labels)
    return rows + cols


class VideoTextModel:
    """Aligner-generator over frame features, tags, and character text."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        p = ParamDict()
        d = config.d_h
        self.tok = p.add("embed.tokens",
                         rng.normal(0.0, 0.02, (config.vocab_size, d)))
        self.text_pos = p.add("text.pos",
                              rng.normal(0.0, 0.02, (config.max_text_len + 1, d)))
        self.frame_proj = Linear(p, "frames.proj", rng, config.d_v, d)
        self.frame_pos = p.add("frames.pos",
                               rng.normal(0.0, 0.02, (config.max_frames, d)))
        self.type_tag = p.add("type.tag", rng.normal(0.0, 0.02, d))
        self.type_frame = p.add("type.frame", rng.normal(0.0, 0.02, d))
        self.cross = TransformerStack(p, "cross", rng, config.encoder_layers,
                                      d, config.attention_heads)
        self.text = TransformerStack(p, "text", rng, config.encoder_layers,
                                     d, config.attention_heads)
        self.phi = Linear(p, "sim.phi", rng, d, config.d_s)
        self.psi = Linear(p, "sim.psi", rng, d, config.d_s)
        self.tau = p.add("sim.tau", np.asarray(config.tau_init))
        self.dec_tok = p.add("dec.tokens",
                             rng.normal(0.0, 0.02, (config.vocab_size, d)))
        self.dec_pos = p.add("dec.pos",
                             rng.normal(0.0, 0.02, (config.max_text_len + 2, d)))
        self.dec_type_prompt = p.add("dec.type_prompt", rng.normal(0.0, 0.02, d))
        self.dec_type_text = p.add("dec.type_text", rng.normal(0.0, 0.02, d))
        self.dec = TransformerStack(p, "dec", rng, config.decoder_layers,
                                    d, config.attention_heads)
        self.out_proj = Linear(p, "dec.out", rng, d, config.vocab_size)
        self.params = p

    # -- persistence -----------------------------------------------------

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
            if arr.shape != self.params[name].data.shape:
                raise InputError(
                    f"parameter {name!r} has shape {arr.shape}, "
                    f"expected {self.params[name].data.shape}"
                )
            self.params[name].data = np.asarray(arr, dtype=np.float64).copy()

    def parameter_count(self, prefix=""):
        return sum(t.data.size for name, t in self.params.items()
                   if name.startswith(prefix))

    def clamp_tau(self, floor=1e-3):
        self.tau.data = np.maximum(self.tau.data, floor)

    # -- tag handling ------------------------------------------------------

    def tag_token_ids(self, tags, vocab):
        """Character ids per tag word; every tag needs >= 1 character."""
        out = []
        for tag in tags:
            ids = tuple(tokenize(tag, vocab))
            if not ids:
                raise InputError("a tag must contain at least one character")
            out.append(ids)
        return out

    def embed_tags(self, tags, vocab) -> TagEmbeddingSequence:
        tag_ids = self.tag_token_ids(tags, vocab)
        block, _ = self._tag_block([tag_ids])
        return TagEmbeddingSequence(tag_ids=tag_ids,
                                    embeddings=block.reshape(block.shape[1:]))

    def _tag_block(self, tag_ids_batch):
        """Assemble (B, Mmax+2, d) tag blocks and their validity mask.

        Tag slots carry no position signal; padded slots are masked out
        of attention, so per-item blocks behave as CLS + M tags + SEP.
        """
        b = len(tag_ids_batch)
        if not self.config.use_tags:
            tag_ids_batch = [[] for _ in range(b)]
        counts = [len(t) for t in tag_ids_batch]
        m_max = max(counts) if counts else 0
        cls_col = ad.embedding(self.tok, np.full((b, 1), CLS_ID, dtype=np.int64))
        sep_col = ad.embedding(self.tok, np.full((b, 1), SEP_ID, dtype=np.int64))
        if m_max == 0:
            block = ad.concat([cls_col, sep_col], axis=1)
            valid = np.ones((b, 2), dtype=bool)
        else:
            width = max(len(ids) for t in tag_ids_batch for ids in t)
            char_ids = np.full((b, m_max, width), PAD_ID, dtype=np.int64)
            char_mask = np.zeros((b, m_max, width))
            for i, tags in enumerate(tag_ids_batch):
                for j, ids in enumerate(tags):
                    char_ids[i, j, :len(ids)] = ids
                    char_mask[i, j, :len(ids)] = 1.0
            per_char = ad.embedding(self.tok, char_ids)
            summed = (per_char * char_mask[..., None]).sum(axis=2)
            denom = np.maximum(char_mask.sum(axis=2), 1.0)[..., None]
            tag_vecs = summed / denom
            block = ad.concat([cls_col, tag_vecs, sep_col], axis=1)
            valid = np.zeros((b, m_max + 2), dtype=bool)
            valid[:, 0] = True
            valid[:, -1] = True
            for i, c in enumerate(counts):
                valid[i, 1:1 + c] = True
        return block + self.type_tag, valid

    # -- encoders ----------------------------------------------------------

    def cross_encode_batch(self, frames, frame_counts=None, tag_ids=None):
        """Fuse tag blocks with frame features under full self-attention.

        Args:
            frames: (B, N, d_v) array, zero-padded past each item's count.
            frame_counts: frames per item; defaults to N for every item.
            tag_ids: per item, a list of per-tag character-id tuples.

        Returns:
            (vectors, valid): a (B, S, d_h) tensor and its slot mask.
        """
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 3:
            raise InputError(f"frame batch must be 3-d, got {frames.shape}")
        b, n, d_v = frames.shape
        if d_v != self.config.d_v:
            raise InputError(
                f"frame features are {d_v}-wide, model expects {self.config.d_v}"
            )
        if not np.isfinite(frames).all():
            raise InputError("frame features contain non-finite values")
        if frame_counts is None:
            frame_counts = np.full(b, n, dtype=np.int64)
        frame_counts = np.asarray(frame_counts, dtype=np.int64)
        if n < 1 or (frame_counts < 1).any():
            raise InputError("empty video: a clip needs at least one frame")
        if n > self.config.max_frames or (frame_counts > n).any():
            raise InputError(
                f"clip of {n} frames exceeds max_frames "
                f"{self.config.max_frames}"
            )
        if tag_ids is None:
            tag_ids = [[] for _ in range(b)]
        tag_block, tag_valid = self._tag_block(tag_ids)
        fx = self.frame_proj(Tensor(frames)) + self.frame_pos[:n] + self.type_frame
        frame_valid = np.arange(n)[None, :] < frame_counts[:, None]
        x = ad.concat([tag_block, fx], axis=1)
        valid = np.concatenate([tag_valid, frame_valid], axis=1)
        out = self.cross(x, key_padding_mask(valid))
        return out, valid

    def cross_encode(self, tags: TagEmbeddingSequence,
                     video: VideoClipFeatures) -> FusionEmbeddings:
        """Per-item fusion; output length is (tags + 2) + frames."""
        tag_ids = tags.tag_ids if self.config.use_tags else []
        out, _ = self.cross_encode_batch(video.frames[None], None, [tag_ids])
        m = len(tag_ids) if self.config.use_tags else 0
        return FusionEmbeddings(vectors=out.reshape(out.shape[1:]),
                                tag_count=m,
                                frame_count=video.frames.shape[0])

    def text_encode_batch(self, token_lists):
        """Bidirectional encoding with a prepended CLS; pads are masked."""
        if not token_lists:
            raise InputError("text batch is empty")
        lengths = []
        for ids in token_lists:
            if len(ids) < 1:
                raise InputError("cannot encode an empty token sequence")
            if len(ids) > self.config.max_text_len:
                raise InputError(
                    f"text of {len(ids)} tokens exceeds max_text_len "
                    f"{self.config.max_text_len}"
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
        out = self.text(emb, key_padding_mask(valid))
        return out, valid

    def text_encode(self, tokens) -> TextEmbeddings:
        out, _ = self.text_encode_batch([list(tokens)])
        return TextEmbeddings(vectors=out.reshape(out.shape[1:]))

    # -- similarity and losses ----------------------------------------------

    def _project_video(self, f_cls: Tensor) -> Tensor:
        return ad.l2_normalize(self.phi(f_cls))

    def _project_text(self, w_cls: Tensor) -> Tensor:
        return ad.l2_normalize(self.psi(w_cls))

    def similarity(self, f: FusionEmbeddings, w: TextEmbeddings) -> float:
        """Cosine of the two projected CLS vectors, in [-1, 1]."""
        with ad.no_grad():
            u = self._project_video(f.fused_cls.reshape((1, -1)))
            v = self._project_text(w.text_cls.reshape((1, -1)))
            return float((u.data @ v.data.T).item())

    def similarity_matrix(self, f_cls_rows, w_cls_rows):
        """(texts, videos) score matrix from stacked CLS activations."""
        with ad.no_grad():
            u = self._project_video(Tensor(f_cls_rows)).data
            v = self._project_text(Tensor(w_cls_rows)).data
        return v @ u.T

    def align_loss_from_cls(self, f_cls: Tensor, w_cls: Tensor) -> Tensor:
        if f_cls.shape != w_cls.shape or f_cls.ndim != 2:
            raise InputError(
                f"alignment needs matching (K, d) stacks, got "
                f"{f_cls.shape} and {w_cls.shape}"
            )
        u = self._project_video(f_cls)
        v = self._project_text(w_cls)
        return info_nce(u @ v.transpose((1, 0)), self.tau)

    def align_loss(self, fusions, texts) -> Tensor:
        """Symmetric contrastive loss over per-item embedding lists."""
        if len(fusions) != len(texts) or not fusions:
            raise InputError("alignment needs equal, non-empty batches")
        f_cls = ad.concat([f.fused_cls.reshape((1, -1)) for f in fusions], axis=0)
        w_cls = ad.concat([w.text_cls.reshape((1, -1)) for w in texts], axis=0)
        return self.align_loss_from_cls(f_cls, w_cls)

    def _decode_hidden(self, prompt: Tensor, prompt_valid, text_in):
        """Run the decoder; returns hidden states for the text positions."""
        b, p, _ = prompt.shape
        t = text_in.shape[1]
        if t > self.config.max_text_len + 1:
            raise InputError(
                f"decoder input of {t} positions exceeds the "
                f"{self.config.max_text_len + 1} position budget"
            )
        emb = ad.embedding(self.dec_tok, text_in) + self.dec_pos[:t] \
            + self.dec_type_text
        x = ad.concat([prompt + self.dec_type_prompt, emb], axis=1)
        keys = np.concatenate(
            [np.asarray(prompt_valid, dtype=bool),
             np.ones((b, t), dtype=bool)], axis=1)
        mask = prefix_causal_mask(p, t) + key_padding_mask(keys)
        h = self.dec(x, mask)
        return h[:, p:, :]

    def gen_loss_batch(self, prompt: Tensor, prompt_valid, targets) -> Tensor:
        """Teacher-forced next-token loss over PAD-padded target rows.

        Prompt positions contribute no loss; labels equal to PAD are
        ignored, so trailing padding after EOS changes nothing.
        """
        targets = np.asarray(targets, dtype=np.int64)
        if targets.ndim != 2 or targets.shape[1] < 2:
            raise InputError(
                f"targets must be (B, >=2) BOS..EOS rows, got {targets.shape}"
            )
        for row in targets:
            body = row[row != PAD_ID]
            if body.size < 2 or body[0] != BOS_ID or body[-1] != EOS_ID:
                raise InputError(
                    "each generation target must begin with BOS and end with EOS"
                )
        text_in = targets[:, :-1]
        labels = targets[:, 1:].reshape(-1)
        h = self._decode_hidden(prompt, prompt_valid, text_in)
        b, t, d = h.shape
        logits = self.out_proj(h).reshape((b * t, self.config.vocab_size))
        return ad.cross_entropy(logits, labels, ignore_index=PAD_ID)

    def gen_loss(self, f: FusionEmbeddings, target) -> Tensor:
        """Per-item generation loss with the fusion output as soft prompt."""
        prompt = f.vectors.reshape((1,) + tuple(f.vectors.shape))
        valid = np.ones((1, f.vectors.shape[0]), dtype=bool)
        return self.gen_loss_batch(prompt, valid, np.asarray([list(target)]))

    def total_loss(self, fusions, texts, targets) -> Tensor:
        """Unweighted sum of the alignment and generation objectives."""
        if not (len(fusions) == len(texts) == len(targets)):
            raise InputError("total_loss needs equally sized batches")
        align = self.align_loss(fusions, texts)
        lengths = {f.vectors.shape[0] for f in fusions}
        if len(lengths) != 1:
            raise InputError(
                "list-based total_loss needs uniform fusion lengths; "
                "use the batched path for ragged inputs"
            )
        prompt = ad.concat(
            [f.vectors.reshape((1,) + tuple(f.vectors.shape)) for f in fusions],
            axis=0)
        valid = np.ones((len(fusions), lengths.pop()), dtype=bool)
        width = max(len(t) for t in targets)
        rows = np.full((len(targets), width), PAD_ID, dtype=np.int64)
        for i, t in enumerate(targets):
            rows[i, :len(t)] = t
        gen = self.gen_loss_batch(prompt, valid, rows)
        return align + gen

    # -- decoding ------------------------------------------------------------

    def step_logprobs(self, prompt_data, prompt_valid):
        """Build a beam-search step function over a fixed soft prompt."""
        prompt = Tensor(prompt_data)

        def step(prefix):
            ids = np.asarray([[BOS_ID, *prefix]], dtype=np.int64)
            with ad.no_grad():
                h = self._decode_hidden(prompt, prompt_valid, ids)
                logits = self.out_proj(h[:, -1, :]).data[0]
            m = logits.max()
            z = logits - m
            return z - np.log(np.exp(z).sum())

        return step

    def beam_search_decode(self, f: FusionEmbeddings, beam_size=3,
                           max_len=None):
        """Length-normalized beam search conditioned on a fusion output."""
        if max_len is None:
            max_len = self.config.max_text_len
        prompt = f.vectors.data[None]
        valid = np.ones((1, prompt.shape[1]), dtype=bool)
        step = self.step_logprobs(prompt, valid)
        return beam_search(step, self.config.vocab_size, EOS_ID,
                           beam_size, max_len)

    def decode_item(self, frames, tags, vocab, beam_size=3, max_len=None):
        """One-shot decoding for raw frames plus tag words."""
        video = VideoClipFeatures(np.asarray(frames))
        tag_seq = self.embed_tags(list(tags), vocab)
        with ad.no_grad():
            fusion = self.cross_encode(tag_seq, video)
        return self.beam_search_decode(fusion, beam_size, max_len)
