"""Tag-driven video-text alignment with caption generation.

A numpy-only toolkit: a fusion encoder that mixes tag embeddings with
frame features, a symmetric contrastive alignment objective, a
soft-prompt autoregressive caption decoder, a two-stream scorer for
dataset filtering, and the retrieval/captioning evaluation stack.
"""

from .autodiff import Tensor, no_grad
from .data import DatasetRecord, load_dataset, read_features, write_features
from .decoding import beam_search
from .errors import (
    ConfigError,
    DataError,
    InputError,
    NumericError,
    ShapeError,
    TagAlignError,
    UsageError,
)
from .metrics import (
    EvalReport,
    bleu4,
    cider,
    evaluate_split,
    recall_at_k,
    rouge_l,
)
from .model import ModelConfig, VARIANTS, VideoTextModel, ablate, info_nce
from .optim import AdamW, WarmupCosineSchedule, lr_at
from .scorer import TwoStreamModel, filter_dataset, train_two_stream
from .synth import SynthConfig, synth_generate
from .textproc import Lexicon, Vocabulary, detokenize, segment, tokenize
from .train import RunConfig, train_fusion

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "ConfigError",
    "DataError",
    "DatasetRecord",
    "EvalReport",
    "InputError",
    "Lexicon",
    "ModelConfig",
    "NumericError",
    "RunConfig",
    "ShapeError",
    "SynthConfig",
    "TagAlignError",
    "Tensor",
    "TwoStreamModel",
    "UsageError",
    "VARIANTS",
    "VideoTextModel",
    "Vocabulary",
    "WarmupCosineSchedule",
    "ablate",
    "beam_search",
    "bleu4",
    "cider",
    "detokenize",
    "evaluate_split",
    "filter_dataset",
    "info_nce",
    "load_dataset",
    "lr_at",
    "no_grad",
    "read_features",
    "recall_at_k",
    "rouge_l",
    "segment",
    "synth_generate",
    "tokenize",
    "train_fusion",
    "train_two_stream",
    "write_features",
]
