"""Frozen evaluation protocol.

These constants pin the comparison protocol used across every report:
the dataset-filtering score threshold, decoding beam width, n-gram
order for overlap metrics, optimizer weight decay, and the learning
rate schedule anchors. Reports echo all of them in their headers so a
reader can confirm two runs were scored under the same rules. Meteor
is deliberately absent from the metric set.
"""

from .metrics import GENERATION_METRICS, NGRAM_ORDER, RECALL_KS

FILTER_THRESHOLD = 0.3
BEAM_SIZE = 3
WEIGHT_DECAY = 0.02
WARMUP_EPOCHS = 10
PEAK_LR = 1e-5
FINAL_LR = 1e-6
TAU_INIT = 0.07

PROTOCOL_HEADER = (
    ("protocol.filter_threshold", FILTER_THRESHOLD),
    ("protocol.beam_size", BEAM_SIZE),
    ("protocol.ngram_order", NGRAM_ORDER),
    ("protocol.weight_decay", WEIGHT_DECAY),
    ("protocol.warmup_epochs", WARMUP_EPOCHS),
    ("protocol.peak_lr", PEAK_LR),
    ("protocol.final_lr", FINAL_LR),
    ("protocol.generation_metrics", ",".join(GENERATION_METRICS)),
    ("protocol.recall_ks", ",".join(str(k) for k in RECALL_KS)),
)


def header_lines():
    """Protocol header as ``key = value`` lines for text reports."""
    return [f"{key} = {value}" for key, value in PROTOCOL_HEADER]


def header_dict():
    """Protocol header as a flat dict for JSON reports."""
    return {key: value for key, value in PROTOCOL_HEADER}
