"""Length-normalized beam search over an arbitrary step function.

The search is decoupled from the network: ``step_fn`` maps a prefix of
emitted token ids to a log-probability vector for the next token. A
hypothesis is scored by the sum of its step log-probabilities divided
by the number of emitted tokens (EOS included once emitted).
"""

from __future__ import annotations

from .errors import InputError


def _score(total, length):
    return total / length


def beam_search(step_fn, vocab_size, eos_id, beam_size, max_len):
    """Return the best token sequence under normalized log-probability.

    Hypotheses that emit ``eos_id`` are finalized and leave the beam.
    After ``max_len`` steps the surviving hypotheses are finalized as
    they stand, and the best normalized score over the whole pool wins,
    so a terminated and a full-length sequence compete on equal footing.
    Ties break toward the sequence with lower token ids, left to right.
    """
    if beam_size < 1:
        raise InputError(f"beam size must be >= 1, got {beam_size}")
    if max_len < 1:
        raise InputError(f"max_len must be >= 1, got {max_len}")
    if not 0 <= eos_id < vocab_size:
        raise InputError(f"eos id {eos_id} outside vocabulary of {vocab_size}")
    live = [((), 0.0)]
    finalized = []
    for _ in range(max_len):
        candidates = []
        for ids, total in live:
            logprobs = step_fn(ids)
            for tok in range(vocab_size):
                candidates.append((ids + (tok,), total + float(logprobs[tok])))
        candidates.sort(key=lambda c: (-_score(c[1], len(c[0])), c[0]))
        live = []
        for ids, total in candidates[:beam_size]:
            if ids[-1] == eos_id:
                finalized.append((ids, total))
            else:
                live.append((ids, total))
        if not live:
            break
    pool = finalized + live
    best = min(pool, key=lambda c: (-_score(c[1], len(c[0])), c[0]))
    return list(best[0])
