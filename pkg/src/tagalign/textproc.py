"""Character-level vocabulary, greedy word segmentation, and n-grams.

Token sequences are plain ``list[int]``. The first six ids are reserved
control tokens; regular entries are single Unicode characters, which
suits text without whitespace word boundaries.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .errors import DataError, InputError

RESERVED = ("[PAD]", "[BOS]", "[EOS]", "[CLS]", "[SEP]", "[UNK]")
PAD_ID, BOS_ID, EOS_ID, CLS_ID, SEP_ID, UNK_ID = range(len(RESERVED))


class Vocabulary:
    """Bijection between tokens and contiguous ids, reserved ids first."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tokens[: len(RESERVED)] != list(RESERVED):
            raise DataError(
                "vocabulary must start with the reserved tokens "
                + ", ".join(RESERVED)
            )
        index = {}
        for i, tok in enumerate(tokens):
            if not tok:
                raise DataError(f"vocabulary entry {i} is empty")
            if tok in index:
                raise DataError(f"vocabulary repeats token {tok!r} at id {i}")
            index[tok] = i
        self.tokens = tokens
        self.index = index

    @classmethod
    def from_characters(cls, chars):
        seen = dict.fromkeys(c for c in chars if c not in RESERVED)
        return cls(list(RESERVED) + list(seen))

    @property
    def size(self):
        return len(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def id_of(self, token):
        return self.index.get(token, UNK_ID)

    def token_of(self, idx):
        if not 0 <= idx < len(self.tokens):
            raise InputError(f"token id {idx} outside vocabulary of {self.size}")
        return self.tokens[idx]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.tokens:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                lines = fh.read().split("\n")
        except (OSError, UnicodeDecodeError) as err:
            raise DataError(f"cannot read vocabulary {path}: {err}") from err
        if lines and lines[-1] == "":
            lines.pop()
        if not lines:
            raise DataError(f"vocabulary file {path} is empty")
        return cls(lines)

    def content_hash(self):
        import hashlib

        h = hashlib.sha256()
        for tok in self.tokens:
            h.update(tok.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()


def tokenize(text, vocab):
    """Map every Unicode scalar to its id; unknown characters become UNK.

    No BOS/EOS framing is added here; decoder targets add it themselves.
    """
    return [vocab.id_of(ch) for ch in text]


def detokenize(ids, vocab, skip_reserved=True):
    parts = []
    for i in ids:
        tok = vocab.token_of(int(i))
        if skip_reserved and i < len(RESERVED):
            continue
        parts.append(tok)
    return "".join(parts)


@dataclass(frozen=True)
class Lexicon:
    """Known multi-character words for greedy longest-match segmentation."""

    words: frozenset[str]
    max_len: int

    @classmethod
    def from_words(cls, words):
        ws = set()
        for w in words:
            if len(w) < 2:
                raise DataError(f"lexicon word {w!r} is shorter than 2 characters")
            ws.add(w)
        return cls(frozenset(ws), max((len(w) for w in ws), default=0))

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                raw = [line.rstrip("\n") for line in fh]
        except (OSError, UnicodeDecodeError) as err:
            raise DataError(f"cannot read lexicon {path}: {err}") from err
        return cls.from_words([w for w in raw if w])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for w in sorted(self.words):
                fh.write(w + "\n")


EMPTY_LEXICON = Lexicon(frozenset(), 0)


def segment(text, lexicon=EMPTY_LEXICON):
    """Greedy forward longest-match split; unmatched characters stand alone.

    The concatenation of the output always equals the input, so nothing
    is ever lost or invented by segmentation.
    """
    words = []
    pos = 0
    n = len(text)
    while pos < n:
        hit = None
        top = min(lexicon.max_len, n - pos)
        for width in range(top, 1, -1):
            cand = text[pos:pos + width]
            if cand in lexicon.words:
                hit = cand
                break
        if hit is None:
            hit = text[pos]
        words.append(hit)
        pos += len(hit)
    return words


def ngrams(words, n):
    """Counter of contiguous ``n``-word windows, with multiplicity."""
    if n < 1:
        raise InputError(f"ngram order must be >= 1, got {n}")
    words = list(words)
    return Counter(
        tuple(words[i:i + n]) for i in range(len(words) - n + 1)
    )
