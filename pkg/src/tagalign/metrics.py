"""Generation and retrieval metrics over segmented-word sequences.

All text metrics operate on lists of words (the output of ``segment``).
Meteor is deliberately absent from this module and from every report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .textproc import ngrams

NGRAM_ORDER = 4
ROUGE_BETA = 1.2
CIDER_SIGMA = 6.0


def _check_refs(refs):
    refs = [list(r) for r in refs]
    if not refs:
        raise InputError("metric needs at least one reference")
    return refs


def bleu4(hyp, refs, max_n=NGRAM_ORDER):
    """Single-segment BLEU with clipped precisions and no smoothing.

    The geometric mean over n = 1..4 collapses to zero whenever any
    precision is zero. The brevity penalty compares against the
    reference length closest to the hypothesis (ties prefer shorter).
    """
    hyp = list(hyp)
    refs = _check_refs(refs)
    if not hyp:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand = ngrams(hyp, n)
        total = sum(cand.values())
        if total == 0:
            return 0.0
        clipped = 0
        for gram, count in cand.items():
            best = max(ngrams(r, n).get(gram, 0) for r in refs)
            clipped += min(count, best)
        if clipped == 0:
            return 0.0
        log_sum += math.log(clipped / total)
    c = len(hyp)
    r = min((len(ref) for ref in refs), key=lambda L: (abs(L - c), L))
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum / max_n)


def _cider_vectors(counts, doc_freq, n_items, max_n):
    vecs = [{} for _ in range(max_n)]
    norms = [0.0] * max_n
    length = 0
    log_items = math.log(n_items)
    for gram, count in counts.items():
        n = len(gram) - 1
        idf = log_items - math.log(max(1.0, doc_freq.get(gram, 0.0)))
        w = count * idf
        vecs[n][gram] = w
        norms[n] += w * w
        if n == 0:
            length += count
    return vecs, [math.sqrt(x) for x in norms], length


def _cider_sim(vh, vr, nh, nr, lh, lr, max_n, sigma):
    penalty = math.exp(-((lh - lr) ** 2) / (2.0 * sigma**2))
    out = []
    for n in range(max_n):
        acc = 0.0
        for gram, w in vh[n].items():
            rw = vr[n].get(gram, 0.0)
            # hypothesis counts are clipped to the reference's
            acc += min(w, rw) * rw
        if nh[n] and nr[n]:
            acc /= nh[n] * nr[n]
        else:
            acc = 0.0
        out.append(acc * penalty)
    return out


def cider_scores(hyps, refs, max_n=NGRAM_ORDER, sigma=CIDER_SIGMA):
    """Per-item consensus scores (the corpus-IDF-weighted variant).

    IDF counts a document frequency of one per item whose references
    contain the n-gram, so a single-item corpus has zero IDF everywhere
    and scores zero regardless of the hypothesis.
    """
    if len(hyps) != len(refs):
        raise InputError(
            f"{len(hyps)} hypotheses against {len(refs)} reference sets"
        )
    if not hyps:
        raise InputError("empty corpus")
    ref_counts = []
    for r in refs:
        ref_counts.append([ngrams(ref, n) for ref in _check_refs(r)
                           for n in range(1, max_n + 1)])
    doc_freq = {}
    for per_item in ref_counts:
        grams = set()
        for counter in per_item:
            grams.update(counter)
        for gram in grams:
            doc_freq[gram] = doc_freq.get(gram, 0.0) + 1.0
    n_items = len(hyps)
    scores = []
    for hyp, ref_set in zip(hyps, refs):
        hyp_all = {}
        for n in range(1, max_n + 1):
            hyp_all.update(ngrams(list(hyp), n))
        vh, nh, lh = _cider_vectors(hyp_all, doc_freq, n_items, max_n)
        per_n = np.zeros(max_n)
        for ref in ref_set:
            ref_all = {}
            for n in range(1, max_n + 1):
                ref_all.update(ngrams(list(ref), n))
            vr, nr, lr = _cider_vectors(ref_all, doc_freq, n_items, max_n)
            per_n += _cider_sim(vh, vr, nh, nr, lh, lr, max_n, sigma)
        per_n *= 10.0 / len(ref_set)
        scores.append(float(per_n.mean()))
    return scores


def cider(hyps, refs, max_n=NGRAM_ORDER, sigma=CIDER_SIGMA):
    """Corpus score: mean of the per-item consensus scores."""
    return float(np.mean(cider_scores(hyps, refs, max_n, sigma)))


def _lcs_len(a, b):
    # classic O(len(a) * len(b)) dynamic program, two rolling rows
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def rouge_l(hyp, refs, beta=ROUGE_BETA):
    """Longest-common-subsequence F-measure, maximized over references."""
    hyp = list(hyp)
    refs = _check_refs(refs)
    if not hyp:
        return 0.0
    best = 0.0
    for ref in refs:
        if not ref:
            continue
        lcs = _lcs_len(hyp, ref)
        if lcs == 0:
            continue
        p = lcs / len(hyp)
        r = lcs / len(ref)
        f = (1 + beta**2) * p * r / (r + beta**2 * p)
        best = max(best, f)
    return best


def _ranked(scores, k):
    order = np.lexsort((np.arange(scores.size), -scores))
    return order[:k]


def recall_at_k(sim, text_to_video, k, direction):
    """Percentage of queries whose match appears in the top-k.

    ``sim`` has one row per text and one column per video. For
    text-to-video every row is a query; for video-to-text a video query
    scores if any of its texts ranks in the top-k of its column. Score
    ties resolve toward the lower index, and k is clamped to the number
    of candidates.
    """
    sim = np.asarray(sim, dtype=np.float64)
    if sim.ndim != 2 or sim.size == 0:
        raise InputError(f"similarity matrix must be 2-d, got {sim.shape}")
    gt = np.asarray(text_to_video, dtype=np.int64)
    n_text, n_video = sim.shape
    if gt.shape != (n_text,):
        raise InputError(
            f"ground truth length {gt.shape} does not match {n_text} texts"
        )
    if gt.min() < 0 or gt.max() >= n_video:
        raise InputError("ground-truth video index out of range")
    if k < 1:
        raise InputError(f"k must be >= 1, got {k}")
    if direction == "t2v":
        k = min(k, n_video)
        hits = sum(
            int(gt[i] in _ranked(sim[i], k)) for i in range(n_text)
        )
        return 100.0 * hits / n_text
    if direction == "v2t":
        k = min(k, n_text)
        owners = [np.nonzero(gt == j)[0] for j in range(n_video)]
        queries = [j for j in range(n_video) if owners[j].size]
        if not queries:
            raise InputError("no video owns any text")
        hits = 0
        for j in queries:
            top = _ranked(sim[:, j], k)
            hits += int(bool(np.intersect1d(owners[j], top).size))
        return 100.0 * hits / len(queries)
    raise InputError(f"direction must be 't2v' or 'v2t', got {direction!r}")


RECALL_KS = (1, 5, 10)
GENERATION_METRICS = ("cider", "bleu4", "rouge_l")


@dataclass
class EvalReport:
    """Retrieval recalls plus titling/captioning generation metrics.

    Generation fields carry both the raw value and a x100 convenience
    scale; text rendering rounds the x100 fields to one decimal.
    """

    t2v_recall: dict[int, float]
    v2t_recall: dict[int, float]
    title: dict[str, float]
    caption: dict[str, float]
    flags: list[str] = field(default_factory=list)

    def to_json_dict(self):
        return {
            "t2v_recall": {str(k): v for k, v in self.t2v_recall.items()},
            "v2t_recall": {str(k): v for k, v in self.v2t_recall.items()},
            "title": dict(self.title),
            "caption": dict(self.caption),
            "flags": list(self.flags),
        }

    @classmethod
    def from_json_dict(cls, blob):
        return cls(
            t2v_recall={int(k): v for k, v in blob["t2v_recall"].items()},
            v2t_recall={int(k): v for k, v in blob["v2t_recall"].items()},
            title=dict(blob["title"]),
            caption=dict(blob["caption"]),
            flags=list(blob["flags"]),
        )

    def key_values(self):
        """Ordered (key, value, one_decimal) triples for text rendering."""
        rows = []
        for k in sorted(self.t2v_recall):
            rows.append((f"t2v_recall@{k}", self.t2v_recall[k], True))
        for k in sorted(self.v2t_recall):
            rows.append((f"v2t_recall@{k}", self.v2t_recall[k], True))
        for task, metrics in (("title", self.title), ("caption", self.caption)):
            for name in GENERATION_METRICS:
                rows.append((f"{task}_{name}_x100", metrics[f"{name}_x100"], True))
        for flag in self.flags:
            rows.append(("flag", flag, False))
        return rows


def _generation_block(hyps, refs):
    per_cider = cider_scores(hyps, refs)
    bleus = [bleu4(h, r) for h, r in zip(hyps, refs)]
    rouges = [rouge_l(h, r) for h, r in zip(hyps, refs)]
    block = {
        "cider": float(np.mean(per_cider)),
        "bleu4": float(np.mean(bleus)),
        "rouge_l": float(np.mean(rouges)),
    }
    for name in GENERATION_METRICS:
        block[f"{name}_x100"] = 100.0 * block[name]
    return block


def evaluate_split(hyps, title_refs, caption_refs, sim, text_to_video,
                   ks=RECALL_KS):
    """Score one split end to end and assemble the report.

    Args:
        hyps: decoded word lists, one per video.
        title_refs / caption_refs: per video, a non-empty list of
            reference word lists.
        sim: (texts, videos) similarity matrix.
        text_to_video: ground-truth video index per text row.

    Raises:
        InputError: on empty hypotheses or count mismatches; degenerate
            (constant) similarity matrices are flagged, not failed.
    """
    if not hyps:
        raise InputError("empty hypothesis set")
    if not (len(hyps) == len(title_refs) == len(caption_refs)):
        raise InputError(
            f"counts disagree: {len(hyps)} hypotheses, "
            f"{len(title_refs)} title reference sets, "
            f"{len(caption_refs)} caption reference sets"
        )
    sim = np.asarray(sim, dtype=np.float64)
    if sim.ndim != 2 or sim.shape[1] != len(hyps):
        raise InputError(
            f"similarity matrix {sim.shape} does not cover {len(hyps)} videos"
        )
    flags = []
    if sim.size and float(sim.max() - sim.min()) < 1e-12:
        flags.append("degenerate: similarity matrix is constant")
    t2v = {k: recall_at_k(sim, text_to_video, k, "t2v") for k in ks}
    v2t = {k: recall_at_k(sim, text_to_video, k, "v2t") for k in ks}
    return EvalReport(
        t2v_recall=t2v,
        v2t_recall=v2t,
        title=_generation_block(hyps, title_refs),
        caption=_generation_block(hyps, caption_refs),
        flags=flags,
    )
