"""Generation metrics against worked examples and brute-force references."""

import math

import numpy as np
import pytest

from tagalign.errors import InputError
from tagalign.metrics import (
    EvalReport,
    bleu4,
    cider,
    cider_scores,
    evaluate_split,
    recall_at_k,
    rouge_l,
)

from oracles import (
    bleu_ref,
    cider_ref,
    lcs_exhaustive,
    random_corpus,
    recall_ref,
    rouge_ref,
)


def test_bleu_worked_example():
    hyp = list("abcde")
    ref = list("abcdf")
    want = (4 / 5 * 3 / 4 * 2 / 3 * 1 / 2) ** 0.25
    assert abs(bleu4(hyp, [ref]) - want) <= 1e-12


def test_bleu_perfect_match_is_one():
    hyp = list("abcd")
    assert abs(bleu4(hyp, [list("abcd")]) - 1.0) <= 1e-12


def test_bleu_zero_cases():
    assert bleu4([], [list("ab")]) == 0.0
    assert bleu4(list("abc"), [list("abcd")]) == 0.0  # no 4-gram in hyp
    assert bleu4(list("aaaa"), [list("bbbb")]) == 0.0  # no overlap
    with pytest.raises(InputError):
        bleu4(list("ab"), [])


def test_bleu_brevity_penalty_prefers_shorter_on_ties():
    hyp = list("ababa")  # length 5
    refs = [list("abab"), list("ababab")]  # lengths 4 and 6, both 1 away
    # closest length ties toward 4, so c > r and no penalty applies
    got = bleu4(hyp, refs)
    assert got == bleu_ref(hyp, refs)
    p = (5 / 5) * (4 / 4) * (3 / 3) * (2 / 2)
    assert abs(got - p ** 0.25) <= 1e-12


def test_bleu_brevity_penalty_applies_to_short_hyp():
    hyp = list("abab")
    refs = [list("ababab")]
    got = bleu4(hyp, refs)
    assert abs(got - math.exp(1.0 - 6 / 4)) <= 1e-12


def test_cider_two_item_worked_example():
    hyps = [list("abcd"), list("efgh")]
    refs = [[list("abcd")], [list("ijkl")]]
    scores = cider_scores(hyps, refs)
    assert abs(scores[0] - 10.0) <= 1e-9
    assert scores[1] == 0.0
    assert abs(cider(hyps, refs) - 5.0) <= 1e-9


def test_cider_single_item_corpus_is_zero():
    assert cider_scores([list("abcd")], [[list("abcd")]]) == [0.0]


def test_cider_validation():
    with pytest.raises(InputError):
        cider_scores([list("ab")], [])
    with pytest.raises(InputError):
        cider_scores([], [])
    with pytest.raises(InputError):
        cider_scores([list("ab")], [[]])


def test_rouge_worked_example():
    got = rouge_l(list("axb"), [list("abc")])
    assert abs(got - 2 / 3) <= 1e-12


def test_rouge_formula_with_asymmetric_lengths():
    hyp = list("ab")
    ref = list("abcd")
    p, r, beta = 2 / 2, 2 / 4, 1.2
    want = (1 + beta**2) * p * r / (r + beta**2 * p)
    assert abs(rouge_l(hyp, [ref]) - want) <= 1e-12


def test_rouge_takes_best_reference():
    hyp = list("abc")
    refs = [list("xyz"), list("abc"), list("ab")]
    assert abs(rouge_l(hyp, refs) - 1.0) <= 1e-12
    assert rouge_l([], refs) == 0.0
    with pytest.raises(InputError):
        rouge_l(hyp, [])


def test_lcs_matches_exhaustive_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(30):
        a = [str(i) for i in rng.integers(0, 4, rng.integers(0, 9))]
        b = [str(i) for i in rng.integers(0, 4, rng.integers(0, 9))]
        got = rouge_l(a, [b]) if a and b else None
        want = rouge_ref(a, [b]) if a and b else None
        assert got == want


def test_metrics_match_brute_force_on_random_corpora():
    rng = np.random.default_rng(42)
    for _ in range(15):
        hyps, refs = random_corpus(rng)
        lib = cider_scores(hyps, refs)
        ref_scores = cider_ref(hyps, refs)
        assert np.abs(np.asarray(lib) - np.asarray(ref_scores)).max() <= 1e-9
        for h, r in zip(hyps, refs):
            assert abs(bleu4(h, r) - bleu_ref(h, r)) <= 1e-9
            assert abs(rouge_l(h, r) - rouge_ref(h, r)) <= 1e-9


def test_recall_matches_full_sort_reference():
    rng = np.random.default_rng(7)
    for _ in range(8):
        n_text = int(rng.integers(2, 9))
        n_video = int(rng.integers(2, 7))
        sim = rng.normal(0.0, 1.0, (n_text, n_video))
        gt = rng.integers(0, n_video, n_text)
        for k in (1, 2, 5):
            for direction in ("t2v", "v2t"):
                got = recall_at_k(sim, gt, k, direction)
                want = recall_ref(sim, gt, k, direction)
                assert got == want


def test_recall_tie_resolves_to_lower_index():
    sim = np.zeros((2, 3))
    # all scores equal: rank order is column order, so video 0 wins at k=1
    assert recall_at_k(sim, [0, 0], 1, "t2v") == 100.0
    assert recall_at_k(sim, [1, 1], 1, "t2v") == 0.0


def test_recall_v2t_any_owning_text_counts():
    sim = np.array([
        [5.0, 0.0],
        [1.0, 0.0],
        [0.0, 9.0],
    ])
    # video 0 owns texts 0 and 1; its column ranks text 0 first
    assert recall_at_k(sim, [0, 0, 1], 1, "v2t") == 100.0
    # removing the strong text leaves text 1 ranked below text 2 at k=1
    sim2 = np.array([
        [0.0, 0.0],
        [1.0, 2.0],
        [2.0, 9.0],
    ])
    assert recall_at_k(sim2, [0, 0, 1], 1, "v2t") == 50.0


def test_recall_k_is_clamped():
    sim = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert recall_at_k(sim, [0, 1], 10, "t2v") == 100.0
    assert recall_at_k(sim, [0, 1], 10, "v2t") == 100.0


def test_recall_validation():
    sim = np.array([[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(InputError):
        recall_at_k(np.zeros(3), [0], 1, "t2v")
    with pytest.raises(InputError):
        recall_at_k(sim, [0], 1, "t2v")
    with pytest.raises(InputError):
        recall_at_k(sim, [0, 2], 1, "t2v")
    with pytest.raises(InputError):
        recall_at_k(sim, [0, 1], 0, "t2v")
    with pytest.raises(InputError):
        recall_at_k(sim, [0, 1], 1, "sideways")


def test_evaluate_split_assembles_report():
    hyps = [list("abcd"), list("efab")]
    title_refs = [[list("abcd")], [list("efgh")]]
    caption_refs = [[list("abcd"), list("dcba")], [list("efab")]]
    sim = np.array([[0.9, 0.1], [0.2, 0.8], [0.7, 0.6]])
    gt = [0, 1, 0]
    report = evaluate_split(hyps, title_refs, caption_refs, sim, gt, ks=(1, 2))
    assert report.t2v_recall[1] == recall_ref(sim, gt, 1, "t2v")
    assert report.v2t_recall[2] == recall_ref(sim, gt, 2, "v2t")
    want_bleu = np.mean([bleu_ref(h, r) for h, r in zip(hyps, title_refs)])
    assert abs(report.title["bleu4"] - want_bleu) <= 1e-12
    assert abs(report.title["bleu4_x100"] - 100 * want_bleu) <= 1e-9
    assert report.caption["cider"] == np.mean(cider_ref(hyps, caption_refs))
    assert report.flags == []
    assert "meteor" not in str(report.to_json_dict()).lower()


def test_evaluate_split_round_trips_json():
    report = EvalReport(
        t2v_recall={1: 50.0}, v2t_recall={1: 100.0},
        title={"cider": 0.1, "bleu4": 0.2, "rouge_l": 0.3,
               "cider_x100": 10.0, "bleu4_x100": 20.0, "rouge_l_x100": 30.0},
        caption={"cider": 0.0, "bleu4": 0.0, "rouge_l": 0.0,
                 "cider_x100": 0.0, "bleu4_x100": 0.0, "rouge_l_x100": 0.0},
        flags=["note"],
    )
    back = EvalReport.from_json_dict(report.to_json_dict())
    assert back == report
    keys = [k for k, _, _ in report.key_values()]
    assert keys[0] == "t2v_recall@1"
    assert "title_cider_x100" in keys and "flag" in keys


def test_evaluate_split_flags_degenerate_similarity():
    hyps = [list("ab"), list("cd")]
    refs = [[list("ab")], [list("cd")]]
    sim = np.full((2, 2), 0.5)
    report = evaluate_split(hyps, refs, refs, sim, [0, 1], ks=(1,))
    assert any("degenerate" in f for f in report.flags)


def test_evaluate_split_validation():
    hyps = [list("ab")]
    refs = [[list("ab")]]
    with pytest.raises(InputError):
        evaluate_split([], [], [], np.zeros((1, 1)), [0])
    with pytest.raises(InputError):
        evaluate_split(hyps, refs + refs, refs, np.zeros((1, 1)), [0])
    with pytest.raises(InputError):
        evaluate_split(hyps, refs, refs, np.zeros((1, 3)), [0])
