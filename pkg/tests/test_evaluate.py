import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edsr.ctc import log_softmax
from edsr.evaluate import (
    AlignmentCounts,
    ConfusionMatrix,
    EvaluationReport,
    align,
    compute_wa_ua,
    evaluate_fold,
    format_report,
    majority_vote,
    percent,
    score_units,
)
from edsr.corpus import Utterance
from edsr.targets import UnitVocabulary
from oracles import best_alignment_all_hyps

EMOTIONS = ("neu", "hap", "ang", "sad")
TABLE2 = [[1189, 298, 100, 121], [222, 1328, 64, 22], [67, 69, 958, 9], [195, 93, 25, 771]]


@pytest.fixture
def vocab():
    return UnitVocabulary(["<blank>"] + [f"{u}@{e}" for u in ("AA", "P", "IY") for e in EMOTIONS])


def test_percent_rounds_half_up():
    assert percent(Fraction(1, 8)) == 12.5
    assert percent(Fraction(1, 2000)) == 0.1
    assert percent(Fraction(1, 3)) == 33.3
    assert percent(2, 3) == 66.7


def test_table2_accuracies():
    cm = ConfusionMatrix(EMOTIONS, TABLE2)
    assert cm.row_sums.tolist() == [1708, 1636, 1103, 1084]
    assert cm.total == 5531
    assert cm.wa() == Fraction(4246, 5531)
    assert compute_wa_ua(cm) == (76.8, 77.2)


def test_perfect_and_symmetric_matrices():
    assert compute_wa_ua(ConfusionMatrix(EMOTIONS, np.diag([3, 4, 5, 6]))) == (100.0, 100.0)
    assert compute_wa_ua(ConfusionMatrix(("a", "b"), [[1, 1], [1, 1]])) == (50.0, 50.0)


def test_zero_row_is_an_error():
    with pytest.raises(ValueError):
        compute_wa_ua(ConfusionMatrix(("a", "b"), [[1, 0], [0, 0]]))


def test_vote_majority(vocab):
    ids = vocab.encode(["AA@hap", "P@hap", "IY@sad"])
    logp = log_softmax(np.zeros((3, len(vocab))))
    vote = majority_vote(ids, logp, vocab, EMOTIONS)
    assert vote.predicted == "hap" and not vote.fallback_used
    assert vote.counts == {"neu": 0, "hap": 2, "ang": 0, "sad": 1}


def test_vote_single_utterance_token():
    v = UnitVocabulary(["<blank>"] + [f"[UTT]@{e}" for e in EMOTIONS])
    logp = log_softmax(np.zeros((2, 5)))
    assert majority_vote(v.encode(["[UTT]@ang"]), logp, v, EMOTIONS).predicted == "ang"


def test_vote_tie_uses_best_path_mass(vocab):
    logits = np.full((4, len(vocab)), -5.0)
    hap, sad = vocab.index("AA@hap"), vocab.index("P@sad")
    logits[0, hap] = 1.0
    logits[1, sad] = 6.0
    logits[2, sad] = 6.0
    logits[3, 0] = 3.0
    logp = log_softmax(logits)
    vote = majority_vote([hap, sad], logp, vocab, EMOTIONS)
    assert vote.predicted == "sad"


def test_vote_exact_tie_falls_to_emotion_order(vocab):
    logits = np.full((2, len(vocab)), -5.0)
    a, b = vocab.index("AA@sad"), vocab.index("AA@neu")
    logits[0, a] = 2.0
    logits[1, b] = 2.0
    vote = majority_vote([a, b], log_softmax(logits), vocab, EMOTIONS)
    assert vote.predicted == "neu"


def test_vote_empty_decode_fallback(vocab):
    logits = np.zeros((3, len(vocab)))
    logits[:, 0] = 10.0
    logits[:, vocab.index("IY@ang")] = 4.0
    vote = majority_vote([], log_softmax(logits), vocab, EMOTIONS)
    assert vote.predicted == "ang" and vote.fallback_used


@given(st.lists(st.integers(1, 12), min_size=1, max_size=10), st.randoms(use_true_random=False))
def test_vote_is_permutation_invariant(ids, rnd):
    v = UnitVocabulary(["<blank>"] + [f"{u}@{e}" for u in ("AA", "P", "IY") for e in EMOTIONS])
    logp = log_softmax(np.random.default_rng(len(ids)).normal(size=(6, len(v))))
    shuffled = list(ids)
    rnd.shuffle(shuffled)
    assert majority_vote(ids, logp, v, EMOTIONS) == majority_vote(shuffled, logp, v, EMOTIONS)


@pytest.mark.parametrize(
    "ref, hyp, expected",
    [
        ("ABC", "AC", (0, 1, 0)),
        ("ABC", "ABC", (0, 0, 0)),
        ("AB", "BA", (2, 0, 0)),
        ("", "AB", (0, 0, 2)),
        ("AB", "", (0, 2, 0)),
    ],
)
def test_align_examples(ref, hyp, expected):
    c = align(list(ref), list(hyp))
    assert (c.S, c.D, c.I) == expected
    assert c.N == len(ref)


def test_align_single_deletion_rate():
    c = align(list("ABC"), list("AC"))
    assert c.to_json()["error_rate"] == 33.3


def test_swap_brute_force():
    # every alignment of AB vs BA: two subs, or del+ins around the shared B
    _, counts = best_alignment_all_hyps([0, 1], 2, alphabet=2)
    assert tuple(counts[2]) == (2, 0, 0)  # hyp (1, 0)


@pytest.mark.parametrize("weights,mode", [((1.0, 1.0, 1.0), "uniform"), ((4.0, 3.0, 3.0), "sctk")])
def test_align_matches_brute_force_short(weights, mode):
    for n in range(0, 5):
        for ref in itertools.product(range(3), repeat=n):
            for m in range(0, 5):
                hyps, counts = best_alignment_all_hyps(ref, m, weights=weights)
                for h, want in zip(hyps, counts):
                    c = align(list(ref), list(h), mode)
                    assert (c.S, c.D, c.I) == tuple(want), (ref, tuple(h))


def test_score_units_strip_emotion():
    refs = {"u1": ["AA@hap", "P@hap"]}
    hyps = {"u1": ["AA@sad", "P@hap"]}
    tagged = score_units(refs, hyps)
    assert (tagged.S, tagged.N) == (1, 2) and tagged.to_json()["error_rate"] == 50.0
    assert score_units(refs, hyps, strip_emotion=True).errors == 0


def test_score_units_unpaired():
    with pytest.raises(ValueError):
        score_units({"a": ["X@neu"]}, {"b": ["X@neu"]})


@settings(max_examples=200)
@given(
    st.lists(st.tuples(st.sampled_from("ABC"), st.sampled_from(EMOTIONS)), max_size=6),
    st.lists(st.tuples(st.sampled_from("ABC"), st.sampled_from(EMOTIONS)), max_size=6),
)
def test_stripped_error_never_exceeds_tagged(ref, hyp):
    refs = {"u": [f"{a}@{e}" for a, e in ref]}
    hyps = {"u": [f"{a}@{e}" for a, e in hyp]}
    assert score_units(refs, hyps, True).errors <= score_units(refs, hyps, False).errors


def test_alignment_counts_add():
    assert AlignmentCounts(1, 2, 3, 10) + AlignmentCounts(1, 0, 0, 5) == AlignmentCounts(2, 2, 3, 15)


def _utt(uid, emotion, speaker="s1"):
    return Utterance(uid, None, 16000, speaker, "x", emotion, audio=np.zeros(400))


def test_evaluate_fold_bookkeeping(vocab):
    utts = [_utt("a", "hap"), _utt("b", "sad"), _utt("c", "neu")]
    posts = {}
    for u, tok in zip(utts, ["AA@hap", "P@neu", "IY@neu"]):
        logits = np.zeros((3, len(vocab)))
        logits[1, vocab.index(tok)] = 10.0
        logits[[0, 2], 0] = 10.0
        posts[u.id] = log_softmax(logits)
    refs = {"a": tuple(vocab.encode(["AA@hap"])), "b": tuple(vocab.encode(["P@sad"]))}
    res = evaluate_fold(posts, utts, vocab, refs)
    assert res.confusion.total == 3
    assert res.confusion.counts[EMOTIONS.index("sad"), EMOTIONS.index("neu")] == 1
    assert (res.with_emotion.S, res.with_emotion.N) == (1, 2)
    assert res.without_emotion.errors == 0
    assert res.scoring_excluded == 1
    assert res.hypotheses["c"] == ["IY@neu"]


def test_report_merges_folds(vocab, tmp_path):
    utts = [_utt("a", "hap"), _utt("b", "sad", "s2")]
    logits = np.zeros((2, len(vocab)))
    logits[0, vocab.index("AA@hap")] = 9.0
    posts = {"a": log_softmax(logits), "b": log_softmax(logits)}
    f0 = evaluate_fold(posts, utts[:1], vocab, fold_id=0)
    f1 = evaluate_fold(posts, utts[1:], vocab, fold_id=1)
    report = EvaluationReport("phoneme", EMOTIONS, [f0, f1])
    merged = report.confusion
    np.testing.assert_array_equal(merged.counts, f0.confusion.counts + f1.confusion.counts)
    data = report.to_json()
    assert data["n_utterances"] == 2 and data["WA"] == 50.0 and data["UA"] is None
    report.save(tmp_path)
    assert (tmp_path / "report.json").exists()
    text = (tmp_path / "report.txt").read_text()
    assert "Neutral" in text and "Predicted" in text
    assert format_report(data) == text
