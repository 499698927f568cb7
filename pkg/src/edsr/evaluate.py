"""Majority-vote emotion decisions, WA/UA, unit error rates and reports."""

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from edsr._core import align_counts
from edsr.ctc import greedy_decode
from edsr.targets import strip_tag

ALIGN_WEIGHTS = {
    "uniform": (1.0, 1.0, 1.0),
    # sub, del, ins path-selection costs used by sclite
    "sctk": (4.0, 3.0, 3.0),
}


def percent(num, den=1):
    """Exact percentage rounded half-up to one decimal place."""
    x = Fraction(num) / Fraction(den) * 100
    return float(Fraction(int((x * 10 + Fraction(1, 2)) // 1), 10))


@dataclass
class VoteResult:
    utterance_id: str
    predicted: str
    counts: dict
    fallback_used: bool = False

    def to_json(self):
        return {
            "id": self.utterance_id,
            "predicted": self.predicted,
            "counts": self.counts,
            "fallback_used": self.fallback_used,
        }


def _logsumexp(values):
    if not values:
        return -np.inf
    m = max(values)
    return m + float(np.log(sum(np.exp(v - m) for v in values)))


def majority_vote(decoded, logp, vocab, emotions, utterance_id=""):
    """Emotion with the most decoded tokens.

    Ties go to the emotion whose best-path frames carry more probability
    mass, then to the earlier emotion in ``emotions``. An empty decode
    falls back to the emotion with the largest summed per-frame best
    log-probability among its tokens.
    """
    emotions = tuple(emotions)
    tok_emo = vocab.token_emotions
    counts = {e: 0 for e in emotions}
    for k in decoded:
        counts[tok_emo[k]] += 1
    logp = np.asarray(logp)

    if not decoded:
        scores = []
        for e in emotions:
            cols = [k for k, te in enumerate(tok_emo) if te == e]
            scores.append(float(logp[:, cols].max(axis=1).sum()) if cols else -np.inf)
        best = emotions[int(np.argmax(scores))]
        return VoteResult(utterance_id, best, counts, fallback_used=True)

    top = max(counts.values())
    tied = [e for e in emotions if counts[e] == top]
    if len(tied) == 1:
        return VoteResult(utterance_id, tied[0], counts)
    path = np.argmax(logp, axis=1)
    mass = {e: [] for e in tied}
    for t, k in enumerate(path):
        e = tok_emo[k]
        if e in mass:
            mass[e].append(float(logp[t, k]))
    scores = [_logsumexp(mass[e]) for e in tied]
    return VoteResult(utterance_id, tied[int(np.argmax(scores))], counts)


class ConfusionMatrix:
    """Rows are target emotions, columns predicted, both in ``emotions`` order."""

    def __init__(self, emotions, counts=None):
        self.emotions = tuple(emotions)
        n = len(self.emotions)
        self.counts = np.zeros((n, n), dtype=np.int64) if counts is None else np.asarray(counts, dtype=np.int64)
        if self.counts.shape != (n, n):
            raise ValueError(f"confusion counts must be {n}x{n}")
        if (self.counts < 0).any():
            raise ValueError("confusion counts must be non-negative")

    def add(self, target, predicted):
        self.counts[self.emotions.index(target), self.emotions.index(predicted)] += 1

    def __add__(self, other):
        if self.emotions != other.emotions:
            raise ValueError("cannot merge confusion matrices over different emotions")
        return ConfusionMatrix(self.emotions, self.counts + other.counts)

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def row_sums(self):
        return self.counts.sum(axis=1)

    def wa(self):
        return Fraction(int(np.trace(self.counts)), self.total)

    def ua(self):
        rows = self.row_sums
        if (rows == 0).any():
            missing = [e for e, r in zip(self.emotions, rows) if r == 0]
            raise ValueError(f"recall undefined for emotions without utterances: {missing}")
        recalls = [Fraction(int(self.counts[i, i]), int(rows[i])) for i in range(len(rows))]
        return sum(recalls) / len(recalls)

    def to_json(self):
        return self.counts.tolist()


def compute_wa_ua(cm):
    """(WA, UA) in percent, rounded half-up to 0.1."""
    ua = cm.ua()
    return percent(cm.wa()), percent(ua)


@dataclass
class AlignmentCounts:
    S: int = 0
    D: int = 0
    I: int = 0
    N: int = 0

    def __add__(self, other):
        return AlignmentCounts(self.S + other.S, self.D + other.D, self.I + other.I, self.N + other.N)

    @property
    def errors(self):
        return self.S + self.D + self.I

    @property
    def error_rate(self):
        return self.errors / self.N if self.N else 0.0

    def to_json(self):
        def pct(x):
            return percent(x, self.N) if self.N else 0.0

        return {
            "S": self.S, "D": self.D, "I": self.I, "N": self.N,
            "error_rate": pct(self.errors),
            "sub_rate": pct(self.S), "del_rate": pct(self.D), "ins_rate": pct(self.I),
        }


def align(ref, hyp, mode="uniform"):
    """Minimum-edit-distance counts of ``hyp`` against ``ref``.

    Equal-cost alignments are resolved toward more substitutions (one
    substitution beats a deletion plus an insertion).
    """
    try:
        w_sub, w_del, w_ins = ALIGN_WEIGHTS[mode]
    except KeyError:
        raise ValueError(f"unknown alignment mode {mode!r}") from None
    symbols = {}
    r = np.fromiter((symbols.setdefault(t, len(symbols)) for t in ref), dtype=np.int64, count=len(ref))
    h = np.fromiter((symbols.setdefault(t, len(symbols)) for t in hyp), dtype=np.int64, count=len(hyp))
    S, D, I = align_counts(r, h, w_sub, w_del, w_ins)
    return AlignmentCounts(S, D, I, len(ref))


def score_units(refs, hyps, strip_emotion=False, mode="uniform"):
    """Aggregate alignment counts over paired ``{id: tokens}`` mappings."""
    unpaired = sorted(set(refs) ^ set(hyps))
    if unpaired:
        raise ValueError(f"unpaired utterance ids: {unpaired[:5]}")
    total = AlignmentCounts()
    for uid in refs:
        ref, hyp = refs[uid], hyps[uid]
        if strip_emotion:
            ref = [strip_tag(t) for t in ref]
            hyp = [strip_tag(t) for t in hyp]
        total = total + align(ref, hyp, mode)
    return total


@dataclass
class FoldResult:
    fold_id: int
    test_speakers: list
    confusion: ConfusionMatrix
    with_emotion: AlignmentCounts
    without_emotion: AlignmentCounts
    votes: list = field(default_factory=list)
    hypotheses: dict = field(default_factory=dict)
    scoring_excluded: int = 0
    training_stats: dict = field(default_factory=dict)

    def to_json(self):
        cm = self.confusion
        out = {
            "fold_id": self.fold_id,
            "test_speakers": list(self.test_speakers),
            "n_utterances": cm.total,
            "WA": percent(cm.wa()) if cm.total else None,
            "confusion": cm.to_json(),
            "units": {
                "with_emotion": self.with_emotion.to_json(),
                "without_emotion": self.without_emotion.to_json(),
            },
            "fallback_votes": sum(v.fallback_used for v in self.votes),
            "scoring_excluded": self.scoring_excluded,
        }
        if self.training_stats:
            out["training"] = self.training_stats
        return out


def evaluate_fold(posteriors, utts, vocab, references=None, fold_id=0, mode="uniform"):
    """Decode, vote and score one fold.

    ``posteriors`` maps utterance id -> log-posteriorgram, or is a callable
    taking an :class:`~edsr.corpus.Utterance`. ``references`` maps id ->
    target token ids; utterances missing from it are classified but not
    scored.
    """
    emotions = vocab.emotions
    references = references or {}
    cm = ConfusionMatrix(emotions)
    refs, hyps, votes, all_hyps = {}, {}, [], {}
    for u in utts:
        logp = posteriors(u) if callable(posteriors) else posteriors[u.id]
        decoded = greedy_decode(logp)
        vote = majority_vote(decoded, logp, vocab, emotions, u.id)
        votes.append(vote)
        cm.add(u.emotion, vote.predicted)
        all_hyps[u.id] = vocab.decode(decoded)
        if u.id in references:
            refs[u.id] = vocab.decode(references[u.id])
            hyps[u.id] = all_hyps[u.id]
    speakers = list(dict.fromkeys(u.speaker for u in utts))
    return FoldResult(
        fold_id=fold_id,
        test_speakers=speakers,
        confusion=cm,
        with_emotion=score_units(refs, hyps, strip_emotion=False, mode=mode),
        without_emotion=score_units(refs, hyps, strip_emotion=True, mode=mode),
        votes=votes,
        hypotheses=all_hyps,
        scoring_excluded=len(utts) - len(refs),
    )


@dataclass
class EvaluationReport:
    taxonomy: str
    emotions: tuple
    folds: list
    exclusions: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def confusion(self):
        cm = ConfusionMatrix(self.emotions)
        for f in self.folds:
            cm = cm + f.confusion
        return cm

    @property
    def with_emotion(self):
        total = AlignmentCounts()
        for f in self.folds:
            total = total + f.with_emotion
        return total

    @property
    def without_emotion(self):
        total = AlignmentCounts()
        for f in self.folds:
            total = total + f.without_emotion
        return total

    def to_json(self):
        cm = self.confusion
        rows = cm.row_sums
        out = {
            "taxonomy": self.taxonomy,
            "emotions": list(self.emotions),
            "n_utterances": cm.total,
            "WA": percent(cm.wa()) if cm.total else None,
            "UA": percent(cm.ua()) if cm.total and (rows > 0).all() else None,
            "confusion": cm.to_json(),
            "units": {
                "with_emotion": self.with_emotion.to_json(),
                "without_emotion": self.without_emotion.to_json(),
            },
            "folds": [f.to_json() for f in self.folds],
            "exclusions": dict(self.exclusions),
        }
        if self.meta:
            out["meta"] = self.meta
        return out

    def save(self, out_dir):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        data = self.to_json()
        (out_dir / "report.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        (out_dir / "report.txt").write_text(format_report(data), encoding="utf-8")


_NAMES = {"neu": "Neutral", "hap": "Happy", "ang": "Angry", "sad": "Sad"}


def _rate_cell(u):
    return f"{u['error_rate']:.1f}% ({u['sub_rate']:.1f}%, {u['del_rate']:.1f}%, {u['ins_rate']:.1f}%)"


def format_report(data):
    """Plain-text tables in the layout of the usual SER result tables."""
    emotions = data["emotions"]
    names = [_NAMES.get(e, e) for e in emotions]
    lines = [f"Phonetic units: {data['taxonomy']}  (utterances: {data['n_utterances']})", ""]
    wa = "n/a" if data["WA"] is None else f"{data['WA']:.1f}%"
    ua = "n/a" if data["UA"] is None else f"{data['UA']:.1f}%"
    lines += ["WA      UA", f"{wa:<8}{ua}", ""]
    width = max(8, *(len(n) for n in names)) + 2
    lines.append("Target".ljust(width) + "Predicted")
    lines.append(" " * width + "".join(n.rjust(width) for n in names))
    for name, row in zip(names, data["confusion"]):
        lines.append(name.ljust(width) + "".join(str(c).rjust(width) for c in row))
    lines.append("")
    units = data["units"]
    lines.append(f"Unit error rate (N={units['with_emotion']['N']:,}), error (sub, del, ins)")
    lines.append(f"  with emotion:    {_rate_cell(units['with_emotion'])}")
    lines.append(f"  without emotion: {_rate_cell(units['without_emotion'])}")
    if len(data["folds"]) > 1:
        lines += ["", "fold  speakers        n     WA"]
        for f in data["folds"]:
            spk = ",".join(f["test_speakers"])
            fwa = "n/a" if f["WA"] is None else f"{f['WA']:.1f}%"
            lines.append(f"{f['fold_id']:<6}{spk:<14}{f['n_utterances']:>5}  {fwa:>6}")
    if data.get("exclusions"):
        lines += ["", "exclusions: " + ", ".join(f"{k}={v}" for k, v in sorted(data["exclusions"].items()))]
    return "\n".join(lines) + "\n"


def cross_corpus_eval(model, utts, vocab, taxonomy=None, lex=None, name="cross-corpus", mode="uniform"):
    """Evaluate a trained model on a foreign corpus without retraining.

    Audio must already be at the model rate (see ``corpus.resample_to_16k``).
    Units are scored only when ``taxonomy`` and ``lex`` are given and the
    utterance's units exist in the source vocabulary.
    """
    from edsr.targets import build_targets

    rate = model.cfg.sample_rate
    wrong = [u.id for u in utts if u.sample_rate != rate]
    if wrong:
        raise ValueError(
            f"{len(wrong)} utterances are not at {rate} Hz (e.g. {wrong[0]}); resample them first"
        )
    refs, excluded = {}, []
    if taxonomy is not None and lex is not None:
        targets, excluded = build_targets(taxonomy, lex, vocab, utts)
        refs = {t.utterance_id: t.token_ids for t in targets}
    fold = evaluate_fold(lambda u: model.posteriorgram(u.waveform()), utts, vocab, refs, 0, mode)
    return EvaluationReport(
        taxonomy=name,
        emotions=vocab.emotions,
        folds=[fold],
        exclusions={"scoring": fold.scoring_excluded},
    )
