"""Emotion-dependent token vocabulary and CTC target sequences."""

import json
from dataclasses import dataclass
from pathlib import Path

from edsr.phonetics import OOVError, transcript_to_base_units

BLANK_TOKEN = "<blank>"
TAG_SEP = "@"


def tag(unit, emotion):
    return f"{unit}{TAG_SEP}{emotion}"


def split_tag(token):
    """``"AA@hap"`` -> ``("AA", "hap")``."""
    unit, sep, emotion = token.rpartition(TAG_SEP)
    if not sep:
        raise ValueError(f"token {token!r} carries no emotion tag")
    return unit, emotion


def strip_tag(token):
    return token.rpartition(TAG_SEP)[0] if TAG_SEP in token else token


class UnitVocabulary:
    """Ordered token inventory; index 0 is the CTC blank."""

    def __init__(self, tokens):
        tokens = tuple(tokens)
        if not tokens:
            raise ValueError("vocabulary is empty")
        if tokens[0] != BLANK_TOKEN:
            raise ValueError(f"first token must be {BLANK_TOKEN!r}, got {tokens[0]!r}")
        if len(tokens) < 2:
            raise ValueError("vocabulary needs at least one unit besides the blank")
        if len(set(tokens)) != len(tokens):
            dup = sorted({t for t in tokens if tokens.count(t) > 1})
            raise ValueError(f"duplicate tokens: {dup}")
        for tok in tokens[1:]:
            split_tag(tok)
        self.tokens = tokens
        self._index = {t: i for i, t in enumerate(tokens)}
        self.token_emotions = (None,) + tuple(split_tag(t)[1] for t in tokens[1:])

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, UnitVocabulary) and self.tokens == other.tokens

    def __hash__(self):
        return hash(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def index(self, token):
        return self._index[token]

    def decode(self, ids):
        return [self.tokens[i] for i in ids]

    def encode(self, tokens):
        return [self._index[t] for t in tokens]

    @property
    def emotions(self):
        return tuple(dict.fromkeys(self.token_emotions[1:]))

    @property
    def base_units(self):
        return tuple(dict.fromkeys(split_tag(t)[0] for t in self.tokens[1:]))

    def save(self, path):
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        while lines and not lines[-1].strip():
            lines.pop()
        if not lines:
            raise ValueError(f"{path}: empty vocabulary file")
        return cls(line.strip() for line in lines)


save_vocabulary = UnitVocabulary.save
load_vocabulary = UnitVocabulary.load


def induce_syllables(taxonomy, lex, utts, oov="exclude"):
    """Syllable inventory of the training utterances, in first-seen order."""
    seen = {}
    for u in utts:
        try:
            units = transcript_to_base_units(taxonomy, lex, u.transcript, oov)
        except (OOVError, ValueError):
            continue
        for s in units:
            seen.setdefault(s, None)
    return tuple(seen)


def build_vocabulary(taxonomy, emotions, train_utts=(), lex=None, oov="exclude"):
    """Cross product of base units and emotions, blank first.

    A syllable taxonomy without an inventory has it induced from
    ``train_utts``; the returned vocabulary carries that inventory.
    """
    units = taxonomy.base_units
    if units is None:
        if lex is None:
            raise ValueError("syllable vocabulary needs a lexicon to induce its inventory")
        units = induce_syllables(taxonomy, lex, train_utts, oov)
        if not units:
            raise ValueError("no syllables could be induced from the training utterances")
    for u in units:
        if TAG_SEP in u:
            raise ValueError(f"unit {u!r} contains the reserved '{TAG_SEP}'")
    return UnitVocabulary([BLANK_TOKEN] + [tag(u, e) for u in units for e in emotions])


@dataclass(frozen=True)
class TargetSequence:
    utterance_id: str
    token_ids: tuple


@dataclass(frozen=True)
class Exclusion:
    id: str
    reason: str


def build_targets(taxonomy, lex, vocab, utts, oov="exclude"):
    """Per-utterance emotion-tagged token ids.

    Returns ``(targets, exclusions)``; utterances with OOV words (under the
    ``exclude`` policy) or units missing from ``vocab`` are excluded.
    """
    targets, excluded = [], []
    for u in utts:
        try:
            units = transcript_to_base_units(taxonomy, lex, u.transcript, oov)
        except OOVError as exc:
            excluded.append(Exclusion(u.id, f"oov:{exc.word}"))
            continue
        except ValueError as exc:
            excluded.append(Exclusion(u.id, f"invalid:{exc}"))
            continue
        if not units:
            excluded.append(Exclusion(u.id, "empty"))
            continue
        tokens = [tag(unit, u.emotion) for unit in units]
        missing = [t for t in tokens if t not in vocab]
        if missing:
            excluded.append(Exclusion(u.id, f"unknown_token:{missing[0]}"))
            continue
        targets.append(TargetSequence(u.id, tuple(vocab.encode(tokens))))
    return targets, excluded


def save_targets(path, targets, vocab):
    with open(path, "w", encoding="utf-8") as fh:
        for t in targets:
            fh.write(f"{t.utterance_id}\t{' '.join(vocab.decode(t.token_ids))}\n")


def load_targets(path, vocab):
    out = []
    for uid, tokens in read_token_file(path).items():
        out.append(TargetSequence(uid, tuple(vocab.encode(tokens))))
    return out


def save_exclusions(path, exclusions):
    with open(path, "w", encoding="utf-8") as fh:
        for e in exclusions:
            fh.write(json.dumps({"id": e.id, "reason": e.reason}) + "\n")


def read_token_file(path):
    """``utt_id<TAB>tok1 tok2 ...`` lines -> ordered ``{id: [tokens]}``."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            uid, _, rest = line.partition("\t")
            if uid in out:
                raise ValueError(f"{path}:{lineno}: duplicate utterance id {uid!r}")
            out[uid] = rest.split()
    return out


def write_token_file(path, seqs):
    with open(path, "w", encoding="utf-8") as fh:
        for uid, tokens in seqs.items():
            fh.write(f"{uid}\t{' '.join(tokens)}\n")
