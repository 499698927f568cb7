"""Pronunciation lexicon, syllabification and phonetic-unit taxonomies.

A taxonomy turns a transcript into a sequence of base (emotion-free) units:
phonemes, broad phonetic classes, syllables, or a single utterance symbol.
"""

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

ARPABET_VOWELS = (
    "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER",
    "EY", "IH", "IY", "OW", "OY", "UH", "UW",
)
ARPABET_CONSONANTS = (
    "B", "CH", "D", "DH", "F", "G", "HH", "JH", "K", "L", "M", "N",
    "NG", "P", "R", "S", "SH", "T", "TH", "V", "W", "Y", "Z", "ZH",
)
ARPABET = ARPABET_VOWELS + ARPABET_CONSONANTS

UTTERANCE_UNIT = "[UTT]"
TAXONOMY_KINDS = ("phoneme", "broad_class", "syllable", "utterance")

_VARIANT = re.compile(r"^(.*)\((\d+)\)$")
_WORD = re.compile(r"[A-Za-z0-9']+")


class OOVError(KeyError):
    def __init__(self, word):
        super().__init__(word)
        self.word = word

    def __str__(self):
        return f"out-of-vocabulary word {self.word!r}"


class NoNucleusError(ValueError):
    pass


def _read_data(name, path):
    if path is None:
        return resources.files("edsr").joinpath(f"data/{name}").read_text("utf-8")
    return Path(path).read_text("utf-8")


def _content_lines(text):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line and not line.startswith(";;;"):
            yield lineno, line


def strip_stress(phones):
    return [p.rstrip("012") for p in phones]


class Lexicon:
    """Uppercase word -> list of pronunciations (first listed is canonical)."""

    def __init__(self, entries, inventory=ARPABET):
        self.inventory = tuple(inventory)
        known = set(self.inventory)
        for word, prons in entries.items():
            if not prons:
                raise ValueError(f"lexicon entry {word!r} has no pronunciation")
            for pron in prons:
                bad = [p for p in strip_stress(pron) if p not in known]
                if bad:
                    raise ValueError(f"lexicon entry {word!r}: phonemes {bad} not in inventory")
        self.entries = {w.upper(): [list(p) for p in prons] for w, prons in entries.items()}

    @classmethod
    def load(cls, path, inventory=ARPABET):
        entries = {}
        text = Path(path).read_text("utf-8")
        for lineno, line in _content_lines(text):
            parts = line.split()
            if len(parts) < 2:
                raise ValueError(f"{path}:{lineno}: entry without phonemes")
            word = parts[0]
            m = _VARIANT.match(word)
            if m:
                word = m.group(1)
            entries.setdefault(word.upper(), []).append(parts[1:])
        return cls(entries, inventory)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for word in sorted(self.entries):
                for i, pron in enumerate(self.entries[word]):
                    key = word if i == 0 else f"{word}({i + 1})"
                    fh.write(f"{key}  {' '.join(pron)}\n")

    def __contains__(self, word):
        return word.upper() in self.entries

    def __len__(self):
        return len(self.entries)

    def lookup(self, word):
        if not word:
            raise ValueError("empty word")
        try:
            return list(self.entries[word.upper()][0])
        except KeyError:
            raise OOVError(word) from None


def lookup_pronunciation(lex, word):
    return lex.lookup(word)


@dataclass(frozen=True)
class BroadClassMap:
    mapping: dict
    classes: tuple

    def __post_init__(self):
        image = set(self.mapping.values())
        unused = [c for c in self.classes if c not in image]
        if unused:
            raise ValueError(f"broad classes {unused} have no phoneme")
        stray = image - set(self.classes)
        if stray:
            raise ValueError(f"mapping uses undeclared classes {sorted(stray)}")

    @classmethod
    def load(cls, path=None):
        mapping, classes = {}, []
        for lineno, line in _content_lines(_read_data("broad_classes.txt", path)):
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"broad class line {lineno}: expected 'PHONEME CLASS'")
            phone, cls_name = parts
            mapping[phone] = cls_name
            if cls_name not in classes:
                classes.append(cls_name)
        return cls(mapping, tuple(classes))

    def check_total(self, inventory):
        missing = [p for p in inventory if p not in self.mapping]
        if missing:
            raise ValueError(f"broad class map does not cover {missing}")


def to_broad_classes(phones, m):
    out = []
    for p in strip_stress(phones):
        try:
            out.append(m.mapping[p])
        except KeyError:
            raise ValueError(f"phoneme {p!r} has no broad class") from None
    return out


def load_onsets(path=None):
    onsets = {()}
    for _, line in _content_lines(_read_data("english_onsets.txt", path)):
        onsets.add(tuple(line.split()))
    return frozenset(onsets)


def is_vowel(phone, vowels=ARPABET_VOWELS):
    return phone[-1:].isdigit() or phone in vowels


def syllabify(phones, onsets=None, vowels=ARPABET_VOWELS):
    """Maximal-onset syllabification of a stressed phoneme sequence.

    Between two nuclei, the longest suffix of the consonant cluster that is a
    legal onset starts the next syllable; the rest closes the previous one.
    Word-initial and word-final clusters attach to the first and last syllable.
    """
    onsets = load_onsets() if onsets is None else onsets
    phones = list(phones)
    nuclei = [i for i, p in enumerate(phones) if is_vowel(p, vowels)]
    if not nuclei:
        raise NoNucleusError(f"no vowel in {phones}")
    starts = [0]
    for prev, nxt in zip(nuclei, nuclei[1:]):
        cluster = phones[prev + 1 : nxt]
        split = len(cluster)
        for cut in range(len(cluster) + 1):
            if tuple(strip_stress(cluster[cut:])) in onsets:
                split = cut
                break
        starts.append(prev + 1 + split)
    bounds = starts + [len(phones)]
    return [phones[a:b] for a, b in zip(bounds, bounds[1:])]


def syllable_symbol(syllable):
    return "_".join(strip_stress(syllable))


def tokenize(transcript):
    return _WORD.findall(transcript)


@dataclass(frozen=True)
class Taxonomy:
    """A unit inventory plus the transcript -> base-unit mapping.

    ``base_units`` is ``None`` for a syllable taxonomy whose inventory has not
    been induced from training data yet.
    """

    kind: str
    base_units: tuple | None
    broad_map: BroadClassMap | None = None
    onsets: frozenset | None = None
    vowels: tuple = ARPABET_VOWELS

    def __post_init__(self):
        if self.kind not in TAXONOMY_KINDS:
            raise ValueError(f"unknown taxonomy {self.kind!r}; choose from {TAXONOMY_KINDS}")
        if self.base_units is not None:
            units = tuple(self.base_units)
            if not units:
                raise ValueError("taxonomy inventory is empty")
            if len(set(units)) != len(units):
                raise ValueError("taxonomy inventory has duplicates")
            bad = [u for u in units if "@" in u]
            if bad:
                raise ValueError(f"unit symbols may not contain '@': {bad}")
            if self.kind == "utterance" and units != (UTTERANCE_UNIT,):
                raise ValueError("utterance taxonomy has exactly one unit")
            object.__setattr__(self, "base_units", units)

    def with_inventory(self, units):
        return Taxonomy(self.kind, tuple(units), self.broad_map, self.onsets, self.vowels)

    def units(self, lex, transcript, oov="exclude"):
        return transcript_to_base_units(self, lex, transcript, oov)


def make_taxonomy(kind, inventory=ARPABET, broad_map=None, onsets=None, vowels=ARPABET_VOWELS):
    if kind == "phoneme":
        return Taxonomy(kind, tuple(inventory), vowels=vowels)
    if kind == "broad_class":
        broad_map = BroadClassMap.load() if broad_map is None else broad_map
        broad_map.check_total(inventory)
        return Taxonomy(kind, broad_map.classes, broad_map=broad_map, vowels=vowels)
    if kind == "syllable":
        return Taxonomy(kind, None, onsets=load_onsets() if onsets is None else onsets, vowels=vowels)
    if kind == "utterance":
        return Taxonomy(kind, (UTTERANCE_UNIT,))
    raise ValueError(f"unknown taxonomy {kind!r}; choose from {TAXONOMY_KINDS}")


def _word_prons(lex, words, oov):
    for w in words:
        try:
            yield lex.lookup(w)
        except OOVError:
            if oov == "skip":
                continue
            raise


def transcript_to_base_units(t, lex, transcript, oov="exclude"):
    """Base unit sequence for ``transcript`` under taxonomy ``t``.

    ``oov="exclude"`` raises :class:`OOVError`; ``oov="skip"`` drops the word.
    """
    if t.kind == "utterance":
        return [UTTERANCE_UNIT]
    if oov not in ("exclude", "skip"):
        raise ValueError(f"unknown OOV policy {oov!r}")
    words = tokenize(transcript)
    if not words:
        raise ValueError(f"transcript {transcript!r} has no words")
    units = []
    for pron in _word_prons(lex, words, oov):
        if t.kind == "phoneme":
            units.extend(strip_stress(pron))
        elif t.kind == "broad_class":
            units.extend(to_broad_classes(pron, t.broad_map))
        else:
            try:
                syllables = syllabify(pron, t.onsets, t.vowels)
            except NoNucleusError:
                syllables = [pron]
            units.extend(syllable_symbol(s) for s in syllables)
    return units
