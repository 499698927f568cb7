import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from edsr.phonetics import (
    ARPABET,
    ARPABET_CONSONANTS,
    ARPABET_VOWELS,
    BroadClassMap,
    Lexicon,
    NoNucleusError,
    OOVError,
    Taxonomy,
    load_onsets,
    lookup_pronunciation,
    make_taxonomy,
    strip_stress,
    syllabify,
    to_broad_classes,
    transcript_to_base_units,
)

ONSETS = load_onsets()


def test_lookup(lexicon):
    assert lookup_pronunciation(lexicon, "happy") == ["HH", "AE1", "P", "IY0"]
    assert lookup_pronunciation(lexicon, "SAD") == ["S", "AE1", "D"]
    # first listed variant wins
    assert lookup_pronunciation(lexicon, "hello") == ["HH", "AH0", "L", "OW1"]
    with pytest.raises(OOVError) as err:
        lookup_pronunciation(lexicon, "zzzqx")
    assert err.value.word == "zzzqx"


def test_lexicon_rejects_unknown_phoneme():
    with pytest.raises(ValueError):
        Lexicon({"X": [["QQ"]]})


def test_lexicon_roundtrip(lexicon, tmp_path):
    lexicon.save(tmp_path / "lex.txt")
    again = Lexicon.load(tmp_path / "lex.txt")
    assert again.entries == lexicon.entries


def test_strip_stress():
    assert strip_stress(["HH", "AE1", "P", "IY0"]) == ["HH", "AE", "P", "IY"]
    assert strip_stress([]) == []
    assert strip_stress(["S", "T", "R"]) == ["S", "T", "R"]


def test_broad_classes():
    m = BroadClassMap.load()
    assert to_broad_classes(["HH", "AE", "P", "IY"], m) == ["fricative", "vowel", "stop", "vowel"]
    assert to_broad_classes([], m) == []
    assert to_broad_classes(list(ARPABET_VOWELS), m) == ["vowel"] * 15
    assert to_broad_classes(["AE1"], m) == ["vowel"]
    assert len(m.classes) == 7
    m.check_total(ARPABET)
    with pytest.raises(ValueError, match="QQ"):
        to_broad_classes(["QQ"], m)


def test_inventory_size():
    assert len(ARPABET) == 39 and len(ARPABET_CONSONANTS) == 24


@pytest.mark.parametrize(
    "phones, expected",
    [
        (["HH", "AE1", "P", "IY0"], [["HH", "AE1"], ["P", "IY0"]]),
        (["AE1"], [["AE1"]]),
        (["AE1", "B", "S", "T", "R", "AA1"], [["AE1", "B"], ["S", "T", "R", "AA1"]]),
        (["EH1", "K", "S", "T", "R", "AH0"], [["EH1", "K"], ["S", "T", "R", "AH0"]]),
        (["AA1", "N", "T", "IY0"], [["AA1", "N"], ["T", "IY0"]]),
        (["AA1", "NG", "AA0"], [["AA1", "NG"], ["AA0"]]),
    ],
)
def test_syllabify_examples(phones, expected):
    assert syllabify(phones, ONSETS) == expected


def test_no_vowel():
    with pytest.raises(NoNucleusError):
        syllabify(["S", "T"], ONSETS)


def brute_force_syllabify(phones):
    """Try every split of every intervocalic cluster; keep legal onsets, prefer
    the longest onset at each boundary from left to right."""
    nuclei = [i for i, p in enumerate(phones) if p[-1].isdigit()]
    choices = []
    for a, b in zip(nuclei, nuclei[1:]):
        legal = [c for c in range(a + 1, b + 1) if c == b or tuple(strip_stress(phones[c:b])) in ONSETS]
        choices.append(legal)
    best = None
    for starts in itertools.product(*choices):
        onsets = [nuclei[i + 1] - s for i, s in enumerate(starts)]
        if best is None or onsets > best[0]:
            best = (onsets, starts)
    bounds = [0, *best[1], len(phones)]
    return [phones[x:y] for x, y in zip(bounds, bounds[1:])]


phone_seq = st.lists(
    st.one_of(st.sampled_from([v + "1" for v in ARPABET_VOWELS]), st.sampled_from(ARPABET_CONSONANTS)),
    min_size=1,
    max_size=8,
).filter(lambda ps: any(p[-1].isdigit() for p in ps))


@given(phone_seq)
def test_syllabify_matches_brute_force(phones):
    assert syllabify(phones, ONSETS) == brute_force_syllabify(phones)


@given(phone_seq)
def test_syllabify_properties(phones):
    sylls = syllabify(phones, ONSETS)
    assert [p for s in sylls for p in s] == phones
    for s in sylls:
        assert sum(p[-1].isdigit() for p in s) == 1
    for s in sylls[1:]:
        k = next(i for i, p in enumerate(s) if p[-1].isdigit())
        assert k == 0 or tuple(s[:k]) in ONSETS


def test_transcript_units(lexicon):
    ph = make_taxonomy("phoneme")
    assert transcript_to_base_units(ph, lexicon, "happy") == ["HH", "AE", "P", "IY"]
    assert transcript_to_base_units(ph, lexicon, "I am so happy!") == ["AY", "AE", "M", "S", "OW", "HH", "AE", "P", "IY"]
    bc = make_taxonomy("broad_class")
    assert transcript_to_base_units(bc, lexicon, "happy") == ["fricative", "vowel", "stop", "vowel"]
    ut = make_taxonomy("utterance")
    assert transcript_to_base_units(ut, lexicon, "anything zzzqx at all") == ["[UTT]"]
    sy = make_taxonomy("syllable")
    assert transcript_to_base_units(sy, lexicon, "happy abstract") == ["HH_AE", "P_IY", "AE_B", "S_T_R_AE_K_T"]
    # a vowelless word becomes one syllable
    assert transcript_to_base_units(sy, lexicon, "mm") == ["M"]


def test_oov_policies(lexicon):
    ph = make_taxonomy("phoneme")
    with pytest.raises(OOVError):
        transcript_to_base_units(ph, lexicon, "happy zzzqx")
    assert transcript_to_base_units(ph, lexicon, "happy zzzqx", oov="skip") == ["HH", "AE", "P", "IY"]


def test_taxonomy_validation():
    with pytest.raises(ValueError):
        Taxonomy("phoneme", ("A@B",))
    with pytest.raises(ValueError):
        Taxonomy("utterance", ("X", "Y"))
    with pytest.raises(ValueError):
        make_taxonomy("morpheme")
    assert make_taxonomy("syllable").base_units is None
