import json

import pytest

from edsr.corpus import EmotionSet, Utterance
from edsr.phonetics import make_taxonomy
from edsr.targets import (
    UnitVocabulary,
    build_targets,
    build_vocabulary,
    load_targets,
    load_vocabulary,
    save_exclusions,
    save_targets,
    save_vocabulary,
    split_tag,
    strip_tag,
)

ES = EmotionSet()


def utt(uid, transcript, emotion="hap"):
    return Utterance(uid, None, 16000, "s1", transcript, emotion)


@pytest.mark.parametrize("kind, size", [("phoneme", 157), ("utterance", 5), ("broad_class", 29)])
def test_vocabulary_sizes(kind, size):
    v = build_vocabulary(make_taxonomy(kind), ES)
    assert len(v) == size
    assert v.tokens[0] == "<blank>"


def test_utterance_vocabulary_tokens():
    v = build_vocabulary(make_taxonomy("utterance"), ES)
    assert v.tokens == ("<blank>", "[UTT]@neu", "[UTT]@hap", "[UTT]@ang", "[UTT]@sad")


def test_syllable_vocabulary_is_induced(lexicon):
    v = build_vocabulary(make_taxonomy("syllable"), ES, [utt("a", "happy"), utt("b", "sad happy")], lexicon)
    assert v.base_units == ("HH_AE", "P_IY", "S_AE_D")
    assert len(v) == 3 * 4 + 1
    with pytest.raises(ValueError):
        build_vocabulary(make_taxonomy("syllable"), ES, [utt("c", "zzzqx")], lexicon)


def test_happy_targets(lexicon):
    tax = make_taxonomy("phoneme")
    v = build_vocabulary(tax, ES)
    targets, excl = build_targets(tax, lexicon, v, [utt("a", "happy")])
    assert excl == []
    assert v.decode(targets[0].token_ids) == ["HH@hap", "AE@hap", "P@hap", "IY@hap"]


def test_utterance_targets(lexicon):
    tax = make_taxonomy("utterance")
    v = build_vocabulary(tax, ES)
    targets, _ = build_targets(tax, lexicon, v, [utt("a", "zzzqx", "sad")])
    assert v.decode(targets[0].token_ids) == ["[UTT]@sad"]


def test_oov_is_excluded_with_reason(lexicon, tmp_path):
    tax = make_taxonomy("phoneme")
    v = build_vocabulary(tax, ES)
    targets, excl = build_targets(tax, lexicon, v, [utt("a", "happy"), utt("b", "happy zzzqx")])
    assert [t.utterance_id for t in targets] == ["a"]
    assert [(e.id, e.reason) for e in excl] == [("b", "oov:zzzqx")]
    save_exclusions(tmp_path / "ex.jsonl", excl)
    assert json.loads((tmp_path / "ex.jsonl").read_text()) == {"id": "b", "reason": "oov:zzzqx"}
    targets, excl = build_targets(tax, lexicon, v, [utt("b", "happy zzzqx")], oov="skip")
    assert len(targets) == 1 and not excl


def test_unseen_syllable_is_excluded(lexicon):
    tax = make_taxonomy("syllable")
    v = build_vocabulary(tax, ES, [utt("a", "happy")], lexicon)
    targets, excl = build_targets(tax.with_inventory(v.base_units), lexicon, v, [utt("b", "sad")])
    assert not targets and excl[0].reason.startswith("unknown_token:")


def test_targets_deterministic(lexicon, tmp_path):
    tax = make_taxonomy("broad_class")
    v = build_vocabulary(tax, ES)
    utts = [utt("a", "happy world"), utt("b", "I am angry", "ang")]
    for name in ("one.txt", "two.txt"):
        save_targets(tmp_path / name, build_targets(tax, lexicon, v, utts)[0], v)
    assert (tmp_path / "one.txt").read_bytes() == (tmp_path / "two.txt").read_bytes()
    assert load_targets(tmp_path / "one.txt", v) == build_targets(tax, lexicon, v, utts)[0]


def test_vocabulary_roundtrip(tmp_path):
    v = build_vocabulary(make_taxonomy("broad_class"), ES)
    save_vocabulary(v, tmp_path / "v.txt")
    assert load_vocabulary(tmp_path / "v.txt") == v
    assert v.emotions == ES.emotions


@pytest.mark.parametrize(
    "content",
    ["", "AA@neu\n<blank>\n", "<blank>\nAA@neu\nAA@neu\n", "<blank>\nAA\n", "<blank>\n"],
)
def test_bad_vocabulary_files(tmp_path, content):
    (tmp_path / "v.txt").write_text(content)
    with pytest.raises(ValueError):
        load_vocabulary(tmp_path / "v.txt")


def test_tags():
    assert split_tag("AA@hap") == ("AA", "hap")
    assert strip_tag("[UTT]@sad") == "[UTT]"
    with pytest.raises(ValueError):
        split_tag("AA")
    with pytest.raises(ValueError):
        UnitVocabulary(["<blank>", "AA"])
