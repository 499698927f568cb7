import json
from collections import Counter

import numpy as np
import pytest

from edsr.acoustic import EncoderConfig, log_mel
from edsr.corpus import load_manifest, read_wav
from edsr.phonetics import Lexicon
from edsr.synth import SynthSpec, emotion_styles, generate, load_alignments


def corpus_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_deterministic(tmp_path):
    spec = SynthSpec(n_speakers=2, utterances_per_speaker=3, seed=11)
    generate(spec, tmp_path / "a")
    generate(spec, tmp_path / "b")
    assert corpus_bytes(tmp_path / "a") == corpus_bytes(tmp_path / "b")


def test_size_and_balance(tmp_path):
    spec = SynthSpec(
        n_speakers=6, utterances_per_speaker=100, unit_duration=(20, 30), words_per_utterance=(1, 1), seed=1
    )
    generate(spec, tmp_path)
    utts = load_manifest(tmp_path / "manifest.jsonl")
    assert len(utts) == 600
    counts = Counter(u.emotion for u in utts)
    assert max(counts.values()) - min(counts.values()) <= 1
    assert {u.sample_rate for u in utts} == {16000}
    audio, rate = read_wav(utts[0].audio_path)
    assert rate == 16000 and audio.ndim == 1


def test_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec(n_pseudo_phonemes=1)
    with pytest.raises(ValueError):
        SynthSpec(n_speakers=1)


def test_lexicon_and_alignments_agree(toy_corpus):
    root, utts, lex = toy_corpus
    assert (root / "phonemes.txt").read_text().split() == list(lex.inventory)
    align = load_alignments(root / "alignments.jsonl")
    for u in utts:
        pron = [p.rstrip("1") for w in u.transcript.split() for p in lex.lookup(w)]
        assert [s[0] for s in align[u.id]] == pron
        assert align[u.id][-1][2] <= len(u.audio)


def test_emotion_styles_are_label_consistent():
    styles = emotion_styles(("neu", "hap", "ang", "sad"))
    assert len(set(styles.values())) == 4
    assert emotion_styles(("neu", "hap"))["hap"] == styles["hap"]


def _labelled_frames(root, utts, cfg):
    align = load_alignments(root / "alignments.jsonl")
    feats, labels, speakers = [], [], []
    for u in utts:
        f = log_mel(u.audio, cfg)
        for phone, start, end in align[u.id]:
            # frames lying wholly inside the segment
            first = -(-start // cfg.frame_hop)
            last = (end - cfg.frame_window) // cfg.frame_hop
            for t in range(first, min(last, len(f) - 1) + 1):
                feats.append(f[t])
                labels.append(phone)
                speakers.append(u.speaker)
    return np.array(feats), np.array(labels), np.array(speakers)


def test_nearest_template_separability(tmp_path):
    spec = SynthSpec(n_speakers=3, utterances_per_speaker=12, seed=2)
    utts = generate(spec, tmp_path)
    feats, labels, speakers = _labelled_frames(tmp_path, utts, EncoderConfig(vocab_size=2))
    train, test = speakers != "spk03", speakers == "spk03"
    phones = sorted(set(labels))
    templates = np.stack([feats[train & (labels == p)].mean(axis=0) for p in phones])
    dist = ((feats[test][:, None, :] - templates[None]) ** 2).sum(axis=2)
    pred = np.array(phones)[dist.argmin(axis=1)]
    acc = (pred == labels[test]).mean()
    assert acc > 0.90, acc
