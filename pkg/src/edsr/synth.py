"""Deterministic toy phonetic world for desk-scale pipeline checks.

Pseudo-phonemes (named with ARPAbet symbols so the default broad classes and
onset inventory apply) are rendered as harmonic or noise spectra with fixed
formant-like envelopes. Each emotion applies one pitch level, loudness and
per-unit amplitude/pitch contour to every unit; each speaker applies a fixed
spectral tilt and a small pitch scale.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from edsr.corpus import CANONICAL_EMOTIONS, TARGET_RATE, EmotionSet, Utterance, write_manifest, write_wav
from edsr.phonetics import ARPABET_VOWELS, Lexicon

PHONEME_POOL = ("AA", "S", "IY", "M", "T", "UW", "N", "F", "EH", "L")
SPELLING = {"AA": "a", "S": "s", "IY": "i", "M": "m", "T": "t", "UW": "u", "N": "n", "F": "f", "EH": "e", "L": "l"}

# (centre Hz, bandwidth Hz, relative gain) per formant
_VOICED = {
    "AA": [(730, 120, 1.0), (1090, 140, 0.6), (2440, 200, 0.3)],
    "IY": [(270, 90, 1.0), (2290, 180, 0.6), (3010, 220, 0.4)],
    "UW": [(300, 90, 1.0), (870, 120, 0.5), (2240, 200, 0.2)],
    "EH": [(530, 110, 1.0), (1840, 160, 0.6), (2480, 200, 0.3)],
    "M": [(250, 80, 0.6), (1200, 200, 0.08)],
    "N": [(250, 80, 0.6), (1700, 200, 0.1)],
    "L": [(360, 100, 0.8), (1300, 160, 0.3), (2700, 220, 0.2)],
}
# (low Hz, high Hz, gain) noise bands
_NOISE = {"S": (4200, 7200, 0.35), "F": (1500, 7500, 0.12), "T": (2000, 5500, 0.5)}

# pitch Hz, loudness, contour name
_EMOTION_STYLE = {
    "neu": (125.0, 1.0, "flat"),
    "hap": (205.0, 1.1, "bump"),
    "ang": (160.0, 1.5, "attack"),
    "sad": (95.0, 0.55, "decay"),
}
_EXTRA_STYLES = [(140.0, 0.8, "flat"), (180.0, 1.3, "bump"), (110.0, 0.7, "attack")]


@dataclass
class SynthSpec:
    n_pseudo_phonemes: int = 5
    emotions: EmotionSet = field(default_factory=EmotionSet)
    n_speakers: int = 6
    utterances_per_speaker: int = 40
    unit_duration: tuple = (120, 240)
    words_per_utterance: tuple = (2, 4)
    n_words: int = 16
    # per-speaker pitch scale range; wide enough that emotion pitch levels overlap across speakers
    speaker_pitch: tuple = (0.88, 1.14)
    gain_jitter_db: float = 2.0  # per-utterance level jitter
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.emotions, EmotionSet):
            self.emotions = EmotionSet(tuple(self.emotions))
        if not 2 <= self.n_pseudo_phonemes <= len(PHONEME_POOL):
            raise ValueError(f"n_pseudo_phonemes must be in [2, {len(PHONEME_POOL)}]")
        if self.n_speakers < 2:
            raise ValueError("n_speakers must be >= 2")
        if self.utterances_per_speaker < 1:
            raise ValueError("utterances_per_speaker must be >= 1")

    @property
    def phonemes(self):
        phones = PHONEME_POOL[: self.n_pseudo_phonemes]
        if not any(p in ARPABET_VOWELS for p in phones):
            raise ValueError("pseudo-phoneme set has no vowel")
        return phones


def emotion_styles(emotions):
    styles, extra = {}, iter(_EXTRA_STYLES)
    for e in emotions:
        styles[e] = _EMOTION_STYLE.get(e) or next(extra)
    return styles


def _contour(kind, n):
    tau = np.linspace(0.0, 1.0, n, endpoint=False)
    if kind == "flat":
        return np.ones(n), np.ones(n)
    if kind == "bump":
        return 0.55 + 0.45 * np.sin(np.pi * tau), 1.0 + 0.08 * tau
    if kind == "attack":
        return 0.45 + 0.55 * np.exp(-4.0 * tau), np.ones(n)
    if kind == "decay":
        return 1.0 - 0.6 * tau, 1.0 - 0.07 * tau
    raise ValueError(kind)


def _envelope(freqs, formants):
    env = np.full_like(freqs, 0.01)
    for centre, bw, gain in formants:
        env += gain * np.exp(-0.5 * ((freqs - centre) / bw) ** 2)
    return env


def _band_noise(rng, n, lo, hi, sr=TARGET_RATE):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / sr)
    spec[(f < lo) | (f > hi)] = 0.0
    x = np.fft.irfft(spec, n)
    return x / (np.std(x) + 1e-12)


class _Renderer:
    def __init__(self, styles, sr=TARGET_RATE):
        self.styles = styles
        self.sr = sr
        self.phase = 0.0

    def unit(self, rng, phone, n, emotion, tilt, pitch_scale):
        f0_base, loud, contour = self.styles[emotion]
        amp, f0_shape = _contour(contour, n)
        tilt_gain = lambda f: (np.maximum(f, 100.0) / 1000.0) ** tilt  # noqa: E731
        if phone in _VOICED:
            f0 = f0_base * pitch_scale * f0_shape
            phase = self.phase + 2 * np.pi * np.cumsum(f0) / self.sr
            self.phase = float(phase[-1] % (2 * np.pi))
            x = np.zeros(n)
            for h in range(1, int(7600 // f0.max()) + 1):
                fh = h * f0
                x += _envelope(fh, _VOICED[phone]) * tilt_gain(fh) * np.sin(h * phase) / np.sqrt(h)
            x *= 0.12
        else:
            lo, hi, gain = _NOISE[phone]
            x = gain * _band_noise(rng, n, lo, hi) * tilt_gain(np.array(0.5 * (lo + hi)))
            if phone == "T":
                closure = int(0.55 * n)
                x[:closure] = 0.0
                x[closure:] *= np.exp(-np.linspace(0.0, 5.0, n - closure))
            x *= 0.12
        return x * loud * amp


def _make_words(rng, phonemes, n_words):
    vowels = [p for p in phonemes if p in ARPABET_VOWELS]
    consonants = [p for p in phonemes if p not in ARPABET_VOWELS]
    words = {}
    while len(words) < n_words:
        pron = []
        for _ in range(int(rng.integers(1, 3))):
            if consonants and rng.random() < 0.75:
                pron.append(consonants[rng.integers(len(consonants))])
            pron.append(vowels[rng.integers(len(vowels))])
        if consonants and rng.random() < 0.4:
            pron.append(consonants[rng.integers(len(consonants))])
        spelling = "".join(SPELLING[p] for p in pron)
        words.setdefault(spelling, pron)
        if len(words) >= 4 ** len(phonemes):
            break
    return words


def generate(spec, out_dir):
    """Write ``manifest.jsonl``, ``lexicon.txt``, ``alignments.jsonl`` and WAVs.

    Returns the list of generated :class:`Utterance` objects (audio attached).
    """
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    phonemes = spec.phonemes
    words = _make_words(rng, phonemes, spec.n_words)
    vocab_words = sorted(words)
    lexicon = Lexicon({w.upper(): [_stress(words[w])] for w in vocab_words}, inventory=phonemes)
    styles = emotion_styles(spec.emotions)
    speakers = [
        (f"spk{s + 1:02d}", float(rng.uniform(-0.5, 0.5)), float(rng.uniform(*spec.speaker_pitch)))
        for s in range(spec.n_speakers)
    ]
    lo, hi = spec.unit_duration
    utts, alignments = [], []
    for s_idx, (speaker, tilt, pitch_scale) in enumerate(speakers):
        for i in range(spec.utterances_per_speaker):
            emotion = spec.emotions.emotions[(i + s_idx) % spec.emotions.n]
            n_w = int(rng.integers(spec.words_per_utterance[0], spec.words_per_utterance[1] + 1))
            chosen = [vocab_words[j] for j in rng.integers(len(vocab_words), size=n_w)]
            renderer = _Renderer(styles)
            pieces, segs, cursor = [], [], 0
            lead = int(rng.integers(1600, 3200))
            pieces.append(np.zeros(lead))
            cursor += lead
            for w_i, w in enumerate(chosen):
                if w_i:
                    gap = int(rng.integers(0, 800))
                    pieces.append(np.zeros(gap))
                    cursor += gap
                for phone in words[w]:
                    n = int(rng.uniform(lo, hi) * TARGET_RATE / 1000)
                    pieces.append(renderer.unit(rng, phone, n, emotion, tilt, pitch_scale))
                    segs.append([phone, cursor, cursor + n])
                    cursor += n
            pieces.append(np.zeros(int(rng.integers(1600, 3200))))
            audio = np.concatenate(pieces)
            audio += 0.002 * rng.standard_normal(len(audio))
            audio *= 10 ** (rng.uniform(-1.0, 1.0) * spec.gain_jitter_db / 20)
            audio = np.clip(audio, -0.99, 0.99)
            uid = f"{speaker}_{i:04d}"
            rel = f"wav/{uid}.wav"
            write_wav(out_dir / rel, audio, TARGET_RATE)
            pcm = np.round(audio * 32767.0) / 32768.0
            utts.append(Utterance(uid, rel, TARGET_RATE, speaker, " ".join(chosen), emotion, "x-toy", audio=pcm))
            alignments.append({"id": uid, "segments": segs})
    write_manifest(out_dir / "manifest.jsonl", utts)
    lexicon.save(out_dir / "lexicon.txt")
    (out_dir / "phonemes.txt").write_text("\n".join(phonemes) + "\n", encoding="utf-8")
    with open(out_dir / "alignments.jsonl", "w", encoding="utf-8") as fh:
        for a in alignments:
            fh.write(json.dumps(a) + "\n")
    return utts


def _stress(pron):
    return [p + "1" if p in ARPABET_VOWELS else p for p in pron]


def load_alignments(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            out[rec["id"]] = [tuple(s) for s in rec["segments"]]
    return out
