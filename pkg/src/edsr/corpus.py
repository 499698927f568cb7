"""Manifests, audio I/O, resampling, emotion labels and speaker folds."""

import json
import logging
import wave
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

CANONICAL_EMOTIONS = ("neu", "hap", "ang", "sad")
TARGET_RATE = 16000
SUPPORTED_RATES = (8000, 16000)
MANIFEST_KEYS = ("id", "audio_path", "sample_rate", "speaker", "transcript", "emotion", "language")
DROP = "-"


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class EmotionSet:
    """Ordered emotion inventory. Order fixes tie-breaking and confusion axes."""

    emotions: tuple = CANONICAL_EMOTIONS

    def __post_init__(self):
        emotions = tuple(self.emotions)
        if not emotions:
            raise ValueError("emotion set is empty")
        if len(set(emotions)) != len(emotions):
            raise ValueError(f"duplicate emotions in {emotions}")
        object.__setattr__(self, "emotions", emotions)

    @property
    def n(self):
        return len(self.emotions)

    def index(self, emotion):
        return self.emotions.index(emotion)

    def __iter__(self):
        return iter(self.emotions)

    def __len__(self):
        return len(self.emotions)

    def __contains__(self, emotion):
        return emotion in self.emotions


@dataclass(eq=False)
class Utterance:
    id: str
    audio_path: str | None
    sample_rate: int
    speaker: str
    transcript: str
    emotion: str
    language: str = "en"
    audio: np.ndarray | None = field(default=None, repr=False)

    def waveform(self):
        """The waveform as float64 in [-1, 1], read lazily from ``audio_path``."""
        if self.audio is None:
            if self.audio_path is None:
                raise ManifestError(f"utterance {self.id} has neither audio nor audio_path")
            audio, rate = read_wav(self.audio_path)
            if rate != self.sample_rate:
                raise ManifestError(
                    f"utterance {self.id}: manifest says {self.sample_rate} Hz, file is {rate} Hz"
                )
            self.audio = audio
        return self.audio

    @property
    def num_samples(self):
        return len(self.waveform())

    def to_record(self):
        return {
            "id": self.id,
            "audio_path": self.audio_path,
            "sample_rate": self.sample_rate,
            "speaker": self.speaker,
            "transcript": self.transcript,
            "emotion": self.emotion,
            "language": self.language,
        }


def load_alias_table(path=None):
    """Parse ``label = canonical`` lines. ``None`` loads the bundled table."""
    if path is None:
        text = resources.files("edsr").joinpath("data/emotion_aliases.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    table = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"alias table line {lineno}: expected 'label = emotion'")
        label, target = (part.strip() for part in line.split("=", 1))
        table[label.lower()] = target
    return table


def canonicalize_emotion(label, aliases, emotions=CANONICAL_EMOTIONS):
    """Map a corpus label to a canonical id; ``None`` means drop the utterance.

    Raises ``KeyError`` for labels absent from the table.
    """
    target = aliases.get(str(label).strip().lower())
    if target is None:
        if label in emotions:
            return label
        raise KeyError(label)
    if target == DROP:
        return None
    if target not in emotions:
        raise ValueError(f"alias table maps {label!r} to unknown emotion {target!r}")
    return target


def load_manifest(path, aliases=None, emotions=CANONICAL_EMOTIONS):
    """Read a JSONL manifest, canonicalize emotions, drop out-of-task labels."""
    aliases = load_alias_table() if aliases is None else aliases
    path = Path(path)
    utts, seen, dropped = [], set(), 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise ManifestError(f"{path}:{lineno}: expected a JSON object")
            missing = [k for k in MANIFEST_KEYS if k not in rec]
            if missing:
                raise ManifestError(f"{path}:{lineno}: missing keys {missing}")
            uid = str(rec["id"])
            if uid in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate id {uid!r}")
            seen.add(uid)
            try:
                emotion = canonicalize_emotion(rec["emotion"], aliases, emotions)
            except KeyError:
                raise ManifestError(
                    f"{path}:{lineno}: utterance {uid!r} has unknown emotion {rec['emotion']!r}"
                ) from None
            if emotion is None:
                dropped += 1
                continue
            rate = int(rec["sample_rate"])
            if rate not in SUPPORTED_RATES:
                raise ManifestError(f"{path}:{lineno}: unsupported sample rate {rate}")
            audio_path = rec["audio_path"]
            if audio_path is not None and not Path(audio_path).is_absolute():
                audio_path = str(path.parent / audio_path)
            utts.append(
                Utterance(
                    id=uid,
                    audio_path=audio_path,
                    sample_rate=rate,
                    speaker=str(rec["speaker"]),
                    transcript=str(rec["transcript"]),
                    emotion=emotion,
                    language=str(rec["language"]),
                )
            )
    if dropped:
        log.info("%s: dropped %d utterances outside %s", path, dropped, list(emotions))
    return utts


def write_manifest(path, utts):
    with open(path, "w", encoding="utf-8") as fh:
        for u in utts:
            fh.write(json.dumps(u.to_record(), ensure_ascii=False) + "\n")


def read_wav(path):
    """Read 16-bit PCM WAV; multi-channel input is averaged to mono."""
    with wave.open(str(path), "rb") as wf:
        if wf.getsampwidth() != 2:
            raise ValueError(f"{path}: only 16-bit PCM is supported")
        rate = wf.getframerate()
        channels = wf.getnchannels()
        data = np.frombuffer(wf.readframes(wf.getnframes()), dtype="<i2")
    audio = data.astype(np.float64) / 32768.0
    if channels > 1:
        audio = audio.reshape(-1, channels).mean(axis=1)
    return audio, rate


def write_wav(path, audio, rate):
    pcm = np.clip(np.round(np.asarray(audio) * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(pcm.tobytes())


def _kaiser_sinc(cutoff, half_width, beta):
    """Windowed-sinc lowpass; ``cutoff`` in cycles/sample of the output rate."""
    n = np.arange(-half_width, half_width + 1)
    h = 2 * cutoff * np.sinc(2 * cutoff * n) * np.kaiser(len(n), beta)
    return h / h.sum()


# Passband edge sits below the old Nyquist so the transition band is
# finished by 4 kHz: nothing new lands above the original band.
_UPSAMPLE_FILTER = _kaiser_sinc(cutoff=0.225, half_width=96, beta=9.0)


def upsample_2x(audio):
    """Band-limited 2x interpolation: zero-stuff, then windowed-sinc lowpass."""
    audio = np.asarray(audio, dtype=np.float64)
    stuffed = np.zeros(2 * len(audio))
    stuffed[::2] = audio
    h = _UPSAMPLE_FILTER
    half = (len(h) - 1) // 2
    filtered = np.convolve(stuffed, 2.0 * h, mode="full")
    return filtered[half : half + len(stuffed)]


def resample_to_16k(utt):
    """Return ``utt`` at 16 kHz. 8 kHz input is upsampled with no new content
    above 4 kHz; 16 kHz input is returned unchanged."""
    if utt.sample_rate == TARGET_RATE:
        return utt
    if utt.sample_rate != 8000:
        raise ValueError(f"cannot resample utterance {utt.id}: unsupported rate {utt.sample_rate} Hz")
    return replace(utt, audio=upsample_2x(utt.waveform()), sample_rate=TARGET_RATE)


@dataclass(frozen=True)
class Fold:
    fold_id: int
    train: tuple
    test: tuple


@dataclass(frozen=True)
class FoldSpec:
    folds: tuple
    grouping_key: str = "speaker"

    def __iter__(self):
        return iter(self.folds)

    def __len__(self):
        return len(self.folds)

    def to_json(self):
        return [{"fold_id": f.fold_id, "train": list(f.train), "test": list(f.test)} for f in self.folds]

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(tuple(Fold(int(d["fold_id"]), tuple(d["train"]), tuple(d["test"])) for d in data))


def speakers_in_order(utts):
    return list(dict.fromkeys(u.speaker for u in utts))


def make_folds(utts, mode="leave-one-speaker-out", k=None):
    """Speaker-grouped cross-validation folds, in order of first appearance."""
    speakers = speakers_in_order(utts)
    if mode == "leave-one-speaker-out":
        if len(speakers) < 2:
            raise ValueError("leave-one-speaker-out needs at least 2 speakers")
        groups = [[s] for s in speakers]
    elif mode == "k-fold-by-speaker":
        if k is None or k < 2:
            raise ValueError("k-fold-by-speaker needs k >= 2")
        if k > len(speakers):
            raise ValueError(f"k={k} exceeds the number of speakers ({len(speakers)})")
        groups = [speakers[i::k] for i in range(k)]
    else:
        raise ValueError(f"unknown fold mode {mode!r}")
    folds = []
    for i, group in enumerate(groups):
        held = set(group)
        test = tuple(u.id for u in utts if u.speaker in held)
        train = tuple(u.id for u in utts if u.speaker not in held)
        folds.append(Fold(i, train, test))
    return FoldSpec(tuple(folds))
