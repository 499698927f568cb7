"""Acoustic encoders producing frame logits over the emotion-dependent units.

``AcousticModel`` = encoder body + linear head. The head is the only part
trained during the head-only phase, so parameters are partitioned by the
``encoder.`` / ``head.`` name prefixes.
"""

from dataclasses import asdict, dataclass, field, replace

import numpy as np
import torch
from torch import nn

from edsr.ctc import log_softmax

CHECKPOINT_FORMAT = "edsr-checkpoint"
CHECKPOINT_VERSION = 1


class CapabilityError(RuntimeError):
    """A requested encoder backend is not available in this environment."""


@dataclass
class EncoderConfig:
    vocab_size: int
    backend: str = "toy"
    sample_rate: int = 16000
    frame_window: int = 400  # 25 ms
    frame_hop: int = 320  # 20 ms
    feature_dim: int = 40
    hidden_dim: int = 64
    n_blocks: int = 2
    n_heads: int = 4
    conv_kernel: int = 5
    adapter: dict = field(default_factory=dict)

    def num_frames(self, n_samples):
        if n_samples < self.frame_window:
            raise ValueError(
                f"waveform of {n_samples} samples is shorter than one {self.frame_window}-sample window"
            )
        return (n_samples - self.frame_window) // self.frame_hop + 1


def mel_filterbank(n_mels=40, n_fft=512, sr=16000, fmin=0.0, fmax=None):
    """Triangular filters evenly spaced on the HTK mel scale."""
    fmax = sr / 2 if fmax is None else fmax

    def hz2mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def mel2hz(m):
        return 700.0 * (10 ** (m / 2595.0) - 1.0)

    edges = mel2hz(np.linspace(hz2mel(fmin), hz2mel(fmax), n_mels + 2))
    bins = np.fft.rfftfreq(n_fft, 1.0 / sr)
    fb = np.zeros((n_mels, len(bins)))
    for i in range(n_mels):
        lo, mid, hi = edges[i : i + 3]
        rise = (bins - lo) / (mid - lo)
        fall = (hi - bins) / (hi - mid)
        fb[i] = np.maximum(0.0, np.minimum(rise, fall))
    return fb


_MEL_CACHE = {}


def log_mel(waveform, cfg):
    """``(T, feature_dim)`` log mel energies on the configured frame grid."""
    x = np.asarray(waveform, dtype=np.float64)
    T = cfg.num_frames(len(x))
    n_fft = 1 << (cfg.frame_window - 1).bit_length()
    key = (cfg.feature_dim, n_fft, cfg.sample_rate)
    if key not in _MEL_CACHE:
        _MEL_CACHE[key] = mel_filterbank(cfg.feature_dim, n_fft, cfg.sample_rate)
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.frame_window)[:: cfg.frame_hop][:T]
    spec = np.abs(np.fft.rfft(frames * np.hanning(cfg.frame_window), n=n_fft)) ** 2
    return np.log(spec @ _MEL_CACHE[key].T + 1e-8).astype(np.float32)


class _Block(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, 2 * dim), nn.GELU(), nn.Linear(2 * dim, dim))

    def forward(self, x, pad_mask):
        h = self.norm1(x)
        x = x + self.attn(h, h, h, key_padding_mask=pad_mask, need_weights=False)[0]
        return x + self.ff(self.norm2(x))


class ToyEncoder(nn.Module):
    """Log-mel -> two convolutions -> self-attention blocks."""

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        d, k = cfg.hidden_dim, cfg.conv_kernel
        self.register_buffer("feat_mean", torch.zeros(cfg.feature_dim))
        self.register_buffer("feat_std", torch.ones(cfg.feature_dim))
        self.conv = nn.Sequential(
            nn.Conv1d(cfg.feature_dim, d, k, padding=k // 2),
            nn.GELU(),
            nn.Conv1d(d, d, k, padding=k // 2),
            nn.GELU(),
        )
        self.blocks = nn.ModuleList(_Block(d, cfg.n_heads) for _ in range(cfg.n_blocks))
        self.norm = nn.LayerNorm(d)

    def prepare(self, waveform):
        return torch.from_numpy(log_mel(waveform, self.cfg))

    def set_feature_stats(self, feats):
        """Global mean/variance normalisation from a list of prepared inputs."""
        allf = torch.cat(list(feats))
        self.feat_mean.copy_(allf.mean(0))
        self.feat_std.copy_(allf.std(0).clamp_min(1e-3))

    def forward(self, inputs):
        lengths = [len(x) for x in inputs]
        x = nn.utils.rnn.pad_sequence(list(inputs), batch_first=True)
        pad = torch.arange(x.shape[1])[None, :] >= torch.tensor(lengths)[:, None]
        x = ((x - self.feat_mean) / self.feat_std).masked_fill(pad[..., None], 0.0)
        keep = ~pad[:, None, :]
        x = self.conv[1](self.conv[0](x.transpose(1, 2))) * keep
        x = self.conv[3](self.conv[2](x)).transpose(1, 2)
        for block in self.blocks:
            x = block(x, pad)
        return self.norm(x), lengths


class Wav2Vec2Encoder(nn.Module):
    """Adapter around a HuggingFace ``Wav2Vec2Model`` (optional dependency)."""

    def __init__(self, cfg):
        super().__init__()
        try:
            from transformers import Wav2Vec2Config, Wav2Vec2Model
        except ImportError as exc:
            raise CapabilityError("wav2vec2 backend needs the 'transformers' package") from exc
        self.cfg = cfg
        opts = cfg.adapter
        if opts.get("path"):
            try:
                self.model = Wav2Vec2Model.from_pretrained(opts["path"])
            except (OSError, ValueError) as exc:
                raise CapabilityError(f"cannot load wav2vec2 weights from {opts['path']!r}: {exc}") from exc
        elif "config" in opts:
            self.model = Wav2Vec2Model(Wav2Vec2Config(**opts["config"]))
        else:
            raise CapabilityError("wav2vec2 adapter needs 'path' or 'config'")
        self.output_dim = self.model.config.hidden_size

    def prepare(self, waveform):
        x = torch.as_tensor(np.asarray(waveform), dtype=torch.float32)
        return (x - x.mean()) / (x.std() + 1e-7)

    def set_feature_stats(self, feats):
        pass

    def forward(self, inputs):
        lengths = [self.cfg.num_frames(len(x)) for x in inputs]
        x = nn.utils.rnn.pad_sequence(list(inputs), batch_first=True)
        mask = torch.zeros(x.shape, dtype=torch.long)
        for i, x_i in enumerate(inputs):
            mask[i, : len(x_i)] = 1
        hidden = self.model(x, attention_mask=mask).last_hidden_state
        return hidden[:, : max(lengths)], lengths


ENCODERS = {"toy": ToyEncoder, "wav2vec2": Wav2Vec2Encoder}


class AcousticModel(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        try:
            body_cls = ENCODERS[cfg.backend]
        except KeyError:
            raise CapabilityError(f"unknown encoder backend {cfg.backend!r}") from None
        self.encoder = body_cls(cfg)
        width = getattr(self.encoder, "output_dim", cfg.hidden_dim)
        self.head = nn.Linear(width, cfg.vocab_size)

    def prepare(self, waveform):
        self.cfg.num_frames(len(waveform))
        return self.encoder.prepare(waveform)

    def num_frames(self, n_samples):
        return self.cfg.num_frames(n_samples)

    def forward(self, inputs, train_encoder=True):
        """Padded ``(B, T, V)`` logits and per-item frame counts."""
        if train_encoder:
            hidden, lengths = self.encoder(inputs)
        else:
            with torch.no_grad():
                hidden, lengths = self.encoder(inputs)
        return self.head(hidden), lengths

    def encoder_parameters(self):
        return [p for n, p in self.named_parameters() if n.startswith("encoder.")]

    def head_parameters(self):
        return [p for n, p in self.named_parameters() if n.startswith("head.")]

    @torch.no_grad()
    def encode(self, waveform):
        """``(T, V)`` float64 logits for one waveform."""
        was_training = self.training
        self.eval()
        logits, lengths = self.forward([self.prepare(waveform)])
        self.train(was_training)
        return logits[0, : lengths[0]].double().numpy()

    def posteriorgram(self, waveform):
        return log_softmax(self.encode(waveform))


def init_model(cfg, seed=0):
    """Fresh model; deterministic in ``seed``. Head bias starts at zero."""
    gen_state = torch.random.get_rng_state()
    torch.manual_seed(seed)
    try:
        model = AcousticModel(cfg)
        with torch.no_grad():
            nn.init.normal_(model.head.weight, std=0.02)
            nn.init.zeros_(model.head.bias)
    finally:
        torch.random.set_rng_state(gen_state)
    return model


def load_pretrained_adapter(descriptor, vocab_size, seed=0):
    """Build a model from an adapter descriptor.

    ``"toy"`` (or ``{"backend": "toy", ...}``) gives the built-in encoder;
    ``{"backend": "wav2vec2", "path": ...}`` wraps a pretrained wav2vec 2.0
    body with a fresh head.
    """
    if isinstance(descriptor, str):
        descriptor = {"backend": descriptor}
    descriptor = dict(descriptor)
    backend = descriptor.pop("backend", None)
    if backend not in ENCODERS:
        raise CapabilityError(f"no encoder backend for descriptor {backend!r}")
    geometry = {k: descriptor.pop(k) for k in ("frame_window", "frame_hop") if k in descriptor}
    if backend == "toy":
        cfg = EncoderConfig(vocab_size=vocab_size, **geometry, **descriptor)
    else:
        cfg = EncoderConfig(vocab_size=vocab_size, backend=backend, adapter=descriptor, **geometry)
    return init_model(cfg, seed)


def save_checkpoint(path, model, seed=0, update_counter=0, extra=None):
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": asdict(model.cfg),
            "seed": seed,
            "update_counter": update_counter,
            "params": {k: v.detach().clone() for k, v in model.state_dict().items()},
            "extra": extra or {},
        },
        path,
    )


def load_checkpoint(path):
    """Returns ``(model, checkpoint_dict)``."""
    ckpt = torch.load(path, map_location="cpu", weights_only=True)
    if ckpt.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not an edsr checkpoint")
    if ckpt.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {ckpt.get('version')}")
    cfg = EncoderConfig(**ckpt["config"])
    model = AcousticModel(replace(cfg))
    model.load_state_dict(ckpt["params"])
    return model, ckpt
