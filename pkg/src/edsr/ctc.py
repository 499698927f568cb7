"""CTC loss, greedy decoding, and an enumeration oracle.

All arithmetic is carried out in log space. The forward-backward recursion
runs in the compiled kernel when available (see :mod:`edsr._core`).
"""

import itertools
import math
import struct
from pathlib import Path

import numpy as np

from edsr._core import ctc_forward_backward

BLANK = 0
BRUTE_FORCE_LIMIT = 10**6

POSTERIOR_MAGIC = b"EDSR"
POSTERIOR_VERSION = 1


class CTCInfeasibleError(ValueError):
    """The target cannot be emitted in the available number of frames."""

    def __init__(self, n_frames, required):
        super().__init__(f"CTC target needs at least {required} frames, got {n_frames}")
        self.n_frames = n_frames
        self.required = required


def log_softmax(logits):
    """Row-wise log-softmax of a ``(T, V)`` logit matrix."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ValueError(f"expected a (T, V) matrix, got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits contain non-finite values")
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def required_frames(target):
    """Minimum frame count for ``target``: one per label plus one blank
    between each pair of identical neighbours."""
    target = list(target)
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def is_feasible(n_frames, target):
    return n_frames >= required_frames(target)


def _check_target(target, vocab_size):
    target = np.asarray(target, dtype=np.int64).reshape(-1)
    if target.size and (target.min() < 1 or target.max() >= vocab_size):
        raise ValueError("target ids must lie in [1, V-1] (blank is 0)")
    return target


def ctc_loss(logp, target, return_grad=True):
    """Negative log-likelihood of ``target`` under posteriorgram ``logp``.

    Returns ``(loss, grad)`` where ``grad`` is the gradient with respect to
    the logits that produced ``logp`` through :func:`log_softmax`.
    Raises :class:`CTCInfeasibleError` when the target is too long.
    """
    logp = np.asarray(logp, dtype=np.float64)
    T, V = logp.shape
    target = _check_target(target, V)
    need = required_frames(target.tolist())
    if T < need:
        raise CTCInfeasibleError(T, need)
    loglik, occupancy = ctc_forward_backward(logp, target, BLANK)
    loss = -loglik
    if not return_grad:
        return loss
    return loss, np.exp(logp) - occupancy


def collapse(path, blank=BLANK):
    """Merge adjacent repeats, then drop blanks."""
    return tuple(k for k, _ in itertools.groupby(path) if k != blank)


def collapsed_distribution(logp):
    """Probability of every collapsed output, by enumerating all ``V**T`` paths."""
    logp = np.asarray(logp, dtype=np.float64)
    T, V = logp.shape
    if V**T > BRUTE_FORCE_LIMIT:
        raise ValueError(f"V**T = {V**T} paths exceeds the enumeration guard ({BRUTE_FORCE_LIMIT})")
    probs = np.exp(logp)
    dist = {}
    for path in itertools.product(range(V), repeat=T):
        p = math.prod(probs[t, k] for t, k in enumerate(path))
        key = collapse(path)
        dist[key] = dist.get(key, 0.0) + p
    return dist


def brute_force_ctc(logp, target):
    """Reference CTC loss by exhaustive path enumeration."""
    logp = np.asarray(logp, dtype=np.float64)
    target = tuple(int(k) for k in _check_target(target, logp.shape[1]))
    mass = collapsed_distribution(logp).get(target, 0.0)
    if mass == 0.0:
        raise CTCInfeasibleError(logp.shape[0], required_frames(target))
    return -math.log(mass)


def greedy_decode(logp):
    """Best-path decoding: frame argmax (lowest index wins ties), collapse."""
    best = np.argmax(np.asarray(logp), axis=1)
    return list(collapse(best.tolist()))


def write_posteriorgram(path, logp):
    logp = np.asarray(logp, dtype="<f4")
    T, V = logp.shape
    with open(path, "wb") as fh:
        fh.write(POSTERIOR_MAGIC)
        fh.write(struct.pack("<III", POSTERIOR_VERSION, T, V))
        fh.write(np.ascontiguousarray(logp).tobytes())


def read_posteriorgram(path):
    data = Path(path).read_bytes()
    if data[:4] != POSTERIOR_MAGIC:
        raise ValueError(f"{path}: not a posteriorgram file (bad magic)")
    version, T, V = struct.unpack("<III", data[4:16])
    if version != POSTERIOR_VERSION:
        raise ValueError(f"{path}: unsupported posteriorgram version {version}")
    body = np.frombuffer(data, dtype="<f4", offset=16)
    if body.size != T * V:
        raise ValueError(f"{path}: expected {T * V} values, found {body.size}")
    return body.reshape(T, V).astype(np.float64)
