"""Two-phase CTC fine-tuning: head only first, then the whole model."""

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from edsr.acoustic import save_checkpoint
from edsr.ctc import ctc_loss, is_feasible

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    """Full-scale defaults follow the reference wav2vec 2.0 schedule."""

    total_updates: int = 15000
    head_only_updates: int = 10000
    learning_rate: float = 5e-5
    max_tokens: int = 1_000_000
    seed: int = 0
    checkpoint_every: int = 1000

    def __post_init__(self):
        if not 0 <= self.head_only_updates <= self.total_updates:
            raise ValueError("need 0 <= head_only_updates <= total_updates")
        if self.max_tokens <= 0 or self.learning_rate <= 0:
            raise ValueError("max_tokens and learning_rate must be positive")

    @classmethod
    def desk_scale(cls, **overrides):
        """Schedule scaled by 1/10 for the toy encoder trained from scratch."""
        base = dict(total_updates=1500, head_only_updates=1000, learning_rate=2e-3, max_tokens=250_000)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, data, base=None):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        merged = asdict(base) if base is not None else {}
        merged.update(data)
        return cls(**merged)

    @classmethod
    def load(cls, path, base=None, section="train"):
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        return cls.from_dict(data.get(section, data), base)


@dataclass
class TrainState:
    model: object
    update_counter: int = 0
    loss_history: list = field(default_factory=list)
    skipped_infeasible: int = 0


def make_batches(lengths, max_tokens, seed=0, epoch=0, ids=None):
    """Length-sorted greedy bins under ``max_tokens`` summed samples, in a
    bin order shuffled by ``(seed, epoch)``. Returns lists of indices."""
    for i, n in enumerate(lengths):
        if n > max_tokens:
            name = ids[i] if ids is not None else i
            raise ValueError(f"utterance {name} has {n} samples, over the {max_tokens} budget")
    order = sorted(range(len(lengths)), key=lambda i: (lengths[i], i))
    bins, cur, used = [], [], 0
    for i in order:
        if cur and used + lengths[i] > max_tokens:
            bins.append(cur)
            cur, used = [], 0
        cur.append(i)
        used += lengths[i]
    if cur:
        bins.append(cur)
    perm = np.random.default_rng([seed, epoch]).permutation(len(bins))
    return [bins[j] for j in perm]


def iter_batches(lengths, max_tokens, seed=0, ids=None):
    epoch = 0
    while True:
        yield from make_batches(lengths, max_tokens, seed, epoch, ids)
        epoch += 1


class _BatchCTC(torch.autograd.Function):
    """Mean CTC loss over a padded batch, gradients from the log-space kernel."""

    @staticmethod
    def forward(ctx, logits, lengths, targets):
        arr = logits.detach().double().numpy()
        grad = np.zeros_like(arr)
        losses = []
        for b, (T, tgt) in enumerate(zip(lengths, targets)):
            row = arr[b, :T]
            shifted = row - row.max(axis=1, keepdims=True)
            logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            loss, g = ctc_loss(logp, tgt)
            losses.append(loss)
            grad[b, :T] = g
        B = len(losses)
        ctx.save_for_backward(torch.from_numpy(grad / B).to(logits.dtype))
        return logits.new_tensor(sum(losses) / B)

    @staticmethod
    def backward(ctx, grad_out):
        (grad,) = ctx.saved_tensors
        return grad * grad_out, None, None


def batch_ctc_loss(logits, lengths, targets):
    return _BatchCTC.apply(logits, lengths, targets)


def _deterministic():
    torch.use_deterministic_algorithms(True)


def train(cfg, model, data, out_dir=None, log_every=100, callback=None):
    """Fine-tune ``model`` on ``data`` = list of ``(utterance, target_ids)``.

    Runs exactly ``cfg.total_updates`` optimiser steps; encoder parameters
    receive no update during the first ``cfg.head_only_updates`` steps.
    ``callback(step, model)`` runs after every optimiser step.
    """
    _deterministic()
    torch.manual_seed(cfg.seed)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    inputs, targets, lengths, ids, skipped = [], [], [], [], 0
    for utt, tgt in data:
        wav = utt.waveform()
        if not is_feasible(model.num_frames(len(wav)), tgt):
            skipped += 1
            continue
        inputs.append(model.prepare(wav))
        targets.append(list(tgt))
        lengths.append(len(wav))
        ids.append(utt.id)
    if not inputs:
        raise TrainingError("every training utterance is too short for its CTC target")
    if skipped:
        log.info("skipped %d infeasible utterances", skipped)
    model.encoder.set_feature_stats(inputs)

    state = TrainState(model=model, skipped_infeasible=skipped)
    optim = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    model.train()
    batches = iter_batches(lengths, cfg.max_tokens, cfg.seed, ids)
    for step in range(1, cfg.total_updates + 1):
        idx = next(batches)
        train_encoder = step > cfg.head_only_updates
        logits, frame_counts = model([inputs[i] for i in idx], train_encoder=train_encoder)
        loss = batch_ctc_loss(logits, frame_counts, [targets[i] for i in idx])
        value = loss.item()
        if not math.isfinite(value):
            if out_dir is not None:
                save_checkpoint(out_dir / "diagnostic.pt", model, cfg.seed, state.update_counter)
            raise TrainingError(f"non-finite loss at update {step}")
        optim.zero_grad(set_to_none=True)
        loss.backward()
        optim.step()
        state.update_counter = step
        state.loss_history.append((step, value))
        if callback is not None:
            callback(step, model)
        if log_every and step % log_every == 0:
            log.info("update %d loss %.4f", step, value)
        if out_dir is not None and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            save_checkpoint(out_dir / f"checkpoint_{step}.pt", model, cfg.seed, step)
    if out_dir is not None:
        save_checkpoint(out_dir / "checkpoint_last.pt", model, cfg.seed, state.update_counter)
    model.eval()
    return state


def export_loss_curve(state, path):
    if not state.loss_history:
        raise ValueError("loss history is empty")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["update", "loss"])
        for update, loss in state.loss_history:
            writer.writerow([update, repr(float(loss))])


def read_loss_curve(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [(int(r["update"]), float(r["loss"])) for r in csv.DictReader(fh)]
