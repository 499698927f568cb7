"""Speaker-fold cross-validation: build targets, train, decode, vote, score."""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from edsr.acoustic import EncoderConfig, init_model
from edsr.corpus import EmotionSet, make_folds, resample_to_16k
from edsr.evaluate import EvaluationReport, evaluate_fold
from edsr.phonetics import make_taxonomy
from edsr.targets import build_targets, build_vocabulary, save_exclusions, save_targets
from edsr.trainer import TrainConfig, export_loss_curve, train

log = logging.getLogger(__name__)


@dataclass
class CrossvalConfig:
    taxonomy: str = "phoneme"
    fold_mode: str = "leave-one-speaker-out"
    k: int | None = None
    oov: str = "exclude"
    scoring: str = "uniform"
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig.desk_scale)
    encoder: dict = field(default_factory=dict)


def run_fold(fold, by_id, lex, emotions, cfg, taxonomy, out_dir=None):
    train_utts = [by_id[i] for i in fold.train]
    test_utts = [by_id[i] for i in fold.test]
    vocab = build_vocabulary(taxonomy, emotions, train_utts, lex, cfg.oov)
    if taxonomy.base_units is None:
        taxonomy = taxonomy.with_inventory(vocab.base_units)
    train_targets, train_excl = build_targets(taxonomy, lex, vocab, train_utts, cfg.oov)
    test_targets, test_excl = build_targets(taxonomy, lex, vocab, test_utts, cfg.oov)

    enc_cfg = EncoderConfig(vocab_size=len(vocab), **cfg.encoder)
    model = init_model(enc_cfg, seed=cfg.seed + fold.fold_id)
    targets = {t.utterance_id: t.token_ids for t in train_targets}
    data = [(u, targets[u.id]) for u in train_utts if u.id in targets]
    fold_dir = None if out_dir is None else Path(out_dir) / f"fold_{fold.fold_id}"
    state = train(cfg.train, model, data, out_dir=fold_dir)

    refs = {t.utterance_id: t.token_ids for t in test_targets}
    result = evaluate_fold(
        lambda u: model.posteriorgram(u.waveform()), test_utts, vocab, refs, fold.fold_id, cfg.scoring
    )
    losses = [v for _, v in state.loss_history]
    result.training_stats = {
        "updates": state.update_counter,
        "first_loss": round(losses[0], 4),
        "final_loss": round(losses[-1], 4),
        "train_utterances": len(data) - state.skipped_infeasible,
        "train_excluded": len(train_excl),
        "infeasible_skipped": state.skipped_infeasible,
        "vocab_size": len(vocab),
    }
    if fold_dir is not None:
        vocab.save(fold_dir / "vocab.txt")
        save_targets(fold_dir / "train_targets.txt", train_targets, vocab)
        save_targets(fold_dir / "test_targets.txt", test_targets, vocab)
        save_exclusions(fold_dir / "exclusions.jsonl", train_excl + test_excl)
        export_loss_curve(state, fold_dir / "loss.csv")
        with open(fold_dir / "hyp.txt", "w", encoding="utf-8") as fh:
            for uid, toks in result.hypotheses.items():
                fh.write(f"{uid}\t{' '.join(toks)}\n")
        with open(fold_dir / "votes.jsonl", "w", encoding="utf-8") as fh:
            for v in result.votes:
                fh.write(json.dumps(v.to_json()) + "\n")
    return result, len(train_excl) + len(test_excl), state


def crossval(utts, lex, cfg, emotions=None, out_dir=None, taxonomy=None):
    """Train and evaluate one model per speaker fold; returns the merged report.

    ``taxonomy`` overrides the default one built from ``cfg.taxonomy``.
    """
    emotions = EmotionSet() if emotions is None else emotions
    utts = [resample_to_16k(u) for u in utts]
    folds = make_folds(utts, cfg.fold_mode, cfg.k)
    if taxonomy is None:
        taxonomy = make_taxonomy(cfg.taxonomy, inventory=lex.inventory)
    by_id = {u.id: u for u in utts}
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        folds.save(Path(out_dir) / "folds.json")
    results, excluded, infeasible = [], 0, 0
    for fold in folds:
        log.info("fold %d: %d train / %d test", fold.fold_id, len(fold.train), len(fold.test))
        result, n_excl, state = run_fold(fold, by_id, lex, emotions, cfg, taxonomy, out_dir)
        results.append(result)
        excluded += n_excl
        infeasible += state.skipped_infeasible
    report = EvaluationReport(
        taxonomy=cfg.taxonomy,
        emotions=tuple(emotions),
        folds=results,
        exclusions={
            "targets": excluded,
            "scoring": sum(r.scoring_excluded for r in results),
            "infeasible": infeasible,
        },
    )
    if out_dir is not None:
        report.save(out_dir)
    return report
