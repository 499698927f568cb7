"""``edsr`` command line: synth, build-vocab, train, decode, classify, score, crossval, report."""

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import tomli_w

from edsr.corpus import EmotionSet, ManifestError, load_alias_table, load_manifest, resample_to_16k
from edsr.phonetics import ARPABET, BroadClassMap, Lexicon, load_onsets, make_taxonomy
from edsr.targets import (
    UnitVocabulary,
    build_targets,
    build_vocabulary,
    read_token_file,
    save_exclusions,
    save_targets,
)
from edsr.trainer import TrainConfig, tomllib

log = logging.getLogger("edsr")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


def _load_config(path):
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _write_resolved(out_dir, resolved):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def clean(d):
        return {k: clean(v) if isinstance(v, dict) else v for k, v in d.items() if v is not None}

    (out_dir / "resolved_config.toml").write_text(tomli_w.dumps(clean(resolved)), encoding="utf-8")


def _pick(args, conf, section, key, default=None):
    """Flag value if given, else config file value, else default."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    return conf.get(section, {}).get(key, default)


def _lexicon(args, conf):
    path = _pick(args, conf, "data", "lexicon")
    if path is None:
        raise UsageError("a lexicon is required (--lexicon)")
    if not Path(path).exists():
        raise UsageError(f"lexicon not found: {path}")
    inv_path = _pick(args, conf, "data", "phonemes")
    inventory = Path(inv_path).read_text("utf-8").split() if inv_path else ARPABET
    return Lexicon.load(path, inventory=inventory)


def _taxonomy(args, conf, lex):
    kind = _pick(args, conf, "run", "taxonomy", "phoneme")
    broad = _pick(args, conf, "data", "broad_classes")
    onsets = _pick(args, conf, "data", "onsets")
    return make_taxonomy(
        kind,
        inventory=lex.inventory,
        broad_map=BroadClassMap.load(broad) if broad else None,
        onsets=load_onsets(onsets) if onsets else None,
    )


def _manifest(args, conf):
    path = _pick(args, conf, "data", "manifest")
    if path is None:
        raise UsageError("a manifest is required (--manifest)")
    aliases = _pick(args, conf, "data", "aliases")
    emotions = EmotionSet(tuple(conf.get("run", {}).get("emotions", EmotionSet().emotions)))
    utts = load_manifest(path, load_alias_table(aliases), emotions.emotions)
    return utts, emotions


def _train_config(args, conf):
    cfg = TrainConfig.desk_scale() if conf.get("run", {}).get("scale", "desk") == "desk" else TrainConfig()
    cfg = TrainConfig.from_dict(conf.get("train", {}), cfg)
    over = {
        k: getattr(args, k)
        for k in ("total_updates", "head_only_updates", "learning_rate", "max_tokens", "checkpoint_every")
        if getattr(args, k, None) is not None
    }
    seed = _pick(args, conf, "run", "seed", cfg.seed)
    return TrainConfig.from_dict({**over, "seed": seed}, cfg)


def _vocab_taxonomy(taxonomy, vocab):
    if taxonomy.base_units is None:
        return taxonomy.with_inventory(vocab.base_units)
    return taxonomy


def cmd_synth(args, conf):
    from edsr.synth import SynthSpec, generate

    section = dict(conf.get("synth", {}))
    for key in ("unit_duration", "words_per_utterance", "speaker_pitch", "emotions"):
        if key in section:
            section[key] = tuple(section[key])
    flags = {
        "n_pseudo_phonemes": args.phonemes,
        "n_speakers": args.speakers,
        "utterances_per_speaker": args.utts_per_speaker,
    }
    section.update({k: v for k, v in flags.items() if v})
    section["seed"] = _pick(args, conf, "run", "seed", 0)
    spec = SynthSpec(**section)
    utts = generate(spec, args.out)
    resolved = {"run": {"seed": spec.seed}, "synth": {k: v for k, v in asdict(spec).items() if k != "emotions"}}
    resolved["synth"]["emotions"] = list(spec.emotions)
    _write_resolved(args.out, resolved)
    print(f"wrote {len(utts)} utterances to {args.out}")


def cmd_build_vocab(args, conf):
    lex = _lexicon(args, conf)
    taxonomy = _taxonomy(args, conf, lex)
    utts, emotions = _manifest(args, conf)
    vocab = build_vocabulary(taxonomy, emotions, utts, lex)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    vocab.save(out)
    if args.targets_out:
        targets, excluded = build_targets(_vocab_taxonomy(taxonomy, vocab), lex, vocab, utts)
        save_targets(args.targets_out, targets, vocab)
        if args.exclusions_out:
            save_exclusions(args.exclusions_out, excluded)
    print(f"{len(vocab)} tokens -> {out}")


def cmd_train(args, conf):
    from edsr.acoustic import load_pretrained_adapter
    from edsr.trainer import export_loss_curve, train

    lex = _lexicon(args, conf)
    taxonomy = _taxonomy(args, conf, lex)
    utts, _ = _manifest(args, conf)
    utts = [resample_to_16k(u) for u in utts]
    vocab = UnitVocabulary.load(args.vocab)
    targets, excluded = build_targets(_vocab_taxonomy(taxonomy, vocab), lex, vocab, utts)
    cfg = _train_config(args, conf)
    descriptor = dict(conf.get("encoder", {"backend": "toy"}))
    descriptor.setdefault("backend", "toy")
    model = load_pretrained_adapter(descriptor, len(vocab), seed=cfg.seed)
    by_id = {t.utterance_id: t.token_ids for t in targets}
    data = [(u, by_id[u.id]) for u in utts if u.id in by_id]
    out = Path(args.out)
    state = train(cfg, model, data, out_dir=out)
    export_loss_curve(state, out / "loss.csv")
    save_exclusions(out / "exclusions.jsonl", excluded)
    _write_resolved(out, {"run": {"taxonomy": taxonomy.kind, "seed": cfg.seed}, "train": asdict(cfg), "encoder": descriptor})
    print(f"trained {state.update_counter} updates, final loss {state.loss_history[-1][1]:.4f}")


def _posterior_source(args, conf):
    """Callable ``utt -> log-posteriorgram`` from a checkpoint or a directory."""
    from edsr.ctc import read_posteriorgram

    if getattr(args, "posteriors", None):
        root = Path(args.posteriors)

        def from_dir(u):
            path = root / f"{u.id}.edsr"
            if not path.exists():
                raise UsageError(f"no posteriorgram for {u.id} in {root}")
            return read_posteriorgram(path)

        return from_dir
    if not args.checkpoint:
        raise UsageError("need --checkpoint or --posteriors")
    from edsr.acoustic import load_checkpoint

    model, _ = load_checkpoint(args.checkpoint)

    def from_model(u):
        return model.posteriorgram(resample_to_16k(u).waveform())

    return from_model


def cmd_decode(args, conf):
    from edsr.ctc import greedy_decode, write_posteriorgram

    utts, _ = _manifest(args, conf)
    vocab = UnitVocabulary.load(args.vocab)
    source = _posterior_source(args, conf)
    post_dir = Path(args.emit_posteriors) if args.emit_posteriors else None
    if post_dir:
        post_dir.mkdir(parents=True, exist_ok=True)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as fh:
        for u in utts:
            logp = source(u)
            if post_dir:
                write_posteriorgram(post_dir / f"{u.id}.edsr", logp)
            fh.write(f"{u.id}\t{' '.join(vocab.decode(greedy_decode(logp)))}\n")
    print(f"decoded {len(utts)} utterances -> {args.out}")


def cmd_classify(args, conf):
    from edsr.evaluate import EvaluationReport, evaluate_fold

    utts, emotions = _manifest(args, conf)
    vocab = UnitVocabulary.load(args.vocab)
    refs, n_excl = {}, 0
    if args.lexicon:
        lex = _lexicon(args, conf)
        taxonomy = _vocab_taxonomy(_taxonomy(args, conf, lex), vocab)
        targets, excluded = build_targets(taxonomy, lex, vocab, utts)
        refs = {t.utterance_id: t.token_ids for t in targets}
        n_excl = len(excluded)
    result = evaluate_fold(_posterior_source(args, conf), utts, vocab, refs, 0, args.scoring)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as fh:
        for v in result.votes:
            fh.write(json.dumps(v.to_json()) + "\n")
    if args.report_dir:
        name = _pick(args, conf, "run", "taxonomy", "units")
        report = EvaluationReport(name, vocab.emotions, [result], {"targets": n_excl, "scoring": result.scoring_excluded})
        report.save(args.report_dir)
        print((Path(args.report_dir) / "report.txt").read_text("utf-8"), end="")
    print(f"classified {len(result.votes)} utterances -> {args.out}")


def cmd_score(args, conf):
    from edsr.evaluate import score_units

    refs = read_token_file(args.ref)
    hyps = read_token_file(args.hyp)
    if args.strip_emotion:
        out = {"without_emotion": score_units(refs, hyps, True, args.mode).to_json()}
    else:
        out = {
            "with_emotion": score_units(refs, hyps, False, args.mode).to_json(),
            "without_emotion": score_units(refs, hyps, True, args.mode).to_json(),
        }
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def cmd_crossval(args, conf):
    from edsr.pipeline import CrossvalConfig, crossval

    lex = _lexicon(args, conf)
    utts, emotions = _manifest(args, conf)
    taxonomy = _pick(args, conf, "run", "taxonomy", "phoneme")
    tax = _taxonomy(args, conf, lex)
    cv = conf.get("crossval", {})
    cfg = CrossvalConfig(
        taxonomy=taxonomy,
        fold_mode=_pick(args, conf, "crossval", "fold_mode", cv.get("fold_mode", "leave-one-speaker-out")),
        k=_pick(args, conf, "crossval", "k"),
        scoring=_pick(args, conf, "crossval", "scoring", "uniform"),
        seed=_pick(args, conf, "run", "seed", 0),
        train=_train_config(args, conf),
        encoder={k: v for k, v in conf.get("encoder", {}).items() if k != "backend"},
    )
    report = crossval(utts, lex, cfg, emotions, out_dir=args.out, taxonomy=tax)
    resolved = {
        "run": {"taxonomy": taxonomy, "seed": cfg.seed, "emotions": list(emotions)},
        "crossval": {"fold_mode": cfg.fold_mode, "k": cfg.k, "scoring": cfg.scoring, "oov": cfg.oov},
        "train": asdict(cfg.train),
        "encoder": cfg.encoder,
    }
    _write_resolved(args.out, resolved)
    print((Path(args.out) / "report.txt").read_text("utf-8"), end="")


def cmd_report(args, conf):
    from edsr.evaluate import format_report

    path = Path(args.input)
    if path.is_dir():
        path = path / "report.json"
    data = json.loads(path.read_text("utf-8"))
    sys.stdout.write(format_report(data))


def build_parser():
    p = argparse.ArgumentParser(prog="edsr", description=__doc__)
    p.add_argument("--config", help="TOML config file; flags override its values")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def data_args(sp, lexicon=True):
        sp.add_argument("--manifest")
        sp.add_argument("--aliases", help="emotion alias table")
        if lexicon:
            sp.add_argument("--lexicon")
            sp.add_argument("--phonemes", help="phoneme inventory file (default: ARPAbet)")
            sp.add_argument("--taxonomy", choices=["phoneme", "broad_class", "syllable", "utterance"])
            sp.add_argument("--broad-classes", dest="broad_classes")
            sp.add_argument("--onsets")

    def train_args(sp):
        sp.add_argument("--seed", type=int)
        sp.add_argument("--total-updates", type=int)
        sp.add_argument("--head-only-updates", type=int)
        sp.add_argument("--learning-rate", type=float)
        sp.add_argument("--max-tokens", type=int)
        sp.add_argument("--checkpoint-every", type=int)

    sp = sub.add_parser("synth", help="generate the synthetic toy corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--speakers", type=int)
    sp.add_argument("--utts-per-speaker", type=int)
    sp.add_argument("--phonemes", type=int, help="number of pseudo-phonemes")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("build-vocab", help="emotion-dependent vocabulary (and targets)")
    data_args(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--targets-out")
    sp.add_argument("--exclusions-out")
    sp.set_defaults(func=cmd_build_vocab)

    sp = sub.add_parser("train", help="fine-tune an acoustic model with CTC")
    data_args(sp)
    train_args(sp)
    sp.add_argument("--vocab", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("decode", help="greedy decoding to unit sequences")
    data_args(sp, lexicon=False)
    sp.add_argument("--vocab", required=True)
    sp.add_argument("--checkpoint")
    sp.add_argument("--posteriors", help="directory of .edsr posteriorgrams instead of a checkpoint")
    sp.add_argument("--out", required=True)
    sp.add_argument("--emit-posteriors", dest="emit_posteriors")
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("classify", help="majority-vote emotion per utterance")
    data_args(sp)
    sp.add_argument("--vocab", required=True)
    sp.add_argument("--checkpoint")
    sp.add_argument("--posteriors")
    sp.add_argument("--out", required=True)
    sp.add_argument("--report-dir", dest="report_dir")
    sp.add_argument("--scoring", choices=["uniform", "sctk"], default="uniform")
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("score", help="unit error rates of hypotheses against references")
    sp.add_argument("--ref", required=True)
    sp.add_argument("--hyp", required=True)
    sp.add_argument("--strip-emotion", action="store_true")
    sp.add_argument("--mode", choices=["uniform", "sctk"], default="uniform")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("crossval", help="speaker-fold cross-validation")
    data_args(sp)
    train_args(sp)
    sp.add_argument("--fold-mode", dest="fold_mode", choices=["leave-one-speaker-out", "k-fold-by-speaker"])
    sp.add_argument("--k", type=int)
    sp.add_argument("--scoring", choices=["uniform", "sctk"])
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_crossval)

    sp = sub.add_parser("report", help="print a saved report as tables")
    sp.add_argument("--input", required=True, help="report.json or its directory")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        conf = _load_config(args.config)
        args.func(args, conf)
    except (UsageError, ManifestError, ValueError, KeyError, FileNotFoundError, tomllib.TOMLDecodeError) as exc:
        print(f"edsr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        print(f"edsr {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
