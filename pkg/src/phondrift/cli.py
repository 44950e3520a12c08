"""Command-line entry point: ``phondrift <subcommand>``.

Settings resolve in the order defaults < ``--config`` file < command-line flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import phonetics, pipeline, report as report_mod, targets as target_set
from .attack import attack_batch, read_jsonl
from .errors import ConfigError, PhondriftError
from .model import load_model
from .synth import gen_corpus

log = logging.getLogger("phondrift")


def build_config(args) -> pipeline.RunConfig:
    mapping = pipeline.read_config_file(args.config) if args.config else {}
    if args.seed is not None:
        mapping["seed"] = str(args.seed)
    if args.out is not None:
        mapping["out_dir"] = args.out
    for key, attr in (("corpus_dir", "corpus"), ("targets", "targets"),
                      ("targets_file", "targets_file"), ("n_sources", "n_sources"),
                      ("pairing", "pairing"), ("attack.max_iters", "max_iters"),
                      ("attack.c", "c"), ("attack.lr", "lr"),
                      ("synth.n_speakers", "n_speakers"),
                      ("synth.utterances_per_speaker", "utterances"),
                      ("asr.epochs", "asr_epochs")):
        v = getattr(args, attr, None)
        if v is not None:
            mapping[key] = str(v)
    for item in getattr(args, "source", None) or []:
        prev = mapping.get("source_overrides", "")
        mapping["source_overrides"] = f"{prev},{item}" if prev else item
    cfg = pipeline.RunConfig.from_mapping(mapping)
    if getattr(args, "no_train", False):
        cfg = replace(cfg, train=False)
    return cfg


def cmd_gen_corpus(args):
    cfg = build_config(args).seeded()
    out = cfg.manifest_path.parent
    rows = gen_corpus(cfg.synth, out)
    print(f"wrote {len(rows)} utterances to {out}")


def cmd_train(names):
    def run(args):
        cfg = build_config(args).seeded()
        corpus = pipeline._load_corpus(cfg)
        for name, path in pipeline.train_models(cfg, corpus, names).items():
            if name in names:
                print(f"{name}: {path}")
    return run


def cmd_attack(args):
    cfg = build_config(args).seeded()
    corpus = pipeline._load_corpus(cfg)
    path = pipeline.model_paths(cfg)["asr"]
    if not path.exists():
        raise ConfigError(f"ASR model not found: {path} (run train-asr first)")
    asr = load_model(path)
    sources = pipeline.select_sources(corpus, cfg.n_sources, cfg.source_overrides)
    rows, n_new = attack_batch([(r.utt_id, w) for r, w in sources], pipeline.load_targets(cfg),
                               asr, cfg.attack, cfg.out_dir / "attacks")
    n_ok = sum(bool(r["success"]) for r in rows)
    print(f"{n_new} new attacks; {n_ok}/{len(rows)} successful in {cfg.out_dir / 'attacks'}")


def cmd_evaluate(args):
    cfg = build_config(args)
    summary = pipeline.evaluate_experiment(cfg)
    report_mod.report(cfg.out_dir)
    print(f"{len(summary)} summary rows -> {cfg.out_dir / 'summary.csv'}")


def cmd_run(args):
    out = pipeline.run_pipeline(build_config(args))
    print(f"experiment written to {out}")


def cmd_report(args):
    if args.reference_only:
        path = report_mod.render_reference(Path(args.out or "."))
        print(path)
        return
    for path in report_mod.report(Path(args.out or "experiment")):
        print(path)


def cmd_phoneme_confusion(args):
    if args.profile:
        rows = phonetics.profile_report(target_set.TARGETS)
        for r in rows:
            print(json.dumps(r, sort_keys=True))
        return
    if args.ref is not None:
        pairs = [(phonetics.g2p(target_set.normalize_text(args.ref)),
                  phonetics.g2p(target_set.normalize_text(args.hyp or "")))]
    else:
        cfg = build_config(args)
        rows = [r for r in read_jsonl(cfg.out_dir / "attacks" / "attacks.jsonl")
                if r.get("error") is None]
        pairs = [(phonetics.g2p(r["target_text"]), phonetics.g2p(r["decoded_text"]))
                 for r in rows]
    conf = phonetics.confusion_matrix(pairs)
    if args.csv:
        conf.write_csv(args.csv)
    print(f"matches {conf.matches}  substitutions {conf.substitutions}  "
          f"insertions {sum(conf.insertions.values())}  deletions {sum(conf.deletions.values())}")
    for (a, b), n in sorted(conf.class_rollup.items()):
        print(f"  {a} -> {b}: {n}")
    print(f"centralization: {conf.centralization}")


def build_parser():
    p = argparse.ArgumentParser(prog="phondrift",
                                description="Targeted ASR attacks and speaker-identity drift.")
    p.add_argument("--seed", type=int, default=None, help="global seed (default 0)")
    p.add_argument("--out", default=None, help="experiment directory (default ./experiment)")
    p.add_argument("--config", default=None, help="flat key = value config file")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_corpus(sp):
        sp.add_argument("--corpus", default=None, help="corpus directory holding manifest.csv")
        return sp

    def with_selection(sp):
        sp.add_argument("--targets", default=None, help="comma-separated target ids")
        sp.add_argument("--targets-file", default=None, help="CSV with target_id,text")
        sp.add_argument("--n-sources", type=int, default=None)
        sp.add_argument("--source", action="append", metavar="SPEAKER:UTT",
                        help="override the source utterance of a speaker")
        return sp

    sp = with_corpus(sub.add_parser("gen-corpus", help="render the synthetic corpus"))
    sp.add_argument("--n-speakers", type=int, default=None)
    sp.add_argument("--utterances", type=int, default=None)
    sp.set_defaults(func=cmd_gen_corpus)

    sp = with_corpus(sub.add_parser("train-asr", help="train the acoustic model"))
    sp.add_argument("--asr-epochs", type=int, default=None)
    sp.set_defaults(func=cmd_train(["asr"]))

    sp = with_corpus(sub.add_parser("train-sid", help="train speaker model(s)"))
    sp.add_argument("--name", action="append", default=None,
                    help="speaker model name (repeatable, default: all configured)")
    sp.set_defaults(func=lambda a: cmd_train(
        a.name or list(build_config(a).sid_models))(a))

    sp = with_selection(with_corpus(sub.add_parser("attack", help="run targeted attacks")))
    sp.add_argument("--max-iters", type=int, default=None)
    sp.add_argument("--c", type=float, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.set_defaults(func=cmd_attack)

    sp = with_selection(with_corpus(sub.add_parser("evaluate",
                                                   help="score recorded attacks and chart")))
    sp.add_argument("--pairing", choices=("all", "successful"), default=None)
    sp.set_defaults(func=cmd_evaluate)

    sp = with_selection(with_corpus(sub.add_parser("run", help="full pipeline")))
    sp.add_argument("--pairing", choices=("all", "successful"), default=None)
    sp.add_argument("--max-iters", type=int, default=None)
    sp.add_argument("--no-train", action="store_true", help="fail if models are missing")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("phoneme-confusion", help="phoneme confusions of target vs decoded text")
    sp.add_argument("--ref", default=None, help="reference text (with --hyp)")
    sp.add_argument("--hyp", default=None)
    sp.add_argument("--csv", default=None, help="write the confusion matrix here")
    sp.add_argument("--profile", action="store_true", help="print target phonetic profiles")
    sp.set_defaults(func=cmd_phoneme_confusion)

    sp = sub.add_parser("report", help="render charts for an experiment directory")
    sp.add_argument("--reference-only", action="store_true",
                    help="only render the bundled reference d' chart into --out")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except PhondriftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
