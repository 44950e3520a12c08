"""End-to-end experiment: corpus -> models -> attacks -> embeddings -> scores -> reports."""

from __future__ import annotations

import configparser
import csv
import json
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import features, phonetics, targets as target_set, verify
from .attack import AttackConfig, attack_batch, read_jsonl, row_snr
from .audio import read_wav
from .errors import ConfigError, DegenerateInputError
from .model import (TrainConfig, load_model, save_model, train_asr, train_sid, write_curve)
from .synth import SynthConfig, gen_corpus, load_corpus, split_heldout

log = logging.getLogger(__name__)

SUMMARY_FIELDS = ("target_id", "target_text", "model", "n_samples", "n_genuine", "n_impostor",
                  "tmr_at_fmr_0p1", "d_prime", "mean_snr_db", "mean_gen_cosine", "wer", "cer")
FMR_TARGET = 0.001


def sid_train_config(hidden=32, seed=0):
    """Default speaker-model recipe: random 50-frame crops, 300 epochs."""
    return TrainConfig(epochs=300, hidden=hidden, crop_frames=50, seed=seed)


@dataclass
class RunConfig:
    out_dir: Path = Path("experiment")
    corpus_dir: Path | None = None  # default: <out_dir>/corpus
    seed: int = 0
    synth: SynthConfig = field(default_factory=SynthConfig)
    asr_train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=60))
    # two speaker backbones differing in seed and width
    sid_models: dict = field(default_factory=lambda: {
        "sid_a": sid_train_config(hidden=32, seed=0),
        "sid_b": sid_train_config(hidden=48, seed=1),
    })
    train: bool = True
    attack: AttackConfig = field(default_factory=AttackConfig)
    target_ids: tuple = tuple(t.target_id for t in target_set.TARGETS)
    targets_file: Path | None = None
    n_sources: int | None = None
    source_overrides: dict = field(default_factory=dict)  # speaker_id -> utt_id
    pairing: str = "all"  # or "successful"

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if self.corpus_dir is not None:
            self.corpus_dir = Path(self.corpus_dir)
        if self.pairing not in ("successful", "all"):
            raise ConfigError(f"pairing must be 'successful' or 'all', got {self.pairing!r}")

    @classmethod
    def from_mapping(cls, mapping):
        """Build from flat string keys, e.g. ``attack.max_iters = 500`` or ``sid_a.hidden = 32``.

        Top-level keys name RunConfig fields; ``synth.``, ``asr.`` and
        ``attack.`` prefixes address the nested configs; any other prefix names a
        speaker model (created if absent). ``sid_models`` lists the model names to keep.
        """
        base = cls()
        top, nested = {}, {}
        for key, raw in mapping.items():
            key = key.strip()
            if "." in key:
                prefix, name = key.split(".", 1)
                nested.setdefault(prefix, {})[name] = raw
            else:
                top[key] = raw
        kw = {}
        for key, raw in top.items():
            if key in ("target_ids", "targets"):
                kw["target_ids"] = tuple(t.strip() for t in raw.split(",") if t.strip())
            elif key == "source_overrides":
                kw[key] = dict(item.split(":", 1) for item in raw.split(",") if item.strip())
            elif key == "sid_models":
                names = [n.strip() for n in raw.split(",") if n.strip()]
                kw[key] = {n: base.sid_models.get(n, sid_train_config())
                           for n in names}
            elif key in ("corpus_dir", "targets_file", "out_dir"):
                kw[key] = Path(raw) if raw else None
            elif key in ("seed", "n_sources"):
                kw[key] = int(raw) if raw not in ("", "none", "None") else None
            elif key == "train":
                kw[key] = _parse_bool(raw)
            elif key == "pairing":
                kw[key] = raw
            else:
                raise ConfigError(f"unknown config key {key!r}")
        sid_models = dict(kw.pop("sid_models", base.sid_models))
        for prefix, values in nested.items():
            if prefix == "synth":
                kw["synth"] = _coerce(base.synth, values)
            elif prefix == "asr":
                kw["asr_train"] = _coerce(base.asr_train, values)
            elif prefix == "attack":
                kw["attack"] = _coerce(base.attack, values)
            else:
                sid_models[prefix] = _coerce(
                    sid_models.get(prefix, sid_train_config()),
                    values)
        kw["sid_models"] = sid_models
        return replace(base, **kw)

    @property
    def manifest_path(self):
        return (self.corpus_dir or self.out_dir / "corpus") / "manifest.csv"

    def seeded(self):
        """Copy with the global seed pushed into corpus, training and attack configs."""
        s = self.seed
        return replace(
            self,
            synth=replace(self.synth, seed=s),
            asr_train=replace(self.asr_train, seed=s),
            sid_models={k: replace(v, seed=s * 100 + v.seed) for k, v in self.sid_models.items()},
            attack=replace(self.attack, seed=s),
        )


def _parse_bool(raw):
    v = str(raw).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {raw!r}")


def _coerce(obj, values):
    """Copy of dataclass ``obj`` with string ``values`` cast to each field's current type."""
    names = {f.name for f in fields(obj)}
    kw = {}
    for key, raw in values.items():
        if key not in names:
            raise ConfigError(f"unknown key {key!r} for {type(obj).__name__}")
        current = getattr(obj, key)
        try:
            if isinstance(current, bool):
                kw[key] = _parse_bool(raw)
            elif isinstance(current, (int, float)):
                kw[key] = type(current)(raw)
            else:
                kw[key] = raw
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
    try:
        return replace(obj, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def read_config_file(path):
    """Flat ``key = value`` file; ``#`` starts a comment line."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + Path(path).read_text())
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return dict(parser["run"])


def load_targets(cfg: RunConfig):
    if cfg.targets_file is not None:
        out = []
        with open(cfg.targets_file, newline="") as fh:
            for r in csv.DictReader(fh):
                out.append(target_set.Target(r["target_id"], target_set.normalize_text(r["text"])))
        return out
    return [target_set.get(t) for t in cfg.target_ids]


def select_sources(corpus, n_sources=None, overrides=None):
    """One clean utterance per speaker: lexicographically first utt_id unless overridden."""
    overrides = overrides or {}
    by_spk = {}
    for row, wav in corpus:
        by_spk.setdefault(row.speaker_id, []).append((row, wav))
    chosen = []
    for spk in sorted(by_spk):
        items = sorted(by_spk[spk], key=lambda rw: rw[0].utt_id)
        if spk in overrides:
            items = [rw for rw in items if rw[0].utt_id == overrides[spk]]
            if not items:
                raise ConfigError(f"override utterance {overrides[spk]!r} not found for {spk}")
        chosen.append(items[0])
    if n_sources is not None:
        chosen = chosen[:n_sources]
    return chosen


def _models_dir(cfg):
    return cfg.out_dir / "models"


def model_paths(cfg: RunConfig):
    mdir = _models_dir(cfg)
    return {"asr": mdir / "asr.bin", **{k: mdir / f"{k}.bin" for k in cfg.sid_models}}


def _train_features(corpus):
    train_items, _ = split_heldout(corpus)
    frontend = features.FrontendConfig()
    return train_items, frontend, {r.utt_id: features.forward(w, frontend).values
                                   for r, w in train_items}


def train_models(cfg: RunConfig, corpus, names):
    """Train and save the named models ("asr" or a speaker-model name) on the training split."""
    paths = model_paths(cfg)
    unknown = [n for n in names if n not in paths]
    if unknown:
        raise ConfigError(f"unknown model name(s) {unknown}; known: {sorted(paths)}")
    _models_dir(cfg).mkdir(parents=True, exist_ok=True)
    train_items, frontend, feats = _train_features(corpus)
    for name in names:
        log.info("training %s", name)
        if name == "asr":
            m, curve = train_asr([(r.utt_id, feats[r.utt_id], r.transcript)
                                  for r, _ in train_items], cfg.asr_train, frontend)
        else:
            m, curve = train_sid([(r.utt_id, r.speaker_id, feats[r.utt_id])
                                  for r, _ in train_items], cfg.sid_models[name], frontend)
        save_model(m, paths[name])
        write_curve(curve, _models_dir(cfg) / f"{name}_curve.csv")
    return paths


def prepare_models(cfg: RunConfig, corpus):
    """Load every model, training the missing ones when ``cfg.train`` allows."""
    paths = model_paths(cfg)
    missing = [k for k, p in paths.items() if not p.exists()]
    if missing and not cfg.train:
        raise ConfigError(f"models missing and training disabled: {missing}")
    if missing:
        train_models(cfg, corpus, missing)
    asr = load_model(paths["asr"])
    sids = {k: load_model(paths[k]) for k in cfg.sid_models}
    return asr, sids


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6f}"
    return str(v)


def _mean(values):
    values = [v for v in values if v is not None and math.isfinite(v)]
    return float(np.mean(values)) if values else math.nan


def evaluate(cfg: RunConfig, rows, sources, sids, targets):
    """Score attacks per (target, model); writes stats/, scores/, confusion/ and summary.csv."""
    out = cfg.out_dir
    attack_dir = out / "attacks"
    for sub in ("stats", "scores", "confusion"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    src_speaker = {row.utt_id: row.speaker_id for row, _ in sources}
    clean_wavs = {row.speaker_id: wav for row, wav in sources}
    summary = []
    for t in targets:
        t_rows = [r for r in rows if r["target_id"] == t.target_id and r.get("error") is None]
        used = [r for r in t_rows if r["success"] or cfg.pairing == "all"]
        wers, cers = [], []
        pairs = []
        for r in t_rows:
            w, c = phonetics.wer_cer(t.text, r["decoded_text"])
            wers.append(w)
            cers.append(c)
            pairs.append((phonetics.g2p(t.text), phonetics.g2p(r["decoded_text"])))
        conf = phonetics.confusion_matrix(pairs)
        conf.write_csv(out / "confusion" / f"{t.target_id}.csv")
        adv_wavs = {src_speaker[r["source_id"]]: read_wav(attack_dir / r["wav_path_adv"])
                    for r in used}
        mean_snr = _mean([row_snr(r) for r in used])
        for name, sid in sids.items():
            rec = {"target_id": t.target_id, "target_text": t.text, "model": name,
                   "n_attempted": len(t_rows), "n_used": len(used),
                   "n_success": sum(bool(r["success"]) for r in t_rows), "pairing": cfg.pairing,
                   "mean_snr_db": mean_snr, "wer": _mean(wers), "cer": _mean(cers),
                   "centralization": conf.centralization, "oov_hyp_words":
                   sum(h.oov_count for _, h in pairs)}
            spk = sorted(adv_wavs)
            n = len(spk)
            rec.update(n_samples=n * n, n_genuine=n, n_impostor=n * (n - 1))
            tmr = dp = gen_cos = math.nan
            if n >= 2:
                clean_emb = {s: sid.embed(features.forward(clean_wavs[s], sid.frontend)) for s in spk}
                adv_emb = {s: sid.embed(features.forward(adv_wavs[s], sid.frontend)) for s in spk}
                scores = verify.make_pairs(clean_emb, adv_emb)
                scores.write_csv(out / "scores" / f"{name}_{t.target_id}.csv")
                try:
                    stats = verify.summarize(scores, FMR_TARGET)
                    rec.update(stats)
                    tmr, dp = stats["tmr_at_fmr"], stats["d_prime"]
                except DegenerateInputError as exc:
                    log.warning("%s %s: %s", name, t.target_id, exc)
                gen_cos = float(np.mean(scores.genuine))
            elif n == 1:
                s = spk[0]
                gen_cos = verify.cosine_similarity(
                    sid.embed(features.forward(clean_wavs[s], sid.frontend)),
                    sid.embed(features.forward(adv_wavs[s], sid.frontend)))
            rec.update(mean_gen_cosine=gen_cos)
            verify.write_stats_json(rec, out / "stats" / f"{name}_{t.target_id}.json")
            summary.append({
                "target_id": t.target_id, "target_text": t.text, "model": name,
                "n_samples": rec["n_samples"], "n_genuine": rec["n_genuine"],
                "n_impostor": rec["n_impostor"], "tmr_at_fmr_0p1": tmr, "d_prime": dp,
                "mean_snr_db": mean_snr, "mean_gen_cosine": gen_cos,
                "wer": rec["wer"], "cer": rec["cer"],
            })
    write_summary(summary, out / "summary.csv")
    return summary


def write_summary(summary, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_FIELDS)
        for rec in summary:
            writer.writerow([_fmt(rec[k]) for k in SUMMARY_FIELDS])


def read_summary(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _echo(cfg):
    def conv(v):
        if isinstance(v, Path):
            return str(v)
        if hasattr(v, "__dataclass_fields__"):
            return {f.name: conv(getattr(v, f.name)) for f in fields(v)}
        if isinstance(v, dict):
            return {k: conv(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [conv(x) for x in v]
        return v
    return conv(cfg)


def _load_corpus(cfg):
    if not cfg.manifest_path.exists():
        raise ConfigError(f"manifest not found: {cfg.manifest_path}")
    return load_corpus(cfg.manifest_path)


def _attack_rows(cfg, targets, sources):
    rows = read_jsonl(cfg.out_dir / "attacks" / "attacks.jsonl")
    wanted = {t.target_id for t in targets}
    src_ids = {r.utt_id for r, _ in sources}
    return [r for r in rows if r["target_id"] in wanted and r["source_id"] in src_ids]


def evaluate_experiment(cfg: RunConfig):
    """Score the attacks already recorded under ``cfg.out_dir`` without running new ones."""
    cfg = cfg.seeded()
    corpus = _load_corpus(cfg)
    _, sids = prepare_models(replace(cfg, train=False), corpus)
    targets = load_targets(cfg)
    sources = select_sources(corpus, cfg.n_sources, cfg.source_overrides)
    return evaluate(cfg, _attack_rows(cfg, targets, sources), sources, sids, targets)


def run_pipeline(cfg: RunConfig):
    """Run every stage; returns the experiment directory.

    Existing corpus, models and attack rows under ``cfg.out_dir`` are reused,
    so a rerun after interruption picks up where it stopped.
    """
    cfg = cfg.seeded()
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "run_config.json", "w") as fh:
        json.dump(_echo(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not cfg.manifest_path.exists():
        if cfg.corpus_dir is not None:
            raise ConfigError(f"manifest not found: {cfg.manifest_path}")
        log.info("generating synthetic corpus")
        gen_corpus(cfg.synth, cfg.manifest_path.parent)
    corpus = _load_corpus(cfg)
    asr, sids = prepare_models(cfg, corpus)
    targets = load_targets(cfg)
    sources = select_sources(corpus, cfg.n_sources, cfg.source_overrides)
    _, n_new = attack_batch([(r.utt_id, w) for r, w in sources], targets, asr, cfg.attack,
                            out / "attacks")
    log.info("%d attacks executed", n_new)
    evaluate(cfg, _attack_rows(cfg, targets, sources), sources, sids, targets)
    from .report import report
    report(out)
    return out
