import json
from dataclasses import replace

import pytest

from conftest import tiny_config
from phondrift import pipeline as PL
from phondrift.attack import read_jsonl
from phondrift.errors import ConfigError


def test_summary_rows_and_counts(tiny_run):
    rows = PL.read_summary(tiny_run.out_dir / "summary.csv")
    assert [r["target_id"] for r in rows] == ["T1", "T2"]
    for r in rows:
        assert (r["n_samples"], r["n_genuine"], r["n_impostor"]) == ("9", "3", "6")
        assert r["model"] == "sid_a"
    header = (tiny_run.out_dir / "summary.csv").read_text().splitlines()[0]
    assert header == ",".join(PL.SUMMARY_FIELDS)


def test_artifacts(tiny_run):
    out = tiny_run.out_dir
    assert len(read_jsonl(out / "attacks" / "attacks.jsonl")) == 6
    for tid in ("T1", "T2"):
        stats = json.loads((out / "stats" / f"sid_a_{tid}.json").read_text())
        assert stats["n_attempted"] == 3 and stats["pairing"] == "all"
        assert (out / "scores" / f"sid_a_{tid}.csv").exists()
        assert (out / "confusion" / f"{tid}.csv").exists()
    assert (out / "charts" / "dprime_grouped.svg").exists()
    assert json.loads((out / "run_config.json").read_text())["seed"] == 0


def test_rerun_resumes_without_new_attacks(tiny_run):
    jsonl = tiny_run.out_dir / "attacks" / "attacks.jsonl"
    before = jsonl.read_bytes()
    PL.run_pipeline(tiny_run)
    assert jsonl.read_bytes() == before


def test_successful_pairing_uses_only_successes(tiny_run, tmp_path):
    cfg = replace(tiny_run, pairing="successful")
    summary = PL.evaluate_experiment(cfg)
    rows = read_jsonl(tiny_run.out_dir / "attacks" / "attacks.jsonl")
    for rec in summary:
        n = sum(r["success"] for r in rows if r["target_id"] == rec["target_id"])
        assert rec["n_genuine"] == n and rec["n_samples"] == n * n
    PL.evaluate_experiment(tiny_run)  # restore the default scoring


def test_missing_models_fail_before_attacks(tmp_path, tiny_run):
    cfg = tiny_config(tmp_path / "exp", train=False, corpus_dir=tiny_run.manifest_path.parent)
    with pytest.raises(ConfigError, match="models missing"):
        PL.run_pipeline(cfg)
    assert not (tmp_path / "exp" / "attacks").exists()


def test_missing_corpus_dir(tmp_path):
    cfg = tiny_config(tmp_path / "exp", corpus_dir=tmp_path / "nowhere")
    with pytest.raises(ConfigError, match="manifest"):
        PL.run_pipeline(cfg)


def test_same_seed_same_summary(tmp_path, tiny_run):
    cfg = tiny_config(tmp_path / "again")
    PL.run_pipeline(cfg)
    assert (cfg.out_dir / "summary.csv").read_bytes() == \
        (tiny_run.out_dir / "summary.csv").read_bytes()


def test_from_mapping():
    cfg = PL.RunConfig.from_mapping({
        "seed": "3", "targets": "T1, T4", "attack.max_iters": "77", "attack.c": "2.5",
        "synth.n_speakers": "4", "asr.epochs": "9", "sid_models": "sid_a,sid_x",
        "sid_x.hidden": "12", "source_overrides": "spk00:spk00_u02", "train": "no",
        "pairing": "successful", "n_sources": "5",
    })
    assert cfg.seed == 3 and cfg.target_ids == ("T1", "T4")
    assert cfg.attack.max_iters == 77 and cfg.attack.c == 2.5
    assert cfg.synth.n_speakers == 4 and cfg.asr_train.epochs == 9
    assert set(cfg.sid_models) == {"sid_a", "sid_x"}
    assert cfg.sid_models["sid_x"].hidden == 12
    assert cfg.source_overrides == {"spk00": "spk00_u02"}
    assert cfg.train is False and cfg.pairing == "successful" and cfg.n_sources == 5
    s = cfg.seeded()
    assert s.synth.seed == 3 and s.attack.seed == 3 and s.sid_models["sid_a"].seed == 300


@pytest.mark.parametrize("mapping", [
    {"bogus": "1"}, {"attack.bogus": "1"}, {"attack.max_iters": "many"},
    {"attack.c": "-1"}, {"pairing": "some"}, {"train": "maybe"},
])
def test_from_mapping_rejects(mapping):
    with pytest.raises(ConfigError):
        PL.RunConfig.from_mapping(mapping)


def test_read_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nseed = 4\nattack.max_iters=10\n; other comment\n")
    assert PL.read_config_file(p) == {"seed": "4", "attack.max_iters": "10"}
    p.write_text("no equals sign here\n")
    with pytest.raises(ConfigError):
        PL.read_config_file(p)


def test_select_sources(tiny_run):
    from phondrift.synth import load_corpus
    corpus = load_corpus(tiny_run.manifest_path)
    chosen = PL.select_sources(corpus)
    assert [r.utt_id for r, _ in chosen] == ["spk00_u00", "spk01_u00", "spk02_u00"]
    chosen = PL.select_sources(corpus, 2, {"spk01": "spk01_u02"})
    assert [r.utt_id for r, _ in chosen] == ["spk00_u00", "spk01_u02"]
    with pytest.raises(ConfigError):
        PL.select_sources(corpus, None, {"spk01": "spk09_u00"})


def test_load_targets_file(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("target_id,text\nX1,Stop!\nX2,go home\n")
    cfg = PL.RunConfig(targets_file=p)
    assert [(t.target_id, t.text) for t in PL.load_targets(cfg)] == [("X1", "stop"),
                                                                     ("X2", "go home")]
