from dataclasses import replace

import pytest

from phondrift import pipeline as PL
from phondrift.attack import AttackConfig
from phondrift.model import TrainConfig
from phondrift.synth import SynthConfig


def tiny_config(out_dir, **overrides):
    """3 speakers, 2 targets, one small speaker model: a pipeline run of a few seconds."""
    cfg = PL.RunConfig(
        out_dir=out_dir,
        synth=SynthConfig(n_speakers=3, utterances_per_speaker=3),
        asr_train=TrainConfig(epochs=5, hidden=16),
        sid_models={"sid_a": TrainConfig(epochs=5, hidden=8, emb_dim=4, crop_frames=50)},
        attack=AttackConfig(max_iters=20),
        target_ids=("T1", "T2"),
    )
    return replace(cfg, **overrides)


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    cfg = tiny_config(tmp_path_factory.mktemp("tiny") / "exp")
    PL.run_pipeline(cfg)
    return cfg


ACCEPTANCE_RESULTS = []


def record(criterion, ok, detail):
    """Log one acceptance line; the terminal summary repeats them all at the end."""
    line = f"{criterion} {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_RESULTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
