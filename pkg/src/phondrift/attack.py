"""Targeted white-box attack: projected gradient descent on

    ||delta||^2 + c * CTC(model(features(x + delta)), target)

with x + delta kept inside [-M, M].
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import ctc, features
from .audio import PCM16_SCALE, Waveform, snr_db, write_wav
from .ctc import Transcript
from .errors import InfeasibleTargetError, NumericError, PhondriftError

log = logging.getLogger(__name__)

CLIP_BOUND = 1.0


@dataclass(frozen=True)
class AttackConfig:
    c: float = 1.0
    lr: float = 1e-3
    max_iters: int = 3000
    clip_bound: float = CLIP_BOUND
    success_check_every: int = 10
    c_growth: float = 10.0
    quantize: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.success_check_every < 1:
            raise ValueError("success_check_every must be >= 1")


@dataclass
class AttackResult:
    adversarial: Waveform
    delta: Waveform
    success: bool
    iterations_used: int
    final_ctc_loss: float
    initial_ctc_loss: float
    snr_db: float
    decoded_text: str
    target_text: str
    loss_trace: list = field(default_factory=list)


TRACE_FIELDS = ("iteration", "c", "ctc_loss", "l2", "objective", "decoded", "success")


def _project(x, delta, bound, quantize):
    adv = np.clip(x + delta, -bound, bound)
    if quantize:
        # snap to the PCM16 grid so the result is exactly what a WAV file stores
        adv = np.clip(np.round(adv * PCM16_SCALE), -32768, 32767) / PCM16_SCALE
        adv = np.clip(adv, -bound, bound)
    return adv


def _loss_and_grad(asr, samples, labels, need_grad=True):
    fm = features.forward(samples, asr.frontend)
    logits, cache = asr.forward(fm, keep_cache=True)
    loss, g_logits = ctc.ctc_loss(logits, labels)
    decoded = ctc.greedy_decode(logits, asr.vocab).text
    if not need_grad:
        return loss, None, decoded
    _, g_feat = asr.backward(cache, g_logits)
    return loss, features.backward(fm, g_feat), decoded


def run_attack(x: Waveform, target, asr, cfg: AttackConfig = AttackConfig()) -> AttackResult:
    """Drive greedy_decode(asr(x + delta)) to ``target``.

    Success is tested every ``cfg.success_check_every`` iterations (and after
    the last one) by exact match of the greedy transcription. If no success by
    half the budget, ``c`` is multiplied by ``cfg.c_growth`` once.
    """
    if not isinstance(target, Transcript):
        target = Transcript.from_text(target, asr.vocab)
    n_frames = asr.frontend.n_frames(len(x))
    if not ctc.is_feasible(n_frames, target.labels):
        raise InfeasibleTargetError(
            f"target {target.text!r} needs {ctc.min_frames(target.labels)} frames, "
            f"utterance has {n_frames}"
        )
    xs = x.samples
    delta = np.zeros_like(xs)
    c = cfg.c
    trace = []
    initial_loss = None
    success = False
    decoded = ""
    loss = math.nan
    escalated = False
    it = 0

    def check(it_, adv):
        nonlocal decoded, loss, initial_loss
        loss, _, decoded = _loss_and_grad(asr, adv, target.labels, need_grad=False)
        if initial_loss is None:
            initial_loss = loss
        d = adv - xs
        l2 = float(d @ d)
        ok = decoded == target.text
        trace.append({"iteration": it_, "c": c, "ctc_loss": loss, "l2": l2,
                      "objective": l2 + c * loss, "decoded": decoded, "success": ok})
        return ok

    adv = xs.copy()  # on the PCM16 grid already when x came from a WAV
    cont = xs.copy()
    for it in range(cfg.max_iters):
        if it % cfg.success_check_every == 0:
            adv = _project(xs, cont - xs, cfg.clip_bound, cfg.quantize)
            if check(it, adv):
                success = True
                break
        if not escalated and it >= cfg.max_iters // 2 and it > 0:
            c *= cfg.c_growth
            escalated = True
        step_loss, grad, _ = _loss_and_grad(asr, cont, target.labels)
        if not (math.isfinite(step_loss) and np.all(np.isfinite(grad))):
            raise NumericError(f"non-finite loss/gradient at iteration {it}", iteration=it)
        delta = delta - cfg.lr * (2.0 * delta + c * grad)
        cont = np.clip(xs + delta, -cfg.clip_bound, cfg.clip_bound)
        delta = cont - xs
    else:
        it = cfg.max_iters
        adv = _project(xs, cont - xs, cfg.clip_bound, cfg.quantize)
        success = check(it, adv)

    delta_w = Waveform(adv - xs, x.sample_rate_hz)
    adv_w = Waveform(adv, x.sample_rate_hz)
    return AttackResult(
        adversarial=adv_w,
        delta=delta_w,
        success=success,
        iterations_used=it,
        final_ctc_loss=float(loss),
        initial_ctc_loss=float(initial_loss),
        snr_db=snr_db(x, delta_w),
        decoded_text=decoded,
        target_text=target.text,
        loss_trace=trace,
    )


def derive_seed(seed, source_id, target_id):
    digest = hashlib.sha256(f"{seed}:{source_id}:{target_id}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


JSONL_FIELDS = ("source_id", "target_id", "success", "iterations", "snr_db", "final_ctc_loss",
                "decoded_text", "wav_path_adv", "seed")


def read_jsonl(path):
    path = Path(path)
    if not path.exists():
        return []
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def _json_float(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return None if v is None or math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def attack_batch(sources, targets, asr, cfg: AttackConfig, out_dir, jsonl_name="attacks.jsonl"):
    """Attack every (source, target) pair, appending one JSON line per pair.

    Args:
        sources: sequence of (source_id, Waveform).
        targets: sequence of objects with ``target_id`` and ``text``.
        out_dir: receives the JSONL file and adv/<source>__<target>.wav files.

    Pairs already present in the JSONL are skipped, so an interrupted batch
    resumes where it stopped. Per-pair failures are recorded in the row's
    ``error`` field and never abort the batch.

    Returns:
        (rows, n_new): all rows in file order and the number of attacks executed.
    """
    sources = list(sources)
    if not sources:
        raise ValueError("no source utterances")
    out_dir = Path(out_dir)
    (out_dir / "adv").mkdir(parents=True, exist_ok=True)
    jsonl = out_dir / jsonl_name
    rows = read_jsonl(jsonl)
    done = {(r["source_id"], r["target_id"]) for r in rows}
    n_new = 0
    with open(jsonl, "a") as fh:
        for source_id, wav in sources:
            for t in targets:
                if (source_id, t.target_id) in done:
                    continue
                seed = derive_seed(cfg.seed, source_id, t.target_id)
                row = {"source_id": source_id, "target_id": t.target_id, "seed": seed,
                       "target_text": t.text}
                try:
                    res = run_attack(wav, t.text, asr, _with_seed(cfg, seed))
                    rel = f"adv/{source_id}__{t.target_id}.wav"
                    write_wav(res.adversarial, out_dir / rel)
                    row.update(success=res.success, iterations=res.iterations_used,
                               snr_db=_json_float(res.snr_db),
                               final_ctc_loss=_json_float(res.final_ctc_loss),
                               initial_ctc_loss=_json_float(res.initial_ctc_loss),
                               decoded_text=res.decoded_text, wav_path_adv=rel, error=None)
                except (PhondriftError, ValueError) as exc:
                    log.warning("attack %s -> %s failed: %s", source_id, t.target_id, exc)
                    row.update(success=False, iterations=0, snr_db=None, final_ctc_loss=None,
                               decoded_text=None, wav_path_adv=None,
                               error=f"{type(exc).__name__}: {exc}")
                fh.write(json.dumps(row, sort_keys=True) + "\n")
                fh.flush()
                rows.append(row)
                n_new += 1
    return rows, n_new


def _with_seed(cfg, seed):
    d = asdict(cfg)
    d["seed"] = seed
    return AttackConfig(**d)


def row_snr(row):
    v = row.get("snr_db")
    if v in ("inf", "-inf"):
        return float(v)
    return None if v is None else float(v)
