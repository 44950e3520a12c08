"""Speaker-verification scoring: genuine/impostor pairing, cosine scores,
d-prime, and TMR at a fixed FMR.

Scores are cosine similarities and a trial is accepted iff score >= threshold.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DataError, DegenerateInputError


def _vec(e):
    return np.asarray(getattr(e, "vector", e), dtype=np.float64).ravel()


def cosine_similarity(a, b) -> float:
    a, b = _vec(a), _vec(b)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine similarity of a zero-norm embedding")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


@dataclass
class ScoreSet:
    genuine: list = field(default_factory=list)
    impostor: list = field(default_factory=list)
    # (clean_speaker, adv_speaker, score, is_genuine) for every scored pair
    trials: list = field(default_factory=list)

    @property
    def n_samples(self):
        return len(self.genuine) + len(self.impostor)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["clean_speaker", "adv_speaker", "score", "is_genuine"])
            for a, b, s, g in self.trials:
                writer.writerow([a, b, repr(float(s)), int(g)])

    @classmethod
    def read_csv(cls, path):
        out = cls()
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                s, g = float(r["score"]), r["is_genuine"] == "1"
                out.trials.append((r["clean_speaker"], r["adv_speaker"], s, g))
                (out.genuine if g else out.impostor).append(s)
        return out


def make_pairs(clean_embeddings, adv_embeddings) -> ScoreSet:
    """Score every ordered (clean_i, adv_j) pair; i == j is genuine, i != j impostor."""
    clean_keys, adv_keys = set(clean_embeddings), set(adv_embeddings)
    if clean_keys != adv_keys:
        raise DataError(
            f"speaker keys differ: missing from adversarial {sorted(clean_keys - adv_keys)}, "
            f"missing from clean {sorted(adv_keys - clean_keys)}"
        )
    if len(clean_keys) < 2:
        raise DataError(f"need >= 2 speakers to form impostor pairs, got {len(clean_keys)}")
    keys = sorted(clean_keys)
    clean = np.array([_vec(clean_embeddings[k]) for k in keys])
    adv = np.array([_vec(adv_embeddings[k]) for k in keys])
    cn, an = np.linalg.norm(clean, axis=1), np.linalg.norm(adv, axis=1)
    if np.any(cn == 0) or np.any(an == 0):
        raise DegenerateInputError("zero-norm embedding in pairing input")
    sims = np.clip((clean / cn[:, None]) @ (adv / an[:, None]).T, -1.0, 1.0)
    out = ScoreSet()
    for i, ki in enumerate(keys):
        for j, kj in enumerate(keys):
            s = float(sims[i, j])
            out.trials.append((ki, kj, s, i == j))
            (out.genuine if i == j else out.impostor).append(s)
    return out


@dataclass(frozen=True)
class ScoreStats:
    mu_gen: float
    mu_imp: float
    var_gen: float
    var_imp: float
    d_prime: float
    n_genuine: int
    n_impostor: int


def d_prime(s: ScoreSet) -> ScoreStats:
    """(mu_gen - mu_imp) / sqrt((var_gen + var_imp) / 2) with population variances.

    Zero pooled variance yields +/-inf when the means differ and 0 when they agree.
    """
    gen = np.asarray(s.genuine, dtype=np.float64)
    imp = np.asarray(s.impostor, dtype=np.float64)
    if gen.size < 2 or imp.size < 2:
        raise DegenerateInputError(
            f"d' needs >= 2 scores per class (genuine {gen.size}, impostor {imp.size})"
        )
    mu_g, mu_i = float(gen.mean()), float(imp.mean())
    var_g, var_i = float(gen.var()), float(imp.var())
    pooled = math.sqrt(0.5 * (var_g + var_i))
    diff = mu_g - mu_i
    if pooled == 0.0:
        dp = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    else:
        dp = diff / pooled
    return ScoreStats(mu_g, mu_i, var_g, var_i, dp, int(gen.size), int(imp.size))


def _threshold_grid(gen, imp):
    grid = np.unique(np.concatenate([gen, imp]))
    return np.append(grid, np.nextafter(grid[-1], np.inf))


def _accept_rate(sorted_scores, thresholds):
    """Fraction of scores >= each threshold."""
    n = sorted_scores.size
    return (n - np.searchsorted(sorted_scores, thresholds, side="left")) / n


def tmr_at_fmr(s: ScoreSet, fmr_target: float = 0.001):
    """Returns (tmr, threshold).

    The threshold is the smallest observed score (or one step above the
    largest) whose false-match rate does not exceed ``fmr_target``.
    """
    if not 0.0 < fmr_target < 1.0:
        raise ValueError("fmr_target must lie in (0, 1)")
    gen = np.sort(np.asarray(s.genuine, dtype=np.float64))
    imp = np.sort(np.asarray(s.impostor, dtype=np.float64))
    if gen.size == 0 or imp.size == 0:
        raise DegenerateInputError("tmr_at_fmr needs genuine and impostor scores")
    grid = _threshold_grid(gen, imp)
    fmr = _accept_rate(imp, grid)
    # FMR is non-increasing along the grid; the last grid point always has FMR 0.
    idx = int(np.argmax(fmr <= fmr_target))
    tau = float(grid[idx])
    tmr = float(_accept_rate(gen, np.array([tau]))[0])
    return tmr, tau


def roc_points(s: ScoreSet):
    """(fmr, tmr, threshold) for each distinct observed score, then one past the maximum."""
    gen = np.sort(np.asarray(s.genuine, dtype=np.float64))
    imp = np.sort(np.asarray(s.impostor, dtype=np.float64))
    if gen.size == 0 or imp.size == 0:
        raise DegenerateInputError("roc_points needs genuine and impostor scores")
    grid = _threshold_grid(gen, imp)
    fmr = _accept_rate(imp, grid)
    tmr = _accept_rate(gen, grid)
    return [(float(f), float(t), float(th)) for f, t, th in zip(fmr, tmr, grid)]


def summarize(s: ScoreSet, fmr_target: float = 0.001):
    """Summary record: counts, TMR at the FMR target, d' and the raw moments."""
    stats = d_prime(s)
    tmr, tau = tmr_at_fmr(s, fmr_target)
    return {
        "n_samples": s.n_samples,
        "n_genuine": len(s.genuine),
        "n_impostor": len(s.impostor),
        "tmr_at_fmr": tmr,
        "fmr_target": fmr_target,
        "threshold": tau,
        **{k: v for k, v in asdict(stats).items() if k not in ("n_genuine", "n_impostor")},
    }


def write_stats_json(record, path):
    def enc(v):
        if isinstance(v, float) and not math.isfinite(v):
            return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        return v
    with open(path, "w") as fh:
        json.dump({k: enc(v) for k, v in record.items()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
