"""CTC loss/gradient (log-space forward-backward), greedy decoding, and a
brute-force path-enumeration oracle.

Blank is always index 0; vocabulary symbols follow from index 1.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .errors import DataError, GuardError, InfeasibleTargetError, NumericError

BLANK = 0
DEFAULT_CHARS = " abcdefghijklmnopqrstuvwxyz"

NEG_INF = -np.inf


@dataclass(frozen=True)
class Vocabulary:
    chars: str = DEFAULT_CHARS

    def __post_init__(self):
        if len(set(self.chars)) != len(self.chars):
            raise ValueError("vocabulary characters must be unique")

    @property
    def size(self):
        """Number of non-blank symbols (V)."""
        return len(self.chars)

    @property
    def n_outputs(self):
        return len(self.chars) + 1

    def encode(self, text):
        index = {c: i + 1 for i, c in enumerate(self.chars)}
        try:
            return tuple(index[c] for c in text)
        except KeyError as exc:
            raise DataError(f"character {exc.args[0]!r} of {text!r} not in vocabulary") from None

    def decode(self, labels):
        return "".join(self.chars[i - 1] for i in labels)

    def covers(self, text):
        return all(c in self.chars for c in text)


@dataclass(frozen=True)
class Transcript:
    text: str
    labels: tuple

    @classmethod
    def from_text(cls, text, vocab=Vocabulary()):
        return cls(text, vocab.encode(text))

    def __len__(self):
        return len(self.labels)


def _labels_of(target):
    if isinstance(target, Transcript):
        return tuple(target.labels)
    return tuple(int(v) for v in target)


def min_frames(labels) -> int:
    """Fewest frames able to emit ``labels``: one per label plus a blank per adjacent repeat."""
    labels = tuple(labels)
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def is_feasible(n_frames, labels) -> bool:
    return n_frames >= min_frames(labels)


def log_softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    return logits - logsumexp(logits, axis=1, keepdims=True)


def _extend(labels):
    ext = np.zeros(2 * len(labels) + 1, dtype=np.int64)
    ext[1::2] = labels
    return ext


def ctc_loss(logits, target):
    """Negative log-likelihood of ``target`` under per-frame softmax(logits).

    Args:
        logits: (frames, V+1) unnormalized scores, blank in column 0.
        target: Transcript or label sequence (indices >= 1).

    Returns:
        (loss, grad) where grad = d loss / d logits, same shape as logits.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = _labels_of(target)
    n_frames, n_out = logits.shape
    if any(lab < 1 or lab >= n_out for lab in labels):
        raise DataError(f"labels {labels} outside 1..{n_out - 1}")
    if not is_feasible(n_frames, labels):
        raise InfeasibleTargetError(
            f"{len(labels)} labels need >= {min_frames(labels)} frames, have {n_frames}"
        )

    lp = log_softmax(logits)
    ext = _extend(labels)
    n_states = ext.size
    skip = np.zeros(n_states, dtype=bool)
    skip[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])
    emit = np.ascontiguousarray(lp[:, ext])

    alpha = _kernels.ctc_alpha(emit, skip)
    beta = _kernels.ctc_beta(emit, skip)

    log_p = alpha[-1, -1] if n_states == 1 else np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    if not np.isfinite(log_p):
        raise NumericError(f"target log-probability is {log_p}")

    occupancy = np.exp(alpha + beta - log_p)
    state_label = np.zeros((n_states, n_out))
    state_label[np.arange(n_states), ext] = 1.0
    posterior = occupancy @ state_label
    grad = np.exp(lp) - posterior
    return max(0.0, -float(log_p)), grad


def collapse(path):
    """Merge repeats, then drop blanks."""
    return tuple(k for k, _ in itertools.groupby(path) if k != BLANK)


MAX_ENUMERATED_PATHS = 2_000_000


def collapsed_distribution(logits):
    """Probability mass of every collapsed label string, by explicit path enumeration."""
    logits = np.asarray(logits, dtype=np.float64)
    n_frames, n_out = logits.shape
    if n_frames * math.log(n_out) > math.log(MAX_ENUMERATED_PATHS):
        raise GuardError(f"{n_out}^{n_frames} paths exceed the enumeration guard")
    probs = np.exp(log_softmax(logits))
    dist = {}
    for path in itertools.product(range(n_out), repeat=n_frames):
        p = 1.0
        for t, k in enumerate(path):
            p *= probs[t, k]
        key = collapse(path)
        dist[key] = dist.get(key, 0.0) + p
    return dist


def brute_force_ctc(logits, target) -> float:
    """-ln P(target) by summing every alignment whose collapse equals the target."""
    labels = _labels_of(target)
    p = collapsed_distribution(logits).get(labels, 0.0)
    return math.inf if p == 0.0 else -math.log(p)


def best_path(logits):
    return np.argmax(np.asarray(logits), axis=1)


def greedy_decode(logits, vocab=Vocabulary()) -> Transcript:
    labels = collapse(best_path(logits).tolist())
    return Transcript(vocab.decode(labels), labels)
