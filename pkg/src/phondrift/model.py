"""Tiny hand-differentiated recurrent models.

``AcousticModel`` maps log-mel frames to CTC logits (the transcription
function); ``SpeakerModel`` mean-pools the same recurrent encoder into a
speaker embedding and carries a classification head used only for training.
Everything is float64 numpy; gradients are written out by hand and checked
against finite differences in the test suite.
"""

from __future__ import annotations

import csv
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels, ctc
from .ctc import Vocabulary
from .errors import ContractError, DataError, DegenerateInputError, FormatError
from .features import FeatureMatrix, FrontendConfig

log = logging.getLogger(__name__)

ENCODER_PARAMS = ("W_in", "b_in", "W_x", "W_h", "b_h")


def _as_values(fm):
    if isinstance(fm, FeatureMatrix):
        return fm.values
    return np.asarray(fm, dtype=np.float64)


def _init_encoder(rng, n_in, hidden):
    def uni(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return {
        "W_in": uni((hidden, n_in), n_in),
        "b_in": np.zeros(hidden),
        "W_x": uni((hidden, hidden), hidden),
        "W_h": uni((hidden, hidden), hidden),
        "b_h": np.zeros(hidden),
    }


class _Encoder:
    """Input projection + one tanh recurrent layer over standardized features.

    ``feat_mean``/``feat_std`` are fixed (not trained) and set from the
    training corpus; gradients flow through the standardization.
    """

    def __init__(self, params, feat_mean, feat_std, frontend):
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self.feat_mean = np.asarray(feat_mean, dtype=np.float64)
        self.feat_std = np.asarray(feat_std, dtype=np.float64)
        self.frontend = frontend

    @property
    def n_in(self):
        return self.params["W_in"].shape[1]

    @property
    def hidden(self):
        return self.params["W_in"].shape[0]

    def _check_width(self, x):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ContractError(f"feature width {x.shape[-1]} != model input width {self.n_in}")

    def _encode(self, x):
        p = self.params
        xs = (x - self.feat_mean) / self.feat_std
        u = np.tanh(xs @ p["W_in"].T + p["b_in"])
        pre = u @ p["W_x"].T + p["b_h"]
        h = _kernels.rnn_forward(pre, np.ascontiguousarray(p["W_h"]))
        return {"xs": xs, "u": u, "h": h}

    def _encode_backward(self, cache, g_h):
        """BPTT. Returns (encoder param grads, grad wrt raw features)."""
        p = self.params
        xs, u, h = cache["xs"], cache["u"], cache["h"]
        g_pre = _kernels.rnn_backward(np.ascontiguousarray(g_h), h,
                                      np.ascontiguousarray(p["W_h"]))
        h_prev = np.vstack([np.zeros((1, self.hidden)), h[:-1]])
        g_u = g_pre @ p["W_x"]
        g_upre = g_u * (1.0 - u ** 2)
        grads = {
            "W_h": g_pre.T @ h_prev,
            "b_h": g_pre.sum(axis=0),
            "W_x": g_pre.T @ u,
            "W_in": g_upre.T @ xs,
            "b_in": g_upre.sum(axis=0),
        }
        g_x = (g_upre @ p["W_in"]) / self.feat_std
        return grads, g_x


class AcousticModel(_Encoder):
    def __init__(self, params, feat_mean, feat_std, frontend=FrontendConfig(),
                 vocab=Vocabulary(), config=None):
        super().__init__(params, feat_mean, feat_std, frontend)
        self.vocab = vocab
        self.config = dict(config or {})
        if self.params["W_out"].shape[0] != vocab.n_outputs:
            raise ContractError("output width must equal vocabulary size + 1")

    kind = "asr"

    @classmethod
    def init(cls, seed=0, hidden=64, frontend=FrontendConfig(), vocab=Vocabulary(),
             feat_mean=None, feat_std=None, config=None):
        rng = np.random.default_rng(seed)
        n_in = frontend.n_mels
        params = _init_encoder(rng, n_in, hidden)
        bound = 1.0 / np.sqrt(hidden)
        params["W_out"] = rng.uniform(-bound, bound, size=(vocab.n_outputs, hidden))
        params["b_out"] = np.zeros(vocab.n_outputs)
        mean = np.zeros(n_in) if feat_mean is None else feat_mean
        std = np.ones(n_in) if feat_std is None else feat_std
        cfg = {"seed": seed, "hidden": hidden, **(config or {})}
        return cls(params, mean, std, frontend, vocab, cfg)

    def forward(self, fm, keep_cache=False):
        x = _as_values(fm)
        self._check_width(x)
        cache = self._encode(x)
        logits = cache["h"] @ self.params["W_out"].T + self.params["b_out"]
        if keep_cache:
            return logits, cache
        return logits

    def backward(self, cache, grad_logits):
        """Returns (param grads, feature grads) for sum(grad_logits * logits)."""
        if cache is None or "h" not in cache:
            raise ContractError("forward cache missing; call forward(..., keep_cache=True)")
        grad_logits = np.asarray(grad_logits, dtype=np.float64)
        if grad_logits.shape != (cache["h"].shape[0], self.vocab.n_outputs):
            raise ContractError(f"grad_logits shape {grad_logits.shape} does not match logits")
        g_h = grad_logits @ self.params["W_out"]
        grads, g_x = self._encode_backward(cache, g_h)
        grads["W_out"] = grad_logits.T @ cache["h"]
        grads["b_out"] = grad_logits.sum(axis=0)
        return grads, g_x

    def transcribe(self, fm):
        return ctc.greedy_decode(self.forward(fm), self.vocab)


def asr_forward(m: AcousticModel, fm):
    return m.forward(fm)


def asr_backward_to_features(m: AcousticModel, fm, grad_logits, cache=None):
    if cache is None:
        _, cache = m.forward(fm, keep_cache=True)
    return m.backward(cache, grad_logits)[1]


@dataclass(frozen=True, eq=False)
class Embedding:
    vector: np.ndarray
    norm: float = field(init=False)

    def __post_init__(self):
        v = np.array(self.vector, dtype=np.float64).ravel()
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)
        object.__setattr__(self, "norm", float(np.linalg.norm(v)))


class SpeakerModel(_Encoder):
    kind = "sid"

    def __init__(self, params, feat_mean, feat_std, frontend=FrontendConfig(),
                 speakers=(), config=None):
        super().__init__(params, feat_mean, feat_std, frontend)
        self.speakers = tuple(speakers)
        self.config = dict(config or {})

    @classmethod
    def init(cls, seed=0, hidden=64, emb_dim=32, speakers=("s0", "s1"),
             frontend=FrontendConfig(), feat_mean=None, feat_std=None, config=None):
        if emb_dim < 2:
            raise ValueError("embedding dimension must be >= 2")
        rng = np.random.default_rng(seed)
        n_in = frontend.n_mels
        params = _init_encoder(rng, n_in, hidden)
        params["W_emb"] = rng.uniform(-1, 1, size=(emb_dim, hidden)) / np.sqrt(hidden)
        params["b_emb"] = np.zeros(emb_dim)
        params["W_cls"] = rng.uniform(-1, 1, size=(len(speakers), emb_dim)) / np.sqrt(emb_dim)
        params["b_cls"] = np.zeros(len(speakers))
        mean = np.zeros(n_in) if feat_mean is None else feat_mean
        std = np.ones(n_in) if feat_std is None else feat_std
        cfg = {"seed": seed, "hidden": hidden, "emb_dim": emb_dim, **(config or {})}
        return cls(params, mean, std, frontend, speakers, cfg)

    @property
    def emb_dim(self):
        return self.params["W_emb"].shape[0]

    def forward(self, fm, keep_cache=False):
        """Embedding vector and classification logits."""
        x = _as_values(fm)
        if x.ndim != 2 or x.shape[0] == 0:
            raise DegenerateInputError("cannot embed a zero-length feature matrix")
        self._check_width(x)
        cache = self._encode(x)
        pooled = cache["h"].mean(axis=0)
        emb = self.params["W_emb"] @ pooled + self.params["b_emb"]
        scores = self.params["W_cls"] @ emb + self.params["b_cls"]
        cache.update(pooled=pooled, emb=emb)
        if keep_cache:
            return emb, scores, cache
        return emb, scores

    def backward(self, cache, grad_emb, grad_scores=None):
        p = self.params
        grad_emb = np.asarray(grad_emb, dtype=np.float64).copy()
        grads = {"W_cls": np.zeros_like(p["W_cls"]), "b_cls": np.zeros_like(p["b_cls"])}
        if grad_scores is not None:
            grads["W_cls"] = np.outer(grad_scores, cache["emb"])
            grads["b_cls"] = np.asarray(grad_scores, dtype=np.float64)
            grad_emb += p["W_cls"].T @ grad_scores
        grads["W_emb"] = np.outer(grad_emb, cache["pooled"])
        grads["b_emb"] = grad_emb
        n = cache["h"].shape[0]
        g_h = np.tile(p["W_emb"].T @ grad_emb / n, (n, 1))
        enc_grads, g_x = self._encode_backward(cache, g_h)
        grads.update(enc_grads)
        return grads, g_x

    def embed(self, fm) -> Embedding:
        return Embedding(self.forward(fm)[0])


def sid_embed(m: SpeakerModel, fm) -> Embedding:
    emb = m.embed(fm)
    if emb.norm == 0.0:
        raise DegenerateInputError("embedding has zero norm")
    return emb


# --------------------------------------------------------------------- training


@dataclass
class TrainConfig:
    epochs: int = 60
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0
    seed: int = 0
    hidden: int = 64
    emb_dim: int = 32
    crop_frames: int = 0


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            params[k] -= lr_t * self.m[k] / (np.sqrt(self.v[k]) + self.eps)


def clip_grad_norm(grads, max_norm):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for k in grads:
            grads[k] = grads[k] * scale
    return total


def feature_stats(feature_list):
    stacked = np.vstack([_as_values(f) for f in feature_list])
    return stacked.mean(axis=0), np.maximum(stacked.std(axis=0), 1e-3)


def train_asr(items, cfg=TrainConfig(), frontend=FrontendConfig(), vocab=Vocabulary(),
              model=None, callback=None):
    """Per-utterance Adam on mean CTC loss.

    Args:
        items: sequence of (utt_id, FeatureMatrix or array, transcript text).
        model: optional AcousticModel to continue training.
        callback: called as callback(epoch, model) after each epoch.

    Returns:
        (AcousticModel, curve) where curve rows are dicts {epoch, loss}.
    """
    items = list(items)
    if not items:
        raise DataError("empty training corpus")
    prepared = []
    for utt_id, fm, text in items:
        x = _as_values(fm)
        if not vocab.covers(text):
            raise DataError(f"{utt_id}: transcript {text!r} has characters outside the vocabulary")
        labels = vocab.encode(text)
        if not ctc.is_feasible(x.shape[0], labels):
            raise DataError(
                f"{utt_id}: {len(labels)} labels infeasible in {x.shape[0]} frames"
            )
        prepared.append((utt_id, x, labels))

    if model is None:
        mean, std = feature_stats([x for _, x, _ in prepared])
        model = AcousticModel.init(
            seed=cfg.seed, hidden=cfg.hidden, frontend=frontend, vocab=vocab,
            feat_mean=mean, feat_std=std, config={"train": asdict(cfg)},
        )
    opt = Adam(model.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng(cfg.seed + 1)
    curve = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(prepared))
        total = 0.0
        for i in order:
            _, x, labels = prepared[i]
            logits, cache = model.forward(x, keep_cache=True)
            loss, g_logits = ctc.ctc_loss(logits, labels)
            grads, _ = model.backward(cache, g_logits)
            clip_grad_norm(grads, cfg.clip_norm)
            opt.step(model.params, grads)
            total += loss
        curve.append({"epoch": epoch, "loss": total / len(prepared)})
        log.debug("asr epoch %d loss %.4f", epoch, curve[-1]["loss"])
        if callback is not None:
            callback(epoch, model)
    return model, curve


def _softmax_xent(scores, target):
    z = scores - scores.max()
    p = np.exp(z)
    p /= p.sum()
    loss = -np.log(p[target])
    g = p.copy()
    g[target] -= 1.0
    return float(loss), g


def train_sid(items, cfg=TrainConfig(), frontend=FrontendConfig()):
    """Speaker classification with cross-entropy on the head.

    With ``cfg.crop_frames`` set, each step sees a random contiguous crop of
    that many frames instead of the whole utterance.

    Args:
        items: sequence of (utt_id, speaker_id, FeatureMatrix or array).

    Returns:
        (SpeakerModel, curve) with curve rows {epoch, loss, accuracy} (training accuracy).
    """
    items = list(items)
    speakers = sorted({spk for _, spk, _ in items})
    if len(speakers) < 2:
        raise DataError(f"need >= 2 speakers, got {speakers}")
    counts = {s: 0 for s in speakers}
    for _, spk, _ in items:
        counts[spk] += 1
    short = [s for s, c in counts.items() if c < 2]
    if short:
        raise DataError(f"speakers with fewer than 2 utterances: {short}")
    index = {s: i for i, s in enumerate(speakers)}
    prepared = [(utt, index[spk], _as_values(fm)) for utt, spk, fm in items]
    mean, std = feature_stats([x for _, _, x in prepared])
    model = SpeakerModel.init(
        seed=cfg.seed, hidden=cfg.hidden, emb_dim=cfg.emb_dim, speakers=speakers,
        frontend=frontend, feat_mean=mean, feat_std=std, config={"train": asdict(cfg)},
    )
    opt = Adam(model.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng(cfg.seed + 1)
    curve = []
    for epoch in range(1, cfg.epochs + 1):
        total, correct = 0.0, 0
        for i in rng.permutation(len(prepared)):
            _, label, x = prepared[i]
            if cfg.crop_frames and x.shape[0] > cfg.crop_frames:
                start = int(rng.integers(0, x.shape[0] - cfg.crop_frames + 1))
                x = x[start:start + cfg.crop_frames]
            emb, scores, cache = model.forward(x, keep_cache=True)
            loss, g_scores = _softmax_xent(scores, label)
            correct += int(np.argmax(scores) == label)
            grads, _ = model.backward(cache, np.zeros_like(emb), g_scores)
            clip_grad_norm(grads, cfg.clip_norm)
            opt.step(model.params, grads)
            total += loss
        curve.append({"epoch": epoch, "loss": total / len(prepared),
                      "accuracy": correct / len(prepared)})
    return model, curve


def classify_speaker(m: SpeakerModel, fm):
    _, scores = m.forward(fm)
    return m.speakers[int(np.argmax(scores))]


def write_curve(curve, path):
    if not curve:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(curve[0]))
        writer.writeheader()
        writer.writerows(curve)


# ------------------------------------------------------------------ serialization

MAGIC = b"PHDM"
FORMAT_VERSION = 1


def save_model(model, path):
    """Binary layout: magic, u32 version, u32 header length, JSON header, raw <f8 arrays.

    The header lists every array's name and shape in storage order and echoes
    the frontend and training configuration.
    """
    arrays = dict(model.params)
    arrays["feat_mean"] = model.feat_mean
    arrays["feat_std"] = model.feat_std
    header = {
        "kind": model.kind,
        "arrays": [[name, list(a.shape)] for name, a in arrays.items()],
        "frontend": asdict(model.frontend),
        "config": model.config,
    }
    if isinstance(model, AcousticModel):
        header["vocab"] = model.vocab.chars
    else:
        header["speakers"] = list(model.speakers)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for a in arrays.values():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_model(path, overrides=None):
    """Inverse of save_model.

    ``overrides`` maps frontend field names to values supplied on the command
    line; a value differing from the stored echo is logged as a warning and
    the override wins.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != MAGIC:
        raise FormatError(f"{path}: not a phondrift model file")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    if len(data) < 12 + hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header") from exc
    offset = 12 + hlen
    arrays = {}
    for name, shape in header["arrays"]:
        n = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * n
        if end > len(data):
            raise FormatError(f"{path}: truncated while reading {name}")
        arrays[name] = np.frombuffer(data[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes")

    frontend_fields = dict(header["frontend"])
    for key, value in (overrides or {}).items():
        if value is None or key not in frontend_fields:
            continue
        if frontend_fields[key] != value:
            log.warning("%s: stored %s=%r overridden by flag value %r",
                        path, key, frontend_fields[key], value)
            frontend_fields[key] = value
    frontend = FrontendConfig(**frontend_fields)
    mean, std = arrays.pop("feat_mean"), arrays.pop("feat_std")
    if header["kind"] == "asr":
        model = AcousticModel(arrays, mean, std, frontend, Vocabulary(header["vocab"]),
                              header["config"])
    elif header["kind"] == "sid":
        model = SpeakerModel(arrays, mean, std, frontend, header["speakers"], header["config"])
    else:
        raise FormatError(f"{path}: unknown model kind {header['kind']!r}")
    if model.n_in != frontend.n_mels:
        raise FormatError(f"{path}: input width {model.n_in} != n_mels {frontend.n_mels}")
    return model
