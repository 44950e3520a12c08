"""Waveform container, PCM16 WAV I/O, clipping and SNR."""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateInputError, FormatError, UnsupportedFormatError

PCM16_SCALE = 32768.0
CANONICAL_RATE = 16000


@dataclass(frozen=True, eq=False)
class Waveform:
    """Mono float64 samples in normalized amplitude units (full scale = 1.0)."""

    samples: np.ndarray
    sample_rate_hz: int = CANONICAL_RATE

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.float64).ravel()
        if s.size < 1:
            raise DegenerateInputError("waveform must contain at least one sample")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.size

    def __eq__(self, other):
        if not isinstance(other, Waveform):
            return NotImplemented
        return (
            self.sample_rate_hz == other.sample_rate_hz
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None

    @property
    def duration_s(self):
        return self.samples.size / self.sample_rate_hz

    def with_samples(self, samples):
        return Waveform(samples, self.sample_rate_hz)


def read_wav(path) -> Waveform:
    """Read a RIFF/WAVE PCM16 mono file.

    Stereo and non-16-bit files raise UnsupportedFormatError rather than being
    downmixed or requantized; anything the parser cannot make sense of raises
    FormatError.
    """
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except FileNotFoundError:
        raise
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg:
            raise UnsupportedFormatError(f"{path}: {msg} (only PCM tag 1 is supported)") from exc
        raise FormatError(f"{path}: {msg}") from exc
    except EOFError as exc:
        raise FormatError(f"{path}: truncated header") from exc
    if n_channels != 1:
        raise UnsupportedFormatError(f"{path}: {n_channels} channels, expected mono")
    if width != 2:
        raise UnsupportedFormatError(f"{path}: {8 * width}-bit samples, expected 16-bit")
    if len(raw) != n_frames * 2:
        raise FormatError(
            f"{path}: data chunk truncated ({len(raw)} bytes for {n_frames} declared frames)"
        )
    if n_frames == 0:
        raise FormatError(f"{path}: empty data chunk")
    ints = np.frombuffer(raw, dtype="<i2")
    return Waveform(ints.astype(np.float64) / PCM16_SCALE, rate)


def quantize_pcm16(samples) -> np.ndarray:
    s = np.asarray(samples, dtype=np.float64)
    return np.clip(np.round(s * PCM16_SCALE), -32768, 32767).astype("<i2")


def write_wav(w: Waveform, path) -> None:
    """Write PCM16 mono. +1.0 saturates to 32767/32768."""
    path = Path(path)
    data = quantize_pcm16(w.samples).tobytes()
    with open(path, "wb") as fh, wave.open(fh, "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(w.sample_rate_hz)
        wf.writeframes(data)


def _check_pair(a: Waveform, b: Waveform):
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if a.sample_rate_hz != b.sample_rate_hz:
        raise ValueError(f"sample-rate mismatch: {a.sample_rate_hz} vs {b.sample_rate_hz}")


def snr_db(clean: Waveform, perturbation: Waveform) -> float:
    """Total-power SNR, 10*log10(sum x^2 / sum d^2).

    Returns math.inf when the perturbation is identically zero.
    """
    _check_pair(clean, perturbation)
    p_x = float(np.dot(clean.samples, clean.samples))
    p_d = float(np.dot(perturbation.samples, perturbation.samples))
    if p_x == 0.0:
        raise DegenerateInputError("clean signal has zero energy")
    if p_d == 0.0:
        return math.inf
    return 10.0 * math.log10(p_x / p_d)


def clip(w: Waveform, bound: float = 1.0) -> Waveform:
    if not bound > 0:
        raise ValueError(f"clip bound must be positive, got {bound}")
    return w.with_samples(np.clip(w.samples, -bound, bound))
