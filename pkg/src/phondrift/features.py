"""Differentiable log-mel front-end.

Pipeline: pre-emphasis -> non-centered framing -> Hann window -> real DFT ->
one-sided power spectrum -> HTK triangular mel filterbank -> ln(energy + floor).
``backward`` pushes a feature-space gradient back to waveform samples using the
intermediates kept in ``FeatureMatrix.cache``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .audio import Waveform
from .errors import ContractError, DegenerateInputError


@dataclass(frozen=True)
class FrontendConfig:
    frame_len: int = 400
    hop: int = 160
    n_fft: int = 512
    n_mels: int = 40
    preemph: float = 0.97
    floor: float = 1e-10
    sample_rate_hz: int = 16000

    def __post_init__(self):
        if self.hop < 1:
            raise ValueError("hop must be >= 1")
        if self.frame_len < 1 or self.frame_len > self.n_fft:
            raise ValueError("need 1 <= frame_len <= n_fft")
        if self.n_fft & (self.n_fft - 1):
            raise ValueError("n_fft must be a power of two")
        if self.n_mels < 2:
            raise ValueError("n_mels must be >= 2")
        if not self.floor > 0:
            raise ValueError("floor must be positive")

    @property
    def n_bins(self):
        return self.n_fft // 2 + 1

    def n_frames(self, n_samples):
        if n_samples < self.frame_len:
            return 0
        return 1 + (n_samples - self.frame_len) // self.hop


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=16)
def _mel_filterbank(n_mels, n_fft, sample_rate_hz):
    nyquist = sample_rate_hz / 2.0
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(nyquist), n_mels + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * sample_rate_hz / n_fft
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_hz[None, :] - lower) / (center - lower)
    falling = (upper - bin_hz[None, :]) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


def mel_filterbank(cfg: FrontendConfig) -> np.ndarray:
    """(n_mels, n_bins) triangular weights, filters spanning 0 Hz to Nyquist."""
    return _mel_filterbank(cfg.n_mels, cfg.n_fft, cfg.sample_rate_hz)


def mel_center_frequencies(cfg: FrontendConfig) -> np.ndarray:
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(cfg.sample_rate_hz / 2.0), cfg.n_mels + 2))
    return edges[1:-1]


@lru_cache(maxsize=16)
def _hann(n):
    # symmetric Hann, as np.hanning
    w = np.hanning(n) if n > 1 else np.ones(1)
    w.setflags(write=False)
    return w


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray
    config: FrontendConfig
    n_samples: int
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_frames(self):
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape


def _frame_index(cfg, n_frames):
    return np.arange(cfg.frame_len)[None, :] + cfg.hop * np.arange(n_frames)[:, None]


def forward(w: Waveform | np.ndarray, cfg: FrontendConfig = FrontendConfig()) -> FeatureMatrix:
    samples = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    n = samples.size
    if n < cfg.frame_len + 1:
        raise DegenerateInputError(
            f"waveform of {n} samples is too short for frame_len {cfg.frame_len}"
        )
    emph = np.empty_like(samples)
    emph[0] = samples[0]
    emph[1:] = samples[1:] - cfg.preemph * samples[:-1]

    n_frames = cfg.n_frames(n)
    frames = emph[_frame_index(cfg, n_frames)]
    windowed = frames * _hann(cfg.frame_len)
    spectrum = np.fft.rfft(windowed, n=cfg.n_fft, axis=1)
    power = spectrum.real ** 2 + spectrum.imag ** 2
    energy = power @ mel_filterbank(cfg).T
    values = np.log(energy + cfg.floor)
    values.setflags(write=False)
    cache = {"frames": frames, "windowed": windowed, "spectrum": spectrum, "energy": energy}
    return FeatureMatrix(values=values, config=cfg, n_samples=n, cache=cache)


def backward(fm: FeatureMatrix, grad_out) -> np.ndarray:
    """Gradient of sum(grad_out * fm.values) with respect to the input samples."""
    cfg = fm.config
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != fm.values.shape:
        raise ContractError(f"grad_out shape {grad_out.shape} != features {fm.values.shape}")
    try:
        spectrum = fm.cache["spectrum"]
        energy = fm.cache["energy"]
    except KeyError as exc:
        raise ContractError("feature cache missing; recompute with forward()") from exc

    g_energy = grad_out / (energy + cfg.floor)
    g_power = g_energy @ mel_filterbank(cfg)
    # d|X_k|^2/dx_n = 2 Re(conj(X_k) e^{-2 pi i k n / N}); summed over the one-sided bins
    # this is the forward FFT of G_k conj(X_k) zero-filled above Nyquist.
    z = np.zeros((fm.n_frames, cfg.n_fft), dtype=np.complex128)
    z[:, : cfg.n_bins] = g_power * np.conj(spectrum)
    g_windowed = 2.0 * np.fft.fft(z, axis=1).real[:, : cfg.frame_len]
    g_frames = g_windowed * _hann(cfg.frame_len)

    # overlap scatter-add
    g_emph = np.bincount(
        _frame_index(cfg, fm.n_frames).ravel(), weights=g_frames.ravel(), minlength=fm.n_samples
    )
    g = g_emph.copy()
    g[:-1] -= cfg.preemph * g_emph[1:]
    return g
