"""Synthetic multi-speaker corpus and manifest handling.

Each character is rendered as a fixed-frequency tone with two overtones,
separated by short silences. Underneath runs a continuous low-level voice
buzz: every harmonic of the speaker's pitch (120 Hz times a per-speaker
factor) up to Nyquist, falling off as 1/j and shaped by the speaker's
spectral tilt relative to the fundamental, so the pitch cue is never
attenuated. Character
frequencies do not depend on the speaker, so transcription and speaker
identification stay separable problems.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import Waveform, read_wav, write_wav
from .errors import DataError
from .targets import all_words

# Character base frequencies, evenly spaced on the mel scale from 300 to 3000 Hz.
CHAR_TONE_HZ = dict(zip(
    "abcdefghijklmnopqrstuvwxyz ",
    (300, 352, 406, 463, 523, 586, 652, 722, 796, 873, 954, 1039, 1129, 1224,
     1323, 1427, 1537, 1652, 1774, 1902, 2036, 2177, 2325, 2482, 2646, 2818, 3000),
))

BASE_PITCH_HZ = 120.0
OVERTONE_WEIGHTS = (1.0, 0.5, 0.3)
BUZZ_LEVEL = 0.15
PEAK_LEVEL = 0.5
RAMP_MS = 10.0
MANIFEST_FIELDS = ("utt_id", "speaker_id", "wav_path", "transcript")


@dataclass(frozen=True)
class SynthConfig:
    n_speakers: int = 20
    utterances_per_speaker: int = 5
    char_duration_ms: float = 80.0
    gap_ms: float = 30.0
    noise_rms: float = 0.01
    min_words: int = 2
    max_words: int = 3
    max_chars: int = 22
    sample_rate_hz: int = 16000
    seed: int = 0


@dataclass(frozen=True)
class SpeakerVoice:
    speaker_id: str
    pitch_factor: float
    tilt_db_per_octave: float

    @property
    def pitch_hz(self):
        return BASE_PITCH_HZ * self.pitch_factor

    def gain(self, freq_hz, ref_hz):
        return 10.0 ** (self.tilt_db_per_octave * np.log2(freq_hz / ref_hz) / 20.0)


@dataclass(frozen=True)
class ManifestRow:
    utt_id: str
    speaker_id: str
    wav_path: str
    transcript: str


def speaker_voices(cfg: SynthConfig):
    """Latin-hypercube draw of (pitch factor, tilt) so no two speakers share either value."""
    rng = np.random.default_rng([cfg.seed, 1])
    n = cfg.n_speakers
    u_pitch = (rng.permutation(n) + rng.uniform(0.2, 0.8, n)) / n
    u_tilt = (rng.permutation(n) + rng.uniform(0.2, 0.8, n)) / n
    lo, hi = np.log(0.8), np.log(1.25)
    factors = np.exp(lo + (hi - lo) * u_pitch)
    tilts = -6.0 + 12.0 * u_tilt
    return [SpeakerVoice(f"spk{i:02d}", float(f), float(t))
            for i, (f, t) in enumerate(zip(factors, tilts))]


def _envelope(n, ramp):
    env = np.ones(n)
    ramp = min(ramp, n // 2)
    if ramp > 0:
        r = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        env[:ramp] = r
        env[n - ramp:] = r[::-1]
    return env


def _buzz(voice, n, sr, rng):
    t = np.arange(n) / sr
    f0 = voice.pitch_hz
    n_harm = int((0.95 * sr / 2.0) // f0)
    out = np.zeros(n)
    for j in range(1, n_harm + 1):
        amp = BUZZ_LEVEL * voice.gain(j * f0, f0) / j
        out += amp * np.sin(2 * np.pi * j * f0 * t + rng.uniform(0, 2 * np.pi))
    return out


def render(text, voice: SpeakerVoice, cfg: SynthConfig, rng) -> Waveform:
    sr = cfg.sample_rate_hz
    n_tone = int(round(cfg.char_duration_ms * sr / 1000.0))
    n_gap = int(round(cfg.gap_ms * sr / 1000.0))
    ramp = int(round(RAMP_MS * sr / 1000.0))
    env = _envelope(n_tone, ramp)
    t = np.arange(n_tone) / sr
    nyquist = sr / 2.0
    pieces = [np.zeros(n_gap)]
    for ch in text:
        if ch not in CHAR_TONE_HZ:
            raise DataError(f"no tone for character {ch!r}")
        f = CHAR_TONE_HZ[ch]
        seg = np.zeros(n_tone)
        for k, w in enumerate(OVERTONE_WEIGHTS, start=1):
            if k * f < nyquist:
                seg += w * voice.gain(k * f, f) * np.sin(2 * np.pi * k * f * t + rng.uniform(0, 2 * np.pi))
        seg *= env
        pieces.extend([seg, np.zeros(n_gap)])
    signal = np.concatenate(pieces)
    signal += _buzz(voice, signal.size, sr, rng)
    peak = np.max(np.abs(signal))
    if peak > 0:
        signal *= PEAK_LEVEL / peak
    signal += cfg.noise_rms * rng.standard_normal(signal.size)
    return Waveform(np.clip(signal, -1.0, 1.0), sr)


def random_transcript(rng, cfg: SynthConfig, words=None):
    words = list(words or all_words())
    while True:
        n = int(rng.integers(cfg.min_words, cfg.max_words + 1))
        text = " ".join(words[i] for i in rng.integers(0, len(words), n))
        if len(text) <= cfg.max_chars:
            return text


def gen_corpus(cfg: SynthConfig, out_dir):
    """Render every (speaker, utterance) to WAV and write manifest.csv.

    Returns the manifest rows; wav_path entries are relative to out_dir.
    """
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    rows = []
    for s_idx, voice in enumerate(speaker_voices(cfg)):
        for u in range(cfg.utterances_per_speaker):
            rng = np.random.default_rng([cfg.seed, 2, s_idx, u])
            text = random_transcript(rng, cfg)
            w = render(text, voice, cfg, rng)
            utt_id = f"{voice.speaker_id}_u{u:02d}"
            rel = f"wav/{utt_id}.wav"
            write_wav(w, out_dir / rel)
            rows.append(ManifestRow(utt_id, voice.speaker_id, rel, text))
    write_manifest(rows, out_dir / "manifest.csv")
    with open(out_dir / "speakers.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["speaker_id", "pitch_factor", "tilt_db_per_octave"])
        for v in speaker_voices(cfg):
            writer.writerow([v.speaker_id, repr(v.pitch_factor), repr(v.tilt_db_per_octave)])
    return rows


def write_manifest(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        for r in rows:
            writer.writerow([r.utt_id, r.speaker_id, r.wav_path, r.transcript])


def read_manifest(path):
    """Load and validate a manifest; wav paths are resolved against the manifest's folder."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: manifest missing columns {sorted(missing)}")
        rows = [ManifestRow(*(r[k] for k in MANIFEST_FIELDS)) for r in reader]
    seen = set()
    for r in rows:
        if r.utt_id in seen:
            raise DataError(f"{path}: duplicate utt_id {r.utt_id}")
        seen.add(r.utt_id)
        if not r.transcript.strip():
            raise DataError(f"{path}: empty transcript for {r.utt_id}")
        if not resolve_wav(path, r).exists():
            raise DataError(f"{path}: wav for {r.utt_id} not found: {r.wav_path}")
    return rows


def resolve_wav(manifest_path, row: ManifestRow):
    p = Path(row.wav_path)
    return p if p.is_absolute() else Path(manifest_path).parent / p


def load_corpus(manifest_path):
    """Manifest rows paired with their decoded waveforms."""
    rows = read_manifest(manifest_path)
    return [(r, read_wav(resolve_wav(manifest_path, r))) for r in rows]


def split_heldout(rows, heldout_per_speaker=1):
    """Last ``heldout_per_speaker`` utterances (by utt_id) of each speaker are held out."""
    by_spk = {}
    for r in sorted(rows, key=lambda r: r[0].utt_id if isinstance(r, tuple) else r.utt_id):
        row = r[0] if isinstance(r, tuple) else r
        by_spk.setdefault(row.speaker_id, []).append(r)
    train, held = [], []
    for spk in sorted(by_spk):
        items = by_spk[spk]
        train.extend(items[:-heldout_per_speaker] if heldout_per_speaker else items)
        if heldout_per_speaker:
            held.extend(items[-heldout_per_speaker:])
    return train, held
