"""Synthetic singer + backing corpus with ground-truth vocoder parameters.

Ground truth is defined by construction: each vocal is rendered from a
parameter track that the generator itself built, so targets are exact and
no analysis of the rendered audio is ever needed.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import features
from .audio import AudioBuffer, StftConfig, n_frames_for, stft, write_wav
from .errors import ConfigError, DataError
from .features import WarpConfig, log_compress
from .vocoder import SynthConfig, VocoderTrack, synthesize


def midi_to_hz(midi) -> float:
    return 440.0 * 2.0 ** ((np.asarray(midi, dtype=np.float64) - 69.0) / 12.0)


@dataclass(frozen=True)
class SongSpec:
    """Parametric singer description; all randomness derives from `seed`."""

    duration_s: float = 3.0
    seed: int = 0
    pitch_lo: int = 45
    pitch_hi: int = 72
    note_dur_lo: float = 0.2
    note_dur_hi: float = 1.5
    rest_prob: float = 0.15
    vibrato_rate_lo: float = 5.0
    vibrato_rate_hi: float = 7.0
    vibrato_cents: float = 30.0
    ap_voiced_lo: float = 0.05
    ap_voiced_hi: float = 0.2
    notes: tuple | None = None  # optional explicit ((midi_or_None, dur_s), ...)

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ConfigError("duration must be positive")
        lo, hi = midi_to_hz(self.pitch_lo), midi_to_hz(self.pitch_hi)
        if lo < features.F0_MIN or hi > features.F0_MAX:
            raise ConfigError("pitch range leaves the supported f0 range after conversion")


@dataclass(frozen=True)
class MixSpec:
    vocal_to_backing_db: float = 0.0
    # low-register triads keep the backing's partials below the singer's range
    chords: tuple = ((31, 35, 38), (33, 36, 40), (36, 40, 43))  # MIDI triads
    noise_level: float = 0.005
    seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.vocal_to_backing_db) and self.vocal_to_backing_db != math.inf:
            raise ConfigError("mix ratio must be finite or the +inf sentinel")


_SILENT_C0 = -23.0  # envelope gain e^-23 ~ 1e-10 for rest frames


def generate_vocal(spec: SongSpec, hop: int = 220, fs: int = 44100,
                   warp_cfg: WarpConfig = WarpConfig()):
    """Build a ground-truth VocoderTrack from the spec and render it.

    Returns (track, audio); audio has track.n_frames * hop samples.
    """
    rng = np.random.default_rng(spec.seed)
    n_frames = n_frames_for(int(round(spec.duration_s * fs)), hop)
    t = np.arange(n_frames) * hop / fs

    # note sequence
    if spec.notes is not None:
        notes = list(spec.notes)
    else:
        notes = []
        total = 0.0
        while total < spec.duration_s:
            dur = rng.uniform(spec.note_dur_lo, spec.note_dur_hi)
            pitch = None if rng.random() < spec.rest_prob else \
                int(rng.integers(spec.pitch_lo, spec.pitch_hi + 1))
            notes.append((pitch, dur))
            total += dur

    pitch_per_frame = np.full(n_frames, np.nan)
    edge = 0.0
    for pitch, dur in notes:
        sel = (t >= edge) & (t < edge + dur)
        if pitch is not None:
            pitch_per_frame[sel] = pitch
        edge += dur
    voiced = (~np.isnan(pitch_per_frame)).astype(np.float64)

    vib_rate = rng.uniform(spec.vibrato_rate_lo, spec.vibrato_rate_hi)
    vib_phase = rng.uniform(0.0, 2.0 * np.pi)
    cents = spec.vibrato_cents * np.sin(2.0 * np.pi * vib_rate * t + vib_phase)
    base = midi_to_hz(np.where(np.isnan(pitch_per_frame), 69.0, pitch_per_frame))
    f0 = np.where(voiced > 0.5,
                  np.clip(base * 2.0 ** (cents / 1200.0), features.F0_MIN, features.F0_MAX),
                  0.0)
    if spec.vibrato_cents == 0.0:
        f0 = np.where(voiced > 0.5, base, 0.0)  # keep note pitches exact

    # formants: Gaussian bumps on the warped axis with slow sinusoidal drift
    n_formants = int(rng.integers(3, 6))
    centers = rng.uniform(0.05 * np.pi, 0.95 * np.pi, n_formants)
    widths = rng.uniform(8.0, 24.0, n_formants) * np.pi / 512.0  # >= 8 bins
    heights = rng.uniform(1.0, 3.0, n_formants)
    drift_rate = rng.uniform(0.1, 0.4, n_formants)
    drift_phase = rng.uniform(0.0, 2.0 * np.pi, n_formants)
    drift_depth = rng.uniform(0.0, 0.03 * np.pi, n_formants)

    omega = np.linspace(0.0, np.pi, warp_cfg.grid_size)
    warped = features.warp_frequency(omega, warp_cfg.alpha)
    log_env = np.full((n_frames, warp_cfg.grid_size), -4.0)
    for i in range(n_formants):
        c_t = centers[i] + drift_depth[i] * np.sin(
            2.0 * np.pi * drift_rate[i] * t + drift_phase[i])
        log_env += heights[i] * np.exp(-((warped[None, :] - c_t[:, None]) ** 2)
                                       / (2.0 * widths[i] ** 2))
    mel = features.log_envelope_to_mel(log_env, warp_cfg)
    rest = voiced < 0.5
    mel[rest] = 0.0
    mel[rest, 0] = _SILENT_C0

    ap_level = rng.uniform(spec.ap_voiced_lo, spec.ap_voiced_hi)
    ap = np.where(voiced[:, None] > 0.5, ap_level, 1.0) * np.ones((n_frames, features.N_AP_BANDS))

    track = VocoderTrack(mel, ap, f0, voiced, fs, hop)
    # default synthesis config: re-synthesizing the ground-truth features
    # reproduces this stem exactly
    audio = synthesize(track, SynthConfig(), warp_cfg)
    return track, audio


def generate_backing(spec: MixSpec, n_samples: int, fs: int = 44100) -> AudioBuffer:
    """Sustained harmonic-rich chords plus 1/f noise, peak-normalized to 0.9."""
    if n_samples <= 0:
        raise ConfigError("n_samples must be positive")
    rng = np.random.default_rng(spec.seed)
    t = np.arange(n_samples) / fs
    out = np.zeros(n_samples)
    if spec.chords:
        seg = n_samples // len(spec.chords)
        for ci, chord in enumerate(spec.chords):
            start = ci * seg
            stop = n_samples if ci == len(spec.chords) - 1 else start + seg
            for midi in chord:
                f = midi_to_hz(midi)
                for h in range(1, 9):
                    if h * f >= fs / 2:
                        break
                    phase = rng.uniform(0.0, 2.0 * np.pi)
                    out[start:stop] += (1.0 / h) * np.sin(
                        2.0 * np.pi * h * f * t[start:stop] + phase)
    if spec.noise_level > 0:
        white = rng.standard_normal(n_samples)
        spec_w = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(n_samples, 1.0 / fs)
        shaped = np.fft.irfft(spec_w / np.sqrt(np.maximum(freqs, 20.0)), n=n_samples)
        rms = np.sqrt(np.mean(shaped ** 2))
        if rms > 0:
            out += spec.noise_level * shaped / rms
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= 0.9 / peak
    return AudioBuffer(out, fs)


@dataclass(frozen=True)
class MixResult:
    mix: AudioBuffer
    backing_gain: float  # applied to the backing before summing
    norm_scale: float    # applied to the sum (and to be applied to the stems)


def mix(vocal: AudioBuffer, backing: AudioBuffer, ratio_db: float = 0.0) -> MixResult:
    """Sum vocal and level-matched backing; report the scalars applied."""
    if vocal.sample_rate != backing.sample_rate:
        raise DataError("sample rates disagree")
    n = max(len(vocal), len(backing))
    v = np.concatenate([vocal.samples, np.zeros(n - len(vocal))])
    b = np.concatenate([backing.samples, np.zeros(n - len(backing))])
    ev = float(np.sum(v ** 2))
    eb = float(np.sum(b ** 2))
    if ratio_db == math.inf or eb == 0.0:
        gain = 0.0
    else:
        if ev == 0.0:
            raise DataError("silent vocal cannot be mixed at a finite ratio")
        gain = math.sqrt(ev / (eb * 10.0 ** (ratio_db / 10.0)))
    total = v + gain * b
    peak = float(np.max(np.abs(total))) if n else 0.0
    scale = 1.0 / max(1.0, peak)
    return MixResult(AudioBuffer(total * scale, vocal.sample_rate), gain, scale)


# ---------------------------------------------------------------------------
# Corpus directory

def generate_corpus(out_dir, n_train: int = 10, n_test: int = 4, duration_s: float = 3.0,
                    seed: int = 42, mix_db: float = 0.0,
                    stft_cfg: StftConfig = StftConfig(),
                    warp_cfg: WarpConfig = WarpConfig(), fs: int = 44100):
    """Write songNNN_{vocal,backing,mix}.wav + feature files + manifest.txt.

    Stems on disk are already scaled by the mix normalization scalar, so
    vocal + backing equals the mix sample for sample.
    """
    os.makedirs(out_dir, exist_ok=True)
    hop = stft_cfg.hop_samples(fs)
    lines = []
    for i in range(n_train + n_test):
        split = "train" if i < n_train else "test"
        song_seed = seed * 100003 + i
        spec = SongSpec(duration_s=duration_s, seed=song_seed)
        track, vocal = generate_vocal(spec, hop, fs, warp_cfg)
        mspec = MixSpec(vocal_to_backing_db=mix_db, seed=song_seed + 1)
        backing = generate_backing(mspec, len(vocal), fs)
        result = mix(vocal, backing, mix_db)

        name = f"song{i:03d}"
        write_wav(AudioBuffer(vocal.samples * result.norm_scale, fs),
                  os.path.join(out_dir, f"{name}_vocal.wav"))
        write_wav(AudioBuffer(backing.samples * result.backing_gain * result.norm_scale, fs),
                  os.path.join(out_dir, f"{name}_backing.wav"))
        write_wav(result.mix, os.path.join(out_dir, f"{name}_mix.wav"))

        target = track.to_features()
        spec_frames = log_compress(stft(result.mix, stft_cfg).frames)
        n_common = min(len(target), len(spec_frames))
        features.write_features(os.path.join(out_dir, f"{name}_target.ssvf"),
                                target[:n_common], fs, hop)
        features.write_features(os.path.join(out_dir, f"{name}_mix.ssvf"),
                                spec_frames[:n_common], fs, hop)
        lines.append(f"song={name} split={split} seed={song_seed} dur={duration_s} "
                     f"mix_db={mix_db} backing_gain={result.backing_gain!r} "
                     f"norm_scale={result.norm_scale!r}")
    with open(os.path.join(out_dir, "manifest.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")
    return lines


def read_manifest(data_dir):
    """List of dicts, one per manifest line (key=value fields)."""
    path = os.path.join(data_dir, "manifest.txt")
    if not os.path.exists(path):
        raise DataError(f"no manifest.txt in {data_dir}")
    entries = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                entries.append(dict(kv.split("=", 1) for kv in line.split()))
    return entries
