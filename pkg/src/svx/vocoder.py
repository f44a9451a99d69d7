"""Deterministic pulse-plus-noise synthesis from vocoder parameter tracks.

Synthesis depends only on the parameter track, never on any mixture signal,
so the rendered vocal carries no direct interference from a backing track.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import features
from .audio import AudioBuffer, overlap_add_synth
from .errors import DomainError, NumericError, ShapeError
from .features import F0_MAX, F0_MIN, WarpConfig


@dataclass(frozen=True)
class VocoderTrack:
    """Per-frame (mel envelope, band aperiodicity, f0, voicing) over time."""

    mel: np.ndarray      # (n_frames, order)
    ap: np.ndarray       # (n_frames, 4)
    f0: np.ndarray       # (n_frames,) Hz, 0 when unvoiced
    voiced: np.ndarray   # (n_frames,) in {0, 1}
    sample_rate: int = 44100
    hop_samples: int = 220

    def __post_init__(self):
        mel = np.asarray(self.mel, dtype=np.float64)
        ap = np.asarray(self.ap, dtype=np.float64)
        f0 = np.asarray(self.f0, dtype=np.float64)
        voiced = np.asarray(self.voiced, dtype=np.float64)
        n = mel.shape[0]
        if n == 0:
            raise ShapeError("VocoderTrack must contain at least one frame")
        if ap.shape[0] != n or f0.shape[0] != n or voiced.shape[0] != n:
            raise ShapeError("VocoderTrack field lengths disagree")
        object.__setattr__(self, "mel", mel)
        object.__setattr__(self, "ap", ap)
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "voiced", voiced)

    @property
    def n_frames(self) -> int:
        return self.mel.shape[0]

    def to_features(self) -> np.ndarray:
        return features.flatten_features(self.mel, self.ap, self.f0, self.voiced)

    @classmethod
    def from_features(cls, frames: np.ndarray, sample_rate: int, hop_samples: int):
        mel, ap, f0, voiced = features.unflatten_features(frames)
        return cls(mel, ap, f0, voiced, sample_rate, hop_samples)


@dataclass(frozen=True)
class SynthConfig:
    fft_size: int = 1024
    noise_seed: int = 0


def harmonic_phase_advance(prev_phase: float, f0_hz: float, hop_samples: int,
                           sample_rate: int) -> float:
    """Advance the fundamental phase by one hop, wrapped to [0, 2*pi)."""
    if f0_hz < 0:
        raise DomainError("f0 must be non-negative")
    return float((prev_phase + 2.0 * np.pi * f0_hz * hop_samples / sample_rate) % (2.0 * np.pi))


def synthesize(track: VocoderTrack, cfg: SynthConfig = SynthConfig(),
               warp_cfg: WarpConfig = WarpConfig()) -> AudioBuffer:
    """Render audio of length n_frames * hop_samples from a parameter track.

    Per frame: the decoded envelope shapes a mixed excitation built from a
    phase-continuous harmonic comb (weight sqrt(1 - aperiodicity)) and seeded
    white noise (weight sqrt(aperiodicity)); unvoiced frames are noise-only.
    """
    n_fft = cfg.fft_size
    n_bins = n_fft // 2 + 1
    fs = track.sample_rate
    hop = track.hop_samples
    n = track.n_frames

    voiced = track.voiced > 0.5
    bad = voiced & ((track.f0 < F0_MIN) | (track.f0 > F0_MAX))
    if np.any(bad):
        t = int(np.argmax(bad))
        raise DomainError(
            f"frame {t}: voiced f0 {track.f0[t]:.2f} Hz outside [{F0_MIN}, {F0_MAX}]")

    envelopes = features.mel_to_envelope(track.mel, warp_cfg, out_bins=n_bins)
    ap_env = features.decode_aperiodicity(track.ap, out_bins=n_bins, alpha=warp_cfg.alpha)
    noise_w = np.sqrt(ap_env)
    harm_w = np.sqrt(1.0 - ap_env)

    # sequential prepass: fundamental phase at each frame center
    phases = np.zeros(n)
    for t in range(1, n):
        phases[t] = harmonic_phase_advance(phases[t - 1], track.f0[t - 1], hop, fs)

    rng = np.random.default_rng(cfg.noise_seed)
    m = np.arange(n_fft) - n_fft // 2  # time index relative to the frame center
    rendered = np.zeros((n, n_fft))
    for t in range(n):
        noise = rng.standard_normal(n_fft)
        noise_spec = np.fft.rfft(noise)
        if voiced[t]:
            f0 = track.f0[t]
            n_harm = max(1, int((fs / 2.0 - 1.0) / f0))
            h = np.arange(1, n_harm + 1)
            amp = np.sqrt(2.0 / n_harm)  # unit total power, matching the noise
            harm = amp * np.cos(np.outer(h, 2.0 * np.pi * f0 / fs * m)
                                + (h * phases[t])[:, None]).sum(axis=0)
            spec = envelopes[t] * (harm_w[t] * np.fft.rfft(harm) + noise_w[t] * noise_spec)
        else:
            spec = envelopes[t] * noise_spec
        rendered[t] = np.fft.irfft(spec, n=n_fft)

    audio = overlap_add_synth(rendered, hop, fs)
    samples = audio.samples
    if not np.all(np.isfinite(samples)):
        raise NumericError("synthesis produced non-finite samples")
    peak = np.max(np.abs(samples)) if len(samples) else 0.0
    if peak > 1.0:
        samples = samples * (0.95 / peak)
    return AudioBuffer(samples, fs)
