"""Waveform I/O, framing and the STFT front end.

All functions are pure; arrays are float64 unless stated otherwise.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyInputError, FormatError, ShapeError, UnsupportedCodecError

DEFAULT_SAMPLE_RATE = 44100


@dataclass(frozen=True)
class AudioBuffer:
    """Mono sample sequence with its sample rate."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ShapeError(f"AudioBuffer expects a 1-d sample array, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioBuffer samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    """Analysis configuration: transform size and hop.

    hop_samples is floor(sample_rate * hop_ms / 1000); at 44.1 kHz the
    default 5 ms hop is 220 samples.
    """

    fft_size: int = 1024
    hop_ms: float = 5.0

    def __post_init__(self):
        if self.fft_size < 2 or (self.fft_size & (self.fft_size - 1)) != 0:
            raise ConfigError(f"fft_size must be a power of two, got {self.fft_size}")
        if self.hop_ms <= 0:
            raise ConfigError("hop_ms must be positive")

    def hop_samples(self, sample_rate: int = DEFAULT_SAMPLE_RATE) -> int:
        hop = int(sample_rate * self.hop_ms / 1000.0)
        if hop < 1:
            raise ConfigError("hop shorter than one sample")
        if hop >= self.fft_size:
            raise ConfigError(f"hop ({hop}) must be smaller than fft_size ({self.fft_size})")
        return hop

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1


@dataclass(frozen=True)
class Spectrogram:
    """Time-major grid of per-frame magnitudes; frame t is centered at t*hop."""

    frames: np.ndarray  # (n_frames, n_bins), non-negative
    sample_rate: int
    hop_samples: int

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise ShapeError(f"Spectrogram frames must be 2-d, got shape {frames.shape}")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_bins(self) -> int:
        return self.frames.shape[1]


def n_frames_for(n_samples: int, hop_samples: int) -> int:
    """Shared frame-count formula for analysis and data generation."""
    return n_samples // hop_samples + 1


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window (satisfies constant overlap-add at hop <= n/2)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


# ---------------------------------------------------------------------------
# WAV I/O (RIFF little-endian, PCM16 / IEEE float32)

def read_wav(path) -> AudioBuffer:
    """Read a RIFF/WAVE file; stereo is downmixed by channel averaging."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (chunk_len,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + chunk_len]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise FormatError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            payload = body
        pos += 8 + chunk_len + (chunk_len & 1)
    if fmt is None or payload is None:
        raise FormatError(f"{path}: missing fmt or data chunk")
    audio_format, n_channels, sample_rate, _, _, bits = fmt
    if n_channels < 1:
        raise FormatError(f"{path}: invalid channel count {n_channels}")
    if audio_format == 1 and bits == 16:
        raw = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        raw = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedCodecError(
            f"{path}: unsupported encoding (format={audio_format}, bits={bits}); "
            "only PCM16 and IEEE float32 are handled")
    if n_channels > 1:
        n = len(raw) // n_channels
        raw = raw[:n * n_channels].reshape(n, n_channels).mean(axis=1)
    return AudioBuffer(raw, sample_rate)


def write_wav(audio: AudioBuffer, path) -> None:
    """Write mono 16-bit PCM; values outside [-1, 1] are hard-clipped."""
    samples = np.clip(audio.samples, -1.0, 1.0)
    pcm = np.round(samples * 32767.0).astype("<i2")
    payload = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    fmt = b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, audio.sample_rate,
                                audio.sample_rate * 2, 2, 16)
    with open(path, "wb") as f:
        f.write(header + fmt + b"data" + struct.pack("<I", len(payload)) + payload)


# ---------------------------------------------------------------------------
# STFT / overlap-add

def stft(audio: AudioBuffer, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Magnitude STFT with center alignment: frame t covers samples around t*hop.

    The signal is zero-padded by fft_size/2 on both ends so that every frame
    window is centered on its nominal time.
    """
    if len(audio) == 0:
        raise EmptyInputError("cannot take the STFT of empty audio")
    n_fft = cfg.fft_size
    hop = cfg.hop_samples(audio.sample_rate)
    n_frames = n_frames_for(len(audio), hop)
    padded = np.concatenate([np.zeros(n_fft // 2), audio.samples, np.zeros(n_fft // 2)])
    idx = np.arange(n_frames)[:, None] * hop + np.arange(n_fft)[None, :]
    frames = padded[idx] * hann_window(n_fft)[None, :]
    mags = np.abs(np.fft.rfft(frames, axis=1))
    return Spectrogram(mags, audio.sample_rate, hop)


def overlap_add_synth(frames: np.ndarray, hop_samples: int,
                      sample_rate: int = DEFAULT_SAMPLE_RATE) -> AudioBuffer:
    """Window each frame, sum at hop offsets, normalize by the window overlap.

    Frame t is taken as centered at sample t*hop; the output is trimmed to
    n_frames * hop samples.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ShapeError(f"frames must be 2-d, got shape {frames.shape}")
    n_frames, frame_len = frames.shape
    if hop_samples >= frame_len:
        raise ConfigError(f"hop ({hop_samples}) must be smaller than the frame length ({frame_len})")
    window = hann_window(frame_len)
    total = (n_frames - 1) * hop_samples + frame_len
    out = np.zeros(total)
    wsum = np.zeros(total)
    windowed = frames * window[None, :]
    for t in range(n_frames):
        start = t * hop_samples
        out[start:start + frame_len] += windowed[t]
        wsum[start:start + frame_len] += window
    nonzero = wsum > 1e-12
    out[nonzero] /= wsum[nonzero]
    start = frame_len // 2
    trimmed = out[start:start + n_frames * hop_samples]
    if len(trimmed) < n_frames * hop_samples:
        trimmed = np.concatenate([trimmed, np.zeros(n_frames * hop_samples - len(trimmed))])
    return AudioBuffer(trimmed, sample_rate)
