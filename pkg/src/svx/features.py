"""Vocoder-parameter coding.

Harmonic envelopes are coded as 60 cepstral-domain coefficients on an
all-pass warped frequency axis (alpha = 0.45 at 44.1 kHz); aperiodicity is
reduced to 4 band means; f0 is coded on a log scale with a voicing flag.
Feature streams are min-max normalized with global dataset statistics.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, EmptyInputError, FormatError, ShapeError

DEFAULT_ALPHA = 0.45
DEFAULT_ORDER = 60
N_AP_BANDS = 4
F0_MIN = 50.0
F0_MAX = 1500.0
LOG_FLOOR = 1e-10
DB_FLOOR = -120.0

_LOG2_F0_MIN = np.log2(F0_MIN)
_LOG2_F0_SPAN = np.log2(F0_MAX) - np.log2(F0_MIN)


@dataclass(frozen=True)
class WarpConfig:
    """All-pass warping map configuration."""

    alpha: float = DEFAULT_ALPHA
    order: int = DEFAULT_ORDER
    grid_size: int = 513

    def __post_init__(self):
        if not abs(self.alpha) < 1:
            raise DomainError(f"|alpha| must be < 1, got {self.alpha}")
        if self.order < 1:
            raise DomainError("order must be >= 1")
        if self.grid_size < 2 * self.order:
            raise DomainError("grid_size must be at least 2 * order")


def warp_frequency(omega, alpha: float = DEFAULT_ALPHA):
    """All-pass frequency map; a monotone bijection of [0, pi] onto itself."""
    w = np.asarray(omega, dtype=np.float64)
    if np.any(w < -1e-12) or np.any(w > np.pi + 1e-12):
        raise DomainError("omega must lie in [0, pi]")
    w = np.clip(w, 0.0, np.pi)
    out = w + 2.0 * np.arctan(alpha * np.sin(w) / (1.0 - alpha * np.cos(w)))
    return float(out) if np.isscalar(omega) else out


def unwarp_frequency(omega_warped, alpha: float = DEFAULT_ALPHA, tol: float = 1e-10):
    """Numerical inverse of warp_frequency by bisection on [0, pi]."""
    target = np.asarray(omega_warped, dtype=np.float64)
    if np.any(target < -1e-12) or np.any(target > np.pi + 1e-12):
        raise DomainError("warped omega must lie in [0, pi]")
    target = np.clip(target, 0.0, np.pi)
    lo = np.zeros_like(target)
    hi = np.full_like(target, np.pi)
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        above = warp_frequency(mid, alpha) > target
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    out = 0.5 * (lo + hi)
    return float(out) if np.isscalar(omega_warped) else out


@lru_cache(maxsize=8)
def _codec_matrices(alpha: float, order: int, n_bins: int):
    """Basis of warped-axis cosines sampled at the uniform frequency bins.

    decode: log_env = B @ coeffs (exact evaluation, no resampling error).
    encode: coeffs = P @ log_env, the least-squares fit in that basis, which
    makes encode(decode(c)) = c to solver precision.
    """
    omega = np.linspace(0.0, np.pi, n_bins)
    warped = warp_frequency(omega, alpha)
    basis = np.cos(np.outer(warped, np.arange(order)))  # (n_bins, order)
    pinv = np.linalg.pinv(basis)                        # (order, n_bins)
    return basis, pinv


def envelope_to_mel(envelope: np.ndarray, cfg: WarpConfig = WarpConfig()) -> np.ndarray:
    """Code a magnitude envelope (last axis = frequency bins) as cepstral coefficients."""
    env = np.asarray(envelope, dtype=np.float64)
    log_env = np.log(np.maximum(env, LOG_FLOOR))
    return log_envelope_to_mel(log_env, cfg)


def log_envelope_to_mel(log_env: np.ndarray, cfg: WarpConfig = WarpConfig()) -> np.ndarray:
    n_bins = log_env.shape[-1]
    _, pinv = _codec_matrices(cfg.alpha, cfg.order, n_bins)
    return log_env @ pinv.T


def mel_to_envelope(mel: np.ndarray, cfg: WarpConfig = WarpConfig(),
                    out_bins: int = 513) -> np.ndarray:
    """Reconstruct a magnitude envelope from cepstral coefficients."""
    coeffs = np.asarray(mel, dtype=np.float64)
    if coeffs.shape[-1] != cfg.order:
        raise ShapeError(f"expected {cfg.order} coefficients, got {coeffs.shape[-1]}")
    basis, _ = _codec_matrices(cfg.alpha, cfg.order, out_bins)
    return np.exp(coeffs @ basis.T)


# ---------------------------------------------------------------------------
# Aperiodicity banding

@lru_cache(maxsize=8)
def _band_layout(alpha: float, n_bins: int):
    """Band edges equally spaced on the warped axis, mapped back to bins."""
    edges_w = np.linspace(0.0, np.pi, N_AP_BANDS + 1)
    edges = unwarp_frequency(edges_w, alpha)
    centers_w = (edges_w[:-1] + edges_w[1:]) / 2.0
    centers = unwarp_frequency(centers_w, alpha)
    omega = np.linspace(0.0, np.pi, n_bins)
    band_of_bin = np.clip(np.searchsorted(edges, omega, side="right") - 1, 0, N_AP_BANDS - 1)
    return band_of_bin, centers, omega


def encode_aperiodicity(ap_envelope: np.ndarray, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Mean aperiodicity within each of 4 warped-axis bands."""
    ap = np.asarray(ap_envelope, dtype=np.float64)
    if np.any(ap < 0.0) or np.any(ap > 1.0):
        raise DomainError("aperiodicity values must lie in [0, 1]")
    band_of_bin, _, _ = _band_layout(alpha, ap.shape[-1])
    out = np.empty(ap.shape[:-1] + (N_AP_BANDS,))
    for b in range(N_AP_BANDS):
        out[..., b] = ap[..., band_of_bin == b].mean(axis=-1)
    return out


def decode_aperiodicity(bands: np.ndarray, out_bins: int = 513,
                        alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Piecewise-linear interpolation across band centers, clamped to [0, 1]."""
    b = np.asarray(bands, dtype=np.float64)
    if b.shape[-1] != N_AP_BANDS:
        raise ShapeError(f"expected {N_AP_BANDS} bands, got {b.shape[-1]}")
    _, centers, omega = _band_layout(alpha, out_bins)
    flat = b.reshape(-1, N_AP_BANDS)
    out = np.empty((flat.shape[0], out_bins))
    for i, row in enumerate(flat):
        out[i] = np.interp(omega, centers, row)
    return np.clip(out.reshape(b.shape[:-1] + (out_bins,)), 0.0, 1.0)


# ---------------------------------------------------------------------------
# f0 / voicing coding

def encode_f0(f0_hz, voiced):
    """Log-scale f0 coding: [50, 1500] Hz maps to [0, 1]; unvoiced codes as 0."""
    f0 = np.asarray(f0_hz, dtype=np.float64)
    v = np.asarray(voiced, dtype=np.float64)
    safe = np.where(f0 > 0, f0, F0_MIN)
    coded = (np.log2(safe) - _LOG2_F0_MIN) / _LOG2_F0_SPAN
    return np.where(v > 0.5, coded, 0.0)


def decode_f0(coded, voiced):
    f0 = F0_MIN * 2.0 ** (np.asarray(coded, dtype=np.float64) * _LOG2_F0_SPAN)
    f0 = np.clip(f0, F0_MIN, F0_MAX)
    return np.where(np.asarray(voiced, dtype=np.float64) > 0.5, f0, 0.0)


# ---------------------------------------------------------------------------
# Frame layout: [0:60] mel, [60:64] aperiodicity, [64] coded f0, [65] voicing

FEATURE_DIM = DEFAULT_ORDER + N_AP_BANDS + 2


def flatten_features(mel: np.ndarray, ap: np.ndarray, f0_hz: np.ndarray,
                     voiced: np.ndarray) -> np.ndarray:
    n = mel.shape[0]
    out = np.empty((n, FEATURE_DIM))
    out[:, :DEFAULT_ORDER] = mel
    out[:, DEFAULT_ORDER:DEFAULT_ORDER + N_AP_BANDS] = ap
    out[:, DEFAULT_ORDER + N_AP_BANDS] = encode_f0(f0_hz, voiced)
    out[:, DEFAULT_ORDER + N_AP_BANDS + 1] = np.asarray(voiced, dtype=np.float64)
    return out


def unflatten_features(frames: np.ndarray):
    """Inverse of flatten_features: (mel, ap, f0_hz, voiced)."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != FEATURE_DIM:
        raise ShapeError(f"expected (n, {FEATURE_DIM}) features, got {frames.shape}")
    mel = frames[:, :DEFAULT_ORDER].copy()
    ap = frames[:, DEFAULT_ORDER:DEFAULT_ORDER + N_AP_BANDS].copy()
    voiced = (frames[:, DEFAULT_ORDER + N_AP_BANDS + 1] > 0.5).astype(np.float64)
    f0 = decode_f0(frames[:, DEFAULT_ORDER + N_AP_BANDS], voiced)
    return mel, ap, f0, voiced


# ---------------------------------------------------------------------------
# Min-max normalization

@dataclass(frozen=True)
class NormStats:
    """Per-dimension global minima/maxima of a feature stream."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins = np.asarray(self.mins, dtype=np.float64)
        maxs = np.asarray(self.maxs, dtype=np.float64)
        if mins.shape != maxs.shape or mins.ndim != 1:
            raise ShapeError("mins and maxs must be matching 1-d arrays")
        if np.any(maxs < mins):
            raise ValueError("maxs must be >= mins")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    @property
    def dim(self) -> int:
        return len(self.mins)


def compute_norm_stats(feature_streams) -> NormStats:
    streams = [np.asarray(s, dtype=np.float64) for s in feature_streams]
    streams = [s for s in streams if s.size]
    if not streams:
        raise EmptyInputError("no frames to compute statistics from")
    dim = streams[0].shape[1]
    for s in streams:
        if s.ndim != 2 or s.shape[1] != dim:
            raise ShapeError("inconsistent feature dimensions across streams")
    mins = np.min([s.min(axis=0) for s in streams], axis=0)
    maxs = np.max([s.max(axis=0) for s in streams], axis=0)
    return NormStats(mins, maxs)


def normalize(frames: np.ndarray, stats: NormStats) -> np.ndarray:
    """Map each dimension to [0, 1]; degenerate (min = max) dims map to 0.5."""
    x = np.asarray(frames, dtype=np.float64)
    if x.shape[-1] != stats.dim:
        raise ShapeError(f"feature dim {x.shape[-1]} != stats dim {stats.dim}")
    span = stats.maxs - stats.mins
    degenerate = span <= 0
    safe_span = np.where(degenerate, 1.0, span)
    out = np.clip((x - stats.mins) / safe_span, 0.0, 1.0)
    out[..., degenerate] = 0.5
    return out


def denormalize(frames: np.ndarray, stats: NormStats) -> np.ndarray:
    x = np.asarray(frames, dtype=np.float64)
    if x.shape[-1] != stats.dim:
        raise ShapeError(f"feature dim {x.shape[-1]} != stats dim {stats.dim}")
    span = stats.maxs - stats.mins
    out = x * span + stats.mins
    out[..., span <= 0] = stats.mins[span <= 0]
    return out


def log_compress(mags: np.ndarray) -> np.ndarray:
    """dB compression of spectrogram magnitudes, floored at -120 dB."""
    return np.maximum(20.0 * np.log10(np.asarray(mags) + LOG_FLOOR), DB_FLOOR)


# ---------------------------------------------------------------------------
# Binary file formats

_SSVF_MAGIC = b"SSVF"
_SSNS_MAGIC = b"SSNS"
_VERSION = 1


def write_features(path, frames: np.ndarray, sample_rate: int, hop_samples: int) -> None:
    """Feature file: magic, version, sample_rate, hop, n_frames, n_dims, f32 payload."""
    frames = np.ascontiguousarray(frames, dtype="<f4")
    if frames.ndim != 2:
        raise ShapeError("feature frames must be 2-d")
    with open(path, "wb") as f:
        f.write(_SSVF_MAGIC)
        f.write(struct.pack("<IIIII", _VERSION, sample_rate, hop_samples,
                            frames.shape[0], frames.shape[1]))
        f.write(frames.tobytes())


def read_features(path):
    """Returns (frames float64 (n, d), sample_rate, hop_samples)."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _SSVF_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        version, sr, hop, n, d = struct.unpack("<IIIII", f.read(20))
        if version != _VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        payload = f.read(4 * n * d)
    if len(payload) != 4 * n * d:
        raise FormatError(f"{path}: truncated payload")
    frames = np.frombuffer(payload, dtype="<f4").reshape(n, d).astype(np.float64)
    return frames, sr, hop


def write_norm_stats(path, stats: NormStats) -> None:
    with open(path, "wb") as f:
        f.write(_SSNS_MAGIC)
        f.write(struct.pack("<II", _VERSION, stats.dim))
        f.write(np.ascontiguousarray(stats.mins, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(stats.maxs, dtype="<f4").tobytes())


def read_norm_stats(path) -> NormStats:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _SSNS_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        version, dim = struct.unpack("<II", f.read(8))
        if version != _VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        mins = np.frombuffer(f.read(4 * dim), dtype="<f4").astype(np.float64)
        maxs = np.frombuffer(f.read(4 * dim), dtype="<f4").astype(np.float64)
    if len(mins) != dim or len(maxs) != dim:
        raise FormatError(f"{path}: truncated stats payload")
    return NormStats(mins, maxs)
