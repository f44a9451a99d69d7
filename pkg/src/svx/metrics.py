"""Objective evaluation: BSS-Eval projections (SIR/SDR/SAR) and MCD.

The decomposition projects the estimate onto the span of L delayed copies
of each reference via the Gram matrix of cross-correlations; components are
returned at the full convolution length n + L - 1, so the decomposition
identity holds with the estimate zero-padded to that length.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy.signal import fftconvolve

from .errors import DataError, ShapeError

DB_CAP = 250.0
MCD_CONST = 10.0 / np.log(10.0) * np.sqrt(2.0)


def mcd(ref_mel: np.ndarray, est_mel: np.ndarray, exclude_c0: bool = True) -> float:
    """Mean over frames of (10/ln10) * sqrt(2 * sum_d (c_d - chat_d)^2) in dB."""
    ref = np.asarray(ref_mel, dtype=np.float64)
    est = np.asarray(est_mel, dtype=np.float64)
    if ref.shape != est.shape or ref.ndim != 2:
        raise ShapeError(f"shape mismatch: {ref.shape} vs {est.shape}")
    lo = 1 if exclude_c0 else 0
    diff = ref[:, lo:] - est[:, lo:]
    return float(np.mean(MCD_CONST * np.sqrt(np.sum(diff ** 2, axis=1))))


@dataclass(frozen=True)
class BssDecomposition:
    """estimate (zero-padded to len + L - 1) = s_target + e_interf + e_artif."""

    s_target: np.ndarray
    e_interf: np.ndarray
    e_artif: np.ndarray
    filter_len: int


@dataclass(frozen=True)
class SeparationScores:
    sir_db: float
    sdr_db: float
    sar_db: float


def _delayed_gram(refs: np.ndarray, y: np.ndarray, L: int):
    """Gram matrix and right-hand side for the span of delayed reference copies.

    Delayed copy (i, d) is refs[i] shifted right by d in a buffer of length
    n + L - 1. Cross-correlations make the Gram blocks Toeplitz.
    """
    n_src, n = refs.shape
    nfft = 1
    while nfft < n + L:
        nfft *= 2
    rf = np.fft.rfft(refs, nfft, axis=1)
    yf = np.fft.rfft(y, nfft)
    G = np.empty((n_src * L, n_src * L))
    for i in range(n_src):
        for j in range(n_src):
            corr = np.fft.irfft(rf[i].conj() * rf[j], nfft)
            # block[d1, d2] = sum_u ri[u - d1] rj[u - d2] = corr(d1 - d2)
            col = corr[:L]                       # lags 0..L-1 (d1 - d2 >= 0)
            row = np.concatenate([[corr[0]], corr[-1:-L:-1]])  # lags 0..-(L-1)
            G[i * L:(i + 1) * L, j * L:(j + 1) * L] = sla.toeplitz(col, row)
    D = np.empty(n_src * L)
    for i in range(n_src):
        xc = np.fft.irfft(rf[i].conj() * yf, nfft)
        D[i * L:(i + 1) * L] = xc[:L]
    return G, D


def _project(refs: np.ndarray, y: np.ndarray, L: int) -> np.ndarray:
    """Least-squares projection of y onto the delayed-copy span; length n + L - 1."""
    G, D = _delayed_gram(refs, y, L)
    reg = 1e-10 * np.trace(G) / G.shape[0]
    try:
        coef = sla.solve(G + reg * np.eye(G.shape[0]), D, assume_a="pos")
    except np.linalg.LinAlgError:
        warnings.warn("Gram matrix singular beyond regularization; using lstsq")
        coef, *_ = np.linalg.lstsq(G + reg * np.eye(G.shape[0]), D, rcond=None)
    n = refs.shape[1]
    proj = np.zeros(n + L - 1)
    for i in range(refs.shape[0]):
        proj += fftconvolve(coef[i * L:(i + 1) * L], refs[i])
    return proj


def bss_decompose(estimate, ref_target, ref_interference, L: int = 512) -> BssDecomposition:
    """Decompose the estimate into target, interference and artifact parts."""
    est = np.asarray(estimate, dtype=np.float64)
    tgt = np.asarray(ref_target, dtype=np.float64)
    itf = np.asarray(ref_interference, dtype=np.float64)
    n = len(est)
    if n < L:
        raise ShapeError(f"estimate length {n} shorter than filter length {L}")
    if not np.any(tgt) or not np.any(itf):
        raise DataError("references must not be identically zero")
    refs = np.zeros((2, n))
    refs[0, :min(n, len(tgt))] = tgt[:n]
    refs[1, :min(n, len(itf))] = itf[:n]

    s_target = _project(refs[:1], est, L)
    p_joint = _project(refs, est, L)
    e_interf = p_joint - s_target
    e_artif = -p_joint
    e_artif[:n] += est
    return BssDecomposition(s_target, e_interf, e_artif, L)


def _ratio_db(num_energy: float, den_energy: float) -> float:
    if num_energy <= 0.0:
        return -DB_CAP
    if den_energy <= 0.0:
        return DB_CAP
    return float(np.clip(10.0 * np.log10(num_energy / den_energy), -DB_CAP, DB_CAP))


def scores(decomp: BssDecomposition) -> SeparationScores:
    et = float(np.sum(decomp.s_target ** 2))
    ei = float(np.sum(decomp.e_interf ** 2))
    ea = float(np.sum(decomp.e_artif ** 2))
    # error energies at the level of the solver regularization count as zero
    tiny = 1e-18 * max(et, 1e-300)
    ei0 = 0.0 if ei < tiny else ei
    ea0 = 0.0 if ea < tiny else ea
    sir = _ratio_db(et, ei0)
    sdr = _ratio_db(et, float(np.sum((decomp.e_interf + decomp.e_artif) ** 2))
                    if ei0 or ea0 else 0.0)
    sar = _ratio_db(float(np.sum((decomp.s_target + decomp.e_interf) ** 2)), ea0)
    return SeparationScores(sir, sdr, sar)


def evaluate_separation(est_audio, ref_vocal, ref_backing, L: int = 512) -> SeparationScores:
    return scores(bss_decompose(est_audio, ref_vocal, ref_backing, L))
