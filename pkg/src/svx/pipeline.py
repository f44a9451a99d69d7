"""Training loop and end-to-end inference.

Training draws random aligned segments from the corpus; the per-iteration
data stream is seeded as (seed, iteration) so a resumed run reproduces the
exact same batches as an uninterrupted one.
"""
from __future__ import annotations

import os
import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import features, network
from .audio import AudioBuffer, StftConfig, stft
from .errors import DataError, NumericError
from .features import NormStats, WarpConfig
from .network import AdamState, ModelConfig, ModelParams
from .vocoder import SynthConfig, VocoderTrack, synthesize


@dataclass(frozen=True)
class TrainConfig:
    data_dir: str = "data"
    stats_in_path: str = "stats_in.ssns"
    stats_tgt_path: str = "stats_tgt.ssns"
    ckpt_path: str = "model.sscp"
    segment_len: int = 128
    batch_size: int = 30
    iterations: int = 50000
    checkpoint_every: int = 1000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 7
    channels: int = 128
    n_blocks: int = 5
    dtype: str = "float32"  # training precision; checkpoints store float32

    def model_config(self, in_dim: int, out_dim: int) -> ModelConfig:
        cfg = ModelConfig(in_dim, self.channels, self.n_blocks, out_dim)
        if self.segment_len < cfg.receptive_field:
            raise DataError(f"segment_len {self.segment_len} below the receptive "
                            f"field {cfg.receptive_field}")
        return cfg


@dataclass
class CorpusSong:
    name: str
    inputs: np.ndarray   # (n, in_dim) normalized
    targets: np.ndarray  # (n, out_dim) normalized


def load_corpus(data_dir, stats_in: NormStats, stats_tgt: NormStats,
                split: str = "train", dtype=np.float32):
    from .datagen import read_manifest
    songs = []
    for entry in read_manifest(data_dir):
        if entry.get("split", "train") != split:
            continue
        name = entry["song"]
        x, _, _ = features.read_features(os.path.join(data_dir, f"{name}_mix.ssvf"))
        y, _, _ = features.read_features(os.path.join(data_dir, f"{name}_target.ssvf"))
        songs.append(CorpusSong(name,
                                features.normalize(x, stats_in).astype(dtype),
                                features.normalize(y, stats_tgt).astype(dtype)))
    if not songs:
        raise DataError(f"no {split} songs found in {data_dir}")
    return songs


def compute_corpus_stats(data_dir, split: str = "train"):
    """Global min-max stats of the training inputs and targets."""
    from .datagen import read_manifest
    xs, ys = [], []
    for entry in read_manifest(data_dir):
        if entry.get("split", "train") != split:
            continue
        name = entry["song"]
        xs.append(features.read_features(os.path.join(data_dir, f"{name}_mix.ssvf"))[0])
        ys.append(features.read_features(os.path.join(data_dir, f"{name}_target.ssvf"))[0])
    return features.compute_norm_stats(xs), features.compute_norm_stats(ys)


def sample_batch(corpus, segment_len: int, batch_size: int, rng):
    """Aligned (inputs, targets) windows from uniformly chosen songs/offsets."""
    for song in corpus:
        if len(song.inputs) < segment_len:
            raise DataError(f"song {song.name} has {len(song.inputs)} frames, "
                            f"fewer than the segment length {segment_len}")
    xs = np.empty((batch_size, segment_len, corpus[0].inputs.shape[1]),
                  dtype=corpus[0].inputs.dtype)
    ys = np.empty((batch_size, segment_len, corpus[0].targets.shape[1]),
                  dtype=corpus[0].targets.dtype)
    for i in range(batch_size):
        song = corpus[int(rng.integers(len(corpus)))]
        start = int(rng.integers(len(song.inputs) - segment_len + 1))
        xs[i] = song.inputs[start:start + segment_len]
        ys[i] = song.targets[start:start + segment_len]
    return xs, ys


def train(cfg: TrainConfig, resume_from: str | None = None, log=print):
    """Run the training loop; returns (params, adam_state, loss_history)."""
    stats_in = features.read_norm_stats(cfg.stats_in_path)
    stats_tgt = features.read_norm_stats(cfg.stats_tgt_path)
    dtype = np.dtype(cfg.dtype).type
    corpus = load_corpus(cfg.data_dir, stats_in, stats_tgt, dtype=dtype)
    mcfg = cfg.model_config(corpus[0].inputs.shape[1], corpus[0].targets.shape[1])

    if resume_from is not None:
        params, adam = network.load_checkpoint(resume_from, dtype=dtype)
        if adam is None:
            adam = AdamState.for_params(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon)
        start_iter = adam.t
    else:
        params = network.init_params(mcfg, seed=cfg.seed, dtype=dtype)
        adam = AdamState.for_params(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon)
        start_iter = 0

    losses = []
    for it in range(start_iter + 1, cfg.iterations + 1):
        t0 = time.perf_counter()
        rng = np.random.default_rng((cfg.seed, it))
        xs, ys = sample_batch(corpus, cfg.segment_len, cfg.batch_size, rng)
        try:
            loss, grads = network.model_backward(xs, ys, params)
            network.adam_step(params, grads, adam)
        except NumericError as exc:
            raise NumericError(f"training diverged at iteration {it}: {exc}") from exc
        losses.append(loss)
        if log is not None:
            log(f"iter={it} loss={loss:.6f} ms={(time.perf_counter() - t0) * 1000.0:.1f}")
        if cfg.checkpoint_every > 0 and it % cfg.checkpoint_every == 0:
            network.save_checkpoint(cfg.ckpt_path, params, adam)
    network.save_checkpoint(cfg.ckpt_path, params, adam)
    return params, adam, losses


def _windowed_forward(x: np.ndarray, params: ModelParams) -> np.ndarray:
    """Full-track forward in overlapping windows, center-cropped and concatenated.

    With left-padded convolutions, output frame t depends only on inputs
    [t - rf + 1, t], so dropping the first `rf` frames of every window after
    the first reproduces the whole-track forward exactly.
    """
    n = x.shape[0]
    seg = max(128, params.config.receptive_field * 2)
    rf = params.config.receptive_field
    if n <= seg:
        return network.model_forward(x, params, clamp=True)
    out = np.empty((n, params.config.out_dim), dtype=x.dtype)
    start = 0
    while True:
        stop = min(start + seg, n)
        begin = start + rf if start > 0 else 0
        win = network.model_forward(x[stop - seg:stop], params, clamp=True)
        out[begin:stop] = win[begin - (stop - seg):]
        if stop == n:
            break
        start = stop - rf
    return out


def infer(mixture: AudioBuffer, params: ModelParams, stats_in: NormStats,
          stats_tgt: NormStats, stft_cfg: StftConfig = StftConfig(),
          warp_cfg: WarpConfig = WarpConfig(),
          synth_cfg: SynthConfig = SynthConfig()):
    """Mixture audio -> estimated VocoderTrack and synthesized vocal."""
    hop = stft_cfg.hop_samples(mixture.sample_rate)
    min_samples = 128 * hop
    samples = mixture.samples
    if len(samples) < min_samples:
        warnings.warn("mixture shorter than one training segment; padding with silence")
        samples = np.concatenate([samples, np.zeros(min_samples - len(samples))])
        mixture = AudioBuffer(samples, mixture.sample_rate)
    spec = stft(mixture, stft_cfg)
    x = features.normalize(features.log_compress(spec.frames), stats_in)
    x = x.astype(params.input1.weights.dtype)
    y = _windowed_forward(x, params)
    feats = features.denormalize(np.clip(y.astype(np.float64), 0.0, 1.0), stats_tgt)
    track = VocoderTrack.from_features(
        _decision_layer(feats), mixture.sample_rate, hop)
    vocal = synthesize(track, synth_cfg, warp_cfg)
    return track, vocal


def _decision_layer(feats: np.ndarray) -> np.ndarray:
    """Threshold voicing at 0.5 and zero out f0 for unvoiced frames."""
    out = feats.copy()
    voiced = out[:, features.DEFAULT_ORDER + features.N_AP_BANDS + 1] > 0.5
    out[:, features.DEFAULT_ORDER + features.N_AP_BANDS + 1] = voiced.astype(np.float64)
    out[~voiced, features.DEFAULT_ORDER + features.N_AP_BANDS] = 0.0
    out[:, features.DEFAULT_ORDER:features.DEFAULT_ORDER + features.N_AP_BANDS] = np.clip(
        out[:, features.DEFAULT_ORDER:features.DEFAULT_ORDER + features.N_AP_BANDS], 0.0, 1.0)
    return out
