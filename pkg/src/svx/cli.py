"""Command-line entry point for the whole pipeline.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import datagen, features, metrics, network, pipeline, report
from .audio import read_wav, write_wav
from .errors import FormatError, DataError, DomainError, NumericError, ShapeError, SvxError
from .vocoder import SynthConfig, VocoderTrack, synthesize

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="svx", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-data", help="generate the synthetic corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--n-train", type=int, default=10)
    g.add_argument("--n-test", type=int, default=4)
    g.add_argument("--dur", type=float, default=3.0)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--mix-db", type=float, default=0.0)

    s = sub.add_parser("stats", help="compute global min-max normalization stats")
    s.add_argument("--data", required=True)
    s.add_argument("--out-in", default="stats_in.ssns")
    s.add_argument("--out-tgt", default="stats_tgt.ssns")

    t = sub.add_parser("train", help="train the estimator")
    t.add_argument("--data", required=True)
    t.add_argument("--stats-in", default="stats_in.ssns")
    t.add_argument("--stats-tgt", default="stats_tgt.ssns")
    t.add_argument("--iters", type=int, default=50000)
    t.add_argument("--batch", type=int, default=30)
    t.add_argument("--seg", type=int, default=128)
    t.add_argument("--width", type=int, default=128)
    t.add_argument("--blocks", type=int, default=5)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--seed", type=int, default=7)
    t.add_argument("--ckpt", default="model.sscp")
    t.add_argument("--ckpt-every", type=int, default=1000)
    t.add_argument("--resume", default=None)
    t.add_argument("--loss-fig", default=None, help="write a loss-curve figure here")
    t.add_argument("--quiet", action="store_true")

    i = sub.add_parser("infer", help="extract the vocal from a mixture WAV")
    i.add_argument("--model", required=True)
    i.add_argument("--mix", required=True)
    i.add_argument("--stats-in", default="stats_in.ssns")
    i.add_argument("--stats-tgt", default="stats_tgt.ssns")
    i.add_argument("--out-wav", required=True)
    i.add_argument("--out-features", default=None)
    i.add_argument("--noise-seed", type=int, default=0)
    i.add_argument("--fig", default=None, help="write a spectrogram comparison figure here")

    y = sub.add_parser("synth", help="synthesize audio from a feature file")
    y.add_argument("--features", required=True)
    y.add_argument("--out", required=True)
    y.add_argument("--noise-seed", type=int, default=1)

    e = sub.add_parser("eval", help="BSS-Eval scores of an estimate against stems")
    e.add_argument("--est", required=True, action="append",
                   help="estimate WAV (repeat with matching --ref-* for multiple songs)")
    e.add_argument("--ref-vocal", required=True, action="append")
    e.add_argument("--ref-backing", required=True, action="append")
    e.add_argument("--taps", type=int, default=512)
    e.add_argument("--fig", default=None, help="write a score bar figure here")

    m = sub.add_parser("eval-mcd", help="mel cepstral distortion between feature files")
    m.add_argument("--est", required=True)
    m.add_argument("--ref", required=True)
    m.add_argument("--include-c0", action="store_true")
    return p


def _cmd_gen_data(args):
    datagen.generate_corpus(args.out, args.n_train, args.n_test, args.dur,
                            args.seed, args.mix_db)
    print(f"wrote corpus to {args.out}")
    return 0


def _cmd_stats(args):
    stats_in, stats_tgt = pipeline.compute_corpus_stats(args.data)
    features.write_norm_stats(args.out_in, stats_in)
    features.write_norm_stats(args.out_tgt, stats_tgt)
    print(f"wrote {args.out_in} ({stats_in.dim} dims) and {args.out_tgt} ({stats_tgt.dim} dims)")
    return 0


def _cmd_train(args):
    cfg = pipeline.TrainConfig(
        data_dir=args.data, stats_in_path=args.stats_in, stats_tgt_path=args.stats_tgt,
        ckpt_path=args.ckpt, segment_len=args.seg, batch_size=args.batch,
        iterations=args.iters, checkpoint_every=args.ckpt_every, lr=args.lr,
        seed=args.seed, channels=args.width, n_blocks=args.blocks)
    log = (lambda _msg: None) if args.quiet else print
    _, _, losses = pipeline.train(cfg, resume_from=args.resume, log=log)
    if args.loss_fig and losses:
        report.save_loss_curve(losses, args.loss_fig)
    print(f"final checkpoint: {args.ckpt}")
    return 0


def _cmd_infer(args):
    params, _ = network.load_checkpoint(args.model, dtype=np.float32)
    stats_in = features.read_norm_stats(args.stats_in)
    stats_tgt = features.read_norm_stats(args.stats_tgt)
    mixture = read_wav(args.mix)
    track, vocal = pipeline.infer(mixture, params, stats_in, stats_tgt,
                                  synth_cfg=SynthConfig(noise_seed=args.noise_seed))
    write_wav(vocal, args.out_wav)
    if args.out_features:
        features.write_features(args.out_features, track.to_features(),
                                track.sample_rate, track.hop_samples)
    if args.fig:
        from .audio import stft
        mix_db = features.log_compress(stft(mixture).frames)
        voc_db = features.log_compress(stft(vocal).frames)
        report.save_spectrogram_figure(mix_db, voc_db, args.fig)
    print(f"wrote {args.out_wav} ({len(vocal)} samples)")
    return 0


def _cmd_synth(args):
    frames, sr, hop = features.read_features(args.features)
    track = VocoderTrack.from_features(frames, sr, hop)
    audio = synthesize(track, SynthConfig(noise_seed=args.noise_seed))
    write_wav(audio, args.out)
    print(f"wrote {args.out} ({len(audio)} samples)")
    return 0


def _cmd_eval(args):
    if not (len(args.est) == len(args.ref_vocal) == len(args.ref_backing)):
        raise DataError("--est, --ref-vocal and --ref-backing must be given equally often")
    rows = []
    for est_path, v_path, b_path in zip(args.est, args.ref_vocal, args.ref_backing):
        est = read_wav(est_path).samples
        ref_v = read_wav(v_path).samples
        ref_b = read_wav(b_path).samples
        n = min(len(est), len(ref_v), len(ref_b))
        sc = metrics.evaluate_separation(est[:n], ref_v[:n], ref_b[:n], args.taps)
        rows.append({"song": est_path, "SIR": sc.sir_db, "SDR": sc.sdr_db, "SAR": sc.sar_db})
        print(f"song={est_path} SIR={sc.sir_db:.3f} SDR={sc.sdr_db:.3f} SAR={sc.sar_db:.3f}")
    print(f"song=mean SIR={np.mean([r['SIR'] for r in rows]):.3f} "
          f"SDR={np.mean([r['SDR'] for r in rows]):.3f} "
          f"SAR={np.mean([r['SAR'] for r in rows]):.3f}")
    if args.fig:
        report.save_score_figure(rows, args.fig)
    return 0


def _cmd_eval_mcd(args):
    est, _, _ = features.read_features(args.est)
    ref, _, _ = features.read_features(args.ref)
    n = min(len(est), len(ref))
    order = features.DEFAULT_ORDER
    value = metrics.mcd(ref[:n, :order], est[:n, :order],
                        exclude_c0=not args.include_c0)
    print(f"MCD={value:.4f}")
    return 0


_HANDLERS = {
    "gen-data": _cmd_gen_data,
    "stats": _cmd_stats,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "synth": _cmd_synth,
    "eval": _cmd_eval,
    "eval-mcd": _cmd_eval_mcd,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.cmd](args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, DataError, DomainError, ShapeError, SvxError,
            FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
