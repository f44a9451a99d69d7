import re

import pytest

from svx import cli, features
from svx.audio import read_wav


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """gen-data -> stats -> tiny train, shared by the command tests."""
    ws = tmp_path_factory.mktemp("cli")
    data = ws / "data"
    assert cli.run(["gen-data", "--out", str(data), "--n-train", "2",
                    "--n-test", "1", "--dur", "1.0", "--seed", "41"]) == 0
    assert cli.run(["stats", "--data", str(data),
                    "--out-in", str(ws / "in.ssns"),
                    "--out-tgt", str(ws / "tgt.ssns")]) == 0
    assert cli.run(["train", "--data", str(data),
                    "--stats-in", str(ws / "in.ssns"),
                    "--stats-tgt", str(ws / "tgt.ssns"),
                    "--iters", "2", "--batch", "4", "--width", "6", "--blocks", "3",
                    "--ckpt", str(ws / "model.sscp"), "--ckpt-every", "0",
                    "--loss-fig", str(ws / "loss.png"), "--quiet"]) == 0
    return ws


def test_pipeline_artifacts(workspace):
    assert (workspace / "data" / "manifest.txt").exists()
    assert (workspace / "in.ssns").exists()
    assert (workspace / "model.sscp").exists()
    assert (workspace / "loss.png").stat().st_size > 0


def test_infer_command(workspace, capsys):
    out_wav = workspace / "est.wav"
    out_feat = workspace / "est.ssvf"
    fig = workspace / "spec.png"
    code = cli.run(["infer", "--model", str(workspace / "model.sscp"),
                    "--mix", str(workspace / "data" / "song002_mix.wav"),
                    "--stats-in", str(workspace / "in.ssns"),
                    "--stats-tgt", str(workspace / "tgt.ssns"),
                    "--out-wav", str(out_wav), "--out-features", str(out_feat),
                    "--fig", str(fig)])
    assert code == 0
    mix = read_wav(workspace / "data" / "song002_mix.wav")
    est = read_wav(out_wav)
    assert len(est) == (len(mix) // 220 + 1) * 220
    frames, sr, hop = features.read_features(out_feat)
    assert (sr, hop) == (44100, 220)
    assert frames.shape[1] == features.FEATURE_DIM
    assert fig.stat().st_size > 0
    assert "wrote" in capsys.readouterr().out


def test_synth_command(workspace, capsys):
    out = workspace / "resynth.wav"
    code = cli.run(["synth", "--features",
                    str(workspace / "data" / "song000_target.ssvf"),
                    "--out", str(out)])
    assert code == 0
    assert len(read_wav(out)) > 0


def test_eval_command_perfect_estimate(workspace, capsys):
    data = workspace / "data"
    fig = workspace / "scores.png"
    code = cli.run(["eval",
                    "--est", str(data / "song000_vocal.wav"),
                    "--ref-vocal", str(data / "song000_vocal.wav"),
                    "--ref-backing", str(data / "song000_backing.wav"),
                    "--taps", "64", "--fig", str(fig)])
    assert code == 0
    out = capsys.readouterr().out
    lines = [l for l in out.splitlines() if l.startswith("song=")]
    assert len(lines) == 2  # one song + the mean line
    m = re.search(r"SIR=([-\d.]+) SDR=([-\d.]+) SAR=([-\d.]+)", lines[0])
    assert m and float(m.group(1)) >= 200.0
    assert lines[1].startswith("song=mean ")
    assert fig.stat().st_size > 0


def test_eval_mcd_command(workspace, capsys):
    tgt = str(workspace / "data" / "song000_target.ssvf")
    assert cli.run(["eval-mcd", "--est", tgt, "--ref", tgt]) == 0
    out = capsys.readouterr().out
    assert re.fullmatch(r"MCD=0\.0000", out.strip())


def test_eval_mismatched_lists(workspace, capsys):
    data = workspace / "data"
    code = cli.run(["eval", "--est", str(data / "song000_vocal.wav"),
                    "--est", str(data / "song001_vocal.wav"),
                    "--ref-vocal", str(data / "song000_vocal.wav"),
                    "--ref-backing", str(data / "song000_backing.wav")])
    assert code == 2


def test_unknown_flag_exits_one():
    with pytest.raises(SystemExit) as exc:
        cli.build_parser().parse_args(["gen-data", "--bogus"])
    assert exc.value.code == 1


def test_missing_subcommand_exits_one():
    with pytest.raises(SystemExit) as exc:
        cli.build_parser().parse_args([])
    assert exc.value.code == 1


def test_missing_input_file_exit_code(workspace):
    code = cli.run(["infer", "--model", str(workspace / "nope.sscp"),
                    "--mix", str(workspace / "data" / "song000_mix.wav"),
                    "--stats-in", str(workspace / "in.ssns"),
                    "--stats-tgt", str(workspace / "tgt.ssns"),
                    "--out-wav", str(workspace / "x.wav")])
    assert code == 2


def test_corrupt_checkpoint_exit_code(workspace, tmp_path):
    bad = tmp_path / "bad.sscp"
    bad.write_bytes(b"garbage content")
    code = cli.run(["infer", "--model", str(bad),
                    "--mix", str(workspace / "data" / "song000_mix.wav"),
                    "--stats-in", str(workspace / "in.ssns"),
                    "--stats-tgt", str(workspace / "tgt.ssns"),
                    "--out-wav", str(workspace / "x.wav")])
    assert code == 2


def test_gen_data_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.run(["gen-data", "--out", str(out), "--n-train", "1",
                        "--n-test", "0", "--dur", "0.7", "--seed", "9"]) == 0
    assert (a / "song000_mix.wav").read_bytes() == (b / "song000_mix.wav").read_bytes()
    assert (a / "manifest.txt").read_bytes() == (b / "manifest.txt").read_bytes()
