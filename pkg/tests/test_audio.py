import numpy as np
import pytest

from svx.audio import (AudioBuffer, hann_window,
                       n_frames_for, overlap_add_synth, read_wav, stft, write_wav)
from svx.errors import ConfigError, EmptyInputError, FormatError, ShapeError, UnsupportedCodecError


def test_wav_roundtrip_zero(tmp_path):
    path = tmp_path / "z.wav"
    write_wav(AudioBuffer(np.zeros(44100)), path)
    back = read_wav(path)
    assert back.sample_rate == 44100
    assert len(back) == 44100
    assert np.all(back.samples == 0.0)


def test_pcm16_scaling(tmp_path):
    # sample value 16384 decodes to 0.5 within one quantization step
    import struct
    payload = struct.pack("<h", 16384)
    header = (b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
              + b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, 44100, 88200, 2, 16)
              + b"data" + struct.pack("<I", len(payload)) + payload)
    path = tmp_path / "s.wav"
    path.write_bytes(header)
    audio = read_wav(path)
    assert abs(audio.samples[0] - 0.5) <= 1.0 / 32768


def test_stereo_downmix(tmp_path):
    import struct
    l, r = int(0.2 * 32768), int(0.6 * 32768)
    payload = struct.pack("<4h", l, r, l, r)
    header = (b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
              + b"fmt " + struct.pack("<IHHIIHH", 16, 1, 2, 44100, 176400, 4, 16)
              + b"data" + struct.pack("<I", len(payload)) + payload)
    path = tmp_path / "st.wav"
    path.write_bytes(header)
    audio = read_wav(path)
    assert len(audio) == 2
    assert np.allclose(audio.samples, 0.4, atol=1.0 / 32768)


def test_wav_roundtrip_random(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.uniform(-0.9, 0.9, 4410)
    path = tmp_path / "r.wav"
    write_wav(AudioBuffer(x), path)
    back = read_wav(path)
    # encode rounds x*32767, decode divides by 32768: up to 1.5 LSB apart
    assert np.max(np.abs(back.samples - x)) <= 1.5 / 32768


def test_wav_write_clips(tmp_path):
    path = tmp_path / "c.wav"
    write_wav(AudioBuffer(np.array([1.7, -2.0, 0.0])), path)
    back = read_wav(path)
    assert back.samples[0] == pytest.approx(1.0, abs=1.0 / 32768)
    assert back.samples[1] == pytest.approx(-1.0, abs=2.0 / 32768)


def test_read_wav_malformed(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"not a wav file at all")
    with pytest.raises(FormatError):
        read_wav(path)


def test_read_wav_unsupported_codec(tmp_path):
    import struct
    header = (b"RIFF" + struct.pack("<I", 36) + b"WAVE"
              + b"fmt " + struct.pack("<IHHIIHH", 16, 6, 1, 8000, 8000, 1, 8)  # A-law
              + b"data" + struct.pack("<I", 0))
    path = tmp_path / "alaw.wav"
    path.write_bytes(header)
    with pytest.raises(UnsupportedCodecError):
        read_wav(path)


def test_audio_buffer_invariants():
    with pytest.raises(ValueError):
        AudioBuffer(np.array([0.0, np.nan]))
    with pytest.raises(ValueError):
        AudioBuffer(np.zeros(4), sample_rate=0)


# ---------------------------------------------------------------------------
# STFT

def test_stft_zero_signal():
    audio = AudioBuffer(np.zeros(44100))
    spec = stft(audio)
    assert spec.n_frames == 44100 // 220 + 1 == 201
    assert spec.n_bins == 513
    assert np.all(spec.frames == 0.0)


def test_stft_frame_count_formula():
    assert n_frames_for(44100, 220) == 201
    audio = AudioBuffer(np.zeros(1000))
    assert stft(audio).n_frames == n_frames_for(1000, 220)


def test_stft_empty_audio():
    with pytest.raises(EmptyInputError):
        stft(AudioBuffer(np.zeros(0)))


def test_stft_cosine_at_bin_center():
    fs = 44100
    f = 64 * fs / 1024.0
    n = np.arange(fs)
    audio = AudioBuffer(np.cos(2.0 * np.pi * f * n / fs))
    spec = stft(audio)
    wsum = hann_window(1024).sum()
    frame = spec.frames[100]  # interior frame
    assert frame[64] == pytest.approx(wsum / 2.0, rel=1e-6)
    # away from the main lobe (periodic Hann spans bins 63..65) >= 40 dB down
    for k in list(range(60, 62)) + list(range(67, 70)):
        assert frame[k] < frame[64] * 10 ** (-40 / 20)


def test_stft_energy_sanity():
    rng = np.random.default_rng(1)
    audio = AudioBuffer(rng.uniform(-1, 1, 10000))
    spec = stft(audio)
    assert np.max(spec.frames) <= 1024 * np.max(np.abs(audio.samples))


def test_stft_deterministic():
    rng = np.random.default_rng(2)
    x = rng.uniform(-1, 1, 5000)
    a = stft(AudioBuffer(x)).frames
    b = stft(AudioBuffer(x)).frames
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# Overlap-add

def test_ola_zero_frames():
    out = overlap_add_synth(np.zeros((10, 1024)), 220)
    assert len(out) == 10 * 220
    assert np.all(out.samples == 0.0)


def test_ola_constant_frames():
    out = overlap_add_synth(np.ones((40, 1024)), 220)
    interior = out.samples[1024:-1024]
    assert np.max(np.abs(interior - 1.0)) < 1e-6


def test_ola_single_frame_support():
    frames = np.zeros((10, 1024))
    frames[4] = 1.0
    out = overlap_add_synth(frames, 220)
    # frame 4 is centered at sample 880; support limited to +-512 around it
    assert np.all(out.samples[:880 - 512] == 0.0)
    assert np.all(out.samples[880 + 512:] == 0.0)


def test_ola_hop_too_large():
    with pytest.raises(ConfigError):
        overlap_add_synth(np.zeros((4, 64)), 64)


def test_ola_bad_shape():
    with pytest.raises(ShapeError):
        overlap_add_synth(np.zeros(64), 16)
