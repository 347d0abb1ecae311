"""Signal-path checks: FFT against a naive DFT, mel filterbank geometry,
cepstral features against direct-formula oracles, and exact-SNR mixing."""

import numpy as np
import pytest

from lipwave import dsp
from lipwave.errors import DataError, NumericError, ShapeError

from oracles import dct2_ortho_oracle, deltas_oracle, dft_power_oracle


def _tone(n, freqs, rng=None):
    t = np.arange(n) / dsp.SAMPLE_RATE
    wave = sum(np.sin(2 * np.pi * f * t) for f in freqs) / len(freqs)
    if rng is not None:
        wave = wave + 0.01 * rng.standard_normal(n)
    return wave.astype(np.float64)


def test_target_spec_yields_25_frames():
    assert dsp.target_frame_spec().frame_count(16000) == 25


def test_baseline_spec_yields_101_frames():
    assert dsp.baseline_frame_spec().frame_count(16000) == 101


def test_frame_count_rejects_too_short_input():
    with pytest.raises(ShapeError):
        dsp.FrameSpec(512, 256, 0, 0).frame_count(100)


def test_hann_window_is_periodic_form():
    w = dsp._window(dsp.FrameSpec(8, 4, 0, 0))
    assert w[0] == 0.0
    assert len(w) == 8
    # periodic Hann of length 8 peaks at index 4 with value 1
    assert w[4] == pytest.approx(1.0)


def test_stft_power_matches_naive_dft(rng):
    spec = dsp.FrameSpec(128, 64, 32, 32)
    wave = _tone(512, [500.0, 1900.0], rng)
    got = dsp.stft_power(wave, spec, 128)
    frames = dsp._frames(wave, spec) * dsp._window(spec)
    want = dft_power_oracle(frames, 128)
    denom = np.maximum(np.abs(want), 1e-8)
    assert np.max(np.abs(got - want) / denom) < 1e-5


def test_stft_power_rejects_bad_nfft():
    spec = dsp.FrameSpec(128, 64, 0, 0)
    with pytest.raises(ShapeError):
        dsp.stft_power(np.zeros(512), spec, 64)   # smaller than window
    with pytest.raises(ShapeError):
        dsp.stft_power(np.zeros(512), spec, 200)  # not a power of two


def test_mel_scale_round_trip_and_known_point():
    assert dsp.hz_to_mel(0.0) == 0.0
    assert dsp.hz_to_mel(700.0) == pytest.approx(2595.0 * np.log10(2.0))
    freqs = np.array([100.0, 1000.0, 7999.0])
    assert np.allclose(dsp.mel_to_hz(dsp.hz_to_mel(freqs)), freqs, rtol=1e-12)


def test_filterbank_matches_triangle_formula_and_covers_band():
    fb = dsp.mel_filterbank(1024)
    assert fb.weights.shape == (80, 513)
    # direct recomputation: unit-peak triangles linear in mel
    bin_mel = 2595.0 * np.log10(1.0 + (np.arange(513) * (16000.0 / 1024)) / 700.0)
    top_mel = 2595.0 * np.log10(1.0 + 8000.0 / 700.0)
    pts = np.linspace(0.0, top_mel, 82)
    half = pts[1] - pts[0]
    want = np.maximum(0.0, 1.0 - np.abs(bin_mel[None, :] - pts[1:-1, None]) / half)
    assert np.allclose(fb.weights, want, atol=1e-12)
    assert np.all((fb.weights >= 0.0) & (fb.weights <= 1.0))
    assert np.all(fb.weights.sum(axis=1) > 0.0)  # no dead filter
    # interior bins of the band are covered by at least one filter
    bin_hz = np.arange(513) * (dsp.SAMPLE_RATE / 1024)
    edge0 = dsp.mel_to_hz(pts[1])
    interior = (bin_hz > edge0) & (bin_hz < 8000.0)
    assert np.all(fb.weights[:, interior].sum(axis=0) > 0.0)


def test_filterbank_centers_evenly_spaced_in_mel():
    fb = dsp.mel_filterbank(1024, n_filters=10, f_min=0.0, f_max=8000.0)
    bin_mels = dsp.hz_to_mel(np.arange(513) * (dsp.SAMPLE_RATE / 1024))
    centers = bin_mels[np.argmax(fb.weights, axis=1)]
    want = np.linspace(0.0, dsp.hz_to_mel(8000.0), 12)[1:-1]
    # centers land on the nearest FFT bin to the ideal mel positions
    spacing = want[1] - want[0]
    assert np.all(np.abs(centers - want) < 0.25 * spacing)


def test_log_mel_applies_natural_log_with_floor():
    fb = dsp.mel_filterbank(1024, n_filters=4)
    power = np.zeros((2, 513))
    out = dsp.log_mel(power, fb)
    assert np.allclose(out, np.log(1e-10))


def test_log_mel_rejects_wrong_bin_count():
    fb = dsp.mel_filterbank(1024, n_filters=4)
    with pytest.raises(ShapeError):
        dsp.log_mel(np.zeros((2, 100)), fb)


def test_deltas_match_index_by_index_oracle(rng):
    feats = rng.standard_normal((9, 5))
    assert np.allclose(dsp.deltas(feats), deltas_oracle(feats), atol=1e-12)


def test_deltas_are_zero_for_constant_sequence():
    assert np.allclose(dsp.deltas(np.ones((6, 3))), 0.0)


def test_mfcc_cepstra_match_direct_dct_oracle(rng):
    logmel = rng.standard_normal((7, 80))
    feats = dsp.mfcc(logmel)
    assert feats.shape == (7, 39)
    want = dct2_ortho_oracle(logmel, 13)
    assert np.allclose(feats[:, :13], want, atol=1e-10)
    assert np.allclose(feats[:, 13:26], deltas_oracle(want), atol=1e-10)


def test_feature_matrix_shapes_for_all_kinds(rng):
    wave = _tone(16000, [440.0], rng)
    assert dsp.feature_matrix(wave, "mfcc39").shape == (101, 39)
    assert dsp.feature_matrix(wave, "logmel80").shape == (101, 80)
    assert dsp.feature_matrix(wave, "mfcc_target").shape == (25, 39)
    assert dsp.feature_matrix(wave, "logmel_target").shape == (25, 80)
    with pytest.raises(DataError):
        dsp.feature_matrix(wave, "plp")


def test_z_normalize_zero_mean_unit_std(rng):
    mat = rng.standard_normal((10, 4)) * 3.0 + 7.0
    out = dsp.z_normalize(mat)
    assert abs(out.mean()) < 1e-12
    assert out.std() == pytest.approx(1.0, rel=1e-9)
    # constant input maps to zeros instead of dividing by zero
    assert np.allclose(dsp.z_normalize(np.full((3, 3), 5.0)) * 0.0, 0.0)


def test_waveform_target_is_identity_on_one_second():
    wave = np.linspace(-1, 1, 16000)
    assert np.array_equal(dsp.waveform_target(wave), wave)
    with pytest.raises(ShapeError):
        dsp.waveform_target(np.zeros(8000))


@pytest.mark.parametrize("snr_db", [-5, 0, 5, 10, 15, 20])
def test_snr_mix_hits_requested_snr_within_tolerance(rng, snr_db):
    sig = _tone(16000, [700.0])
    noise = rng.standard_normal(32000) * 0.1
    res = dsp.snr_mix(sig, noise, snr_db, rng)
    crop = noise[res.offset:res.offset + 16000]
    p_sig = np.mean(sig ** 2)
    p_noise = np.mean((res.gain * crop) ** 2)
    achieved = 10.0 * np.log10(p_sig / p_noise)
    assert abs(achieved - snr_db) < 1e-6
    assert res.wave.shape == sig.shape
    assert np.max(np.abs(res.wave)) <= 1.0


def test_snr_mix_clip_fraction_reports_saturation(rng):
    sig = _tone(16000, [300.0]) * 0.99
    noise = rng.standard_normal(16000)
    res = dsp.snr_mix(sig, noise, -10.0, rng)
    assert res.clip_fraction > 0.0
    clipped = np.mean(np.abs(sig + res.gain * noise) > 1.0)
    assert res.clip_fraction == pytest.approx(clipped, abs=1e-6)


def test_snr_mix_errors(rng):
    with pytest.raises(ShapeError):
        dsp.snr_mix(np.ones(100), np.ones(50), 0.0, rng)
    with pytest.raises(NumericError):
        dsp.snr_mix(np.zeros(100), np.ones(200), 0.0, rng)
    with pytest.raises(NumericError):
        dsp.snr_mix(np.ones(100), np.zeros(200), 0.0, rng)
