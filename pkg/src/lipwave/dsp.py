"""Signal-processing frontend: framing, STFT power, log-mel, MFCC, and
SNR-controlled noise mixing.

Two frame lineups exist on purpose. The target spec (window 1024, hop 640)
produces exactly 25 frames per second so each encoder timestep has one
reconstruction target; the baseline spec (window 400, hop 160, reflect
padding) reproduces the conventional 101-frame MFCC layout. Mel filters are
HTK-style (2595*log10(1+f/700)) triangles with unit peaks over 0..8000 Hz,
compressed with a natural log floored at 1e-10.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import DataError, NumericError, ShapeError

SAMPLE_RATE = 16000
LOG_FLOOR = 1e-10
N_MELS = 80
N_CEPS = 13


@dataclass(frozen=True)
class FrameSpec:
    window_length: int
    hop: int
    pad_left: int
    pad_right: int
    window_fn: str = "hann"
    pad_mode: str = "zero"

    def frame_count(self, n_samples):
        padded = n_samples + self.pad_left + self.pad_right
        if padded < self.window_length:
            raise ShapeError(f"padded length {padded} shorter than window {self.window_length}")
        return (padded - self.window_length) // self.hop + 1


def target_frame_spec():
    """25 frames per 16000 samples: one target vector per encoder timestep."""
    return FrameSpec(window_length=1024, hop=640, pad_left=192, pad_right=192)


def baseline_frame_spec():
    """101 frames per 16000 samples, centered reflect padding."""
    return FrameSpec(window_length=400, hop=160, pad_left=200, pad_right=200, pad_mode="reflect")


def _window(spec):
    n = spec.window_length
    if spec.window_fn == "hann":
        # periodic form, the usual choice for analysis frames
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    if spec.window_fn == "rectangular":
        return np.ones(n)
    raise DataError(f"unknown window function {spec.window_fn!r}")


def _frames(wave, spec):
    wave = np.asarray(wave, dtype=np.float64)
    if wave.ndim != 1:
        raise ShapeError(f"waveform must be 1-D, got shape {wave.shape}")
    mode = {"zero": "constant", "reflect": "reflect"}.get(spec.pad_mode)
    if mode is None:
        raise DataError(f"unknown pad mode {spec.pad_mode!r}")
    padded = np.pad(wave, (spec.pad_left, spec.pad_right), mode=mode)
    t = spec.frame_count(wave.shape[0])
    idx = np.arange(spec.window_length) + spec.hop * np.arange(t)[:, None]
    return padded[idx]


def stft_power(wave, spec, n_fft):
    """Per-frame windowed power spectrum, shape (T, n_fft//2 + 1)."""
    if n_fft < spec.window_length:
        raise ShapeError(f"n_fft {n_fft} smaller than window {spec.window_length}")
    if n_fft & (n_fft - 1):
        raise ShapeError(f"n_fft must be a power of two, got {n_fft}")
    frames = _frames(wave, spec) * _window(spec)
    spec_c = np.fft.rfft(frames, n=n_fft, axis=1)
    return (spec_c.real ** 2 + spec_c.imag ** 2)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelFilterbank:
    n_filters: int
    n_fft_bins: int
    f_min: float
    f_max: float
    weights: np.ndarray  # (n_filters, n_fft_bins)


def mel_filterbank(n_fft, n_filters=N_MELS, f_min=0.0, f_max=8000.0, sample_rate=SAMPLE_RATE):
    """Unit-peak triangles, linear in mel, centers evenly spaced in mel."""
    n_bins = n_fft // 2 + 1
    mel_pts = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_filters + 2)
    half_width = mel_pts[1] - mel_pts[0]
    bin_mels = hz_to_mel(np.arange(n_bins) * (sample_rate / n_fft))
    dist = np.abs(bin_mels - mel_pts[1:-1, None])
    weights = np.maximum(0.0, 1.0 - dist / half_width)
    return MelFilterbank(n_filters, n_bins, float(f_min), float(f_max), weights)


def log_mel(power, fb):
    """Natural-log mel energies with a 1e-10 floor; (T, bins) -> (T, n_filters)."""
    power = np.asarray(power)
    if power.ndim != 2 or power.shape[1] != fb.n_fft_bins:
        raise ShapeError(f"power matrix {power.shape} does not match filterbank bins {fb.n_fft_bins}")
    return np.log(np.maximum(power @ fb.weights.T, LOG_FLOOR))


def deltas(feats):
    """Regression deltas, window 2, edge replication: sum_n n*(x[t+n]-x[t-n]) / 10."""
    feats = np.asarray(feats)
    t = feats.shape[0]
    idx = np.arange(t)
    out = np.zeros_like(feats)
    for n in (1, 2):
        fwd = feats[np.minimum(idx + n, t - 1)]
        back = feats[np.maximum(idx - n, 0)]
        out += n * (fwd - back)
    return out / 10.0


def mfcc(logmel_mat, n_coeffs=N_CEPS):
    """Orthonormal DCT-II over the mel axis, first ``n_coeffs`` kept, plus
    deltas and delta-deltas: (T, 80) -> (T, 3*n_coeffs)."""
    logmel_mat = np.asarray(logmel_mat)
    if logmel_mat.ndim != 2 or n_coeffs > logmel_mat.shape[1]:
        raise ShapeError(f"mfcc: bad input {logmel_mat.shape} for {n_coeffs} coefficients")
    ceps = scipy.fft.dct(logmel_mat, type=2, norm="ortho", axis=1)[:, :n_coeffs]
    d = deltas(ceps)
    return np.concatenate([ceps, d, deltas(d)], axis=1)


# -- full feature lineups ------------------------------------------------------


def logmel_features(wave, spec=None, n_fft=None):
    spec = spec or target_frame_spec()
    n_fft = n_fft or _default_nfft(spec)
    fb = mel_filterbank(n_fft)
    return log_mel(stft_power(wave, spec, n_fft), fb)


def mfcc_features(wave, spec=None, n_fft=None):
    return mfcc(logmel_features(wave, spec, n_fft))


def _default_nfft(spec):
    n = 1
    while n < spec.window_length:
        n <<= 1
    return n


FEATURE_KINDS = ("mfcc39", "logmel80", "mfcc_target", "logmel_target")


def feature_matrix(wave, kind):
    """Named feature lineups: baseline 101-frame mfcc39/logmel80 and the
    25-frame reconstruction targets."""
    if kind == "mfcc39":
        return mfcc_features(wave, baseline_frame_spec())
    if kind == "logmel80":
        return logmel_features(wave, baseline_frame_spec())
    if kind == "mfcc_target":
        return mfcc_features(wave, target_frame_spec())
    if kind == "logmel_target":
        return logmel_features(wave, target_frame_spec())
    raise DataError(f"unknown feature kind {kind!r}; expected one of {FEATURE_KINDS}")


def z_normalize(mat):
    """Per-utterance standardization over the whole matrix."""
    mat = np.asarray(mat)
    mu = mat.mean()
    sd = mat.std()
    return (mat - mu) / max(sd, 1e-8)


def waveform_target(wave):
    """The waveform reconstruction target is the input itself (1 s only)."""
    wave = np.asarray(wave)
    if wave.shape != (SAMPLE_RATE,):
        raise ShapeError(f"waveform target expects {SAMPLE_RATE} samples, got {wave.shape}")
    return wave


# -- noise mixing ------------------------------------------------------------------


@dataclass(frozen=True)
class MixResult:
    wave: np.ndarray      # clipped mixture
    gain: float           # applied to the noise crop
    offset: int           # noise crop start
    clip_fraction: float  # fraction of samples clipped


def snr_mix(signal, noise, snr_db, rng):
    """Add noise at an exact component SNR.

    The gain solves 10*log10(P_signal / P_scaled_noise) == snr_db with P the
    mean square, so the pre-clipping SNR is exact by construction. The crop
    offset into the noise is drawn from ``rng``.
    """
    signal = np.asarray(signal, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape[0] < signal.shape[0]:
        raise ShapeError(f"noise length {noise.shape[0]} shorter than signal {signal.shape[0]}")
    p_sig = float(np.mean(signal ** 2))
    if p_sig == 0.0:
        raise NumericError("snr_mix: silent signal")
    offset = int(rng.integers(0, noise.shape[0] - signal.shape[0] + 1))
    crop = noise[offset:offset + signal.shape[0]]
    p_noise = float(np.mean(crop ** 2))
    if p_noise == 0.0:
        raise NumericError("snr_mix: silent noise crop")
    gain = float(np.sqrt(p_sig / (p_noise * 10.0 ** (snr_db / 10.0))))
    mixed = signal + gain * crop
    clipped = np.clip(mixed, -1.0, 1.0)
    clip_fraction = float(np.mean(mixed != clipped))
    return MixResult(wave=clipped, gain=gain, offset=offset, clip_fraction=clip_fraction)
