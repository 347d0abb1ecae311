"""Feature extraction on a synthetic vowel-like tone: framing, log-mel, MFCC,
and SNR-controlled noise mixing.

Run: python3 demos/02_audio_features.py
"""

import numpy as np

from lipwave import dsp


def main():
    rng = np.random.default_rng(0)
    t = np.arange(16000) / 16000.0
    wave = 0.3 * np.sin(2 * np.pi * 440 * t) + 0.2 * np.sin(2 * np.pi * 1320 * t)
    wave = wave.astype(np.float32)

    # the 25-frame target rate used for reconstruction targets
    logmel = dsp.logmel_features(wave)
    mfcc = dsp.mfcc(logmel)
    print(f"target-rate log-mel {logmel.shape}, mfcc+deltas {mfcc.shape}")

    # the 101-frame baseline rate used for classifier features
    baseline = dsp.feature_matrix(wave, "mfcc39")
    print(f"baseline mfcc {baseline.shape}")
    norm = dsp.z_normalize(baseline)
    print(f"after cmvn: mean {norm.mean():.1e}, std {norm.std():.3f}")

    # exact-SNR babble mixing; the gain is solved in closed form
    noise = rng.uniform(-0.5, 0.5, 32000)
    for snr in (0, 10, 20):
        mix = dsp.snr_mix(wave, noise, snr, rng)
        seg = mix.wave.astype(np.float64) - wave
        achieved = 10 * np.log10(np.mean(wave.astype(np.float64) ** 2) / np.mean(seg ** 2))
        print(f"snr {snr:>3d} dB: gain {mix.gain:.4f} achieved {achieved:.6f} "
              f"clipped {mix.clip_fraction:.0%}")


if __name__ == "__main__":
    main()
