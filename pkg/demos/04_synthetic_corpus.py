"""The audiovisual word corpus: paired waveforms and mouth-aperture videos
whose lip opening tracks the audio envelope.

Run: python3 demos/04_synthetic_corpus.py
"""

import tempfile

import numpy as np

from lipwave.data import SampleLoader, synth_corpus


def main():
    out = tempfile.mkdtemp(prefix="lipwave_demo_corpus_")
    manifest = synth_corpus(out, n_words=3, n_identities=2,
                            n_train=6, n_val=3, n_test=3, seed=0)
    loader = SampleLoader(manifest)
    print(f"manifest {manifest}")
    print(f"records {len(loader.records)}, labels {loader.labels}")

    r = loader.split("train")[0]
    wave = loader.wave(r)
    frames = loader.frames(r)
    print(f"{r.id}: label {r.label}, wave {wave.shape} in "
          f"[{wave.min():.2f}, {wave.max():.2f}], frames {frames.shape}")

    # the lip aperture follows the acoustic energy; the mouth interior is
    # darker than the face, so openness is inverted mean brightness
    rms = np.sqrt(np.mean(wave.reshape(25, 640) ** 2, axis=1))
    openness = -frames[:, 0].reshape(25, -1).mean(axis=1)
    r_corr = np.corrcoef(rms, openness)[0, 1]
    print(f"audio RMS vs mouth openness correlation: {r_corr:.3f}")


if __name__ == "__main__":
    main()
