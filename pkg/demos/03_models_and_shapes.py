"""The model zoo: raw-audio encoder, identity encoder, frame decoder,
attribute decoders, and the downstream classifier, with their shape contracts.

Run: python3 demos/03_models_and_shapes.py
"""

import numpy as np

from lipwave.models import (AttributeDecoders, AudioEncoder, DownstreamClassifier,
                            FrameDecoder, IdentityEncoder, build_latent, spawn_rng)
from lipwave.tensor import Tensor


def main():
    rng = spawn_rng(0)
    encoder = AudioEncoder(rng)
    print(f"audio encoder parameters: {encoder.param_count():,}")

    wave = np.random.default_rng(1).standard_normal(16000).astype(np.float32)
    encoder.eval()
    z = encoder.encode_audio(wave)
    print(f"1 s of 16 kHz audio -> latents {z.shape}")

    # video route: a conditioning frame supplies identity, the latent sequence
    # supplies motion, the decoder paints 25 frames
    ident = IdentityEncoder(rng)
    dec = FrameDecoder(rng)
    ident.eval()  # batchnorm with a single sample needs running stats
    dec.eval()
    frame0 = Tensor(np.random.default_rng(2).uniform(0, 1, (1, 1, 64, 64)).astype(np.float32))
    z_id, skips = ident(frame0)
    print(f"identity embedding {z_id.shape}, skips " +
          " ".join(str(tuple(s.shape)) for s in skips))
    z_seq = Tensor(z[None])  # (1, 25, 512)
    video = dec(build_latent(z_seq, z_id), skips)
    print(f"decoded video {video.shape}, range [{video.data.min():.2f}, {video.data.max():.2f}]")

    # audio route: three reconstruction heads off the same latents
    attrib = AttributeDecoders(rng)
    attrib.eval()
    mf, lm, wv = attrib(z_seq)
    print(f"mfcc head {mf.shape}, log-mel head {lm.shape}, waveform head {wv.shape}")

    clf = DownstreamClassifier(8, rng)
    clf.eval()
    logits = clf(Tensor(z[None]))
    print(f"classifier logits {logits.shape}")


if __name__ == "__main__":
    main()
