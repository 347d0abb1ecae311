"""The five networks: raw-audio encoder, identity encoder, frame decoder,
attribute decoders, and the downstream classifier.

The audio encoder is a 1-D ResNet18 over raw waveforms; its composite
temporal downsampling is 640, so 1 s at 16 kHz becomes 25 latent steps.
Frame generation conditions each latent step on a 64-D identity embedding
and upsamples 4x4 -> 64x64 with skip connections from the identity encoder
at every intermediate resolution.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .errors import ShapeError
from .tensor import Tensor, broadcast_to, concat, relu, sigmoid, tanh

LATENT_STEPS = 25
LATENT_DIM = 512
IDENTITY_DIM = 64
WAVE_LEN = 16000


class BasicBlock1d(nn.Module):
    """Two k3 convolutions with a residual shortcut; 1x1 conv + batchnorm
    projection when the stride or channel count changes."""

    def __init__(self, in_ch, out_ch, stride, rng):
        super().__init__()
        self.conv1 = nn.Conv1d(in_ch, out_ch, 3, rng, stride=stride, pad=1)
        self.bn1 = nn.BatchNorm1d(out_ch)
        self.conv2 = nn.Conv1d(out_ch, out_ch, 3, rng, stride=1, pad=1)
        self.bn2 = nn.BatchNorm1d(out_ch)
        if stride != 1 or in_ch != out_ch:
            self.down_conv = nn.Conv1d(in_ch, out_ch, 1, rng, stride=stride, pad=0)
            self.down_bn = nn.BatchNorm1d(out_ch)
        else:
            self.down_conv = None
            self.down_bn = None

    def __call__(self, x):
        out = self.bn2(self.conv2(relu(self.bn1(self.conv1(x)))))
        short = x if self.down_conv is None else self.down_bn(self.down_conv(x))
        return relu(out + short)


class AudioEncoder(nn.Module):
    """1-D ResNet18 on raw 16 kHz audio: stem (kernel 80, stride 20) +
    pool 4, then stages of two basic blocks at channels 64/128/256/512 with
    stage strides 1/2/2/2. Output: 512 channels at 25 Hz."""

    def __init__(self, rng):
        super().__init__()
        self.stem_conv = nn.Conv1d(1, 64, 80, rng, stride=20, pad=30)
        self.stem_bn = nn.BatchNorm1d(64)
        self.pool = nn.MaxPool1d(4)
        widths = (64, 128, 256, 512)
        strides = (1, 2, 2, 2)
        in_ch = 64
        for i, (w, s) in enumerate(zip(widths, strides), start=1):
            stage = nn.Module()
            stage.block1 = BasicBlock1d(in_ch, w, s, rng)
            stage.block2 = BasicBlock1d(w, w, 1, rng)
            setattr(self, f"stage{i}", stage)
            in_ch = w

    def __call__(self, x):
        """x: (N, 1, 16000) -> (N, 512, 25)."""
        if x.ndim != 3 or x.shape[2] != WAVE_LEN:
            raise ShapeError(f"audio encoder expects (N, 1, {WAVE_LEN}), got {x.shape}")
        h = self.pool(relu(self.stem_bn(self.stem_conv(x))))
        for i in (1, 2, 3, 4):
            stage = getattr(self, f"stage{i}")
            h = stage.block2(stage.block1(h))
        return h

    def encode_audio(self, wave):
        """One 1 s waveform (16000,) -> latent matrix (25, 512), as plain arrays."""
        wave = np.asarray(wave)
        if wave.shape != (WAVE_LEN,):
            raise ShapeError(f"encode_audio expects length {WAVE_LEN}, got {wave.shape}")
        out = self(Tensor(wave.reshape(1, 1, WAVE_LEN)))
        return out.data[0].T.copy()


class IdentityEncoder(nn.Module):
    """6-layer strided CNN on a 64x64 mouth crop; exposes skip maps at
    resolutions 32/16/8/4 and a 64-D embedding."""

    def __init__(self, rng):
        super().__init__()
        chans = (1, 32, 64, 128, 256, 512, 64)
        for i in range(1, 6):
            setattr(self, f"conv{i}", nn.Conv2d(chans[i - 1], chans[i], 4, rng, stride=2, pad=1))
            setattr(self, f"bn{i}", nn.BatchNorm2d(chans[i]))
        self.conv6 = nn.Conv2d(512, 64, 2, rng, stride=1, pad=0)
        self.bn6 = nn.BatchNorm2d(64)

    def __call__(self, x_im):
        """x_im: (N, 1, 64, 64) -> (z_id (N, 64), skips at 32/16/8/4)."""
        if x_im.ndim != 4 or x_im.shape[2:] != (64, 64):
            raise ShapeError(f"identity encoder expects (N, 1, 64, 64), got {x_im.shape}")
        h = x_im
        skips = []
        for i in range(1, 6):
            h = relu(getattr(self, f"bn{i}")(getattr(self, f"conv{i}")(h)))
            if i <= 4:
                skips.append(h)
        z_id = relu(self.bn6(self.conv6(h)))
        n = x_im.shape[0]
        return z_id.reshape(n, IDENTITY_DIM), skips


def build_latent(z_aud, z_id):
    """Replicate the identity embedding across time and concatenate:
    (N, T, 512) + (N, 64) -> (N, T, 576)."""
    if z_aud.ndim != 3 or z_aud.shape[2] != LATENT_DIM:
        raise ShapeError(f"build_latent: audio latent must be (N, T, {LATENT_DIM}), got {z_aud.shape}")
    if z_id.ndim != 2 or z_id.shape != (z_aud.shape[0], IDENTITY_DIM):
        raise ShapeError(f"build_latent: identity embedding must be ({z_aud.shape[0]}, {IDENTITY_DIM}), got {z_id.shape}")
    n, t, _ = z_aud.shape
    rep = broadcast_to(z_id.reshape(n, 1, IDENTITY_DIM), (n, t, IDENTITY_DIM))
    return concat([z_aud, rep], axis=2)


class FrameDecoder(nn.Module):
    """Per-timestep latent (576) -> 64x64 grayscale frame in [0,1].

    Four transposed-conv upsampling stages; each stage input is concatenated
    with the identity skip map of matching resolution, so appearance flows in
    at every scale while the latent drives the dynamics.
    """

    # (in_ch incl. skip, out_ch, input resolution)
    _stages = ((512 + 256, 256, 4), (256 + 128, 128, 8), (128 + 64, 64, 16), (64 + 32, 32, 32))

    def __init__(self, rng):
        super().__init__()
        self.fc = nn.Linear(LATENT_DIM + IDENTITY_DIM, 512 * 4 * 4, rng)
        for i, (cin, cout, _) in enumerate(self._stages, start=1):
            setattr(self, f"up{i}", nn.ConvTranspose2d(cin, cout, 4, rng, stride=2, pad=1))
            setattr(self, f"up_bn{i}", nn.BatchNorm2d(cout))
        self.out_conv = nn.Conv2d(32, 1, 3, rng, stride=1, pad=1, bias=True)

    def __call__(self, z, skips):
        """z: (N, T, 576); skips from the identity encoder -> (N, T, 1, 64, 64)."""
        if len(skips) != 4:
            raise ShapeError(f"frame decoder needs 4 skip maps, got {len(skips)}")
        n, t, d = z.shape
        h = self.fc(z.reshape(n * t, d)).reshape(n * t, 512, 4, 4)
        for i, skip in enumerate(reversed(skips), start=1):
            c, r = skip.shape[1], skip.shape[2]
            tiled = broadcast_to(skip.reshape(n, 1, c, r, r), (n, t, c, r, r)).reshape(n * t, c, r, r)
            h = concat([h, tiled], axis=1)
            h = relu(getattr(self, f"up_bn{i}")(getattr(self, f"up{i}")(h)))
        frames = sigmoid(self.out_conv(h))
        return frames.reshape(n, t, 1, 64, 64)


class AttributeDecoders(nn.Module):
    """Three reconstruction heads off the shared audio latent: MFCC (39),
    log-mel (80), and the raw waveform."""

    def __init__(self, rng):
        super().__init__()
        self.mfcc1 = nn.Linear(LATENT_DIM, 256, rng)
        self.mfcc2 = nn.Linear(256, 39, rng)
        self.logmel1 = nn.Linear(LATENT_DIM, 256, rng)
        self.logmel2 = nn.Linear(256, 80, rng)
        self.wav_up = nn.ConvTranspose1d(LATENT_DIM, 32, 1280, rng, stride=640, pad=320, bias=True)
        self.wav_out = nn.Conv1d(32, 1, 9, rng, stride=1, pad=4, bias=True)

    def __call__(self, z_aud):
        """z_aud: (N, T, 512) -> (mfcc (N,T,39), logmel (N,T,80), wav (N, 16000))."""
        n, t, d = z_aud.shape
        flat = z_aud.reshape(n * t, d)
        mfcc = self.mfcc2(relu(self.mfcc1(flat))).reshape(n, t, 39)
        logmel = self.logmel2(relu(self.logmel1(flat))).reshape(n, t, 80)
        wav = tanh(self.wav_out(relu(self.wav_up(z_aud.transpose(0, 2, 1)))))
        return mfcc, logmel, wav.reshape(n, wav.shape[2])


class DownstreamClassifier(nn.Module):
    """2-layer bidirectional GRU (256 per direction) over latent sequences,
    read out from the concatenated final forward/backward states."""

    def __init__(self, n_classes, rng, in_dim=LATENT_DIM, hidden=256):
        super().__init__()
        self.rnn = nn.BiGRU(in_dim, hidden, 2, rng)
        self.head = nn.Linear(2 * hidden, n_classes, rng)

    def __call__(self, feats):
        """feats: (N, T, in_dim) -> logits (N, n_classes)."""
        if feats.ndim != 3 or feats.shape[1] < 1:
            raise ShapeError(f"classifier expects (N, T, D) with T >= 1, got {feats.shape}")
        _, final = self.rnn(feats)
        return self.head(final)


def spawn_rng(seed):
    return np.random.default_rng(np.random.SeedSequence(seed))
