"""Dataset plumbing: JSONL manifests, stratified label-fraction splits,
synthetic audiovisual corpus generation, babble noise, and seeded batching.

The synthetic corpus stands in for a lip-reading dataset. Each word is a
template (two carrier tones plus a 25-step mouth-aperture envelope); each
sample renders the envelope both as amplitude-modulated audio and as an
ellipse whose opening tracks the same envelope, so the audio-visual coupling
a real talker provides is present by construction. Manifests store paths
relative to their own directory, which keeps same-seed corpora
bitwise-identical wherever they are written.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError
from .formats import load_tensor, load_wav, save_tensor, save_wav

SPLITS = ("train", "val", "test")
FRAME_STEPS = 25
IMG = 64
STEP_SAMPLES = 640
CROSSFADE = 80          # 5 ms at 16 kHz
MOUTH_VALUE = 0.1
MAX_V_SEMIAXIS = 24.0   # pixels at full aperture
SUPERSAMPLE = 4


@dataclass
class SampleRecord:
    id: str
    wav_path: str
    frames_path: Optional[str]
    label: str
    split: str


_FIELDS = ("id", "wav_path", "frames_path", "label", "split")


def write_manifest(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps({
                "id": r.id, "wav_path": r.wav_path, "frames_path": r.frames_path,
                "label": r.label, "split": r.split,
            }) + "\n")


def read_manifest(path):
    records = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: bad JSON ({e})") from None
            extra = set(obj) - set(_FIELDS)
            missing = set(_FIELDS) - set(obj)
            if extra or missing:
                raise DataError(f"{path}:{lineno}: manifest fields must be {_FIELDS}; "
                                f"missing {sorted(missing)}, unknown {sorted(extra)}")
            if obj["split"] not in SPLITS:
                raise DataError(f"{path}:{lineno}: bad split {obj['split']!r}")
            if obj["id"] in seen:
                raise DataError(f"{path}:{lineno}: duplicate id {obj['id']!r}")
            seen.add(obj["id"])
            records.append(SampleRecord(**obj))
    return records


def make_splits(records, fraction, seed):
    """Per-class subsampling of the train split; val/test pass through.

    Keeps max(1, round-half-up(n_c * fraction)) samples per class, chosen by
    a seeded shuffle. Returns a new record list in the original order.
    """
    if not 0.0 < fraction <= 1.0:
        raise DataError(f"fraction must be in (0, 1], got {fraction}")
    by_class = {}
    for r in records:
        if r.split == "train":
            by_class.setdefault(r.label, []).append(r.id)
    labels = {r.label for r in records}
    empty = sorted(labels - set(by_class))
    if empty:
        raise DataError(f"classes with no train samples: {empty}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    keep = set()
    for label in sorted(by_class):
        ids = by_class[label]
        k = max(1, int(np.floor(len(ids) * fraction + 0.5)))
        order = rng.permutation(len(ids))
        keep.update(ids[i] for i in order[:k])
    return [r for r in records if r.split != "train" or r.id in keep]


# -- synthetic corpus ------------------------------------------------------------


def _render_frames(apertures, width_frac, background):
    """25 antialiased ellipse frames; vertical semi-axis tracks the aperture."""
    s = SUPERSAMPLE
    n = IMG * s
    c = (n - 1) / 2.0
    yy = (np.arange(n) - c)[:, None] / s
    xx = (np.arange(n) - c)[None, :] / s
    a_h = width_frac * 32.0
    frames = np.empty((FRAME_STEPS, 1, IMG, IMG), dtype=np.float32)
    x_term = (xx / a_h) ** 2
    for t, a in enumerate(apertures):
        b_v = a * MAX_V_SEMIAXIS
        if b_v <= 0.0:
            mask = np.zeros((IMG, IMG))
        else:
            hi = (x_term + (yy / b_v) ** 2) <= 1.0
            mask = hi.reshape(IMG, s, IMG, s).mean(axis=(1, 3))
        frames[t, 0] = background + (MOUTH_VALUE - background) * mask
    return frames


def _render_audio(apertures, f1, f2):
    """Amplitude-modulated two-tone audio: per-step level with 5 ms linear
    cross-fades at step boundaries."""
    env = np.repeat(np.asarray(apertures, dtype=np.float64), STEP_SAMPLES)
    ramp = np.arange(1, CROSSFADE + 1) / CROSSFADE
    for t in range(1, FRAME_STEPS):
        lo = t * STEP_SAMPLES
        env[lo:lo + CROSSFADE] = apertures[t - 1] + (apertures[t] - apertures[t - 1]) * ramp
    n = np.arange(FRAME_STEPS * STEP_SAMPLES)
    carrier = (np.sin(2 * np.pi * f1 * n / 16000.0) + np.sin(2 * np.pi * f2 * n / 16000.0)) / 2.0
    return env * carrier


def synth_corpus(out_dir, n_words=8, n_identities=4, n_train=48, n_val=16, n_test=64, seed=0):
    """Generate WAVs, frame tensor files, and a manifest; returns the manifest path.

    Word templates (carriers 200..3500 Hz, 25-step aperture envelope) are
    fixed per seed; samples add +-3% carrier detune and sigma=0.05 aperture
    noise, and draw one of ``n_identities`` mouth/background identities.
    """
    if n_words < 2:
        raise DataError(f"need ≥ 2 words, got {n_words}")
    if n_identities < 1:
        raise DataError(f"need >= 1 identity, got {n_identities}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    carriers = rng.uniform(200.0, 3500.0, size=(n_words, 2))
    envelopes = rng.uniform(0.1, 1.0, size=(n_words, FRAME_STEPS))
    widths = rng.uniform(0.3, 0.7, size=n_identities)
    backgrounds = rng.uniform(0.2, 0.8, size=n_identities)

    os.makedirs(out_dir, exist_ok=True)
    wav_dir = os.path.join(out_dir, "wav")
    frm_dir = os.path.join(out_dir, "frames")
    os.makedirs(wav_dir, exist_ok=True)
    os.makedirs(frm_dir, exist_ok=True)

    records = []
    counter = 0
    for split, count in (("train", n_train), ("val", n_val), ("test", n_test)):
        for i in range(count):
            word = i % n_words
            ident = int(rng.integers(n_identities))
            detune = rng.uniform(0.97, 1.03, size=2)
            apertures = np.clip(envelopes[word] + rng.normal(0.0, 0.05, FRAME_STEPS), 0.0, 1.0)
            audio = _render_audio(apertures, carriers[word, 0] * detune[0], carriers[word, 1] * detune[1])
            frames = _render_frames(apertures, widths[ident], backgrounds[ident])
            sid = f"s{counter:05d}_w{word:02d}"
            counter += 1
            wav_rel = f"wav/{sid}.wav"
            frm_rel = f"frames/{sid}.avtf"
            save_wav(os.path.join(out_dir, wav_rel), audio)
            save_tensor(os.path.join(out_dir, frm_rel), frames)
            records.append(SampleRecord(id=sid, wav_path=wav_rel, frames_path=frm_rel,
                                        label=f"w{word:02d}", split=split))
    manifest = os.path.join(out_dir, "manifest.jsonl")
    write_manifest(manifest, records)
    return manifest


# -- babble noise -------------------------------------------------------------


@dataclass(frozen=True)
class BabbleNoise:
    wave: np.ndarray
    premix_power: float
    mean_source_power: float


def babble_noise(manifest_path, n_mix=6, seed=0, length=16000):
    """Mean of ``n_mix`` randomly chosen, randomly rotated train utterances,
    peak-normalized to 0.9."""
    records = [r for r in read_manifest(manifest_path) if r.split == "train"]
    if len(records) < n_mix:
        raise DataError(f"babble needs {n_mix} train samples, manifest has {len(records)}")
    base = os.path.dirname(os.path.abspath(manifest_path))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    picks = rng.choice(len(records), size=n_mix, replace=False)
    acc = np.zeros(length, dtype=np.float64)
    src_power = 0.0
    for idx in picks:
        wav = load_wav(os.path.join(base, records[idx].wav_path)).astype(np.float64)
        reps = -(-length // wav.shape[0])
        tiled = np.tile(wav, reps)[:length]
        rolled = np.roll(tiled, int(rng.integers(0, length)))
        acc += rolled
        src_power += float(np.mean(rolled ** 2))
    mix = acc / n_mix
    peak = float(np.max(np.abs(mix)))
    if peak == 0.0:
        raise DataError("babble mixture is silent")
    return BabbleNoise(wave=(mix / peak) * 0.9,
                       premix_power=float(np.mean(mix ** 2)),
                       mean_source_power=src_power / n_mix)


# -- batching and loading -----------------------------------------------------------


def batch_iter(records, batch_size, seed, epoch):
    """Seeded per-epoch shuffle; yields record lists, final partial batch kept."""
    if batch_size < 1:
        raise DataError(f"batch_size must be >= 1, got {batch_size}")
    if not records:
        raise DataError("empty manifest")
    order = np.random.default_rng(np.random.SeedSequence([seed, epoch])).permutation(len(records))
    for lo in range(0, len(records), batch_size):
        yield [records[i] for i in order[lo:lo + batch_size]]


class SampleLoader:
    """Resolves manifest-relative paths and caches decoded samples.

    Read counters exist so tests can assert which modalities a training
    regime actually touched.
    """

    def __init__(self, manifest_path, cache=True):
        self.records = read_manifest(manifest_path)
        self.base = os.path.dirname(os.path.abspath(manifest_path))
        self.cache = cache
        self._wav_cache = {}
        self._frame_cache = {}
        self.wav_reads = 0
        self.frame_reads = 0
        self.labels = sorted({r.label for r in self.records})
        self.label_index = {lab: i for i, lab in enumerate(self.labels)}

    def split(self, name):
        if name not in SPLITS:
            raise DataError(f"unknown split {name!r}")
        return [r for r in self.records if r.split == name]

    def wave(self, record):
        if record.id not in self._wav_cache:
            self.wav_reads += 1
            w = load_wav(os.path.join(self.base, record.wav_path))
            if not self.cache:
                return w
            self._wav_cache[record.id] = w
        return self._wav_cache[record.id]

    def frames(self, record):
        if record.frames_path is None:
            raise DataError(f"sample {record.id} has no frames file")
        if record.id not in self._frame_cache:
            self.frame_reads += 1
            fr = load_tensor(os.path.join(self.base, record.frames_path))
            if fr.shape != (FRAME_STEPS, 1, IMG, IMG):
                raise DataError(f"sample {record.id}: frames shape {fr.shape}, "
                                f"expected {(FRAME_STEPS, 1, IMG, IMG)}")
            if not self.cache:
                return fr
            self._frame_cache[record.id] = fr
        return self._frame_cache[record.id]

    def label_of(self, record):
        return self.label_index[record.label]
