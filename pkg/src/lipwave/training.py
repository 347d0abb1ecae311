"""Self-supervised pretraining (regimes A, V, AV), downstream finetuning,
noise-robustness sweeps, and the seeded replication protocol.

Loss bookkeeping invariants: the audio loss is the float sum of its three
logged components and, in the AV regime, the total is the float sum of the
video and audio losses. Component scalars are cast to float64 on the tape
before summation so these identities hold exactly, not just to f32 rounding.
"""

from __future__ import annotations

import csv
import json
import os
import platform
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import dsp, nn
from .data import SampleLoader, babble_noise, batch_iter, make_splits
from .errors import DataError, NumericError
from .formats import load_checkpoint, save_checkpoint, save_tensor
from .models import (AttributeDecoders, AudioEncoder, DownstreamClassifier,
                     FrameDecoder, IdentityEncoder, build_latent, spawn_rng)
from .optim import Adam
from .tensor import Tensor, astype, scale

REGIMES = ("A", "V", "AV")
_F64 = np.float64


@dataclass
class PretrainConfig:
    regime: str = "AV"
    manifest: str = ""
    epochs: int = 1
    learning_rate: float = 1e-4
    batch_size: int = 16
    seed: int = 0
    out_dir: str = "runs/pretrain"
    max_steps: Optional[int] = None     # hard cap on optimizer steps
    stop_factor: Optional[float] = None  # stop once l_total <= factor * first l_total
    w_video: float = 1.0
    w_mfcc: float = 1.0
    w_logmel: float = 1.0
    w_wav: float = 1.0


@dataclass
class FinetuneConfig:
    manifest: str = ""
    epochs: int = 50
    lr_main: float = 1e-4
    lr_tail: float = 1e-5
    lr_boundary: int = 40   # last epoch on lr_main
    batch_size: int = 4
    seed: int = 0
    label_fraction: float = 1.0
    freeze_encoder: bool = False
    features: str = "encoder"  # "encoder" | "mfcc"
    eval_every: int = 5
    out_dir: str = "runs/finetune"


class LossReport:
    """Per-step loss log; the audio/total columns are float sums of the
    logged components, so the composition identities are exact."""

    COLUMNS = ("step", "epoch", "l_video", "l_mfcc", "l_logmel", "l_wav", "l_audio", "l_total")

    def __init__(self):
        self.rows = []

    def log(self, step, epoch, l_video=0.0, l_mfcc=0.0, l_logmel=0.0, l_wav=0.0):
        l_audio = l_mfcc + l_logmel + l_wav
        l_total = l_video + l_audio
        self.rows.append((step, epoch, l_video, l_mfcc, l_logmel, l_wav, l_audio, l_total))
        return l_total

    def epoch_means(self):
        sums, counts = {}, {}
        for row in self.rows:
            ep = row[1]
            sums[ep] = sums.get(ep, 0.0) + row[7]
            counts[ep] = counts.get(ep, 0) + 1
        return {ep: sums[ep] / counts[ep] for ep in sorted(sums)}

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(self.COLUMNS)
            w.writerows(self.rows)


class PretrainModel(nn.Module):
    """Encoder plus the decoders a regime needs."""

    def __init__(self, regime, seed):
        super().__init__()
        if regime not in REGIMES:
            raise DataError(f"unknown regime {regime!r}, expected one of {REGIMES}")
        self.regime = regime
        rng = spawn_rng(seed)
        self.encoder = AudioEncoder(rng)
        if regime in ("V", "AV"):
            self.identity_encoder = IdentityEncoder(rng)
            self.frame_decoder = FrameDecoder(rng)
        if regime in ("A", "AV"):
            self.attrib = AttributeDecoders(rng)


def audio_targets(waves):
    """Per-utterance z-normalized MFCC/log-mel targets at the 25-step rate.

    waves: (B, 16000) -> (mfcc (B,25,39), logmel (B,25,80)), float32.
    """
    waves = np.asarray(waves)
    mf = np.empty((waves.shape[0], 25, 39), dtype=np.float32)
    lm = np.empty((waves.shape[0], 25, 80), dtype=np.float32)
    for i, w in enumerate(waves):
        logmel = dsp.logmel_features(w)
        mf[i] = dsp.z_normalize(dsp.mfcc(logmel)).astype(np.float32)
        lm[i] = dsp.z_normalize(logmel).astype(np.float32)
    return mf, lm


def regime_losses(model, waves, videos=None, targets=None, weights=None):
    """One shared encoder pass feeding every decoder the regime uses.

    waves: (B, 16000); videos: (B, 25, 1, 64, 64) for V/AV. Returns a dict
    of scalar Tensors; l_audio and l_total are on-tape f64 sums of their
    components. The conditioning image is frame 0 of the target video.
    weights maps term names (video, mfcc, logmel, wav) to multipliers;
    logged components carry their weight so the sum identities stay exact.
    """
    w = {"video": 1.0, "mfcc": 1.0, "logmel": 1.0, "wav": 1.0}
    if weights:
        w.update(weights)
    waves = np.asarray(waves, dtype=np.float32)
    b = waves.shape[0]
    z_seq = model.encoder(Tensor(waves.reshape(b, 1, -1))).transpose(0, 2, 1)
    out = {}
    parts = []
    if model.regime in ("V", "AV"):
        if videos is None:
            raise DataError(f"regime {model.regime} needs target videos")
        videos = np.asarray(videos, dtype=np.float32)
        z_id, skips = model.identity_encoder(Tensor(videos[:, 0]))
        pred = model.frame_decoder(build_latent(z_seq, z_id), skips)
        out["l_video"] = scale(astype(nn.l1_loss(pred, Tensor(videos)), _F64),
                               w["video"])
        parts.append(out["l_video"])
    if model.regime in ("A", "AV"):
        if targets is None:
            mf_t, lm_t = audio_targets(waves)
        else:
            mf_t, lm_t = targets
        mf, lm, wv = model.attrib(z_seq)
        out["l_mfcc"] = scale(astype(nn.l1_loss(mf, Tensor(mf_t)), _F64),
                              w["mfcc"])
        out["l_logmel"] = scale(astype(nn.l1_loss(lm, Tensor(lm_t)), _F64),
                                w["logmel"])
        out["l_wav"] = scale(astype(nn.l1_loss(wv, Tensor(waves)), _F64),
                             w["wav"])
        out["l_audio"] = out["l_mfcc"] + out["l_logmel"] + out["l_wav"]
        parts.append(out["l_audio"])
    out["l_total"] = parts[0] if len(parts) == 1 else parts[0] + parts[1]
    return out


def loss_video(model, waves, videos):
    return regime_losses(model, waves, videos)["l_video"]


def loss_audio(model, waves, targets=None):
    return regime_losses(model, waves, targets=targets)["l_audio"]


def loss_total(model, waves, videos):
    return regime_losses(model, waves, videos)["l_total"]


def _checkpoint_groups(model):
    """Checkpoint file layout: encoder plus one file per decoder."""
    groups = {"encoder": model.encoder.state_dict()}
    if model.regime in ("V", "AV"):
        groups["identity_encoder"] = model.identity_encoder.state_dict()
        groups["frame_decoder"] = model.frame_decoder.state_dict()
    if model.regime in ("A", "AV"):
        full = model.attrib.state_dict()
        for head, prefixes in (("mfcc_head", ("mfcc1.", "mfcc2.")),
                               ("logmel_head", ("logmel1.", "logmel2.")),
                               ("wav_head", ("wav_up.", "wav_out."))):
            groups[head] = {k: v for k, v in full.items() if k.startswith(prefixes)}
    return groups


def _write_sidecar(out_dir, config, extra=None):
    info = {
        "config": asdict(config),
        "package_version": _package_version(),
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "threads": 1,
    }
    if extra:
        info.update(extra)
    with open(os.path.join(out_dir, "run.json"), "w") as f:
        json.dump(info, f, indent=2, default=str)


def _package_version():
    from . import __version__
    return __version__


@dataclass
class PretrainResult:
    out_dir: str
    checkpoints: dict
    report: LossReport
    model: PretrainModel
    steps: int
    aborted: bool = False


def pretrain(config):
    """Seeded Adam over the regime loss; per-epoch checkpoints, per-step CSV.

    A non-finite loss or gradient aborts the run; checkpoints from the last
    completed epoch stay on disk. Optional stop rules: ``max_steps`` caps
    optimizer steps, ``stop_factor`` stops once the logged total drops to
    that fraction of the first step's total.
    """
    if config.regime not in REGIMES:
        raise DataError(f"unknown regime {config.regime!r}, expected one of {REGIMES}")
    if config.epochs < 1:
        raise DataError("epochs must be >= 1")
    if config.batch_size < 2:
        raise DataError("batch_size must be >= 2, training batchnorm needs real statistics")
    loader = SampleLoader(config.manifest)
    train = loader.split("train")
    if len(train) < 2:
        raise DataError("pretraining needs at least 2 train records")
    os.makedirs(config.out_dir, exist_ok=True)

    model = PretrainModel(config.regime, config.seed)
    opt = Adam(model.named_parameters(), lr=config.learning_rate)
    term_weights = {"video": config.w_video, "mfcc": config.w_mfcc,
                    "logmel": config.w_logmel, "wav": config.w_wav}
    report = LossReport()
    target_cache = {}
    csv_path = os.path.join(config.out_dir, "loss.csv")
    ckpt_paths = {}
    step = 0
    first_total = None
    stop = False
    t0 = time.time()

    def flush_epoch():
        for name, state in _checkpoint_groups(model).items():
            path = os.path.join(config.out_dir, f"{name}.avck")
            save_checkpoint(path, state)
            ckpt_paths[name] = path
        report.write_csv(csv_path)

    for epoch in range(1, config.epochs + 1):
        for batch in batch_iter(train, config.batch_size, config.seed, epoch):
            if len(batch) < 2:  # trailing remainder; one sample has no batch statistics
                continue
            waves = np.stack([loader.wave(r) for r in batch])
            videos = None
            if config.regime in ("V", "AV"):
                videos = np.stack([loader.frames(r) for r in batch])
            for r in batch:
                if r.id not in target_cache and config.regime in ("A", "AV"):
                    target_cache[r.id] = audio_targets(loader.wave(r)[None])
            targets = None
            if config.regime in ("A", "AV"):
                targets = (np.concatenate([target_cache[r.id][0] for r in batch]),
                           np.concatenate([target_cache[r.id][1] for r in batch]))
            losses = regime_losses(model, waves, videos, targets,
                                   weights=term_weights)
            try:
                losses["l_total"].backward()
                opt.step()
            except NumericError as e:
                report.write_csv(csv_path)
                _write_sidecar(config.out_dir, config,
                               {"aborted_at_step": step + 1, "error": str(e)})
                raise NumericError(f"pretrain step {step + 1} (epoch {epoch}): {e}") from None
            opt.zero_grad()
            step += 1
            total = report.log(step, epoch,
                               l_video=losses["l_video"].item() if "l_video" in losses else 0.0,
                               l_mfcc=losses["l_mfcc"].item() if "l_mfcc" in losses else 0.0,
                               l_logmel=losses["l_logmel"].item() if "l_logmel" in losses else 0.0,
                               l_wav=losses["l_wav"].item() if "l_wav" in losses else 0.0)
            if first_total is None:
                first_total = total
            if config.stop_factor is not None and total <= config.stop_factor * first_total:
                stop = True
            if config.max_steps is not None and step >= config.max_steps:
                stop = True
            if stop:
                break
        flush_epoch()
        if stop:
            break
    _write_sidecar(config.out_dir, config, {"steps": step, "seconds": time.time() - t0,
                                            "wav_reads": loader.wav_reads,
                                            "frame_reads": loader.frame_reads})
    return PretrainResult(config.out_dir, ckpt_paths, report, model, step)


# -- downstream ------------------------------------------------------------------


def _mfcc_baseline_features(wave):
    """39-D MFCC at 101 frames, standardized per utterance (the usual CMVN)."""
    return dsp.z_normalize(dsp.feature_matrix(wave, "mfcc39")).astype(np.float32)


class _FeatureSource:
    """Maps records to classifier inputs, caching what is safe to cache:
    mfcc features always, encoder features only while the encoder is frozen
    in eval mode."""

    def __init__(self, kind, encoder, loader, frozen):
        self.kind = kind
        self.encoder = encoder
        self.loader = loader
        self.frozen = frozen
        self._cache = {}

    def batch(self, records):
        if self.kind == "mfcc":
            rows = []
            for r in records:
                if r.id not in self._cache:
                    self._cache[r.id] = _mfcc_baseline_features(self.loader.wave(r))
                rows.append(self._cache[r.id])
            return Tensor(np.stack(rows))
        if self.frozen:
            rows = []
            for r in records:
                if r.id not in self._cache:
                    w = self.loader.wave(r)
                    out = self.encoder(Tensor(w.reshape(1, 1, -1)))
                    self._cache[r.id] = out.data[0].T.copy()
                rows.append(self._cache[r.id])
            return Tensor(np.stack(rows))
        waves = np.stack([self.loader.wave(r) for r in records])
        return self.encoder(Tensor(waves.reshape(len(records), 1, -1))).transpose(0, 2, 1)


@dataclass
class FinetuneResult:
    out_dir: str
    checkpoints: dict
    test_accuracy: float
    best_val_accuracy: float
    best_epoch: int
    n_train: int
    history: list


def lr_at_epoch(config, epoch):
    """Two-phase schedule: lr_main through lr_boundary, lr_tail after."""
    return config.lr_main if epoch <= config.lr_boundary else config.lr_tail


def _evaluate(classifier, source, records, labels, batch=8):
    if not records:
        raise DataError("no records to evaluate")
    correct = 0
    for lo in range(0, len(records), batch):
        chunk = records[lo:lo + batch]
        logits = classifier(source.batch(chunk))
        pred = np.argmax(logits.data, axis=1)
        correct += int((pred == np.asarray([labels[r.id] for r in chunk])).sum())
    return correct / len(records)


def finetune(config, encoder_ckpt=None, n_classes=None):
    """Two-phase Adam finetuning with best-validation selection.

    ``encoder_ckpt`` of None trains the encoder from random init (the
    supervised-from-scratch baseline). ``features="mfcc"`` replaces the
    encoder with the 39-D MFCC baseline features feeding the same classifier.
    ``n_classes``, when given, must match the label count in the manifest.
    """
    if config.features not in ("encoder", "mfcc"):
        raise DataError(f"unknown feature source {config.features!r}")
    if config.batch_size < 2:
        raise DataError("batch_size must be >= 2, training batchnorm needs real statistics")
    loader = SampleLoader(config.manifest)
    if n_classes is not None and n_classes != len(loader.labels):
        raise DataError(f"classifier expects {n_classes} classes, "
                        f"manifest has {len(loader.labels)}")
    records = loader.records
    if config.label_fraction < 1.0:
        records = make_splits(records, config.label_fraction, config.seed)
    train = [r for r in records if r.split == "train"]
    val = [r for r in records if r.split == "val"]
    test = [r for r in records if r.split == "test"]
    if not val or not test:
        raise DataError("finetune needs non-empty train/val/test splits")
    if len(train) < 2:
        raise DataError("finetune needs at least 2 labeled train records")
    labels = {r.id: loader.label_of(r) for r in loader.records}
    n_classes = len(loader.labels)
    os.makedirs(config.out_dir, exist_ok=True)

    rng = spawn_rng(config.seed)
    encoder = None
    if config.features == "encoder":
        encoder = AudioEncoder(rng)
        if encoder_ckpt is not None:
            encoder.load_state_dict(load_checkpoint(encoder_ckpt))
        if config.freeze_encoder:
            encoder.eval()
    in_dim = 512 if config.features == "encoder" else 39
    classifier = DownstreamClassifier(n_classes, rng, in_dim=in_dim)

    trainable = list(classifier.named_parameters("classifier."))
    train_encoder = encoder is not None and not config.freeze_encoder
    if train_encoder:
        trainable += list(encoder.named_parameters("encoder."))
    opt = Adam(trainable, lr=config.lr_main)
    source = _FeatureSource(config.features, encoder, loader,
                            frozen=(encoder is None or config.freeze_encoder))

    def run_eval(records_):
        classifier.eval()
        if train_encoder:
            encoder.eval()
        acc = _evaluate(classifier, source, records_, labels)
        classifier.train()
        if train_encoder:
            encoder.train()
        return acc

    best = (-1.0, 0, None)
    history = []
    step = 0
    for epoch in range(1, config.epochs + 1):
        opt.lr = lr_at_epoch(config, epoch)
        for batch in batch_iter(train, config.batch_size, config.seed, epoch):
            if len(batch) < 2:  # trailing remainder; one sample has no batch statistics
                continue
            feats = source.batch(batch)
            loss = nn.softmax_cross_entropy(classifier(feats), [labels[r.id] for r in batch])
            loss.backward()
            opt.step()
            opt.zero_grad()
            step += 1
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            val_acc = run_eval(val)
            history.append((epoch, val_acc))
            if val_acc > best[0]:
                snap = {k: v.data.copy() for k, v in trainable}
                if train_encoder:
                    snap.update({"encoder_buf." + k: v.copy()
                                 for k, v in encoder.named_buffers()})
                best = (val_acc, epoch, snap)

    if best[2] is not None:
        for k, v in trainable:
            v.data[...] = best[2][k]
        if train_encoder:
            for k, buf in encoder.named_buffers():
                buf[...] = best[2]["encoder_buf." + k]

    classifier.eval()
    if encoder is not None:
        encoder.eval()
    test_acc = _evaluate(classifier, source, test, labels)

    ckpts = {}
    clf_path = os.path.join(config.out_dir, "classifier.avck")
    save_checkpoint(clf_path, classifier.state_dict())
    ckpts["classifier"] = clf_path
    if encoder is not None:
        enc_path = os.path.join(config.out_dir, "encoder.avck")
        save_checkpoint(enc_path, encoder.state_dict())
        ckpts["encoder"] = enc_path
    _write_sidecar(config.out_dir, config, {
        "n_train": len(train), "n_classes": n_classes,
        "best_val_accuracy": best[0], "best_epoch": best[1],
        "test_accuracy": test_acc, "steps": step,
        "train_counts": {lab: sum(1 for r in train if r.label == lab) for lab in loader.labels},
    })
    return FinetuneResult(config.out_dir, ckpts, test_acc, best[0], best[1], len(train), history)


def evaluate_checkpoint(classifier_ckpt, manifest, encoder_ckpt=None,
                        features="encoder", split="test"):
    """Accuracy of a saved classifier (plus encoder, unless on MFCC features)
    on one split's clean audio. The noise sweep's clean column goes through
    the same scoring path, so the two agree exactly."""
    if features not in ("encoder", "mfcc"):
        raise DataError(f"unknown feature source {features!r}")
    loader = SampleLoader(manifest)
    records = loader.split(split)
    if not records:
        raise DataError(f"manifest has no {split} split")
    labels = {r.id: loader.label_of(r) for r in records}
    encoder = None
    if features == "encoder":
        if encoder_ckpt is None:
            raise DataError("encoder features need an encoder checkpoint")
        encoder = AudioEncoder(spawn_rng(0))
        encoder.load_state_dict(load_checkpoint(encoder_ckpt))
        encoder.eval()
    classifier = DownstreamClassifier(len(loader.labels), spawn_rng(0),
                                      in_dim=512 if features == "encoder" else 39)
    classifier.load_state_dict(load_checkpoint(classifier_ckpt))
    classifier.eval()
    waves = {r.id: loader.wave(r) for r in records}
    return _sweep_accuracy(encoder, classifier, features, records, waves, labels)


def extract_features(encoder_ckpt, manifest, out_dir):
    """Eval-mode (25, 512) latents for every sample, one tensor file each."""
    loader = SampleLoader(manifest)
    encoder = AudioEncoder(spawn_rng(0))
    encoder.load_state_dict(load_checkpoint(encoder_ckpt))
    encoder.eval()
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for r in loader.records:
        feats = encoder.encode_audio(loader.wave(r))
        path = os.path.join(out_dir, f"{r.id}.avtf")
        save_tensor(path, feats)
        paths.append(path)
    return paths


# -- noise sweep and protocol -------------------------------------------------------


SNR_GRID = (-5, 0, 5, 10, 15, 20)


def noise_sweep(entries, manifest, seed=0, snrs=SNR_GRID, out_csv=None):
    """Accuracy of each model on babble-mixed test audio at each SNR plus clean.

    entries: list of (name, encoder or None, classifier, feature_kind) with
    loaded model objects. Returns {name: {column: accuracy}} with columns
    str(snr) and "clean".
    """
    loader = SampleLoader(manifest)
    test = loader.split("test")
    if not test:
        raise DataError("manifest has no test split")
    labels = {r.id: loader.label_of(r) for r in test}
    babble = babble_noise(manifest, n_mix=6, seed=seed, length=2 * 16000)
    results = {}
    for name, encoder, classifier, kind in entries:
        if encoder is not None:
            encoder.eval()
        classifier.eval()
        row = {}
        clean = {r.id: loader.wave(r) for r in test}
        for snr in snrs:
            # seed entries must be non-negative; shift the (possibly negative)
            # SNR before scaling so each condition gets a distinct stream
            rng = np.random.default_rng(
                np.random.SeedSequence([seed, int(round((snr + 100) * 1000))]))
            mixed = {r.id: dsp.snr_mix(clean[r.id], babble.wave, snr, rng).wave.astype(np.float32)
                     for r in test}
            row[str(snr)] = _sweep_accuracy(encoder, classifier, kind, test, mixed, labels)
        row["clean"] = _sweep_accuracy(encoder, classifier, kind, test, clean, labels)
        results[name] = row
    if out_csv:
        cols = [str(s) for s in snrs] + ["clean"]
        with open(out_csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["model"] + cols)
            for name, row in results.items():
                w.writerow([name] + [f"{row[c]:.6f}" for c in cols])
    return results


def _sweep_accuracy(encoder, classifier, kind, records, waves, labels, batch=8):
    correct = 0
    for lo in range(0, len(records), batch):
        chunk = records[lo:lo + batch]
        if kind == "mfcc":
            feats = Tensor(np.stack([_mfcc_baseline_features(waves[r.id]) for r in chunk]))
        else:
            stacked = np.stack([waves[r.id] for r in chunk])
            feats = encoder(Tensor(stacked.reshape(len(chunk), 1, -1))).transpose(0, 2, 1)
        pred = np.argmax(classifier(feats).data, axis=1)
        correct += int((pred == np.asarray([labels[r.id] for r in chunk])).sum())
    return correct / len(records)


@dataclass
class ProtocolResult:
    accuracies: dict      # model -> [per-seed test accuracy]
    means: dict           # model -> mean test accuracy
    sweep: dict           # model -> {snr column -> accuracy}
    out_dir: str


PROTOCOL_MODELS = ("supervised", "A", "V", "AV")


def run_protocol(manifest, out_dir, seeds=(0, 1, 2), label_fraction=0.1,
                 pretrain_epochs=None, pretrain_lr=1e-3, pretrain_batch=2,
                 finetune_epochs=50, snrs=SNR_GRID):
    """The desk-scale stand-in for the paper's low-label comparison: for each
    seed, pretrain each regime, then finetune four models (from scratch and
    from each regime's encoder) on the label fraction; sweep the first seed's
    models over babble noise."""
    # AV needs the longest schedule: its loss mixes four terms and the audio
    # heads converge slower than in the single-route regimes. These counts were
    # calibrated so all four downstream models train inside the CPU budget.
    pretrain_epochs = pretrain_epochs or {"AV": 5, "V": 1, "A": 3}
    os.makedirs(out_dir, exist_ok=True)
    accs = {m: [] for m in PROTOCOL_MODELS}
    sweep_entries = []
    for seed in seeds:
        enc_ckpts = {"supervised": None}
        for regime in ("AV", "V", "A"):
            pre = pretrain(PretrainConfig(
                regime=regime, manifest=manifest, epochs=pretrain_epochs[regime],
                learning_rate=pretrain_lr, batch_size=pretrain_batch, seed=seed,
                out_dir=os.path.join(out_dir, f"seed{seed}", f"pretrain_{regime}")))
            enc_ckpts[regime] = pre.checkpoints["encoder"]
        for name in PROTOCOL_MODELS:
            ft = finetune(FinetuneConfig(
                manifest=manifest, epochs=finetune_epochs, seed=seed,
                label_fraction=label_fraction,
                out_dir=os.path.join(out_dir, f"seed{seed}", f"finetune_{name}")),
                encoder_ckpt=enc_ckpts[name])
            accs[name].append(ft.test_accuracy)
            if seed == seeds[0]:
                encoder = AudioEncoder(spawn_rng(0))
                encoder.load_state_dict(load_checkpoint(ft.checkpoints["encoder"]))
                loader = SampleLoader(manifest)
                classifier = DownstreamClassifier(len(loader.labels), spawn_rng(0))
                classifier.load_state_dict(load_checkpoint(ft.checkpoints["classifier"]))
                sweep_entries.append((name, encoder, classifier, "encoder"))
    sweep = noise_sweep(sweep_entries, manifest, seed=seeds[0], snrs=snrs,
                        out_csv=os.path.join(out_dir, "noise_sweep.csv"))
    means = {m: float(np.mean(accs[m])) for m in PROTOCOL_MODELS}
    with open(os.path.join(out_dir, "protocol.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["model"] + [f"seed{s}" for s in seeds] + ["mean"])
        for m in PROTOCOL_MODELS:
            w.writerow([m] + [f"{a:.6f}" for a in accs[m]] + [f"{means[m]:.6f}"])
    return ProtocolResult(accs, means, sweep, out_dir)
