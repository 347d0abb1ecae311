"""Binary file formats: PCM16 WAV audio, "AVTF" tensor files, and "AVCK"
checkpoint files. Tensor and checkpoint payloads are float32 little-endian,
so save/load round-trips are bitwise-identical.
"""

from __future__ import annotations

import struct
import wave as _wave

import numpy as np

from .errors import DataError

SAMPLE_RATE = 16000
WAVE_LEN = 16000

_TENSOR_MAGIC = b"AVTF"
_CKPT_MAGIC = b"AVCK"
_VERSION = 1


def load_wav(path, length=WAVE_LEN):
    """Read a PCM16 mono 16 kHz WAV and scale to [-1, 1); center-crop or
    zero-pad to ``length`` samples."""
    try:
        with _wave.open(str(path), "rb") as f:
            if f.getnchannels() != 1:
                raise DataError(f"{path}: expected mono, got {f.getnchannels()} channels")
            if f.getsampwidth() != 2:
                raise DataError(f"{path}: expected 16-bit samples, got sample width {f.getsampwidth()}")
            if f.getframerate() != SAMPLE_RATE:
                raise DataError(f"{path}: expected sample rate {SAMPLE_RATE}, got {f.getframerate()}")
            if f.getcomptype() != "NONE":
                raise DataError(f"{path}: expected PCM, got compression {f.getcomptype()!r}")
            n = f.getnframes()
            raw = f.readframes(n)
    except _wave.Error as e:
        raise DataError(f"{path}: not a readable WAV file ({e})") from None
    except EOFError:
        raise DataError(f"{path}: truncated WAV file") from None
    if len(raw) != 2 * n:
        raise DataError(f"{path}: truncated WAV payload ({len(raw)} bytes for {n} frames)")
    x = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    if x.shape[0] > length:
        start = (x.shape[0] - length) // 2
        x = x[start:start + length]
    elif x.shape[0] < length:
        lo = (length - x.shape[0]) // 2
        out = np.zeros(length, dtype=np.float32)
        out[lo:lo + x.shape[0]] = x
        x = out
    return x.copy()


def save_wav(path, samples):
    samples = np.asarray(samples, dtype=np.float64)
    pcm = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
    with _wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(SAMPLE_RATE)
        f.writeframes(pcm.tobytes())


# -- tensor files -----------------------------------------------------------------


def save_tensor(path, arr):
    arr = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as f:
        f.write(_TENSOR_MAGIC)
        f.write(struct.pack("<II", _VERSION, arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(arr.tobytes())


def _read_exact(f, n, path, what):
    buf = f.read(n)
    if len(buf) != n:
        raise DataError(f"{path}: truncated tensor file while reading {what}")
    return buf


def load_tensor(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _TENSOR_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}, expected {_TENSOR_MAGIC!r}")
        version, ndim = struct.unpack("<II", _read_exact(f, 8, path, "header"))
        if version != _VERSION:
            raise DataError(f"{path}: unknown tensor-file version {version}")
        dims = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim, path, "dims"))
        count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        payload = _read_exact(f, 4 * count, path, "payload")
        if f.read(1):
            raise DataError(f"{path}: trailing bytes after tensor payload")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


# -- checkpoints --------------------------------------------------------------------


def save_checkpoint(path, state):
    """state: ordered mapping of name -> array; stored as float32."""
    names = list(state)
    if len(set(names)) != len(names):
        raise DataError("duplicate names in checkpoint state")
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<II", _VERSION, len(names)))
        for name in names:
            arr = np.ascontiguousarray(state[name], dtype="<f4")
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path):
    out = {}
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _CKPT_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}, expected {_CKPT_MAGIC!r}")
        version, count = struct.unpack("<II", _read_exact(f, 8, path, "header"))
        if version != _VERSION:
            raise DataError(f"{path}: unknown checkpoint version {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4, path, "name length"))
            name = _read_exact(f, name_len, path, "name").decode("utf-8")
            if name in out:
                raise DataError(f"{path}: duplicate checkpoint entry {name!r}")
            (ndim,) = struct.unpack("<I", _read_exact(f, 4, path, "ndim"))
            dims = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim, path, "dims"))
            n = int(np.prod(dims, dtype=np.int64)) if ndim else 1
            payload = _read_exact(f, 4 * n, path, "payload")
            out[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
        if f.read(1):
            raise DataError(f"{path}: trailing bytes after last checkpoint entry")
    return out
