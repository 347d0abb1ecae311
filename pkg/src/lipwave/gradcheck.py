"""Finite-difference verification of every backward rule.

Each case builds a float64 scalar-valued function of explicit leaf tensors,
compares tape gradients against central differences with step h, and reports
the worst relative error (denominator floored). Cases call tensor ops through
the module reference so a deliberately corrupted rule can be spotted by the
same harness, which is itself exercised by :func:`corruption_check`.
"""

from __future__ import annotations

import numpy as np

from . import nn
from . import tensor as T
from .errors import DataError
from .tensor import Tensor

H_DEFAULT = 1e-5
REL_TOL = 1e-4
_FLOOR = 1e-6


def _leaf(rng, shape, lo=-1.0, hi=1.0, keep_away=0.0):
    """Float64 leaf with |values| >= keep_away (kink avoidance)."""
    x = rng.uniform(lo, hi, size=shape)
    if keep_away > 0.0:
        x = np.sign(x) * (np.abs(x) + keep_away)
    return Tensor(x, requires_grad=True, dtype=np.float64)


def _proj(rng, shape):
    """Fixed random projection so the scalar mixes every output coordinate."""
    return Tensor(rng.normal(size=shape).astype(np.float64))


def _to_scalar(out, rng):
    return T.sum_(out * _proj(rng, out.data.shape))


def check_case(fn, leaves, h=H_DEFAULT, max_coords=64, seed=0):
    """Max relative error between tape and central-difference gradients.

    fn() -> scalar Tensor, closing over ``leaves`` (dict name -> leaf Tensor).
    Coordinates are subsampled per leaf once past ``max_coords``.
    """
    for t in leaves.values():
        t.zero_grad()
    out = fn()
    if out.data.shape != ():
        raise DataError(f"gradcheck case must produce a scalar, got {out.data.shape}")
    out.backward()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 91]))
    worst = 0.0
    for name, leaf in leaves.items():
        grad = leaf.grad
        if grad is None:
            raise DataError(f"leaf {name} received no gradient")
        flat = leaf.data.reshape(-1)
        n = flat.shape[0]
        coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        for c in coords:
            keep = flat[c]
            flat[c] = keep + h
            up = fn().item()
            flat[c] = keep - h
            down = fn().item()
            flat[c] = keep
            num = (up - down) / (2.0 * h)
            ana = grad.reshape(-1)[c]
            err = abs(ana - num) / max(abs(ana), abs(num), _FLOOR)
            worst = max(worst, err)
    return worst


def _cast_f64(module):
    for _, p in module.named_parameters():
        p.data = p.data.astype(np.float64)
    for mod, bname, _ in module._walk_buffers():
        mod._buffers[bname] = mod._buffers[bname].astype(np.float64)
    return module


def _module_leaves(module, prefix):
    return {prefix + name: p for name, p in module.named_parameters()}


# -- case builders ----------------------------------------------------------------
# Each returns (fn, leaves). Input draws are seeded per case.


def _rngs(seed):
    return np.random.default_rng(np.random.SeedSequence([seed, 7]))


def case_add(seed=0):
    rng = _rngs(seed)
    a, b = _leaf(rng, (3, 4)), _leaf(rng, (4,))
    return lambda: _to_scalar(a + b, _rngs(seed + 1)), {"a": a, "b": b}


def case_sub(seed=0):
    rng = _rngs(seed)
    a, b = _leaf(rng, (2, 3)), _leaf(rng, (1, 3))
    return lambda: _to_scalar(a - b, _rngs(seed + 1)), {"a": a, "b": b}


def case_mul(seed=0):
    rng = _rngs(seed)
    a, b = _leaf(rng, (2, 3, 4)), _leaf(rng, (4,))
    return lambda: _to_scalar(a * b, _rngs(seed + 1)), {"a": a, "b": b}


def case_scale(seed=0):
    rng = _rngs(seed)
    a = _leaf(rng, (5,))
    return lambda: _to_scalar(T.scale(a, -1.7), _rngs(seed + 1)), {"a": a}


def case_relu(seed=0):
    rng = _rngs(seed)
    a = _leaf(rng, (4, 5), keep_away=0.05)
    return lambda: _to_scalar(T.relu(a), _rngs(seed + 1)), {"a": a}


def case_sigmoid(seed=0):
    rng = _rngs(seed)
    a = _leaf(rng, (3, 4), lo=-2.0, hi=2.0)
    return lambda: _to_scalar(T.sigmoid(a), _rngs(seed + 1)), {"a": a}


def case_tanh(seed=0):
    rng = _rngs(seed)
    a = _leaf(rng, (3, 4), lo=-2.0, hi=2.0)
    return lambda: _to_scalar(T.tanh(a), _rngs(seed + 1)), {"a": a}


def case_abs(seed=0):
    rng = _rngs(seed)
    a = _leaf(rng, (6,), keep_away=0.05)
    return lambda: _to_scalar(T.abs_(a), _rngs(seed + 1)), {"a": a}


def case_astype(seed=0):
    rng = _rngs(seed)
    a = _leaf(rng, (3, 3))
    return lambda: T.sum_(T.astype(a * a, np.float64)), {"a": a}


def case_matmul(seed=0):
    rng = _rngs(seed)
    a, b = _leaf(rng, (3, 4)), _leaf(rng, (4, 2))
    return lambda: _to_scalar(T.matmul(a, b), _rngs(seed + 1)), {"a": a, "b": b}


def case_reshape(seed=0):
    rng = _rngs(seed)
    a = _leaf(rng, (2, 6))
    return lambda: _to_scalar(T.reshape(a, (3, 4)), _rngs(seed + 1)), {"a": a}


def case_transpose(seed=0):
    rng = _rngs(seed)
    a = _leaf(rng, (2, 3, 4))
    return lambda: _to_scalar(T.transpose(a, (2, 0, 1)), _rngs(seed + 1)), {"a": a}


def case_broadcast_to(seed=0):
    rng = _rngs(seed)
    a = _leaf(rng, (3, 1))
    return lambda: _to_scalar(T.broadcast_to(a, (2, 3, 4)), _rngs(seed + 1)), {"a": a}


def case_concat(seed=0):
    rng = _rngs(seed)
    a, b = _leaf(rng, (2, 3)), _leaf(rng, (2, 5))
    return lambda: _to_scalar(T.concat((a, b), axis=1), _rngs(seed + 1)), {"a": a, "b": b}


def case_getitem(seed=0):
    rng = _rngs(seed)
    a = _leaf(rng, (4, 5, 3))
    return lambda: _to_scalar(a[1:3, ::2], _rngs(seed + 1)), {"a": a}


def case_sum(seed=0):
    rng = _rngs(seed)
    a = _leaf(rng, (3, 4, 2))
    return lambda: _to_scalar(T.sum_(a, axis=(0, 2)), _rngs(seed + 1)), {"a": a}


def case_sum_all(seed=0):
    rng = _rngs(seed)
    a = _leaf(rng, (3, 4))
    return lambda: T.sum_(a * a), {"a": a}


def case_mean(seed=0):
    rng = _rngs(seed)
    a = _leaf(rng, (2, 5))
    return lambda: _to_scalar(T.mean(a, axis=0), _rngs(seed + 1)), {"a": a}


def case_conv1d(seed=0):
    rng = _rngs(seed)
    x, w = _leaf(rng, (2, 3, 11)), _leaf(rng, (4, 3, 5))
    from .conv import conv1d
    return lambda: _to_scalar(conv1d(x, w, stride=2, pad=3), _rngs(seed + 1)), {"x": x, "w": w}


def case_conv1d_remainder(seed=0):
    # stride leaves trailing input unused; its gradient must be exactly zero
    rng = _rngs(seed)
    x, w = _leaf(rng, (1, 2, 12)), _leaf(rng, (3, 2, 3))
    from .conv import conv1d
    return lambda: _to_scalar(conv1d(x, w, stride=4, pad=0), _rngs(seed + 1)), {"x": x, "w": w}


def case_conv_transpose1d(seed=0):
    rng = _rngs(seed)
    y, w = _leaf(rng, (2, 3, 7)), _leaf(rng, (3, 4, 5))
    from .conv import conv_transpose1d
    return lambda: _to_scalar(conv_transpose1d(y, w, stride=3, pad=2), _rngs(seed + 1)), {"y": y, "w": w}


def case_conv2d(seed=0):
    rng = _rngs(seed)
    x, w = _leaf(rng, (2, 2, 6, 7)), _leaf(rng, (3, 2, 3, 3))
    from .conv import conv2d
    return lambda: _to_scalar(conv2d(x, w, stride=2, pad=1), _rngs(seed + 1)), {"x": x, "w": w}


def case_conv_transpose2d(seed=0):
    rng = _rngs(seed)
    y, w = _leaf(rng, (2, 3, 3, 4)), _leaf(rng, (3, 2, 4, 4))
    from .conv import conv_transpose2d
    return lambda: _to_scalar(conv_transpose2d(y, w, stride=2, pad=1), _rngs(seed + 1)), {"y": y, "w": w}


def case_maxpool1d(seed=0):
    rng = _rngs(seed)
    x = _leaf(rng, (2, 3, 10))
    from .conv import maxpool1d
    return lambda: _to_scalar(maxpool1d(x, 3), _rngs(seed + 1)), {"x": x}


def case_linear(seed=0):
    rng = _rngs(seed)
    lin = _cast_f64(nn.Linear(4, 3, rng))
    x = _leaf(rng, (5, 4))
    leaves = {"x": x, **_module_leaves(lin, "lin.")}
    return lambda: _to_scalar(lin(x), _rngs(seed + 1)), leaves


def case_batchnorm1d_train(seed=0):
    rng = _rngs(seed)
    bn = _cast_f64(nn.BatchNorm1d(4))
    bn.update_running_stats = False
    x = _leaf(rng, (3, 4, 5))
    leaves = {"x": x, **_module_leaves(bn, "bn.")}
    return lambda: _to_scalar(bn(x), _rngs(seed + 1)), leaves


def case_batchnorm2d_train(seed=0):
    rng = _rngs(seed)
    bn = _cast_f64(nn.BatchNorm2d(3))
    bn.update_running_stats = False
    x = _leaf(rng, (2, 3, 4, 4))
    leaves = {"x": x, **_module_leaves(bn, "bn.")}
    return lambda: _to_scalar(bn(x), _rngs(seed + 1)), leaves


def case_batchnorm_eval(seed=0):
    rng = _rngs(seed)
    bn = _cast_f64(nn.BatchNorm1d(4))
    bn._buffers["running_mean"] = rng.normal(size=4)
    bn._buffers["running_var"] = rng.uniform(0.5, 2.0, size=4)
    bn.eval()
    x = _leaf(rng, (2, 4, 3))
    leaves = {"x": x, **_module_leaves(bn, "bn.")}
    return lambda: _to_scalar(bn(x), _rngs(seed + 1)), leaves


def case_gru(seed=0):
    rng = _rngs(seed)
    gru = _cast_f64(nn.GRU(3, 4, rng))
    x = _leaf(rng, (2, 5, 3))
    leaves = {"x": x, **_module_leaves(gru, "gru.")}

    def fn():
        outs, final = gru(x)
        return _to_scalar(outs, _rngs(seed + 1)) + _to_scalar(final, _rngs(seed + 2))
    return fn, leaves


def case_bigru(seed=0):
    rng = _rngs(seed)
    net = _cast_f64(nn.BiGRU(3, 4, 2, rng))
    x = _leaf(rng, (2, 5, 3))
    leaves = {"x": x, **_module_leaves(net, "bigru.")}

    def fn():
        outs, final = net(x)
        return _to_scalar(outs, _rngs(seed + 1)) + _to_scalar(final, _rngs(seed + 2))
    return fn, leaves


def case_l1_loss(seed=0):
    rng = _rngs(seed)
    pred = _leaf(rng, (3, 4))
    target = pred.data + np.sign(rng.normal(size=(3, 4))) * rng.uniform(0.05, 1.0, size=(3, 4))
    return lambda: nn.l1_loss(pred, Tensor(target)), {"pred": pred}


def case_softmax_cross_entropy(seed=0):
    rng = _rngs(seed)
    logits = _leaf(rng, (5, 4), lo=-2.0, hi=2.0)
    labels = rng.integers(0, 4, size=5)
    return lambda: nn.softmax_cross_entropy(logits, labels), {"logits": logits}


# -- composite blocks, reduced sizes ----------------------------------------------


def case_residual_block(seed=0):
    from .models import BasicBlock1d
    rng = _rngs(seed)
    blk = _cast_f64(BasicBlock1d(3, 5, stride=2, rng=rng))
    for m in (blk.bn1, blk.bn2) + ((blk.down_bn,) if blk.down_conv is not None else ()):
        m.update_running_stats = False
    x = _leaf(rng, (2, 3, 12))
    leaves = {"x": x, **_module_leaves(blk, "blk.")}
    return lambda: _to_scalar(blk(x), _rngs(seed + 1)), leaves


def case_encoder_stem(seed=0):
    from .conv import maxpool1d
    rng = _rngs(seed)
    conv = _cast_f64(nn.Conv1d(1, 4, 8, rng, stride=4, pad=3, bias=False))
    bn = _cast_f64(nn.BatchNorm1d(4))
    bn.update_running_stats = False
    x = _leaf(rng, (2, 1, 40))
    leaves = {"x": x, **_module_leaves(conv, "conv."), **_module_leaves(bn, "bn.")}
    return lambda: _to_scalar(maxpool1d(T.relu(bn(conv(x))), 2), _rngs(seed + 1)), leaves


def case_decoder_stage(seed=0):
    # fc -> seed image -> [concat skip, upsample, bn, relu] -> 1x1 conv -> sigmoid
    rng = _rngs(seed)
    fc = _cast_f64(nn.Linear(6, 4 * 2 * 2, rng))
    up = _cast_f64(nn.ConvTranspose2d(7, 3, 4, rng, stride=2, pad=1, bias=False))
    bn = _cast_f64(nn.BatchNorm2d(3))
    bn.update_running_stats = False
    out = _cast_f64(nn.Conv2d(3, 1, 3, rng, stride=1, pad=1))
    z = _leaf(rng, (2, 6))
    skip = _leaf(rng, (2, 3, 2, 2))
    leaves = {"z": z, "skip": skip, **_module_leaves(fc, "fc."), **_module_leaves(up, "up."),
              **_module_leaves(bn, "bn."), **_module_leaves(out, "out.")}

    def fn():
        seed_img = T.reshape(fc(z), (2, 4, 2, 2))
        h = T.relu(bn(up(T.concat((seed_img, skip), axis=1))))
        return _to_scalar(T.sigmoid(out(h)), _rngs(seed + 1))
    return fn, leaves


def case_wave_head(seed=0):
    rng = _rngs(seed)
    up = _cast_f64(nn.ConvTranspose1d(4, 3, 8, rng, stride=4, pad=2))
    out = _cast_f64(nn.Conv1d(3, 1, 5, rng, stride=1, pad=2))
    z = _leaf(rng, (2, 4, 6))
    leaves = {"z": z, **_module_leaves(up, "up."), **_module_leaves(out, "out.")}
    return lambda: _to_scalar(T.tanh(out(T.relu(up(z)))), _rngs(seed + 1)), leaves


def case_classifier_head(seed=0):
    rng = _rngs(seed)
    net = _cast_f64(nn.BiGRU(4, 3, 1, rng))
    lin = _cast_f64(nn.Linear(6, 3, rng))
    x = _leaf(rng, (3, 6, 4))
    labels = np.array([0, 2, 1])
    leaves = {"x": x, **_module_leaves(net, "gru."), **_module_leaves(lin, "lin.")}

    def fn():
        _, final = net(x)
        return nn.softmax_cross_entropy(lin(final), labels)
    return fn, leaves


def case_av_loss(seed=0):
    """Miniature of the full AV objective: shared tiny encoder feeding a
    frame-generation branch (identity skip concat) and attribute heads,
    all four L1 components summed."""
    rng = _rngs(seed)
    enc = _cast_f64(nn.Conv1d(1, 4, 6, rng, stride=4, pad=1, bias=False))
    enc_bn = _cast_f64(nn.BatchNorm1d(4))
    ident = _cast_f64(nn.Conv2d(1, 3, 2, rng, stride=2, pad=0, bias=False))
    dec = _cast_f64(nn.ConvTranspose2d(7, 1, 2, rng, stride=2, pad=0))
    head = _cast_f64(nn.Linear(4, 2, rng))
    wav = _cast_f64(nn.ConvTranspose1d(4, 1, 8, rng, stride=4, pad=2))
    for m in (enc_bn,):
        m.update_running_stats = False
    x = _leaf(rng, (2, 1, 16))       # waveform, 4 latent steps
    img = _leaf(rng, (2, 1, 4, 4))   # conditioning frame
    vid_t = Tensor(rng.uniform(0.2, 0.8, size=(2, 4, 1, 4, 4)))
    att_t = Tensor(rng.normal(size=(2, 4, 2)))
    wav_t = Tensor(rng.normal(size=(2, 1, 16)))
    leaves = {"x": x, "img": img, **_module_leaves(enc, "enc."), **_module_leaves(enc_bn, "ebn."),
              **_module_leaves(ident, "id."), **_module_leaves(dec, "dec."),
              **_module_leaves(head, "head."), **_module_leaves(wav, "wav.")}

    def fn():
        z = T.relu(enc_bn(enc(x)))                       # (2,4,4)
        z_seq = T.transpose(z, (0, 2, 1))                # (2,4,4) time-major
        zi = ident(img)                                  # (2,3,2,2)
        n, t = 2, 4
        frames = []
        for ti in range(t):
            zt = T.reshape(z_seq[:, ti], (n, 4, 1, 1))
            zt = T.broadcast_to(zt, (n, 4, 2, 2))
            frames.append(T.sigmoid(dec(T.concat((zt, zi), axis=1))))
        vid = T.concat([T.reshape(f, (n, 1, 1, 4, 4)) for f in frames], axis=1)
        l_vid = nn.l1_loss(vid, vid_t)
        att = T.reshape(head(T.reshape(z_seq, (n * t, 4))), (n, t, 2))
        l_att = nn.l1_loss(att, att_t)
        l_wav = nn.l1_loss(T.tanh(wav(z)), wav_t)
        return l_vid + l_att + l_wav
    return fn, leaves


CASES = {
    "add": case_add, "sub": case_sub, "mul": case_mul, "scale": case_scale,
    "relu": case_relu, "sigmoid": case_sigmoid, "tanh": case_tanh, "abs": case_abs,
    "astype": case_astype, "matmul": case_matmul, "reshape": case_reshape,
    "transpose": case_transpose, "broadcast_to": case_broadcast_to,
    "concat": case_concat, "getitem": case_getitem, "sum": case_sum,
    "sum_all": case_sum_all, "mean": case_mean,
    "conv1d": case_conv1d, "conv1d_remainder": case_conv1d_remainder,
    "conv_transpose1d": case_conv_transpose1d, "conv2d": case_conv2d,
    "conv_transpose2d": case_conv_transpose2d, "maxpool1d": case_maxpool1d,
    "linear": case_linear, "batchnorm1d_train": case_batchnorm1d_train,
    "batchnorm2d_train": case_batchnorm2d_train, "batchnorm_eval": case_batchnorm_eval,
    "gru": case_gru, "bigru": case_bigru, "l1_loss": case_l1_loss,
    "softmax_cross_entropy": case_softmax_cross_entropy,
    "residual_block": case_residual_block, "encoder_stem": case_encoder_stem,
    "decoder_stage": case_decoder_stage, "wave_head": case_wave_head,
    "classifier_head": case_classifier_head, "av_loss": case_av_loss,
}


TENSOR_CASES = (
    "add", "sub", "mul", "scale", "relu", "sigmoid", "tanh", "abs", "astype",
    "matmul", "reshape", "transpose", "broadcast_to", "concat", "getitem",
    "sum", "sum_all", "mean", "conv1d", "conv1d_remainder", "conv_transpose1d",
    "conv2d", "conv_transpose2d", "maxpool1d",
)
MODEL_CASES = (
    "linear", "batchnorm1d_train", "batchnorm2d_train", "batchnorm_eval",
    "gru", "bigru", "l1_loss", "softmax_cross_entropy", "residual_block",
    "encoder_stem", "decoder_stage", "wave_head", "classifier_head", "av_loss",
)


def run_all(names=None, h=H_DEFAULT, max_coords=64, seed=0):
    """Returns [(case name, max relative error)] for the requested cases."""
    if names is None:
        names = list(CASES)
    results = []
    for name in names:
        if name not in CASES:
            raise DataError(f"unknown gradcheck case {name!r}")
        fn, leaves = CASES[name](seed)
        results.append((name, check_case(fn, leaves, h=h, max_coords=max_coords, seed=seed)))
    return results


def corruption_check(h=H_DEFAULT, seed=0):
    """Break relu's backward on purpose; the harness must notice.

    Returns (clean_err, corrupted_err). A harness with any teeth gives
    clean_err < REL_TOL << corrupted_err.
    """
    fn, leaves = CASES["relu"](seed)
    clean = check_case(fn, leaves, h=h, seed=seed)
    real = T.relu

    def bad_relu(a):
        out = real(a)

        def bwd(g):
            a._accum(g * np.float64(1.05))  # drops the mask, inflates magnitude
        return Tensor._make(out.data.copy(), (a,), bwd)

    T.relu = bad_relu
    try:
        fn, leaves = CASES["relu"](seed)
        corrupted = check_case(fn, leaves, h=h, seed=seed)
    finally:
        T.relu = real
    return clean, corrupted
