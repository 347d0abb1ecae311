"""Neural-net layers on top of the tensor tape: linear, conv wrappers,
batchnorm, GRU, and the two loss functions used by training.

Modules register parameters and submodules by attribute assignment. Weight
initialization follows the uniform fan-in convention (bound 1/sqrt(fan_in));
every module draws from an explicit numpy Generator so construction is
reproducible.
"""

from __future__ import annotations

import numpy as np

from . import conv as C
from .errors import DataError, ShapeError
from .tensor import DEFAULT_DTYPE, Tensor, abs_, concat, matmul, mean, mul, relu, sigmoid, sum_, tanh


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, value):
        """Non-trainable state (running stats); checkpointed, not counted."""
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield (prefix + name, p)
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name, b in self._buffers.items():
            yield (prefix + name, b)
        for name, child in self._children.items():
            yield from child.named_buffers(prefix + name + ".")

    def param_count(self):
        return sum(p.size for p in self.parameters())

    def train(self):
        object.__setattr__(self, "training", True)
        for child in self._children.values():
            child.train()
        return self

    def eval(self):
        object.__setattr__(self, "training", False)
        for child in self._children.values():
            child.eval()
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self):
        out = {}
        for name, p in self.named_parameters():
            out[name] = p.data
        for name, b in self.named_buffers():
            out[name] = b
        return out

    def load_state_dict(self, state):
        mine = self.state_dict()
        missing = sorted(set(mine) - set(state))
        extra = sorted(set(state) - set(mine))
        if missing or extra:
            raise DataError(f"state mismatch: missing {missing[:4]}, unexpected {extra[:4]}")
        for name, p in self.named_parameters():
            src = state[name]
            if src.shape != p.data.shape:
                raise DataError(f"shape mismatch for {name}: {src.shape} vs {p.data.shape}")
            p.data[...] = src
        for mod, bname, full in self._walk_buffers():
            src = state[full]
            dst = mod._buffers[bname]
            if src.shape != dst.shape:
                raise DataError(f"shape mismatch for {full}: {src.shape} vs {dst.shape}")
            dst[...] = src

    def _walk_buffers(self, prefix=""):
        for bname in self._buffers:
            yield (self, bname, prefix + bname)
        for cname, child in self._children.items():
            yield from child._walk_buffers(prefix + cname + ".")


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(DEFAULT_DTYPE), requires_grad=True)


class Linear(Module):
    def __init__(self, in_dim, out_dim, rng, bias=True):
        super().__init__()
        self.weight = _uniform(rng, (in_dim, out_dim), in_dim)
        self.bias = _uniform(rng, (out_dim,), in_dim) if bias else None

    def __call__(self, x):
        out = matmul(x, self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out


class Conv1d(Module):
    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, pad=0, bias=False):
        super().__init__()
        self.stride, self.pad = stride, pad
        self.weight = _uniform(rng, (out_ch, in_ch, kernel), in_ch * kernel)
        self.bias = _uniform(rng, (out_ch,), in_ch * kernel) if bias else None

    def __call__(self, x):
        out = C.conv1d(x, self.weight, stride=self.stride, pad=self.pad)
        if self.bias is not None:
            out = out + self.bias.reshape(-1, 1)
        return out


class ConvTranspose1d(Module):
    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, pad=0, bias=False):
        super().__init__()
        self.stride, self.pad = stride, pad
        self.weight = _uniform(rng, (in_ch, out_ch, kernel), in_ch * kernel)
        self.bias = _uniform(rng, (out_ch,), in_ch * kernel) if bias else None

    def __call__(self, x):
        out = C.conv_transpose1d(x, self.weight, stride=self.stride, pad=self.pad)
        if self.bias is not None:
            out = out + self.bias.reshape(-1, 1)
        return out


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, pad=0, bias=False):
        super().__init__()
        self.stride, self.pad = stride, pad
        self.weight = _uniform(rng, (out_ch, in_ch, kernel, kernel), in_ch * kernel * kernel)
        self.bias = _uniform(rng, (out_ch,), in_ch * kernel * kernel) if bias else None

    def __call__(self, x):
        out = C.conv2d(x, self.weight, stride=self.stride, pad=self.pad)
        if self.bias is not None:
            out = out + self.bias.reshape(-1, 1, 1)
        return out


class ConvTranspose2d(Module):
    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, pad=0, bias=False):
        super().__init__()
        self.stride, self.pad = stride, pad
        self.weight = _uniform(rng, (in_ch, out_ch, kernel, kernel), in_ch * kernel * kernel)
        self.bias = _uniform(rng, (out_ch,), in_ch * kernel * kernel) if bias else None

    def __call__(self, x):
        out = C.conv_transpose2d(x, self.weight, stride=self.stride, pad=self.pad)
        if self.bias is not None:
            out = out + self.bias.reshape(-1, 1, 1)
        return out


class MaxPool1d(Module):
    def __init__(self, kernel):
        super().__init__()
        self.kernel = kernel

    def __call__(self, x):
        return C.maxpool1d(x, self.kernel)


class _BatchNorm(Module):
    """Shared batchnorm core; subclasses fix which axes are batch axes.

    Normalization and the running update both use the biased variance, so a
    net trained and evaluated on the same fixed batch converges to identical
    train/eval outputs. ``update_running_stats`` exists for the gradient
    checker, which must keep the forward a fixed pure function.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.update_running_stats = True
        self.gamma = Tensor(np.ones(channels, dtype=DEFAULT_DTYPE), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=DEFAULT_DTYPE), requires_grad=True)
        # stats stay in the checkpoint dtype so save/load round-trips are bitwise
        self.register_buffer("running_mean", np.zeros(channels, dtype=DEFAULT_DTYPE))
        self.register_buffer("running_var", np.ones(channels, dtype=DEFAULT_DTYPE))

    _rank = None  # set by subclass: expected input ndim

    def __call__(self, x):
        if x.ndim != self._rank:
            raise ShapeError(f"batchnorm expects {self._rank}-D input, got shape {x.shape}")
        axes = (0,) + tuple(range(2, self._rank))
        cshape = (1, -1) + (1,) * (self._rank - 2)
        gamma, beta = self.gamma, self.beta
        eps = x.data.dtype.type(self.eps)

        if self.training:
            m = int(np.prod([x.shape[a] for a in axes]))
            if m < 2:
                raise ShapeError("batchnorm needs more than one value per channel in training mode")
            mu = x.data.mean(axis=axes)
            var = x.data.var(axis=axes)
            if self.update_running_stats:
                self.running_mean += self.momentum * (mu.astype(DEFAULT_DTYPE) - self.running_mean)
                self.running_var += self.momentum * (var.astype(DEFAULT_DTYPE) - self.running_var)
            inv = 1.0 / np.sqrt(var + eps)
            xhat = (x.data - mu.reshape(cshape)) * inv.reshape(cshape)
            out_data = gamma.data.reshape(cshape) * xhat + beta.data.reshape(cshape)

            def bwd(g):
                gam = gamma.data.reshape(cshape)
                sum_g = g.sum(axis=axes)
                sum_gx = (g * xhat).sum(axis=axes)
                if gamma.requires_grad:
                    gamma._accum(sum_gx)
                    beta._accum(sum_g)
                if x.requires_grad:
                    dx = (gam * inv.reshape(cshape) / m) * (
                        m * g - sum_g.reshape(cshape) - xhat * sum_gx.reshape(cshape)
                    )
                    x._accum(dx.astype(x.data.dtype))

            return Tensor._make(out_data.astype(x.data.dtype), (x, gamma, beta), bwd)

        rm = self.running_mean.astype(x.data.dtype).reshape(cshape)
        inv = (1.0 / np.sqrt(self.running_var + self.eps)).astype(x.data.dtype).reshape(cshape)
        xhat = (x.data - rm) * inv

        def bwd_eval(g):
            if gamma.requires_grad:
                gamma._accum((g * xhat).sum(axis=axes))
                beta._accum(g.sum(axis=axes))
            if x.requires_grad:
                x._accum(g * gamma.data.reshape(cshape) * inv)

        out_data = gamma.data.reshape(cshape) * xhat + beta.data.reshape(cshape)
        return Tensor._make(out_data, (x, gamma, beta), bwd_eval)


class BatchNorm1d(_BatchNorm):
    _rank = 3


class BatchNorm2d(_BatchNorm):
    _rank = 4


class GRU(Module):
    """Single-direction GRU layer, gate order (reset, update, candidate):

        r = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
        z = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
        n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
        h' = (1 - z) * n + z * h
    """

    def __init__(self, in_dim, hidden, rng):
        super().__init__()
        self.hidden = hidden
        self.w_ih = _uniform(rng, (in_dim, 3 * hidden), hidden)
        self.w_hh = _uniform(rng, (hidden, 3 * hidden), hidden)
        self.b_ih = _uniform(rng, (3 * hidden,), hidden)
        self.b_hh = _uniform(rng, (3 * hidden,), hidden)

    def __call__(self, x, reverse=False):
        """x: (N, T, in). Returns (outputs (N, T, H), final state (N, H))."""
        n, t_len, in_dim = x.shape
        h = self.hidden
        xg = matmul(x.reshape(n * t_len, in_dim), self.w_ih) + self.b_ih
        xg = xg.reshape(n, t_len, 3 * h)
        state = Tensor(np.zeros((n, h)), dtype=x.dtype)
        steps = range(t_len - 1, -1, -1) if reverse else range(t_len)
        outs = [None] * t_len
        for t in steps:
            gx = xg[:, t, :]
            gh = matmul(state, self.w_hh) + self.b_hh
            r = sigmoid(gx[:, :h] + gh[:, :h])
            z = sigmoid(gx[:, h:2 * h] + gh[:, h:2 * h])
            cand = tanh(gx[:, 2 * h:] + mul(r, gh[:, 2 * h:]))
            state = cand + mul(z, state - cand)
            outs[t] = state.reshape(n, 1, h)
        return concat(outs, axis=1), state


class BiGRU(Module):
    """Stacked bidirectional GRU; per-layer outputs concatenate both directions."""

    def __init__(self, in_dim, hidden, layers, rng):
        super().__init__()
        self.layers = layers
        for i in range(layers):
            d = in_dim if i == 0 else 2 * hidden
            setattr(self, f"fwd{i + 1}", GRU(d, hidden, rng))
            setattr(self, f"bwd{i + 1}", GRU(d, hidden, rng))

    def __call__(self, x):
        """x: (N, T, in). Returns (sequence (N, T, 2H), final (N, 2H))."""
        final = None
        for i in range(self.layers):
            fwd = getattr(self, f"fwd{i + 1}")
            bwd = getattr(self, f"bwd{i + 1}")
            out_f, last_f = fwd(x)
            out_b, last_b = bwd(x, reverse=True)
            x = concat([out_f, out_b], axis=2)
            final = concat([last_f, last_b], axis=1)
        return x, final


# -- losses ------------------------------------------------------------------


def l1_loss(pred, target):
    """Mean absolute error; target may be a plain array."""
    if not isinstance(target, Tensor):
        target = Tensor(np.asarray(target), dtype=pred.data.dtype)
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss: prediction {pred.shape} vs target {target.shape}")
    return mean(abs_(pred - target))


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of (N, K) logits against integer labels (N,)."""
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross-entropy: logits {logits.shape} vs labels {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ShapeError(f"cross-entropy: label out of range for {logits.shape[1]} classes")
    n = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    probs = ez / ez.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    nll = -(z[rows, labels] - np.log(ez.sum(axis=1)))
    out_data = np.asarray(nll.mean(), dtype=logits.data.dtype)

    def bwd(g):
        d = probs.copy()
        d[rows, labels] -= 1.0
        logits._accum(g * d / n)

    return Tensor._make(out_data, (logits,), bwd)


def accuracy(logits, labels):
    return float((np.argmax(logits.data, axis=1) == np.asarray(labels)).mean())


__all__ = [
    "Module", "Linear", "Conv1d", "ConvTranspose1d", "Conv2d", "ConvTranspose2d",
    "MaxPool1d", "BatchNorm1d", "BatchNorm2d", "GRU", "BiGRU",
    "l1_loss", "softmax_cross_entropy", "accuracy", "relu", "sigmoid", "tanh",
    "sum_", "mean", "mul", "concat",
]
