"""Dual-branch transformer classifier and the MLP / CNN baselines."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor

LAYER_NORM_EPS = 1e-5


@dataclass
class TransformerConfig:
    window: int = 100
    subcarriers: int = 52
    classes: int = 6
    d_model: int = 32
    heads: int = 4
    d_ff: int = 64
    dropout: float = 0.2
    encoder_layers: int = 1
    positional_encoding: bool = True
    input_dropout: bool = False
    scale_full_dmodel: bool = False
    cnn_channels: int = 32

    def __post_init__(self):
        for key in ("window", "subcarriers", "classes", "d_model", "heads", "d_ff", "encoder_layers", "cnn_channels"):
            if getattr(self, key) <= 0:
                raise ValueError(f"{key} must be positive, got {getattr(self, key)}")
        if self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")

    def to_dict(self):
        return asdict(self)


def sinusoidal_pe(length, d_model):
    if d_model % 2:
        raise ValueError(f"sinusoidal encoding needs an even d_model, got {d_model}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    freq = 10000.0 ** (np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(pos / freq)
    pe[:, 1::2] = np.cos(pos / freq)
    return pe


class Module:
    """Container tracking parameters and submodules in definition order."""

    def __init__(self):
        self.training = True

    def _members(self):
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield key, value
            elif isinstance(value, Module):
                yield key, value
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{key}.{i}", item

    def named_parameters(self, prefix=""):
        out = []
        for key, value in self._members():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor):
                out.append((name, value))
            else:
                out.extend(value.named_parameters(name + "."))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for _, value in self._members():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


def _param(data, dtype):
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, dtype=np.float64, bias=True):
        super().__init__()
        bound = 1.0 / math.sqrt(n_in)
        self.weight = _param(rng.uniform(-bound, bound, (n_in, n_out)), dtype)
        self.bias = _param(np.zeros(n_out), dtype) if bias else None

    def __call__(self, x):
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, d, dtype=np.float64, eps=LAYER_NORM_EPS):
        super().__init__()
        self.gain = _param(np.ones(d), dtype)
        self.bias = _param(np.zeros(d), dtype)
        self.eps = eps
        self.record = None  # set to a list to capture normalized activations

    def __call__(self, x):
        return ad.layer_norm(x, self.gain, self.bias, self.eps, record=self.record)


class Dropout(Module):
    def __init__(self, p, rng):
        super().__init__()
        self.p = p
        self.rng = rng

    def __call__(self, x):
        return ad.dropout(x, self.p, self.rng, self.training)


class MultiHeadAttention(Module):
    def __init__(self, d_model, heads, rng, dtype=np.float64, scale_full_dmodel=False):
        super().__init__()
        self.d_model, self.heads = d_model, heads
        self.w_q = Linear(d_model, d_model, rng, dtype, bias=False)
        self.w_k = Linear(d_model, d_model, rng, dtype, bias=False)
        self.w_v = Linear(d_model, d_model, rng, dtype, bias=False)
        self.w_o = Linear(d_model, d_model, rng, dtype)
        d_scale = d_model if scale_full_dmodel else d_model // heads
        self.scale = 1.0 / math.sqrt(d_scale)
        self.last_weights = None

    def _split(self, x):
        b, w, _ = x.shape
        x = ad.reshape(x, (b, w, self.heads, self.d_model // self.heads))
        return ad.permute(x, (0, 2, 1, 3))

    def __call__(self, h):
        b, w, d = h.shape
        if d != self.d_model:
            raise ShapeError(f"attention: expected last dim {self.d_model}, got {h.shape}")
        q, k, v = self._split(self.w_q(h)), self._split(self.w_k(h)), self._split(self.w_v(h))
        weights = ad.softmax(ad.scale(q @ ad.transpose(k), self.scale))
        self.last_weights = weights.data
        ctx = ad.permute(weights @ v, (0, 2, 1, 3))
        return self.w_o(ad.reshape(ctx, (b, w, d)))


class EncoderLayer(Module):
    def __init__(self, cfg, rng, dtype=np.float64):
        super().__init__()
        self.attn = MultiHeadAttention(cfg.d_model, cfg.heads, rng, dtype, cfg.scale_full_dmodel)
        self.drop1 = Dropout(cfg.dropout, rng)
        self.norm1 = LayerNorm(cfg.d_model, dtype)
        self.ff1 = Linear(cfg.d_model, cfg.d_ff, rng, dtype)
        self.ff2 = Linear(cfg.d_ff, cfg.d_model, rng, dtype)
        self.drop2 = Dropout(cfg.dropout, rng)
        self.norm2 = LayerNorm(cfg.d_model, dtype)

    def __call__(self, h):
        h1 = self.norm1(h + self.drop1(self.attn(h)))
        ff = self.ff2(ad.relu(self.ff1(h1)))
        return self.norm2(h1 + self.drop2(ff))


class Branch(Module):
    """Input projection, positional encoding and encoder stack for one modality."""

    def __init__(self, cfg, rng, dtype=np.float64):
        super().__init__()
        self.cfg = cfg
        self.input_proj = Linear(cfg.subcarriers, cfg.d_model, rng, dtype)
        self.input_drop = Dropout(cfg.dropout if cfg.input_dropout else 0.0, rng)
        self.encoder = [EncoderLayer(cfg, rng, dtype) for _ in range(cfg.encoder_layers)]
        self._pe = sinusoidal_pe(cfg.window, cfg.d_model).astype(dtype)

    def __call__(self, x):
        h = self.input_proj(x)
        if self.cfg.positional_encoding:
            h = h + Tensor(self._pe[: x.shape[1]])
        h = self.input_drop(h)
        for layer in self.encoder:
            h = layer(h)
        return ad.mean(h, axis=1)


class _Classifier(Module):
    kind = ""

    def __init__(self, cfg, seed=0, dtype=np.float64):
        super().__init__()
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.seed = seed

    def _inputs(self, amp, phase):
        amp = np.asarray(amp, dtype=self.dtype)
        phase = np.asarray(phase, dtype=self.dtype)
        if amp.ndim == 2:
            amp, phase = amp[None], phase[None]
        expected = (self.cfg.window, self.cfg.subcarriers)
        if amp.shape != phase.shape or amp.ndim != 3 or amp.shape[1:] != expected:
            raise ShapeError(
                f"{self.kind}: expected amplitude/phase of shape (B, {expected[0]}, {expected[1]}), "
                f"got {amp.shape} and {phase.shape}"
            )
        return amp, phase

    def predict(self, amp, phase, batch=256):
        amp = np.asarray(amp)
        phase = np.asarray(phase)
        was_training = self.training
        self.eval()
        try:
            logits = [
                self(amp[i : i + batch], phase[i : i + batch]).data for i in range(0, len(amp), batch)
            ]
        finally:
            self.train(was_training)
        return np.concatenate(logits, axis=0) if logits else np.zeros((0, self.cfg.classes))


class DualBranchTransformer(_Classifier):
    kind = "transformer"

    def __init__(self, cfg, seed=0, dtype=np.float64):
        super().__init__(cfg, seed, dtype)
        rng = np.random.default_rng(seed)
        self.amp_branch = Branch(cfg, rng, dtype)
        self.phase_branch = Branch(cfg, rng, dtype)
        self.head = Linear(2 * cfg.d_model, cfg.classes, rng, dtype)

    def __call__(self, amp, phase):
        amp, phase = self._inputs(amp, phase)
        z = ad.concat([self.amp_branch(Tensor(amp)), self.phase_branch(Tensor(phase))], axis=-1)
        return self.head(z)


class _MLPHead(Module):
    def __init__(self, n_in, cfg, rng, dtype):
        super().__init__()
        self.hidden = Linear(n_in, cfg.d_model, rng, dtype)
        self.drop = Dropout(cfg.dropout, rng)
        self.out = Linear(cfg.d_model, cfg.classes, rng, dtype)

    def __call__(self, x):
        return self.out(self.drop(ad.relu(self.hidden(x))))


class MLPBaseline(_Classifier):
    kind = "mlp"

    def __init__(self, cfg, seed=0, dtype=np.float64):
        super().__init__(cfg, seed, dtype)
        rng = np.random.default_rng(seed)
        self.head = _MLPHead(2 * cfg.subcarriers, cfg, rng, dtype)

    def __call__(self, amp, phase):
        amp, phase = self._inputs(amp, phase)
        feats = ad.concat([ad.mean(Tensor(amp), axis=1), ad.mean(Tensor(phase), axis=1)], axis=-1)
        return self.head(feats)


class Conv2d(Module):
    def __init__(self, c_in, c_out, rng, dtype=np.float64, kernel=3, padding=1):
        super().__init__()
        bound = 1.0 / math.sqrt(c_in * kernel * kernel)
        self.weight = _param(rng.uniform(-bound, bound, (c_out, c_in, kernel, kernel)), dtype)
        self.bias = _param(np.zeros(c_out), dtype)
        self.padding = padding

    def __call__(self, x):
        return ad.conv2d(x, self.weight, self.bias, self.padding)


def cnn_feature_shape(window, subcarriers, blocks=3):
    h, w = window, subcarriers
    for _ in range(blocks):
        h, w = h // 2, w // 2
    return h, w


class CNNBaseline(_Classifier):
    kind = "cnn"

    def __init__(self, cfg, seed=0, dtype=np.float64):
        super().__init__(cfg, seed, dtype)
        h, w = cnn_feature_shape(cfg.window, cfg.subcarriers)
        if h < 1 or w < 1:
            raise ShapeError(
                f"cnn: input {cfg.window}x{cfg.subcarriers} is too small for three 2x2 poolings"
            )
        rng = np.random.default_rng(seed)
        c = cfg.cnn_channels
        self.convs = [Conv2d(2, c, rng, dtype), Conv2d(c, c, rng, dtype), Conv2d(c, c, rng, dtype)]
        self.head = _MLPHead(c * h * w, cfg, rng, dtype)

    def __call__(self, amp, phase):
        amp, phase = self._inputs(amp, phase)
        x = Tensor(np.stack([amp, phase], axis=1))
        for conv in self.convs:
            x = ad.max_pool2d(ad.relu(conv(x)), 2)
        return self.head(ad.reshape(x, (x.shape[0], -1)))


MODELS = {"transformer": DualBranchTransformer, "mlp": MLPBaseline, "cnn": CNNBaseline}


def build_model(kind, cfg, seed=0, dtype=np.float64):
    try:
        cls = MODELS[kind]
    except KeyError:
        raise ValueError(f"unknown model type {kind!r}; choose from {sorted(MODELS)}") from None
    return cls(cfg, seed=seed, dtype=dtype)

