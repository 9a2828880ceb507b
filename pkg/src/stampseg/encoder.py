"""Single-stage dilated temporal convolution encoder with a frame classifier.

Architecture (all matrices stored ``in x out``)::

    z_0 = x @ in.W + in.b
    a_l = dilated_conv(z_{l-1}; layerL.conv.W, layerL.conv.b)    # dilation 2**l, zero padded
    z_l = z_{l-1} + relu(a_l) @ layerL.proj.W + layerL.proj.b
    hidden = z_L
    logits = hidden @ out.W + out.b,   probs = softmax(logits)

Gradients are derived by hand for this architecture; there is no autodiff.
Parameters are float64 in memory and float32 in checkpoints.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import log_softmax

from .core import FeatureSequence, ValidationError

Params = dict[str, np.ndarray]


@dataclass(frozen=True)
class EncoderConfig:
    in_dim: int
    num_classes: int
    hidden_dim: int = 64
    layers: int = 4
    kernel: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("in_dim", "num_classes", "hidden_dim", "layers", "kernel"):
            if getattr(self, name) < 1:
                raise ValidationError(f"encoder {name} must be >= 1")
        if self.kernel % 2 == 0:
            raise ValidationError(f"encoder kernel must be odd, got {self.kernel}")

    def dilation(self, layer: int) -> int:
        return 2 ** layer

    @property
    def receptive_radius(self) -> int:
        """Frames on each side that can influence one output frame."""
        return sum(self.dilation(l) * (self.kernel - 1) // 2 for l in range(self.layers))

    def shapes(self) -> dict[str, tuple[int, ...]]:
        H = self.hidden_dim
        shapes = {"in.W": (self.in_dim, H), "in.b": (H,)}
        for l in range(self.layers):
            shapes[f"layer{l}.conv.W"] = (self.kernel, H, H)
            shapes[f"layer{l}.conv.b"] = (H,)
            shapes[f"layer{l}.proj.W"] = (H, H)
            shapes[f"layer{l}.proj.b"] = (H,)
        shapes["out.W"] = (H, self.num_classes)
        shapes["out.b"] = (self.num_classes,)
        return shapes


def init_params(cfg: EncoderConfig) -> Params:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    rng = np.random.default_rng(cfg.seed)
    params = {}
    for name, shape in cfg.shapes().items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
            continue
        fan_in = int(np.prod(shape[:-1]))
        bound = 1.0 / np.sqrt(fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def num_parameters(params: Params) -> int:
    return sum(p.size for p in params.values())


def _shift(z: np.ndarray, offset: int) -> np.ndarray:
    """``out[t] = z[t + offset]``, zero outside the sequence."""
    out = np.zeros_like(z)
    T = len(z)
    if offset >= 0:
        if offset < T:
            out[:T - offset] = z[offset:]
    elif -offset < T:
        out[-offset:] = z[:T + offset]
    return out


def _offsets(cfg: EncoderConfig, layer: int) -> list[int]:
    half = (cfg.kernel - 1) // 2
    d = cfg.dilation(layer)
    return [(k - half) * d for k in range(cfg.kernel)]


@dataclass
class ForwardCache:
    x: np.ndarray
    streams: list[np.ndarray]     # z_0 .. z_L
    pre_acts: list[np.ndarray]    # a_1 .. a_L
    hidden: np.ndarray
    logits: np.ndarray
    log_probs: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)


def _check_params(params: Params, cfg: EncoderConfig) -> None:
    for name, shape in cfg.shapes().items():
        if name not in params:
            raise ValidationError(f"missing parameter {name}")
        if params[name].shape != shape:
            raise ValidationError(f"parameter {name} has shape {params[name].shape}, expected {shape}")


def forward_cache(params: Params, cfg: EncoderConfig, f: FeatureSequence | np.ndarray) -> ForwardCache:
    x = f.as_float64() if isinstance(f, FeatureSequence) else np.asarray(f, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.in_dim:
        raise ValidationError(f"features have shape {x.shape}, encoder expects D={cfg.in_dim}")
    z = x @ params["in.W"] + params["in.b"]
    streams, pre_acts = [z], []
    for l in range(cfg.layers):
        W = params[f"layer{l}.conv.W"]
        a = params[f"layer{l}.conv.b"] + sum(_shift(z, o) @ W[k] for k, o in enumerate(_offsets(cfg, l)))
        z = z + np.maximum(a, 0.0) @ params[f"layer{l}.proj.W"] + params[f"layer{l}.proj.b"]
        pre_acts.append(a)
        streams.append(z)
    logits = z @ params["out.W"] + params["out.b"]
    return ForwardCache(x, streams, pre_acts, z, logits, log_softmax(logits, axis=1))


def forward(params: Params, cfg: EncoderConfig, f: FeatureSequence | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(hidden, probs)`` of shapes ``(T, hidden_dim)`` and ``(T, C)``."""
    cache = forward_cache(params, cfg, f)
    return cache.hidden, cache.probs


def backward(params: Params, cfg: EncoderConfig, cache: ForwardCache,
             grad_hidden: np.ndarray | None = None, grad_logits: np.ndarray | None = None) -> Params:
    """Parameter gradients given upstream gradients on ``hidden`` and on ``logits``."""
    T = len(cache.x)
    if grad_hidden is None:
        grad_hidden = np.zeros((T, cfg.hidden_dim))
    if grad_logits is None:
        grad_logits = np.zeros((T, cfg.num_classes))
    if grad_hidden.shape != (T, cfg.hidden_dim):
        raise ValidationError(f"grad_hidden shape {grad_hidden.shape} != {(T, cfg.hidden_dim)}")
    if grad_logits.shape != (T, cfg.num_classes):
        raise ValidationError(f"grad_logits shape {grad_logits.shape} != {(T, cfg.num_classes)}")

    grads: Params = {}
    grads["out.W"] = cache.hidden.T @ grad_logits
    grads["out.b"] = grad_logits.sum(axis=0)
    dz = grad_hidden + grad_logits @ params["out.W"].T
    for l in reversed(range(cfg.layers)):
        z_prev, a = cache.streams[l], cache.pre_acts[l]
        r = np.maximum(a, 0.0)
        grads[f"layer{l}.proj.W"] = r.T @ dz
        grads[f"layer{l}.proj.b"] = dz.sum(axis=0)
        da = (dz @ params[f"layer{l}.proj.W"].T) * (a > 0)
        W = params[f"layer{l}.conv.W"]
        dW = np.empty_like(W)
        dz_prev = dz.copy()
        for k, o in enumerate(_offsets(cfg, l)):
            dW[k] = _shift(z_prev, o).T @ da
            dz_prev += _shift(da @ W[k].T, -o)
        grads[f"layer{l}.conv.W"] = dW
        grads[f"layer{l}.conv.b"] = da.sum(axis=0)
        dz = dz_prev
    grads["in.W"] = cache.x.T @ dz
    grads["in.b"] = dz.sum(axis=0)
    return {name: grads[name] for name in params}


class Adam:
    """Adam with bias correction; updates parameters in place."""

    def __init__(self, lr: float = 5e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: Params = {}
        self.v: Params = {}
        self.t = 0

    def step(self, params: Params, grads: Params) -> None:
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {name}")
            if g.shape != params[name].shape:
                raise ValidationError(f"gradient for {name} has shape {g.shape}, expected {params[name].shape}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[name] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


# Checkpoint layout:
#   b"TSCK"  magic
#   u8       version (1)
#   u32 LE   header length in bytes
#   header   UTF-8 JSON: {"config": EncoderConfig fields, "params": [[name, [shape...]], ...]}
#   payload  float32 LE values of each parameter in header order, C order
CKPT_MAGIC = b"TSCK"
CKPT_VERSION = 1


def save_checkpoint(path: str | Path, params: Params, cfg: EncoderConfig) -> None:
    names = list(cfg.shapes())
    header = json.dumps({"config": asdict(cfg),
                         "params": [[n, list(params[n].shape)] for n in names]},
                        sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC + struct.pack("<BI", CKPT_VERSION, len(header)) + header)
        for n in names:
            fh.write(np.ascontiguousarray(params[n], dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[Params, EncoderConfig]:
    raw = Path(path).read_bytes()
    if raw[:4] != CKPT_MAGIC:
        raise ValidationError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<BI", raw, 4)
    if version != CKPT_VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[9:9 + hlen])
    cfg = EncoderConfig(**header["config"])
    offset = 9 + hlen
    params = {}
    for name, shape in header["params"]:
        count = int(np.prod(shape))
        end = offset + 4 * count
        if end > len(raw):
            raise ValidationError(f"{path}: truncated at parameter {name}")
        params[name] = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset = end
    if offset != len(raw):
        raise ValidationError(f"{path}: {len(raw) - offset} trailing bytes")
    _check_params(params, cfg)
    return params, cfg
