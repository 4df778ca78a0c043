"""From-scratch multimodal sequence network with analytic gradients.

Per step: linear projections of the downsampled image, depth, and
(normalized) proprioceptive vector, a mean-pooled hashed instruction
embedding, and a timestamp embedding are concatenated and pushed through a
two-layer rectified fusion block into a single LSTM layer, whose hidden
state feeds a linear 16-channel next-pose head. Everything is plain numpy;
the backward pass is hand-derived and checked against finite differences.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .features import IMAGE_H, IMAGE_W, STATE_DIM, TARGET_DIM, VOCAB_SIZE

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SeqModelConfig:
    rgb_dim: int = IMAGE_H * IMAGE_W * 3
    depth_dim: int = IMAGE_H * IMAGE_W
    state_dim: int = STATE_DIM
    vocab_size: int = VOCAB_SIZE
    embed_dim: int = 32
    rgb_out: int = 64
    depth_out: int = 32
    state_out: int = 64
    time_out: int = 16
    fusion_dim: int = 128
    hidden_dim: int = 128
    output_dim: int = TARGET_DIM

    @property
    def fusion_in(self) -> int:
        return self.rgb_out + self.depth_out + self.state_out + self.embed_dim + self.time_out

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @staticmethod
    def from_dict(data: dict) -> "SeqModelConfig":
        return SeqModelConfig(**{k: int(v) for k, v in data.items()})


def _tensor_shapes(cfg: SeqModelConfig) -> dict:
    h = cfg.hidden_dim
    return {
        "rgb_w": (cfg.rgb_dim, cfg.rgb_out),
        "rgb_b": (cfg.rgb_out,),
        "depth_w": (cfg.depth_dim, cfg.depth_out),
        "depth_b": (cfg.depth_out,),
        "state_w": (cfg.state_dim, cfg.state_out),
        "state_b": (cfg.state_out,),
        "state_gain": (cfg.state_out,),
        "state_bias": (cfg.state_out,),
        "embed": (cfg.vocab_size, cfg.embed_dim),
        "time_w": (1, cfg.time_out),
        "time_b": (cfg.time_out,),
        "fuse1_w": (cfg.fusion_in, cfg.fusion_dim),
        "fuse1_b": (cfg.fusion_dim,),
        "fuse2_w": (cfg.fusion_dim, cfg.fusion_dim),
        "fuse2_b": (cfg.fusion_dim,),
        "lstm_wx": (cfg.fusion_dim, 4 * h),
        "lstm_wh": (h, 4 * h),
        "lstm_b": (4 * h,),
        "head_w": (h, cfg.output_dim),
        "head_b": (cfg.output_dim,),
    }


class SeqModelParams:
    """Named parameter tensors in a fixed order (the order of _tensor_shapes)."""

    def __init__(self, config: SeqModelConfig, tensors: dict):
        self.config = config
        self.tensors = tensors

    @staticmethod
    def initialize(config: SeqModelConfig = None, seed: int = 0, dtype=np.float32):
        config = config if config is not None else SeqModelConfig()
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, shape in _tensor_shapes(config).items():
            if name == "embed":
                t = rng.normal(0.0, 0.02, shape)
            elif name == "state_gain":
                t = np.ones(shape)
            elif name.endswith("_w") or name == "lstm_wx" or name == "lstm_wh":
                t = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), shape)
            else:
                t = np.zeros(shape)
            tensors[name] = t.astype(dtype)
        # open forget gates at init; standard LSTM conditioning
        h = config.hidden_dim
        tensors["lstm_b"][h : 2 * h] = 1.0
        params = SeqModelParams(config, tensors)
        log.info("sequence model initialized: %d parameters", params.n_params)
        return params

    @property
    def n_params(self) -> int:
        return sum(t.size for t in self.tensors.values())

    @property
    def dtype(self):
        return self.tensors["head_w"].dtype

    def astype(self, dtype) -> "SeqModelParams":
        return SeqModelParams(
            self.config, {k: v.astype(dtype) for k, v in self.tensors.items()}
        )

    def copy(self) -> "SeqModelParams":
        return SeqModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_batch(cfg: SeqModelConfig, batch: dict) -> tuple:
    try:
        rgb, depth, state = batch["rgb"], batch["depth"], batch["state"]
        bag, ts = batch["bag"], batch["timestamp"]
    except KeyError as exc:
        raise ShapeMismatch(f"batch missing field {exc.args[0]!r}")
    if rgb.ndim != 3 or depth.ndim != 3 or state.ndim != 3 or ts.ndim != 3:
        raise ShapeMismatch("sequence inputs must be (batch, steps, dim)")
    b, t = rgb.shape[:2]
    expect = {
        "rgb": (b, t, cfg.rgb_dim),
        "depth": (b, t, cfg.depth_dim),
        "state": (b, t, cfg.state_dim),
        "timestamp": (b, t, 1),
        "bag": (b, cfg.vocab_size),
    }
    for key, shape in expect.items():
        if batch[key].shape != shape:
            raise ShapeMismatch(f"{key}: expected {shape}, found {batch[key].shape}")
    if t < 1:
        raise ShapeMismatch("sequence length must be at least 1")
    return b, t


def forward(params: SeqModelParams, batch: dict, cache: bool = False):
    """Predict (batch, steps, 16); optionally keep intermediates for backward."""
    cfg = params.config
    b, t = _check_batch(cfg, batch)
    p = params.tensors
    dtype = params.dtype
    rgb = batch["rgb"].astype(dtype, copy=False)
    depth = batch["depth"].astype(dtype, copy=False)
    state = batch["state"].astype(dtype, copy=False)
    bag = batch["bag"].astype(dtype, copy=False)
    ts = batch["timestamp"].astype(dtype, copy=False)

    lang = bag @ p["embed"]  # (b, embed_dim), constant across steps
    h_dim = cfg.hidden_dim
    h = np.zeros((b, h_dim), dtype=dtype)
    c = np.zeros((b, h_dim), dtype=dtype)
    y = np.empty((b, t, cfg.output_dim), dtype=dtype)
    steps = []
    for k in range(t):
        su = state[:, k] @ p["state_w"] + p["state_b"]
        z = np.concatenate(
            [
                rgb[:, k] @ p["rgb_w"] + p["rgb_b"],
                depth[:, k] @ p["depth_w"] + p["depth_b"],
                p["state_gain"] * su + p["state_bias"],
                lang,
                ts[:, k] @ p["time_w"] + p["time_b"],
            ],
            axis=1,
        )
        a1 = z @ p["fuse1_w"] + p["fuse1_b"]
        h1 = np.maximum(a1, 0.0)
        a2 = h1 @ p["fuse2_w"] + p["fuse2_b"]
        h2 = np.maximum(a2, 0.0)
        gates = h2 @ p["lstm_wx"] + h @ p["lstm_wh"] + p["lstm_b"]
        gi = _sigmoid(gates[:, :h_dim])
        gf = _sigmoid(gates[:, h_dim : 2 * h_dim])
        gg = np.tanh(gates[:, 2 * h_dim : 3 * h_dim])
        go = _sigmoid(gates[:, 3 * h_dim :])
        c_prev, h_prev = c, h
        c = gf * c_prev + gi * gg
        tc = np.tanh(c)
        h = go * tc
        y[:, k] = h @ p["head_w"] + p["head_b"]
        if cache:
            steps.append((su, z, a1, h1, a2, h2, gi, gf, gg, go, c_prev, h_prev, c, tc, h))
    if not cache:
        return y
    return y, (lang, steps, (rgb, depth, state, bag, ts))


def mse_loss(pred: np.ndarray, targets: np.ndarray) -> float:
    if pred.shape != targets.shape:
        raise ShapeMismatch(f"predictions {pred.shape} vs targets {targets.shape}")
    diff = pred - targets
    return float(np.mean(diff * diff))


def loss_and_gradients(params: SeqModelParams, batch: dict, targets: np.ndarray):
    """MSE over all steps and channels, with gradients for every tensor."""
    cfg = params.config
    p = params.tensors
    y, (lang, steps, (rgb, depth, state, bag, ts)) = forward(params, batch, cache=True)
    targets = targets.astype(params.dtype, copy=False)
    loss = mse_loss(y, targets)
    b, t, _ = y.shape
    h_dim = cfg.hidden_dim
    dy = (2.0 / y.size) * (y - targets)

    g = params.zeros_like()
    dlang = np.zeros_like(lang)
    dh_next = np.zeros((b, h_dim), dtype=params.dtype)
    dc_next = np.zeros((b, h_dim), dtype=params.dtype)
    splits = np.cumsum([cfg.rgb_out, cfg.depth_out, cfg.state_out, cfg.embed_dim])

    for k in reversed(range(t)):
        su, z, a1, h1, a2, h2, gi, gf, gg, go, c_prev, h_prev, c, tc, h = steps[k]
        dyk = dy[:, k]
        g["head_w"] += h.T @ dyk
        g["head_b"] += dyk.sum(axis=0)
        dh = dyk @ p["head_w"].T + dh_next

        dgo = dh * tc
        dc = dh * go * (1.0 - tc * tc) + dc_next
        dgf = dc * c_prev
        dgi = dc * gg
        dgg = dc * gi
        dc_next = dc * gf
        da = np.concatenate(
            [
                dgi * gi * (1.0 - gi),
                dgf * gf * (1.0 - gf),
                dgg * (1.0 - gg * gg),
                dgo * go * (1.0 - go),
            ],
            axis=1,
        )
        g["lstm_wx"] += h2.T @ da
        g["lstm_wh"] += h_prev.T @ da
        g["lstm_b"] += da.sum(axis=0)
        dh_next = da @ p["lstm_wh"].T
        dh2 = da @ p["lstm_wx"].T

        da2 = dh2 * (a2 > 0)
        g["fuse2_w"] += h1.T @ da2
        g["fuse2_b"] += da2.sum(axis=0)
        dh1 = da2 @ p["fuse2_w"].T
        da1 = dh1 * (a1 > 0)
        g["fuse1_w"] += z.T @ da1
        g["fuse1_b"] += da1.sum(axis=0)
        dz = da1 @ p["fuse1_w"].T

        dv, dd, ds, dlang_k, dtt = np.split(dz, splits, axis=1)
        g["rgb_w"] += rgb[:, k].T @ dv
        g["rgb_b"] += dv.sum(axis=0)
        g["depth_w"] += depth[:, k].T @ dd
        g["depth_b"] += dd.sum(axis=0)
        g["state_gain"] += (ds * su).sum(axis=0)
        g["state_bias"] += ds.sum(axis=0)
        dsu = ds * p["state_gain"]
        g["state_w"] += state[:, k].T @ dsu
        g["state_b"] += dsu.sum(axis=0)
        g["time_w"] += ts[:, k].T @ dtt
        g["time_b"] += dtt.sum(axis=0)
        dlang += dlang_k

    g["embed"] += bag.T @ dlang
    return loss, g


def gradient_norm(grads: dict) -> float:
    total = 0.0
    for t in grads.values():
        total += float(np.sum(np.asarray(t, dtype=np.float64) ** 2))
    return float(np.sqrt(total))


def clip_gradients(grads: dict, max_norm: float) -> float:
    """Scale all gradients so the global norm is at most max_norm; returns
    the pre-clip norm."""
    norm = gradient_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for t in grads.values():
            t *= np.asarray(scale, dtype=t.dtype)
    return norm
