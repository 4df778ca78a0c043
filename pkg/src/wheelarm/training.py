"""Training recipe for the sequence baseline: windowed batches, Adam with
weight decay and gradient clipping, step-decay schedule, early stopping.
Deterministic for a fixed seed: trajectory split and batch order come from
seeded generators and all math is single-threaded numpy."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData
from .features import Normalization, TrajectoryFeatures, featurize
from .network import (
    SeqModelConfig,
    SeqModelParams,
    clip_gradients,
    forward,
    loss_and_gradients,
    mse_loss,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 16
    sequence_length: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    scheduler_factor: float = 0.1
    scheduler_step: int = 5
    grad_clip_max_norm: float = 1.0
    max_epochs: int = 100
    train_fraction: float = 0.8
    early_stopping_patience: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        for name in ("lr", "batch_size", "sequence_length", "scheduler_step",
                     "grad_clip_max_norm", "max_epochs", "early_stopping_patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.scheduler_factor ** (epoch // self.scheduler_step)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @staticmethod
    def from_dict(data: dict) -> "TrainConfig":
        known = {k: data[k] for k in TrainConfig.__dataclass_fields__ if k in data}
        unknown = set(data) - set(TrainConfig.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return TrainConfig(**known)


@dataclass
class TrainResult:
    params: SeqModelParams
    normalization: Normalization
    history: list  # per epoch: {"epoch", "lr", "train_loss", "val_loss"}
    best_epoch: int
    config: TrainConfig
    train_names: list
    val_names: list


def split_trajectories(featurized: list, fraction: float) -> tuple:
    """Deterministic trajectory-level split: sort by name, leading block
    trains, the rest validates; both sides stay non-empty."""
    ordered = sorted(featurized, key=lambda f: f.name)
    n_train = int(round(fraction * len(ordered)))
    n_train = min(max(n_train, 1), len(ordered) - 1)
    return ordered[:n_train], ordered[n_train:]


def _windows(featurized: list, seq_len: int) -> list:
    """(traj_index, start, length) with stride 1; trajectories shorter than
    seq_len contribute one truncated window so nothing is dropped."""
    out = []
    for ti, feats in enumerate(featurized):
        if feats.steps >= seq_len:
            out.extend((ti, s, seq_len) for s in range(feats.steps - seq_len + 1))
        else:
            out.append((ti, 0, feats.steps))
    return out


def _assemble(featurized, norm, windows):
    """Stack equal-length windows into one batch (inputs dict, targets)."""
    length = windows[0][2]
    assert all(w[2] == length for w in windows)
    rgb, depth, state, bag, ts, tgt = [], [], [], [], [], []
    for ti, start, n in windows:
        f = featurized[ti]
        sl = slice(start, start + n)
        rgb.append(f.rgb[sl])
        depth.append(f.depth[sl])
        state.append(norm.normalize_state(f.state[sl]))
        ts.append(f.timestamp[sl])
        bag.append(f.bag)
        tgt.append(norm.normalize_targets(f.targets[sl]))
    batch = {
        "rgb": np.stack(rgb).astype(np.float32),
        "depth": np.stack(depth).astype(np.float32),
        "state": np.stack(state).astype(np.float32),
        "bag": np.stack(bag).astype(np.float32),
        "timestamp": np.stack(ts).astype(np.float32),
    }
    return batch, np.stack(tgt).astype(np.float32)


def _batches(windows, batch_size, rng=None):
    """Group windows into batches of equal sequence length; shuffled when a
    generator is supplied, otherwise in deterministic order."""
    by_len = {}
    for w in windows:
        by_len.setdefault(w[2], []).append(w)
    batches = []
    for length in sorted(by_len):
        group = by_len[length]
        if rng is not None:
            group = [group[i] for i in rng.permutation(len(group))]
        batches.extend(group[i : i + batch_size] for i in range(0, len(group), batch_size))
    if rng is not None:
        batches = [batches[i] for i in rng.permutation(len(batches))]
    return batches


class Adam:
    """Adam with coupled weight decay (decay added to the gradient), matching
    the common reference implementation."""

    def __init__(self, params: SeqModelParams, config: TrainConfig):
        self.config = config
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, params: SeqModelParams, grads: dict, lr: float) -> None:
        cfg = self.config
        self.t += 1
        b1c = 1.0 - cfg.beta1**self.t
        b2c = 1.0 - cfg.beta2**self.t
        for name, p in params.tensors.items():
            g = grads[name] + np.asarray(cfg.weight_decay, dtype=p.dtype) * p
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p -= lr * (m / b1c) / (np.sqrt(v / b2c) + cfg.eps)


def _epoch_loss(featurized, norm, windows, params, batch_size) -> float:
    """Exact dataset MSE: per-batch losses weighted by element count."""
    total, count = 0.0, 0
    for group in _batches(windows, batch_size):
        batch, targets = _assemble(featurized, norm, group)
        loss = mse_loss(forward(params, batch), targets)
        total += loss * targets.size
        count += targets.size
    return total / count


def train(trajectories: list, config: TrainConfig = None, model_config: SeqModelConfig = None):
    """Train on aligned trajectories (or pre-featurized ones); returns the
    best-validation parameters plus the full epoch history."""
    config = config if config is not None else TrainConfig()
    if len(trajectories) < 2:
        raise InsufficientData("training needs at least 2 trajectories")
    featurized = [
        t if isinstance(t, TrajectoryFeatures) else featurize(t) for t in trajectories
    ]
    train_set, val_set = split_trajectories(featurized, config.train_fraction)
    norm = Normalization.fit(train_set)
    train_windows = _windows(train_set, config.sequence_length)
    val_windows = _windows(val_set, config.sequence_length)
    if not train_windows or not val_windows:
        raise InsufficientData("not enough aligned rows to form training windows")

    params = SeqModelParams.initialize(model_config, seed=config.seed, dtype=np.float32)
    optimizer = Adam(params, config)
    shuffle_rng = np.random.default_rng(config.seed)

    history = []
    best_val = np.inf
    best_epoch = -1
    best_params = params.copy()
    stall = 0
    for epoch in range(config.max_epochs):
        lr = config.lr_at(epoch)
        running, seen = 0.0, 0
        for group in _batches(train_windows, config.batch_size, rng=shuffle_rng):
            batch, targets = _assemble(featurized=train_set, norm=norm, windows=group)
            loss, grads = loss_and_gradients(params, batch, targets)
            clip_gradients(grads, config.grad_clip_max_norm)
            optimizer.step(params, grads, lr)
            running += loss * targets.size
            seen += targets.size
        val_loss = _epoch_loss(val_set, norm, val_windows, params, config.batch_size)
        history.append(
            {
                "epoch": epoch,
                "lr": lr,
                "train_loss": running / seen,
                "val_loss": val_loss,
            }
        )
        log.info(
            "epoch %d lr %.3g train %.6f val %.6f", epoch, lr, running / seen, val_loss
        )
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = params.copy()
            stall = 0
        else:
            stall += 1
            if stall >= config.early_stopping_patience:
                break

    return TrainResult(
        params=best_params,
        normalization=norm,
        history=history,
        best_epoch=best_epoch,
        config=config,
        train_names=[f.name for f in train_set],
        val_names=[f.name for f in val_set],
    )
