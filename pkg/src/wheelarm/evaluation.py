"""Per-channel evaluation of a trained sequence model.

For every test trajectory the model predicts the full sequence; MSE and MAE
are computed per channel in original units, and the report keeps the min and
max of each metric across trajectories, one row per output channel, plus the
raw predicted-vs-truth series for overlay plots.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import Normalization, TARGET_CHANNELS, TrajectoryFeatures, featurize
from .network import SeqModelParams, forward


@dataclass
class SeqModel:
    """Trained parameters plus the statistics needed to undo normalization."""

    params: SeqModelParams
    normalization: Normalization

    def predict(self, feats: TrajectoryFeatures) -> np.ndarray:
        """Denormalized (steps, 16) prediction for one trajectory."""
        norm = self.normalization
        batch = {
            "rgb": feats.rgb[None].astype(np.float32),
            "depth": feats.depth[None].astype(np.float32),
            "state": norm.normalize_state(feats.state)[None].astype(np.float32),
            "bag": feats.bag[None].astype(np.float32),
            "timestamp": feats.timestamp[None].astype(np.float32),
        }
        out = forward(self.params, batch)[0].astype(np.float64)
        return norm.denormalize_targets(out)


@dataclass
class EvalReport:
    channels: list  # 16 dicts: channel, min_mse, max_mse, min_mae, max_mae
    per_trajectory: dict  # name -> {"mse": [16], "mae": [16]}
    overlays: dict  # name -> {"timestamp", "truth", "predicted"}


def evaluate(model, trajectories: list) -> EvalReport:
    """model: anything with predict(TrajectoryFeatures) -> (steps, 16)."""
    per_traj = {}
    overlays = {}
    for traj in trajectories:
        feats = traj if isinstance(traj, TrajectoryFeatures) else featurize(traj)
        pred = np.asarray(model.predict(feats), dtype=np.float64)
        truth = feats.targets
        err = pred - truth
        per_traj[feats.name] = {
            "mse": np.mean(err * err, axis=0).tolist(),
            "mae": np.mean(np.abs(err), axis=0).tolist(),
        }
        overlays[feats.name] = {
            "timestamp": feats.timestamp.ravel().tolist(),
            "truth": truth.tolist(),
            "predicted": pred.tolist(),
        }
    mse = np.array([m["mse"] for m in per_traj.values()])
    mae = np.array([m["mae"] for m in per_traj.values()])
    channels = [
        {
            "channel": name,
            "min_mse": float(mse[:, i].min()),
            "max_mse": float(mse[:, i].max()),
            "min_mae": float(mae[:, i].min()),
            "max_mae": float(mae[:, i].max()),
        }
        for i, name in enumerate(TARGET_CHANNELS)
    ]
    return EvalReport(channels=channels, per_trajectory=per_traj, overlays=overlays)


def write_report_csv(report: EvalReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["channel", "min_mse", "max_mse", "min_mae", "max_mae"])
        for row in report.channels:
            writer.writerow(
                [row["channel"], row["min_mse"], row["max_mse"], row["min_mae"], row["max_mae"]]
            )


def write_overlays(report: EvalReport, out_dir) -> list:
    """One JSON per trajectory with the truth/prediction series per channel."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, series in sorted(report.overlays.items()):
        payload = {"trajectory": name, "channels": list(TARGET_CHANNELS), **series}
        p = out_dir / f"{name}_overlay.json"
        p.write_text(json.dumps(payload) + "\n")
        written.append(p)
    return written
