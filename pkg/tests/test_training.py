"""Training recipe: schedule, determinism, early stopping, learnability."""

import numpy as np
import pytest

from wheelarm.align import align_recording
from wheelarm.demos import mustard_variants
from wheelarm.errors import InsufficientData
from wheelarm.features import TrajectoryFeatures, featurize
from wheelarm.network import SeqModelConfig
from wheelarm.session import scripted_replay
from wheelarm.training import TrainConfig, split_trajectories, train

TINY = SeqModelConfig(
    rgb_dim=8,
    depth_dim=4,
    state_dim=5,
    vocab_size=16,
    embed_dim=4,
    rgb_out=4,
    depth_out=3,
    state_out=4,
    time_out=2,
    fusion_dim=6,
    hidden_dim=6,
    output_dim=16,
)


def synth_feats(name, steps, seed):
    rng = np.random.default_rng(seed)
    return TrajectoryFeatures(
        name=name,
        rgb=rng.uniform(0, 1, (steps, TINY.rgb_dim)),
        depth=rng.uniform(0, 5, (steps, TINY.depth_dim)),
        bag=np.abs(rng.normal(0, 1, TINY.vocab_size)),
        state=rng.normal(0, 1, (steps, TINY.state_dim)),
        timestamp=(np.arange(steps) / 10.0).reshape(-1, 1),
        targets=rng.normal(0, 1, (steps, TINY.output_dim)),
    )


def synth_dataset(n=4, steps=30):
    return [synth_feats(f"traj_{i:02d}", steps, seed=i) for i in range(n)]


@pytest.fixture(scope="module")
def mustard_dataset():
    scripts = mustard_variants(4, seed=21)
    return [align_recording(scripted_replay(s).recording) for s in scripts]


class TestConfig:
    def test_defaults_match_recipe(self):
        cfg = TrainConfig()
        assert (cfg.lr, cfg.weight_decay, cfg.batch_size) == (1e-4, 1e-4, 16)
        assert (cfg.beta1, cfg.beta2, cfg.eps) == (0.9, 0.999, 1e-8)
        assert (cfg.scheduler_factor, cfg.scheduler_step) == (0.1, 5)
        assert cfg.sequence_length == 20
        assert cfg.grad_clip_max_norm == 1.0
        assert cfg.early_stopping_patience == 3

    def test_lr_schedule_exact(self):
        cfg = TrainConfig(lr=1e-4)
        for epoch in range(23):
            assert cfg.lr_at(epoch) == 1e-4 * 0.1 ** (epoch // 5)

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(train_fraction=1.0)
        with pytest.raises(ValueError):
            TrainConfig(max_epochs=0)
        with pytest.raises(ValueError):
            TrainConfig.from_dict({"lr": 1e-3, "bogus": 1})
        assert TrainConfig.from_dict({"lr": 1e-3}).lr == 1e-3


class TestSplit:
    def test_split_sorted_by_name(self):
        feats = [synth_feats(n, 25, 0) for n in ("c", "a", "d", "b", "e")]
        train_set, val_set = split_trajectories(feats, 0.8)
        assert [f.name for f in train_set] == ["a", "b", "c", "d"]
        assert [f.name for f in val_set] == ["e"]

    def test_both_sides_non_empty(self):
        feats = [synth_feats(n, 25, 0) for n in ("a", "b")]
        train_set, val_set = split_trajectories(feats, 0.99)
        assert len(train_set) == 1 and len(val_set) == 1


class TestTrainLoop:
    def test_single_epoch_history(self):
        result = train(synth_dataset(), TrainConfig(max_epochs=1, seed=0), TINY)
        assert len(result.history) == 1
        entry = result.history[0]
        assert set(entry) == {"epoch", "lr", "train_loss", "val_loss"}
        assert entry["epoch"] == 0 and entry["lr"] == 1e-4
        assert result.best_epoch == 0

    def test_same_seed_bit_identical_history(self):
        cfg = TrainConfig(max_epochs=3, seed=9)
        a = train(synth_dataset(), cfg, TINY)
        b = train(synth_dataset(), cfg, TINY)
        assert a.history == b.history
        for name in a.params.tensors:
            assert np.array_equal(a.params.tensors[name], b.params.tensors[name])

    def test_different_seed_differs(self):
        a = train(synth_dataset(), TrainConfig(max_epochs=2, seed=1), TINY)
        b = train(synth_dataset(), TrainConfig(max_epochs=2, seed=2), TINY)
        assert a.history != b.history

    def test_history_records_scheduled_lr(self):
        cfg = TrainConfig(max_epochs=12, seed=0, early_stopping_patience=99)
        result = train(synth_dataset(), cfg, TINY)
        assert len(result.history) == 12
        for entry in result.history:
            assert entry["lr"] == cfg.lr_at(entry["epoch"])

    def test_early_stopping_on_random_targets(self):
        # random targets cannot keep improving across many epochs; the loop
        # must stop within patience of the best epoch
        cfg = TrainConfig(max_epochs=60, seed=3, early_stopping_patience=2)
        result = train(synth_dataset(steps=25), cfg, TINY)
        assert len(result.history) < 60
        last = len(result.history) - 1
        assert last - result.best_epoch == cfg.early_stopping_patience

    def test_insufficient_data(self):
        with pytest.raises(InsufficientData):
            train([synth_feats("only", 30, 0)], TrainConfig(max_epochs=1), TINY)

    def test_short_trajectories_contribute_truncated_windows(self):
        feats = [synth_feats(f"t{i}", 6, i) for i in range(3)]  # < seq_len
        result = train(feats, TrainConfig(max_epochs=1, seed=0), TINY)
        assert len(result.history) == 1
        assert np.isfinite(result.history[0]["train_loss"])

    def test_split_names_recorded(self, mustard_dataset):
        result = train(mustard_dataset, TrainConfig(max_epochs=1, seed=0))
        assert result.train_names == ["mustard_00", "mustard_01", "mustard_02"]
        assert result.val_names == ["mustard_03"]

    def test_learns_scripted_data(self, mustard_dataset):
        result = train(mustard_dataset, TrainConfig(max_epochs=8, seed=5))
        first = result.history[0]["val_loss"]
        best = min(h["val_loss"] for h in result.history)
        assert best < 0.6 * first
        assert result.history[-1]["train_loss"] < result.history[0]["train_loss"]
