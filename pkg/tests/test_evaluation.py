"""Evaluation metrics, report emission, and the model file format."""

import csv
import json

import numpy as np
import pytest

from wheelarm.align import align_recording
from wheelarm.demos import mustard_variants
from wheelarm.errors import SchemaError
from wheelarm.evaluation import SeqModel, evaluate, write_overlays, write_report_csv
from wheelarm.features import TARGET_CHANNELS, featurize
from wheelarm.model_io import load_model, save_model
from wheelarm.session import scripted_replay
from wheelarm.training import TrainConfig, train


@pytest.fixture(scope="module")
def dataset():
    scripts = mustard_variants(4, seed=33)
    return [align_recording(scripted_replay(s).recording) for s in scripts]


@pytest.fixture(scope="module")
def trained(dataset):
    result = train(dataset, TrainConfig(max_epochs=4, seed=2))
    return SeqModel(result.params, result.normalization), result


class PerfectOracle:
    """Stub predictor: echoes the ground-truth targets."""

    def predict(self, feats):
        return feats.targets.copy()


class ShiftOracle:
    """Ground truth plus a constant 0.1 offset on every channel."""

    def predict(self, feats):
        return feats.targets + 0.1


class TestMetrics:
    def test_perfect_oracle_scores_exactly_zero(self, dataset):
        report = evaluate(PerfectOracle(), dataset[:2])
        for row in report.channels:
            assert row["min_mse"] == 0.0 and row["max_mse"] == 0.0
            assert row["min_mae"] == 0.0 and row["max_mae"] == 0.0

    def test_sixteen_rows_in_channel_order(self, dataset):
        report = evaluate(PerfectOracle(), dataset[:1])
        assert [r["channel"] for r in report.channels] == list(TARGET_CHANNELS)

    def test_min_max_across_trajectories(self, dataset):
        report = evaluate(PerfectOracle(), dataset[:2])
        assert len(report.per_trajectory) == 2
        model_report = evaluate(ShiftOracle(), dataset[:2])
        for row in model_report.channels:
            assert row["min_mse"] == pytest.approx(0.01)
            assert row["min_mae"] == pytest.approx(0.1)
            assert row["min_mse"] <= row["max_mse"]

    def test_trained_model_constant_z_pattern(self, trained, dataset):
        model, _ = trained
        report = evaluate(model, dataset)
        by_name = {r["channel"]: r for r in report.channels}
        wz = by_name["W Z-Position (m)"]["max_mse"]
        wx = by_name["W X-Position (m)"]["max_mse"]
        assert wz < wx * 1e-6
        assert all(np.isfinite(list(r.values())[1:]).all() for r in report.channels)

    def test_metrics_in_original_units(self, trained, dataset):
        model, _ = trained
        feats = featurize(dataset[0])
        pred = model.predict(feats)
        manual_mse = np.mean((pred - feats.targets) ** 2, axis=0)
        report = evaluate(model, dataset[:1])
        got = np.array([r["min_mse"] for r in report.channels])
        assert np.allclose(got, manual_mse, rtol=1e-12)


class TestReportFiles:
    def test_csv_columns_and_rows(self, dataset, tmp_path):
        report = evaluate(PerfectOracle(), dataset[:1])
        path = tmp_path / "report.csv"
        write_report_csv(report, path)
        with path.open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["channel", "min_mse", "max_mse", "min_mae", "max_mae"]
        assert len(rows) == 17
        assert rows[1][0] == "EE X-Position (m)"

    def test_overlays_one_file_per_trajectory(self, dataset, tmp_path):
        report = evaluate(PerfectOracle(), dataset[:2])
        written = write_overlays(report, tmp_path / "overlays")
        assert len(written) == 2
        doc = json.loads(written[0].read_text())
        assert doc["channels"] == list(TARGET_CHANNELS)
        n = len(doc["timestamp"])
        assert np.asarray(doc["truth"]).shape == (n, 16)
        assert doc["truth"] == doc["predicted"]


class TestModelFile:
    def test_round_trip_bitwise(self, trained, dataset, tmp_path):
        model, result = trained
        path = save_model(model, tmp_path / "m.json", seed=2,
                          train_config=result.config.to_dict())
        loaded = load_model(path)
        feats = featurize(dataset[0])
        assert np.array_equal(model.predict(feats), loaded.predict(feats))
        assert loaded.params.n_params == model.params.n_params

    def test_bad_format_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"format": "other/1"}))
        with pytest.raises(SchemaError, match="format"):
            load_model(p)
        p.write_text("{not json")
        with pytest.raises(SchemaError):
            load_model(p)

    def test_shape_mismatch_rejected(self, trained, tmp_path):
        model, _ = trained
        path = save_model(model, tmp_path / "m.json")
        doc = json.loads(path.read_text())
        doc["tensors"]["head_b"]["shape"] = [17]
        path.write_text(json.dumps(doc))
        with pytest.raises(SchemaError, match="head_b"):
            load_model(path)

    def test_missing_tensor_rejected(self, trained, tmp_path):
        model, _ = trained
        path = save_model(model, tmp_path / "m.json")
        doc = json.loads(path.read_text())
        del doc["tensors"]["lstm_wx"]
        path.write_text(json.dumps(doc))
        with pytest.raises(SchemaError, match="lstm_wx"):
            load_model(path)
