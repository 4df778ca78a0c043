"""End-to-end subcommand tests; everything runs headless through main(argv)."""

import json
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from wheelarm.cli import _split_rows, main
from wheelarm.features import featurize
from wheelarm.model_io import load_model
from wheelarm.recorder import read_container
from wheelarm.robot import default_robot
from wheelarm.se3 import poe_fk, quat_from_matrix

DATA = resources.files("wheelarm") / "data"
TINY_TRAIN = {"max_epochs": 2, "batch_size": 8, "sequence_length": 10}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One replayed + aligned shipped script, shared by the read-only tests."""
    root = tmp_path_factory.mktemp("pipeline")
    assert main(["replay", "pick_mustard", "--out", str(root)]) == 0
    raw = root / "pick_mustard.watr"
    assert main(["align", str(raw), "--out", str(root)]) == 0
    return {"root": root, "raw": raw, "aligned": root / "pick_mustard.aligned.watr"}


class TestUsage:
    def test_version_prints_formats(self, capsys):
        assert main(["--version"]) == 0
        out = capsys.readouterr().out
        assert "wheelarm-dataset/1" in out
        assert "wheelarm-model/1" in out

    def test_unknown_flag_exits_2(self):
        assert main(["replay", "--nope", "x"]) == 2

    def test_missing_subcommand_exits_2(self):
        assert main([]) == 2

    def test_serve_replay_excludes_port(self, tmp_path):
        code = main(
            ["serve", "--replay", "pick_mustard", "--port", "9", "--out", str(tmp_path)]
        )
        assert code == 2


class TestReplay:
    def test_shipped_name_writes_container(self, pipeline, capsys):
        rec = read_container(pipeline["raw"])
        assert rec.manifest.file_name == "pick_mustard"
        assert rec.sample_count > 1000

    def test_script_file_path(self, tmp_path):
        src = DATA / "scripts" / "pick_coke.json"
        script = tmp_path / "copy.json"
        script.write_text(src.read_text())
        assert main(["replay", str(script), "--out", str(tmp_path)]) == 0
        assert (tmp_path / "pick_coke.watr").is_dir()

    def test_unknown_script_exits_1(self, tmp_path, capsys):
        assert main(["replay", "no_such_script", "--out", str(tmp_path)]) == 1
        assert "SchemaError" in capsys.readouterr().err

    def test_seed_override(self, tmp_path):
        assert main(["--seed", "77", "replay", "pick_mustard", "--out", str(tmp_path)]) == 0
        assert read_container(tmp_path / "pick_mustard.watr").manifest.seed == 77

    def test_serve_replay_headless(self, tmp_path):
        assert main(["serve", "--replay", "pick_mustard", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "pick_mustard.watr").is_dir()


class TestAlignInspect:
    def test_align_rejects_aligned_input(self, pipeline, capsys):
        assert main(["align", str(pipeline["aligned"]), "--out", str(pipeline["root"])]) == 1
        assert "SchemaError" in capsys.readouterr().err

    def test_inspect_raw(self, pipeline, capsys):
        assert main(["inspect", str(pipeline["raw"])]) == 0
        out = capsys.readouterr().out
        assert "kind: raw" in out
        assert "joint_states" in out
        assert "frames/chassis" in out
        assert "128x96x3" in out

    def test_inspect_aligned(self, pipeline, capsys):
        assert main(["inspect", str(pipeline["aligned"])]) == 0
        out = capsys.readouterr().out
        assert "kind: aligned" in out
        assert "max gap" in out

    def test_inspect_missing_exits_1(self, tmp_path, capsys):
        assert main(["inspect", str(tmp_path / "nope")]) == 1
        assert "error [" in capsys.readouterr().err


@pytest.fixture(scope="module")
def trained(pipeline, tmp_path_factory):
    root = tmp_path_factory.mktemp("trained")
    config = root / "config.json"
    config.write_text(json.dumps(TINY_TRAIN))
    model = root / "model.json"
    code = main(
        ["train", "--data", str(pipeline["root"]), "--config", str(config),
         "--out", str(model)]
    )
    assert code == 0
    return model


class TestTrainEval:
    def test_model_file_loads(self, trained):
        model = load_model(trained)
        assert model.params.n_params > 100_000

    def test_train_empty_dir_exits_1(self, tmp_path, capsys):
        assert main(["train", "--data", str(tmp_path), "--out", str(tmp_path / "m.json")]) == 1
        assert "InsufficientData" in capsys.readouterr().err

    def test_eval_writes_report_and_overlays(self, trained, pipeline, tmp_path, capsys):
        report = tmp_path / "report.csv"
        overlays = tmp_path / "overlays"
        code = main(
            ["eval", "--model", str(trained), "--data", str(pipeline["root"]),
             "--report", str(report), "--overlays", str(overlays)]
        )
        assert code == 0
        lines = report.read_text().strip().splitlines()
        assert lines[0] == "channel,min_mse,max_mse,min_mae,max_mae"
        assert len(lines) == 17
        assert len(list(overlays.glob("*_overlay.json"))) == 1

    def test_eval_missing_model_exits_1(self, pipeline, tmp_path, capsys):
        code = main(
            ["eval", "--model", str(tmp_path / "no.json"), "--data", str(pipeline["root"]),
             "--report", str(tmp_path / "r.csv")]
        )
        assert code == 1
        assert "SchemaError" in capsys.readouterr().err


class TestIk:
    def write_target(self, tmp_path, q_offset=0.1):
        desc = default_robot()
        pose = poe_fk(desc.chain, desc.initial_q + q_offset)
        target = tmp_path / "target.json"
        target.write_text(
            json.dumps(
                {
                    "xyz": [float(v) for v in pose.translation],
                    "quaternion": [float(v) for v in quat_from_matrix(pose.rotation)],
                }
            )
        )
        return target

    def test_fk_round_trip(self, tmp_path, capsys):
        target = self.write_target(tmp_path)
        assert main(["ik", "--target", str(target)]) == 0
        out = capsys.readouterr().out
        residual = float(out.split("residual:")[1].split()[0])
        assert residual < 1e-6
        assert "iterations:" in out

    def test_robot_flag(self, tmp_path, capsys):
        target = self.write_target(tmp_path)
        robot = str(DATA / "wheelarm_robot.json")
        assert main(["ik", "--robot", robot, "--target", str(target)]) == 0

    def test_unreachable_exits_1(self, tmp_path, capsys):
        target = tmp_path / "far.json"
        target.write_text(json.dumps({"xyz": [10.0, 0.0, 0.0], "rpy": [0, 0, 0]}))
        assert main(["ik", "--target", str(target)]) == 1
        assert "MaxIterationsExceeded" in capsys.readouterr().err

    def test_target_without_xyz_exits_1(self, tmp_path, capsys):
        target = tmp_path / "bad.json"
        target.write_text(json.dumps({"rpy": [0, 0, 0]}))
        assert main(["ik", "--target", str(target)]) == 1
        assert "SchemaError" in capsys.readouterr().err


class TestSplitRows:
    def test_halves_cover_all_rows(self, pipeline):
        feats = featurize(read_container(pipeline["aligned"]))
        train, val = _split_rows(feats, 0.8)
        assert train.steps + val.steps == feats.steps
        assert train.name.endswith("/train") and val.name.endswith("/val")
        assert np.allclose(
            np.vstack([train.targets, val.targets]), feats.targets, atol=0
        )
        # each half restarts its clock so relative time stays well-formed
        assert val.timestamp[0, 0] == 0.0
