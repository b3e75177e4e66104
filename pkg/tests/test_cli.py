"""Command-line interface: exit codes, file outputs, config precedence."""

import json

import numpy as np
import pytest

from boxgraph.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main


def run_cli(argv):
    try:
        return main(list(argv))
    except SystemExit as exc:
        return int(exc.code or 0)


@pytest.fixture(scope="module")
def workdir(rendered_small, tmp_path_factory):
    """Artifacts from one full command chain over the rendered scene."""
    root = rendered_small["root"]
    out = tmp_path_factory.mktemp("cli")
    data = [
        "--frames", str(root / "frames.jsonl"),
        "--detections", str(root / "detections.jsonl"),
        "--vocabulary", "art1",
    ]
    train_data = data + ["--gt-detections", str(root / "gt.jsonl")]
    assert run_cli(
        ["extract-features", *train_data,
         "--image-root", str(root), "--out", str(out / "train.feats")]
    ) == EXIT_OK
    assert run_cli(
        ["build-graph", *train_data,
         "--criteria", "overlap,binary",
         "--feature-cache", str(out / "train.feats"),
         "--out", str(out / "train.graph")]
    ) == EXIT_OK
    assert run_cli(
        ["train", "--graph", str(out / "train.graph"),
         "--feature-cache", str(out / "train.feats"),
         "--hidden-width", "8", "--epochs", "2", "--batch-size", "16",
         "--sample-sizes", "4,6",
         "--trace-csv", str(out / "trace.csv"),
         "--out", str(out / "model.bgsm")]
    ) == EXIT_OK
    assert run_cli(
        ["infer", "--model", str(out / "model.bgsm"), *data,
         "--image-root", str(root),
         "--out", str(out / "relabeled.jsonl")]
    ) == EXIT_OK
    return {"root": root, "out": out}


class TestExitCodes:
    def test_no_command_is_usage_error(self, capsys):
        assert run_cli([]) == EXIT_USAGE
        assert "usage" in capsys.readouterr().err

    def test_unknown_flag_is_usage_error(self, capsys):
        assert run_cli(["eval", "--nope"]) == EXIT_USAGE

    def test_bad_flag_value_is_usage_error(self, rendered_small, capsys):
        root = rendered_small["root"]
        argv = [
            "build-graph",
            "--frames", str(root / "frames.jsonl"),
            "--detections", str(root / "detections.jsonl"),
            "--out", "/tmp/never-written.graph",
        ]
        assert run_cli(argv + ["--criteria", "sideways"]) == EXIT_USAGE
        assert "unknown criterion" in capsys.readouterr().err
        assert run_cli(argv + ["--iou-threshold", "1.5"]) == EXIT_USAGE
        assert run_cli(argv + ["--scope", "frame"]) == EXIT_USAGE

    def test_missing_file_is_data_error(self, tmp_path, capsys):
        code = run_cli(
            ["eval", "--frames", str(tmp_path / "nope.jsonl"),
             "--predictions", str(tmp_path / "nope.jsonl"),
             "--ground-truth", str(tmp_path / "nope.jsonl")]
        )
        assert code == EXIT_DATA
        assert "error:" in capsys.readouterr().err

    def test_version(self, capsys):
        assert run_cli(["--version"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "boxgraph" in out


class TestGenSynthetic:
    def test_generates_layout(self, tmp_path, capsys):
        out = tmp_path / "scene"
        code = run_cli(
            ["gen-synthetic", "--out", str(out), "--videos", "1",
             "--frames-per-video", "2", "--image-size", "64", "--seed", "3"]
        )
        assert code == EXIT_OK
        assert (out / "frames.jsonl").is_file()
        assert (out / "gt.jsonl").is_file()
        assert len(list((out / "images").glob("*.png"))) == 2
        meta = json.loads((out / "dataset.meta.json").read_text())
        assert meta["tool"] == "boxgraph"
        assert "command" in meta and "--seed" in meta["command"]
        assert "timestamp" not in meta

    def test_noise_config_writes_detections(self, tmp_path):
        noise = tmp_path / "noise.json"
        noise.write_text(json.dumps({"miss_rate": 0.2, "spurious_per_frame": 0.5}))
        out = tmp_path / "scene"
        code = run_cli(
            ["gen-synthetic", "--out", str(out), "--videos", "1",
             "--frames-per-video", "2", "--image-size", "64",
             "--noise-config", str(noise)]
        )
        assert code == EXIT_OK
        assert (out / "detections.jsonl").is_file()

    def test_bad_noise_config_is_data_error(self, tmp_path, capsys):
        noise = tmp_path / "noise.json"
        noise.write_text(json.dumps({"miss_rate": 7.0}))
        code = run_cli(
            ["gen-synthetic", "--out", str(tmp_path / "scene"), "--videos", "1",
             "--frames-per-video", "1", "--image-size", "64",
             "--noise-config", str(noise)]
        )
        assert code == EXIT_DATA


class TestBuildGraph:
    def test_numeric_criteria_aliases_match_names(self, workdir, tmp_path):
        root, out = workdir["root"], workdir["out"]
        base = [
            "build-graph",
            "--frames", str(root / "frames.jsonl"),
            "--detections", str(root / "detections.jsonl"),
            "--gt-detections", str(root / "gt.jsonl"),
            "--vocabulary", "art1",
        ]
        a = tmp_path / "a.graph"
        b = tmp_path / "b.graph"
        assert run_cli(base + ["--criteria", "overlap,binary", "--out", str(a)]) == EXIT_OK
        assert run_cli(base + ["--criteria", "2+4", "--out", str(b)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()

    def test_degree_stats_on_stdout(self, workdir, capsys):
        root = workdir["root"]
        code = run_cli(
            ["build-graph",
             "--frames", str(root / "frames.jsonl"),
             "--detections", str(root / "detections.jsonl"),
             "--criteria", "binary", "--out", "/tmp/degree-check.graph"]
        )
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["nodes"] > 0
        assert payload["criteria"] == "4"
        assert "mean_degree" in payload


class TestInferAndEval:
    def test_relabeled_file_shape(self, workdir):
        out = workdir["out"]
        rows = [
            json.loads(l) for l in (out / "relabeled.jsonl").read_text().splitlines()
        ]
        assert rows
        for row in rows:
            assert {"frame_id", "class", "score", "graph_class", "graph_prob"} <= set(row)
        meta = json.loads((out / "relabeled.jsonl.meta.json").read_text())
        assert meta["tool"] == "boxgraph"

    def test_eval_json_and_csv(self, workdir, tmp_path, capsys):
        root, out = workdir["root"], workdir["out"]
        csv_path = tmp_path / "metrics.csv"
        code = run_cli(
            ["eval", "--frames", str(root / "frames.jsonl"),
             "--predictions", str(out / "relabeled.jsonl"),
             "--ground-truth", str(root / "gt.jsonl"),
             "--csv", str(csv_path)]
        )
        assert code == EXIT_OK
        captured = capsys.readouterr()
        payload = json.loads(captured.out)
        assert {"tp", "fp", "fn", "precision", "recall", "f1", "f2"} <= set(payload)
        assert payload["tp"] + payload["fn"] > 0
        assert "TP" in captured.err  # human table on stderr
        header = csv_path.read_text().splitlines()[0]
        assert header.startswith("model,")

    def test_infer_with_feature_cache_matches_image_path(self, workdir, tmp_path):
        root, out = workdir["root"], workdir["out"]
        cache = tmp_path / "infer.feats"
        data = [
            "--frames", str(root / "frames.jsonl"),
            "--detections", str(root / "detections.jsonl"),
            "--vocabulary", "art1",
        ]
        assert run_cli(
            ["extract-features", *data, "--image-root", str(root),
             "--out", str(cache)]
        ) == EXIT_OK
        via_cache = tmp_path / "relabeled-cache.jsonl"
        assert run_cli(
            ["infer", "--model", str(out / "model.bgsm"), *data,
             "--feature-cache", str(cache), "--out", str(via_cache)]
        ) == EXIT_OK
        # the cache quantizes features to float32, so verdicts must agree
        # while probabilities may differ in the low-order digits
        a = [json.loads(l) for l in via_cache.read_text().splitlines()]
        b = [json.loads(l) for l in (out / "relabeled.jsonl").read_text().splitlines()]
        assert len(a) == len(b)
        assert [r["graph_class"] for r in a] == [r["graph_class"] for r in b]
        probs_a = np.array([r["graph_prob"] for r in a])
        probs_b = np.array([r["graph_prob"] for r in b])
        np.testing.assert_allclose(probs_a, probs_b, atol=1e-4)

    def test_infer_vocabulary_mismatch_is_data_error(self, workdir, tmp_path, capsys):
        root, out = workdir["root"], workdir["out"]
        code = run_cli(
            ["infer", "--model", str(out / "model.bgsm"),
             "--frames", str(root / "frames.jsonl"),
             "--detections", str(root / "detections.jsonl"),
             "--vocabulary", "art2",
             "--image-root", str(root),
             "--out", str(tmp_path / "x.jsonl")]
        )
        assert code == EXIT_DATA

    def test_trace_csv_written(self, workdir):
        lines = (workdir["out"] / "trace.csv").read_text().splitlines()
        assert lines[0] == "epoch,loss,accuracy"
        assert len(lines) == 3


class TestConfigFile:
    def test_config_supplies_defaults_but_flags_win(self, rendered_small, tmp_path, capsys):
        root = rendered_small["root"]
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"criteria": "binary", "iou_threshold": 0.4}))
        base = [
            "build-graph",
            "--frames", str(root / "frames.jsonl"),
            "--detections", str(root / "detections.jsonl"),
            "--config", str(cfg),
        ]
        a = tmp_path / "a.graph"
        assert run_cli(base + ["--out", str(a)]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["criteria"] == "4"

        b = tmp_path / "b.graph"
        assert run_cli(base + ["--criteria", "overlap", "--out", str(b)]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["criteria"] == "2"

    def test_unknown_config_key_is_usage_error(self, rendered_small, tmp_path, capsys):
        root = rendered_small["root"]
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"iou_treshold": 0.4}))
        code = run_cli(
            ["build-graph",
             "--frames", str(root / "frames.jsonl"),
             "--detections", str(root / "detections.jsonl"),
             "--config", str(cfg), "--out", str(tmp_path / "x.graph")]
        )
        assert code == EXIT_USAGE
        assert "iou_treshold" in capsys.readouterr().err


class TestRunExperiment:
    def manifest(self, root, tmp_path, configurations):
        manifest = {
            "train": {
                "frames": "frames.jsonl",
                "gt_detections": "gt.jsonl",
                "artifact_detections": "detections.jsonl",
                "image_root": str(root),
            },
            "test": {
                "frames": "frames.jsonl",
                "polyp_detections": "detections.jsonl",
                "gt_detections": "gt.jsonl",
                "image_root": str(root),
            },
            "defaults": {
                "hidden_width": 8,
                "epochs": 2,
                "batch_size": 16,
                "sample_sizes": [4, 6],
            },
            "configurations": configurations,
        }
        path = root / f"manifest-{tmp_path.name}.json"
        path.write_text(json.dumps(manifest))
        return path

    def test_report_and_outputs(self, rendered_small, tmp_path, capsys):
        root = rendered_small["root"]
        path = self.manifest(
            root, tmp_path,
            [{"name": "ob", "vocabulary": "art1", "criteria": ["overlap", "binary"]}],
        )
        out = tmp_path / "report.json"
        csv_path = tmp_path / "report.csv"
        code = run_cli(
            ["run-experiment", "--manifest", str(path),
             "--out", str(out), "--csv", str(csv_path)]
        )
        assert code == EXIT_OK
        captured = capsys.readouterr()
        report = json.loads(captured.out)
        assert report["baseline"]["model"] == "baseline"
        assert report["rows"][0]["model"] == "ob"
        assert "ob" in captured.err
        saved = json.loads(out.read_text())
        assert saved == report
        assert csv_path.read_text().startswith("model,")

    def test_failed_row_sets_exit_code(self, rendered_small, tmp_path, capsys):
        root = rendered_small["root"]
        path = self.manifest(
            root, tmp_path, [{"name": "broken", "bogus": True}]
        )
        code = run_cli(["run-experiment", "--manifest", str(path)])
        assert code == EXIT_DATA
        report = json.loads(capsys.readouterr().out)
        assert "error" in report["rows"][0]
