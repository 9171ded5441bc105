import io
import json

import numpy as np
import pytest

from adaptta import encode_ppm, load_trace, read_trace
from adaptta.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main

from support import smooth_image


@pytest.fixture
def image_manifest(tmp_path):
    rng = np.random.default_rng(77)
    lines = []
    for i in range(3):
        path = tmp_path / f"img{i}.ppm"
        path.write_bytes(encode_ppm(smooth_image(rng, 280, 260)))
        lines.append(f"img{i}\t{path}\t{i % 4}")
    manifest = tmp_path / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


@pytest.fixture
def trace_file(tmp_path, image_manifest):
    out = tmp_path / "trace.jsonl"
    rc = main([
        "gen-trace", "--manifest", str(image_manifest), "--classes", "4",
        "--toy-seed", "42", "--policy", "10C", "--out", str(out),
    ])
    assert rc == EXIT_OK
    return out


class TestGenTrace:
    def test_writes_loadable_trace(self, tmp_path, image_manifest):
        out = tmp_path / "t.jsonl"
        rc = main([
            "gen-trace", "--manifest", str(image_manifest), "--classes", "4",
            "--toy-seed", "42", "--policy", "5C", "--out", str(out),
        ])
        assert rc == EXIT_OK
        backend = load_trace(out)
        assert len(backend.samples) == 3
        assert backend.num_views == 5
        assert len(out.read_text(encoding="utf-8").splitlines()) == 1 + 3 * 5

    def test_same_seed_is_byte_identical(self, tmp_path, image_manifest):
        outs = [tmp_path / "t1.jsonl", tmp_path / "t2.jsonl"]
        for out in outs:
            assert main([
                "gen-trace", "--manifest", str(image_manifest), "--classes", "4",
                "--toy-seed", "7", "--policy", "5C", "--out", str(out),
            ]) == EXIT_OK
        assert outs[0].read_bytes() == outs[1].read_bytes()

    def test_different_seed_differs(self, tmp_path, image_manifest):
        outs = [tmp_path / "t1.jsonl", tmp_path / "t2.jsonl"]
        for seed, out in zip((7, 8), outs):
            assert main([
                "gen-trace", "--manifest", str(image_manifest), "--classes", "4",
                "--toy-seed", str(seed), "--policy", "5C", "--out", str(out),
            ]) == EXIT_OK
        assert outs[0].read_bytes() != outs[1].read_bytes()

    def test_stdout_stream_is_valid(self, image_manifest, capsys):
        rc = main(["gen-trace", "--manifest", str(image_manifest), "--classes", "3"])
        assert rc == EXIT_OK
        backend = read_trace(io.StringIO(capsys.readouterr().out))
        assert backend.num_views == 10

    def test_missing_manifest_flag(self):
        assert main(["gen-trace", "--classes", "4"]) == EXIT_USAGE

    def test_undecodable_image(self, tmp_path):
        bad = tmp_path / "bad.ppm"
        bad.write_bytes(b"not a ppm")
        manifest = tmp_path / "m.tsv"
        manifest.write_text(f"x\t{bad}\t0\n", encoding="utf-8")
        rc = main(["gen-trace", "--manifest", str(manifest), "--classes", "3",
                   "--out", str(tmp_path / "t.jsonl")])
        assert rc == EXIT_DATA

    def test_label_out_of_range(self, tmp_path, image_manifest):
        rc = main(["gen-trace", "--manifest", str(image_manifest), "--classes", "2",
                   "--out", str(tmp_path / "t.jsonl")])
        assert rc == EXIT_DATA


class TestRun:
    def test_json_report_on_stdout(self, trace_file, capsys):
        rc = main(["run", "--trace", str(trace_file), "--policy", "10C",
                   "--tau", "0.8", "--latency", "sim:per-inference=53.1"])
        assert rc == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["mode"] == "adaptive"
        assert report["policy"] == "10C"
        assert report["tau"] == 0.8
        assert report["samples"] == 3
        assert report["latency_source"] == "simulated"
        assert 1.0 <= report["avg_inferences"] <= 10.0

    def test_defaults_to_trace_policy(self, trace_file, capsys):
        assert main(["run", "--trace", str(trace_file)]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["policy"] == "10C"

    def test_5c_policy_over_10c_trace(self, trace_file, capsys):
        rc = main(["run", "--trace", str(trace_file), "--policy", "5C", "--mode", "seq"])
        assert rc == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["avg_inferences"] == 5.0

    def test_missing_trace_file(self, tmp_path):
        assert main(["run", "--trace", str(tmp_path / "nope.jsonl")]) == EXIT_DATA

    def test_malformed_trace_file(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"classes": 3}\n', encoding="utf-8")
        assert main(["run", "--trace", str(bad)]) == EXIT_DATA

    def test_tau_out_of_range(self, trace_file):
        assert main(["run", "--trace", str(trace_file), "--tau", "1.5"]) == EXIT_USAGE

    def test_conflicting_backends(self, trace_file):
        rc = main(["run", "--trace", str(trace_file), "--toy-seed", "1", "--classes", "3"])
        assert rc == EXIT_USAGE

    def test_no_backend(self):
        assert main(["run"]) == EXIT_USAGE

    def test_unknown_flag(self, trace_file):
        assert main(["run", "--trace", str(trace_file), "--frobnicate"]) == EXIT_USAGE

    def test_bad_latency_spec(self, trace_file):
        assert main(["run", "--trace", str(trace_file), "--latency", "gpu"]) == EXIT_USAGE
        assert main(["run", "--trace", str(trace_file), "--latency", "sim:warp=9"]) == EXIT_USAGE

    def test_wall_clock(self, trace_file, capsys):
        rc = main(["run", "--trace", str(trace_file), "--latency", "wall"])
        assert rc == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["latency_source"] == "wall_clock"
        assert report["speedup_vs_seq"] is None

    def test_out_file_and_csv(self, trace_file, tmp_path, capsys):
        out = tmp_path / "report.csv"
        rc = main(["run", "--trace", str(trace_file), "--format", "csv", "--out", str(out)])
        assert rc == EXIT_OK
        assert capsys.readouterr().out == ""
        lines = out.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("mode,policy,tau")

    def test_toy_backend_over_images(self, image_manifest, capsys):
        rc = main(["run", "--toy-seed", "5", "--classes", "4",
                   "--manifest", str(image_manifest), "--policy", "5C", "--mode", "batch"])
        assert rc == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["mode"] == "batch"
        assert report["avg_inferences"] == 5.0

    def test_no_command_prints_usage(self, capsys):
        assert main([]) == EXIT_USAGE
        assert "usage" in capsys.readouterr().err.lower()


class TestSweep:
    def test_reports_ordered_by_tau(self, trace_file, capsys):
        rc = main(["sweep", "--trace", str(trace_file), "--taus", "0.9,0.1,0.5"])
        assert rc == EXIT_OK
        reports = json.loads(capsys.readouterr().out)
        assert [r["tau"] for r in reports] == [0.1, 0.5, 0.9]
        counts = [r["avg_inferences"] for r in reports]
        assert counts == sorted(counts)

    def test_requires_taus(self, trace_file):
        assert main(["sweep", "--trace", str(trace_file)]) == EXIT_USAGE

    def test_rejects_out_of_range_tau(self, trace_file):
        assert main(["sweep", "--trace", str(trace_file), "--taus", "0.5,2.0"]) == EXIT_USAGE


class TestCompare:
    def test_three_reports(self, trace_file, capsys):
        rc = main(["compare", "--trace", str(trace_file), "--tau", "0.8"])
        assert rc == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert set(payload) == {"batch", "sequential", "adaptive"}
        assert payload["sequential"]["avg_latency_ms"] < payload["batch"]["avg_latency_ms"]
        assert payload["adaptive"]["speedup_vs_seq"] >= 1.0

    def test_csv_has_three_rows(self, trace_file, capsys):
        rc = main(["compare", "--trace", str(trace_file), "--format", "csv"])
        assert rc == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 4


class TestConfigFile:
    def test_config_supplies_defaults(self, trace_file, tmp_path, capsys):
        cfg = tmp_path / "adaptta.toml"
        cfg.write_text(f'trace = "{trace_file}"\ntau = 0.25\n', encoding="utf-8")
        rc = main(["run", "--config", str(cfg)])
        assert rc == EXIT_OK
        assert json.loads(capsys.readouterr().out)["tau"] == 0.25

    def test_flags_override_config(self, trace_file, tmp_path, capsys):
        cfg = tmp_path / "adaptta.toml"
        cfg.write_text(f'trace = "{trace_file}"\ntau = 0.25\n', encoding="utf-8")
        rc = main(["run", "--config", str(cfg), "--tau", "0.6"])
        assert rc == EXIT_OK
        assert json.loads(capsys.readouterr().out)["tau"] == 0.6

    def test_missing_config(self, trace_file):
        assert main(["run", "--trace", str(trace_file), "--config", "/nope.toml"]) == EXIT_USAGE

    def test_invalid_config(self, trace_file, tmp_path):
        cfg = tmp_path / "bad.toml"
        cfg.write_text("= broken", encoding="utf-8")
        assert main(["run", "--trace", str(trace_file), "--config", str(cfg)]) == EXIT_USAGE


class TestEndToEnd:
    def test_gen_run_adaptive_tau_one_matches_sequential(self, trace_file, capsys):
        assert main(["run", "--trace", str(trace_file), "--mode", "seq"]) == EXIT_OK
        seq = json.loads(capsys.readouterr().out)
        assert main(["run", "--trace", str(trace_file), "--mode", "adaptive", "--tau", "1.0"]) == EXIT_OK
        adaptive = json.loads(capsys.readouterr().out)
        assert adaptive["top1_accuracy"] == seq["top1_accuracy"]
        assert adaptive["avg_inferences"] == seq["avg_inferences"] == 10.0
        assert adaptive["accuracy_gain_vs_single"] == seq["accuracy_gain_vs_single"]
