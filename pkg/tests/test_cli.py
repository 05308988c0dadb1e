import json

import numpy as np
import pytest

from evssm import events as ev
from evssm.cli import dispatch
from evssm.trainer import load_model

CONFIG_DIR = "configs"


def test_unknown_subcommand_is_usage_error(capsys):
    assert dispatch(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_missing_required_flag_is_usage_error(capsys):
    assert dispatch(["kernel", "--len", "8", "--out", "k.csv"]) == 1


def test_selftest_passes(capsys):
    assert dispatch(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5
    assert "FAIL" not in out


def test_h2_scalar_demo_prints_half(capsys):
    code = dispatch(
        ["h2", "--config", f"{CONFIG_DIR}/h2_scalar_demo.json", "--omega-min", "1", "--omega-max", "10000", "--n", "100000"]
    )
    assert code == 0
    out = capsys.readouterr().out
    val = float(out.split()[1])
    assert abs(val - 0.5) <= 1e-3


def test_h2_csv_output(tmp_path, capsys):
    out_path = tmp_path / "resp.csv"
    code = dispatch(["h2", "--config", f"{CONFIG_DIR}/h2_scalar_demo.json", "--n", "64", "--out", str(out_path)])
    assert code == 0
    lines = out_path.read_text().splitlines()
    assert lines[0] == "omega,frobenius_sq"
    assert len(lines) == 65


def test_hippo_dump_json(capsys):
    assert dispatch(["hippo", "dump", "--n", "3", "--format", "json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert np.asarray(payload["a_legs"]).shape == (3, 3)
    assert payload["b_legs"][0] == pytest.approx(1.0)


def test_hippo_dump_csv_file(tmp_path):
    out = tmp_path / "m.csv"
    assert dispatch(["hippo", "dump", "--n", "2", "--format", "csv", "--out", str(out)]) == 0
    text = out.read_text()
    assert "# a_legs" in text and "# p" in text


def test_kernel_dump(tmp_path, capsys):
    out = tmp_path / "kernel.csv"
    code = dispatch(
        ["kernel", "--config", f"{CONFIG_DIR}/h2_scalar_demo.json", "--len", "6", "--rate", "1.0", "--out", str(out)]
    )
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "lag,y0_u0"
    assert len(lines) == 7


def test_events_pipeline_via_cli(tmp_path, capsys):
    evb = tmp_path / "ramp.evb"
    assert dispatch(["events", "synth", "--scene", "ramp", "--threshold", "0.3", "--out", str(evb)]) == 0
    tensors_path = tmp_path / "tensors.bt"
    code = dispatch(
        [
            "events", "bin",
            "--in", str(evb),
            "--width", "8", "--height", "8",
            "--window-us", "5", "--bins", "5",
            "--out", str(tensors_path),
        ]
    )
    assert code == 0
    tensors = ev.load_binned(tensors_path)
    total = sum(int(t.counts.sum()) for t in tensors)
    assert total == 3 * 64  # three crossings per pixel on an 8x8 ramp scene


def test_events_filter_cli(tmp_path, capsys):
    boxes = tmp_path / "boxes.csv"
    boxes.write_text("x,y,w,h,cls\n0,0,8,40,0\n0,0,12,20,1\n0,0,30,40,2\n")
    out = tmp_path / "kept.csv"
    assert dispatch(["events", "filter", "--in", str(boxes), "--profile", "gen1", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[1:] == ["0,0,30,40,2"]


def test_runtime_error_exit_code(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert dispatch(["h2", "--config", str(missing)]) == 2


def test_train_and_sweep_cli(tmp_path, capsys):
    cfg = {
        "ssm": {"p": 8, "h": 6},
        "task": {"seq_len": 64},
        "trainer": {"steps": 3, "batch": 4, "n_train": 12, "lr": 0.001},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    model_path = tmp_path / "model.bin"
    assert dispatch(["train", "--task", "duty", "--model", "ssm", "--config", str(cfg_path), "--out", str(model_path)]) == 0
    loaded = load_model(model_path)
    assert loaded.model_kind == "ssm"
    assert loaded.config.steps == 3

    report_path = tmp_path / "report.csv"
    code = dispatch(
        ["eval", "sweep", "--model", str(model_path), "--rates", "1,2", "--n-eval", "6", "--out", str(report_path)]
    )
    assert code == 0
    text = report_path.read_text()
    assert text.startswith("deploy_hz,rate,metric")
    assert "# performance_drop" in text


def test_scan_bench_outputs_csv(capsys):
    assert dispatch(["scan", "bench", "--len", "2048", "--states", "4", "--threads", "2"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "impl,threads,len,states,seconds,elems_per_sec"
    assert "sequential" in out and "parallel" in out
