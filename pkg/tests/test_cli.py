import json
import subprocess
import sys

import numpy as np
import pytest

from slimformer.checkpoint import load_checkpoint, save_checkpoint
from slimformer.cli import main
from slimformer.model import ModelConfig, ParamStore

TINY_CONFIG = {
    "model": {"width": 16, "heads": 4, "depth": 6},
    "train": {"epochs": 1, "batch_size": 16, "base_lr": 5e-4, "warmup_epochs": 0,
              "decay_after": 99, "max_steps": 3, "seed": 5},
    "data": {"seed": 5, "train_size": 64, "val_size": 32},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli")
    cfg = path / "config.json"
    cfg.write_text(json.dumps(TINY_CONFIG))
    return path


@pytest.fixture(scope="module")
def teacher_ckpt(workdir):
    out = workdir / "teacher.dst1"
    rc = main(["train-teacher", "--config", str(workdir / "config.json"),
               "--out", str(out), "--log", str(workdir / "teacher.jsonl")])
    assert rc == 0 and out.exists()
    return out


@pytest.fixture(scope="module")
def dst_ckpt(workdir, teacher_ckpt):
    out = workdir / "dst.dst1"
    rc = main(["train-dst", "--config", str(workdir / "config.json"),
               "--teacher", str(teacher_ckpt), "--out", str(out),
               "--log", str(workdir / "dst.jsonl")])
    assert rc == 0 and out.exists()
    return out


def test_training_logs_written(workdir, teacher_ckpt, dst_ckpt):
    teacher_rows = [json.loads(l) for l in (workdir / "teacher.jsonl").read_text().splitlines()]
    assert teacher_rows and teacher_rows[0]["phase"] == "teacher"
    dst_rows = [json.loads(l) for l in (workdir / "dst.jsonl").read_text().splitlines()]
    assert len(dst_rows) == 3
    for row in dst_rows:
        assert {"step", "lr", "omega", "losses"} <= set(row)
        assert "(1/4D,1/6L)" in row["omega"] and "(1D,1L)" in row["omega"]


def test_eval_command(workdir, dst_ckpt, capsys):
    rc = main(["eval", "--config", str(workdir / "config.json"),
               "--checkpoint", str(dst_ckpt), "--width-ratio", "1/2", "--depth-ratio", "1/3"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "accuracy" in out and "(1/2D,1/3L)" in out


def test_export_command(workdir, dst_ckpt, capsys):
    out_path = workdir / "sub.dst1"
    rc = main(["export", "--checkpoint", str(dst_ckpt), "--width-ratio", "1/4",
               "--depth-ratio", "1/3", "--out", str(out_path)])
    assert rc == 0
    sub = load_checkpoint(out_path)
    assert sub.config.width == 4 and sub.config.depth == 2 and sub.config.embed_dim == 16


def test_analyze_cost_command(workdir, dst_ckpt):
    out = workdir / "costs.csv"
    rc = main(["analyze-cost", "--checkpoint", str(dst_ckpt), "--out", str(out)])
    assert rc == 0
    lines = out.read_text().split("\n")
    assert lines[0].startswith("arch_width,arch_depth,kept_layers")
    assert len(lines) == 12


def test_sweep_command_deterministic_bytes(workdir, dst_ckpt):
    a, b = workdir / "sweep_a.csv", workdir / "sweep_b.csv"
    for out in (a, b):
        rc = main(["sweep", "--config", str(workdir / "config.json"),
                   "--checkpoint", str(dst_ckpt), "--split", "val", "--out", str(out)])
        assert rc == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().split("\n")) == 12


def test_attn_dump_command(workdir, dst_ckpt):
    out = workdir / "attn.json"
    rc = main(["attn-dump", "--config", str(workdir / "config.json"),
               "--checkpoint", str(dst_ckpt), "--width-ratio", "1/4",
               "--depth-ratio", "1/6", "--sample-index", "3", "--out", str(out)])
    assert rc == 0
    payload = json.loads(out.read_text())
    assert payload["arch"] == {"width": 4, "depth": 1, "kept_layers": [1]}
    assert len(payload["encoder"]) == 1 and len(payload["decoder"]) == 1
    for row in payload["decoder"][0]["guided"][0]:
        assert abs(sum(row) - 1.0) < 1e-9


def test_seed_flag_overrides_config(workdir, teacher_ckpt):
    out1, out2 = workdir / "s1.dst1", workdir / "s2.dst1"
    base = ["train-dst", "--config", str(workdir / "config.json"),
            "--teacher", str(teacher_ckpt)]
    assert main(base + ["--out", str(out1), "--seed", "11"]) == 0
    assert main(base + ["--out", str(out2), "--seed", "12"]) == 0
    assert load_checkpoint(out1).checksum() != load_checkpoint(out2).checksum()


def test_module_entrypoint_runs():
    proc = subprocess.run([sys.executable, "-m", "slimformer.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("train-teacher", "train-dst", "eval", "export", "analyze-cost", "sweep", "attn-dump"):
        assert cmd in proc.stdout
