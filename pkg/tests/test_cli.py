"""CLI subcommands: artifact layout, determinism, stream replay."""

import json

import pytest
from click.testing import CliRunner

from stdlens.cli import main

TINY_YAML = """\
federation:
  num_clients: 10
  rounds: 10
  participation_fraction: 0.4
  malicious_fraction: 0.2
  forensic_window: 5
  master_seed: 7
task:
  num_classes: 3
  feature_dim: 10
  num_anchors: 2
  samples_per_client: 12
  test_samples: 60
attack:
  poison_type: class
  source_class: 0
  target_class: 1
"""


@pytest.fixture
def tiny_yaml(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(TINY_YAML)
    return str(path)


def _invoke(*args):
    result = CliRunner().invoke(main, list(args))
    assert result.exit_code == 0, result.output
    return result


def test_run_writes_documented_artifacts(tiny_yaml, tmp_path):
    out = tmp_path / "out"
    _invoke("run", "--config", tiny_yaml, "--out", str(out))
    for name in ("runlog.jsonl", "ap_curves.csv", "timings.csv", "score.json"):
        assert (out / name).exists()
    score = json.loads((out / "score.json").read_text())
    assert set(score) >= {"precision_at_max_recall", "max_recall",
                          "time_to_purge"}
    header = (out / "ap_curves.csv").read_text().splitlines()[0]
    assert header == "round,ap_0,ap_1,ap_2"


def test_run_is_byte_deterministic(tiny_yaml, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _invoke("run", "--config", tiny_yaml, "--out", str(a))
    _invoke("run", "--config", tiny_yaml, "--out", str(b))
    for name in ("runlog.jsonl", "ap_curves.csv", "score.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_run_seed_override_changes_log(tiny_yaml, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _invoke("run", "--config", tiny_yaml, "--out", str(a))
    _invoke("run", "--config", tiny_yaml, "--seed", "99", "--out", str(b))
    assert (a / "runlog.jsonl").read_bytes() != (b / "runlog.jsonl").read_bytes()


def test_run_rejects_invalid_config(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("federation:\n  num_clients: 10\n  malicious_fraction: 0.5\n")
    result = CliRunner().invoke(main, ["run", "--config", str(bad),
                                       "--out", str(tmp_path / "out")])
    assert result.exit_code != 0
    assert "m must be < 0.5" in result.output


def test_compare_defenses_csv(tiny_yaml, tmp_path):
    out = tmp_path / "cmp"
    _invoke("compare-defenses", "--config", tiny_yaml, "--out", str(out),
            "--seed", "1", "--defense", "none", "--defense", "spectral")
    csv_text = (out / "comparison.csv").read_text()
    assert csv_text.splitlines()[0].startswith("defense,seed,")
    assert len(csv_text.splitlines()) == 3
    assert (out / "comparison.txt").exists()


def test_compare_defenses_requires_attack(tmp_path):
    benign = tmp_path / "benign.yaml"
    benign.write_text("federation:\n  num_clients: 10\n"
                      "  participation_fraction: 0.4\n")
    result = CliRunner().invoke(main, ["compare-defenses", "--config",
                                       str(benign), "--out", str(tmp_path / "o")])
    assert result.exit_code != 0


def test_attack_sweep_grid(tiny_yaml, tmp_path):
    out = tmp_path / "sweep"
    _invoke("attack-sweep", "--config", tiny_yaml, "--out", str(out),
            "--defense", "none", "--gamma", "0.5,1.0")
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("m,beta,gamma,onset,")


def test_verify_stats_report(tmp_path):
    out = tmp_path / "stats"
    _invoke("verify-stats", "--trials", "3", "--samples", "1000",
            "--out", str(out))
    text = (out / "verify_stats.txt").read_text()
    assert "separable in" in text
    assert len(text.splitlines()) == 5


def test_stream_dump_and_replay(tiny_yaml, tmp_path):
    out = tmp_path / "run"
    _invoke("run", "--config", tiny_yaml, "--out", str(out), "--dump-stream")
    stream = out / "gradient_stream.jsonl"
    assert stream.exists()
    rep = tmp_path / "rep"
    _invoke("replay", "--stream", str(stream), "--config", tiny_yaml,
            "--out", str(rep))
    verdicts = json.loads((rep / "verdicts.json").read_text())
    assert set(verdicts) == {"revocations", "verdicts"}
