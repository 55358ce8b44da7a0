import csv
import os

import numpy as np
import pytest

from advjam import files, qnet
from advjam.cli import main
from advjam.ensemble import TransitionMatrix
from advjam.experiment import MetricsTrace
from advjam.metrics import empirical_pdf_cdf

TINY = """\
t_train = 300
t_test = 100
attacker_t_train = 50
t_attack_start = 50
t_attack_end = 250
t_retrain_start = 100
t_retrain = 600
n_snapshots = 6
n_ensemble = 3
t_reload = 300
n_reload_periods = 1
collapse_window = 100
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return path


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# ---------------------------------------------------------------- writers

def test_atomic_write_replaces_and_leaves_no_temp(tmp_path):
    target = tmp_path / "sub" / "x.txt"
    files.atomic_write(target, "old")
    files.atomic_write(target, b"new")
    assert target.read_bytes() == b"new"
    assert os.listdir(target.parent) == ["x.txt"]


def test_atomic_write_failure_names_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(files.OutputError, match="file"):
        files.atomic_write(blocker / "child.csv", "x")


def test_trace_rows_match_slots(tmp_path):
    tr = MetricsTrace(2)
    rng = np.random.default_rng(0)
    for _ in range(37):
        tr.append(sum_rate=rng.uniform(0, 9), rates=rng.uniform(0, 4, 2), actions=[3, 20],
                  channels=[3, -1], powers=[6.3, 0.0], phase=1, mode=2, attacker_action=3, jammed=(1, 2))
    rows = files.read_trace(files.emit_trace(tr, tmp_path / "t.csv", window=5))
    assert len(rows) == 37
    assert [int(r["slot"]) for r in rows] == list(range(37))
    assert float(rows[4]["sum_rate"]) == tr.sum_rate[4]
    assert rows[0]["victim_1_channel"] == "" and rows[0]["attacker_channels"] == "1;2"


def test_histogram_file_cdf_ends_at_one(tmp_path):
    h = empirical_pdf_cdf(np.random.default_rng(1).uniform(0, 12, 5000), 0.1)
    back = files.read_histogram(files.emit_histogram(h, tmp_path / "h.csv"))
    assert abs(back.cdf[-1] - 1.0) <= 1e-9
    assert np.array_equal(back.pdf, h.pdf)


def test_snapshot_file_round_trip_and_errors(tmp_path):
    p = qnet.init_params(5, 21, np.random.default_rng(2))
    path = files.save_snapshot(p, tmp_path / "v.snap", interval=7, slot=1234)
    q, interval, slot = files.load_snapshot(path)
    assert q == p and (interval, slot) == (7, 1234)
    path.write_bytes(path.read_bytes()[:60])
    with pytest.raises(qnet.SnapshotFormatError, match="v.snap"):
        files.load_snapshot(path)
    with pytest.raises(files.OutputError):
        files.load_snapshot(tmp_path / "missing.snap")


def test_matrices_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    ms = [TransitionMatrix(rng.integers(0, 9, size=(4, 4, 16)), n) for n in (0, 1, 5)]
    back = files.read_matrices(files.emit_matrices(ms, tmp_path / "m.csv"))
    assert [m.interval for m in back] == [0, 1, 5]
    assert all(np.array_equal(a.counts, b.counts) for a, b in zip(ms, back))


def test_manifest_round_trip(tmp_path):
    man = {"seed": 3, "boundaries": {"test": 10}, "rate": 1.5}
    assert files.read_manifest(files.write_manifest(man, tmp_path / "m.json")) == man


# ---------------------------------------------------------------- command line

def test_usage_error_exit_code(capsys):
    assert main(["baseline", "--preset", "tiny"]) == 1
    assert main([]) == 1
    assert main(["attack", "--attacker", "laser"]) == 1


def test_config_error_exit_code(tiny_cfg, tmp_path, capsys):
    rc = main(["baseline", "--config", str(tiny_cfg), "--set", "n_jammed=7", "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "K_a exceeds N_c" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_missing_victim_snapshot_is_runtime_error(tiny_cfg, tmp_path):
    rc = main(["attack", "--config", str(tiny_cfg), "--victim", str(tmp_path / "nope.snap"),
               "--out", str(tmp_path / "o")])
    assert rc == 3


def test_attack_outputs(tiny_cfg, tmp_path):
    out = tmp_path / "run"
    assert main(["attack", "--attacker", "random", "--config", str(tiny_cfg), "--out", str(out),
                 "--progress", "0"]) == 0
    for name in ("trace.csv", "histogram.csv", "victim.snap", "manifest.json", "config.txt"):
        assert (out / name).is_file()
    with open(out / "trace.csv", newline="") as fh:
        assert sum(1 for _ in csv.reader(fh)) == 250 + 1
    man = files.read_manifest(out / "manifest.json")
    assert man["config"]["attacker"] == "random"
    assert files.read_histogram(out / "histogram.csv").cdf[-1] == pytest.approx(1.0, abs=1e-9)


def test_ensemble_outputs_reproducible_and_reanalyzable(tiny_cfg, tmp_path):
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["ensemble", "--config", str(tiny_cfg), "--seed", "5", "--out", str(out),
                     "--progress", "0"]) == 0
        runs.append(_tree(out))
    assert runs[0] == runs[1]
    assert len([k for k in runs[0] if k.startswith("snapshots/")]) == 6
    out = tmp_path / "a"
    man = files.read_manifest(out / "manifest.json")
    redo = tmp_path / "scores.csv"
    assert main(["analyze-ensemble", str(out / "matrices.csv"), "--n-ensemble", "3",
                 "--exclude-after", str(man["exclude_after"]), "--out", str(redo)]) == 0
    assert redo.read_bytes() == (out / "scores.csv").read_bytes()


def test_verify_passes():
    assert main(["verify"]) == 0
