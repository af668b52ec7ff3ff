import csv
import hashlib
import os
import subprocess
import sys

import pytest

from pointtrack.cli import main

NOISELESS = """[meta]
schema_version = 1
preset = mot

[world]
frames = {frames}
n_objects = {objects}
seed = {seed}

[noise]
lambda_jt = 0
lambda_fp = 0
lambda_fn = 0
conf_tp_range = 1,1
"""


@pytest.fixture
def noiseless(tmp_path):
    p = tmp_path / "noiseless.ini"
    p.write_text(NOISELESS.format(frames=60, objects=8, seed=1))
    return p


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_simulate_track_eval(tmp_path, noiseless, capsys):
    gt, det, res, out = (tmp_path / n for n in ("gt.txt", "det.txt", "res.txt", "m.csv"))
    assert main(["simulate", "--config", str(noiseless), "--out-gt", str(gt),
                 "--out-det", str(det)]) == 0
    assert main(["track", "--config", str(noiseless), "--detections", str(det),
                 "--out", str(res)]) == 0
    assert "association_seconds=" in capsys.readouterr().out
    assert main(["eval", "--gt", str(gt), "--pred", str(res), "--amota", "n=5,alpha=1",
                 "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "MOTA" in printed and "IDF1" in printed
    (row,) = list(csv.DictReader(out.open()))
    assert list(row)[:9] == ["MOTA", "IDF1", "MT", "ML", "FP", "FN", "IDSW", "FRAG", "AMOTA"]
    assert (row["MOTA"], row["IDF1"], row["IDSW"], row["AMOTA"]) == ("1", "1", "0", "1")


def test_stride_and_seed_flags(tmp_path, noiseless):
    gt = tmp_path / "gt.txt"
    main(["simulate", "--config", str(noiseless), "--out-gt", str(gt),
          "--out-det", str(tmp_path / "d.txt"), "--stride", "6"])
    frames = {int(line.split(",")[0]) for line in gt.read_text().splitlines()}
    assert frames == set(range(1, 11))
    gt2 = tmp_path / "gt2.txt"
    main(["simulate", "--config", str(noiseless), "--out-gt", str(gt2),
          "--out-det", str(tmp_path / "d2.txt"), "--stride", "6", "--seed", "9"])
    assert gt.read_text() != gt2.read_text()


def test_public_mode_with_empty_public_file(tmp_path, noiseless):
    det, pub, res = tmp_path / "det.txt", tmp_path / "pub.txt", tmp_path / "res.txt"
    main(["simulate", "--config", str(noiseless), "--out-gt", str(tmp_path / "gt.txt"),
          "--out-det", str(det)])
    pub.write_text("")
    assert main(["track", "--detections", str(det), "--public", str(pub), "--out", str(res)]) == 0
    assert res.read_text() == ""
    # the detections themselves as public boxes start every track
    assert main(["track", "--detections", str(det), "--public", str(det), "--out", str(res)]) == 0
    assert res.read_text() != ""


def test_offsets_file_switches_motion_model(tmp_path, capsys):
    det, off, res = tmp_path / "det.txt", tmp_path / "off.txt", tmp_path / "res.txt"
    det.write_text("1,-1,100,100,20,20,0.9,-1,-1,-1\n2,-1,150,100,20,20,0.9,-1,-1,-1\n"
                   "3,-1,200,100,20,20,0.9,-1,-1,-1\n")
    off.write_text("2,0,50,0\n3,0,50,0\n")
    assert main(["track", "--detections", str(det), "--offsets", str(off), "--out", str(res)]) == 0
    assert "missing_offsets=1" in capsys.readouterr().out
    ids = {line.split(",")[1] for line in res.read_text().splitlines()}
    assert ids == {"1"}


def test_ablate_rows_and_determinism(tmp_path, noiseless):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["ablate", "--config", str(noiseless), "--grid", "motion=offset,zero",
            "--grid", "theta=0.3,0.4,0.5"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b), "--jobs", "2"]) == 0
    rows = list(csv.DictReader(a.open()))
    assert len(rows) == 6
    assert [(r["motion"], r["theta"]) for r in rows][:3] == [("offset", "0.3"), ("offset", "0.4"),
                                                             ("offset", "0.5")]
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("argv", [
    ["ablate", "--grid", "speed=1,2", "--out", "x.csv"],
    ["ablate", "--grid", "theta", "--out", "x.csv"],
    ["eval", "--gt", "a", "--pred", "b", "--criterion", "area:1"],
    ["track"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2
    assert not (tmp_path / "x.csv").exists()


def test_bad_config_exit_2(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[meta]\nschema_version = 1\n[tracker]\nspeed = 3\n")
    assert main(["simulate", "--config", str(cfg), "--out-gt", str(tmp_path / "g"),
                 "--out-det", str(tmp_path / "d")]) == 2
    assert not (tmp_path / "g").exists()


def test_runtime_failure_exit_1_without_partial_output(tmp_path, capsys):
    det, res = tmp_path / "det.txt", tmp_path / "res.txt"
    det.write_text("1,-1,0,0,10,10,0.9,-1,-1,-1\n1,-1,bad\n")
    assert main(["track", "--detections", str(det), "--out", str(res)]) == 1
    assert "line 2" in capsys.readouterr().err
    assert not res.exists()
    assert main(["track", "--detections", str(tmp_path / "missing.txt"), "--out", str(res)]) == 1


def test_config_command_prints_effective_config(capsys):
    assert main(["config", "--preset", "kitti"]) == 0
    out = capsys.readouterr().out
    assert "preset = kitti" in out and "tau = 0.4" in out


def test_outputs_are_byte_identical_across_runs(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[meta]\nschema_version = 1\n[world]\nframes = 40\nn_objects = 6\n")
    digests = []
    for run in range(2):
        d = tmp_path / f"run{run}"
        d.mkdir()
        main(["simulate", "--config", str(cfg), "--seed", "4", "--out-gt", str(d / "gt.txt"),
              "--out-det", str(d / "det.txt")])
        main(["track", "--config", str(cfg), "--detections", str(d / "det.txt"),
              "--out", str(d / "res.txt")])
        main(["eval", "--gt", str(d / "gt.txt"), "--pred", str(d / "res.txt"), "--amota",
              "--out", str(d / "m.csv")])
        digests.append([_sha(d / n) for n in ("gt.txt", "det.txt", "res.txt", "m.csv")])
    assert digests[0] == digests[1]


def test_console_script_with_python_backend(tmp_path, noiseless):
    env = dict(os.environ, POINTTRACK_BACKEND="python")
    det, gt, res = tmp_path / "det.txt", tmp_path / "gt.txt", tmp_path / "res.txt"
    run = lambda *a: subprocess.run([sys.executable, "-m", "pointtrack.cli", *a], env=env,  # noqa: E731
                                    capture_output=True, text=True)
    assert run("simulate", "--config", str(noiseless), "--out-gt", str(gt),
               "--out-det", str(det)).returncode == 0
    assert run("track", "--detections", str(det), "--out", str(res)).returncode == 0
    # same output as the in-process run, whatever backend that one uses
    ref = tmp_path / "ref.txt"
    main(["track", "--detections", str(det), "--out", str(ref)])
    assert res.read_bytes() == ref.read_bytes()
    assert run("track").returncode == 2
