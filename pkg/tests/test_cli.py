import subprocess
import sys

import pytest

from triembed.cli import main

SMALL = ["--concepts", "10", "--train", "20", "--val", "5", "--grid", "2", "--audio-frames", "16"]
TRAIN = ["--epochs", "2", "--batch-size", "5", "--eval-every", "1", "--image-channels", "4,4,4",
         "--audio-channels", "4,4", "--emb-size", "4"]


def test_synth_twice_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--seed", "7", "--out", str(tmp_path / name), *SMALL]) == 0
    for f in ("manifest.tsv", "payloads.bin"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_missing_config_names_path(tmp_path, capsys):
    main(["synth", "--out", str(tmp_path), *SMALL])
    code = main(["train", "--manifest", str(tmp_path / "manifest.tsv"), "--config", "missing.cfg"])
    assert code != 0
    assert "missing.cfg" in capsys.readouterr().err


def test_unknown_command_and_flag(capsys):
    assert main(["fly"]) != 0
    assert "usage" in capsys.readouterr().err
    assert main(["synth", "--colour", "red"]) != 0
    assert "usage" in capsys.readouterr().err


def test_train_then_eval(tmp_path, capsys):
    main(["synth", "--out", str(tmp_path / "c"), *SMALL])
    manifest = str(tmp_path / "c" / "manifest.tsv")
    assert main(["train", "--manifest", manifest, "--out", str(tmp_path / "run"), *TRAIN]) == 0
    for f in ("loss.csv", "metrics.csv", "checkpoint.bin", "config.cfg", "loss.png", "recall.png"):
        assert (tmp_path / "run" / f).stat().st_size > 0
    assert main(["eval", "--manifest", manifest, "--checkpoint", str(tmp_path / "run" / "checkpoint.bin"),
                 "--out", str(tmp_path / "ev")]) == 0
    lines = (tmp_path / "ev" / "metrics.csv").read_text().splitlines()
    assert lines[0].startswith("# seed=0,") and lines[1] == "epoch,direction,k,recall"
    assert (tmp_path / "ev" / "recall.png").exists()
    assert "R@1" in capsys.readouterr().out


def test_repeated_train_byte_identical(tmp_path):
    main(["synth", "--out", str(tmp_path / "c"), *SMALL])
    manifest = str(tmp_path / "c" / "manifest.tsv")
    for name in ("r1", "r2"):
        assert main(["train", "--manifest", manifest, "--out", str(tmp_path / name), *TRAIN]) == 0
    for f in ("loss.csv", "metrics.csv", "checkpoint.bin", "config.cfg", "loss.png"):
        assert (tmp_path / "r1" / f).read_bytes() == (tmp_path / "r2" / f).read_bytes()


def test_flags_override_config_and_preset(tmp_path):
    main(["synth", "--out", str(tmp_path / "c"), *SMALL])
    cfg = tmp_path / "x.cfg"
    cfg.write_text("epochs = 5\neta = 0.25\n")
    assert main(["train", "--manifest", str(tmp_path / "c" / "manifest.tsv"), "--out", str(tmp_path / "run"),
                 "--config", str(cfg), "--preset", "places", *TRAIN]) == 0
    saved = (tmp_path / "run" / "config.cfg").read_text()
    assert "epochs = 2" in saved and "eta = 0.25" in saved and "modes = MISA,MIST,STMA" in saved


def test_prep_writes_manifest_and_drops(tmp_path):
    (tmp_path / "a.csv").write_text("video_id,start_s,end_s,text,language\n"
                                    "v1,1.0,1.5,opening the fridge door,en\nv1,4.0,5.0,apri frigo,it\n")
    (tmp_path / "n.csv").write_text("video_id,start_s,end_s,text\nv1,1.2,2.0,open fridge\nv1,7.0,8.0,cut onion\n")
    assert main(["prep", "--actions", str(tmp_path / "a.csv"), "--narrations", str(tmp_path / "n.csv"),
                 "--out", str(tmp_path / "p"), "--fps", "10"]) == 0
    rows = [l for l in (tmp_path / "p" / "manifest.tsv").read_text().splitlines() if not l.startswith("#")]
    # clip spans frames 10..15 (F=6): offsets round(i*5/6) for i=1..5 are 1,2,3,3,4
    assert [r.split("\t")[3] for r in rows] == [f"v1/frame_{i:07d}.jpg" for i in (11, 12, 13, 13, 14)]
    assert rows[0].split("\t")[4] == "v1.pcm#0.900-2.000"
    drops = (tmp_path / "p" / "drops.csv").read_text()
    assert "non_language,1" in drops and "unmatched_narration,1" in drops


@pytest.mark.slow
def test_gradcheck_default_suite_exits_zero():
    proc = subprocess.run([sys.executable, "-m", "triembed", "gradcheck"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert "max relative error" in proc.stdout


def test_oracle_check_command():
    assert main(["oracle-check", "--instances", "10"]) == 0
