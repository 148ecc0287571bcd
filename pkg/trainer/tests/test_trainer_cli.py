"""End-to-end checks for the trajanom-train command."""

import pytest

from trajanom.ingest import write_tracks
from trajanom.predictor import load_weights
from trajanom.synth import SceneSpec, generate
from trajanom_trainer.cli import main


@pytest.fixture
def track_file(tmp_path):
    spec = SceneSpec(seed=21, video_id="walkers", frame_count=40,
                     n_pedestrians=2, frame_width=900.0, frame_height=700.0)
    tracks = generate(spec)[0]
    path = tmp_path / "walkers.csv"
    with open(path, "w", encoding="utf-8") as fh:
        write_tracks({spec.video_id: tracks}, fh)
    return path


def run(args):
    return main([str(a) for a in args])


def test_train_export_and_log(track_file, tmp_path):
    out = tmp_path / "weights.btlw"
    log = tmp_path / "train.log"
    code = run([track_file, "--epochs", 2, "--tau", 3, "--delta", 3,
                "--hidden", 8, "--latent", 2, "--seed", 4,
                "--out", out, "--log", log])
    assert code == 0
    container = load_weights(out)
    assert container.config.hidden_size == 8
    assert container.config.latent_dim == 2
    lines = log.read_text().splitlines()
    assert lines[0] == "#trainlog v1"
    assert lines[1] == "epoch,train_loss,val_loss,lr"
    assert len(lines) == 4


def test_directory_input_skips_non_track_csv(track_file, tmp_path):
    (tmp_path / "notes.csv").write_text("just,a,table\n1,2,3\n")
    out = tmp_path / "weights.btlw"
    code = run([tmp_path, "--epochs", 1, "--tau", 3, "--delta", 3,
                "--hidden", 8, "--latent", 2, "--out", out])
    assert code == 0
    assert load_weights(out).config.tau == 3


def test_log_goes_to_stderr_without_log_flag(track_file, tmp_path, capsys):
    out = tmp_path / "weights.btlw"
    code = run([track_file, "--epochs", 1, "--tau", 3, "--delta", 3,
                "--hidden", 8, "--latent", 2, "--out", out])
    assert code == 0
    err = capsys.readouterr().err
    assert "#trainlog v1" in err
    assert f"exported {out}" in err


def test_divergence_exits_nonzero_with_partial_log(track_file, tmp_path, capsys):
    out = tmp_path / "weights.btlw"
    log = tmp_path / "train.log"
    code = run([track_file, "--epochs", 30, "--tau", 3, "--delta", 3,
                "--hidden", 8, "--latent", 2, "--lr", "1e12",
                "--out", out, "--log", log])
    assert code == 1
    assert "error:" in capsys.readouterr().err
    assert not out.exists()
    assert log.read_text().startswith("#trainlog v1")


def test_missing_input_exits_nonzero(tmp_path, capsys):
    code = run([tmp_path / "absent.csv", "--epochs", 1,
                "--out", tmp_path / "w.btlw"])
    assert code == 1
    assert "error:" in capsys.readouterr().err
