"""Command-line entry points, including a spawned-service smoke test."""

import json
import subprocess
import sys
import time

import pytest
from websockets.sync.client import connect

from rehabcoach.cli import coach_main, eval_main
from rehabcoach.session import PROTOCOL_VERSION
from rehabcoach.skeleton import load_clip


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_corpus")
    rc = coach_main(["corpus", "--out", str(out), "--seed", "1",
                     "--subjects", "2", "--reps", "2"])
    assert rc == 0
    return out


def manifest_entries(corpus_dir):
    lines = (corpus_dir / "manifest.jsonl").read_text().splitlines()
    return [json.loads(line) for line in lines]


def test_corpus_command(corpus_dir, capsys):
    entries = manifest_entries(corpus_dir)
    assert len(entries) == 24
    assert (corpus_dir / "subjects.json").is_file()
    for entry in entries[:3]:
        assert (corpus_dir / entry["path"]).is_file()


def test_replay_command(corpus_dir, tmp_path, capsys):
    clips = [e["path"] for e in manifest_entries(corpus_dir)
             if e["subject_id"] == "S00" and e["exercise"] == "E1"
             and e["side"] == "affected"][:2]
    log_path = tmp_path / "session.jsonl"
    rc = coach_main(["replay",
                     "--clip", *[str(corpus_dir / p) for p in clips],
                     "--out", str(log_path)])
    assert rc == 0
    out_lines = [line for line in capsys.readouterr().out.splitlines()
                 if line.strip()]
    events = [json.loads(line) for line in out_lines]
    assert events[0]["type"] == "state"
    assert events[-1]["type"] == "end"
    assert events[-1]["summary"]["completed"] == {"E1": 2}
    assert log_path.is_file()


def test_tune_then_replay_with_profile(corpus_dir, tmp_path, capsys):
    profiles = tmp_path / "profiles"
    rc = coach_main(["tune", "--corpus", str(corpus_dir),
                     "--subject", "S00", "--profiles-dir", str(profiles)])
    assert rc == 0
    assert "tuned" in capsys.readouterr().out
    profile_path = profiles / "S00.json"
    assert profile_path.is_file()
    clip = next(e["path"] for e in manifest_entries(corpus_dir)
                if e["subject_id"] == "S00" and e["side"] == "affected")
    rc = coach_main(["replay", "--clip", str(corpus_dir / clip),
                     "--profile", str(profile_path)])
    assert rc == 0
    events = [json.loads(line) for line
              in capsys.readouterr().out.splitlines() if line.strip()]
    assert events[-1]["type"] == "end"


def test_train_then_replay_with_models(corpus_dir, tmp_path, capsys):
    models_dir = tmp_path / "models"
    rc = coach_main(["train", "--corpus", str(corpus_dir),
                     "--out", str(models_dir), "--hidden", "16",
                     "--seed", "0"])
    assert rc == 0
    assert "bundles saved" in capsys.readouterr().out
    for ex in ("E1", "E2", "E3"):
        assert (models_dir / ex / "rom.json").is_file()
        assert (models_dir / ex / "weights.json").is_file()
    clip = next(e["path"] for e in manifest_entries(corpus_dir)
                if e["side"] == "affected")
    rc = coach_main(["replay", "--clip", str(corpus_dir / clip),
                     "--models-dir", str(models_dir)])
    assert rc == 0
    events = [json.loads(line) for line
              in capsys.readouterr().out.splitlines() if line.strip()]
    assert events[-1]["type"] == "end"


def test_eval_sweep_command(corpus_dir, tmp_path, capsys):
    out_csv = tmp_path / "sweep.csv"
    rc = eval_main(["sweep", "--corpus", str(corpus_dir),
                    "--windows", "1,9", "--seeds", "3",
                    "--out", str(out_csv)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "V_f=" in out
    assert out_csv.is_file()


@pytest.mark.filterwarnings(
    "ignore:Precision loss occurred:RuntimeWarning")
def test_eval_loso_command(corpus_dir, tmp_path, capsys):
    out_dir = tmp_path / "loso"
    rc = eval_main(["loso", "--corpus", str(corpus_dir),
                    "--variants", "rb-init,rb-tuned",
                    "--out-dir", str(out_dir)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "leakage audit clean" in out
    assert (out_dir / "loso_report.json").is_file()
    assert (out_dir / "loso_folds.csv").is_file()


def test_bad_clip_path_reports_error(capsys):
    rc = coach_main(["replay", "--clip", "/nonexistent/clip.jsonl"])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_served_process_end_to_end(corpus_dir, tmp_path):
    """Spawn the service exactly like an external operator console would."""
    clip_rel = next(e["path"] for e in manifest_entries(corpus_dir)
                    if e["side"] == "affected" and e["exercise"] == "E1")
    clip_path = corpus_dir / clip_rel
    subject_id = load_clip(clip_path).subject_id
    proc = subprocess.Popen(
        [sys.executable, "-m", "rehabcoach.cli", "serve", "--port", "0",
         "--replay", str(clip_path)],
        stdout=subprocess.PIPE, stderr=subprocess.DEVNULL, text=True)
    try:
        line = proc.stdout.readline()
        assert line.startswith("listening on ws://"), line
        url = line.split()[-1].strip()
        with connect(url) as ws:
            ws.send(json.dumps({
                "type": "hello", "protocol_version": PROTOCOL_VERSION,
                "session_id": "cli-e2e",
                "config": {"subject_id": subject_id,
                           "prescription": [["E1", 1]], "arm": "left"}}))
            deadline = time.monotonic() + 30.0
            ws.send(json.dumps({"type": "ready"}))
            ws.send(json.dumps({"type": "start_cue"}))
            saw_movement = False
            while time.monotonic() < deadline:
                msg = json.loads(ws.recv(timeout=10))
                if msg.get("type") == "state" and msg.get("name") == "movement":
                    saw_movement = True
                if msg.get("type") == "end":
                    break
            else:
                pytest.fail("no end message from the served session")
            assert saw_movement
            assert msg["summary"]["completed"] == {"E1": 1}
    finally:
        proc.terminate()
        proc.wait(timeout=10)
