import csv
import json
from pathlib import Path

import pytest

from landfall.cli import (
    EXIT_BACKEND,
    EXIT_GATE,
    EXIT_SAFE,
    EXIT_TIMEOUT,
    EXIT_USAGE,
    main,
)
from landfall.judge import ENV_API_KEY, ENV_MODEL, ENV_URL
from landfall.metrics import CSV_COLUMNS
from landfall.trace import read_trace, validate_events

HIGHWAY = str(Path(__file__).parent / "fixtures" / "highway.scene")


@pytest.fixture(autouse=True)
def no_judge_env(monkeypatch):
    for var in (ENV_URL, ENV_MODEL, ENV_API_KEY):
        monkeypatch.delenv(var, raising=False)


# -- run ----------------------------------------------------------------------

def test_run_safe_exit_zero(smoke_scene_file, capsys):
    code = main(["run", "--scene", str(smoke_scene_file), "--noise-sigma", "0"])
    assert code == EXIT_SAFE
    out = capsys.readouterr().out
    assert "smoke seed=7: safe confirmed on rooftop" in out


def test_run_writes_trace_and_reports(smoke_scene_file, tmp_path):
    trace = tmp_path / "ep.jsonl"
    rj, rc = tmp_path / "r.json", tmp_path / "r.csv"
    code = main([
        "run", "--scene", str(smoke_scene_file), "--noise-sigma", "0",
        "--trace", str(trace), "--report-json", str(rj), "--report-csv", str(rc),
    ])
    assert code == EXIT_SAFE
    validate_events(read_trace(trace))
    doc = json.loads(rj.read_text())
    assert doc["schema"] == "landfall-report/1"
    assert doc["aggregate"]["episodes"] == 1
    with open(rc, newline="") as fh:
        records = list(csv.reader(fh))
    assert records[0] == CSV_COLUMNS and len(records) == 2


def test_run_timeout_exit_three(capsys):
    code = main(["run", "--scene", HIGHWAY, "--noise-sigma", "0"])
    assert code == EXIT_TIMEOUT
    assert "timeout_forced" in capsys.readouterr().out


def test_run_launch_override(smoke_scene_file):
    code = main([
        "run", "--scene", str(smoke_scene_file), "--noise-sigma", "0",
        "--launch", "20", "28", "45",
    ])
    assert code == EXIT_SAFE


def test_run_launch_arity_error(smoke_scene_file, capsys):
    code = main([
        "run", "--scene", str(smoke_scene_file), "--launch", "20", "28",
    ])
    assert code == EXIT_USAGE
    assert "NORTH EAST ALT" in capsys.readouterr().err


def test_unknown_flag_exits_usage(smoke_scene_file, capsys):
    code = main(["run", "--scene", str(smoke_scene_file), "--bogus"])
    assert code == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_scene_or_preset_required(capsys):
    assert main(["run"]) == EXIT_USAGE
    assert "required" in capsys.readouterr().err


def test_missing_scene_file_exits_usage(capsys):
    code = main(["run", "--scene", "no/such/file.scene"])
    assert code == EXIT_USAGE
    assert "landfall:" in capsys.readouterr().err


def test_run_preset(capsys):
    code = main(["run", "--preset", "scenario1", "--noise-sigma", "0"])
    assert code == EXIT_SAFE
    assert "scenario1" in capsys.readouterr().out


def test_remote_judge_without_env_exits_backend(smoke_scene_file, capsys):
    code = main(["run", "--scene", str(smoke_scene_file), "--judge", "remote"])
    assert code == EXIT_BACKEND
    err = capsys.readouterr().err
    assert "judge backend unavailable" in err
    assert "no judge endpoint configured; set LANDFALL_JUDGE_URL" in err


def test_no_credential_flags(capsys):
    # endpoint, model and key ride only on the environment
    for cmd in ("run", "batch"):
        code = main([cmd, "--help"])
        assert code == 0
        text = capsys.readouterr().out
        assert "--judge {oracle,remote}" in text
        for flag in ("--api", "--key", "--token", "--url", "--model"):
            assert flag not in text


# -- batch --------------------------------------------------------------------

def test_batch_all_safe(smoke_scene_file, tmp_path, capsys):
    traces = tmp_path / "traces"
    code = main([
        "batch", "--scene", str(smoke_scene_file), "--episodes", "3",
        "--noise-sigma", "0", "--trace-dir", str(traces),
    ])
    assert code == EXIT_SAFE
    names = sorted(p.name for p in traces.glob("*.jsonl"))
    assert names == ["smoke_7.jsonl", "smoke_8.jsonl", "smoke_9.jsonl"]
    for p in traces.glob("*.jsonl"):
        validate_events(read_trace(p))
    out = capsys.readouterr().out
    assert "episodes        3" in out
    assert "safe landings   3 (100%)" in out


def test_batch_seed_base(smoke_scene_file, tmp_path):
    traces = tmp_path / "traces"
    code = main([
        "batch", "--scene", str(smoke_scene_file), "--episodes", "2",
        "--seed-base", "100", "--noise-sigma", "0", "--trace-dir", str(traces),
    ])
    assert code == EXIT_SAFE
    assert sorted(p.name for p in traces.glob("*.jsonl")) == [
        "smoke_100.jsonl", "smoke_101.jsonl",
    ]


def test_batch_workers_match_serial(smoke_scene_file, tmp_path):
    kwargs = [
        "batch", "--scene", str(smoke_scene_file), "--episodes", "3",
        "--noise-sigma", "0",
    ]
    r1, r2 = tmp_path / "serial.csv", tmp_path / "parallel.csv"
    assert main(kwargs + ["--report-csv", str(r1)]) == EXIT_SAFE
    assert main(kwargs + ["--report-csv", str(r2), "--workers", "2"]) == EXIT_SAFE
    assert r1.read_bytes() == r2.read_bytes()


def test_batch_timeout_exit_three(capsys):
    code = main(["batch", "--scene", HIGHWAY, "--episodes", "1", "--noise-sigma", "0"])
    assert code == EXIT_TIMEOUT
    assert "timeouts        1" in capsys.readouterr().out


# -- replay -------------------------------------------------------------------

def _traced_run(scene_file, path):
    assert main([
        "run", "--scene", str(scene_file), "--noise-sigma", "0",
        "--trace", str(path),
    ]) == EXIT_SAFE


def test_replay_clean_exit_zero(smoke_scene_file, tmp_path, capsys):
    trace = tmp_path / "ep.jsonl"
    _traced_run(smoke_scene_file, trace)
    code = main(["replay", str(trace), "--scene", str(smoke_scene_file)])
    assert code == EXIT_SAFE
    assert "rounds reproduce exactly" in capsys.readouterr().out


def test_replay_tampered_exit_gate(smoke_scene_file, tmp_path, capsys):
    trace = tmp_path / "ep.jsonl"
    _traced_run(smoke_scene_file, trace)
    events = read_trace(trace)
    doctored = next(e for e in events if "frame_digest" in e)
    doctored["frame_digest"] = "sha256:" + "0" * 64
    with open(trace, "w") as fh:
        for e in events:
            fh.write(json.dumps(e, separators=(",", ":")) + "\n")
    code = main(["replay", str(trace), "--scene", str(smoke_scene_file)])
    assert code == EXIT_GATE
    assert "frame digest" in capsys.readouterr().err


# -- report -------------------------------------------------------------------

def test_report_reproduces_batch_summary(smoke_scene_file, tmp_path, capsys):
    traces = tmp_path / "traces"
    rj1, rj2 = tmp_path / "batch.json", tmp_path / "report.json"
    main([
        "batch", "--scene", str(smoke_scene_file), "--episodes", "2",
        "--noise-sigma", "0", "--trace-dir", str(traces),
        "--report-json", str(rj1),
    ])
    batch_out = capsys.readouterr().out
    code = main([
        "report", str(traces), "--scene", str(smoke_scene_file),
        "--report-json", str(rj2),
    ])
    assert code == EXIT_SAFE
    assert capsys.readouterr().out == batch_out
    assert json.loads(rj1.read_text()) == json.loads(rj2.read_text())


def test_report_empty_dir_is_usage_error(tmp_path, capsys):
    code = main(["report", str(tmp_path)])
    assert code == EXIT_USAGE
    assert "no traces found" in capsys.readouterr().err
