import json
import os

import pandas as pd
import pytest

from app.main import EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, build_parser, main
from app.models import GROUP_KEYS, JointId


@pytest.fixture(autouse=True)
def no_cohort_store(monkeypatch):
    monkeypatch.delenv("COHORT_DATABASE_URL", raising=False)


@pytest.fixture
def squat_file(tmp_path):
    out = tmp_path / "synth"
    assert main(["synth", "squats-no-arms", "--reps", "2", "--out", str(out)]) == EXIT_OK
    return out / "squats-no-arms.jsonl"


def test_synth_is_byte_identical_for_a_seed(tmp_path):
    args = ["synth", "lunges", "--reps", "1", "--noise", "1.5", "--seed", "9"]
    assert main([*args, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main([*args, "--out", str(tmp_path / "b")]) == EXIT_OK
    a = (tmp_path / "a" / "lunges.jsonl").read_bytes()
    assert a == (tmp_path / "b" / "lunges.jsonl").read_bytes()
    assert len(a.splitlines()) == 120


def test_analyze_writes_artifacts(squat_file, tmp_path, capsys):
    out = tmp_path / "analysis"
    code = main(["analyze", str(squat_file), "--out", str(out), "--window", "30", "--debug-dump"])

    assert code == EXIT_OK
    assert "overall work" in capsys.readouterr().out
    summary = json.loads((out / "summary.json").read_text())
    assert summary["frame_count"] == 240
    groups = pd.read_csv(out / "groups.csv")
    assert list(groups.columns[1:17]) == list(GROUP_KEYS)
    assert len(groups) == 240
    heatmap = json.loads((out / "heatmap.json").read_text())
    assert set(heatmap) == {"session", "last_window"}
    assert (out / "limbs.svg").read_text().startswith("<svg")
    assert (out / "solver_debug.csv").exists()


def test_analyze_is_reproducible(squat_file, tmp_path):
    for name in ("a", "b"):
        assert main(["analyze", str(squat_file), "--out", str(tmp_path / name)]) == EXIT_OK
    for artifact in ("summary.json", "groups.csv", "heatmap.json", "limbs.svg"):
        assert (tmp_path / "a" / artifact).read_bytes() == (tmp_path / "b" / artifact).read_bytes()


def test_analyze_empty_input(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert main(["analyze", str(empty), "--out", str(tmp_path)]) == EXIT_INPUT
    assert "error:" in capsys.readouterr().err


def test_analyze_missing_file(tmp_path):
    assert main(["analyze", str(tmp_path / "missing.jsonl")]) == EXIT_INPUT


def test_analyze_degenerate_skeleton(tmp_path):
    joints = {j.name: [0.0, 0.0, 0.0] for j in JointId}
    lines = [json.dumps({"t_ms": i * 17, "joints": joints}) for i in range(60)]
    path = tmp_path / "flat.jsonl"
    path.write_text("\n".join(lines) + "\n")
    assert main(["analyze", str(path), "--out", str(tmp_path)]) == EXIT_NUMERIC


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["dance"],
        ["synth", "burpees"],
        ["synth", "lunges", "--reps", "0"],
        ["synth", "lunges", "--seed", "-1"],
        ["measures", "summary.json", "--hr", "hr.csv", "--rpe", "5"],
        ["measures", "summary.json", "--profile", "p.json", "--hr", "hr.csv", "--rpe", "11"],
    ],
)
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == EXIT_USAGE


def test_invalid_config(tmp_path):
    config = tmp_path / "config.json"
    config.write_text("{not json")
    assert main(["synth", "lunges", "--config", str(config), "--out", str(tmp_path)]) == EXIT_INPUT


def test_measures(squat_file, tmp_path, capsys):
    out = tmp_path / "analysis"
    assert main(["analyze", str(squat_file), "--out", str(out)]) == EXIT_OK
    profile = tmp_path / "profile.json"
    profile.write_text('{"age": 25, "mass": 70, "gender": "male"}')
    hr = tmp_path / "hr.csv"
    hr.write_text("t_ms,bpm\n0,190\n1000,200\n")

    code = main(
        [
            "measures",
            str(out / "summary.json"),
            "--profile",
            str(profile),
            "--hr",
            str(hr),
            "--rpe",
            "10",
            "--minutes",
            "30",
            "--out",
            str(out),
        ]
    )

    assert code == EXIT_OK
    measures = json.loads((out / "measures.json").read_text())
    assert measures["verdict"] == "Equal"
    assert measures["rpe_label"] == "max effort"
    assert measures["rpe_predicted_hr"] == 195.0
    assert measures["participant"] is None
    assert "Equal" in capsys.readouterr().out


def test_measures_requires_gender_or_met(squat_file, tmp_path):
    out = tmp_path / "analysis"
    assert main(["analyze", str(squat_file), "--out", str(out)]) == EXIT_OK
    profile = tmp_path / "profile.json"
    profile.write_text('{"age": 25}')
    hr = tmp_path / "hr.csv"
    hr.write_text("t_ms,bpm\n0,120\n")
    argv = ["measures", str(out / "summary.json"), "--profile", str(profile), "--hr", str(hr)]
    assert main([*argv, "--rpe", "5", "--out", str(out)]) == EXIT_INPUT


def test_validate_small_protocol(tmp_path, capsys):
    protocol = tmp_path / "protocol.json"
    protocol.write_text(
        json.dumps(
            {
                "n_subjects": 2,
                "exercises": ["squats-arms", "squats-no-arms"],
                "n_measurements": 2,
                "reps_per_measurement": 1,
            }
        )
    )
    out = tmp_path / "validation"

    assert main(["validate", "--protocol", str(protocol), "--out", str(out)]) == EXIT_OK
    trials = pd.read_csv(out / "trials.csv")
    assert len(trials) == 8
    stats = json.loads((out / "stats.json").read_text())
    assert len(stats["anova"]) == 14
    assert stats["effects"]["checks"]["arm_involvement"]["passed"] is True
    assert (out / "boxplot.csv").exists()
    assert "8 trials" in capsys.readouterr().out


def test_validate_invalid_protocol(tmp_path):
    protocol = tmp_path / "protocol.json"
    protocol.write_text('{"n_subjects": -1}')
    assert main(["validate", "--protocol", str(protocol), "--out", str(tmp_path)]) == EXIT_INPUT


def test_parser_defaults():
    args = build_parser().parse_args(["synth", "lunges"])
    assert (args.reps, args.cadence, args.noise, args.seed, args.mirror) == (5, 0.5, 0.0, 0, False)
    assert args.out == "."
    validate = build_parser().parse_args(["validate"])
    assert validate.jobs == (os.cpu_count() or 1)


def test_validate_is_byte_identical_for_a_seed(tmp_path):
    protocol = tmp_path / "protocol.json"
    protocol.write_text(
        json.dumps(
            {
                "n_subjects": 2,
                "exercises": ["lunges", "squats-no-arms"],
                "n_measurements": 2,
                "reps_per_measurement": 1,
            }
        )
    )
    outputs = []
    for run, jobs in (("a", "1"), ("b", "2")):
        out = tmp_path / run
        argv = ["validate", "--protocol", str(protocol), "--seed", "7", "--noise", "1.0"]
        assert main([*argv, "--jobs", jobs, "--out", str(out)]) == EXIT_OK
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})

    assert outputs[0] == outputs[1]
    assert set(outputs[0]) == {"trials.csv", "stats.json", "boxplot.csv"}
