import csv
import hashlib
import json

import numpy as np
import pytest

from trialoffer import cli
from trialoffer.scenario import default_config, save_config
from trialoffer.verify import SuiteReport


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "run.json"
    save_config(default_config().with_overrides(n=8, steps=600, worlds=3), path)
    return path


def test_toy_simulation_outputs(tmp_path, config_path):
    out = tmp_path / "out"
    code = cli.main(["simulate", "--config", str(config_path), "--out", str(out), "--worlds", "2", "--steps", "10"])
    assert code == 0
    header, rows = read_csv(out / "final_downloads.csv")
    assert header == ["world_id", "song_id", "quality", "downloads"]
    assert len(rows) == 2 * 8
    assert {r[1] for r in rows} == {str(i) for i in range(1, 9)}
    header, curve = read_csv(out / "downloads_curve.csv")
    assert header == ["step", "mean_cumulative_downloads", "stderr"]
    assert curve[-1][0] == "10"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_digest"] == hashlib.sha256(config_path.read_bytes()).hexdigest()
    assert manifest["outputs"] == ["downloads_curve.csv", "final_downloads.csv"]
    assert manifest["overrides"] == {"worlds": 2, "steps": 10, "seed": None}
    assert {"tool_version", "started_at", "finished_at"} <= manifest.keys()


def test_outputs_are_byte_identical_across_runs_and_threads(tmp_path, config_path):
    outs = []
    for k, threads in enumerate(("1", "4", "0")):
        out = tmp_path / f"o{k}"
        args = ["simulate", "--config", str(config_path), "--out", str(out), "--threads", threads]
        assert cli.main(args) == 0
        outs.append(out)
    for name in ("downloads_curve.csv", "final_downloads.csv"):
        blobs = {(o / name).read_bytes() for o in outs}
        assert len(blobs) == 1
    other = tmp_path / "seeded"
    cli.main(["simulate", "--config", str(config_path), "--out", str(other), "--seed", "99"])
    assert (other / "final_downloads.csv").read_bytes() != (outs[0] / "final_downloads.csv").read_bytes()


def test_floats_round_trip_exactly(tmp_path, config_path):
    out = tmp_path / "o"
    cli.main(["simulate", "--config", str(config_path), "--out", str(out)])
    _, rows = read_csv(out / "final_downloads.csv")
    qualities = default_config().with_overrides(n=8).catalog().qualities
    for row in rows[:8]:
        assert float(row[2]) == qualities[int(row[1]) - 1]


def test_quality_curve_bends_upward(tmp_path):
    path = tmp_path / "songs.json"
    save_config(default_config().with_overrides(worlds=8), path)
    out = tmp_path / "o"
    assert cli.main(["simulate", "--config", str(path), "--out", str(out), "--threads", "0"]) == 0
    _, rows = read_csv(out / "downloads_curve.csv")
    steps = np.array([int(r[0]) for r in rows])
    mean = np.array([float(r[1]) for r in rows])
    decile = steps[-1] // 10
    first = np.interp(decile, steps, mean) / decile
    last = (mean[-1] - np.interp(steps[-1] - decile, steps, mean)) / decile
    assert last >= first


def _efficiency(out):
    header, rows = read_csv(out / "efficiency_table.csv")
    assert header == ["policy", "condition", "downloads_per_trial", "stderr"]
    return {(r[0], r[1]): float(r[2]) for r in rows}


def test_compare_quality_beats_random(tmp_path, config_path):
    out = tmp_path / "cmp"
    code = cli.main(
        ["compare", "--config", str(config_path), "--policies", "quality,random", "--out", str(out), "--worlds", "10"]
    )
    assert code == 0
    table = _efficiency(out)
    assert table[("quality", "SI")] >= table[("random", "SI")]
    for tag in ("quality_SI", "random_SI"):
        assert (out / f"curve_{tag}.csv").exists()
        assert (out / f"final_downloads_{tag}.csv").exists()
    header, _ = read_csv(out / "predictability.csv")
    assert header == ["policy", "condition", "top_win_rate", "unpredictability"]


def test_compare_social_beats_independent(tmp_path, config_path):
    out = tmp_path / "cmp"
    code = cli.main(
        ["compare", "--config", str(config_path), "--policies", "quality:SI,quality:IN", "--out", str(out), "--worlds", "10"]
    )
    assert code == 0
    table = _efficiency(out)
    assert table[("quality", "SI")] >= table[("quality", "IN")]


@pytest.mark.parametrize("policies", ["quality", "quality:SI", "quality,quality:SI", "quality,greedy", "quality:XX,random"])
def test_compare_usage_errors(tmp_path, config_path, policies, capsys):
    code = cli.main(["compare", "--config", str(config_path), "--policies", policies, "--out", str(tmp_path / "o")])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_verify_example_report(tmp_path, capsys):
    out = tmp_path / "rep"
    assert cli.main(["verify", "--suite", "example1", "--seed", "3", "--out", str(out)]) == 0
    report = json.loads((out / "verify_example1.json").read_text())
    assert report["suite"] == "example1" and report["seed"] == 3
    assert report["passed"] is True and report["failures"] == []
    assert report["checks"] > 0 and "rounded_values" in report["tolerances"]
    assert capsys.readouterr().out.startswith("PASS example1")


def test_verify_failure_exit_code(tmp_path, monkeypatch):
    def broken(seed):
        rep = SuiteReport("broken", seed)
        rep.check(False, "always fails")
        return rep

    monkeypatch.setitem(cli.SUITES, "broken", broken)
    assert cli.main(["verify", "--suite", "broken", "--out", str(tmp_path)]) == 1
    assert json.loads((tmp_path / "verify_broken.json").read_text())["failures"] == ["always fails"]


def test_verify_unknown_suite():
    assert cli.main(["verify", "--suite", "theorem9"]) == 2


def test_bad_config_and_missing_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"products": {"n": 3}}\n')
    assert cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "missing required field" in capsys.readouterr().err
    assert cli.main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 2


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["simulate", "--out", "x"],
        ["simulate", "--config", "c.json", "--out", "x", "--worlds", "0"],
        ["simulate", "--config", "c.json", "--out", "x", "--seed", "-1"],
        ["verify", "--suite", "example1", "--seed", str(2**64)],
    ],
)
def test_argument_errors_exit_2(argv):
    with pytest.raises(SystemExit) as info:
        cli.main(argv)
    assert info.value.code == 2
