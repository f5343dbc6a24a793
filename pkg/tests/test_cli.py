import json

import pytest

from extremal_shape.cli import main, parse_p_values

GRID = ["--mr", "32", "--mtheta", "32"]


def test_parse_p_values():
    assert parse_p_values("3") == [3.0]
    assert parse_p_values("2,2.5") == [2.0, 2.5]
    assert parse_p_values("2:0.5:6") == [2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0]


def test_solve_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["solve", "--domain", "disc", "--p", "3", *GRID, "--out", str(out)]) == 0
    for name in ("result.json", "field.csv", "report.json"):
        assert (out / name).exists()
    rec = json.loads((out / "result.json").read_text())
    assert rec["config"]["p"] == 3.0 and rec["seed"] == 0 and rec["converged"]
    assert json.loads((out / "report.json").read_text())["config"] == rec["config"]


def test_solve_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["solve", "--p", "2.5", *GRID, "--seed", "4", "--out", str(tmp_path / d)]) == 0
    for name in ("result.json", "field.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_check_roundtrip(tmp_path):
    assert main(["solve", "--p", "3", *GRID, "--out", str(tmp_path / "s")]) == 0
    assert main(["check", str(tmp_path / "s" / "field.csv"), "--out", str(tmp_path / "c")]) == 0
    a = json.loads((tmp_path / "s" / "report.json").read_text())["report"]
    b = json.loads((tmp_path / "c" / "report.json").read_text())["report"]
    for k, v in a.items():
        if isinstance(v, float):
            assert b[k] == pytest.approx(v, rel=1e-12, abs=1e-12)
        else:
            assert b[k] == v


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--p", "1.5", "--domain", "ball", "--N", "3"],
        ["solve", "--p", "7", "--domain", "ball", "--N", "3"],
        ["solve", "--p", "2,3"],
        ["solve", "--domain", "cube"],
        ["nonsense"],
    ],
)
def test_usage_errors_exit_1(argv, tmp_path):
    with pytest.raises(SystemExit) as info:
        code = main([*argv, "--out", str(tmp_path)] if argv[0] != "nonsense" else argv)
        raise SystemExit(code)
    assert info.value.code == 1


def test_sweep_records(tmp_path):
    assert main(["sweep", "--p", "2:0.5:6", *GRID, "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "sweep.jsonl").read_text().splitlines()
    assert len(lines) == 9
    assert [json.loads(x)["config"]["p"] for x in lines] == parse_p_values("2:0.5:6")


def test_sweep_antisym_and_nonconvergence(tmp_path):
    code = main(["sweep", "--p", "2.5,8", "--subspace", "antisym", *GRID, "--max-iters", "1", "--out", str(tmp_path)])
    assert code == 2
    recs = [json.loads(x) for x in (tmp_path / "sweep.jsonl").read_text().splitlines()]
    assert len(recs) == 2
    assert all(r["config"]["subspace"] == "antisymmetric" and r["Lambda"] > 0 for r in recs)


def test_sweep_jobs(tmp_path):
    assert main(["sweep", "--p", "2,3", *GRID, "--jobs", "2", "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "sweep.jsonl").read_text().splitlines()) == 2


def test_env_overrides_out(tmp_path, monkeypatch):
    monkeypatch.setenv("EXTREMAL_SHAPE_OUT", str(tmp_path / "env"))
    assert main(["oracle", "--mode", "ball", "--N", "2", "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env" / "oracle.json").exists()
    assert (tmp_path / "env" / "profile.csv").exists()
    assert not (tmp_path / "flag").exists()


def test_oracle_and_instanton(tmp_path, capsys):
    assert main(["oracle", "--mode", "sobolev", "--N", "3", "--out", str(tmp_path)]) == 0
    assert "S = 5.4779" in capsys.readouterr().out
    assert main(["instanton", "--N", "3", "--eps", "0.05", "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "instanton.json").read_text())["rows"]
    assert rows[0]["quotient"] < rows[0]["bound"]


def test_find_break_bracket_error(tmp_path):
    code = main(["find-break", *GRID, "--p-lo", "2", "--p-hi", "3", "--n-random", "1", "--out", str(tmp_path)])
    assert code == 2
    assert "table" in json.loads((tmp_path / "break.json").read_text())
