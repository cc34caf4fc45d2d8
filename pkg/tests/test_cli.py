import os
from pathlib import Path

import pytest

from fairfl.cli import main
from fairfl.metrics import read_round_csv

ROOT = Path(__file__).resolve().parents[1]


def _write(tmp_path, name, clients=3, malicious=0, start=0, rounds=6, scenario=None, extra=""):
    text = (f"[experiment]\nname = {name}\nscenario = {scenario or name}\nnum_rounds = {rounds}\n"
            f"num_malicious = {malicious}\noutput_dir = out/{name}\n[partition]\nnum_clients = {clients}\n{extra}")
    if malicious:
        text += f"[attack]\nstart_round = {start}\n"
    path = tmp_path / f"{name}.ini"
    path.write_text(text)
    return path


def test_run_writes_outputs_under_output_dir(tmp_path, capsys):
    cfg = _write(tmp_path, "solo", malicious=1, start=2)
    out = tmp_path / "dest"
    before = set(os.listdir(tmp_path))
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 0
    assert set(os.listdir(tmp_path)) == before | {"dest"}
    assert sorted(p.name for p in out.iterdir()) == ["config.ini", "report.json", "report.txt", "rounds.csv"]
    assert len(read_round_csv(out / "rounds.csv")) == 6
    stdout = capsys.readouterr().out
    assert "active from round 2 to round 5" in stdout


def test_run_quiet_prints_nothing(tmp_path, capsys):
    cfg = _write(tmp_path, "q")
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o"), "--quiet"]) == 0
    assert capsys.readouterr().out == ""


def test_resolved_config_reruns_identically(tmp_path):
    cfg = _write(tmp_path, "r", malicious=1)
    main(["run", str(cfg), "--output-dir", str(tmp_path / "a"), "--quiet", "--seed", "4"])
    main(["run", str(tmp_path / "a/config.ini"), "--output-dir", str(tmp_path / "b"), "--quiet"])
    assert (tmp_path / "a/rounds.csv").read_bytes() == (tmp_path / "b/rounds.csv").read_bytes()


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nnum_malicious = 2\n[partition]\nnum_clients = 3\n[attack]\n")
    assert main(["run", str(bad)]) == 2
    assert "non-majority" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.ini")]) == 2
    assert main(["run", str(_write(tmp_path, "s")), "--seed", "-1"]) == 2


def _narrow_csv(tmp_path):
    # parses fine but has 2 features while the model expects 32, so the run fails
    path = tmp_path / "narrow.csv"
    path.write_text("f0,f1,label\n" + "".join(f"{i}.0,1.0,{i % 10}\n" for i in range(40)))
    return f"[data]\nsource = csv\npath = {path}\n"


def test_run_failure_exits_1(tmp_path, capsys):
    cfg = _write(tmp_path, "csvbad", extra=_narrow_csv(tmp_path))
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 1
    assert "run failed" in capsys.readouterr().err


def _suite_configs(tmp_path):
    paths = []
    for n in (3, 10, 30):
        paths.append(_write(tmp_path, f"base_{n}", clients=n, scenario="Baseline"))
        paths.append(_write(tmp_path, f"late_{n}", clients=n, malicious=1, start=3, scenario="Round 3"))
        paths.append(_write(tmp_path, f"full_{n}", clients=n, malicious=1, scenario="Full"))
    return paths


def test_suite_table_layout_and_rerun_identity(tmp_path, capsys):
    paths = [str(p) for p in _suite_configs(tmp_path)]
    assert main(["suite", *paths, "--output-dir", str(tmp_path / "s1")]) == 0
    table = (tmp_path / "s1/suite_table.txt").read_text()
    lines = table.splitlines()
    assert "3 clients" in lines[0] and "10 clients" in lines[0] and "30 clients" in lines[0]
    rows = lines[3:]
    assert [r.split()[0] for r in rows] == ["Baseline", "Round", "Full"]
    for r in rows:
        assert len(r.replace("Round 3", "Round3").split()) == 1 + 9
    assert (tmp_path / "s1/full_30/rounds.csv").exists()
    assert main(["suite", *paths, "--output-dir", str(tmp_path / "s2"), "--quiet"]) == 0
    assert (tmp_path / "s2/suite_table.txt").read_text() == table
    assert (tmp_path / "s2/suite_table.csv").read_bytes() == (tmp_path / "s1/suite_table.csv").read_bytes()


def test_suite_continues_past_failing_scenario(tmp_path, capsys):
    good = _write(tmp_path, "good")
    broken = _write(tmp_path, "broken", extra=_narrow_csv(tmp_path))
    invalid = tmp_path / "invalid.ini"
    invalid.write_text("[experiment]\nname = invalid\nbogus = 1\n")
    good2 = _write(tmp_path, "good2", clients=10)
    code = main(["suite", str(good), str(broken), str(invalid), str(good2), "--output-dir", str(tmp_path / "s")])
    assert code == 1
    out = capsys.readouterr()
    assert "scenario broken failed" in out.err
    assert (tmp_path / "s/good/rounds.csv").exists() and (tmp_path / "s/good2/rounds.csv").exists()
    table = (tmp_path / "s/suite_table.txt").read_text()
    assert "FAILED broken" in table and "invalid.ini" in table


def test_suite_rejects_duplicate_names(tmp_path):
    a = _write(tmp_path, "same")
    assert main(["suite", str(a), str(a), "--output-dir", str(tmp_path / "s")]) == 2


def test_shipped_configs_parse():
    from fairfl.config import parse_config
    names = {parse_config(p).name for p in (ROOT / "configs").glob("*.ini")}
    assert {"baseline_3", "late_10", "full_30", "full_3_clipped"} <= names


def test_module_entry_point_help(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--help"])
    assert info.value.code == 0
    assert "suite" in capsys.readouterr().out
