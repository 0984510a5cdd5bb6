import json
import math

import pytest

from packspec import cli, space as sp


@pytest.fixture
def circle_file(tmp_path):
    path = tmp_path / "c.json"
    assert cli.main(["gen", "circle", "--L", repr(2 * math.pi), "--n", "24", "--out", str(path)]) == 0
    return path


def run(capsys, argv):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def strip_timestamp(text):
    doc = json.loads(text)
    doc.pop("timestamp")
    return json.dumps(doc, sort_keys=True)


def test_gen_writes_loadable_space(circle_file, tmp_path):
    s = sp.load(circle_file)
    assert s.n == 24
    assert not [p for p in tmp_path.iterdir() if p.name.endswith(".tmp")]


def test_pack_json(capsys, circle_file):
    code, out, _ = run(capsys, ["pack", "--space", str(circle_file), "--k", "3", "--mode", "exact"])
    assert code == 0
    doc = json.loads(out)
    assert doc["schema_version"] == 1
    assert doc["config"]["k"] == 3
    assert doc["result"]["radius"] == pytest.approx(math.pi / 4)
    assert "timestamp" in doc


def test_pack_sweep_csv(capsys, circle_file):
    code, out, _ = run(capsys, ["pack", "--space", str(circle_file), "--k", "1", "--sweep-k", "4"])
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "# schema_version=1"
    assert len(lines) == 2 + 3
    k, pk, law = lines[-1].split(",")
    assert float(law) == pytest.approx(int(k) * float(pk))


def test_validation_errors_exit_1(capsys, tmp_path, circle_file):
    code, _, err = run(capsys, ["pack", "--space", str(tmp_path / "missing.json"), "--k", "1"])
    assert code == 1 and "not found" in err
    code, _, err = run(capsys, ["pack", "--k", "1"])
    assert code == 1 and "--space" in err
    code, _, _ = run(capsys, ["eig", "--space", str(circle_file), "--support", "1,2", "--p", "500"])
    assert code == 1
    code, _, _ = run(capsys, ["eig", "--space", str(circle_file), "--support", "a,b", "--p", "4"])
    assert code == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 1, "n": 3, "edges": [[0, 1, 1.0]]}))
    code, _, _ = run(capsys, ["pack", "--space", str(bad), "--k", "1"])
    assert code == 1


def test_strict_non_convergence_exit_2(capsys, circle_file):
    argv = ["eig", "--space", str(circle_file), "--support", ",".join(map(str, range(1, 12))),
            "--p", "8", "--max-iter", "1", "--restarts", "2"]
    code, out, _ = run(capsys, argv)
    assert code == 0
    assert json.loads(out)["result"]["status"] != "converged"
    code, _, err = run(capsys, argv + ["--strict"])
    assert code == 2 and "converge" in err


def test_sweep_is_deterministic(capsys, circle_file):
    argv = ["sweep", "--space", str(circle_file), "--k", "1", "--p", "4,8,16", "--seed", "7",
            "--restarts", "2"]
    _, a, _ = run(capsys, argv)
    _, b, _ = run(capsys, argv)
    assert strip_timestamp(a) == strip_timestamp(b)
    _, c1, _ = run(capsys, argv + ["--format", "csv"])
    _, c2, _ = run(capsys, argv + ["--format", "csv"])
    assert c1 == c2 and c1.startswith("# schema_version=1\n")


def test_fakespec_and_threads_env(capsys, circle_file, monkeypatch):
    monkeypatch.setenv("PACKSPEC_THREADS", "3")
    code, out, _ = run(capsys, ["fakespec", "--space", str(circle_file), "--k", "1", "--p", "8",
                                "--restarts", "2", "--strict"])
    assert code == 0
    doc = json.loads(out)
    assert doc["config"]["threads"] == 3
    assert doc["result"]["lambda_under"] <= doc["result"]["lambda_bar"] * (1 + 1e-9)
    monkeypatch.setenv("PACKSPEC_THREADS", "many")
    code, _, _ = run(capsys, ["pack", "--space", str(circle_file), "--k", "1"])
    assert code == 1


def test_morrey_commands(capsys, circle_file):
    code, out, _ = run(capsys, ["morrey", "--cd", "4", "--cp", "1", "--sigma", "2", "--p", "8"])
    assert code == 0
    res = json.loads(out)["result"]
    assert res["s"] == 2 and res["C"] == 10
    code, out, _ = run(capsys, ["morrey", "check", "--space", str(circle_file), "--f", "dist:0",
                                "--p", "16"])
    assert code == 0
    assert json.loads(out)["result"]["holder"]["pass"]
    code, _, _ = run(capsys, ["morrey", "--p", "8"])
    assert code == 1


def test_audit_and_refine(capsys, circle_file):
    code, out, _ = run(capsys, ["audit", "--space", str(circle_file), "--k-max", "1", "--p", "2,3",
                                "--strategy", "local", "--restarts", "2"])
    assert code == 0
    assert json.loads(out)["result"]["summary"]["violations"] == 0
    code, out, _ = run(capsys, ["refine", "--generator", "circle", "--n-list", "12,24,48",
                                "--quantity", "pack", "--k", "3", "--L", repr(2 * math.pi)])
    assert code == 0
    rows = json.loads(out)["result"]["rows"]
    assert [r["value"] for r in rows] == pytest.approx([2 * math.pi / 8] * 3)


def test_atomic_output_file(tmp_path, circle_file):
    out = tmp_path / "sub" / "pack.json"
    assert cli.main(["pack", "--space", str(circle_file), "--k", "1", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["result"]["k_plus_1"] == 2
    assert sorted(p.name for p in out.parent.iterdir()) == ["pack.json"]
