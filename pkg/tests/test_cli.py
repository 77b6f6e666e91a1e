import io
import json
import re

import pytest

from imeasure.cli import main

SCALAR_PAIR = {"measure": {"E": {"dim": 1, "norm": "sum"}, "F": {"dim": 1, "norm": "sum"},
                           "head": [[[1]], [[-2]]]}}


def run(argv, stdin, monkeypatch, capsys):
    monkeypatch.setattr("sys.stdin", io.StringIO(stdin if isinstance(stdin, str)
                                                 else json.dumps(stdin)))
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_semivar_prints_three(monkeypatch, capsys):
    code, out, _ = run(["semivar"], SCALAR_PAIR, monkeypatch, capsys)
    assert code == 0
    assert json.loads(out)["value"] == 3.0


def test_empty_set_semivariation(monkeypatch, capsys):
    data = dict(SCALAR_PAIR, set={"kind": "finite", "indices": []})
    code, out, _ = run(["semivar"], data, monkeypatch, capsys)
    assert code == 0 and json.loads(out)["value"] == 0.0


def test_variation_and_integrate(monkeypatch, capsys):
    code, out, _ = run(["variation"], SCALAR_PAIR, monkeypatch, capsys)
    assert code == 0 and json.loads(out)["value"] == 3.0
    data = dict(SCALAR_PAIR, function={"head": [[2.0], [1.0]]})
    code, out, _ = run(["integrate"], data, monkeypatch, capsys)
    assert code == 0 and json.loads(out)["value"] == [0.0]


def test_linfty_instance_fails_verification(monkeypatch, capsys):
    code, out, _ = run(["linfty-demo", "--n", "8", "--emit-instance"], "", monkeypatch, capsys)
    assert code == 0
    code, out, _ = run(["verify-bnc"], out, monkeypatch, capsys)
    assert code == 1
    witness = json.loads(out)
    assert witness["verified"] is False and witness["atom"] == "1/8"


def test_geometric_sequence_verifies(monkeypatch, capsys):
    H = 30
    measure = {"E": {"dim": 1, "norm": "sum"}, "F": {"dim": 1, "norm": "sum"},
               "head": [[[2.0**-n]] for n in range(1, H + 1)],
               "tail": {"pattern": [[1.0]], "coeff": 2.0**-H, "ratio": 0.5}}
    terms = [{"head": [[1.0 if n < m else 0.0] for n in range(H)], "tailValue": [0.0]}
             for m in range(1, H + 1)]
    limit = {"head": [[1.0]] * H, "tailValue": [1.0]}
    data = {"measure": measure, "sequence": {"terms": terms, "limit": limit, "bound": 1},
            "epsilon": 1e-4}
    for cmd in ("verify-bnc", "verify-bwc", "verify-bwstarc"):
        code, out, _ = run([cmd], data, monkeypatch, capsys)
        assert code == 0, out
    code, out, _ = run(["verify-bnc", "--format", "csv"], data, monkeypatch, capsys)
    lines = out.splitlines()
    assert lines[0] == "m,residual"
    assert float(lines[3].split(",")[1]) == 2.0**-3


def test_check_ac_returns_witness(monkeypatch, capsys):
    data = dict(SCALAR_PAIR, nu={"weights": [0.0, 1.0]})
    code, out, _ = run(["check-ac"], data, monkeypatch, capsys)
    assert code == 1
    assert json.loads(out)["witness"] == {"kind": "finite", "indices": [0]}


def test_control_measure_command(monkeypatch, capsys):
    code, out, _ = run(["control-measure", "--seed", "4"], SCALAR_PAIR, monkeypatch, capsys)
    rep = json.loads(out)
    assert code == 0 and rep["weights"] == [1.0, 2.0]
    assert all(row["delta"] > 0 for row in rep["delta"])


def test_closure_commands(monkeypatch, capsys):
    data = {"grid": {"points": [0.0, 1.0]}, "target": [1.0, 0.0],
            "set": {"generators": [[0.0, 1.0]], "mode": "span"}}
    code, out, _ = run(["closure-dist"], data, monkeypatch, capsys)
    assert code == 0 and json.loads(out)["distance"] == pytest.approx(1.0, abs=1e-9)
    code, out, _ = run(["separate"], data, monkeypatch, capsys)
    rep = json.loads(out)
    assert code == 0 and rep["inside"] is False and rep["gap"] > 0.99
    data["target"] = [0.0, 2.0]
    code, out, _ = run(["separate"], data, monkeypatch, capsys)
    assert json.loads(out)["inside"] is True


def test_distance_basis_csv(monkeypatch, capsys):
    code, out, _ = run(["distance-basis", "--m", "64", "--k", "2", "4", "--format", "csv"],
                       "", monkeypatch, capsys)
    assert code == 0
    assert out.splitlines()[0] == "k,error"
    assert len(out.splitlines()) == 3


def test_search_and_ubd(monkeypatch, capsys):
    code, out, _ = run(["metric-null-search", "--trials", "30000"], "", monkeypatch, capsys)
    assert code == 0 and json.loads(out)["status"] == "FOUND"
    code, out, _ = run(["metric-null-search", "--n-max", "2", "--trials", "100"], "",
                       monkeypatch, capsys)
    assert json.loads(out)["status"] == "NOT_FOUND"
    code, out, _ = run(["ubd-demo", "--windows", "1", "10"], "", monkeypatch, capsys)
    assert code == 0 and json.loads(out)["ranks"] == [1, 10]


def test_oracle_suite_json_lines(monkeypatch, capsys):
    code, out, _ = run(["oracle-suite", "--count", "2"], "", monkeypatch, capsys)
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 10
    assert all(json.loads(line)["verdict"] == "PASS" for line in lines)


def test_malformed_json_reports_position(monkeypatch, capsys):
    code, _, err = run(["semivar"], '{"measure":\n  [1, }', monkeypatch, capsys)
    assert code == 2
    assert "line 2, column" in err


def test_schema_errors_exit_two(monkeypatch, capsys):
    code, _, err = run(["semivar"], {"measure": {"E": {"dim": 1}}}, monkeypatch, capsys)
    assert code == 2 and "missing field" in err
    bad = dict(SCALAR_PAIR, set={"kind": "cofinite", "indices": []})
    code, _, _ = run(["semivar"], bad, monkeypatch, capsys)
    assert code == 2


def test_unknown_command_shows_usage(capsys):
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_reports_are_byte_identical(monkeypatch, capsys):
    outs = [run(["semivar", "--seed", "5", "--method", "alternating"], SCALAR_PAIR,
                monkeypatch, capsys)[1] for _ in range(2)]
    assert outs[0] == outs[1]


def test_numbers_carry_many_digits(monkeypatch, capsys):
    _, out, _ = run(["control-measure"], SCALAR_PAIR, monkeypatch, capsys)
    for num in re.findall(r"-?\d\.\d+e[+-]\d+", out):
        assert len(num.split("e")[0].lstrip("-").replace(".", "")) >= 12


def test_out_flag(tmp_path, monkeypatch, capsys):
    target = tmp_path / "r.json"
    code, out, _ = run(["semivar", "--out", str(target)], SCALAR_PAIR, monkeypatch, capsys)
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["value"] == 3.0


def test_input_file(tmp_path, capsys):
    path = tmp_path / "m.json"
    path.write_text(json.dumps(SCALAR_PAIR))
    assert main(["variation", "--input", str(path)]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == 3.0
    assert main(["variation", "--input", str(tmp_path / "missing.json")]) == 2
