import csv
import json

import numpy as np
import pytest

from vinclusion.cli import BUILTIN_PROBLEMS, EXIT_DOMAIN, EXIT_OK, EXIT_USAGE, OUT_ENV, main


def _write(tmp_path, name, doc):
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(doc))
    return p


def _builtin(tmp_path, name, **changes):
    doc = json.loads(json.dumps(BUILTIN_PROBLEMS[name]))
    doc.update(changes)
    return _write(tmp_path, name, doc)


def _read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# vinclusion-csv/1")
    rows = list(csv.reader(lines[1:]))
    return lines[0], rows[0], rows[1:]


def _report(out, stem, cmd):
    return json.loads((out / f"{stem}_{cmd}_report.json").read_text())


@pytest.mark.parametrize("name", sorted(BUILTIN_PROBLEMS))
def test_check_passes_on_builtins(tmp_path, name):
    prob = _builtin(tmp_path, name)
    assert main(["check", str(prob), "--out", str(tmp_path / "o")]) == EXIT_OK
    rep = _report(tmp_path / "o", name, "check")
    assert rep["kernel_lint"]["passed"] and rep["field_lint"]["passed"]


def test_check_reports_understated_alpha(tmp_path):
    doc = json.loads(json.dumps(BUILTIN_PROBLEMS["ball-2d"]))
    doc["field"] = {"variant": "affine_ball", "C": [[1.0, 0.0], [0.0, 1.0]], "d": [0.0, 0.0], "rho": 0.5}
    doc["data"] = {"alpha": [0.0] * (doc["N"] + 1)}
    prob = _write(tmp_path, "liar", doc)
    assert main(["check", str(prob), "--out", str(tmp_path)]) == EXIT_DOMAIN
    v = _report(tmp_path, "liar", "check")["field_lint"]["verdicts"]["H3"]
    assert not v["passed"]
    assert {"x", "y", "t"} <= set(v["witness"])


@pytest.mark.parametrize("text", ["{not json", "[]", json.dumps({"schema_version": "nope"})])
def test_malformed_files_exit_2(tmp_path, text):
    p = tmp_path / "bad.json"
    p.write_text(text)
    assert main(["check", str(p), "--out", str(tmp_path)]) == EXIT_USAGE


def test_inconsistent_tables_exit_2(tmp_path):
    prob = _builtin(tmp_path, "reference", data={"alpha": [1.0, 1.0]})
    assert main(["solve", str(prob), "--out", str(tmp_path)]) == EXIT_USAGE
    prob = _builtin(tmp_path, "reference", kernel={"variant": "constant", "matrix": [[1.0, 0.0], [0.0, 1.0]]})
    assert main(["solve", str(prob), "--out", str(tmp_path)]) == EXIT_USAGE
    prob = _builtin(tmp_path, "reference", field={"variant": "hexagon"})
    assert main(["solve", str(prob), "--out", str(tmp_path)]) == EXIT_USAGE


def test_missing_file_and_bad_usage(tmp_path):
    assert main(["check", str(tmp_path / "absent.json")]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE


def test_solve_exponential_table(tmp_path):
    prob = _builtin(tmp_path, "exponential")
    assert main(["solve", str(prob), "--out", str(tmp_path), "--tol", "1e-12"]) == EXIT_OK
    meta, header, rows = _read_csv(tmp_path / "exponential_solve.csv")
    N = BUILTIN_PROBLEMS["exponential"]["N"]
    assert header == ["t", "x1", "u1", "residual"]
    assert len(rows) == N + 1 and f"rows={N + 1}" in meta
    t = np.array([float(r[0]) for r in rows])
    x = np.array([float(r[1]) for r in rows])
    assert np.max(np.abs(x - np.exp(t))) <= 1e-3
    assert rows[-1][2:] == ["", ""]


def test_solve_nonconvergence_exit_1(tmp_path):
    prob = _builtin(tmp_path, "reference")
    code = main(["solve", str(prob), "--out", str(tmp_path), "--seed-selection", "5", "--max-iter", "1"])
    assert code == EXIT_DOMAIN
    assert (tmp_path / "reference_solve.csv").exists()  # partial output kept
    assert _report(tmp_path, "reference", "solve")["solve"]["converged"] is False


def test_select_tables(tmp_path):
    prob = _builtin(tmp_path, "reference", h=[2.0])
    assert main(["select", str(prob), "--out", str(tmp_path)]) == EXIT_OK
    _, header, rows = _read_csv(tmp_path / "reference_select_ledger.csv")
    assert header == ["n", "t", "beta_n", "iii_margin", "increment_bound"]
    assert len(rows) % 257 == 0
    rep = _report(tmp_path, "reference", "select")
    assert rep["ledger"]["passed"]


def test_select_ledger_violation_exit_1(tmp_path):
    N = BUILTIN_PROBLEMS["reference"]["N"]
    prob = _builtin(tmp_path, "reference", h=[2.0],
                    field={"variant": "affine_box", "C": [[3.0]], "d": [0.0], "r": [1.0]},
                    data={"alpha": [0.1] * (N + 1)})
    assert main(["select", str(prob), "--out", str(tmp_path)]) == EXIT_DOMAIN
    assert "witness" in _report(tmp_path, "reference", "select")["violation"]


def test_funnel_oracle_columns(tmp_path):
    prob = _builtin(tmp_path, "reference")
    assert main(["funnel", str(prob), "--out", str(tmp_path), "--K", "8"]) == EXIT_OK
    _, header, rows = _read_csv(tmp_path / "reference_funnel.csv")
    assert header[-2:] == ["envelope_min", "envelope_max"]
    rep = _report(tmp_path, "reference", "funnel")
    assert rep["oracle"]["applies"] and rep["oracle"]["max_outside"] <= 1e-9
    prob = _builtin(tmp_path, "ball-2d")
    assert main(["funnel", str(prob), "--out", str(tmp_path), "--K", "4"]) == EXIT_OK
    _, header, _ = _read_csv(tmp_path / "ball-2d_funnel.csv")
    assert "envelope_min" not in header and header[1:4] == ["x1_min", "x1_max", "x1_centroid"]
    assert _report(tmp_path, "ball-2d", "funnel")["oracle"]["applies"] is False


def test_periodic_command(tmp_path):
    prob = _builtin(tmp_path, "periodic")
    assert main(["periodic", str(prob), "--out", str(tmp_path)]) == EXIT_OK
    rep = _report(tmp_path, "periodic", "periodic")["periodic"]
    assert abs(rep["x0"][0] - 1.0) <= 1e-3 and rep["R_bound_ok"]
    small = _builtin(tmp_path, "periodic", kernel={"variant": "semigroup", "generator": [[0.1]]})
    assert main(["periodic", str(small), "--out", str(tmp_path)]) == EXIT_DOMAIN
    wrong = _builtin(tmp_path, "reference")
    assert main(["periodic", str(wrong), "--out", str(tmp_path)]) == EXIT_USAGE


def test_output_directory_from_environment(tmp_path, monkeypatch):
    prob = _builtin(tmp_path, "reference")
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "envout"))
    assert main(["check", str(prob)]) == EXIT_OK
    assert (tmp_path / "envout" / "reference_check_report.json").exists()


def test_example_round_trip(tmp_path, capsys):
    assert main(["example", "fading-box"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc == BUILTIN_PROBLEMS["fading-box"]


@pytest.mark.parametrize("cmd,extra", [("solve", []), ("select", []), ("funnel", ["--K", "6"]),
                                       ("funnel", ["--K", "6", "--jobs", "3"]), ("periodic", [])])
def test_outputs_are_byte_identical(tmp_path, cmd, extra):
    name = "periodic" if cmd == "periodic" else "fading-box"
    prob = _builtin(tmp_path, name)
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main([cmd, str(prob), "--out", str(out), *extra]) == EXIT_OK
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1]
