import os

import numpy as np
import pytest

from degkam.cli import main
from degkam.runspec import SpecError, dump_spec, load_spec, parse_spec, specs_equal

SPECS = os.path.join(os.path.dirname(__file__), "..", "specs")

MINIMAL = """\
[hamiltonian]
omega = 1.0 1.618033988749895
g =
    0 0 | 0 0 | 4 0 | 0.25
    0 0 | 0 0 | 0 4 | 0.25
P =
    cos 1 0 | 0 0 | 0 0 | 1e-6

[schedule]
epsilon = 1e-6
m = 3
"""


def spec_path(name):
    return os.path.join(SPECS, name)


def read_tsv(path):
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n").split("\t") for line in fh][1:]


# ---------------------------------------------------------------------------
# spec files

def test_minimal_spec_parses():
    spec = parse_spec(MINIMAL)
    assert (spec.n, spec.d) == (2, 1)
    N = spec.normal_form()
    assert np.allclose(N.omega, [1.0, 1.618033988749895])
    P = spec.perturbation().to_dict()
    assert P == {((1, 0), (0, 0), (0, 0)): 5e-7, ((-1, 0), (0, 0), (0, 0)): 5e-7}
    assert spec.get("schedule", "tau") == "2"


def test_dimension_mismatch_names_both():
    bad = MINIMAL.replace("omega = 1.0 1.618033988749895", "omega = 1.0 1.5 2.0")
    with pytest.raises(SpecError) as info:
        parse_spec(bad)
    msg = str(info.value)
    assert "2 entries" in msg and "n = 3" in msg


def test_normal_dimension_mismatch():
    bad = MINIMAL.replace("    0 0 | 0 0 | 0 4 | 0.25", "    0 0 | 0 0 | 0 4 0 0 | 0.25")
    with pytest.raises(SpecError, match="2d = 2.*2d = 4"):
        parse_spec(bad)


def test_round_trip():
    spec = parse_spec(MINIMAL)
    again = parse_spec(dump_spec(spec))
    assert specs_equal(spec, again)
    assert dump_spec(again) == dump_spec(spec)
    assert again.hash() == spec.hash()


def test_round_trip_example_files():
    for name in ("acceptance.spec", "degree_zero.spec", "measure.spec"):
        spec = load_spec(spec_path(name))
        assert specs_equal(spec, parse_spec(dump_spec(spec)))


def test_sin_rows():
    spec = parse_spec(MINIMAL.replace("cos 1 0 | 0 0 | 0 0 | 1e-6", "sin 1 0 | 0 0 | 0 0 | 2.0"))
    P = spec.perturbation().to_dict()
    assert np.isclose(P[((1, 0), (0, 0), (0, 0))], -1j)
    assert np.isclose(P[((-1, 0), (0, 0), (0, 0))], 1j)


@pytest.mark.parametrize("text, line, column", [
    (MINIMAL.replace("    0 0 | 0 0 | 4 0 | 0.25", "    0 0 | 0 x | 4 0 | 0.25"), 4, 11),
    (MINIMAL.replace("    0 0 | 0 0 | 4 0 | 0.25", "    0 0 | 0 0 | 4 0 | abc"), 4, 23),
    (MINIMAL.replace("m = 3", "m 3"), 11, 1),
    (MINIMAL.replace("[schedule]", "[sched"), 9, 7),
    (MINIMAL.replace("[schedule]", "[bogus]"), 9, 2),
    (MINIMAL.replace("m = 3", "q = 3"), 11, 1),
    (MINIMAL.replace("m = 3", "epsilon = 2"), 11, 1),
], ids=["bad-index", "bad-coefficient", "no-equals", "open-header", "unknown-section",
        "unknown-key", "duplicate-key"])
def test_errors_carry_position(text, line, column):
    with pytest.raises(SpecError) as info:
        parse_spec(text)
    assert (info.value.line, info.value.column) == (line, column)
    assert f"line {line}, column {column}" in str(info.value)


def test_angle_dependent_g_rejected():
    spec = parse_spec(MINIMAL.replace("    0 0 | 0 0 | 4 0 | 0.25", "    1 0 | 0 0 | 4 0 | 0.25"))
    with pytest.raises(SpecError, match="angles"):
        spec.normal_form()


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_spec(tmp_path / "nope.spec")
    assert main(["counterexample", "--spec", str(tmp_path / "nope.spec"),
                 "--out", str(tmp_path), "--quiet"]) == 2


# ---------------------------------------------------------------------------
# commands

def test_counterexample_exit_zero(tmp_path):
    out = tmp_path / "ce"
    assert main(["counterexample", "--spec", spec_path("degree_zero.spec"), "--out", str(out),
                 "--quiet"]) == 0
    text = (out / "report.txt").read_text()
    assert "no_real_solution = true" in text and "has no real solution" in text


def test_run_kam_on_degree_zero_fails(tmp_path):
    out = tmp_path / "rk"
    code = main(["run-kam", "--spec", spec_path("degree_zero.spec"), "--out", str(out), "--quiet"])
    assert code != 0
    text = (out / "report.txt").read_text()
    assert "find_shift" in text and "NoZeroFoundError" in text


def test_check_nondegeneracy_quartic(tmp_path):
    out = tmp_path / "nd"
    assert main(["check-nondegeneracy", "--spec", spec_path("acceptance.spec"), "--out", str(out),
                 "--samples", "2000", "--quiet"]) == 0
    rows = {(s, k): v for s, k, v in read_tsv(out / "report.tsv")}
    assert rows[("A0", "degree_odd")] == "true"
    assert int(rows[("A0", "degree")]) % 2 == 1


def test_check_nondegeneracy_cubic_fails(tmp_path):
    out = tmp_path / "nd0"
    assert main(["check-nondegeneracy", "--spec", spec_path("degree_zero.spec"), "--out", str(out),
                 "--samples", "1000", "--quiet"]) == 1
    rows = {(s, k): v for s, k, v in read_tsv(out / "report.tsv")}
    assert rows[("A0", "degree")] == "0"


def test_estimate_measure_deterministic(tmp_path):
    args = ["estimate-measure", "--spec", spec_path("measure.spec"), "--samples", "2000",
            "--seed", "7", "--quiet"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "report.tsv").read_bytes()
    b = (tmp_path / "b" / "report.tsv").read_bytes()
    assert a == b
    assert main(["estimate-measure", "--spec", spec_path("measure.spec"), "--samples", "2000",
                 "--seed", "8", "--quiet", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "report.tsv").read_bytes() != a


def test_text_and_tsv_agree(tmp_path):
    out = tmp_path / "m"
    main(["estimate-measure", "--spec", spec_path("measure.spec"), "--samples", "1000",
          "--out", str(out), "--quiet"])
    text = (out / "report.txt").read_text().splitlines()
    current = "meta"
    seen = set()
    for line in text:
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
        elif " = " in line:
            key, value = line.split(" = ", 1)
            seen.add((current, key, value))
    for section, key, value in read_tsv(out / "report.tsv"):
        if key == "command":
            continue
        if section == "meta":
            assert any(k == key and v == value for _, k, v in seen)
        else:
            assert (section, key, value) in seen


def test_run_kam_paper_mode_reports_hypotheses(tmp_path):
    out = tmp_path / "paper"
    code = main(["run-kam", "--mode", "paper", "--spec", spec_path("acceptance.spec"),
                 "--out", str(out), "--quiet"])
    rows = {(s, k): v for s, k, v in read_tsv(out / "report.tsv")}
    assert rows[("meta", "mode")] == "paper"
    assert ("hypotheses", "nu0.H9.margin") in rows
    assert code == (0 if rows[("checks", "passed")] == "true" else 1)


def test_run_kam_dump_series(tmp_path):
    out = tmp_path / "dump"
    assert main(["run-kam", "--spec", spec_path("acceptance.spec"), "--steps", "1", "--out", str(out),
                 "--dump-series", "--quiet"]) == 0
    names = sorted(os.listdir(out / "series"))
    assert names == ["P_000.tfs", "P_001.tfs", "g_000.tfs", "g_001.tfs"]
    assert (out / "series" / "P_000.tfs").read_text().startswith("TFS 2 1")


def test_unknown_command_rejected():
    with pytest.raises(SystemExit):
        main(["do-everything", "--spec", "x"])
