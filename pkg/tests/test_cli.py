import json
import math
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

from nsprivacy import __version__
from nsprivacy.cli import InputError, load_schema, parse_gammas, run

DOCS = Path(__file__).resolve().parents[1] / "docs"
FIXTURES = DOCS / "fixtures"


def body(text):
    return json.loads(text)


def strip_version(text):
    return [ln for ln in text.splitlines() if '"nsprivacy_version"' not in ln]


def write_spec(tmp_path, spec, name="spec.json"):
    p = tmp_path / name
    p.write_text(json.dumps(spec))
    return str(p)


def test_schema_shipped_in_docs_matches_package():
    assert json.loads((DOCS / "problem_spec.schema.json").read_text()) == load_schema()


@pytest.mark.parametrize("name", sorted(p.name for p in FIXTURES.glob("*.json")))
def test_fixtures_are_schema_valid(name):
    jsonschema.validate(json.loads((FIXTURES / name).read_text()), load_schema())


def test_version_line_first():
    code, text, _, _ = run(["kanon", "--spec", str(FIXTURES / "kanon_bins.json")])
    assert code == 0
    assert text.splitlines()[1] == f'  "nsprivacy_version": "{__version__}",'


def test_measure_hybrid_identity():
    code, text, err, _ = run(["measure", "--spec", str(FIXTURES / "hybrid_identity.json")])
    assert code == 0, err
    info = body(text)["info"]
    assert info["h0_cond"] == pytest.approx(math.log(0.5), abs=1e-9)
    assert info["d0"] == "-inf" and info["l0"] == "+inf"
    assert info["i_star"] == "+inf"


def test_measure_constant_policy():
    code, text, err, _ = run(["measure", "--spec", str(FIXTURES / "constant.json")])
    assert code == 0, err
    assert body(text)["info"]["l0"] == 0


def test_measure_average():
    code, text, err, _ = run(["measure", "--spec", str(FIXTURES / "average.json")])
    assert code == 0, err
    out = body(text)
    assert out["info"]["i_star"] == pytest.approx(math.log(4))
    assert out["policy_report"]["q"] == 4


def test_synthesize_relaxed_average():
    code, text, err, _ = run(["synthesize", "--spec", str(FIXTURES / "average.json"), "--relaxed"])
    assert code == 0, err
    pol = body(text)["policy"]
    assert pol["breakpoints"] == [-2, -1, 0, 1, 2]
    assert pol["values"] == [-1.5, -0.5, 0.5, 1.5]


def test_synthesize_tiny_gamma(tmp_path):
    spec = json.loads((FIXTURES / "average.json").read_text())
    spec["gamma"] = 0.01
    code, text, err, _ = run(["synthesize", "--spec", write_spec(tmp_path, spec)])
    assert code == 0, err
    assert body(text)["q"] == 1


def test_output_is_deterministic():
    args = ["synthesize", "--spec", str(FIXTURES / "average.json")]
    a, b = run(args)[1], run(args)[1]
    assert strip_version(a) == strip_version(b)
    assert a == b


def test_synthesized_policy_round_trips_through_measure(tmp_path):
    avg = json.loads((FIXTURES / "average.json").read_text())
    code, text, err, _ = run(["synthesize", "--spec", str(FIXTURES / "average.json")])
    assert code == 0, err
    rep = body(text)
    spec = {k: avg[k] for k in ("dim", "domain", "query")}
    spec["policy"] = rep["policy"]
    code, text, err, _ = run(["measure", "--spec", write_spec(tmp_path, spec)])
    assert code == 0, err
    assert body(text)["info"] == rep["info"]
    assert body(text)["quality_Q"] == rep["quality_Q"]


def test_regions_constant_query(tmp_path):
    spec = {"dim": 2, "domain": [[[0, 1], [0, 1]]], "query": "0*x1 + 1", "gamma": 1}
    code, text, err, _ = run(["regions", "--spec", write_spec(tmp_path, spec), "--grid", "10"])
    assert code == 0, err
    lines = text.splitlines()
    assert lines[0] == "x1,x2,cell,b" and len(lines) == 101
    assert {ln.split(",")[2] for ln in lines[1:]} == {"1"}


def test_regions_needs_two_dimensions():
    code, _, err, _ = run(["regions", "--spec", str(FIXTURES / "hybrid_identity.json")])
    assert code == 2 and "two-dimensional" in err


def test_tradeoff_rows():
    code, text, err, _ = run(["tradeoff", "--spec", str(FIXTURES / "average.json"),
                              "--gammas", "0.5,1"])
    assert code == 0, err
    lines = text.splitlines()
    assert lines[0].startswith("gamma,q,L0,")
    assert [ln.split(",")[1] for ln in lines[1:]] == ["1", "2"]


def test_tradeoff_single_gamma():
    code, text, _, _ = run(["tradeoff", "--spec", str(FIXTURES / "average.json"), "--gammas", "1"])
    assert code == 0 and len(text.splitlines()) == 2


@pytest.mark.parametrize("gammas", ["", "a,b", "1,-2", "log:1:0.1:3", "log:1:2", "0"])
def test_bad_gamma_lists_exit_2(gammas):
    code, _, err, _ = run(["tradeoff", "--spec", str(FIXTURES / "average.json"), "--gammas", gammas])
    assert code == 2 and err


def test_parse_gammas():
    assert parse_gammas("0.5, 2") == [0.5, 2.0]
    g = parse_gammas("log:0.1:10:3")
    assert g == pytest.approx([0.1, 1.0, 10.0])
    with pytest.raises(InputError):
        parse_gammas("nan")


def test_kanon_commands():
    code, text, err, _ = run(["kanon", "--spec", str(FIXTURES / "kanon_passthrough.json")])
    assert code == 0, err
    out = body(text)
    assert out["is_k_anon"] and out["k_achieved"] == 3
    assert out["l0"] == "+inf" and out["cond_measure"] == 0
    out = body(run(["kanon", "--spec", str(FIXTURES / "kanon_suppress.json")])[1])
    assert out["l0"] == 0
    out = body(run(["kanon", "--spec", str(FIXTURES / "kanon_bins.json")])[1])
    assert out["l0"] == pytest.approx(math.log(2))


def test_kanon_bad_csv(tmp_path):
    (tmp_path / "t.csv").write_text("value\nseven\n")
    spec = {"kanon": {"csv": "t.csv", "columns": [{"name": "value", "domain": [0, 10],
                                                    "rule": "suppress"}]}}
    code, _, err, _ = run(["kanon", "--spec", write_spec(tmp_path, spec)])
    assert code == 2 and "csv" in err


@pytest.mark.parametrize("spec", [
    {"dim": 2},
    {"dim": 2, "domain": [[[0, 1], [0, 1]]], "query": "x1 + * x2", "gamma": 1},
    {"dim": 2, "domain": [[[0, 1], [0, 1]]], "query": "x3", "gamma": 1},
    {"dim": 2, "domain": [[[0, 1], [0, 1]]], "query": "x1", "gamma": -1},
    {"dim": 2, "domain": [[[0, 1], [0, 1]]], "query": "x1", "gamma": 1, "metric": "P9"},
    {"dim": 2, "domain": [[[0, 1], [0, 1]]], "query": "x1", "gamma": 1, "extra": True},
])
def test_invalid_specs_exit_2(tmp_path, spec):
    code, _, err, _ = run(["synthesize", "--spec", write_spec(tmp_path, spec)])
    assert code == 2 and err


def test_unreadable_spec_exit_2(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    assert run(["measure", "--spec", str(tmp_path / "bad.json")])[0] == 2
    assert run(["measure", "--spec", str(tmp_path / "missing.json")])[0] == 2


def test_p1_relaxed_is_an_input_error(tmp_path):
    spec = {"dim": 1, "domain": [[[0, 1]]], "query": "x1", "gamma": 2, "metric": "P1"}
    code, _, err, _ = run(["synthesize", "--spec", write_spec(tmp_path, spec), "--relaxed"])
    assert code == 2 and "optimal" in err


def test_computation_error_exit_3(tmp_path):
    spec = {"dim": 1, "domain": [[[-1, 1]]], "query": "1/x1", "gamma": 1}
    code, _, err, _ = run(["synthesize", "--spec", write_spec(tmp_path, spec)])
    assert code == 3 and "divisor" in err


def test_out_file_and_process_exit_codes(tmp_path):
    out = tmp_path / "report.json"
    r = subprocess.run([sys.executable, "-m", "nsprivacy", "kanon", "--spec",
                        str(FIXTURES / "kanon_bins.json"), "--out", str(out)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout == ""
    assert json.loads(out.read_text())["cond_measure"] == 5
    assert [p.name for p in tmp_path.iterdir()] == ["report.json"]
    r = subprocess.run([sys.executable, "-m", "nsprivacy", "regions", "--spec",
                        str(FIXTURES / "hybrid_identity.json")], capture_output=True, text=True)
    assert r.returncode == 2 and r.stderr.startswith("nsprivacy: error:")
