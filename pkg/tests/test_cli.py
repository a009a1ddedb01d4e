import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bigraph import cli, harness, params, theory


def run(capsys, *argv):
    code = cli.dispatch(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_sample_empty_graph(capsys):
    code, out, _ = run(capsys, "sample", "--n1", "100", "--n2", "100", "--p", "0", "--seed", "7")
    assert code == 0
    doc = json.loads(out)
    assert doc["L1"] == 1 and doc["n_components"] == 200 and doc["edges"] == 0
    assert doc["schema_version"] == harness.SCHEMA_VERSION


def test_solve_reports_theory(capsys):
    code, out, _ = run(capsys, "solve", "--n1", "1000000", "--n2", "1000000",
                       "--rows", "1.05", "--ratio", "0.5")
    assert code == 0
    doc = json.loads(out)
    n = (10**6, 10**6)
    P = params.ratio_instance(n, 1.05, 0.5)
    sol = theory.solve_survival(params.validate(P, n), n)
    assert doc["rho"] == list(sol.rho)  # 17 digits: exact round trip
    assert doc["epsilon"] == pytest.approx(0.05, abs=1e-12)
    for key in ("lambda", "dual", "dual_expectations", "rho_eps"):
        assert key in doc
    assert "pi" in doc["dual"]


def test_solve_subcritical_gives_primal_sizes(capsys):
    code, out, _ = run(capsys, "solve", "--n1", "1000", "--n2", "1000", "--rows", "0.5")
    doc = json.loads(out)
    assert code == 0 and doc["rho"] == [0.0, 0.0]
    assert doc["expected_sizes"] is not None


@pytest.mark.parametrize("argv, code", [
    (["sample", "--n1", "10", "--n2", "10", "--p", "1.5", "--seed", "1"], 2),
    (["sample", "--n2", "10", "--p", "0.1", "--seed", "1"], 1),
    (["nonsense"], 1),
    (["sample", "--n1", "10", "--n2", "10", "--p12", "0.1", "--seed", "1"], 1),
    (["verify", "--only", "13"], 1),
    (["verify", "--only", "x"], 1),
    (["sample", "--n1", "10", "--n2", "10", "--p", "0.1", "--l1", "3", "--seed", "1"], 1),
    (["solve", "--n1", "10", "--n2", "10", "--p", "0.1", "--format", "csv"], 1),
    (["sample", "--n1", "1000", "--n2", "1000", "--rows", "0.5", "--regime", "weak_super",
      "--seed", "1"], 2),
    (["sample", "--n1", "0", "--n2", "10", "--p", "0.1", "--seed", "1"], 2),
])
def test_exit_codes(capsys, argv, code):
    got, _, err = run(capsys, *argv)
    assert got == code
    if code:
        assert err.startswith("bigraph:")


def test_help_exits_zero(capsys):
    assert run(capsys, "--help")[0] == 0
    assert run(capsys, "sample", "--help")[0] == 0


def test_unset_seed_is_printed_and_reproducible(capsys):
    argv = ["sample", "--n1", "300", "--n2", "200", "--p", "0.004"]
    code, out, err = run(capsys, *argv)
    assert code == 0
    seed = int(err.strip().split("seed=")[1])
    assert json.loads(out)["seed"] == seed
    code2, out2, err2 = run(capsys, *argv, "--seed", str(seed))
    assert out2 == out and err2 == ""


def test_same_argv_same_bytes(capsys, tmp_path):
    argv = ["sample", "--n1", "2000", "--n2", "1000", "--rows", "1.3", "--seed", "5"]
    outs = []
    for k in range(2):
        path = tmp_path / f"out{k}.json"
        edges = tmp_path / f"edges{k}.txt"
        assert run(capsys, *argv, "--out", str(path), "--edges", str(edges))[0] == 0
        outs.append((path.read_bytes(), edges.read_bytes()))
    assert outs[0] == outs[1]


def test_config_file_and_precedence(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# instance\nn1 = 100\nn2 = 100\np = 0.5\nseed = 3\n")
    _, out, _ = run(capsys, "sample", "--config", str(cfg))
    assert json.loads(out)["L1"] == 200
    _, out, _ = run(capsys, "sample", "--config", str(cfg), "--p", "0")
    assert json.loads(out)["L1"] == 1


def test_config_rejects_garbage(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("n1 100\n")
    assert run(capsys, "sample", "--config", str(cfg))[0] == 1


def test_regime_json_and_csv(capsys, tmp_path):
    base = ["sample", "--n1", "20000", "--n2", "20000", "--regime", "const_super",
            "--eps", "0.3", "--reps", "3", "--seed", "2"]
    csv_path = tmp_path / "rows.csv"
    code, out, _ = run(capsys, *base, "--csv", str(csv_path))
    assert code == 0
    doc = json.loads(out)
    assert doc["regime"] == "const_super" and doc["reps"] == 3
    lines = csv_path.read_text().splitlines()
    assert lines[0] == ",".join(harness.CSV_HEADER) and len(lines) == 4
    code, out, _ = run(capsys, *base, "--format", "csv")
    assert out == csv_path.read_text()


def test_sweep_command(capsys):
    code, out, _ = run(capsys, "sweep", "--n1", "1000", "--n2", "1000", "--seed", "1")
    assert code == 0 and json.loads(out)["table"] == []
    code, out, _ = run(capsys, "sweep", "--n1", "5000", "--n2", "5000", "--eps-grid",
                       "0.2,-0.2", "--reps", "2", "--seed", "1", "--format", "csv")
    rows = out.splitlines()
    assert rows[0] == ",".join(cli.SWEEP_HEADER) and len(rows) == 3


def test_branching_command(capsys):
    code, out, _ = run(capsys, "branching", "--n1", "50", "--n2", "50", "--p", "0",
                       "--simulate", "--root-type", "2", "--seed", "1")
    doc = json.loads(out)
    assert code == 0 and doc["totals"] == [0, 1] and doc["stop"] == "Extinct"
    code, out, _ = run(capsys, "branching", "--n1", "100000", "--n2", "100000", "--rows", "1.2",
                       "--reps", "2000", "--seed", "1")
    doc = json.loads(out)
    assert code == 0 and 0 < doc["estimate"] < 1 and doc["threshold"] == 10_000


def test_oracle_command(capsys):
    code, out, _ = run(capsys, "oracle", "--n1", "3", "--n2", "2", "--p11", "0.2", "--p12", "0.5",
                       "--p22", "0.4")
    doc = json.loads(out)
    assert code == 0 and doc["mean"] == pytest.approx(4.1743, abs=1e-12)
    assert abs(sum(p for _, p in doc["support"]) - 1) <= 1e-12
    assert run(capsys, "oracle", "--n1", "4", "--n2", "4", "--p", "0.5")[0] == 2


def test_sL_and_sprinkle_commands(capsys):
    code, out, _ = run(capsys, "sL", "--n1", "300", "--n2", "200", "--p", "0.003",
                       "--l1", "1", "--l2", "1", "--reps", "2", "--seed", "1")
    assert code == 0 and json.loads(out)["mean"] == [300.0, 200.0]
    code, out, _ = run(capsys, "sprinkle", "--n1", "200000", "--n2", "200000", "--rows", "1.08",
                       "--mu21", "0.3", "--reps", "2", "--seed", "1")
    doc = json.loads(out)
    assert code == 0 and len(doc["merged"]) == 2 and len(doc["direct_L1"]) == 2


def test_verify_single_criterion(capsys, tmp_path):
    path = tmp_path / "v.json"
    code, out, _ = run(capsys, "verify", "--only", "2", "--out", str(path))
    assert code == 0
    assert out.strip().startswith("[PASS] criterion  2")
    doc = json.loads(path.read_text())
    assert doc["passed"] and doc["results"][0]["number"] == 2
    assert "seconds" not in doc["results"][0]


def test_workers_env(monkeypatch):
    monkeypatch.setenv("BIGRAPH_WORKERS", "3")
    assert harness.default_workers() == 3
    monkeypatch.setenv("BIGRAPH_WORKERS", "zero")
    assert harness.default_workers() == 1


@given(st.floats(allow_nan=False))
def test_float_format_round_trips(x):
    s = cli.fmt_float(x)
    assert float(s) == x
    assert json.loads(s) == x
    if math.isfinite(x):
        assert any(c in s for c in ".e")


def test_float_format_special_values():
    assert cli.fmt_float(math.nan) == "NaN"
    assert cli.fmt_float(-math.inf) == "-Infinity"
    assert cli.fmt_float(0.1) == "0.10000000000000001"
    assert cli.fmt_float(3.0) == "3.0"


json_values = st.recursive(
    st.none() | st.booleans() | st.integers(-10**12, 10**12) | st.floats(allow_nan=False)
    | st.text(max_size=8),
    lambda kids: st.lists(kids, max_size=4) | st.dictionaries(st.text(max_size=6), kids, max_size=4),
    max_leaves=20,
)


@given(json_values)
def test_dumps_round_trips(obj):
    text = cli.dumps(obj)
    assert json.loads(text) == obj
    assert cli.dumps(json.loads(text)) == text
