"""root/tests/
This test suite drives the command line through polystab.cli.main on small JSON inputs.

    Uses pytest fixtures to write a polytope problem ([0, 1] with the extremal weight), a bundle spec
    (the Hirzebruch case g = 0, blocks (1, 0), (1, 1), c = 2) and the ramp max(0, 2x - 1) into tmp_path.
    Uses pytest parameterization to send collections of argv lists with the expected exit code.
        - stdout is captured via capsys and parsed as JSON or CSV.
"""
import json
from fractions import Fraction as F

import pytest

from polystab.cli import main
from polystab.db.db_conn import DB
from polystab.models.domain import IdentityCheck
from polystab.models.storage import ResultsManager

INTERVAL = {"polytope": {"standard_simplex": 1}}
HIRZEBRUCH = {"genus": 0, "blocks": [{"rank": 1, "degree": 0}, {"rank": 1, "degree": 1}], "c": "2"}
RAMP = {"pieces": [{"linear": [0], "constant": 0}, {"linear": [2], "constant": -1}]}
PHI = {"dim": 1, "terms": [{"exp": [2], "coef": 1}]}


@pytest.fixture
def files(tmp_path) -> dict[str, str]:
    """
    Input files by name, as strings ready for argv.
    """
    out = {}
    for name, data in (("interval", INTERVAL), ("bundle", HIRZEBRUCH), ("ramp", RAMP), ("phi", PHI),
                       ("narrow", {**HIRZEBRUCH, "c": "1"}), ("unweighted", {**INTERVAL, "w": 0})):
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        out[name] = str(path)
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    out["broken"] = str(broken)
    out["missing"] = str(tmp_path / "absent.json")
    return out


def _run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


#####################################################################
#          exit codes
#####################################################################

@pytest.mark.parametrize("argv, code", [
    ([], 1),
    (["help"], 0),
    (["help", "sweep"], 0),
    (["stability", "--help"], 0),
    (["nope", "--input", "{interval}"], 1),
    (["stability"], 1),
    (["stability", "--input", "{missing}"], 1),
    (["stability", "--input", "{broken}"], 2),
    (["stability", "--input", "{interval}", "--N", "1"], 1),
    (["stability", "--input", "{interval}", "--N", "two"], 1),
    (["stability", "--input", "{interval}", "--tol", "0"], 1),
    (["stability", "--input", "{interval}", "--norm", "l2"], 1),
    (["sweep", "--input", "{interval}", "--c", "2"], 1),
    (["sweep", "--input", "{bundle}"], 1),
    (["df", "--input", "{interval}"], 1),
    (["identities", "--input", "{interval}", "--pl", "{ramp}"], 1),
    (["extremal", "--input", "{narrow}"], 2),
    ]
)
def test_exit_codes(files, capsys, argv, code):
    argv = [a.format(**files) for a in argv]
    assert _run(capsys, argv)[0] == code


def test_usage_on_empty_argv(capsys):
    code, out, err = _run(capsys, [])
    assert code == 1
    assert "usage: polystab" in err


def test_errors_go_to_stderr(files, capsys):
    code, out, err = _run(capsys, ["extremal", "--input", files["narrow"]])
    assert code == 2
    assert out == ""
    assert err.startswith("error: ")


def test_identity_failure_exit_code(files, capsys, monkeypatch):
    monkeypatch.setattr(
        "polystab.models.cli_view.verify_identities",
        lambda model, f, **weights: [IdentityCheck("pullback_integral", F(1), F(0))],
    )
    code, out, err = _run(capsys, ["identities", "--input", files["bundle"], "--pl", files["ramp"]])
    assert code == 3
    assert json.loads(out)["passed"] is False
    assert "pullback_integral" in err


@pytest.mark.parametrize("name, value", [
    ("POLYSTAB_THREADS", "0"),
    ("POLYSTAB_THREADS", "many"),
    ("POLYSTAB_LOG_LEVEL", "chatty"),
    ]
)
def test_environment_is_validated(files, capsys, monkeypatch, name, value):
    monkeypatch.setenv(name, value)
    assert _run(capsys, ["extremal", "--input", files["interval"]])[0] == 1


#####################################################################
#          commands
#####################################################################

def test_extremal_bundle(files, capsys):
    code, out, _ = _run(capsys, ["extremal", "--input", files["bundle"]])
    assert code == 0
    payload = json.loads(out)
    assert payload["l_ext"] == {"linear": ["-48/13"], "constant": "108/13"}
    assert payload["residuals"] == ["0/1", "0/1"]


def test_extremal_polytope(files, capsys):
    code, out, _ = _run(capsys, ["extremal", "--input", files["interval"]])
    assert code == 0
    payload = json.loads(out)
    assert payload["l_ext"] == {"linear": ["0/1"], "constant": "4/1"}
    assert payload["residuals"] == ["0/1", "0/1"]


def test_extremal_residuals_use_the_given_weight(files, capsys):
    # w = 0: F(1) = 2 * (1 + 1) and F(x) = 2 * (0 + 1)
    code, out, _ = _run(capsys, ["extremal", "--input", files["unweighted"]])
    assert code == 0
    payload = json.loads(out)
    assert payload["l_ext"] == {"linear": ["0/1"], "constant": "4/1"}
    assert payload["residuals"] == ["4/1", "2/1"]


def test_df_and_jnorm(files, capsys):
    code, out, _ = _run(capsys, ["df", "--input", files["interval"], "--pl", files["ramp"]])
    assert code == 0
    payload = json.loads(out)
    assert payload["F"] == "1/1"
    assert payload["DF"] == {"rational": "1/1", "two_pi_power": 2}

    code, out, _ = _run(capsys, ["jnorm", "--input", files["interval"], "--pl", files["ramp"]])
    assert code == 0
    payload = json.loads(out)
    assert payload["j"] == "1/4"
    assert payload["l1_star"] == "1/4"
    assert payload["ratio"] == "1/1"


def test_df_bundle(files, capsys):
    code, out, _ = _run(capsys, ["df", "--input", files["bundle"], "--pl", files["ramp"]])
    assert code == 0
    payload = json.loads(out)
    assert payload["DF"]["two_pi_power"] == 3
    assert payload["DF"]["rational"] == payload["F"]
    assert {"DF_fibre", "F_plus"} <= payload.keys()


@pytest.mark.parametrize("extra, expected", [
    ([], {"simple": True, "integral": True}),
    (["--pl", "{ramp}"], {"classification": "RPL", "R": "2/1"}),
    (["--pl", "{ramp}", "--R", "3"], {"R": "3/1"}),
    ]
)
def test_delzant(files, capsys, extra, expected):
    argv = ["delzant", "--input", files["interval"]] + [a.format(**files) for a in extra]
    code, out, _ = _run(capsys, argv)
    assert code == 0
    payload = json.loads(out)
    for key, value in expected.items():
        assert payload[key] == value


def test_identities(files, capsys, tmp_path):
    out_dir = tmp_path / "reports"
    argv = ["identities", "--input", files["bundle"], "--pl", files["ramp"], "--out", str(out_dir)]
    code, out, _ = _run(capsys, argv)
    assert code == 0
    payload = json.loads(out)
    assert payload["passed"] is True
    assert all(c["difference"] == "0/1" for c in payload["checks"])
    assert (out_dir / "identities.json").exists()

    code, out, _ = _run(capsys, argv + ["--format", "csv"])
    assert code == 0
    assert out.splitlines()[0] == "check,lhs,rhs,difference"


def test_identities_use_the_bundle_weights(files, capsys):
    code, out, _ = _run(capsys, ["identities", "--input", files["bundle"], "--pl", files["ramp"]])
    assert code == 0
    transfer = {c["check"]: c for c in json.loads(out)["checks"]}["futaki_transfer"]

    code, out, _ = _run(capsys, ["df", "--input", files["bundle"], "--pl", files["ramp"]])
    assert code == 0
    assert transfer["rhs"] == json.loads(out)["F"]
    assert transfer["lhs"] == transfer["rhs"]


def test_mabuchi_polytope(files, capsys):
    code, out, _ = _run(capsys, ["mabuchi", "--input", files["interval"], "--phi", files["phi"]])
    assert code == 0
    assert json.loads(out)["mabuchi"]["linear"] == "5/3"


def test_stability(files, capsys, tmp_path):
    out_dir = tmp_path / "run"
    argv = ["stability", "--input", files["interval"], "--N", "4,2", "--out", str(out_dir)]
    code, out, _ = _run(capsys, argv)
    assert code == 0
    payload = json.loads(out)
    assert payload["lambda"] == [{"N": 2, "value": "4/1"}, {"N": 4, "value": "4/1"}]
    assert payload["verdict"] == "no-destabilizer-found"
    assert (out_dir / "stability.json").exists()
    assert not (out_dir / "destabilizer.json").exists()

    db = DB(out_dir / "results.duckdb")
    manager = ResultsManager(db)
    run_id = db.conn.execute("SELECT run_id FROM run").fetchone()[0]
    assert [r[0] for r in manager.list_stability(run_id)] == [2, 4]
    db.close()


def test_stability_same_input_same_run(files, capsys, tmp_path):
    out_dir = tmp_path / "run"
    argv = ["stability", "--input", files["interval"], "--N", "2", "--out", str(out_dir)]
    assert _run(capsys, argv)[0] == 0
    assert _run(capsys, argv)[0] == 0
    db = DB(out_dir / "results.duckdb")
    assert db.conn.execute("SELECT COUNT(*) FROM run").fetchone()[0] == 1
    db.close()


def test_sweep(files, capsys, tmp_path):
    out_dir = tmp_path / "sweep"
    argv = ["sweep", "--input", files["bundle"], "--c", "1,2", "--N", "2", "--out", str(out_dir), "--svg"]
    code, out, _ = _run(capsys, argv)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "c,N,lambda_num,lambda_den,verdict,destabilizer_ref"
    assert lines[1].startswith("1/1,2,,,")
    assert lines[2].startswith("2/1,2,") and lines[2].endswith(",positive,")
    exported = (out_dir / "sweep.csv").read_text().splitlines()
    assert exported[0] == lines[0]
    assert len(exported) == 3
    assert (out_dir / "sweep.svg").read_text().startswith("<svg")


def test_sweep_json(files, capsys):
    argv = ["sweep", "--input", files["bundle"], "--c", "2", "--N", "2", "--format", "json"]
    code, out, _ = _run(capsys, argv)
    assert code == 0
    payload = json.loads(out)
    assert payload["rows"][0]["verdict"] == "positive"
    assert payload["trend"] == "n/a"


#####################################################################
#          stored runs
#####################################################################

@pytest.mark.parametrize("argv, code", [
    (["runs"], 1),
    (["runs", "--out", "{empty}"], 1),
    (["runs", "--out", "{stored}", "--run", "ffffffffffffffff"], 2),
    ]
)
def test_runs_exit_codes(files, capsys, tmp_path, argv, code):
    stored = tmp_path / "stored"
    assert _run(capsys, ["stability", "--input", files["interval"], "--N", "2", "--out", str(stored)])[0] == 0
    argv = [a.format(empty=tmp_path / "empty", stored=stored) for a in argv]
    assert _run(capsys, argv)[0] == code


def test_runs_reads_back_a_sweep(files, capsys, tmp_path):
    out_dir = tmp_path / "sweep"
    argv = ["sweep", "--input", files["bundle"], "--c", "1,2", "--N", "2", "--out", str(out_dir)]
    code, sweep_csv, _ = _run(capsys, argv)
    assert code == 0

    code, out, _ = _run(capsys, ["runs", "--out", str(out_dir)])
    assert code == 0
    runs = json.loads(out)["runs"]
    assert [r["command"] for r in runs] == ["sweep"]
    run_id = runs[0]["run_id"]

    code, out, _ = _run(capsys, ["runs", "--out", str(out_dir), "--run", run_id])
    assert code == 0
    payload = json.loads(out)
    assert payload["command"] == "sweep"
    assert payload["config"]["c"] == ["1/1", "2/1"]
    assert [r["c"] for r in payload["rows"]] == ["1/1", "2/1"]
    assert payload["rows"][0]["lambda_num"] == ""
    assert payload["rows"][1]["verdict"] == "positive"
    assert payload["sign_changes"] == 0

    code, out, _ = _run(capsys, ["runs", "--out", str(out_dir), "--run", run_id, "--format", "csv"])
    assert code == 0
    assert out == sweep_csv


def test_runs_reads_back_stability(files, capsys, tmp_path):
    out_dir = tmp_path / "run"
    argv = ["stability", "--input", files["interval"], "--N", "2,4", "--out", str(out_dir)]
    assert _run(capsys, argv)[0] == 0
    run_id = json.loads(_run(capsys, ["runs", "--out", str(out_dir)])[1])["runs"][0]["run_id"]

    code, out, _ = _run(capsys, ["runs", "--out", str(out_dir), "--run", run_id])
    assert code == 0
    payload = json.loads(out)
    assert payload["command"] == "stability"
    assert [(r["N"], r["lambda_num"], r["lambda_den"]) for r in payload["rows"]] == [("2", "4", "1"), ("4", "4", "1")]
    assert "sign_changes" not in payload
