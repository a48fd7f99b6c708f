import json
import subprocess
import sys

import numpy as np
import pytest

from qert.cli import main
from qert.linalg import matrix_from_json, matrix_to_json


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    assert main(["corpus", "--emit", str(d)]) == 0
    return d


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, (json.loads(out.out) if out.out.strip() else None), out.err


def test_corpus_manifest(corpus_dir):
    manifest = json.loads((corpus_dir / "manifest.json").read_text())
    assert manifest["geo"]["expected_ert"] == 5
    assert manifest["div"]["expected_ert"] == "infinity"
    assert all(manifest[f"qbf_p{p}"]["expected_ert"] == 17 for p in (0.1, 0.5, 0.9))
    assert manifest["walk_n5"]["expected_steps"] == 5
    for item in manifest.values():
        assert (corpus_dir / item["file"]).exists()


def test_corpus_is_deterministic(tmp_path, corpus_dir, capsys):
    assert main(["corpus", "--emit", str(tmp_path)]) == 0
    capsys.readouterr()
    for f in corpus_dir.iterdir():
        assert (tmp_path / f.name).read_bytes() == f.read_bytes()


def test_analyze_geo(corpus_dir, capsys):
    code, out, _ = run(capsys, "analyze", str(corpus_dir / "geo.qw"), "--pure", "|1>")
    assert code == 0
    assert out["value"] == pytest.approx(5, abs=1e-9)
    assert out["verdict"] == "a.s.-terminating"
    assert len(out["source_sha256"]) == 64
    assert set(out["timings"]) == {"parse_s", "analyze_s", "oracles_s"}
    assert np.allclose(matrix_from_json(out["ert_matrix"]), np.diag([1, 5]))


def test_analyze_qbf_maximally_mixed(corpus_dir, capsys):
    code, out, _ = run(capsys, "analyze", str(corpus_dir / "qbf_p0.3.qw"), "--maximally-mixed")
    assert code == 0 and out["value"] == pytest.approx(17, abs=1e-8)


def test_analyze_divergent(corpus_dir, capsys):
    code, out, _ = run(capsys, "analyze", str(corpus_dir / "div.qw"), "--pure", "|1>")
    assert code == 2
    assert out["value"] == "infinity" and out["verdict"] == "divergent-on-input"


def test_analyze_with_oracles(corpus_dir, capsys):
    code, out, _ = run(capsys, "analyze", str(corpus_dir / "geo.qw"), "--pure", "|1>",
                       "--oracles", "--shots", "4000", "--unroll", "60")
    assert code == 0
    orc = out["oracles"]
    assert orc["unfolding"]["value"] == pytest.approx(5, abs=1e-9)
    mc = orc["monte_carlo"]
    assert abs(mc["mean"] - 5) < 4 * mc["stderr"] and mc["shots"] == 4000


def test_analyze_rho_file(corpus_dir, tmp_path, capsys):
    rho = tmp_path / "rho.json"
    rho.write_text(json.dumps(matrix_to_json(np.diag([0.25, 0.75]))))
    code, out, _ = run(capsys, "analyze", str(corpus_dir / "geo.qw"), "--rho", str(rho))
    assert code == 0 and out["value"] == pytest.approx(0.25 + 0.75 * 5)


def test_analyze_walk_state(corpus_dir, capsys):
    code, out, _ = run(capsys, "analyze", str(corpus_dir / "walk_n5.qw"), "--pure", "L,1")
    assert code == 0 and out["value"] == pytest.approx(13, abs=1e-7)


@pytest.mark.parametrize("argv, fragment", [
    (["analyze", "/nonexistent/x.qw"], "cannot read"),
    (["analyze", "{geo}", "--pure", "|2>"], "out of range"),
    (["analyze", "{geo}", "--pure", "|00>"], "symbol"),
    (["analyze", "{geo}", "--pure", "L,1"], "coin"),
    (["analyze", "{geo}", "--rho", "/nonexistent/rho.json"], "cannot read"),
    (["walk", "--n", "5", "--coin", "0.7,0.7"], "not normalised"),
    (["walk", "--n", "1"], "walk size"),
    (["walk", "--n", "4", "--state", "U,1"], "walk state"),
])
def test_errors_exit_one(corpus_dir, capsys, argv, fragment):
    argv = [a.replace("{geo}", str(corpus_dir / "geo.qw")) for a in argv]
    code, out, err = run(capsys, *argv)
    assert code == 1 and out is None and fragment in err


def test_parse_error_position(tmp_path, capsys):
    f = tmp_path / "bad.qw"
    f.write_text("var q:2;\nprog { q := Z[q] }\n")
    code, _, err = run(capsys, "analyze", str(f))
    assert code == 1 and "bad.qw:2:13" in err


def test_usage_error_exits_one(capsys):
    with pytest.raises(SystemExit) as info:
        main(["walk", "--n", "x"])
    assert info.value.code == 1


def test_eps_env_override(corpus_dir, capsys, monkeypatch):
    monkeypatch.setenv("QERT_EPS_SPEC", "1e-9")
    code, out, _ = run(capsys, "analyze", str(corpus_dir / "geo.qw"), "--pure", "|1>")
    assert code == 0 and out["value"] == pytest.approx(5)
    monkeypatch.setenv("QERT_EPS_SPEC", "nope")
    code, _, err = run(capsys, "analyze", str(corpus_dir / "geo.qw"), "--pure", "|1>")
    assert code == 1 and "QERT_EPS_SPEC" in err


def test_simulate_deterministic(corpus_dir, capsys):
    argv = ["simulate", str(corpus_dir / "geo.qw"), "--pure", "|1>", "--shots", "3000",
            "--seed", "4"]
    main(argv)
    first = capsys.readouterr().out
    main(argv)
    assert capsys.readouterr().out == first
    obj = json.loads(first)
    assert set(obj) == {"mean", "stderr", "shots", "timeouts", "seed"}
    assert obj["seed"] == 4 and obj["timeouts"] == 0


def test_simulate_divergent(corpus_dir, capsys):
    code, out, _ = run(capsys, "simulate", str(corpus_dir / "div.qw"), "--pure", "|1>",
                       "--shots", "20", "--max-steps", "100")
    assert code == 0 and out["timeouts"] == 20 and out["mean"] is None


def test_walk_rounded_coin(capsys):
    code, out, err = run(capsys, "walk", "--n", "5", "--coin", "0.70710678,0.70710678",
                         "--state", "L,1")
    assert code == 0 and out["expected_steps"] == pytest.approx(5, abs=1e-6)
    assert "renormalised" in err


def test_walk_boundary_state(capsys):
    code, out, _ = run(capsys, "walk", "--n", "5", "--state", "L,0")
    assert code == 0 and out["expected_steps"] == pytest.approx(1)


def test_walk_both_modes(capsys):
    code, out, _ = run(capsys, "walk", "--n", "9", "--mode", "both")
    assert code == 0 and out["discrepancy"] < 1e-6
    assert out["closed"]["residual"] < 1e-8 and out["numeric"]["residual"] < 1e-8
    q = matrix_from_json(out["numeric"]["Q"])
    assert q.shape == (18, 18)


def test_walk_numeric_state_and_complex_coin(capsys):
    code, out, _ = run(capsys, "walk", "--n", "4", "--mode", "numeric",
                       "--coin", "0.6i,0.8", "--state", "R,2")
    assert code == 0 and out["expected_steps"] >= 1
    assert out["coin"] == [[0.0, 0.6], [0.8, 0.0]]


def test_module_entry_point(corpus_dir):
    res = subprocess.run([sys.executable, "-m", "qert", "analyze", str(corpus_dir / "div.qw"),
                          "--pure", "|1>"], capture_output=True, text=True)
    assert res.returncode == 2
    assert json.loads(res.stdout)["value"] == "infinity"
