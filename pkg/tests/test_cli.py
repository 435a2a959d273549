import io
import json

import pytest

from tracelab.cli import main


def run(argv):
    out = io.StringIO()
    code = main(argv, out=out)
    return code, out.getvalue()


def test_thresholds_prints_eta1():
    code, out = run(["thresholds", "--eps1", "1e-3", "--n", "1000", "--variant", "upper-only"])
    assert code == 0
    assert out.splitlines()[0] == "eta1 = 13.8155"
    payload = json.loads(out.split("\n", 1)[1])
    assert payload["eta1"] == pytest.approx(13.815510557964274, abs=1e-15)


def test_thresholds_invalid_combination(capsys):
    code, _ = run(["thresholds", "--eps1", "0.1", "--eps2", "0", "--variant", "aggressive"])
    assert code != 0
    assert "precondition violated" in capsys.readouterr().err


def test_analyze_keys():
    code, out = run(["analyze", "--c", "10", "--attack", "interleaving"])
    assert code == 0
    payload = json.loads(out)
    assert set(payload) == {"c", "n", "eps1", "eps2", "mu0", "mu1", "I", "eta1", "predicted_T_h1",
                            "asymptotic_length"}
    assert payload["mu0"] == pytest.approx(-0.00343, abs=2e-5)
    assert payload["predicted_T_h1"] == pytest.approx(3616.4, abs=0.1)


def test_unknown_flag_exits_nonzero():
    with pytest.raises(SystemExit) as e:
        main(["simulate", "--bogus", "1"])
    assert e.value.code != 0


def test_presets_lists_all():
    code, out = run(["presets"])
    assert code == 0 and len(json.loads(out)) == 5


def test_simulate_files_and_determinism(tmp_path, monkeypatch):
    args = ["simulate", "--preset", "wald_grouptesting_toy", "--n", "100", "--trials", "4", "--seed", "42"]
    code, out = run(args + ["--out", str(tmp_path / "a.csv")])
    assert code == 0
    summary = json.loads(out)
    assert summary["stats"]["trials"] == 4 and summary["config"]["master_seed"] == 42
    assert (tmp_path / "a.json").exists() and (tmp_path / "a.events.csv").exists()
    rows = (tmp_path / "a.csv").read_text().splitlines()
    assert len(rows) == 5
    monkeypatch.setenv("TRACELAB_SEED", "42")
    args_env = [a for a in args if a not in ("--seed", "42")]
    run(args_env + ["--out", str(tmp_path / "b.csv"), "--parallelism", "2"])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.events.csv").read_bytes() == (tmp_path / "b.events.csv").read_bytes()


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"preset": "wald_interleaving_toy", "n": 50, "c": 2, "c0": 2, "trials": 2}))
    code, out = run(["simulate", "--config", str(cfg), "--trials", "1", "--seed", "1"])
    assert code == 0
    conf = json.loads(out)["config"]
    assert (conf["n"], conf["c"], conf["trials"]) == (50, 2, 1)


def test_config_file_unknown_field(tmp_path, capsys):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"n": 50, "colour": "red"}))
    code, _ = run(["simulate", "--config", str(cfg)])
    assert code != 0 and "unknown config fields" in capsys.readouterr().err


def test_bad_seed_env(monkeypatch, capsys):
    monkeypatch.setenv("TRACELAB_SEED", "abc")
    code, _ = run(["simulate", "--preset", "sprt_error_sum", "--trials", "1"])
    assert code != 0 and "TRACELAB_SEED" in capsys.readouterr().err
