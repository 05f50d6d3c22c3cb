import json
import math

import pandas as pd
import pytest

from app.main import EXIT_CONFIG, EXIT_OK, main


def _write(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def _read(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_docs_and_schema(capsys):
    assert main(["docs"]) == EXIT_OK
    docs = json.loads(capsys.readouterr().out)
    assert "certify" in docs
    assert main(["docs", "figure1"]) == EXIT_OK
    capsys.readouterr()
    assert main(["docs", "no-such-command"]) == EXIT_CONFIG
    capsys.readouterr()
    assert main(["schema"]) == EXIT_OK
    schema = json.loads(capsys.readouterr().out)
    assert set(schema["params"]) >= {"solve", "certify", "figure1", "adversary"}


def test_certify_demo_config(config_dir, tmp_path):
    assert main(["certify", "--config", str(config_dir / "certify_demo.json"), "--out", str(tmp_path)]) == EXIT_OK
    outcome = _read(tmp_path / "outcome.json")
    assert outcome["outcome"]["status"] == "certified"
    assert outcome["outcome"]["support"]["indices"] == [1]
    assert outcome["outcome"]["precision_used"] == 24
    assert outcome["oracle_support"] == [1]
    manifest = _read(tmp_path / "manifest.json")
    assert manifest["status"] == "ok"
    assert manifest["command"] == "certify"
    assert "outcome.json" in manifest["artifacts"]


def test_certify_abstains_on_tie(tmp_path):
    config = _write(tmp_path / "tie.json", {
        "command": "certify",
        "params": {"instance": {"y": [1.0], "A": [[1.0, 1.0]], "lambda": 0.01}, "n_max": 12},
    })
    out = tmp_path / "out"
    assert main(["certify", "--config", str(config), "--out", str(out)]) == EXIT_OK
    outcome = _read(out / "outcome.json")
    assert outcome["outcome"]["status"] == "abstained"
    assert outcome["oracle_support"] is None
    assert _read(out / "manifest.json")["status"] == "abstained"


@pytest.mark.parametrize("params, field", [
    ({"trials": -1}, "params.trials"),
    ({"bogus": 1}, "params.bogus"),
])
def test_malformed_params_exit_with_config_error(tmp_path, params, field):
    config = _write(tmp_path / "bad.json", {"command": "figure1", "params": params})
    out = tmp_path / "out"
    assert main(["figure1", "--config", str(config), "--out", str(out)]) == EXIT_CONFIG
    error = _read(out / "error.json")
    assert error["status"] == "config_error"
    assert error["field"] == field


def test_command_mismatch(config_dir, tmp_path):
    assert main(["solve", "--config", str(config_dir / "certify_demo.json"), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert _read(tmp_path / "error.json")["field"] == "command"


def test_run_needs_a_command(tmp_path):
    config = _write(tmp_path / "nameless.json", {"params": {}})
    out = tmp_path / "out"
    assert main(["run", "--config", str(config), "--out", str(out)]) == EXIT_CONFIG
    assert _read(out / "error.json")["field"] == "command"


def test_missing_config_file(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert _read(tmp_path / "error.json")["field"] == "config"


def test_success_rate_small_config(config_dir, tmp_path):
    assert main(["figure1", "--config", str(config_dir / "figure1_small.json"), "--out", str(tmp_path)]) == EXIT_OK
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert len(summary) == 2 * 3 * 3
    trials = pd.read_csv(tmp_path / "trials.csv")
    assert len(trials) == 3 * 2 * 20 * 3


def test_solve_example_and_seed_override(config_dir, tmp_path):
    code = main(["run", "--config", str(config_dir / "solve_example.json"), "--seed", "99", "--out", str(tmp_path)])
    assert code == EXIT_OK
    solution = _read(tmp_path / "solution.json")
    assert solution["solution"]["converged"] is True
    assert solution["tau"] == 1e-9
    manifest = _read(tmp_path / "manifest.json")
    assert manifest["seed"] == 99
    assert manifest["config"]["params"]["instance"]["lambda"] == 0.1


def test_wainwright_tail_config(config_dir, tmp_path):
    assert main(["wainwright", "--config", str(config_dir / "wainwright_tail.json"), "--out", str(tmp_path)]) == EXIT_OK
    report = _read(tmp_path / "wainwright.json")
    assert report["norm_tail"]["draws"] == 2000
    assert report["norm_tail"]["fraction"] <= report["norm_tail"]["bound"] + 0.01


def test_bad_workers(config_dir, tmp_path):
    code = main(["solve", "--config", str(config_dir / "solve_example.json"), "--workers", "0", "--out", str(tmp_path)])
    assert code == EXIT_CONFIG
    assert _read(tmp_path / "error.json")["field"] == "workers"


def test_norm_tail_bound_follows_m(tmp_path):
    config = _write(tmp_path / "tail.json", {
        "command": "wainwright",
        "seed": 5,
        "params": {"v": [1.0], "N": 20, "m": 3, "lambda": 0.5, "norm_tail_draws": 200},
    })
    out = tmp_path / "out"
    assert main(["wainwright", "--config", str(config), "--out", str(out)]) == EXIT_OK
    tail = _read(out / "wainwright.json")["norm_tail"]
    assert tail["bound"] == pytest.approx(math.exp(-3.0))
    assert tail["draws"] == 200
