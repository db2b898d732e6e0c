import csv
import json
import subprocess
import sys

import pytest

from onlinemep.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, ExperimentConfig, main


def read(path):
    return path.read_bytes()


def test_run_example1_short(tmp_path):
    assert main(["run", "--example", "1", "--horizon", "50", "--out", str(tmp_path)]) == EXIT_OK
    run = tmp_path / "seed_0"
    for name in ("manifest.json", "trace.csv", "metrics.csv", "certificate.json"):
        assert (run / name).exists()
    cert = json.loads((run / "certificate.json").read_text())
    assert cert["passed"]
    man = json.loads((run / "manifest.json").read_text())
    assert man["config"]["horizon"] == 50 and man["schedule"]["shift"] == 8.0


def test_horizon_zero(tmp_path):
    assert main(["run", "--example", "1", "--horizon", "0", "--out", str(tmp_path)]) == EXIT_OK
    with open(tmp_path / "seed_0" / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["round"] for r in rows} == {"0"}
    trace = (tmp_path / "seed_0" / "trace.csv").read_text().splitlines()
    assert len(trace) == 1 + 6


def test_stochastic_multi_seed(tmp_path):
    code = main(["run", "--example", "2", "--horizon", "20", "--seed", "7", "--seed", "8",
                 "--out", str(tmp_path), "--verify"])
    assert code == EXIT_OK
    assert read(tmp_path / "seed_7" / "metrics.csv") != read(tmp_path / "seed_8" / "metrics.csv")


def test_manifest_replay(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--example", "2", "--horizon", "15", "--seed", "3",
                 "--out", str(first)]) == EXIT_OK
    manifest = first / "seed_3" / "manifest.json"
    assert main(["run", "--config", str(manifest), "--out", str(second)]) == EXIT_OK
    for name in ("trace.csv", "metrics.csv", "certificate.json"):
        assert read(first / "seed_3" / name) == read(second / "seed_3" / name)


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"example": 1, "horizon": 400, "out": str(tmp_path / "x")}))
    assert main(["run", "--config", str(cfg), "--horizon", "5"]) == EXIT_OK
    man = json.loads((tmp_path / "x" / "seed_0" / "manifest.json").read_text())
    assert man["config"]["horizon"] == 5


@pytest.mark.parametrize("argv,needle", [
    (["--a", "0.3"], "b < a < 2b"),
    (["--a", "0.5", "--b", "0.5"], "b < a < 2b"),
    (["--horizon", "-1"], "horizon"),
    (["--algorithm", "stochastic", "--schedule", "time_varying"], "fixed"),
])
def test_invalid_config(tmp_path, capsys, argv, needle):
    code = main(["run", "--example", "1", "--out", str(tmp_path)] + argv)
    assert code == EXIT_CONFIG
    assert needle in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"example": 1, "colour": "red"}))
    assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
    assert "colour" in capsys.readouterr().err


def test_literal_sign_infeasible(tmp_path, capsys):
    code = main(["run", "--example", "2", "--epsilon-sign", "paper", "--out", str(tmp_path)])
    assert code == EXIT_INFEASIBLE
    assert "--epsilon-sign" in capsys.readouterr().err


def test_oracle_benchmark(tmp_path):
    assert main(["run", "--example", "1", "--horizon", "30", "--benchmark", "both",
                 "--out", str(tmp_path)]) == EXIT_OK
    text = (tmp_path / "seed_0" / "metrics.csv").read_text()
    assert ",regret_oracle,max," in text and ",path_length_oracle,all," in text
    assert (tmp_path / "solution_path.csv").exists()


def test_sweep(tmp_path):
    code = main(["sweep", "--example", "1", "--horizon", "200", "--out", str(tmp_path),
                 "--grid", "0.4,0.28", "--grid", "0.5,0.35", "--grid", "0.6,0.42"])
    assert code == EXIT_OK
    with open(tmp_path / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    vals = [float(r["final_regret_over_T"]) for r in rows]
    assert vals == sorted(vals)


def test_sweep_single_point_matches_run(tmp_path):
    main(["sweep", "--example", "1", "--horizon", "100", "--out", str(tmp_path / "s"),
          "--grid", "0.5,0.3333333333333333"])
    main(["run", "--example", "1", "--horizon", "100", "--out", str(tmp_path / "r")])
    with open(tmp_path / "s" / "summary.csv") as fh:
        row = next(csv.DictReader(fh))
    with open(tmp_path / "r" / "seed_0" / "metrics.csv") as fh:
        final = [r for r in csv.DictReader(fh)
                 if r["metric"] == "regret" and r["agent"] == "max" and r["round"] == "100"]
    assert float(row["final_regret_over_T"]) == float(final[0]["value_over_t"])


def test_sweep_rejects_bad_grid(tmp_path, capsys):
    assert main(["sweep", "--example", "1", "--out", str(tmp_path), "--grid", "0.5,0.5"]) == EXIT_CONFIG
    assert main(["sweep", "--example", "1", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "empty" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "onlinemep", "run", "--example", "1",
                          "--horizon", "3", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "certificates=pass" in out.stdout


def test_config_defaults_resolve():
    cfg = ExperimentConfig(example=2).resolved()
    assert (cfg.algorithm, cfg.variant, cfg.shift, cfg.horizon) == ("stochastic", "fixed", 30.0, 100)
