import csv

import pytest

from codesign_bo.cli import (
    EXIT_INVALID,
    EXIT_MISSING,
    EXIT_OK,
    EXIT_PARSE,
    EXIT_USAGE,
    RunConfig,
    config_to_toml,
    load_config,
    main,
    parse_config,
    resolve,
)

QUICK_BO = """
mode = "bo"
objective = "quadratic"
seed = 3

[convergence]
budget = 12

[gp]
n_restarts = 2
screen_per_dim = 256
refine_iterations = 50
"""

QUICK_CODESIGN = """
objective = "synthetic-quadratic"
batch_size = 2

[convergence]
budget = 2
min_evaluations = 0

[inner]
max_windows = 6

[gp]
n_restarts = 2
screen_per_dim = 256
refine_iterations = 50
"""


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path):
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def test_missing_config_file(tmp_path):
    assert main(["bo", "--config", str(tmp_path / "nope.toml")]) == EXIT_MISSING


def test_unparseable_config(tmp_path):
    assert main(["bo", "--config", str(write(tmp_path, "seed = = 1"))]) == EXIT_PARSE


def test_unknown_key_is_named(tmp_path, capsys):
    cfg = write(tmp_path, "[gp]\nn_restart = 3\n")
    assert main(["bo", "--config", str(cfg)]) == EXIT_INVALID
    assert "gp.n_restart" in capsys.readouterr().err


def test_wrong_type(tmp_path):
    assert main(["bo", "--config", str(write(tmp_path, 'seed = "one"\n'))]) == EXIT_INVALID


def test_invalid_domain(tmp_path, capsys):
    cfg = write(tmp_path, 'objective = "branin"\n[domain]\nlower = [0.0, 1.0]\nupper = [1.0, 1.0]\n')
    assert main(["bo", "--config", str(cfg)]) == EXIT_INVALID
    assert "dimension 1" in capsys.readouterr().err


def test_invalid_batch_size_override(tmp_path):
    assert main(["bo", "--batch-size", "0", "--out", str(tmp_path)]) == EXIT_INVALID


def test_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == EXIT_USAGE


def test_report_without_location():
    assert main(["report"]) == EXIT_USAGE


def test_resolved_config_round_trip(tmp_path):
    cfg = resolve(RunConfig(mode="codesign"))
    text = config_to_toml(cfg)
    again = parse_config(write(tmp_path, text))
    assert again == cfg
    assert config_to_toml(again) == text


def test_defaults_depend_on_mode():
    assert resolve(RunConfig(mode="codesign")).convergence.min_evaluations == 12
    assert resolve(RunConfig(mode="bo", objective="quadratic")).convergence.min_evaluations == 0


def test_econ_table(tmp_path, capsys):
    assert main(["econ", "--out", str(tmp_path)]) == EXIT_OK
    text = capsys.readouterr().out
    for total in ("54293", "49200", "44533"):
        assert total in text
    rows = read_csv(tmp_path / "cost_table.csv")
    assert [r["n_per_batch"] for r in rows] == ["1", "3", "4"]
    assert (tmp_path / "config.resolved.toml").is_file()


def test_simulate_calm_has_zero_cost(tmp_path):
    cfg = write(tmp_path, "[wind]\nenabled = false\n[simulate]\nsettle = 10.0\nduration = 20.0\n")
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert float(read_csv(out / "summary.csv")[0]["best_cost"]) == 0.0
    ts = read_csv(out / "timeseries.csv")
    assert float(ts[-1]["time"]) == pytest.approx(30.0)


def test_simulate_divergence_is_runtime_error(tmp_path):
    cfg = write(tmp_path, "[wind]\nv_base = 20.0\n[simulate]\nsettle = 10.0\nduration = 10.0\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_bo_summary_is_reproducible(tmp_path):
    cfg = write(tmp_path, QUICK_BO)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["bo", "--config", str(cfg), "--out", str(a)]) == EXIT_OK
    assert main(["bo", "--config", str(cfg), "--out", str(b)]) == EXIT_OK
    assert (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()
    row = read_csv(a / "summary.csv")[0]
    assert float(row["best_point"]) == pytest.approx(0.3, abs=0.05)
    header = (a / "trace.csv").read_text().splitlines()[0]
    assert header == "iteration,batch_index,x0,reward,incumbent,timestamp"


def test_batch_size_override(tmp_path):
    out = tmp_path / "o"
    assert main(["bo", "--config", str(write(tmp_path, QUICK_BO)), "--batch-size", "3", "--out", str(out)]) == EXIT_OK
    assert read_csv(out / "summary.csv")[0]["batch_size"] == "3"
    assert load_config(out / "config.resolved.toml").batch_size == 3


def test_codesign_outputs_and_report(tmp_path, capsys):
    out = tmp_path / "cd"
    assert main(["codesign", "--config", str(write(tmp_path, QUICK_CODESIGN)), "--out", str(out)]) == EXIT_OK
    for name in ("outer_trace.csv", "inner_traces.csv", "convergence.csv", "summary.csv"):
        assert (out / name).is_file()
    header = (out / "outer_trace.csv").read_text().splitlines()[0]
    assert header == "iteration,batch_index,x0,x1,reward,incumbent,timestamp"
    assert len(read_csv(out / "outer_trace.csv")) == 2 + 2
    capsys.readouterr()
    assert main(["report", "--out", str(out)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "stop_reason" in text and "budget_exhausted" in text


def test_report_on_empty_directory(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == EXIT_MISSING
