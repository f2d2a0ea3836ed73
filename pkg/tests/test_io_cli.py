import csv
import io
import json
import time

import numpy as np
import pytest

from multnoise.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from multnoise.experiments import CURVE_COLUMNS, NETWORK_COLUMNS, ExperimentConfig, config_from_dict
from multnoise.io import ConfigError, load_system, save_system, system_from_dict, system_to_dict
from multnoise.system import simple_example_system


def _write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def _run(argv, tmp_path, name="out"):
    out = tmp_path / name
    code = main(argv + ["--out", str(out)])
    return code, (out.read_bytes() if out.exists() else None)


def test_system_json_round_trip(tmp_path):
    model = simple_example_system()
    save_system(model, tmp_path / "s.json")
    back = load_system(tmp_path / "s.json")
    for name in ("A", "B", "SigmaA", "SigmaB"):
        assert np.array_equal(getattr(back, name), getattr(model, name))


def test_flat_row_major_matrices_accepted():
    doc = system_to_dict(simple_example_system())
    doc["A"] = [v for row in doc["A"] for v in row]
    assert np.array_equal(system_from_dict(doc).A, simple_example_system().A)


@pytest.mark.parametrize("field", ["n", "A", "SigmaB"])
def test_missing_field_is_named(field):
    doc = system_to_dict(simple_example_system())
    del doc[field]
    with pytest.raises(ConfigError, match=f"'{field}'"):
        system_from_dict(doc)


def test_invalid_system_rejected():
    doc = system_to_dict(simple_example_system())
    doc["SigmaA"] = (-np.eye(4)).tolist()
    with pytest.raises(ConfigError):
        system_from_dict(doc)
    doc = system_to_dict(simple_example_system())
    doc["B"] = [[1.0, 2.0]]
    with pytest.raises(ConfigError, match="'B'"):
        system_from_dict(doc)


def test_config_validation():
    with pytest.raises(ConfigError, match="unknown"):
        config_from_dict({"experiment": "simple", "bogus": 1})
    with pytest.raises(ConfigError, match="unknown"):
        config_from_dict({"experiment": "network", "network": {"nodez": 3}})
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": "simple", "grid": [10, 5]})
    with pytest.raises(ConfigError):
        ExperimentConfig(experiment="custom")
    cfg = config_from_dict({"experiment": "simple", "seeds": [1, 2], "grid": [10, 100]})
    assert cfg.seeds == (1, 2) and cfg.n_r_grid() == [10, 100]
    assert config_from_dict(cfg.to_dict()) == cfg


def test_default_grid_is_log_spaced_and_ends_at_max():
    g = ExperimentConfig(rollouts=100_000).n_r_grid()
    assert g[0] == 10 and g[-1] == 100_000 and all(b > a for a, b in zip(g, g[1:]))
    assert ExperimentConfig(experiment="network").max_rollouts() == 7


def test_cli_simple_csv(tmp_path):
    code, out = _run(["simple", "--rollouts", "2000", "--seed", "3"], tmp_path)
    assert code == EXIT_OK
    assert out.endswith(b"\r\n")
    rows = list(csv.DictReader(io.StringIO(out.decode())))
    assert tuple(rows[0]) == CURVE_COLUMNS
    assert rows[-1]["n_r"] == "2000" and {r["seed"] for r in rows} == {"3"}
    assert all(r["full_rank_Z"] in ("true", "false") for r in rows)
    float(rows[-1]["rel_err_AB"])


def test_cli_byte_identical_across_runs_and_threads(tmp_path):
    args = ["simple", "--rollouts", "3000", "--seed", "0", "--seed", "1"]
    a = _run(args + ["--threads", "1"], tmp_path, "a")
    b = _run(args + ["--threads", "1"], tmp_path, "b")
    c = _run(args + ["--threads", "4"], tmp_path, "c")
    assert a[0] == b[0] == c[0] == EXIT_OK
    assert a[1] == b[1] == c[1]


def test_cli_json_output(tmp_path):
    code, out = _run(["simple", "--rollouts", "500", "--format", "json"], tmp_path)
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["config"]["rollouts"] == 500 and "0" in doc["final"]
    assert np.asarray(doc["final"]["0"]["Ahat"]).shape == (2, 2)


def test_cli_custom_system(tmp_path):
    sys_path = _write(tmp_path, "sys.json", system_to_dict(simple_example_system()))
    cfg = _write(tmp_path, "cfg.json", {"experiment": "custom", "system_file": sys_path, "grid": [100, 1000]})
    code, out = _run(["custom", "--config", cfg], tmp_path)
    assert code == EXIT_OK
    assert [r["n_r"] for r in csv.DictReader(io.StringIO(out.decode()))] == ["100", "1000"]
    # same model inline gives the same output as the simple experiment
    code2, out2 = _run(["simple", "--config", _write(tmp_path, "c2.json", {"grid": [100, 1000]})], tmp_path, "o2")
    assert code2 == EXIT_OK and out2 == out


@pytest.mark.parametrize("argv", [
    ["simple", "--rollouts", "0"],
    ["simple", "--threads", "0"],
    ["simple", "--horizon", "1"],
    ["custom"],
])
def test_cli_config_errors(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_cli_argparse_errors_exit_2():
    for argv in (["bogus"], ["simple", "--format", "xml"], ["simple", "--seed", "x"]):
        with pytest.raises(SystemExit) as e:
            main(argv)
        assert e.value.code == EXIT_CONFIG


def test_cli_config_file_problems(tmp_path):
    assert main(["simple", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["simple", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["network", "--config", _write(tmp_path, "w.json", {"experiment": "simple"})]) == EXIT_CONFIG
    doc = system_to_dict(simple_example_system())
    del doc["SigmaA"]
    assert main(["custom", "--config", _write(tmp_path, "c.json", {"system": doc})]) == EXIT_CONFIG


def test_cli_numerical_failure(tmp_path):
    doc = {"n": 1, "m": 1, "A": [[1e80]], "B": [[1.0]], "SigmaA": [[0.0]], "SigmaB": [[0.0]]}
    cfg = _write(tmp_path, "c.json", {"system": doc, "grid": [10]})
    assert main(["custom", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_NUMERICAL


def test_cli_network_small(tmp_path):
    cfg = _write(tmp_path, "n.json", {"network": {"nodes": 4}})
    t0 = time.perf_counter()
    code, out = _run(["network", "--config", cfg, "--seed", "2"], tmp_path)
    assert code == EXIT_OK and time.perf_counter() - t0 < 60
    rows = list(csv.DictReader(io.StringIO(out.decode())))
    assert tuple(rows[0]) == NETWORK_COLUMNS and len(rows) == 1
    assert float(rows[0]["ms_radius"]) < 1


def test_network_zero_variance_truth_flag(tmp_path):
    cfg = _write(tmp_path, "n.json", {"network": {"nodes": 3, "edge_var_range": [0.0, 0.0]}, "horizon": 60,
                                      "rollouts": 20})
    code, out = _run(["network", "--config", cfg], tmp_path)
    assert code == EXIT_OK
    row = next(csv.DictReader(io.StringIO(out.decode())))
    assert row["mean_sigma"] == "" and "zero_variance_truth" in row["flag"]
