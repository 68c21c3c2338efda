import json

import jsonschema
import pytest

from winnerdesign.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_oracle_alloc_json(capsys, schema):
    code, out, _ = run(capsys, "oracle-alloc", "--delta", "0.1", "--sigma1", "1", "--sigma2", "1.25", "--T", "300", "--json")
    assert code == 0
    data = json.loads(out)
    jsonschema.validate(data, schema("oracle_alloc"))
    assert sum(data["allocation"]) == 300


def test_oracle_alloc_text(capsys):
    code, out, _ = run(capsys, "oracle-alloc", "--delta", "0.1", "--T", "60")
    assert code == 0 and out.startswith("allocation n0=")


def test_domain_error_exits_1(capsys):
    code, _, err = run(capsys, "oracle-alloc", "--delta", "0.1", "--sigma1", "-1", "--T", "300")
    assert code == 1 and "error:" in err
    code, _, err = run(capsys, "two-stage", "--delta", "0.1", "--T", "10", "--T0", "9", "--seed", "1")
    assert code == 1


@pytest.mark.parametrize(
    "argv",
    [
        ["oracle-alloc", "--delta", "0.1"],
        ["validate", "--suite", "nope"],
        ["two-stage", "--delta", "0.1", "--T", "90", "--seed", "-3"],
        ["simulate", "--config", "x.json", "--workers", "0"],
        ["bogus"],
    ],
)
def test_usage_errors_exit_2(capsys, argv):
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == 2


def test_two_stage_seeded_and_schema(capsys, schema):
    argv = ["two-stage", "--delta", "0.15", "--sigma2", "1.25", "--T", "300", "--seed", "4", "--json"]
    _, a, _ = run(capsys, *argv)
    _, b, _ = run(capsys, *argv)
    assert a == b
    data = json.loads(a)
    jsonschema.validate(data, schema("two_stage"))
    assert data["plan"]["pilot"] == [34, 33, 33]
    assert sum(data["plan"]["post"]) == 200
    assert data["outcome"]["bias_term"] > 0


def test_two_stage_no_debias(capsys):
    _, out, _ = run(capsys, "two-stage", "--delta", "0.1", "--T", "90", "--seed", "2", "--no-debias", "--json")
    o = json.loads(out)["outcome"]
    assert o["bias_term"] == 0.0 and o["tau_debiased"] == o["tau_raw"]


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"delta": [0.1], "sigma_ratio": [1.25], "T_grid": [60], "replications": 40, "master_seed": 9}))
    return p


def test_simulate_csv_json_and_workers(capsys, tmp_path, config, schema):
    out1, out4 = tmp_path / "a.csv", tmp_path / "b.csv"
    js = tmp_path / "a.json"
    assert main(["simulate", "--config", str(config), "--out", str(out1), "--json-out", str(js), "--workers", "1"]) == 0
    assert main(["simulate", "--config", str(config), "--out", str(out4), "--workers", "4"]) == 0
    assert out1.read_bytes() == out4.read_bytes()
    assert len(out1.read_text().splitlines()) == 1 + 6
    jsonschema.validate(json.loads(js.read_text()), schema("metrics"))
    capsys.readouterr()
    _, other, _ = run(capsys, "simulate", "--config", str(config), "--seed", "10")
    assert other != out1.read_text()


def test_simulate_config_schema_and_errors(capsys, tmp_path, config, schema):
    jsonschema.validate(json.loads(config.read_text()), schema("sim_config"))
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"delta": [0.1], "sigma_ratio": [-1], "master_seed": 1, "replications": 0}))
    code, _, err = run(capsys, "simulate", "--config", str(bad))
    assert code == 1 and "sigma_ratio" in err and "replications" in err
    code, _, _ = run(capsys, "simulate", "--config", str(tmp_path / "missing.json"))
    assert code == 1


def test_simulate_sweep(capsys, config):
    code, out, _ = run(capsys, "simulate", "--config", str(config), "--sweep-T0", "12,24", "--replications", "20")
    assert code == 0
    rows = out.splitlines()[1:]
    assert [r.split(",")[2] for r in rows] == ["12", "12", "24", "24"]


def test_replay_rerun_identical(capsys, tmp_path):
    import numpy as np

    rng = np.random.default_rng(0)
    lines = ["arm,outcome"]
    for lab, mu in (("regular", 0.0), ("small", 0.2), ("aide", 0.1)):
        lines += [f"{lab},{float(y)!r}" for y in rng.normal(mu, 1, 120)]
    data = tmp_path / "records.csv"
    data.write_text("\n".join(lines) + "\n")
    argv = ["replay", "--data", str(data), "--map", "regular=0,small=1,aide=2", "--T", "90", "--T0", "30", "--reps", "30", "--seed", "3"]
    code, a, _ = run(capsys, *argv)
    _, b, _ = run(capsys, *argv, "--workers", "2")
    assert code == 0 and a == b
    assert a.splitlines()[0].endswith("cond_bias_term_2")
    assert len(a.splitlines()) == 1 + 5
    code, p, _ = run(capsys, *argv, "--pseudo", "drop=aide,split=regular", "--methods", "proposal")
    assert code == 0 and "pseudo" in p
    code, _, err = run(capsys, "replay", "--data", str(data), "--map", "regular=0,small=1", "--T", "90", "--T0", "30", "--reps", "3", "--seed", "1")
    assert code == 1 and "unmapped" in err


def test_validate_selection_json(capsys, schema):
    code, out, _ = run(capsys, "validate", "--suite", "selection", "--seed", "0", "--json")
    data = json.loads(out)
    jsonschema.validate(data, schema("validate"))
    assert code == (0 if data["passed"] else 1)
