import json

import pytest

from lowdev import textio
from lowdev.cli import (
    EXIT_ACCEPTANCE,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_VALIDATION,
    ConfigError,
    load_config,
    main,
    resolve_config,
)


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def config(tmp_path, task, params="", out="out", extra=""):
    return write(tmp_path, f'task = "{task}"\noutput_dir = "{tmp_path / out}"\nseed = 3\n{extra}\n'
                           f'[mechanism]\nalpha = 1.0\nbeta = 1.0\n[params]\n{params}\n', f"{out}.toml")


def test_derive(tmp_path):
    assert main(["run", str(config(tmp_path, "derive"))]) == EXIT_OK
    kv = textio.read_kv(tmp_path / "out" / "derive.txt")
    assert kv["constants"]["lambda_star"] == 1.0 and kv["constants"]["q"] == 1.0
    assert abs(kv["constants"]["rho"] - 1.4142135624) < 1e-10
    assert abs(kv["constants"]["survival_factor"] - 0.5819767) < 1e-7
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["artifacts"] == ["derive.txt"]


def test_rates_grouped_by_regime(tmp_path):
    assert main(["run", str(config(tmp_path, "rates"))]) == EXIT_OK
    kv = textio.read_kv(tmp_path / "out" / "rates.txt")
    assert kv["deep:-1.0"]["rate"] == 2.0
    assert [g.split(":")[0] for g in kv] == ["deep", "critical", "shallow"]


def test_validation_lists_every_problem(tmp_path, capsys):
    path = write(tmp_path, 'task = "derive"\nshade = 1\n[mechanism]\nalpha = 1.0\nbeta = 0.0\n'
                           '[params]\nn_offspring = 1\nbogus = 2\n')
    assert main(["run", str(path)]) == EXIT_VALIDATION
    err = capsys.readouterr().err
    for fragment in ("shade", "beta > 0", "n_offspring", "bogus"):
        assert fragment in err


def test_unknown_task_and_bad_toml(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, 'task = "nope"\n'))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "task = \n"))
    assert main(["validate", str(tmp_path / "missing.toml")]) == EXIT_VALIDATION


def test_levy_forms(tmp_path):
    cfg = load_config(write(tmp_path, 'task = "derive"\n[mechanism]\nalpha = 1.0\nbeta = 0.5\n'
                                      '[mechanism.levy.stable]\ntheta = 0.5\nscale = 1.0\n'))
    assert cfg["mechanism"]["levy"] == {"stable": {"theta": 0.5, "scale": 1.0}}
    cfg = load_config(write(tmp_path, 'task = "derive"\n[mechanism]\nalpha = 2.0\nbeta = 1.0\n'
                                      '[mechanism.levy]\natoms = [[1.0, 1.0]]\n'))
    assert cfg["mechanism"]["levy"] == {"atoms": [[1.0, 1.0]]}


def test_manifest_round_trip(tmp_path):
    path = config(tmp_path, "simulate-skeleton", "n_trees = 2000\nx_values = [1]\n")
    assert main(["run", str(path)]) == EXIT_OK
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert resolve_config(manifest["config"]) == manifest["config"] == load_config(path)


def test_deterministic_payloads(tmp_path):
    for out in ("a", "b"):
        assert main(["run", str(config(tmp_path, "simulate-sbm", "mass_scale = 20\nn_runs = 2000\n", out,
                                       'emit = ["csv", "kv", "raw-samples"]'))]) == EXIT_OK
    for name in ("sbm_report.txt", "sbm_samples.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_numerical_failure_recorded(tmp_path):
    path = config(tmp_path, "simulate-skeleton", "t_horizon = 10.0\nn_trees = 1000\ntau_delta = -2.0\n")
    assert main(["run", str(path)]) == EXIT_NUMERICAL
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["status"] == "failed" and "feasibility" in manifest["failure"]["message"]


def test_acceptance_failure_exit(tmp_path):
    assert main(["run", str(config(tmp_path, "full-report", "criteria = [1, 2, 10]"))]) == EXIT_OK
    path = config(tmp_path, "full-report", "criteria = [13]", out="c13")
    assert main(["run", str(path)]) == EXIT_ACCEPTANCE
    report = textio.read_kv(tmp_path / "c13" / "report.txt")
    assert report["criterion_13"]["status"] == "FAIL"


def test_figures_emitted(tmp_path):
    path = config(tmp_path, "extinction", extra='emit = ["csv", "kv", "figures"]')
    assert main(["run", str(path)]) == EXIT_OK
    assert (tmp_path / "out" / "extinction.png").stat().st_size > 0
