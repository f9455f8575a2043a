import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from run_experiments import ExperimentConfig, load_config, main
from stability_errors import (
    EXIT_CONFIG,
    EXIT_INPUT,
    EXIT_IO,
    EXIT_NO_CERTIFICATE,
    EXIT_OK,
    EXIT_USAGE,
    ConfigError,
)

HERE = Path(__file__).parent
INPUT = HERE / "input"


def _write(path: Path, document) -> Path:
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


@pytest.fixture
def identity_kernel(tmp_path):
    return _write(tmp_path / "identity_kernel.json",
                  {"poset": {"kind": "chain", "n": 2}, "rows": [[1.0, 0.0], [0.0, 1.0]]})


def test_certify_two_state(tmp_path):
    code = main(["certify", "--kernel", str(INPUT / "two_state_kernel.json"), "--output-dir", str(tmp_path)])
    assert code == EXIT_OK
    document = json.loads((tmp_path / "certify.json").read_text())
    assert document["m"] == 1
    assert document["sigma_m"] == pytest.approx(0.5)
    np.testing.assert_allclose(document["stationary"], [0.4, 0.6], atol=1e-9)
    assert document["residual"] <= 1e-8


def test_metrics_on_the_three_chain(tmp_path):
    code = main(["metrics", "--mu", str(INPUT / "chain_mu.json"), "--nu", str(INPUT / "chain_nu.json"),
                 "--output-dir", str(tmp_path), "--name", "chain"])
    assert code == EXIT_OK
    document = json.loads((tmp_path / "chain.json").read_text())
    assert document["gamma"] == pytest.approx(0.5)
    assert document["beta"] == pytest.approx(1.0)
    assert document["tv"] == pytest.approx(1.0)
    assert document["alpha"] == pytest.approx(0.5)
    assert document["alpha_O_mu_nu"] == pytest.approx(0.5)
    assert document["alpha_O_nu_mu"] == pytest.approx(1.0)
    assert document["deficiency_nu_mu"]["value"] == pytest.approx(0.0)


def test_bernoulli_model_run(tmp_path):
    code = main(["model-run", "bernoulli", "--t", "6", "--output-dir", str(tmp_path)])
    assert code == EXIT_OK
    table = pd.read_csv(tmp_path / "model_run.csv")
    assert table["t"].tolist() == list(range(7))
    np.testing.assert_allclose(table["gamma"], 2.0 ** -table["t"])


def test_two_state_model_run_writes_profile_and_kernel(tmp_path):
    code = main(["model-run", "two-state", "--horizon", "5", "--output-dir", str(tmp_path)])
    assert code == EXIT_OK
    table = pd.read_csv(tmp_path / "model_run.csv")
    assert list(table.columns) == ["t", "gamma", "bound", "sup_gamma", "sup_beta", "uniform_bound"]
    assert (table["gamma"] <= table["bound"] + 1e-8).all()
    document = json.loads((tmp_path / "model_run_kernel.json").read_text())
    assert document["certificate"]["m"] == 1


def test_couple_sim_schema_and_determinism(tmp_path):
    args = ["couple-sim", "--model", "two-state", "--horizon", "10", "--replications", "2000",
            "--seed", "11", "--name", "run"]
    assert main(args + ["--output-dir", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--output-dir", str(tmp_path / "b")]) == EXIT_OK
    first = (tmp_path / "a" / "run.csv").read_bytes()
    assert first == (tmp_path / "b" / "run.csv").read_bytes()
    table = pd.read_csv(tmp_path / "a" / "run.csv")
    for column in ("t", "p_never_leq", "p_never_geq", "se_leq", "se_geq", "gamma_exact", "bound"):
        assert column in table.columns
    assert len(table) == 11


def test_suite_runs_and_accepts_zero_trials(tmp_path):
    assert main(["suite", "--trials", "2", "--seed", "3", "--output-dir", str(tmp_path)]) == EXIT_OK
    assert (pd.read_csv(tmp_path / "suite.csv")["failed"] == 0).all()
    assert main(["suite", "--trials", "0", "--output-dir", str(tmp_path), "--name", "empty"]) == EXIT_OK


@pytest.mark.parametrize("argv", [[], ["certify", "--m-max", "many"], ["bogus"]])
def test_usage_errors(argv):
    assert main(argv) == EXIT_USAGE


def test_missing_kernel_file(tmp_path):
    code = main(["certify", "--kernel", str(tmp_path / "absent.json"), "--output-dir", str(tmp_path)])
    assert code == EXIT_IO


def test_identity_kernel_has_no_certificate(tmp_path, identity_kernel):
    code = main(["certify", "--kernel", str(identity_kernel), "--output-dir", str(tmp_path)])
    assert code == EXIT_NO_CERTIFICATE


def test_non_monotone_kernel_is_an_input_error(tmp_path):
    kernel = _write(tmp_path / "swapped.json",
                    {"poset": {"kind": "chain", "n": 2}, "rows": [[0.2, 0.8], [0.7, 0.3]]})
    assert main(["certify", "--kernel", str(kernel), "--output-dir", str(tmp_path)]) == EXIT_INPUT


def test_bad_config_files(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    assert main(["run", "--config", str(broken)]) == EXIT_CONFIG
    unknown = _write(tmp_path / "unknown.json", {"kind": "nope"})
    assert main(["run", "--config", str(unknown)]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == EXIT_IO


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"kind": "certify", "colour": "red", "kernel": "k.json"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"kind": "couple-sim"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"kind": "certify", "kernel": "k.json", "m_max": "8"})
    assert ExperimentConfig.from_dict({"kind": "property-suite"}).kind == "suite"


def test_batch_continues_past_failures(tmp_path, identity_kernel):
    config = _write(tmp_path / "batch.json", {
        "output_dir": str(tmp_path / "out"),
        "experiments": [
            {"kind": "certify", "name": "stuck", "kernel": identity_kernel.name},
            {"kind": "certify", "name": "two_state", "kernel": str(INPUT / "two_state_kernel.json")},
            {"kind": "model-run", "name": "halving", "model": "bernoulli", "t_max": 3},
        ],
    })
    assert main(["run", "--config", str(config), "--parallel", "2"]) == EXIT_NO_CERTIFICATE
    summary = pd.read_csv(tmp_path / "out" / "summary.csv")
    assert summary["experiment"].tolist() == ["stuck", "two_state", "halving"]
    assert summary["exit_code"].tolist() == [EXIT_NO_CERTIFICATE, EXIT_OK, EXIT_OK]
    assert (tmp_path / "out" / "two_state.json").exists()
    assert (tmp_path / "out" / "halving.csv").exists()


def test_flags_override_the_config_file(tmp_path):
    config = _write(tmp_path / "certify.json", {
        "kind": "certify", "name": "from_file", "kernel": str(INPUT / "two_state_kernel.json"),
    })
    code = main(["certify", "--config", str(config), "--name", "from_flag", "--output-dir", str(tmp_path)])
    assert code == EXIT_OK
    assert (tmp_path / "from_flag.json").exists()
    assert not (tmp_path / "from_file.json").exists()


def test_shipped_configs_parse():
    configs = load_config(str(HERE / "experiment_config.json"))
    assert len({c.name for c in configs}) == len(configs)
    for config in configs:
        for attribute in ("mu", "nu", "kernel"):
            path = config.resolve(getattr(config, attribute))
            assert path is None or path.exists()
    single = load_config(str(INPUT / "certify_two_state.json"))
    assert [c.kind for c in single] == ["certify"]
    assert single[0].resolve(single[0].kernel).exists()
