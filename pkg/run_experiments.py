"""
Command-line runner for order-stability experiments

Subcommands compute metrics between two measures, certify a kernel, simulate
the absorbing coupled chain, run the example models and the property suite.
``run --config FILE`` executes a batch described by one JSON document.
"""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from coupling import DEFAULT_BLOCK_SIZE, absorbing_coupled_kernel, bound_holds, coupling_bound_table
from markov_kernel import (
    MarkovKernel,
    convergence_profile,
    load_kernel,
    stationary,
    uniform_convergence_profile,
)
from measure import Measure, affinity, load_measure, tv_distance
from models import bernoulli_profile, build_model
from ordered_affinity import (
    beta,
    gamma,
    max_downset_deficiency,
    max_upset_deficiency,
    ordered_affinity,
)
from poset import load_poset
from property_suite import PropertySuite
from result_exporter import ResultExporter
from stability_errors import (
    EXIT_ASSERTION,
    EXIT_OK,
    AssertionFailure,
    ConfigError,
    exit_code_for,
)

logger = logging.getLogger(__name__)

DEFAULT_SEED = int(os.getenv("ORDSTAB_SEED", "20240101"))
DEFAULT_CONFIG_FILE = "experiment_config.json"

KINDS = ("metrics", "certify", "couple-sim", "model-run", "suite")
KIND_ALIASES = {"property-suite": "suite"}
SIM_MODELS = ("inventory", "splitting", "two-state")
RUN_MODELS = ("bernoulli",) + SIM_MODELS
# z-level of the confidence limit a simulated bound is checked against
BOUND_Z = 4.0


@dataclass
class ExperimentConfig:
    """One experiment; unset fields fall back to the defaults below"""

    kind: str
    name: Optional[str] = None
    poset: Optional[str] = None
    mu: Optional[str] = None
    nu: Optional[str] = None
    kernel: Optional[str] = None
    model: Optional[str] = None
    model_params: Dict[str, Any] = field(default_factory=dict)
    m_max: int = 8
    x0: Optional[Any] = None
    y0: Optional[Any] = None
    horizon: int = 50
    replications: int = 10000
    seed: int = DEFAULT_SEED
    workers: int = 1
    block_size: int = DEFAULT_BLOCK_SIZE
    t_max: int = 10
    trials: int = 200
    output_dir: str = "outputs"
    base_dir: str = "."

    def __post_init__(self):
        self.kind = KIND_ALIASES.get(self.kind, self.kind)
        if self.name is None:
            self.name = self.kind.replace("-", "_")
        self.validate()

    @classmethod
    def from_dict(cls, document: Dict[str, Any], defaults: Optional[Dict[str, Any]] = None) -> "ExperimentConfig":
        """
        Build a config from a JSON object, on top of batch-level defaults

        Raises:
            ConfigError: Unknown fields, a missing kind, or malformed values
        """
        merged = dict(defaults or {})
        merged.update(document)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(merged) - known)
        if unknown:
            raise ConfigError(f"Unknown config fields: {unknown}")
        if "kind" not in merged:
            raise ConfigError("Experiment needs a 'kind'")
        try:
            return cls(**merged)
        except TypeError as e:
            raise ConfigError(f"Malformed experiment: {e}") from e

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"Unknown experiment kind {self.kind!r}, expected one of {list(KINDS)}")
        for name in ("m_max", "horizon", "replications", "seed", "workers", "block_size",
                     "t_max", "trials"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"Field {name!r} must be an integer, got {value!r}")
        if not isinstance(self.model_params, dict):
            raise ConfigError("Field 'model_params' must be an object")

        if self.kind == "metrics" and not (self.mu and self.nu):
            raise ConfigError("metrics needs 'mu' and 'nu'")
        if self.kind == "certify" and not self.kernel:
            raise ConfigError("certify needs 'kernel'")
        if self.kind == "couple-sim":
            if bool(self.kernel) == bool(self.model):
                raise ConfigError("couple-sim needs exactly one of 'kernel' and 'model'")
            if self.model and self.model not in SIM_MODELS:
                raise ConfigError(f"couple-sim model must be one of {list(SIM_MODELS)}")
        if self.kind == "model-run" and self.model not in RUN_MODELS:
            raise ConfigError(f"model-run needs 'model' in {list(RUN_MODELS)}")

    def resolve(self, path: Optional[str]) -> Optional[Path]:
        """Paths are taken as given, else relative to the config file"""
        if path is None:
            return None
        candidate = Path(path)
        if candidate.is_absolute() or candidate.exists():
            return candidate
        return Path(self.base_dir) / candidate


def load_config(path: str) -> List[ExperimentConfig]:
    """
    Read experiments from a JSON file

    The document is either one experiment object, or an object with an
    ``experiments`` list whose other keys are defaults for every entry.

    Raises:
        FileNotFoundError: The file does not exist
        ConfigError: The document is not valid JSON or describes bad experiments
    """
    config_path = Path(path)
    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config {config_path} is not valid JSON: {e}") from e
    if not isinstance(document, dict):
        raise ConfigError(f"Config {config_path} must hold a JSON object")

    defaults = {k: v for k, v in document.items() if k != "experiments"}
    defaults.setdefault("base_dir", str(config_path.parent))
    entries = document.get("experiments")
    if entries is None:
        return [ExperimentConfig.from_dict(defaults)]
    if not isinstance(entries, list) or not entries:
        raise ConfigError("'experiments' must be a non-empty list")
    defaults.pop("kind", None)
    configs = [ExperimentConfig.from_dict(entry, defaults) for entry in entries]
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ConfigError(f"Experiment names must be unique, got {names}")
    return configs


class ExperimentRunner:
    """Runs experiments and writes their results through a ResultExporter"""

    def __init__(self, output_dir: str = "outputs"):
        self.output_dir = output_dir
        self.exporter = ResultExporter(output_dir)

    def run(self, config: ExperimentConfig) -> List[Path]:
        """
        Run one experiment

        Returns:
            Paths of the files written

        Raises:
            AssertionFailure: A checked inequality failed; results are still written
        """
        handlers = {
            "metrics": self.run_metrics,
            "certify": self.run_certify,
            "couple-sim": self.run_couple_sim,
            "model-run": self.run_model,
            "suite": self.run_suite,
        }
        logger.info(f"Running {config.kind} experiment {config.name!r}")
        try:
            return handlers[config.kind](config)
        except Exception as e:
            logger.error(f"Experiment {config.name!r} failed: {e}")
            raise

    def run_metrics(self, config: ExperimentConfig) -> List[Path]:
        poset = load_poset(config.resolve(config.poset)) if config.poset else None
        mu = load_measure(config.resolve(config.mu), poset)
        nu = load_measure(config.resolve(config.nu), poset if poset is not None else mu.poset)
        forward, forward_set = max_upset_deficiency(mu, nu)
        backward, backward_set = max_upset_deficiency(nu, mu)
        downward, downward_set = max_downset_deficiency(mu, nu)
        document = {
            "alpha": affinity(mu, nu),
            "alpha_O_mu_nu": ordered_affinity(mu, nu),
            "alpha_O_nu_mu": ordered_affinity(nu, mu),
            "deficiency_mu_nu": {"value": forward, "upset": forward_set.indices()},
            "deficiency_nu_mu": {"value": backward, "upset": backward_set.indices()},
            "downset_deficiency_mu_nu": {"value": downward, "downset": downward_set.indices()},
            "gamma": gamma(mu, nu),
            "beta": beta(mu, nu),
            "tv": tv_distance(mu, nu),
        }
        print(json.dumps(document, sort_keys=True))
        return [self.exporter.write_json(document, f"{config.name}.json")]

    def run_certify(self, config: ExperimentConfig) -> List[Path]:
        kernel = load_kernel(config.resolve(config.kernel))
        certificate = stationary(kernel, config.m_max)
        return [self.exporter.write_json(certificate.to_dict(), f"{config.name}.json")]

    def run_couple_sim(self, config: ExperimentConfig) -> List[Path]:
        if config.model:
            kernel = build_model(config.model, **config.model_params).kernel
        else:
            kernel = load_kernel(config.resolve(config.kernel))
        x0, y0 = self._start_pair(kernel, config)
        coupled = absorbing_coupled_kernel(kernel)
        table = coupling_bound_table(coupled, x0, y0, config.horizon, config.replications,
                                     config.seed, config.block_size, config.workers)
        path = self.exporter.write_csv(table, f"{config.name}.csv")
        if not bound_holds(table, BOUND_Z):
            raise AssertionFailure(f"Exact gamma above the z={BOUND_Z:g} upper limit of the simulated bound",
                                   {"x0": x0, "y0": y0, "seed": config.seed})
        return [path]

    def run_model(self, config: ExperimentConfig) -> List[Path]:
        if config.model == "bernoulli":
            t_max = int(config.model_params.get("t", config.t_max))
            table = bernoulli_profile(t_max)
            return [self.exporter.write_csv(table, f"{config.name}.csv")]

        model = build_model(config.model, **config.model_params)
        kernel = model.kernel
        certificate = stationary(kernel, config.m_max)
        start = self._start_pair(kernel, config)[0]
        profile = convergence_profile(kernel, certificate, Measure.dirac(kernel.poset, start),
                                      config.horizon)
        uniform = uniform_convergence_profile(kernel, certificate, config.horizon)
        profile["sup_gamma"] = uniform["sup_gamma"]
        profile["sup_beta"] = uniform["sup_beta"]
        profile["uniform_bound"] = uniform["bound"]
        document = model.to_dict()
        document["certificate"] = certificate.to_dict()
        return [
            self.exporter.write_csv(profile, f"{config.name}.csv"),
            self.exporter.write_json(document, f"{config.name}_kernel.json"),
        ]

    def run_suite(self, config: ExperimentConfig) -> List[Path]:
        kernel = load_kernel(config.resolve(config.kernel)) if config.kernel else None
        report = PropertySuite(config.seed, config.trials, kernel=kernel).run()
        path = self.exporter.write_csv(report.table, f"{config.name}.csv")
        report.raise_for_failures()
        return [path]

    def run_batch(self, configs: Sequence[ExperimentConfig], parallel: int = 1) -> int:
        """
        Run every experiment and write summary.csv

        A failing experiment does not stop the others.

        Returns:
            Exit code of the first failing experiment, or EXIT_OK
        """
        def attempt(config: ExperimentConfig) -> Dict[str, Any]:
            try:
                paths = self.run(config)
                return {"experiment": config.name, "kind": config.kind, "status": "ok",
                        "exit_code": EXIT_OK, "outputs": ";".join(p.name for p in paths)}
            except Exception as e:
                if isinstance(e, AssertionFailure):
                    _print_counterexample(e)
                return {"experiment": config.name, "kind": config.kind, "status": type(e).__name__,
                        "exit_code": exit_code_for(e), "outputs": ""}

        if parallel > 1:
            with ThreadPoolExecutor(max_workers=parallel) as pool:
                records = list(pool.map(attempt, configs))
        else:
            records = [attempt(config) for config in configs]

        self.exporter.create_summary_report(records)
        failed = [r for r in records if r["exit_code"] != EXIT_OK]
        logger.info(f"Batch finished: {len(records) - len(failed)} of {len(records)} experiments succeeded")
        return failed[0]["exit_code"] if failed else EXIT_OK

    @staticmethod
    def _start_pair(kernel: MarkovKernel, config: ExperimentConfig):
        """Start states as indices; default to the last and the first state"""
        poset = kernel.poset
        x0 = poset.n - 1 if config.x0 is None else poset.index_of(config.x0)
        y0 = 0 if config.y0 is None else poset.index_of(config.y0)
        return x0, y0


def _print_counterexample(error: AssertionFailure) -> None:
    if error.counterexample:
        print(json.dumps(_jsonable(error.counterexample), sort_keys=True), file=sys.stderr)


def _jsonable(value: Any) -> Any:
    if isinstance(value, Measure):
        return [float(v) for v in value.weights]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON experiment config; flags override its fields")
    parser.add_argument("--output-dir", dest="output_dir", help="Directory for result files")
    parser.add_argument("--name", help="Base name of the output files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Order-stability experiments for Markov chains "
                                                 "on finite partially ordered state spaces")
    parser.add_argument("--log-file", dest="log_file", help="Also write the log to this file")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    metrics = sub.add_parser("metrics", help="Affinities, deficiencies, gamma, beta and tv of two measures")
    _add_common(metrics)
    metrics.add_argument("--poset", help="Poset JSON overriding the one named by the measures")
    metrics.add_argument("--mu", help="First measure JSON")
    metrics.add_argument("--nu", help="Second measure JSON")

    certify = sub.add_parser("certify", help="Stationary distribution with a convergence certificate")
    _add_common(certify)
    certify.add_argument("--kernel", help="Kernel JSON")
    certify.add_argument("--m-max", dest="m_max", type=int, help="Largest power tried (default 8)")

    couple = sub.add_parser("couple-sim", help="Simulate the absorbing coupled chain")
    _add_common(couple)
    source = couple.add_mutually_exclusive_group()
    source.add_argument("--kernel", help="Kernel JSON")
    source.add_argument("--model", choices=SIM_MODELS, help="Built-in model")
    couple.add_argument("--x0", type=int, help="Start index of X (default: last state)")
    couple.add_argument("--y0", type=int, help="Start index of Y (default: first state)")
    couple.add_argument("--horizon", type=int)
    couple.add_argument("--replications", type=int)
    couple.add_argument("--seed", type=int, help=f"Root seed (default ORDSTAB_SEED or {DEFAULT_SEED})")
    couple.add_argument("--workers", type=int)
    couple.add_argument("--block-size", dest="block_size", type=int)

    model = sub.add_parser("model-run", help="Run a built-in model")
    _add_common(model)
    model.add_argument("model", nargs="?", choices=RUN_MODELS)
    model.add_argument("--t", dest="t_max", type=int, help="Bernoulli: last step")
    model.add_argument("--horizon", type=int, help="Steps of the convergence profile")
    model.add_argument("--m-max", dest="m_max", type=int)
    model.add_argument("--x0", type=int, help="Start index of the convergence profile")
    model.add_argument("--capacity", type=float, help="Inventory: restocking level K")
    model.add_argument("--grid-size", dest="grid_size", type=int, help="Inventory: grid points")
    model.add_argument("--cells", dest="n_cells", type=int, help="Inventory: shock quantile cells")
    model.add_argument("--n", type=int, help="Splitting: number of states")
    model.add_argument("--s1", type=float, help="Splitting: probability of jumping to the bottom")
    model.add_argument("--s2", type=float, help="Splitting: probability of jumping to the top")

    suite = sub.add_parser("suite", help="Randomized property suite")
    _add_common(suite)
    suite.add_argument("--seed", type=int)
    suite.add_argument("--trials", type=int)
    suite.add_argument("--kernel", help="Use this kernel in the kernel properties")

    batch = sub.add_parser("run", help="Run every experiment of a config file")
    batch.add_argument("--config", default=DEFAULT_CONFIG_FILE)
    batch.add_argument("--output-dir", dest="output_dir")
    batch.add_argument("--parallel", type=int, default=1, help="Experiments run at once")
    return parser


MODEL_FLAGS = ("capacity", "grid_size", "n_cells", "n", "s1", "s2")
CONFIG_FLAGS = ("name", "poset", "mu", "nu", "kernel", "model", "m_max", "x0", "y0", "horizon",
                "replications", "seed", "workers", "block_size", "t_max", "trials")


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Config file fields (if any) overridden by every flag given explicitly"""
    kind = args.command
    document: Dict[str, Any] = {}
    if args.config:
        configs = load_config(args.config)
        matching = [c for c in configs if c.kind == kind]
        if not matching:
            raise ConfigError(f"Config {args.config} has no {kind} experiment")
        document = asdict(matching[0])

    document["kind"] = kind
    for name in CONFIG_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            document[name] = value
    params = dict(document.get("model_params", {}))
    for name in MODEL_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            params[name] = value
    document["model_params"] = params
    if args.output_dir:
        document["output_dir"] = args.output_dir
    return ExperimentConfig.from_dict(document)


def configure_logging(log_file: Optional[str] = None, verbose: bool = False) -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        handlers.insert(0, logging.FileHandler(log_file, encoding="utf-8"))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point

    Returns:
        Process exit code; see stability_errors.EXIT_CODES
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    configure_logging(args.log_file, args.verbose)

    try:
        if args.command == "run":
            configs = load_config(args.config)
            output_dir = args.output_dir or configs[0].output_dir
            return ExperimentRunner(output_dir).run_batch(configs, args.parallel)

        config = config_from_args(args)
        paths = ExperimentRunner(config.output_dir).run(config)
        for path in paths:
            print(f"✅ {path}")
        return EXIT_OK
    except AssertionFailure as e:
        logger.error(f"Check failed: {e}")
        _print_counterexample(e)
        return EXIT_ASSERTION
    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"{type(e).__name__}: {e} (exit code {code})")
        return code


if __name__ == "__main__":
    sys.exit(main())
