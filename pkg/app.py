"""
Fissid - Fissile-parameter identification from neutron and gamma noise
Command-line entry point running the simulation, surrogate, inference and active-learning stages
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd
from loguru import logger

import config
from backend.cache_manager import CacheManager
from backend.dataset import TrainingDataset, train_test_split_dataset
from backend.design import csq_loop, sobol_weights
from backend.exceptions import ConfigError, FissidError
from backend.experiment import ExperimentConfig, load_config
from backend.inference import (ObservationSet, PriorSpec, joint_pipeline, marginal_grid, neutron_pipeline,
                               posterior_std_ratio, sequential_pipeline)
from backend.metrics import ValidationReport, validate_surrogate
from backend.moments import sequential_binning
from backend.nuclear_data import NuclearData, load_nuclear_data
from backend.simulator import MaterialInput, generate_dataset, observe_replicates, simulate_timelist
from backend.storage import (config_hash, read_csv, read_json, read_posterior, read_timelist, update_manifest,
                             write_csv, write_json, write_posterior, write_timelist)
from backend.surrogate import SURROGATE_KINDS, load_surrogate, save_surrogate, train_surrogate_kind
from utils.logger_setup import log_error, log_stage, setup_logging, timed
from utils.seeding import stage_seed

INVERT_MODES = ("neutron", "sequential", "joint")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fissid", description="Fissile-parameter identification from neutron and gamma noise")
    parser.add_argument("--config", type=Path, default=None, help="Experiment configuration (JSON)")
    parser.add_argument("--output-dir", type=Path, default=None, help="Override the configured output directory")
    parser.add_argument("--log-level", default=None, help="Console log level")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    simulate = sub.add_parser("simulate", help="Simulate one time list of the measured assembly")
    simulate.add_argument("--duration", type=float, default=None)

    sub.add_parser("moments", help="Feynman curves and replicated observations of the measured assembly")

    dataset = sub.add_parser("dataset", help="Generate the training dataset")
    dataset.add_argument("--n", type=int, default=None, help="Number of instances")

    train = sub.add_parser("train", help="Train surrogates")
    train.add_argument("--kind", choices=(*SURROGATE_KINDS, "all"), default="all")

    sub.add_parser("validate", help="Validate trained surrogates on the test set")

    invert = sub.add_parser("invert", help="Sample a posterior")
    invert.add_argument("--mode", choices=INVERT_MODES, required=True)
    invert.add_argument("--surrogate", choices=("initial", "updated"), default="initial",
                        help="Joint surrogate: as trained or as updated by 'csq' (joint mode only)")

    csq = sub.add_parser("csq", help="Active learning of the joint surrogate")
    csq.add_argument("--n-new", type=int, default=config.CSQ_POINTS)

    sub.add_parser("sobol", help="Sobol weights of the matching loss")
    sub.add_parser("report", help="Marginal density grids and posterior summaries from persisted chains")
    return parser


class Pipeline:
    """Runs the subcommands against one experiment configuration and output directory"""

    def __init__(self, experiment: ExperimentConfig):
        self.experiment = experiment
        self.output_dir = Path(experiment.output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.nuclear: NuclearData = load_nuclear_data(experiment.nuclear_data)
        self.cache = CacheManager(config.CACHE_DIR) if config.CACHE_ENABLED else None
        self.config_hash = config_hash(experiment.to_dict())
        logger.info(f"Pipeline initialized (output {self.output_dir}, config {self.config_hash[:12]})")

    def path(self, stage: str, name: str) -> Path:
        return self.output_dir / stage / name

    def seed(self, *path) -> int:
        return stage_seed(self.experiment.seed, *path)

    def finish(self, stage: str, artifacts: Sequence[Path], seeds: Dict[str, int]):
        update_manifest(self.output_dir, stage, artifacts, self.experiment.seed, seeds, self.config_hash)

    def truth(self) -> MaterialInput:
        return MaterialInput(**self.experiment.observations.truth)

    def base_window(self) -> float:
        return self.experiment.moments.base_window or 0.1 / self.nuclear.alpha

    def _require(self, path: Path, producer: str) -> Path:
        if not path.exists():
            raise FissidError(f"{path} not found; run '{producer}' first")
        return path

    # --- stages -------------------------------------------------------------

    def simulate(self, duration: Optional[float] = None) -> List[Path]:
        seed = self.seed("simulate")
        timelist = simulate_timelist(self.truth(), self.nuclear, duration or self.experiment.observations.duration,
                                     seed, workers=config.WORKERS)
        path = write_timelist(timelist, self.path("simulate", "timelist.tsv"))
        self.finish("simulate", [path], {"simulate": seed})
        return [path]

    def moments(self) -> List[Path]:
        cfg = self.experiment.moments
        obs_cfg = self.experiment.observations
        timelist = read_timelist(self._require(self.path("simulate", "timelist.tsv"), "simulate"))
        artifacts = []
        for kind in ("neutron", "gamma"):
            curve = sequential_binning(timelist, kind, self.base_window(), cfg.n_doublings, cfg.low_statistics_windows)
            artifacts.append(write_csv(curve.to_frame(), self.path("moments", f"feynman_{kind}.csv"),
                                       {"kind": kind, "rate": curve.rate, "base_window": curve.base_window}))

        seeds = {"neutron": self.seed("observe", "neutron"), "joint": self.seed("observe", "joint")}
        for kind, n, columns in (("neutron", obs_cfg.n_neutron, config.NEUTRON_OUTPUTS),
                                 ("joint", obs_cfg.n_joint, config.JOINT_OUTPUTS)):
            values = observe_replicates(self.truth(), n, self.nuclear, obs_cfg.duration, seeds[kind], kind=kind,
                                        base_window=self.base_window(), n_doublings=cfg.n_doublings,
                                        plateau_levels=cfg.plateau_levels, plateau_tolerance=cfg.plateau_tolerance,
                                        workers=config.WORKERS, cache=self.cache)
            frame = pd.DataFrame(values, columns=list(columns))
            artifacts.append(write_csv(frame, self.path("moments", f"observations_{kind}.csv"),
                                       {"truth": obs_cfg.truth, "seed": seeds[kind]}))
        self.finish("moments", artifacts, seeds)
        return artifacts

    def dataset(self, n: Optional[int] = None) -> List[Path]:
        sim = self.experiment.simulation
        seed = self.seed("dataset")
        with timed("dataset generation", n=n or sim.dataset_size):
            ds = generate_dataset(self.experiment.box.to_dict(), n or sim.dataset_size, sim.duration, sim.histories,
                                  seed, self.nuclear, sim.min_detections, sim.long_window,
                                  workers=config.WORKERS, cache=self.cache)
        train, test = train_test_split_dataset(ds, sim.test_fraction, seed=self.seed("split"))
        artifacts = [
            write_csv(ds.to_frame(), self.path("dataset", "dataset.csv")),
            write_csv(train.to_frame(), self.path("dataset", "train.csv")),
            write_csv(test.to_frame(), self.path("dataset", "test.csv")),
        ]
        self.finish("dataset", artifacts, {"dataset": seed})
        return artifacts

    def _dataset(self, name: str) -> TrainingDataset:
        frame, _ = read_csv(self._require(self.path("dataset", name), "dataset"))
        return TrainingDataset.from_frame(frame, self.experiment.box)

    def train(self, kind: str = "all") -> List[Path]:
        kinds = list(SURROGATE_KINDS) if kind == "all" else [kind]
        train = self._dataset("train.csv")
        artifacts = []
        for name in kinds:
            log_stage("train", kind=name)
            gp = train_surrogate_kind(train, name, self.experiment.surrogate, self.nuclear, workers=config.WORKERS)
            path = save_surrogate(gp, self.path("train", f"{name}.json"))
            artifacts.extend([path, path.with_suffix(".data.csv")])
        self.finish("train", artifacts, {"surrogate": self.experiment.surrogate.seed})
        return artifacts

    def _surrogate(self, kind: str):
        return load_surrogate(self._require(self.path("train", f"{kind}.json"), "train"))

    def validate(self) -> List[Path]:
        test = self._dataset("test.csv")
        artifacts = []
        for kind, (inputs, outputs, _) in SURROGATE_KINDS.items():
            if not self.path("train", f"{kind}.json").exists():
                continue
            report = validate_surrogate(self._surrogate(kind), test.select(inputs, outputs))
            artifacts.append(write_json(report.to_dict(), self.path("validate", f"{kind}_report.json")))
            artifacts.append(write_csv(report.metrics.reset_index(), self.path("validate", f"{kind}_metrics.csv")))
            artifacts.append(write_csv(report.coverage, self.path("validate", f"{kind}_coverage.csv")))
        if not artifacts:
            raise FissidError("No trained surrogate to validate; run 'train' first")
        self.finish("validate", artifacts, {})
        return artifacts

    def _observations(self, kind: str) -> ObservationSet:
        frame, _ = read_csv(self._require(self.path("moments", f"observations_{kind}.csv"), "moments"))
        return ObservationSet(frame.to_numpy(dtype=float), kind)

    def invert(self, mode: str, surrogate: str = "initial") -> List[Path]:
        box = self.experiment.box
        mcmc = self.experiment.mcmc
        seed = self.seed("invert", mode)
        label = mode if surrogate == "initial" else f"{mode}_{surrogate}"
        artifacts = []
        if mode == "neutron":
            samples = neutron_pipeline(self._observations("neutron"), self._surrogate("NSM"), box, seed, mcmc)
        elif mode == "sequential":
            joint = self._observations("joint")
            y_g = joint.subset(range(3, 6), "gamma")
            samples = sequential_pipeline(self._observations("neutron"), y_g, self._surrogate("NSM"),
                                          self._surrogate("GSM"), box, seed, mcmc,
                                          order=self.experiment.observations.order,
                                          kde_mode=self.experiment.observations.kde_mode)
            artifacts.append(write_posterior(samples.parent, self.path("invert", "posterior_sequential_stage1.csv")))
        else:
            if surrogate == "updated":
                gp = load_surrogate(self._require(self.path("csq", "JSM_updated.json"), "csq"))
            else:
                gp = self._surrogate("JSM")
            samples = joint_pipeline(self._observations("joint"), gp, PriorSpec.uniform(box), seed, mcmc)
        artifacts.append(write_posterior(samples, self.path("invert", f"posterior_{label}.csv")))
        self.finish(f"invert-{label}", artifacts, {label: seed})
        return artifacts

    def sobol(self) -> List[Path]:
        gp = self._surrogate("JSM")
        seed = self.seed("sobol")
        weights = sobol_weights(gp.predict_mean, self.experiment.box, self._observations("joint"),
                                self.experiment.csq.sobol_samples, seed)
        path = write_json({"weights": dict(zip(self.experiment.box.names, weights))},
                          self.path("sobol", "weights.json"))
        self.finish("sobol", [path], {"sobol": seed})
        return [path]

    def csq(self, n_new: int) -> List[Path]:
        gp = self._surrogate("JSM")
        test = self._dataset("test.csv").select(config.JOINT_INPUTS, config.JOINT_OUTPUTS)
        seed = self.seed("csq")
        audit_path = self.path("csq", "audit.jsonl")
        old = validate_surrogate(gp, test)
        updated, audit = csq_loop(gp, self._observations("joint"), PriorSpec.uniform(self.experiment.box), n_new,
                                  seed, self.nuclear, self.experiment.simulation.duration, self.experiment.csq,
                                  self.experiment.mcmc, self.experiment.simulation.long_window, test.inputs,
                                  audit_path, config.WORKERS)
        new = validate_surrogate(updated, test)
        path = save_surrogate(updated, self.path("csq", "JSM_updated.json"))
        added = len(updated.dataset) - len(gp.dataset)
        summary = write_json({
            "points_added": added,
            "aborted_stage": audit.aborted,
            "mcd_old": old.mcd,
            "mcd_new": new.mcd,
            "mcd_ratio": ValidationReport.compare(old, new),
            "metrics_old": old.to_dict()["metrics"],
            "metrics_new": new.to_dict()["metrics"],
        }, self.path("csq", "summary.json"))
        artifacts = [path, path.with_suffix(".data.csv"), summary]
        if audit_path.exists():
            artifacts.append(audit_path)
        self.finish("csq", artifacts, {"csq": seed})
        if audit.aborted:
            raise FissidError(f"CSQ loop aborted at stage {audit.aborted}", {"added": added})
        return artifacts

    def report(self) -> List[Path]:
        artifacts = []
        posteriors = {}
        for mode in (*INVERT_MODES, "joint_updated"):
            path = self.path("invert", f"posterior_{mode}.csv")
            if path.exists():
                posteriors[mode] = read_posterior(path)
        if not posteriors:
            raise FissidError("No posterior to report; run 'invert' first")
        for mode, samples in posteriors.items():
            grid = marginal_grid(samples, ("k_p", "s_intensity"), box=self.experiment.box)
            artifacts.append(write_csv(grid, self.path("report", f"marginal_k_p_s_{mode}.csv")))
            artifacts.append(write_csv(samples.summary().reset_index(names="input"),
                                       self.path("report", f"summary_{mode}.csv")))
        ratios = {}
        if "neutron" in posteriors:
            for mode in ("sequential", "joint"):
                if mode in posteriors:
                    ratios[f"{mode}_over_neutron"] = posterior_std_ratio(posteriors[mode], posteriors["neutron"])
        csq_summary = self.path("csq", "summary.json")
        payload = {"k_p_std_ratios": ratios}
        if "joint" in posteriors and "joint_updated" in posteriors:
            payload["csq_std_ratios"] = {
                name: posterior_std_ratio(posteriors["joint_updated"], posteriors["joint"], name)
                for name in posteriors["joint"].names
            }
        if csq_summary.exists():
            payload["mcd_ratio"] = read_json(csq_summary)["mcd_ratio"]
        artifacts.append(write_json(payload, self.path("report", "report.json")))
        self.finish("report", artifacts, {})
        return artifacts


def run_subcommand(argv: Sequence[str]) -> int:
    """
    Parse arguments and run one subcommand

    Returns:
        0 on success, 1 on usage or configuration errors, 2 on pipeline failure
    """
    try:
        args = build_parser().parse_args(list(argv))
    except UsageError as e:
        sys.stderr.write(f"{e}\n")
        return EXIT_USAGE
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    if args.command == "invert" and args.surrogate == "updated" and args.mode != "joint":
        sys.stderr.write("--surrogate updated requires --mode joint\n")
        return EXIT_USAGE

    setup_logging(args.log_level)
    try:
        experiment = load_config(args.config)
    except ConfigError as e:
        log_error(e)
        return EXIT_USAGE
    if args.output_dir is not None:
        experiment = replace(experiment, output_dir=args.output_dir)

    log_stage(args.command, seed=experiment.seed, output=experiment.output_dir)
    try:
        pipeline = Pipeline(experiment)
        with timed(args.command):
            if args.command == "simulate":
                artifacts = pipeline.simulate(args.duration)
            elif args.command == "dataset":
                artifacts = pipeline.dataset(args.n)
            elif args.command == "train":
                artifacts = pipeline.train(args.kind)
            elif args.command == "invert":
                artifacts = pipeline.invert(args.mode, args.surrogate)
            elif args.command == "csq":
                artifacts = pipeline.csq(args.n_new)
            else:
                artifacts = getattr(pipeline, args.command)()
    except FissidError as e:
        log_error(e, {"stage": args.command})
        sys.stderr.write(f"Stage {args.command} failed: {e}\n")
        return EXIT_FAILURE
    log_stage(f"{args.command} finished", artifacts=len(artifacts))
    return EXIT_OK


def main():
    sys.exit(run_subcommand(sys.argv[1:]))


if __name__ == "__main__":
    main()
