import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

# Import logging configuration before anything else
from logging_config import (
    configure_root_logger,
    log_exception,
    log_system_info,
    PerformanceLogger,
)

import config
from downloader import downloader
from errors import ValidationError, WmprcError
from estimator.clustering import Method, chain_trace, first_divergence, generate_candidates
from estimator.crossval import Criterion
from estimator.indices import agreement_matrix, classify_strength, minr, rank_correlation
from estimator.model_core import (
    ClusterAssignment,
    RobotRoster,
    design_row,
    predict_outcome,
    predict_prob,
    predict_score,
)
from estimator.selection import select, select_all
from ingestor import ingest
from reporting import (
    file_digest,
    load_model_json,
    model_document,
    model_from_document,
    provenance,
    write_model_json,
    write_table,
)
from simulator import simulator

logger = logging.getLogger(__name__)

# Exit status per error code; anything unexpected exits with 1
EXIT_CODES: Dict[str, int] = {
    "validation_error": 2,
    "ingestion_error": 2,
    "config_error": 2,
    "selection_error": 3,
    "transport_error": 4,
    "credential_error": 4,
    "schema_error": 4,
}


def _emit(payload: Dict[str, Any]) -> None:
    sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False, default=str) + "\n")


def _split(values: Optional[Sequence[str]]) -> List[str]:
    """Flatten repeated and comma-separated flag values."""
    result: List[str] = []
    for value in values or ():
        result.extend(part.strip() for part in value.split(",") if part.strip())
    return result


# --------------------------------------------------------------------------- #
#  Subcommands
# --------------------------------------------------------------------------- #
def _cmd_fit(args: argparse.Namespace) -> Dict[str, Any]:
    dataset = ingest.read_matches_csv(Path(args.input), _split(args.exclude))
    design = dataset.design()
    digest = file_digest(Path(args.input))
    stamp = provenance(digest, args.seed)
    method = Method(args.method)

    with PerformanceLogger(logger, f"{method.name} candidate chain (K={design.k}, M={design.m})"):
        chain = generate_candidates(design, method)
    selection = select(chain, args.criterion)
    selections = select_all(chain)

    out_dir = config.ensure_dir(Path(args.out_dir))
    stem = f"{dataset.event_key}_{method.value}"
    model_path = write_model_json(
        model_document(
            selection.model,
            dataset.robot_roster(),
            event_key=dataset.event_key,
            method=method.value,
            criterion=str(selection.criterion),
            table=chain.rows,
            input_digest=digest,
            seed=args.seed,
        ),
        out_dir / f"{stem}_{selection.criterion.value}.json",
    )

    curve_fields = ["c", "mspe_y_hat", "mspe_p_hat", "mspe_d_hat", "pcp_hat",
                    "mspeb_y_hat", "mspeb_p_hat", "mspeb_d_hat", "feasible"]
    curve_path = write_table(
        out_dir / f"{stem}_criteria.csv",
        curve_fields,
        [[getattr(row, name) for name in curve_fields] for row in chain.rows],
        stamp,
    )

    agreement = agreement_matrix({str(c): result.model for c, result in selections.items()})
    agreement_path = write_table(
        out_dir / f"{stem}_agreement.csv",
        ["criterion_a", "criterion_b", "c_a", "c_b", "minr", "minr_label", "rc", "rc_label"],
        [[a, b, v["c_a"], v["c_b"], v["minr"], v["minr_label"], v["rc"], v["rc_label"]]
         for (a, b), v in agreement.items()],
        stamp,
    )

    report: Dict[str, Any] = {
        "event_key": dataset.event_key,
        "method": method.value,
        "criterion": selection.criterion.value,
        "k": design.k,
        "m": design.m,
        "selected_c": selection.c,
        "sizes": selection.model.sizes.tolist(),
        "theta": [float(v) for v in selection.model.theta],
        "selected_by_criterion": {str(c): result.c for c, result in selections.items()},
        "files": {"model": str(model_path), "criteria": str(curve_path), "agreement": str(agreement_path)},
    }

    if args.reference:
        try:
            with Path(args.reference).open("r", encoding="utf-8") as handle:
                reference = {int(c): g for c, g in json.load(handle).items()}
        except (OSError, ValueError, AttributeError) as exc:
            raise ValidationError(f"cannot read reference partitions from {args.reference}: {exc}") from exc
        divergence = first_divergence(chain, reference)
        report["trace"] = chain_trace(chain)
        report["divergence"] = None if divergence is None else {
            "c": divergence.c,
            "robots": [dataset.roster[i] for i in divergence.robots],
        }
    return report


def _cmd_predict(args: argparse.Namespace) -> Dict[str, Any]:
    document = load_model_json(Path(args.model))
    model = model_from_document(document)
    roster = RobotRoster(tuple(document.roster))
    row = design_row(roster, _split([args.red]), _split([args.blue]))
    return {
        "red": _split([args.red]),
        "blue": _split([args.blue]),
        "y_hat": predict_score(model, row),
        "p_hat": predict_prob(model, row),
        "d_hat": predict_outcome(model, row),
    }


def _cmd_indices(args: argparse.Namespace) -> Dict[str, Any]:
    doc_a, doc_b = (load_model_json(Path(path)) for path in args.models)
    if doc_a.roster != doc_b.roster:
        raise ValidationError("the two models were fitted on different rosters")
    model_a, model_b = model_from_document(doc_a), model_from_document(doc_b)
    m, r = minr(model_a, model_b), rank_correlation(model_a, model_b)
    return {
        "c_a": model_a.c,
        "c_b": model_b.c,
        "minr": m,
        "minr_label": classify_strength(m),
        "rc": r,
        "rc_label": classify_strength(r),
    }


def _cmd_simulate(args: argparse.Namespace) -> Dict[str, Any]:
    config_path = Path(args.config)
    if not config_path.exists() and not config_path.is_absolute():
        # bare experiment names resolve under config/experiments/
        config_path = (config.EXPERIMENTS_DIR / config_path).with_suffix(".yaml")
    experiment = simulator.load_experiment_config(config_path)
    seed = args.seed if args.seed is not None else experiment.master_seed
    reps = args.reps or experiment.reps
    threads = args.threads or experiment.threads or config.DEFAULT_THREADS
    scenario = simulator.SCENARIOS[experiment.scenario]

    schedule = args.input or experiment.schedule
    exclusions = _split(args.exclude) or experiment.exclusions
    if schedule:
        schedule_path = Path(schedule)
        if not schedule_path.is_absolute() and not schedule_path.exists():
            schedule_path = config_path.parent / schedule_path
        design = ingest.read_matches_csv(schedule_path, exclusions).design()
        schedule_source = str(schedule_path.name)
        schedule_digest = file_digest(schedule_path)
    else:
        design = simulator.synthetic_schedule(
            sum(scenario.sizes), experiment.synthetic_matches, experiment.synthetic_seed
        )
        schedule_source = "synthetic"
        schedule_digest = None

    assignment = None
    if experiment.truth_model:
        truth_path = Path(experiment.truth_model)
        if not truth_path.is_absolute() and not truth_path.exists():
            truth_path = config_path.parent / truth_path
        document = load_model_json(truth_path)
        if tuple(document.roster) != design.roster.robots:
            raise ValidationError(f"{truth_path.name} was fitted on a different roster than the schedule")
        assignment = ClusterAssignment.from_g(document.g)

    truth = simulator.make_scenario(experiment.scenario, experiment.sigma_multiplier, design, assignment)
    logger.info(f"Schedule: {schedule_source} (K={design.k}, M={design.m})")

    summary = simulator.run_experiment(
        truth,
        design,
        reps,
        experiment.methods,
        seed,
        experiment.criteria,
        threads=threads,
        metadata={
            "schedule_source": schedule_source,
            "sigma_multiplier": experiment.sigma_multiplier,
            "division": scenario.division,
            "schedule_digest": schedule_digest,
        },
    )
    paths = simulator.write_summary(summary, Path(args.out_dir), config_path.stem, provenance(file_digest(config_path), seed))
    return {
        "scenario": str(experiment.scenario),
        "sigma": truth.sigma,
        "reps": summary.reps,
        "master_seed": seed,
        "rows": [
            {"method": row.method, "criterion": row.criterion, "c_mean": row.c_mean, "minr": row.minr, "rc": row.rc}
            for row in summary.rows
        ],
        "files": {name: str(path) for name, path in paths.items()},
    }


def _cmd_import(args: argparse.Namespace) -> Dict[str, Any]:
    source = Path(args.input)
    dataset = ingest.import_replication_csv(source, _split(args.exclude), event_key=args.event)
    out_dir = config.ensure_dir(Path(args.out_dir))
    path = ingest.write_matches_csv(dataset, out_dir / f"{dataset.event_key}.csv")
    return {"event_key": dataset.event_key, "matches": len(dataset.matches), "robots": len(dataset.roster), "file": str(path)}


def _cmd_fetch(args: argparse.Namespace) -> Dict[str, Any]:
    dataset = downloader.fetch_event_matches(args.event, _split(args.exclude))
    out_dir = config.ensure_dir(Path(args.out_dir))
    path = ingest.write_matches_csv(dataset, out_dir / f"{dataset.event_key}.csv")
    return {**downloader.describe(dataset), "file": str(path)}


COMMANDS: Dict[str, Callable[[argparse.Namespace], Dict[str, Any]]] = {
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "indices": _cmd_indices,
    "simulate": _cmd_simulate,
    "import": _cmd_import,
    "fetch": _cmd_fetch,
}


# --------------------------------------------------------------------------- #
#  Argument parsing
# --------------------------------------------------------------------------- #
def _build_parser() -> argparse.ArgumentParser:
    """
    Build the command-line parser.

    Returns
    -------
    argparse.ArgumentParser
        Parser with one sub-parser per subcommand.
    """
    parser = argparse.ArgumentParser(
        prog="wmprc",
        description="Estimate clustered robot strengths from three-on-three match results.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=str(config.OUTPUT_DIR), help="Directory for emitted files")
    common.add_argument("--exclude", action="append", help="Match ids to drop, comma-separated (repeatable)")
    common.add_argument("--verbose", action="store_true", help="Log INFO records to the console")

    fit = sub.add_parser("fit", parents=[common], help="Select a clustered model for one event")
    fit.add_argument("--input", required=True, help="Canonical match CSV")
    fit.add_argument("--method", choices=[m.value for m in Method], default=Method.TCL.value)
    fit.add_argument("--criterion", choices=[c.value for c in Criterion], default=Criterion.MSPEB_D.value)
    fit.add_argument("--seed", type=int, default=0, help="Recorded in emitted files")
    fit.add_argument("--reference", help="JSON mapping c to a reference cluster vector; reports the first divergence")

    predict = sub.add_parser("predict", parents=[common], help="Predict a hypothetical match")
    predict.add_argument("--model", required=True, help="Model JSON written by 'fit'")
    predict.add_argument("--red", required=True, help="Three red robots, comma-separated")
    predict.add_argument("--blue", required=True, help="Three blue robots, comma-separated")

    indices = sub.add_parser("indices", parents=[common], help="MINR and rank correlation of two models")
    indices.add_argument("models", nargs=2, help="Two model JSON files")

    simulate = sub.add_parser("simulate", parents=[common], help="Run a simulation experiment")
    simulate.add_argument("--config", required=True, help="Experiment YAML, or a name under config/experiments/")
    simulate.add_argument("--input", help="Match CSV used as the schedule (overrides the config)")
    simulate.add_argument("--reps", type=int, help="Replications (overrides the config)")
    simulate.add_argument("--seed", type=int, help="Master seed (overrides the config)")
    simulate.add_argument("--threads", type=int, help="Worker processes; results do not depend on it")

    importer = sub.add_parser("import", parents=[common], help="Convert a replication-file layout to canonical CSV")
    importer.add_argument("--input", required=True, help="Source CSV")
    importer.add_argument("--event", help="Event key (defaults to the file stem)")

    fetch = sub.add_parser("fetch", parents=[common], help="Download an event's qualification matches")
    fetch.add_argument("--event", required=True, help="Event key, e.g. 2019carv")
    return parser


# --------------------------------------------------------------------------- #
#  Entry point
# --------------------------------------------------------------------------- #
def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one subcommand and map exceptions to exit codes.

    Returns
    -------
    int
        0 on success, nonzero on failure (an error JSON is printed to stdout).
    """
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    configure_root_logger(console_level=logging.INFO if args.verbose else logging.WARNING, file_level=logging.DEBUG)
    logger.info("=" * 80)
    logger.info(f"wmprc {args.command} starting")
    logger.info("=" * 80)
    log_system_info(logger)

    try:
        with PerformanceLogger(logger, f"'{args.command}' command"):
            payload = COMMANDS[args.command](args)
        _emit(payload)
        logger.info("=" * 80)
        logger.info(f"wmprc {args.command} finished")
        logger.info("=" * 80)
        return 0

    except KeyboardInterrupt:
        logger.info("Received keyboard interrupt (Ctrl+C) - stopping")
        _emit({"error": {"code": "interrupted", "type": "KeyboardInterrupt", "message": "interrupted by user"}})
        return 130

    except WmprcError as exc:
        log_exception(logger, exc, f"'{args.command}' command")
        _emit(exc.to_dict())
        return EXIT_CODES.get(exc.code, 1)

    except Exception as exc:
        log_exception(logger, exc, f"'{args.command}' command")
        logger.critical("=" * 80)
        logger.critical(f"wmprc {args.command} failed unexpectedly")
        logger.critical("=" * 80)
        _emit({"error": {"code": "internal_error", "type": type(exc).__name__, "message": str(exc)}})
        return 1


if __name__ == "__main__":
    sys.exit(run_cli())
