#!/usr/bin/env python3
"""
DART2 Multiple Testing Toolkit - Main Entry Point
=================================================

Command-line entry point. Subcommands:

    tree      build an aggregation tree from distances or an ordering
    test      run DART2 (and optionally BH) on statistics or p-values
    simulate  run the seeded simulation study
    config    show or write the effective configuration

Exit codes: 0 success, 2 input-domain error, 3 internal invariant
violation, 1 anything else.

Author: DART2 Toolkit
Date: 2026-10-17
Version: 1.0.0
"""

import argparse
import json
import logging
import os
import sys
import time
from typing import List, Optional

import pandas as pd

from aggregation_tree import (
    build_tree_from_distances,
    build_tree_from_ordering,
    max_layers,
    published_thresholds,
    validate_tree,
)
from baselines import bh_procedure, bh_procedure_z
from config import Config
from core import Dart2Config, InputDomainError, InvariantViolation, pvalue_to_z
from file_handler import FileHandler, RunManifest, __version__
from logger_config import LogContext, setup_logging
from metrics import precision_f1, summarize_table
from refining import dart2
from simulation import (
    ProcedureSpec,
    SimScenario,
    calibrated_locations,
    default_field,
    run_replications,
    simulation_tree,
)


EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_INVARIANT = 3


def _float_list(text: str, name: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise InputDomainError(f"--{name}: expected a comma-separated list of numbers, got {text!r}") from e


def _int_list(text: str, name: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise InputDomainError(f"--{name}: expected a comma-separated list of integers, got {text!r}") from e


def _pick(value, config, key):
    """CLI value if given, otherwise the configured one."""
    return config[key] if value is None else value


def _finish(manifest: RunManifest, file_handler: FileHandler, output_dir: str, start: float) -> str:
    manifest.elapsed_seconds = round(time.time() - start, 3)
    return file_handler.write_manifest(manifest, os.path.join(output_dir, "manifest.json"))


def cmd_tree(args, config) -> int:
    """Build, validate and write an aggregation tree."""
    logger = logging.getLogger(__name__)
    start = time.time()
    file_handler = FileHandler()
    max_children = _pick(args.max_children, config, "max_children")
    if args.ordering and args.thresholds:
        raise InputDomainError("--thresholds applies only to trees built with --distances")

    if args.distances:
        d = file_handler.read_distances(args.distances)
        m = d.shape[0]
        inputs = {"distances": args.distances}
    else:
        ranks = file_handler.read_ordering(args.ordering)
        m = ranks.size
        inputs = {"ordering": args.ordering}

    num_layers = args.layers if args.layers is not None else max_layers(m, max_children, _pick(args.cm, config, "cm"))
    logger.info(f"Building a {num_layers}-layer tree over {m} hypotheses (M={max_children})")

    if args.distances:
        if args.thresholds == "published":
            thresholds = published_thresholds(num_layers)
        elif args.thresholds:
            thresholds = _float_list(args.thresholds, "thresholds")
        else:
            thresholds = None
        tree = build_tree_from_distances(d, max_children, num_layers, thresholds)
    else:
        tree = build_tree_from_ordering(ranks, max_children, num_layers)

    violations = validate_tree(tree)
    if violations:
        for v in violations:
            print(f"  {v}", file=sys.stderr)
        raise InvariantViolation(f"constructed tree has {len(violations)} violations")

    output_dir = os.path.dirname(os.path.abspath(args.output))
    file_handler.write_tree(tree, args.output)
    manifest = RunManifest(
        command="tree",
        inputs=inputs,
        config={"max_children": max_children, "layers": num_layers, "thresholds": args.thresholds},
        outputs={"tree": args.output},
        started=file_handler.timestamp(),
    )
    _finish(manifest, file_handler, output_dir, start)

    print(f"Tree: m={tree.m}, L={tree.num_layers}, nodes per layer "
          f"{[len(tree.layer(k)) for k in range(1, tree.num_layers + 1)]}")
    print(f"Saved to: {args.output}")
    return EXIT_OK


def cmd_test(args, config) -> int:
    """Run DART2 on one data set and write the rejection report."""
    start = time.time()
    file_handler = FileHandler()
    cfg = Dart2Config(
        alpha=_pick(args.alpha, config, "alpha"),
        mode=_pick(args.mode, config, "mode"),
        layer_alpha_rule=_pick(args.layer_alpha_rule, config, "layer_alpha_rule"),
    )

    p = None
    if args.stats:
        T = file_handler.read_statistics(args.stats)
        inputs = {"stats": args.stats}
    else:
        p = file_handler.read_pvalues(args.pvalues)
        T = pvalue_to_z(p)
        inputs = {"pvalues": args.pvalues}
    tree = file_handler.read_tree(args.tree)
    inputs["tree"] = args.tree

    with LogContext(f"DART2 ({cfg.mode}) at alpha={cfg.alpha}", logging.getLogger(__name__)):
        report = dart2(T, tree, cfg)

    output_dir = args.output_dir or config["output_directory"]
    outputs = {
        "rejections": file_handler.write_frame(report.to_frame(), os.path.join(output_dir, "rejections.csv")),
        "layers": file_handler.write_frame(report.layers_frame(), os.path.join(output_dir, "layers.csv")),
    }
    results = {"dart2": report.rejected}

    if args.baseline == "bh":
        bh = bh_procedure(p, cfg.alpha) if p is not None else bh_procedure_z(T, cfg.alpha)
        outputs["bh_rejections"] = file_handler.write_id_list(bh, os.path.join(output_dir, "bh_rejections.csv"))
        results["bh"] = bh

    if args.benchmark:
        benchmark = file_handler.read_benchmark(args.benchmark, m=T.m)
        inputs["benchmark"] = args.benchmark
        rows = []
        for name, rejected in results.items():
            precision, recall, f1 = precision_f1(rejected, benchmark)
            rows.append({"procedure": name, "rejections": len(rejected),
                         "precision": precision, "sensitivity": recall, "f1": f1})
        outputs["benchmark"] = file_handler.write_frame(
            pd.DataFrame(rows), os.path.join(output_dir, "benchmark.csv")
        )

    manifest = RunManifest(
        command="test",
        inputs=inputs,
        config={"alpha": cfg.alpha, "mode": cfg.mode, "layer_alpha_rule": cfg.layer_alpha_rule,
                "baseline": args.baseline},
        outputs=outputs,
        started=file_handler.timestamp(),
    )
    _finish(manifest, file_handler, output_dir, start)

    print(f"DART2 ({cfg.mode}, alpha={cfg.alpha}): {len(report.rejected)} of {T.m} hypotheses rejected")
    if "bh" in results:
        print(f"BH (alpha={cfg.alpha}): {len(results['bh'])} rejected")
    print(f"Results saved to: {output_dir}")
    return EXIT_OK


def cmd_simulate(args, config) -> int:
    """Run the simulation grid and write results, summary and manifest."""
    logger = logging.getLogger(__name__)
    start = time.time()
    file_handler = FileHandler()

    taus = _float_list(args.tau, "tau")
    alphas = tuple(_float_list(args.alpha, "alpha")) if args.alpha else (config["alpha"],)
    layers = _int_list(args.layers, "layers")
    modes = [m.strip() for m in (args.mode or config["mode"]).split(",") if m.strip()]
    reps = _pick(args.reps, config, "reps")
    seed = _pick(args.seed, config, "seed")
    n = _pick(args.sample_size, config, "sample_size")
    threads = max(1, _pick(args.threads, config, "threads"))
    coeffs = _pick(args.coeffs, config, "coeffs")
    rule = _pick(args.layer_alpha_rule, config, "layer_alpha_rule")
    max_children = _pick(args.max_children, config, "max_children")

    procedures = [ProcedureSpec("dart2", L, mode, rule) for L in layers for mode in modes]
    if not args.no_bh:
        procedures.append(ProcedureSpec("bh"))

    inputs = {}
    if args.locations:
        inputs["locations"] = args.locations
        field = default_field(coeffs, file_handler.read_locations(args.locations))
        location_seed = None
    else:
        field = default_field(coeffs)
        _, location_seed = calibrated_locations()
    # validate the whole grid before the expensive part
    scenarios = [SimScenario(field, tau, args.setting, n, alphas, reps, seed) for tau in taus]
    if not scenarios:
        raise InputDomainError("--tau: at least one value is required")

    tree = simulation_tree(field, max(layers), max_children) if layers else None
    output_dir = args.output_dir or config["output_directory"]
    outputs = {}
    if args.save_locations:
        outputs["locations"] = file_handler.write_locations(field.locations, args.save_locations)

    frames = []
    for scenario in scenarios:
        with LogContext(f"Simulation block tau={scenario.tau}", logger):
            frames.append(run_replications(scenario, procedures, tree=tree, threads=threads))

    results = pd.concat(frames, ignore_index=True)
    outputs["results"] = file_handler.write_frame(results, os.path.join(output_dir, "results.csv"))
    outputs["summary"] = file_handler.write_frame(summarize_table(results), os.path.join(output_dir, "summary.csv"))

    manifest = RunManifest(
        command="simulate",
        inputs=inputs,
        config={
            "setting": args.setting, "tau": taus, "alpha": list(alphas), "layers": layers,
            "mode": modes, "reps": reps, "sample_size": n, "coeffs": coeffs,
            "layer_alpha_rule": rule, "max_children": max_children, "threads": threads,
            "bh": not args.no_bh, "location_seed": location_seed,
            "alternatives": int(field.alternatives.size),
        },
        seed=seed,
        outputs=outputs,
        started=file_handler.timestamp(),
    )
    _finish(manifest, file_handler, output_dir, start)

    print(f"Simulation complete: {len(results)} rows over {len(taus)} tau values")
    print(f"Results saved to: {output_dir}")
    return EXIT_OK


def cmd_config(args, config) -> int:
    """Print the effective configuration, optionally writing it to disk."""
    print(json.dumps(config, indent=4, sort_keys=True))
    if args.write:
        path = Config.save(config, None if args.write is True else args.write)
        print(f"Configuration written to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subparser per command."""
    parser = argparse.ArgumentParser(
        description="DART2 - FDR control with distance-assisted aggregation trees",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Build a tree from an ordering, auto-selecting L with c_m = 5
  python main.py tree --ordering ranks.csv --max-children 2 --cm 5 -o tree.json

  # Test z statistics against the tree
  python main.py test --stats stats.csv --tree tree.json --alpha 0.05 --baseline bh

  # Simulation grid
  python main.py simulate --setting se1 --tau 0,0.2,0.4,0.6,0.8,1 --alpha 0.01,0.05 --reps 200
        """
    )
    parser.add_argument('--config', help='Configuration file (default: DART2_CONFIG or dart2_config.json)')
    parser.add_argument(
        '--log-level',
        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
        default='INFO',
        help='Set logging level (default: INFO)'
    )
    parser.add_argument('--log-dir', help='Directory for log files (default from config)')

    sub = parser.add_subparsers(dest="command", required=True)

    tree = sub.add_parser("tree", help="Build an aggregation tree")
    source = tree.add_mutually_exclusive_group(required=True)
    source.add_argument('--distances', help='Distance matrix CSV')
    source.add_argument('--ordering', help='Ordering CSV (hypothesis_id, rank)')
    tree.add_argument('--max-children', type=int, help='M, the maximum number of children per node')
    tree.add_argument('--layers', type=int, help='Number of layers L')
    tree.add_argument('--cm', type=int, help='Preferred top-layer size used to choose L automatically')
    tree.add_argument('--thresholds',
                      help="g2,g3,... distance thresholds, or 'published' for the built-in set (--distances only)")
    tree.add_argument('-o', '--output', default='tree.json', help='Tree file to write')
    tree.set_defaults(handler=cmd_tree)

    test = sub.add_parser("test", help="Run DART2 on statistics or p-values")
    data = test.add_mutually_exclusive_group(required=True)
    data.add_argument('--stats', help='z statistics CSV (hypothesis_id, value)')
    data.add_argument('--pvalues', help='P-value CSV (hypothesis_id, value)')
    test.add_argument('--tree', required=True, help='Tree file')
    test.add_argument('--alpha', type=float, help='Target FDR level in (0, 1)')
    test.add_argument('--mode', choices=['naive', 'robust'], help='Refining mode')
    test.add_argument('--layer-alpha-rule', choices=['scaled', 'constant'])
    test.add_argument('--baseline', choices=['bh'], help='Also run a baseline procedure')
    test.add_argument('--benchmark', help='CSV of benchmark hypothesis ids for precision / F1')
    test.add_argument('--output-dir', help='Output directory (default from config)')
    test.set_defaults(handler=cmd_test)

    sim = sub.add_parser("simulate", help="Run the simulation study")
    sim.add_argument('--setting', choices=['se1', 'se2'], default='se1')
    sim.add_argument('--tau', default='0', help='Comma-separated misleading levels in [0, 1]')
    sim.add_argument('--alpha', help='Comma-separated FDR levels')
    sim.add_argument('--layers', default='7', help='Comma-separated DART2 depths')
    sim.add_argument('--mode', help="Comma-separated refining modes, e.g. 'naive,robust'")
    sim.add_argument('--layer-alpha-rule', choices=['scaled', 'constant'])
    sim.add_argument('--reps', type=int)
    sim.add_argument('--seed', type=int)
    sim.add_argument('--sample-size', type=int, help='Observations per hypothesis (n)')
    sim.add_argument('--coeffs', choices=['main', 'appendix'])
    sim.add_argument('--max-children', type=int)
    sim.add_argument('--threads', type=int, help='Worker threads for repetitions')
    sim.add_argument('--no-bh', action='store_true', help='Skip the BH comparison arm')
    sim.add_argument('--locations', help='Locations CSV (hypothesis_id, x, y) to use instead of the calibrated set')
    sim.add_argument('--save-locations', help='Also write the calibrated locations to this CSV')
    sim.add_argument('--output-dir', help='Output directory (default from config)')
    sim.set_defaults(handler=cmd_simulate)

    cfg = sub.add_parser("config", help="Show or write the effective configuration")
    cfg.add_argument('--write', nargs='?', const=True, help='Write the configuration (optionally to a path)')
    cfg.set_defaults(handler=cmd_config)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main entry point for the application.

    Parses command-line arguments, sets up logging and maps failures to exit
    codes.
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    config = Config.load(args.config)
    log_level = getattr(logging, args.log_level)
    setup_logging(log_level, args.log_dir or config["log_directory"], run_name=f"dart2_{args.command}")
    logger = logging.getLogger(__name__)
    logger.info(f"Starting DART2 toolkit {__version__}: {args.command}")
    logger.debug(f"Command line args: {args}")

    try:
        return args.handler(args, config)
    except (InputDomainError, FileNotFoundError) as e:
        logger.error(f"Input error: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantViolation as e:
        logger.critical(f"Invariant violation: {e}", exc_info=True)
        print(f"Internal invariant violated: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        print("\nInterrupted by user")
        return EXIT_FAILURE
    except Exception as e:
        logger.critical(f"Fatal error: {str(e)}", exc_info=True)
        print(f"Fatal error: {str(e)}", file=sys.stderr)
        return EXIT_FAILURE
    finally:
        logger.info("Application shutdown complete")


if __name__ == "__main__":
    sys.exit(main())
