"""
Command-line entry point.

    multiwalk validate --config run.yaml --out out/
    multiwalk rank --config run.yaml --seeds seeds.txt --out out/ --subnetwork 20
    multiwalk loocv --config run.yaml --source gene --target disease --out out/
    multiwalk explore --config run.yaml --grid grid.yaml --k 8 --out out/
    multiwalk synth --kind planted --out demo/

Exit codes: 0 success, 1 configuration or input error, 2 seed or restart
error, 3 non-convergence (results are still written).
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path

import config
from context import RunContext, reset_context, set_context
from edge_list import read_seed_file
from eval_protocols import (
    EvalTask,
    augment_transit,
    cdf_area,
    median_rank,
    randomize_bipartite,
    run_protocol,
    write_cdf,
    write_cdf_plot,
)
from exceptions import (
    ConfigError,
    ConvergenceError,
    EdgeListError,
    EvaluationError,
    ExplorationError,
    NetworkValidationError,
    RestartError,
    SeedError,
)
from logger import bind, move_log_file, set_stderr_level
from param_explorer import load_grid, run_exploration
from run_config import RunConfig, load_run_config, write_network
from rwr_engine import SeedSet, build_restart, extract_subnetwork, rank, solve, write_ranking, write_subnetwork
from supra_builder import normalize
from synth import SynthSpec, write_synthetic
from validation import require_valid, validate


EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SEED = 2
EXIT_NOT_CONVERGED = 3


def _load(args: argparse.Namespace, context: RunContext) -> RunConfig:
    run = load_run_config(Path(args.config))
    require_valid(run.network)
    context.manifest.add_inputs(run.inputs, base=run.path.parent)
    return run


def _seeds(args: argparse.Namespace, run: RunConfig, context: RunContext) -> SeedSet:
    path = Path(args.seeds) if getattr(args, "seeds", None) else run.seeds_path
    if path is None:
        raise SeedError("no seed file given (--seeds or `seeds` in the configuration)")
    seeds = SeedSet.from_names(run.network, read_seed_file(path))
    context.manifest.add_input(path, base=run.path.parent)
    context.manifest.set_parameters({"seeds": [f"{m}\t{n}" for m, n in seeds.names(run.network)]})
    return seeds


def _pair(args: argparse.Namespace, run: RunConfig) -> tuple[int, int]:
    names = run.network.names
    for name in (args.source, args.target):
        if name not in names:
            raise ConfigError(f"unknown multiplex {name!r}; known: {', '.join(names)}")
    return names.index(args.source), names.index(args.target)


def cmd_validate(args: argparse.Namespace, context: RunContext) -> int:
    run = load_run_config(Path(args.config))
    context.manifest.add_inputs(run.inputs, base=run.path.parent)
    report = validate(run.network)
    lines = report.to_lines(run.network.names)
    context.output("validation.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    context.manifest.set_result("valid", report.valid)
    context.manifest.set_result("violations", report.violations)
    context.manifest.save(context.out_dir)
    for line in lines[1:]:
        context.progress(line)
    if not report.valid:
        raise NetworkValidationError(report)
    return EXIT_OK


def cmd_rank(args: argparse.Namespace, context: RunContext) -> int:
    run = _load(args, context)
    seeds = _seeds(args, run, context)
    network = run.network
    context.manifest.set_parameters(run.rwr.to_dict(network))

    transition = normalize(network, run.rwr)
    if args.dump_transition:
        transition.dump(context.output("transition.tsv"))
    restart = build_restart(network, run.rwr, seeds)
    result = solve(
        transition,
        restart,
        run.rwr.r,
        epsilon=run.rwr.epsilon,
        max_iter=run.rwr.max_iter,
        workers=context.workers,
    )

    for k, multiplex in enumerate(network.multiplexes):
        exclude = seeds.of(k) if args.exclude_seeds else ()
        path = context.output(f"ranking_{multiplex.name}.tsv")
        write_ranking(path, rank(result, k, exclude=exclude))
        context.progress(f"wrote {path}")

    if args.subnetwork:
        edges = extract_subnetwork(network, result, args.subnetwork, seeds=seeds)
        write_subnetwork(context.output("subnetwork.tsv"), edges)
        context.manifest.set_result("subnetwork_edges", len(edges))

    context.manifest.set_result("iterations", result.iterations)
    context.manifest.set_result("residual", result.residual)
    context.manifest.set_result("converged", result.converged)
    context.manifest.save(context.out_dir)
    if not result.converged:
        raise ConvergenceError("RWR did not converge", result.residual, result.iterations)
    return EXIT_OK


def _evaluate(args: argparse.Namespace, context: RunContext, protocol: str) -> int:
    run = _load(args, context)
    pair = _pair(args, run)
    if protocol == "loocv":
        task = EvalTask(pair=pair, min_degree=args.min_degree, seed_anchor=not args.no_seed_anchor)
    else:
        task = EvalTask.link_prediction(pair, min_degree=args.min_degree)
    context.manifest.set_parameters(run.rwr.to_dict(run.network))
    context.manifest.set_parameters(
        {"protocol": protocol, "pair": [args.source, args.target], "min_degree": task.min_degree,
         "seed_anchor": task.seed_anchor}
    )

    outcome = run_protocol(
        run.network,
        run.rwr,
        task,
        workers=context.workers,
        records_path=context.output(config.RECORDS_NAME),
    )
    write_cdf(context.output(config.CDF_NAME), outcome.cdf)
    write_cdf_plot(context.output(config.CDF_PLOT_NAME), outcome.cdf, title=f"{protocol} {args.source}->{args.target}")

    context.manifest.set_result("records", len(outcome.records))
    context.manifest.set_result("skipped_anchors", outcome.skipped_anchors)
    context.manifest.set_result("non_converged", outcome.non_converged)
    context.manifest.set_result("median_rank", median_rank(outcome))
    context.manifest.set_result("cdf_area", cdf_area(outcome))
    context.manifest.save(context.out_dir)
    context.progress(
        f"{protocol}: {len(outcome.records)} records, median rank {median_rank(outcome):g}"
    )
    if outcome.non_converged:
        raise ConvergenceError(
            f"{outcome.non_converged} walks did not converge",
            max(outcome.residuals, default=0.0),
            run.rwr.max_iter,
        )
    return EXIT_OK


def cmd_loocv(args: argparse.Namespace, context: RunContext) -> int:
    return _evaluate(args, context, "loocv")


def cmd_linkpred(args: argparse.Namespace, context: RunContext) -> int:
    return _evaluate(args, context, "linkpred")


def cmd_augment(args: argparse.Namespace, context: RunContext) -> int:
    run = _load(args, context)
    pair = _pair(args, run)
    if args.via not in run.network.names:
        raise ConfigError(f"unknown multiplex {args.via!r}")
    via = run.network.names.index(args.via)
    augmented = augment_transit(run.network, via, pair, args.transit_count, self_loops=args.self_loops)
    write_network(augmented, context.out_dir, rwr=run.rwr, seed_lines=_seed_lines(run))
    context.manifest.set_parameters(
        {"via": args.via, "pair": [args.source, args.target], "transit_count": args.transit_count,
         "self_loops": args.self_loops}
    )
    context.manifest.set_result("nodes_added", augmented.multiplexes[via].n - run.network.multiplexes[via].n)
    context.manifest.save(context.out_dir)
    context.progress(f"wrote {context.output('config.yaml')}")
    return EXIT_OK


def cmd_randomize(args: argparse.Namespace, context: RunContext) -> int:
    run = _load(args, context)
    pair = _pair(args, run)
    randomized = randomize_bipartite(run.network, pair, args.fraction, seed=context.rng_seed)
    write_network(randomized, context.out_dir, rwr=run.rwr, seed_lines=_seed_lines(run))
    context.manifest.set_parameters({"pair": [args.source, args.target], "fraction": args.fraction})
    context.manifest.save(context.out_dir)
    context.progress(f"wrote {context.output('config.yaml')}")
    return EXIT_OK


def _seed_lines(run: RunConfig) -> list[tuple[str, str]] | None:
    if run.seeds_path is None:
        return None
    seeds = SeedSet.from_names(run.network, read_seed_file(run.seeds_path))
    return seeds.names(run.network)


def cmd_explore(args: argparse.Namespace, context: RunContext) -> int:
    run = _load(args, context)
    seeds = _seeds(args, run, context)
    grid_path = Path(args.grid)
    grid = load_grid(grid_path, run.network, run.rwr)
    context.manifest.add_input(grid_path)
    context.manifest.set_parameters(
        {"variants": {v.name: v.config.to_dict(run.network) for v in grid.variants},
         "k": args.k, "top": args.top}
    )
    report, scores = run_exploration(
        run.network,
        grid,
        seeds,
        context.out_dir,
        k=args.k,
        top=args.top,
        seed=context.rng_seed,
        workers=context.workers,
    )
    context.manifest.set_result("failed_variants", scores.failed)
    context.manifest.set_result("explained_variance", [float(x) for x in report.explained])
    context.manifest.set_result("inertia", report.inertia)
    context.manifest.save(context.out_dir)
    context.progress(f"explored {len(grid)} variants into {args.k} clusters")
    if scores.failed:
        raise ConvergenceError(f"{len(scores.failed)} variants did not converge", 0.0, run.rwr.max_iter)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace, context: RunContext) -> int:
    spec = SynthSpec(
        kind=args.kind,
        multiplexes=args.multiplexes,
        layers=args.layers,
        nodes=args.nodes,
        communities=args.communities,
        p_in=args.p_in,
        p_out=args.p_out,
        bipartite_p_in=args.bipartite_p_in,
        bipartite_p_out=args.bipartite_p_out,
        edges=args.edges,
        bipartite_edges=args.bipartite_edges,
        overlap=args.overlap,
        seeds=args.seeds_count,
        seed=context.rng_seed,
    )
    path = write_synthetic(spec, context.out_dir)
    context.progress(f"wrote {path}")
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser, needs_config: bool = True) -> None:
    if needs_config:
        parser.add_argument("--config", required=True, help="YAML run configuration")
    parser.add_argument("--out", required=True, help="output directory (created if absent)")
    parser.add_argument("--seed", type=int, default=config.DEFAULT_RNG_SEED, help="rng seed")
    parser.add_argument(
        "--workers", type=int, default=None, help="worker threads (default: available CPUs)"
    )
    parser.add_argument("--quiet", action="store_true", help="no progress on stdout")
    parser.add_argument("--verbose", action="store_true", help="info-level diagnostics on stderr")
    parser.add_argument(
        "--state-dir", help="directory for the score cache (default: $MULTIWALK_STATE_DIR or ./.multiwalk)"
    )


def _add_pair(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--source", required=True, help="multiplex of the left-out nodes")
    parser.add_argument("--target", required=True, help="multiplex of the anchor nodes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multiwalk", description="Random walk with restart on universal multilayer networks"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    validate_parser = subparsers.add_parser("validate", help="check a network and report statistics")
    _add_common(validate_parser)
    validate_parser.set_defaults(handler=cmd_validate)

    rank_parser = subparsers.add_parser("rank", help="score and rank every node from seeds")
    _add_common(rank_parser)
    rank_parser.add_argument("--seeds", help="seed file (overrides the configuration)")
    rank_parser.add_argument("--subnetwork", type=int, default=0, metavar="K",
                             help="also extract the subnetwork of seeds and top-K nodes per multiplex")
    rank_parser.add_argument("--exclude-seeds", action="store_true", help="leave seeds out of rankings")
    rank_parser.add_argument("--dump-transition", action="store_true",
                             help="write the transition matrix as row/col/value triplets")
    rank_parser.set_defaults(handler=cmd_rank)

    for name, handler, min_degree in (
        ("loocv", cmd_loocv, config.DEFAULT_MIN_DEGREE),
        ("linkpred", cmd_linkpred, config.DEFAULT_LP_MIN_DEGREE),
    ):
        eval_parser = subparsers.add_parser(name, help=f"run the {name} protocol on a bipartite network")
        _add_common(eval_parser)
        _add_pair(eval_parser)
        eval_parser.add_argument("--min-degree", type=int, default=min_degree)
        if name == "loocv":
            eval_parser.add_argument("--no-seed-anchor", action="store_true",
                                     help="do not seed the anchor node itself")
        eval_parser.set_defaults(handler=handler)

    augment_parser = subparsers.add_parser("augment", help="add transit nodes along a bipartite network")
    _add_common(augment_parser)
    _add_pair(augment_parser)
    augment_parser.add_argument("--via", required=True, help="multiplex receiving the transit nodes")
    augment_parser.add_argument("--transit-count", type=int, default=1)
    augment_parser.add_argument("--self-loops", action="store_true", help="give transit nodes self-loops")
    augment_parser.set_defaults(handler=cmd_augment)

    randomize_parser = subparsers.add_parser("randomize", help="shuffle a share of bipartite edges")
    _add_common(randomize_parser)
    _add_pair(randomize_parser)
    randomize_parser.add_argument("--fraction", type=float, required=True)
    randomize_parser.set_defaults(handler=cmd_randomize)

    explore_parser = subparsers.add_parser("explore", help="explore a parameter grid")
    _add_common(explore_parser)
    explore_parser.add_argument("--seeds", help="seed file (overrides the configuration)")
    explore_parser.add_argument("--grid", required=True, help="YAML grid of parameter variants")
    explore_parser.add_argument("--k", type=int, default=config.DEFAULT_CLUSTERS)
    explore_parser.add_argument("--top", type=int, default=config.DEFAULT_TOP_K)
    explore_parser.set_defaults(handler=cmd_explore)

    synth_parser = subparsers.add_parser("synth", help="generate a synthetic multilayer network")
    _add_common(synth_parser, needs_config=False)
    defaults = SynthSpec()
    synth_parser.add_argument("--kind", choices=["planted", "random"], default=defaults.kind)
    synth_parser.add_argument("--multiplexes", type=int, default=defaults.multiplexes)
    synth_parser.add_argument("--layers", type=int, default=defaults.layers)
    synth_parser.add_argument("--nodes", type=int, default=defaults.nodes)
    synth_parser.add_argument("--communities", type=int, default=defaults.communities)
    synth_parser.add_argument("--p-in", type=float, default=defaults.p_in)
    synth_parser.add_argument("--p-out", type=float, default=defaults.p_out)
    synth_parser.add_argument("--bipartite-p-in", type=float, default=defaults.bipartite_p_in)
    synth_parser.add_argument("--bipartite-p-out", type=float, default=defaults.bipartite_p_out)
    synth_parser.add_argument("--edges", type=int, default=defaults.edges, help="edges per layer (random)")
    synth_parser.add_argument("--bipartite-edges", type=int, default=defaults.bipartite_edges)
    synth_parser.add_argument("--overlap", type=float, default=defaults.overlap)
    synth_parser.add_argument("--seeds-count", type=int, default=defaults.seeds)
    synth_parser.set_defaults(handler=cmd_synth)
    return parser


EXIT_CODES: tuple[tuple[tuple[type[Exception], ...], int], ...] = (
    ((SeedError, RestartError), EXIT_SEED),
    ((ConvergenceError,), EXIT_NOT_CONVERGED),
    ((ConfigError, EdgeListError, NetworkValidationError, EvaluationError, ExplorationError), EXIT_CONFIG),
)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.state_dir:
        config.reconfigure(Path(args.state_dir))
        move_log_file(config.LOG_FILE)
    if args.verbose:
        set_stderr_level(logging.INFO)

    context = RunContext.create_default(
        args.command, Path(args.out), rng_seed=args.seed, workers=args.workers, quiet=args.quiet
    )
    set_context(context)
    handler: Callable[[argparse.Namespace, RunContext], int] = args.handler
    run_log = bind(command=args.command, out=str(context.out_dir))
    run_log.debug("Starting run", extra={"rng_seed": args.seed, "workers": context.workers})
    try:
        return handler(args, context)
    except Exception as e:
        for kinds, code in EXIT_CODES:
            if isinstance(e, kinds):
                run_log.error(f"{args.command} failed: {e}", extra={"exit_code": code})
                return code
        raise
    finally:
        reset_context()
        if args.verbose:
            set_stderr_level(logging.WARNING)


if __name__ == "__main__":
    sys.exit(main())
