"""Command-line surface: training, fidelity curves, transplantation and genome inspection."""

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Optional

import networkx as nx

from app.config import load_config
from app.errors import ConfigError, ContractViolation
from app.evaluation_service import EvaluationService, curve_manifest
from app.genome import param_count
from app.models import GenomeDocument, default_eval_grid
from app.mwpm import DEFAULT_MATCHING_LIMIT
from app.run_service import RunService
from app.startup import startup
from app.toric_code import NoiseKind
from app.transplant import transplant

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONTRACT = 3


def parse_rates(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated error rates, got {text!r}") from e


def _add_curve_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--p", type=parse_rates, default=None, help="comma-separated error rates")
    parser.add_argument("--games", type=int, default=10_000, help="games per error rate")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--wilson", action="store_true", help="add Wilson 95%% interval columns")
    parser.add_argument("--per-pauli", action="store_true", help="depolarizing noise with p per Pauli")
    parser.add_argument("--output", type=Path, default=None, help="CSV path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neat-toric-decoder", description=__doc__)
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="evolve a decoder")
    train.add_argument("--config", type=Path, required=True)
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--workers", type=int, default=None)
    train.add_argument("--out", type=str, default=None, help="output directory")

    evaluate = commands.add_parser("evaluate", help="fidelity curve of a genome")
    evaluate.add_argument("--genome", type=Path, required=True)
    evaluate.add_argument("--max-steps-multiplier", type=int, default=4)
    _add_curve_options(evaluate)

    baseline = commands.add_parser("baseline", help="fidelity curve of the matching decoder")
    baseline.add_argument("--d", type=int, required=True)
    baseline.add_argument("--mode", type=NoiseKind, choices=list(NoiseKind), default=NoiseKind.BITFLIP)
    baseline.add_argument("--matching-limit", type=int, default=DEFAULT_MATCHING_LIMIT)
    baseline.add_argument("--count-overlimit-as-loss", action="store_true")
    _add_curve_options(baseline)

    graft = commands.add_parser("transplant", help="lift a genome to a larger code distance")
    graft.add_argument("--genome", type=Path, required=True)
    graft.add_argument("--d2", type=int, required=True)
    graft.add_argument("--output", type=Path, default=None, help="default: <genome>_d<d2>.json")

    count = commands.add_parser("count-params", help="number of trainable parameters")
    count.add_argument("--genome", type=Path, required=True)

    describe = commands.add_parser("describe", help="print nodes and connections of a genome")
    describe.add_argument("--genome", type=Path, required=True)

    runs = commands.add_parser("runs", help="list runs stored in an output directory")
    runs.add_argument("--out", type=Path, required=True)
    return parser


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, seed=args.seed, workers=args.workers, out_dir=args.out)
    out_dir = Path(cfg.out_dir)
    startup(out_dir)
    summary = RunService.train(cfg)
    sys.stdout.write(
        f"run {summary.id}: champion held-out {summary.champion_heldout} "
        f"({summary.champion_param_count} parameters) in {out_dir}\n"
    )
    return EXIT_OK


def _write_curve(points, output: Optional[Path], manifest: str, wilson: bool) -> None:
    if output is None:
        EvaluationService.write_csv(points, sys.stdout, manifest, wilson)
    else:
        EvaluationService.save_csv(points, output, manifest, wilson)
        logger.info(f"wrote {output}")


def cmd_evaluate(args: argparse.Namespace) -> int:
    document = GenomeDocument.load(args.genome)
    p_grid = args.p if args.p is not None else default_eval_grid(document.mode)
    points = EvaluationService.genome_curve(
        document, p_grid, args.games, args.seed, args.workers, args.max_steps_multiplier, args.per_pauli, args.wilson
    )
    manifest = curve_manifest(
        genome=document.manifest or document.to_json(), p=p_grid, games=args.games, seed=args.seed,
        per_pauli=args.per_pauli, max_steps_multiplier=args.max_steps_multiplier,
    )
    _write_curve(points, args.output, manifest, args.wilson)
    return EXIT_OK


def cmd_baseline(args: argparse.Namespace) -> int:
    p_grid = args.p if args.p is not None else default_eval_grid(args.mode)
    points = EvaluationService.baseline_curve(
        args.d, args.mode, p_grid, args.games, args.seed, args.workers,
        args.matching_limit, args.count_overlimit_as_loss, args.per_pauli, args.wilson,
    )
    manifest = curve_manifest(
        decoder="mwpm", d=args.d, mode=args.mode.value, p=p_grid, games=args.games, seed=args.seed,
        per_pauli=args.per_pauli, matching_limit=args.matching_limit,
        count_overlimit_as_loss=args.count_overlimit_as_loss,
    )
    _write_curve(points, args.output, manifest, args.wilson)
    return EXIT_OK


def cmd_transplant(args: argparse.Namespace) -> int:
    document = GenomeDocument.load(args.genome)
    grown = transplant(document.to_genome(), document.d, args.d2, document.mode)
    output = args.output or args.genome.with_name(f"{args.genome.stem}_d{args.d2}.json")
    GenomeDocument.from_genome(grown, document.mode, args.d2, document.manifest, document.sigmoid_slope).save(output)
    sys.stdout.write(f"{output}\n")
    return EXIT_OK


def cmd_count_params(args: argparse.Namespace) -> int:
    sys.stdout.write(f"{param_count(GenomeDocument.load(args.genome).to_genome())}\n")
    return EXIT_OK


def describe_genome(document: GenomeDocument) -> str:
    genome = document.to_genome()
    graph = genome.graph()
    depth = nx.dag_longest_path_length(graph) if graph.number_of_edges() else 0
    lines = [
        f"d={document.d} mode={document.mode} inputs={genome.n_in} outputs={genome.n_out} "
        f"hidden={len(genome.hidden_ids)} hidden_depth={max(0, depth - 1)} parameters={param_count(genome)}",
        "nodes:",
    ]
    lines += [
        f"  {node_id:>5} {genome.nodes[node_id].kind:<6} bias={genome.nodes[node_id].bias:+.6f}"
        for node_id in genome.output_ids + genome.hidden_ids
    ]
    lines.append("connections:")
    lines += [
        f"  #{gene.innovation:<5} {gene.in_node:>5} -> {gene.out_node:<5} weight={gene.weight:+.6f}"
        for gene in genome.enabled_genes()
    ]
    return "\n".join(lines) + "\n"


def cmd_describe(args: argparse.Namespace) -> int:
    sys.stdout.write(describe_genome(GenomeDocument.load(args.genome)))
    return EXIT_OK


def cmd_runs(args: argparse.Namespace) -> int:
    if not args.out.is_dir():
        raise ContractViolation(f"output directory {args.out} does not exist")
    startup(args.out)
    for run in RunService.list_runs():
        sys.stdout.write(
            f"{run.id}\t{run.manifest_id[:12]}\t{run.mode}\td={run.d}\tseed={run.seed}\t"
            f"generations={run.generations_recorded}\theld-out={run.champion_heldout}\t"
            f"parameters={run.champion_param_count}\tfinished={run.finished_at or '-'}\n"
        )
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "baseline": cmd_baseline,
    "transplant": cmd_transplant,
    "count-params": cmd_count_params,
    "describe": cmd_describe,
    "runs": cmd_runs,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"configuration error: {e}")
        return EXIT_CONFIG
    except ContractViolation as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_CONTRACT
