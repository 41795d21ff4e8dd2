"""Command-line driver: run, enumerate, analyze-gradients, resume.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from layerga import analysis, engine, oracle
from layerga.engine import RunAborted, RunConfig, RunReport
from layerga.evaluation import (
    EvaluatorError,
    EvaluatorSpecError,
    TableEvaluator,
    make_evaluator,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layerga",
        description="Genetic search for the trainable-layer window of a transfer network",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a genetic run")
    run_p.add_argument("--evaluator", required=True, help="synthetic:<name> | table:<path> | external:<command>")
    run_p.add_argument("--pop-size", type=int, default=50)
    run_p.add_argument("--generations", type=int, default=15)
    run_p.add_argument("--q-m", type=float, default=0.05)
    run_p.add_argument("--q-c", type=float, default=0.2)
    run_p.add_argument("--gamma", type=float, default=0.005)
    run_p.add_argument("--l-max", type=int, default=156)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--elitism", action="store_true")
    run_p.add_argument("--stagnation", type=int, default=None, metavar="S",
                       help="stop after S generations without best-fitness improvement")
    run_p.add_argument("--evaluate-before-selection", action="store_true",
                       help="measure variants before roulette selection instead of after")
    run_p.add_argument("--jobs", type=int, default=1)
    run_p.add_argument("--out-dir", default="layerga-out")

    res_p = sub.add_parser("resume", help="continue a checkpointed run")
    res_p.add_argument("checkpoint")
    res_p.add_argument("--evaluator", default=None,
                       help="override the evaluator recorded in the checkpoint")
    res_p.add_argument("--generations", type=int, default=None)
    res_p.add_argument("--jobs", type=int, default=None)
    res_p.add_argument("--out-dir", default=None)

    enum_p = sub.add_parser("enumerate", help="brute-force every window")
    enum_p.add_argument("--evaluator", required=True)
    enum_p.add_argument("--gamma", type=float, default=0.005)
    enum_p.add_argument("--l-max", type=int, default=156)
    enum_p.add_argument("--jobs", type=int, default=1)
    enum_p.add_argument("--full-table", action="store_true",
                        help="also write every (window, accuracy, fitness) row")
    enum_p.add_argument("--out-dir", default="layerga-out")

    grad_p = sub.add_parser("analyze-gradients", help="summarize a gradient dump")
    grad_p.add_argument("input", help="CSV with header layer,category,value")
    grad_p.add_argument("--stat", choices=analysis.SUMMARY_STATS, default="sum")
    grad_p.add_argument("--threshold", type=float, default=0.0)
    grad_p.add_argument("--categories", default=None, metavar="A,B",
                        help="pair of category labels for sign-opposition detection")
    grad_p.add_argument("--top", type=int, default=6,
                        help="how many top-magnitude layers to print")
    grad_p.add_argument("--out-dir", default="layerga-out")
    return parser


def _print_summary(report: RunReport) -> None:
    print("gen   max     min     avg     start  end")
    for s in report.generations:
        print(
            f"{s.generation:<5d}{s.max_acc:<8.4f}{s.min_acc:<8.4f}{s.avg_acc:<8.4f}"
            f"{s.best_l_start:<7d}{s.best_l_end:d}"
        )
    best = report.best
    print(
        f"best: window ({best.window.l_start}, {best.window.l_end}) "
        f"accuracy {best.accuracy:.4f} fitness {best.fitness:.4f} "
        f"[{report.termination}, {report.total_evaluations} evaluations, "
        f"{report.cache_hits} cache hits]"
    )


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        config = RunConfig(
            population_size=args.pop_size,
            max_generations=args.generations,
            q_m=args.q_m,
            q_c=args.q_c,
            gamma=args.gamma,
            l_max=args.l_max,
            seed=args.seed,
            elitism=args.elitism,
            stagnation_window=args.stagnation,
            evaluate_before_selection=args.evaluate_before_selection,
            jobs=args.jobs,
            evaluator=args.evaluator,
            out_dir=args.out_dir,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    with make_evaluator(args.evaluator) as evaluator:
        try:
            report = engine.run(config, evaluator)
        except RunAborted as aborted:
            engine.write_outputs(aborted.partial_report, config.out_dir)
            print(f"error: run aborted: {aborted}", file=sys.stderr)
            print(f"partial report written to {config.out_dir}", file=sys.stderr)
            return EXIT_FAILURE
    engine.write_outputs(report, config.out_dir)
    _print_summary(report)
    return EXIT_OK


def _cmd_resume(args: argparse.Namespace) -> int:
    payload = engine.load_checkpoint(args.checkpoint)
    selector = args.evaluator or payload["config"].get("evaluator")
    if not selector:
        raise UsageError(
            "checkpoint does not record an evaluator; pass --evaluator explicitly"
        )
    out_dir = args.out_dir or payload["config"].get("out_dir") or "layerga-out"
    with make_evaluator(selector) as evaluator:
        try:
            report = engine.resume(
                args.checkpoint,
                evaluator,
                max_generations=args.generations,
                out_dir=out_dir,
                jobs=args.jobs,
            )
        except RunAborted as aborted:
            engine.write_outputs(aborted.partial_report, out_dir)
            print(f"error: run aborted: {aborted}", file=sys.stderr)
            return EXIT_FAILURE
    engine.write_outputs(report, out_dir)
    _print_summary(report)
    return EXIT_OK


def _cmd_enumerate(args: argparse.Namespace) -> int:
    if args.gamma < 0:
        raise UsageError("--gamma must be >= 0")
    if args.l_max < 0:
        raise UsageError("--l-max must be >= 0")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    with make_evaluator(args.evaluator) as evaluator:
        if not evaluator.deterministic:
            print(
                "error: enumeration needs a deterministic evaluator; this worker "
                "declared deterministic=false in its handshake",
                file=sys.stderr,
            )
            return EXIT_FAILURE
        if isinstance(evaluator, TableEvaluator):
            # A lookup table only has ground truth for its measured windows.
            report = oracle.enumerate_table(
                evaluator.table, gamma=args.gamma, full_table=args.full_table
            )
        else:
            report = oracle.enumerate_best(
                evaluator,
                gamma=args.gamma,
                l_max=args.l_max,
                full_table=args.full_table,
                jobs=args.jobs,
            )
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "oracle.json"), "w", encoding="utf-8") as handle:
        json.dump(report.to_record(), handle, indent=2)
        handle.write("\n")
    if args.full_table:
        with open(os.path.join(args.out_dir, "oracle_table.csv"), "w", encoding="utf-8") as handle:
            handle.write(oracle.format_table_csv(report))
    w = report.best_window
    print(
        f"best: window ({w.l_start}, {w.l_end}) accuracy {report.best_accuracy:.4f} "
        f"fitness {report.best_fitness:.4f} over {report.total_configurations} configurations"
    )
    return EXIT_OK


def _cmd_analyze_gradients(args: argparse.Namespace) -> int:
    if args.top < 1:
        raise UsageError("--top must be >= 1")
    if args.threshold < 0:
        raise UsageError("--threshold must be >= 0")
    records = analysis.load_gradients(args.input)
    summaries = analysis.summarize(records)
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "gradient_summary.csv"), "w", encoding="utf-8") as handle:
        handle.write(analysis.format_summary_csv(summaries))

    top = analysis.top_magnitude_layers(summaries, args.stat, args.top)
    print(f"top layers by |{args.stat}|: {', '.join(str(l) for l in top)}")

    if args.categories:
        labels = [c.strip() for c in args.categories.split(",")]
        if len(labels) != 2 or not all(labels):
            raise UsageError("--categories expects exactly two labels, e.g. dog,cat")
        findings, skipped = analysis.sign_opposition(
            summaries, labels[0], labels[1], threshold=args.threshold
        )
        with open(os.path.join(args.out_dir, "opposition.jsonl"), "w", encoding="utf-8") as handle:
            handle.write(analysis.format_findings_jsonl(findings))
        flagged = [f.layer for f in findings if f.flagged]
        print(f"sign-opposite layers ({labels[0]} vs {labels[1]}): "
              f"{', '.join(str(l) for l in flagged) if flagged else 'none'}")
        if skipped:
            print(f"skipped layers missing a category: {', '.join(str(l) for l in skipped)}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "resume": _cmd_resume,
        "enumerate": _cmd_enumerate,
        "analyze-gradients": _cmd_analyze_gradients,
    }
    try:
        return handlers[args.command](args)
    except (UsageError, EvaluatorSpecError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EvaluatorError, analysis.GradientParseError, analysis.EmptyInputError,
            analysis.UnknownCategoryError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
