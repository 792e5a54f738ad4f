"""Command-line entry points."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import catalog as catalog_mod
from . import table_metrics
from .config import build_gateway, config_from_dict, load_config, method_from_cli
from .errors import DbInsightsError
from .evaluator import (
    bootstrap_ci,
    read_comparisons,
    read_human_comparisons_csv,
    run_tournament,
)
from .pipeline import (
    export_report,
    judge_insightfulness,
    resolve_comparison_methods,
    run_generate,
)
from .server import serve_annotation
from .tables import load_result_csv

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dbinsights",
        description="Generate and evaluate short textual insights from SQLite databases.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("describe", help="introspect a database and print its description")
    p.add_argument("db", help="path to the SQLite database")
    p.add_argument("--config", help="JSON config file with backend settings")

    p = sub.add_parser("generate", help="run one insight-generation method")
    p.add_argument("--method", required=True, choices=["hli", "hli-ws", "hli-wh", "serial"])
    p.add_argument("--db", required=True, help="path to the SQLite database")
    p.add_argument("--out", required=True, help="manifest output path (JSONL)")
    p.add_argument("--config", help="JSON config file")

    p = sub.add_parser("metrics", help="table similarity metrics")
    metrics_sub = p.add_subparsers(dest="metric", required=True)
    d = metrics_sub.add_parser("dist", help="cell precision/recall and their harmonic mean")
    d.add_argument("pred", help="predicted result table (CSV, header row)")
    d.add_argument("truth", help="ground-truth result table (CSV, header row)")

    p = sub.add_parser("judge", help="LLM pairwise insightfulness judging")
    p.add_argument("--manifests", nargs="+", required=True)
    p.add_argument("--n", type=int, default=100, help="number of comparisons")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="comparison log output (JSONL)")
    p.add_argument("--config", help="JSON config file")

    p = sub.add_parser("tournament", help="Elo ratings from a comparison log")
    p.add_argument("--log", required=True, help="comparison log (JSONL, or human-annotation CSV)")
    p.add_argument("--k", type=float, default=4.0)
    p.add_argument("--bootstrap", type=int, default=0, help="bootstrap resamples for CIs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--manifests",
        nargs="*",
        default=[],
        help="manifests used to resolve methods when the log carries only insight ids",
    )

    p = sub.add_parser("serve-eval", help="serve the human annotation UI and API")
    p.add_argument("--manifests", nargs="+", required=True)
    p.add_argument("--session", required=True, help="session answer log (JSONL)")
    p.add_argument("--bind", default="127.0.0.1:8765")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--evaluator", default="human")
    p.add_argument("--assets", help="static UI assets directory")

    p = sub.add_parser("report", help="export leaderboard/correctness/count reports")
    p.add_argument("--manifests", nargs="+", required=True)
    p.add_argument("--logs", nargs="*", default=[], help="comparison logs (JSONL)")
    p.add_argument("--correctness", help="claim-score annotations (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--k", type=float, default=8.0)
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("cost", help="usage and cost summary of a run manifest")
    p.add_argument("--manifest", required=True)

    return parser


def _cmd_describe(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    cat = catalog_mod.introspect(args.db)
    print(catalog_mod.render_schema_text(cat))
    if config.get("backend"):
        gateway = build_gateway(config["backend"])
        override = catalog_mod.load_sidecar_description(args.db)
        if override:
            cat.long_description = override
        catalog_mod.generate_description(cat, gateway)
        short = catalog_mod.shorten_description(cat.long_description, gateway)
        print("--- description ---")
        print(cat.long_description)
        print("--- short description ---")
        print(short)
    return 0


def _cmd_generate(args: argparse.Namespace) -> int:
    data = load_config(args.config)
    method = method_from_cli(args.method)
    config = config_from_dict(data, method=method)
    config.backend = data.get("backend", {})
    gateway = build_gateway(config.backend)
    records = run_generate(config, args.db, gateway, out_path=args.out)
    print(f"{len(records)} insights written to {args.out}")
    return 0


def _cmd_metrics_dist(args: argparse.Namespace) -> int:
    pred = load_result_csv(args.pred)
    truth = load_result_csv(args.truth)
    precision = table_metrics.cell_precision(pred, truth)
    recall = table_metrics.cell_recall(pred, truth)
    dist = table_metrics.distance(pred, truth)
    print(f"cell_precision: {precision:.6f}")
    print(f"cell_recall: {recall:.6f}")
    print(f"dist: {dist:.6f}")
    return 0


def _cmd_judge(args: argparse.Namespace) -> int:
    data = load_config(args.config)
    gateway = build_gateway(data.get("backend", {}))
    records = judge_insightfulness(
        args.manifests, args.n, gateway, seed=args.seed, out_path=args.out
    )
    print(f"{len(records)} comparisons written to {args.out}")
    return 0


def _cmd_tournament(args: argparse.Namespace) -> int:
    if str(args.log).endswith(".csv"):
        records = read_human_comparisons_csv(args.log)
    else:
        records = read_comparisons(args.log)
    if args.manifests or any(not (r.method_a and r.method_b) for r in records):
        records = resolve_comparison_methods(records, args.manifests)
    board = run_tournament(records, k=args.k, keep_history=False)
    if args.bootstrap:
        intervals = bootstrap_ci(records, k=args.k, resamples=args.bootstrap, seed=args.seed)
        print("method,final,median,lo95,hi95")
        for method, rating in board.ranking():
            median, lo, hi = intervals[method]
            print(f"{method},{rating:.2f},{median:.2f},{lo:.2f},{hi:.2f}")
    else:
        print("method,final")
        for method, rating in board.ranking():
            print(f"{method},{rating:.2f}")
    return 0


def _cmd_serve_eval(args: argparse.Namespace) -> int:
    serve_annotation(
        args.manifests,
        args.session,
        bind_address=args.bind,
        n_pairs=args.n,
        seed=args.seed,
        evaluator_id=args.evaluator,
        assets_dir=args.assets,
    )
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    written = export_report(
        args.manifests,
        args.logs,
        args.correctness,
        args.out,
        k=args.k,
        resamples=args.bootstrap,
        seed=args.seed,
    )
    for name, path in sorted(written.items()):
        print(f"{name}: {path}")
    return 0


def _cmd_cost(args: argparse.Namespace) -> int:
    from .manifest import load_manifest

    manifest = load_manifest(args.manifest)
    print("tag,calls,cost")
    total_calls, total = 0, 0.0
    for tag, usage in sorted(manifest.usage.items()):
        print(f"{tag},{usage['calls']},{usage['cost']:.6f}")
        total_calls += usage["calls"]
        total += usage["cost"]
    print(f"TOTAL,{total_calls},{total:.6f}")
    return 0


_HANDLERS = {
    "describe": _cmd_describe,
    "generate": _cmd_generate,
    "judge": _cmd_judge,
    "tournament": _cmd_tournament,
    "serve-eval": _cmd_serve_eval,
    "report": _cmd_report,
    "cost": _cmd_cost,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "metrics":
            return _cmd_metrics_dist(args)
        return _HANDLERS[args.command](args)
    except DbInsightsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
