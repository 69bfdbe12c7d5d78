"""Command-line entry point.

Subcommands: evaluate (full run), sweep (one axis, many values), roles
(preview generated personas), baselines (overlap metrics only), cache
(inspect or clear the response cache). Flags override config-file values,
which override built-in defaults. Exit codes: 0 success, 2 usage error,
3 configuration error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backend import DEFAULT_API_KEY_ENV, MockBackend, ResponseCache
from .baselines import rouge_l, rouge_n, sent_bleu, tokenize
from .datasets import DatasetSchema, human_score, load_dataset
from .dedup import HashingEmbedder, embed_role, kmeans, select_representatives
from .errors import (
    ConfigurationError,
    DrpeError,
    UndefinedCorrelationError,
    UndefinedMetricError,
)
from .harness import RunConfig, pearson_abs, run_evaluation, sweep, sweep_table
from .roles import PromptKind, RoleGenConfig, generate_dynamic_roles

EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_RUNTIME = 4

_SWEEP_BOOL_AXES = ("clustering_on", "batch_on", "static_roles_on", "dynamic_roles_on")


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--dataset", help="path to the line-delimited dataset file")
    parser.add_argument("--schema", choices=[s.value for s in DatasetSchema])
    parser.add_argument("--backend", choices=["mock", "live"])
    parser.add_argument("--mock-script", help="fixture file for the mock backend")
    parser.add_argument("--endpoint", help="base URL of the completions endpoint")
    parser.add_argument("--model", dest="model_id", help="model identifier")
    parser.add_argument("--roles-k", type=int, dest="roles_k")
    parser.add_argument("--role-prompts", choices=[k.value for k in PromptKind],
                        dest="role_prompt_kind",
                        help="which persona-generation prompts to use")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--cluster-seed", type=int, dest="cluster_seed")
    parser.add_argument("--both-orders", action="store_true", dest="both_orders",
                        default=None)
    parser.add_argument("--repetitions", type=int)
    parser.add_argument("--template")
    parser.add_argument("--no-direct-baseline", action="store_false",
                        dest="direct_baseline_on", default=None)
    parser.add_argument("--out", dest="out_dir", help="directory for report files")
    parser.add_argument("--cache-dir", dest="cache_dir")
    parser.add_argument("--dump-prompts", action="store_true", dest="dump_prompts",
                        default=None)
    parser.add_argument("--no-static-roles", action="store_false",
                        dest="static_roles_on", default=None)
    parser.add_argument("--no-dynamic-roles", action="store_false",
                        dest="dynamic_roles_on", default=None)
    parser.add_argument("--no-clustering", action="store_false",
                        dest="clustering_on", default=None)
    parser.add_argument("--no-batch", action="store_false", dest="batch_on",
                        default=None)
    parser.add_argument("--registry", dest="registry_path",
                        help="override the static role registry file")
    parser.add_argument("--reference-source", choices=["file", "generate"],
                        dest="reference_source")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drpe",
        description="Role-play pairwise summarization evaluation harness",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    evaluate = sub.add_parser("evaluate", help="run a full evaluation")
    _add_common_flags(evaluate)

    sweep_cmd = sub.add_parser("sweep", help="run one evaluation per axis value")
    _add_common_flags(sweep_cmd)
    sweep_cmd.add_argument("--axis", required=True)
    sweep_cmd.add_argument("--values", required=True,
                           help="comma-separated values for the axis")

    roles_cmd = sub.add_parser("roles", help="preview generated roles for an article")
    roles_cmd.add_argument("--article", required=True, help="path to an article text file")
    roles_cmd.add_argument("--backend", choices=["mock", "live"], default="mock")
    roles_cmd.add_argument("--mock-script")
    roles_cmd.add_argument("--endpoint", default="")
    roles_cmd.add_argument("--model", dest="model_id", default="default")
    roles_cmd.add_argument("--roles-k", type=int, dest="roles_k", default=4)
    roles_cmd.add_argument("--count", type=int, default=4,
                           help="personas requested per prompt")
    roles_cmd.add_argument("--kind", choices=[k.value for k in PromptKind],
                           default="both")
    roles_cmd.add_argument("--no-cluster", action="store_true")
    roles_cmd.add_argument("--seed", type=int, default=0)

    baselines_cmd = sub.add_parser(
        "baselines", help="compute overlap metrics only (no LLM calls)"
    )
    baselines_cmd.add_argument("--dataset", required=True)
    baselines_cmd.add_argument("--schema", required=True,
                               choices=[s.value for s in DatasetSchema])
    baselines_cmd.add_argument("--out", dest="out_dir")

    cache_cmd = sub.add_parser("cache", help="inspect or clear the response cache")
    cache_cmd.add_argument("action", choices=["stats", "clear"])
    cache_cmd.add_argument("--cache-dir", required=True, dest="cache_dir")

    return parser


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigurationError(f"config file not found: {config_path}")
    try:
        data = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("config file must contain a JSON object")
    return data


def _run_config_from_args(args: argparse.Namespace) -> RunConfig:
    merged = _load_config_file(getattr(args, "config", None))
    for key, value in vars(args).items():
        if key in ("subcommand", "config", "axis", "values"):
            continue
        if value is not None:
            merged[key] = value
    if "dataset" not in merged or "schema" not in merged:
        raise ConfigurationError("--dataset and --schema are required (flag or config file)")
    if "template_variants" in merged:
        merged["template_variants"] = tuple(merged["template_variants"])
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigurationError(f"invalid configuration key: {exc}") from exc


def _parse_sweep_values(axis: str, raw: str) -> list:
    values = [v.strip() for v in raw.split(",") if v.strip()]
    if not values:
        raise ValueError("sweep needs at least one value")
    if axis == "roles_k":
        return [int(v) for v in values]
    if axis in _SWEEP_BOOL_AXES:
        mapping = {"true": True, "false": False, "1": True, "0": False}
        try:
            return [mapping[v.lower()] for v in values]
        except KeyError as exc:
            raise ValueError(f"boolean axis {axis} takes true/false values") from exc
    return values


def _cmd_evaluate(args: argparse.Namespace) -> int:
    config = _run_config_from_args(args)
    report = run_evaluation(config)
    print(report.to_table(), end="")
    if config.out_dir:
        print(f"report written to {Path(config.out_dir) / 'report.json'}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _run_config_from_args(args)
    values = _parse_sweep_values(args.axis, args.values)
    reports = sweep(config, args.axis, values)
    table = sweep_table(args.axis, values, reports)
    print(table, end="")
    if config.out_dir:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = [
            {"axis": args.axis, "value": v, "correlations": r.correlations}
            for v, r in zip(values, reports)
        ]
        (out / "sweep.json").write_text(
            json.dumps(rows, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
        (out / "sweep.txt").write_text(table, encoding="utf-8")
        print(f"sweep written to {out / 'sweep.json'}")
    return 0


def _cmd_roles(args: argparse.Namespace) -> int:
    article_path = Path(args.article)
    if not article_path.exists():
        raise ConfigurationError(f"article file not found: {article_path}")
    article = article_path.read_text(encoding="utf-8")
    if args.backend == "mock":
        if not args.mock_script:
            raise ConfigurationError("mock backend requires --mock-script")
        backend = MockBackend.from_file(args.mock_script)
    else:
        from .backend import LiveBackend

        backend = LiveBackend(args.endpoint, api_key_env=DEFAULT_API_KEY_ENV)
    gen_config = RoleGenConfig(
        count_per_prompt=args.count, prompt_kind=PromptKind(args.kind)
    )
    parsed = generate_dynamic_roles(
        article, backend, gen_config, model_id=args.model_id
    )
    roles = list(parsed.roles)
    print(f"generated {len(roles)} roles:")
    for role in roles:
        print(f"  [{role.origin.value}] {role.name}: {role.description}")
    if args.no_cluster or args.roles_k >= len(roles):
        if not args.no_cluster:
            print(f"(clustering skipped: k={args.roles_k} >= {len(roles)} roles)")
        return 0
    embedder = HashingEmbedder()
    vectors = [embed_role(role, embedder) for role in roles]
    result = kmeans(vectors, args.roles_k, args.seed)
    print(f"\ncluster assignments (k={args.roles_k}, seed={args.seed}):")
    for role, cluster in zip(roles, result.assignment):
        print(f"  cluster {cluster}: {role.name}")
    kept = select_representatives(roles, vectors, args.roles_k, args.seed)
    print(f"\nkept {len(kept)} representatives:")
    for role in kept:
        print(f"  {role.name}: {role.description}")
    return 0


def _cmd_baselines(args: argparse.Namespace) -> int:
    schema = DatasetSchema(args.schema)
    records = load_dataset(args.dataset, schema)
    rows = []
    metrics = ("rouge1", "rouge2", "rougeL", "bleu")
    for record in records:
        reference_tokens = tokenize(record.reference)
        for index, candidate in enumerate(record.candidates):
            candidate_tokens = tokenize(candidate.summary)
            row = {"record_id": record.article_id, "candidate_index": index}
            try:
                row["human_score"] = human_score(candidate, schema)
            except ValueError:
                row["human_score"] = None
            try:
                row["rouge1"] = rouge_n(candidate_tokens, reference_tokens, 1)
                row["rouge2"] = rouge_n(candidate_tokens, reference_tokens, 2)
                row["rougeL"] = rouge_l(candidate_tokens, reference_tokens)
                row["bleu"] = sent_bleu(candidate_tokens, reference_tokens)
            except UndefinedMetricError as exc:
                print(f"{record.article_id}#{index}: undefined metric: {exc}")
                continue
            rows.append(row)
            print(
                f"{record.article_id}#{index}: "
                + " ".join(f"{m}={row[m]:.6f}" for m in metrics)
            )
    scored = [r for r in rows if r["human_score"] is not None]
    if len(scored) >= 2:
        print("\ncorrelations |rho|:")
        for metric in metrics:
            try:
                corr = pearson_abs(
                    [r[metric] for r in scored], [r["human_score"] for r in scored]
                )
                print(f"  {metric:<8} {corr:.6f}")
            except UndefinedCorrelationError as exc:
                print(f"  {metric:<8} undefined ({exc})")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "baselines.json").write_text(
            json.dumps(rows, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
    return 0


def _cmd_cache(args: argparse.Namespace) -> int:
    cache = ResponseCache(args.cache_dir)
    if args.action == "stats":
        stats = cache.stats()
        print(f"entries: {stats['entries']}")
        print(f"bytes:   {stats['bytes']}")
    else:
        removed = cache.clear()
        print(f"removed {removed} entries")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "evaluate": _cmd_evaluate,
        "sweep": _cmd_sweep,
        "roles": _cmd_roles,
        "baselines": _cmd_baselines,
        "cache": _cmd_cache,
    }
    try:
        return handlers[args.subcommand](args)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DrpeError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
