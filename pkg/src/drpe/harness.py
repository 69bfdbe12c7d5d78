"""End-to-end evaluation runs: roles, dedup, comparison, scoring, correlation.

A run walks every (record, candidate) pair of a dataset, assembles the judge
roles per configuration, scores the candidate against the reference with the
role-play comparator, computes overlap baselines, and reports the absolute
Pearson correlation of every metric against the human labels.
"""

from __future__ import annotations

import json
import logging
import math
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .backend import (
    Backend,
    CachingBackend,
    CompletionRequest,
    CompletionResponse,
    DEFAULT_API_KEY_ENV,
    LiveBackend,
    MockBackend,
    ResponseCache,
)
from .baselines import rouge_l, rouge_n, sent_bleu, tokenize
from .comparator import (
    BUILTIN_TEMPLATES,
    ComparisonTask,
    PresentationOrder,
    PromptTemplate,
    RoleVerdict,
    Vote,
    build_batch_prompt,
    parse_batch_response,
)
from .datasets import DatasetSchema, EvalRecord, human_score, load_dataset, majority_filter, summeval_select
from .dedup import HashingEmbedder, RemoteEmbedder, embed_role, select_representatives
from .errors import (
    BatchParseError,
    ConfigurationError,
    DecodeError,
    FilterError,
    FixtureMissError,
    RoleParseError,
    ScoringError,
    SelectionError,
    TransportError,
    UndefinedCorrelationError,
    UndefinedMetricError,
)
from .roles import (
    DEFAULT_PROFILE,
    PromptKind,
    Role,
    RoleGenConfig,
    generate_dynamic_roles,
    merge_roles,
    split_label_leaks,
    static_roles,
)
from .scorer import PairScore, drpe_score

logger = logging.getLogger(__name__)

METRIC_NAMES = ("drpe", "drpe_raw", "rouge1", "rouge2", "rougeL", "bleu", "direct")
SWEEP_AXES = ("roles_k", "clustering_on", "batch_on", "static_roles_on", "dynamic_roles_on")

_VOTE_RE = re.compile(r"Vote\s*:\s*Summary\s*([12])", re.IGNORECASE)


@dataclass
class RunConfig:
    """Everything one evaluation run depends on.

    Defaults follow the reference setup: three static judges, four dynamic
    reader roles kept after clustering, batched prompting, greedy decoding.
    """

    dataset: str
    schema: DatasetSchema
    backend: str = "mock"
    mock_script: str | None = None
    endpoint: str = ""
    model_id: str = "default"
    api_key_env: str = DEFAULT_API_KEY_ENV
    roles_profile: str = DEFAULT_PROFILE
    registry_path: str | None = None
    role_template_dir: str | None = None
    roles_k: int = 4
    static_roles_on: bool = True
    dynamic_roles_on: bool = True
    clustering_on: bool = True
    batch_on: bool = True
    role_prompt_kind: PromptKind = PromptKind.BOTH
    roles_per_prompt: int = 4
    include_candidate_in_role_gen: bool = False
    seed: int = 0
    cluster_seed: int | None = None
    both_orders: bool = False
    repetitions: int = 1
    template: str = "default"
    template_variants: tuple[str, ...] = ("default", "variant_a", "variant_b")
    direct_baseline_on: bool = True
    max_tokens: int = 768
    role_gen_max_tokens: int = 512
    reference_gen_max_tokens: int = 256
    direct_max_tokens: int = 32
    cache_dir: str | None = None
    embedder: str = "hashing"
    embed_endpoint: str = ""
    embed_model: str = ""
    reference_source: str = "file"
    max_in_flight: int = 4
    dump_prompts: bool = False
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if isinstance(self.schema, str):
            self.schema = DatasetSchema(self.schema)
        if isinstance(self.role_prompt_kind, str):
            self.role_prompt_kind = PromptKind(self.role_prompt_kind)
        if not (self.static_roles_on or self.dynamic_roles_on):
            raise ValueError("at least one of static_roles_on/dynamic_roles_on must be true")
        if self.roles_k < 0:
            raise ValueError("roles_k must be >= 0")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.backend not in ("mock", "live"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.embedder not in ("hashing", "remote"):
            raise ValueError(f"unknown embedder {self.embedder!r}")
        if self.reference_source not in ("file", "generate"):
            raise ValueError(f"unknown reference_source {self.reference_source!r}")
        if self.dump_prompts and not self.out_dir:
            raise ValueError("dump_prompts requires out_dir")

    @property
    def effective_cluster_seed(self) -> int:
        return self.seed if self.cluster_seed is None else self.cluster_seed

    def echo(self) -> dict:
        """Configuration as it entered the run, for report provenance."""
        return {
            "dataset": self.dataset,
            "schema": self.schema.value,
            "backend": self.backend,
            "mock_script": self.mock_script,
            "endpoint": self.endpoint,
            "model_id": self.model_id,
            "roles_profile": self.roles_profile,
            "registry_path": self.registry_path,
            "role_template_dir": self.role_template_dir,
            "roles_k": self.roles_k,
            "static_roles_on": self.static_roles_on,
            "dynamic_roles_on": self.dynamic_roles_on,
            "clustering_on": self.clustering_on,
            "batch_on": self.batch_on,
            "role_prompt_kind": self.role_prompt_kind.value,
            "roles_per_prompt": self.roles_per_prompt,
            "include_candidate_in_role_gen": self.include_candidate_in_role_gen,
            "seed": self.seed,
            "cluster_seed": self.effective_cluster_seed,
            "both_orders": self.both_orders,
            "repetitions": self.repetitions,
            "template": self.template,
            "template_variants": list(self.template_variants),
            "direct_baseline_on": self.direct_baseline_on,
            "max_tokens": self.max_tokens,
            "role_gen_max_tokens": self.role_gen_max_tokens,
            "reference_gen_max_tokens": self.reference_gen_max_tokens,
            "cache_dir": self.cache_dir,
            "embedder": self.embedder,
            "embed_endpoint": self.embed_endpoint,
            "embed_model": self.embed_model,
            "reference_source": self.reference_source,
            "max_in_flight": self.max_in_flight,
        }


def pearson_abs(x: list[float], y: list[float]) -> float:
    """Absolute Pearson correlation |rho| of two equal-length vectors."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 2:
        raise UndefinedCorrelationError("correlation needs at least two points")
    mean_x = sum(x) / n
    mean_y = sum(y) / n
    cov = sum((xi - mean_x) * (yi - mean_y) for xi, yi in zip(x, y))
    var_x = sum((xi - mean_x) ** 2 for xi in x)
    var_y = sum((yi - mean_y) ** 2 for yi in y)
    if var_x == 0.0 or var_y == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a constant vector")
    return min(abs(cov) / (math.sqrt(var_x) * math.sqrt(var_y)), 1.0)


@dataclass
class EvaluationReport:
    """Per-pair rows, metric-human correlations, and run diagnostics."""

    config: dict
    rows: list[dict]
    correlations: dict[str, float]
    diagnostics: dict
    runs: list[dict] | None = None

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "correlations": self.correlations,
            "rows": self.rows,
            "diagnostics": self.diagnostics,
        }
        if self.runs is not None:
            payload["runs"] = self.runs
        return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"

    def to_table(self) -> str:
        lines = ["metric correlations |rho|:"]
        for metric in METRIC_NAMES:
            if metric in self.correlations:
                lines.append(f"  {metric:<10} {self.correlations[metric]:.6f}")
        undefined = self.diagnostics.get("undefined_correlations", {})
        for metric, reason in undefined.items():
            lines.append(f"  {metric:<10} undefined ({reason})")
        lines.append("")
        header = f"{'record_id':<16} {'cand':>4} {'human':>8} " + " ".join(
            f"{m:>10}" for m in METRIC_NAMES
        )
        lines.append(header)
        for row in self.rows:
            cells = [f"{row['record_id']:<16}", f"{row['candidate_index']:>4}",
                     f"{row['human_score']:>8.4f}"]
            for metric in METRIC_NAMES:
                value = row.get(metric)
                cells.append(f"{value:>10.6f}" if value is not None else f"{'-':>10}")
            lines.append(" ".join(cells))
        diag = self.diagnostics
        lines.append("")
        lines.append(
            f"pairs: {diag['pairs_total']} total, {diag['pairs_scored']} scored, "
            f"{diag['pairs_excluded']} excluded"
        )
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        json_path = out / "report.json"
        table_path = out / "report.txt"
        json_path.write_text(self.to_json(), encoding="utf-8")
        table_path.write_text(self.to_table(), encoding="utf-8")
        return {"json": json_path, "table": table_path}


class _CountingBackend:
    """Counts logical completion calls and logprob-carrying tokens."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self.calls = 0
        self.tokens = 0
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        response = self.inner.complete(request)
        with self._lock:
            self.calls += 1
            self.tokens += len(response.tokens)
        return response


@dataclass
class _Diagnostics:
    pairs_total: int = 0
    pairs_scored: int = 0
    pairs_excluded: int = 0
    unparseable_verdicts: int = 0
    span_fallbacks: int = 0
    label_leak_roles_dropped: int = 0
    clustering_skipped_records: int = 0
    role_parse_skipped: int = 0
    record_failures: list = field(default_factory=list)
    pair_failures: list = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def bump(self, name: str, amount: int = 1) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + amount)

    def record_failure(self, entry: dict) -> None:
        with self._lock:
            self.record_failures.append(entry)

    def pair_failure(self, entry: dict) -> None:
        with self._lock:
            self.pair_failures.append(entry)


_PAIR_ERRORS = (
    FixtureMissError,
    TransportError,
    DecodeError,
    BatchParseError,
    ScoringError,
    RoleParseError,
)


def _build_backend(config: RunConfig) -> tuple[_CountingBackend, CachingBackend | None]:
    if config.backend == "mock":
        if not config.mock_script:
            raise ConfigurationError("mock backend requires mock_script")
        inner: Backend = MockBackend.from_file(config.mock_script)
    else:
        if not config.endpoint:
            raise ConfigurationError("live backend requires an endpoint")
        inner = LiveBackend(config.endpoint, api_key_env=config.api_key_env)
    caching: CachingBackend | None = None
    if config.cache_dir:
        caching = CachingBackend(inner, ResponseCache(config.cache_dir))
        inner = caching
    return _CountingBackend(inner), caching


def _build_embedder(config: RunConfig):
    if config.embedder == "hashing":
        return HashingEmbedder()
    if not config.embed_endpoint or not config.embed_model:
        raise ConfigurationError("remote embedder requires embed_endpoint and embed_model")
    return RemoteEmbedder(
        config.embed_endpoint, config.embed_model, api_key_env=config.api_key_env
    )


def resolve_template(name_or_path: str) -> PromptTemplate:
    """A builtin template name, or a path to a template file."""
    if name_or_path in BUILTIN_TEMPLATES:
        return PromptTemplate.builtin(name_or_path)
    if Path(name_or_path).exists():
        return PromptTemplate.from_file(name_or_path)
    raise ConfigurationError(f"template {name_or_path!r} is neither builtin nor a file")


def _template_text(filename: str) -> str:
    return resources.files("drpe").joinpath(f"templates/{filename}").read_text("utf-8")


def _select_candidates(record: EvalRecord, schema: DatasetSchema):
    if schema is DatasetSchema.PAIR_LABELED:
        return list(record.candidates)
    if schema is DatasetSchema.VOTE_ANNOTATED:
        return majority_filter(record)
    return summeval_select(record)


def _dump_prompt(config: RunConfig, name: str, prompt: str) -> None:
    if not config.dump_prompts:
        return
    prompts_dir = Path(config.out_dir) / "prompts"  # type: ignore[arg-type]
    prompts_dir.mkdir(parents=True, exist_ok=True)
    (prompts_dir / f"{name}.txt").write_text(prompt, encoding="utf-8")


class _RecordEvaluator:
    """Evaluates one dataset record: role assembly plus per-candidate scoring."""

    def __init__(
        self,
        config: RunConfig,
        backend: _CountingBackend,
        embedder,
        static: list[Role],
        template: PromptTemplate,
        diag: _Diagnostics,
        run_tag: str,
    ):
        self.config = config
        self.backend = backend
        self.embedder = embedder
        self.static = static
        self.template = template
        self.diag = diag
        self.run_tag = run_tag
        self.direct_template = _template_text("direct_compare.txt")
        self.reference_template = _template_text("reference_gen.txt")

    def _reference_for(self, record: EvalRecord) -> str:
        if self.config.reference_source == "file":
            return record.reference
        prompt = self.reference_template.format(article=record.article)
        _dump_prompt(self.config, f"{record.article_id}_refgen", prompt)
        request = CompletionRequest(
            prompt=prompt,
            max_tokens=self.config.reference_gen_max_tokens,
            temperature=0.0,
            want_logprobs=False,
            model_id=self.config.model_id,
        )
        text = self.backend.complete(request).text.strip()
        if not text:
            raise DecodeError(f"empty generated reference for {record.article_id!r}")
        return text

    def _dynamic_roles(self, record: EvalRecord, summary: str | None) -> list[Role]:
        config = self.config
        if not config.dynamic_roles_on or config.roles_k == 0:
            return []
        gen_config = RoleGenConfig(
            count_per_prompt=config.roles_per_prompt,
            prompt_kind=config.role_prompt_kind,
            include_candidate=config.include_candidate_in_role_gen,
        )
        parsed = generate_dynamic_roles(
            record.article,
            self.backend,
            gen_config,
            model_id=config.model_id,
            max_tokens=config.role_gen_max_tokens,
            summary=summary,
            template_dir=config.role_template_dir,
        )
        self.diag.bump("role_parse_skipped", parsed.skipped)
        dynamic, leaking = split_label_leaks(list(parsed.roles))
        if leaking:
            self.diag.bump("label_leak_roles_dropped", len(leaking))
        if not config.clustering_on:
            return dynamic
        if len(dynamic) <= config.roles_k:
            # Nothing to deduplicate; keep generation order.
            self.diag.bump("clustering_skipped_records")
            return dynamic
        vectors = [embed_role(role, self.embedder) for role in dynamic]
        return select_representatives(
            dynamic, vectors, config.roles_k, config.effective_cluster_seed
        )

    def _roles_for(self, record: EvalRecord, summary: str | None) -> list[Role]:
        dynamic = self._dynamic_roles(record, summary)
        merged = merge_roles(self.static, dynamic)
        if not merged:
            raise RoleParseError(f"no roles available for record {record.article_id!r}")
        return merged

    def _verdicts(self, task: ComparisonTask) -> list[RoleVerdict]:
        config = self.config
        if config.batch_on:
            prompt = build_batch_prompt(task, self.template)
            _dump_prompt(config, f"{task.task_id}_batch", prompt)
            request = CompletionRequest(
                prompt=prompt,
                max_tokens=config.max_tokens,
                temperature=0.0,
                want_logprobs=True,
                model_id=config.model_id,
            )
            response = self.backend.complete(request)
            return parse_batch_response(response, task)
        verdicts: list[RoleVerdict] = []
        for i, role in enumerate(task.roles, 1):
            sub_task = replace(task, roles=(role,), task_id=f"{task.task_id}.r{i}")
            prompt = build_batch_prompt(sub_task, self.template)
            _dump_prompt(config, f"{task.task_id}_single_{i}", prompt)
            request = CompletionRequest(
                prompt=prompt,
                max_tokens=config.max_tokens,
                temperature=0.0,
                want_logprobs=True,
                model_id=config.model_id,
            )
            response = self.backend.complete(request)
            verdicts.extend(parse_batch_response(response, sub_task))
        return verdicts

    def _score_pair(
        self, record: EvalRecord, candidate_summary: str, reference: str,
        roles: list[Role], pair_tag: str,
    ) -> tuple[PairScore, ...]:
        orders = [PresentationOrder.CANDIDATE_FIRST]
        if self.config.both_orders:
            orders.append(PresentationOrder.REFERENCE_FIRST)
        scores = []
        for order in orders:
            task = ComparisonTask(
                article=record.article,
                reference=reference,
                candidate=candidate_summary,
                roles=tuple(roles),
                presentation_order=order,
                task_id=f"{pair_tag}+{order.value}",
            )
            verdicts = self._verdicts(task)
            self.diag.bump(
                "unparseable_verdicts",
                sum(1 for v in verdicts if v.vote is Vote.UNPARSEABLE),
            )
            self.diag.bump(
                "span_fallbacks", sum(1 for v in verdicts if v.span_fallback)
            )
            scores.append(drpe_score(verdicts, task.task_id))
        return tuple(scores)

    def _direct_vote(self, record: EvalRecord, candidate_summary: str, reference: str,
                     pair_tag: str) -> float | None:
        config = self.config
        orders = [PresentationOrder.CANDIDATE_FIRST]
        if config.both_orders:
            orders.append(PresentationOrder.REFERENCE_FIRST)
        values = []
        for order in orders:
            if order is PresentationOrder.CANDIDATE_FIRST:
                summary_1, summary_2 = candidate_summary, reference
                candidate_label = "1"
            else:
                summary_1, summary_2 = reference, candidate_summary
                candidate_label = "2"
            prompt = self.direct_template.format(
                article=record.article, summary_1=summary_1, summary_2=summary_2
            )
            _dump_prompt(config, f"{pair_tag}_direct_{order.value}", prompt)
            request = CompletionRequest(
                prompt=prompt,
                max_tokens=config.direct_max_tokens,
                temperature=0.0,
                want_logprobs=False,
                model_id=config.model_id,
            )
            try:
                response = self.backend.complete(request)
            except _PAIR_ERRORS as exc:
                self.diag.pair_failure(
                    {"pair": pair_tag, "metric": "direct", "error": str(exc)}
                )
                return None
            match = _VOTE_RE.search(response.text)
            if match is None:
                self.diag.pair_failure(
                    {"pair": pair_tag, "metric": "direct", "error": "no vote line"}
                )
                return None
            values.append(1.0 if match.group(1) == candidate_label else 0.0)
        return sum(values) / len(values)

    def evaluate(self, record: EvalRecord) -> list[dict]:
        config = self.config
        rows: list[dict] = []
        try:
            candidates = _select_candidates(record, config.schema)
        except (FilterError, SelectionError) as exc:
            logger.warning("record %s skipped: %s", record.article_id, exc)
            self.diag.record_failure({"record_id": record.article_id, "error": str(exc)})
            return rows
        if not candidates:
            self.diag.record_failure(
                {"record_id": record.article_id, "error": "no labeled candidates"}
            )
            return rows

        try:
            reference = self._reference_for(record)
        except _PAIR_ERRORS as exc:
            self.diag.record_failure({"record_id": record.article_id, "error": str(exc)})
            reference = ""

        shared_roles: list[Role] | None = None
        roles_error: str | None = None
        if reference and not config.include_candidate_in_role_gen:
            try:
                shared_roles = self._roles_for(record, summary=None)
            except _PAIR_ERRORS as exc:
                roles_error = str(exc)
                self.diag.record_failure(
                    {"record_id": record.article_id, "error": roles_error}
                )

        reference_tokens = tokenize(reference) if reference else []
        for index, candidate in enumerate(candidates):
            pair_tag = f"{record.article_id}#{index}{self.run_tag}"
            self.diag.bump("pairs_total")
            row: dict = {
                "record_id": record.article_id,
                "candidate_index": index,
                "human_score": human_score(candidate, config.schema),
            }
            candidate_tokens = tokenize(candidate.summary)
            for name, fn in (
                ("rouge1", lambda c, r: rouge_n(c, r, 1)),
                ("rouge2", lambda c, r: rouge_n(c, r, 2)),
                ("rougeL", rouge_l),
                ("bleu", sent_bleu),
            ):
                try:
                    if not reference_tokens:
                        raise UndefinedMetricError("no reference text")
                    row[name] = fn(candidate_tokens, reference_tokens)
                except UndefinedMetricError as exc:
                    row[name] = None
                    self.diag.pair_failure(
                        {"pair": pair_tag, "metric": name, "error": str(exc)}
                    )

            drpe_fields = {"drpe": None, "drpe_raw": None, "n_roles": None,
                           "unparseable": 0, "per_role": None}
            if not reference:
                self.diag.bump("pairs_excluded")
            else:
                try:
                    roles = shared_roles
                    if roles is None:
                        if roles_error is not None and not config.include_candidate_in_role_gen:
                            raise RoleParseError(roles_error)
                        roles = self._roles_for(record, summary=candidate.summary)
                    pair_scores = self._score_pair(
                        record, candidate.summary, reference, roles, pair_tag
                    )
                    raw = math.fsum(s.raw_score for s in pair_scores) / len(pair_scores)
                    normalized = math.fsum(
                        s.normalized_score for s in pair_scores
                    ) / len(pair_scores)
                    first = pair_scores[0]
                    drpe_fields = {
                        "drpe": normalized,
                        "drpe_raw": raw,
                        "n_roles": first.n_roles,
                        "unparseable": sum(
                            1 for c in first.per_role if c.vote is Vote.UNPARSEABLE
                        ),
                        "per_role": [
                            {
                                "role": c.role_name,
                                "vote": c.vote.value,
                                "contribution": c.contribution,
                            }
                            for c in first.per_role
                        ],
                    }
                    self.diag.bump("pairs_scored")
                except _PAIR_ERRORS as exc:
                    self.diag.bump("pairs_excluded")
                    self.diag.pair_failure(
                        {"pair": pair_tag, "metric": "drpe", "error": str(exc)}
                    )

            row.update(drpe_fields)
            if config.direct_baseline_on and reference:
                row["direct"] = self._direct_vote(
                    record, candidate.summary, reference, pair_tag
                )
            else:
                row["direct"] = None
            rows.append(row)
        return rows


def _correlations(rows: list[dict]) -> tuple[dict[str, float], dict[str, str]]:
    correlations: dict[str, float] = {}
    undefined: dict[str, str] = {}
    for metric in METRIC_NAMES:
        points = [
            (row[metric], row["human_score"]) for row in rows if row.get(metric) is not None
        ]
        if len(points) < 2:
            undefined[metric] = "fewer than two scored pairs"
            continue
        try:
            correlations[metric] = pearson_abs(
                [p[0] for p in points], [p[1] for p in points]
            )
        except UndefinedCorrelationError as exc:
            undefined[metric] = str(exc)
    return correlations, undefined


def _run_once(
    config: RunConfig,
    records: list[EvalRecord],
    static: list[Role],
    backend: _CountingBackend,
    embedder,
    template: PromptTemplate,
    diag: _Diagnostics,
    run_tag: str,
) -> list[dict]:
    evaluator = _RecordEvaluator(config, backend, embedder, static, template, diag, run_tag)
    with ThreadPoolExecutor(max_workers=max(1, config.max_in_flight)) as pool:
        per_record = list(pool.map(evaluator.evaluate, records))
    rows: list[dict] = []
    for record_rows in per_record:
        rows.extend(record_rows)
    return rows


def run_evaluation(config: RunConfig) -> EvaluationReport:
    """Evaluate every (record, candidate) pair and correlate metrics with humans.

    Aborts only on configuration problems (dataset, backend, templates);
    individual pair failures become diagnostics.
    """
    backend, caching = _build_backend(config)
    embedder = _build_embedder(config)
    records = load_dataset(
        config.dataset,
        config.schema,
        require_reference=config.reference_source == "file",
    )
    static = (
        static_roles(config.roles_profile, config.registry_path)
        if config.static_roles_on
        else []
    )
    variants = config.template_variants or (config.template,)

    runs: list[dict] = []
    first_rows: list[dict] | None = None
    first_diag: _Diagnostics | None = None
    all_record_failures: list[dict] = []
    all_pair_failures: list[dict] = []
    for run_index in range(config.repetitions):
        if config.repetitions == 1:
            template = resolve_template(config.template)
            run_tag = ""
        else:
            template = resolve_template(variants[run_index % len(variants)])
            run_tag = f"@run{run_index}"
        diag = _Diagnostics()
        rows = _run_once(config, records, static, backend, embedder, template, diag, run_tag)
        correlations, undefined = _correlations(rows)
        runs.append(
            {
                "run": run_index,
                "template": template.name,
                "correlations": correlations,
                "undefined_correlations": undefined,
            }
        )
        # Workers append failures in completion order; sort for stable reports.
        all_record_failures.extend(
            sorted(diag.record_failures, key=lambda e: (e["record_id"], e["error"]))
        )
        all_pair_failures.extend(
            sorted(
                diag.pair_failures,
                key=lambda e: (e["pair"], e.get("metric", ""), e["error"]),
            )
        )
        if first_rows is None:
            first_rows = rows
            first_diag = diag

    assert first_rows is not None and first_diag is not None
    if config.repetitions == 1:
        correlations = runs[0]["correlations"]
        undefined = runs[0]["undefined_correlations"]
        runs_payload = None
    else:
        # Mean |rho| across runs; a metric undefined in any run stays undefined.
        correlations = {}
        undefined = {}
        for metric in METRIC_NAMES:
            values = [r["correlations"].get(metric) for r in runs]
            if all(v is not None for v in values):
                correlations[metric] = math.fsum(values) / len(values)
            else:
                reasons = {r["undefined_correlations"].get(metric, "") for r in runs}
                undefined[metric] = "; ".join(sorted(x for x in reasons if x))
        runs_payload = runs

    # Pair accounting mirrors the reported rows (first run); backend counters
    # are totals across all repetitions.
    diagnostics = {
        "pairs_total": first_diag.pairs_total,
        "pairs_scored": first_diag.pairs_scored,
        "pairs_excluded": first_diag.pairs_excluded,
        "unparseable_verdicts": first_diag.unparseable_verdicts,
        "span_fallbacks": first_diag.span_fallbacks,
        "label_leak_roles_dropped": first_diag.label_leak_roles_dropped,
        "clustering_skipped_records": first_diag.clustering_skipped_records,
        "role_parse_skipped": first_diag.role_parse_skipped,
        "record_failures": all_record_failures,
        "pair_failures": all_pair_failures,
        "backend_calls": backend.calls - (caching.hits if caching else 0),
        "requests_issued": backend.calls,
        "cache_hits": caching.hits if caching else 0,
        "completion_tokens": backend.tokens,
        "undefined_correlations": undefined,
    }
    report = EvaluationReport(
        config=config.echo(),
        rows=first_rows,
        correlations=correlations,
        diagnostics=diagnostics,
        runs=runs_payload,
    )
    if config.out_dir:
        report.write(config.out_dir)
    return report


def sweep(config: RunConfig, axis: str, values: list) -> list[EvaluationReport]:
    """One full evaluation per value of a single config axis."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r} (have {SWEEP_AXES})")
    if not values:
        raise ValueError("sweep needs at least one value")
    reports = []
    for value in values:
        run_config = replace(config, **{axis: value}, out_dir=None, dump_prompts=False)
        reports.append(run_evaluation(run_config))
    return reports


def sweep_rows(axis: str, values: list, reports: list[EvaluationReport]) -> list[dict]:
    """Plot-ready (value, correlations) rows for a sweep."""
    return [
        {"axis": axis, "value": value, "correlations": report.correlations}
        for value, report in zip(values, reports)
    ]


def sweep_table(axis: str, values: list, reports: list[EvaluationReport]) -> str:
    lines = [f"sweep over {axis}:"]
    header = f"{'value':>8} " + " ".join(f"{m:>10}" for m in METRIC_NAMES)
    lines.append(header)
    for value, report in zip(values, reports):
        cells = [f"{str(value):>8}"]
        for metric in METRIC_NAMES:
            corr = report.correlations.get(metric)
            cells.append(f"{corr:>10.6f}" if corr is not None else f"{'-':>10}")
        lines.append(" ".join(cells))
    return "\n".join(lines) + "\n"
