"""Evaluation datasets: loading, validation, and candidate-selection rules.

Three line-delimited JSON schemas are supported. ``pair_labeled`` records
carry best/worst labels directly; ``vote_annotated`` records carry per-
candidate annotator votes that a two-thirds majority turns into labels;
``summeval_style`` records carry four expert dimension scores per candidate,
from which the two best and two worst are selected by mean score.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Mapping

from .errors import FilterError, IntegrityError, SchemaError, SelectionError

EXPERT_DIMENSIONS = ("coherence", "consistency", "fluency", "relevance")


class DatasetSchema(str, Enum):
    PAIR_LABELED = "pair_labeled"
    SUMMEVAL_STYLE = "summeval_style"
    VOTE_ANNOTATED = "vote_annotated"


class HumanLabel(str, Enum):
    BEST = "best"
    WORST = "worst"


class AnnotatorVote(str, Enum):
    BEST = "best"
    WORST = "worst"
    NEITHER = "neither"


@dataclass(frozen=True)
class Candidate:
    """One candidate summary with whatever human signal the dataset provides."""

    summary: str
    human_label: HumanLabel | None = None
    expert_scores: Mapping[str, float] | None = None
    annotator_votes: tuple[AnnotatorVote, ...] | None = None

    def __post_init__(self) -> None:
        if not self.summary:
            raise ValueError("candidate summary must be non-empty")
        if (
            self.human_label is None
            and self.expert_scores is None
            and self.annotator_votes is None
        ):
            raise ValueError(
                "candidate needs at least one of human_label, expert_scores, "
                "annotator_votes"
            )
        if self.expert_scores is not None:
            missing = [d for d in EXPERT_DIMENSIONS if d not in self.expert_scores]
            if missing:
                raise ValueError(f"expert_scores missing dimensions: {missing}")

    @property
    def mean_expert_score(self) -> float:
        if self.expert_scores is None:
            raise ValueError("candidate has no expert scores")
        return sum(self.expert_scores[d] for d in EXPERT_DIMENSIONS) / len(
            EXPERT_DIMENSIONS
        )


@dataclass(frozen=True)
class EvalRecord:
    """One article with its reference summary and candidate summaries."""

    article_id: str
    article: str
    reference: str
    candidates: tuple[Candidate, ...]

    def __post_init__(self) -> None:
        if len(self.candidates) < 1:
            raise ValueError("record needs at least one candidate")


def _require(record: dict, field: str, line: int):
    if field not in record:
        raise SchemaError("record missing required field", field=field, line=line)
    return record[field]


def _parse_candidate(raw: dict, schema: DatasetSchema, line: int) -> Candidate:
    if not isinstance(raw, dict):
        raise SchemaError("candidate must be an object", field="candidates", line=line)
    summary = _require(raw, "summary", line)
    try:
        if schema is DatasetSchema.PAIR_LABELED:
            label = _require(raw, "human_label", line)
            return Candidate(summary=summary, human_label=HumanLabel(label))
        if schema is DatasetSchema.SUMMEVAL_STYLE:
            scores = _require(raw, "expert_scores", line)
            return Candidate(
                summary=summary,
                expert_scores={str(k): float(v) for k, v in scores.items()},
            )
        votes = _require(raw, "annotator_votes", line)
        return Candidate(
            summary=summary,
            annotator_votes=tuple(AnnotatorVote(v) for v in votes),
        )
    except (ValueError, TypeError, AttributeError) as exc:
        raise SchemaError(f"invalid candidate: {exc}", line=line) from None


def load_dataset(
    path: str | Path,
    schema: DatasetSchema,
    *,
    require_reference: bool = True,
) -> list[EvalRecord]:
    """Load and validate a line-delimited dataset file.

    ``require_reference`` is relaxed only when the run will generate
    reference summaries itself.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"dataset file not found: {path}")
    records: list[EvalRecord] = []
    seen_ids: set[str] = set()
    for line_number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc.msg}", line=line_number) from None
        article_id = str(_require(raw, "article_id", line_number))
        article = _require(raw, "article", line_number)
        if require_reference:
            reference = _require(raw, "reference", line_number)
        else:
            reference = raw.get("reference", "")
        raw_candidates = _require(raw, "candidates", line_number)
        if not isinstance(raw_candidates, list) or not raw_candidates:
            raise SchemaError(
                "candidates must be a non-empty list", field="candidates", line=line_number
            )
        if article_id in seen_ids:
            raise IntegrityError(
                f"duplicate article_id {article_id!r} at line {line_number}"
            )
        seen_ids.add(article_id)
        candidates = tuple(
            _parse_candidate(c, schema, line_number) for c in raw_candidates
        )
        try:
            records.append(
                EvalRecord(
                    article_id=article_id,
                    article=article,
                    reference=reference,
                    candidates=candidates,
                )
            )
        except ValueError as exc:
            raise SchemaError(str(exc), line=line_number) from None
    return records


def record_to_dict(record: EvalRecord) -> dict:
    """Canonical dict form of a record; inverse of loading."""
    candidates = []
    for c in record.candidates:
        entry: dict = {"summary": c.summary}
        if c.human_label is not None:
            entry["human_label"] = c.human_label.value
        if c.expert_scores is not None:
            entry["expert_scores"] = {d: c.expert_scores[d] for d in EXPERT_DIMENSIONS}
        if c.annotator_votes is not None:
            entry["annotator_votes"] = [v.value for v in c.annotator_votes]
        candidates.append(entry)
    return {
        "article_id": record.article_id,
        "article": record.article,
        "reference": record.reference,
        "candidates": candidates,
    }


def majority_filter(record: EvalRecord) -> list[Candidate]:
    """Label candidates whose annotators reach a two-thirds majority.

    A candidate is kept as best (or worst) when at least two thirds of its
    annotators vote that way; candidates with no such majority are dropped.
    Every candidate must carry at least three votes.
    """
    labeled: list[Candidate] = []
    for candidate in record.candidates:
        votes = candidate.annotator_votes
        if votes is None or len(votes) < 3:
            raise FilterError(
                f"record {record.article_id!r}: every candidate needs >= 3 annotator votes"
            )
        n = len(votes)
        best_votes = sum(1 for v in votes if v is AnnotatorVote.BEST)
        worst_votes = sum(1 for v in votes if v is AnnotatorVote.WORST)
        if 3 * best_votes >= 2 * n:
            labeled.append(replace(candidate, human_label=HumanLabel.BEST))
        elif 3 * worst_votes >= 2 * n:
            labeled.append(replace(candidate, human_label=HumanLabel.WORST))
    return labeled


def summeval_select(record: EvalRecord) -> list[Candidate]:
    """Pick the two best and two worst candidates by mean expert score.

    Returns exactly four labeled candidates: the best pair in descending
    score order followed by the worst pair in ascending order. Ties break
    toward the original candidate order.
    """
    scored = [
        (i, c) for i, c in enumerate(record.candidates) if c.expert_scores is not None
    ]
    if len(scored) < 4:
        raise SelectionError(
            f"record {record.article_id!r}: needs >= 4 candidates with expert scores, "
            f"found {len(scored)}"
        )
    means = {i: c.mean_expert_score for i, c in scored}
    by_best = sorted((i for i, _ in scored), key=lambda i: (-means[i], i))
    best = by_best[:2]
    by_worst = sorted((i for i, _ in scored), key=lambda i: (means[i], i))
    worst = [i for i in by_worst if i not in best][:2]
    chosen = [
        replace(record.candidates[i], human_label=HumanLabel.BEST) for i in best
    ] + [replace(record.candidates[i], human_label=HumanLabel.WORST) for i in worst]
    return chosen


def human_score(candidate: Candidate, schema: DatasetSchema) -> float:
    """Human signal as a scalar: best=1, worst=0, or the mean expert score."""
    if schema is DatasetSchema.SUMMEVAL_STYLE:
        return candidate.mean_expert_score
    if candidate.human_label is HumanLabel.BEST:
        return 1.0
    if candidate.human_label is HumanLabel.WORST:
        return 0.0
    raise ValueError("candidate has no human label")
