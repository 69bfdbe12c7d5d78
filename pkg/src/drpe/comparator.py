"""Pairwise comparison prompts and their parsed, confidence-scored verdicts.

One comparison presents an article with two summaries (candidate and
reference, order configurable) to every role in a single batched completion.
The response is parsed back into one verdict per role, and each verdict's
confidence is the geometric mean of the token probabilities over that
role's reason-plus-vote segment.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from .backend import CompletionResponse
from .errors import BatchParseError, DecodeError, TemplateError
from .roles import Role

logger = logging.getLogger(__name__)

PLACEHOLDERS = ("{article}", "{summary_1}", "{summary_2}", "{roles_block}")
BUILTIN_TEMPLATES = ("default", "variant_a", "variant_b")


class PresentationOrder(str, Enum):
    CANDIDATE_FIRST = "candidate_first"
    REFERENCE_FIRST = "reference_first"


class Vote(str, Enum):
    CANDIDATE = "candidate"
    REFERENCE = "reference"
    UNPARSEABLE = "unparseable"


@dataclass(frozen=True)
class ComparisonTask:
    """One article with its reference and candidate summaries plus the judges."""

    article: str
    reference: str
    candidate: str
    roles: tuple[Role, ...]
    presentation_order: PresentationOrder = PresentationOrder.CANDIDATE_FIRST
    task_id: str = ""

    def __post_init__(self) -> None:
        if not self.article or not self.reference or not self.candidate:
            raise ValueError("article, reference, and candidate must be non-empty")
        if len(self.roles) < 1:
            raise ValueError("a comparison task needs at least one role")


@dataclass(frozen=True)
class PromptTemplate:
    """A comparison prompt body with each placeholder present exactly once."""

    name: str
    body: str

    def __post_init__(self) -> None:
        for placeholder in PLACEHOLDERS:
            count = self.body.count(placeholder)
            if count != 1:
                raise TemplateError(
                    f"template {self.name!r} must contain {placeholder} exactly once "
                    f"(found {count})"
                )

    @classmethod
    def builtin(cls, name: str) -> "PromptTemplate":
        if name not in BUILTIN_TEMPLATES:
            raise TemplateError(
                f"unknown builtin template {name!r} (have {BUILTIN_TEMPLATES})"
            )
        body = resources.files("drpe").joinpath(f"templates/compare_{name}.txt").read_text("utf-8")
        return cls(name=name, body=body)

    @classmethod
    def from_file(cls, path: str | Path) -> "PromptTemplate":
        path = Path(path)
        if not path.exists():
            raise TemplateError(f"template file not found: {path}")
        return cls(name=path.stem, body=path.read_text(encoding="utf-8"))


@dataclass(frozen=True)
class RoleVerdict:
    """One role's parsed vote, reason, and generation confidence.

    ``token_span`` indexes into the response's token list and covers the
    reason-plus-vote segment. ``span_fallback`` marks verdicts whose tokens
    could not be aligned to the text, where the confidence degrades to the
    whole-response mean.
    """

    role: Role
    vote: Vote
    reason: str
    confidence: float | None
    token_span: tuple[int, int] | None
    span_fallback: bool = False

    def __post_init__(self) -> None:
        if self.vote is Vote.UNPARSEABLE:
            if self.confidence is not None:
                raise ValueError("unparseable verdicts carry no confidence")
        else:
            if self.confidence is None or not (0.0 < self.confidence <= 1.0):
                raise ValueError(f"confidence must be in (0, 1], got {self.confidence}")


def roles_block(roles: tuple[Role, ...] | list[Role]) -> str:
    lines = []
    for i, role in enumerate(roles, 1):
        lines.append(f"Role {i}: {role.name}")
        lines.append(role.description)
    return "\n".join(lines) + "\n"


def ordered_summaries(task: ComparisonTask) -> tuple[str, str]:
    """(summary_1, summary_2) texts under the task's presentation order."""
    if task.presentation_order is PresentationOrder.CANDIDATE_FIRST:
        return task.candidate, task.reference
    return task.reference, task.candidate


def build_batch_prompt(task: ComparisonTask, template: PromptTemplate) -> str:
    """Render the batched comparison prompt, one numbered block per role."""
    summary_1, summary_2 = ordered_summaries(task)
    return template.body.format(
        article=task.article,
        summary_1=summary_1,
        summary_2=summary_2,
        roles_block=roles_block(task.roles),
    )


def confidence(tokens: tuple[tuple[str, float], ...], span: tuple[int, int]) -> float:
    """exp of the mean logprob over the span: the geometric mean probability."""
    start, end = span
    if not (0 <= start < end <= len(tokens)):
        raise ValueError(f"span {span} empty or out of bounds for {len(tokens)} tokens")
    logprobs = [lp for _, lp in tokens[start:end]]
    return math.exp(sum(logprobs) / len(logprobs))


def _token_offsets(response: CompletionResponse) -> list[tuple[int, int]] | None:
    """Character offsets of each token, or None when alignment fails."""
    if not response.tokens_match_text:
        return None
    offsets = []
    pos = 0
    for tok, _ in response.tokens:
        offsets.append((pos, pos + len(tok)))
        pos += len(tok)
    return offsets


def _span_tokens(
    offsets: list[tuple[int, int]], char_start: int, char_end: int
) -> tuple[int, int] | None:
    indices = [
        i
        for i, (a, b) in enumerate(offsets)
        if a < char_end and b > char_start and b > a
    ]
    if not indices:
        return None
    return indices[0], indices[-1] + 1


_SEGMENT_RE = re.compile(r"^[ \t]*Role\s*(\d+)\s*[:.\-]?", re.IGNORECASE | re.MULTILINE)
_REASON_RE = re.compile(r"Reason\s*:\s*(.*?)\s*(?=\n[ \t]*Vote\s*:|$)", re.IGNORECASE | re.DOTALL)
_VOTE_RE = re.compile(r"Vote\s*:\s*Summary\s*([12])", re.IGNORECASE)


def parse_batch_response(
    response: CompletionResponse, task: ComparisonTask
) -> list[RoleVerdict]:
    """Parse one verdict per task role out of a batched completion.

    Role segments are located by their "Role <i>" headers; votes for
    "Summary 1"/"Summary 2" are mapped back through the presentation order.
    Roles with no recognizable segment or vote line become UNPARSEABLE
    verdicts. A response with no recognizable segment at all is a parse
    error.
    """
    if not response.text:
        raise BatchParseError("empty comparison response")
    text = response.text
    headers = list(_SEGMENT_RE.finditer(text))
    if not headers:
        raise BatchParseError(
            "no role segments recognized in comparison response", raw_text=text
        )

    # First segment per role number wins; segment spans run to the next header.
    segments: dict[int, tuple[int, int]] = {}
    for pos, match in enumerate(headers):
        number = int(match.group(1))
        seg_start = match.start()
        seg_end = headers[pos + 1].start() if pos + 1 < len(headers) else len(text)
        segments.setdefault(number, (seg_start, seg_end))

    candidate_label = (
        "1" if task.presentation_order is PresentationOrder.CANDIDATE_FIRST else "2"
    )
    offsets = _token_offsets(response)

    verdicts: list[RoleVerdict] = []
    for i, role in enumerate(task.roles, 1):
        span = segments.get(i)
        if span is None:
            verdicts.append(
                RoleVerdict(role=role, vote=Vote.UNPARSEABLE, reason="",
                            confidence=None, token_span=None)
            )
            continue
        segment = text[span[0] : span[1]]
        vote_match = _VOTE_RE.search(segment)
        if vote_match is None:
            verdicts.append(
                RoleVerdict(role=role, vote=Vote.UNPARSEABLE, reason="",
                            confidence=None, token_span=None)
            )
            continue
        reason_match = _REASON_RE.search(segment)
        reason = reason_match.group(1).strip() if reason_match else ""
        vote = (
            Vote.CANDIDATE if vote_match.group(1) == candidate_label else Vote.REFERENCE
        )

        # Reason+vote segment, robust to the model emitting Vote before Reason.
        if reason_match is not None:
            char_start = span[0] + min(reason_match.start(), vote_match.start())
            char_end = span[0] + max(reason_match.end(), vote_match.end())
        else:
            char_start = span[0] + vote_match.start()
            char_end = span[0] + vote_match.end()

        if not response.tokens:
            raise DecodeError(
                "comparison response carries no token logprobs; confidence undefined"
            )
        token_span = _span_tokens(offsets, char_start, char_end) if offsets else None
        if token_span is None:
            token_span = (0, len(response.tokens))
            fallback = True
            logger.warning(
                "token alignment failed for role %d (%s); using whole-response span",
                i, role.name,
            )
        else:
            fallback = False
        verdicts.append(
            RoleVerdict(
                role=role,
                vote=vote,
                reason=reason,
                confidence=confidence(response.tokens, token_span),
                token_span=token_span,
                span_fallback=fallback,
            )
        )
    return verdicts
