"""Judge personas: the static objective registry and LLM-generated reader roles.

Static roles are curated once per task profile and cover objective quality
dimensions. Dynamic roles are reader personas generated per article by the
LLM, either occupation-based (coarse) or topic-familiarity-based (fine),
then parsed back out of the model's text.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from .backend import Backend, CompletionRequest
from .errors import ConfigurationError, RoleParseError

logger = logging.getLogger(__name__)

DEFAULT_PROFILE = "summarization"

# Lowercased markers that would leak the comparison labels into a persona.
_LABEL_MARKERS = ("summary 1", "summary 2")


class RoleKind(str, Enum):
    OBJECTIVE = "objective"
    SUBJECTIVE = "subjective"


class RoleOrigin(str, Enum):
    STATIC = "static"
    DYNAMIC_COARSE = "dynamic_coarse"
    DYNAMIC_FINE = "dynamic_fine"


class PromptKind(str, Enum):
    COARSE = "coarse"
    FINE = "fine"
    BOTH = "both"


@dataclass(frozen=True)
class Role:
    """A judge persona the LLM impersonates when voting between summaries."""

    name: str
    description: str
    kind: RoleKind
    origin: RoleOrigin

    def __post_init__(self) -> None:
        if not self.name or not self.description:
            raise ValueError("role name and description must be non-empty")
        if self.origin is RoleOrigin.STATIC and self.kind is not RoleKind.OBJECTIVE:
            raise ValueError("static roles must be objective")
        if self.origin is not RoleOrigin.STATIC and self.kind is not RoleKind.SUBJECTIVE:
            raise ValueError("dynamically generated roles must be subjective")


@dataclass(frozen=True)
class RoleGenConfig:
    """How many personas to request per prompt and which prompt kinds to use."""

    count_per_prompt: int = 4
    prompt_kind: PromptKind = PromptKind.BOTH
    include_candidate: bool = False

    def __post_init__(self) -> None:
        if self.count_per_prompt < 1:
            raise ValueError("count_per_prompt must be >= 1")


@dataclass(frozen=True)
class ParsedRoles:
    """Parse result: extracted roles plus a count of malformed entries skipped."""

    roles: tuple[Role, ...]
    skipped: int = 0


def _default_registry_text() -> str:
    return resources.files("drpe").joinpath("data/static_roles.jsonl").read_text("utf-8")


def static_roles(task_profile: str, registry_path: str | Path | None = None) -> list[Role]:
    """Load the configured objective roles for a task profile.

    The registry is a JSONL file of {profile, name, description} records;
    by default the packaged registry ships a three-role summarization profile.
    """
    if registry_path is not None:
        path = Path(registry_path)
        if not path.exists():
            raise ConfigurationError(f"role registry not found: {path}")
        text = path.read_text(encoding="utf-8")
    else:
        text = _default_registry_text()

    known_profiles = set()
    roles = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            profile = record["profile"]
            name = record["name"]
            description = record["description"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigurationError(f"role registry line {lineno} invalid: {exc}") from exc
        known_profiles.add(profile)
        if profile == task_profile:
            roles.append(
                Role(
                    name=name,
                    description=description,
                    kind=RoleKind.OBJECTIVE,
                    origin=RoleOrigin.STATIC,
                )
            )
    if not roles:
        raise ConfigurationError(
            f"no roles registered for profile {task_profile!r} "
            f"(known profiles: {sorted(known_profiles)})"
        )
    return roles


def load_role_prompt_template(kind: PromptKind, template_dir: str | Path | None = None) -> str:
    """Fetch the role-generation template body for a concrete prompt kind."""
    if kind is PromptKind.BOTH:
        raise ValueError("load a concrete prompt kind, not BOTH")
    filename = f"role_gen_{kind.value}.txt"
    if template_dir is not None:
        path = Path(template_dir) / filename
        if not path.exists():
            raise ConfigurationError(f"role prompt template not found: {path}")
        return path.read_text(encoding="utf-8")
    return resources.files("drpe").joinpath(f"templates/{filename}").read_text("utf-8")


def build_role_prompt(
    article: str,
    config: RoleGenConfig,
    kind: PromptKind,
    summary: str | None = None,
    template_dir: str | Path | None = None,
) -> str:
    """Render the reader-generation prompt for one prompt kind.

    The coarse prompt asks for occupation-based reader groups; the fine
    prompt asks for tiers of familiarity with the article's topics. Both
    instruct the model to emit exactly ``count_per_prompt`` entries.
    """
    if not article:
        raise ValueError("article must be non-empty")
    if kind is PromptKind.BOTH:
        raise ValueError("build one prompt kind at a time")
    template = load_role_prompt_template(kind, template_dir)
    prompt = template.format(article=article, count=config.count_per_prompt)
    if config.include_candidate and summary:
        prompt += (
            "\nFor additional context, one machine-written summary of the article:\n"
            f"{summary}\n"
        )
    return prompt


_ANGLE_RE = re.compile(r"<\s*([^,<>]+?)\s*,\s*([^<>]+?)\s*>")
_TYPE_RE = re.compile(
    r"^\s*(?:\d+\s*[.)]\s*)?(?:user|judger|reader)?\s*type\s*:\s*(.*)$", re.IGNORECASE
)
_DESC_RE = re.compile(
    r"^\s*(?:\d+\s*[.)]\s*)?(?:user|judger|reader)?\s*description\s*:\s*(.*)$", re.IGNORECASE
)
_INLINE_DESC_RE = re.compile(
    r"[,;]?\s*(?:user|judger|reader)?\s*description\s*:\s*(.*)$", re.IGNORECASE
)


def parse_roles(llm_text: str, origin: RoleOrigin) -> ParsedRoles:
    """Extract (type, description) personas from role-generation output.

    Accepts both the labeled two-line form ("User type: ... / User
    description: ...", optionally numbered or combined on one line) and the
    angle-bracket form ("<type, description>"). Output order is preserved.
    Entries with a type but no description are skipped and counted.
    """
    if origin is RoleOrigin.STATIC:
        raise ValueError("parse_roles only produces dynamic subjective roles")
    roles: list[Role] = []
    skipped = 0
    pending_name: str | None = None

    def emit(name: str, description: str) -> None:
        name = name.strip()
        description = description.strip()
        if name and description:
            roles.append(
                Role(
                    name=name,
                    description=description,
                    kind=RoleKind.SUBJECTIVE,
                    origin=origin,
                )
            )

    for line in llm_text.splitlines():
        angle = _ANGLE_RE.search(line)
        if angle:
            if pending_name is not None:
                skipped += 1
                pending_name = None
            emit(angle.group(1), angle.group(2))
            continue
        type_match = _TYPE_RE.match(line)
        if type_match:
            if pending_name is not None:
                skipped += 1
            rest = type_match.group(1)
            inline = _INLINE_DESC_RE.search(rest)
            if inline:
                emit(rest[: inline.start()], inline.group(1))
                pending_name = None
            else:
                pending_name = rest.strip()
            continue
        desc_match = _DESC_RE.match(line)
        if desc_match and pending_name is not None:
            emit(pending_name, desc_match.group(1))
            pending_name = None
    if pending_name is not None:
        skipped += 1

    if not roles:
        raise RoleParseError("no roles could be parsed from model output", raw_text=llm_text)
    return ParsedRoles(roles=tuple(roles), skipped=skipped)


def render_roles(roles: list[Role]) -> str:
    """Render roles in the numbered labeled form that parse_roles accepts."""
    lines = []
    for i, role in enumerate(roles, 1):
        lines.append(f"{i}. User type: {role.name}")
        lines.append(f"User description: {role.description}")
    return "\n".join(lines) + "\n"


def merge_roles(static: list[Role], dynamic: list[Role]) -> list[Role]:
    """Concatenate static roles before dynamic ones, dropping exact duplicates.

    Duplicates are (name, description) pairs; the first occurrence wins.
    """
    merged: list[Role] = []
    seen: set[tuple[str, str]] = set()
    for role in list(static) + list(dynamic):
        key = (role.name, role.description)
        if key in seen:
            continue
        seen.add(key)
        merged.append(role)
    return merged


def split_label_leaks(roles: list[Role]) -> tuple[list[Role], list[Role]]:
    """Partition roles into (clean, leaking) by a lexical scan.

    A persona whose name or description mentions the comparison labels could
    bias later votes, so the harness drops such roles with a diagnostic.
    """
    clean, leaking = [], []
    for role in roles:
        text = f"{role.name} {role.description}".lower()
        if any(marker in text for marker in _LABEL_MARKERS):
            leaking.append(role)
        else:
            clean.append(role)
    return clean, leaking


def generate_dynamic_roles(
    article: str,
    backend: Backend,
    config: RoleGenConfig,
    *,
    model_id: str = "default",
    max_tokens: int = 512,
    summary: str | None = None,
    template_dir: str | Path | None = None,
) -> ParsedRoles:
    """Generate subjective reader roles for one article.

    Issues one completion per requested prompt kind (coarse, fine, or both)
    and concatenates the parsed personas in generation order.
    """
    kinds = (
        [PromptKind.COARSE, PromptKind.FINE]
        if config.prompt_kind is PromptKind.BOTH
        else [config.prompt_kind]
    )
    origin_for = {
        PromptKind.COARSE: RoleOrigin.DYNAMIC_COARSE,
        PromptKind.FINE: RoleOrigin.DYNAMIC_FINE,
    }
    all_roles: list[Role] = []
    skipped = 0
    for kind in kinds:
        prompt = build_role_prompt(
            article, config, kind, summary=summary, template_dir=template_dir
        )
        request = CompletionRequest(
            prompt=prompt,
            max_tokens=max_tokens,
            temperature=0.0,
            want_logprobs=False,
            model_id=model_id,
        )
        response = backend.complete(request)
        parsed = parse_roles(response.text, origin_for[kind])
        all_roles.extend(parsed.roles)
        skipped += parsed.skipped
    return ParsedRoles(roles=tuple(all_roles), skipped=skipped)
