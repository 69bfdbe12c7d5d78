"""Turning role verdicts into the confidence-weighted comparison score.

A role contributes its confidence when it votes for the candidate summary
and zero otherwise; the pair's raw score is the sum of contributions and
the normalized score divides by the number of scoring-eligible roles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .comparator import RoleVerdict, Vote
from .errors import ScoringError


@dataclass(frozen=True)
class RoleContribution:
    role_name: str
    vote: Vote
    contribution: float


@dataclass(frozen=True)
class PairScore:
    """Scores for one candidate-vs-reference comparison.

    ``raw_score`` is the plain sum of contributions; ``normalized_score``
    divides by the eligible-role count so pairs with parse dropouts stay
    comparable. Unparseable verdicts appear in ``per_role`` with a zero
    contribution but are excluded from ``n_roles``.
    """

    task_id: str
    raw_score: float
    normalized_score: float
    n_roles: int
    per_role: tuple[RoleContribution, ...]

    def __post_init__(self) -> None:
        if not (0.0 <= self.raw_score <= self.n_roles):
            raise ValueError(f"raw score {self.raw_score} outside [0, {self.n_roles}]")
        if not (0.0 <= self.normalized_score <= 1.0):
            raise ValueError(f"normalized score {self.normalized_score} outside [0, 1]")


def role_score(verdict: RoleVerdict) -> float:
    """Confidence if the role voted for the candidate, else zero."""
    if verdict.vote is Vote.UNPARSEABLE:
        raise ValueError("unparseable verdicts are not scoring-eligible; filter first")
    if verdict.vote is Vote.CANDIDATE:
        return verdict.confidence  # type: ignore[return-value]
    return 0.0


def drpe_score(verdicts: list[RoleVerdict], task_id: str = "") -> PairScore:
    """Aggregate all roles' verdicts for one pair.

    Exact summation (math.fsum) keeps the score independent of verdict
    order. Raises :class:`ScoringError` when no verdict is eligible.
    """
    eligible = [v for v in verdicts if v.vote is not Vote.UNPARSEABLE]
    if not eligible:
        raise ScoringError(f"pair {task_id!r}: no scoring-eligible verdicts")
    per_role = tuple(
        RoleContribution(
            role_name=v.role.name,
            vote=v.vote,
            contribution=role_score(v) if v.vote is not Vote.UNPARSEABLE else 0.0,
        )
        for v in verdicts
    )
    raw = math.fsum(c.contribution for c in per_role)
    return PairScore(
        task_id=task_id,
        raw_score=raw,
        normalized_score=raw / len(eligible),
        n_roles=len(eligible),
        per_role=per_role,
    )
