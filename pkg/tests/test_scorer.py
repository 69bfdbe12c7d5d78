"""Per-role contributions and aggregated pair scores."""

from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drpe.comparator import RoleVerdict, Vote
from drpe.errors import ScoringError
from drpe.roles import Role, RoleKind, RoleOrigin
from drpe.scorer import drpe_score, role_score


def verdict(vote, conf, name="Judge"):
    r = Role(name=name, description="judges things",
             kind=RoleKind.OBJECTIVE, origin=RoleOrigin.STATIC)
    if vote is Vote.UNPARSEABLE:
        return RoleVerdict(role=r, vote=vote, reason="", confidence=None, token_span=None)
    return RoleVerdict(role=r, vote=vote, reason="because", confidence=conf,
                       token_span=(0, 1))


class TestRoleScore:
    def test_candidate_vote_passes_confidence(self):
        assert role_score(verdict(Vote.CANDIDATE, 0.6)) == 0.6

    def test_reference_vote_zeroed(self):
        assert role_score(verdict(Vote.REFERENCE, 0.9)) == 0.0

    def test_full_certainty(self):
        assert role_score(verdict(Vote.CANDIDATE, 1.0)) == 1.0

    def test_unparseable_rejected(self):
        with pytest.raises(ValueError):
            role_score(verdict(Vote.UNPARSEABLE, None))


class TestDrpeScore:
    def test_fixed_mixed_votes(self):
        verdicts = [
            verdict(Vote.CANDIDATE, 0.6, "a"),
            verdict(Vote.REFERENCE, 0.9, "b"),
            verdict(Vote.CANDIDATE, 0.5, "c"),
        ]
        score = drpe_score(verdicts, task_id="t")
        assert score.raw_score == 1.1
        assert score.normalized_score == 1.1 / 3
        assert score.n_roles == 3
        assert [c.contribution for c in score.per_role] == [0.6, 0.0, 0.5]

    def test_all_reference_votes(self):
        verdicts = [verdict(Vote.REFERENCE, 0.9, str(i)) for i in range(3)]
        assert drpe_score(verdicts).raw_score == 0.0

    def test_upper_bound_seven_certain_votes(self):
        verdicts = [verdict(Vote.CANDIDATE, 1.0, str(i)) for i in range(7)]
        score = drpe_score(verdicts)
        assert score.raw_score == 7.0
        assert score.normalized_score == 1.0

    def test_zero_eligible_raises(self):
        with pytest.raises(ScoringError):
            drpe_score([verdict(Vote.UNPARSEABLE, None)])

    def test_unparseable_kept_in_per_role_with_zero(self):
        verdicts = [
            verdict(Vote.CANDIDATE, 0.4, "a"),
            verdict(Vote.UNPARSEABLE, None, "b"),
        ]
        score = drpe_score(verdicts)
        assert score.n_roles == 1
        assert score.normalized_score == 0.4
        assert len(score.per_role) == 2
        assert score.per_role[1].contribution == 0.0
        assert score.per_role[1].vote is Vote.UNPARSEABLE


_verdicts = st.lists(
    st.tuples(st.booleans(), st.floats(min_value=1e-6, max_value=1.0)),
    min_size=1,
    max_size=12,
)


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(_verdicts)
    def test_bounds(self, pairs):
        verdicts = [
            verdict(Vote.CANDIDATE if voted else Vote.REFERENCE, conf, str(i))
            for i, (voted, conf) in enumerate(pairs)
        ]
        score = drpe_score(verdicts)
        assert 0.0 <= score.raw_score <= score.n_roles
        assert 0.0 <= score.normalized_score <= 1.0

    @settings(max_examples=200, deadline=None)
    @given(_verdicts, st.randoms(use_true_random=False))
    def test_permutation_invariance(self, pairs, rnd):
        verdicts = [
            verdict(Vote.CANDIDATE if voted else Vote.REFERENCE, conf, str(i))
            for i, (voted, conf) in enumerate(pairs)
        ]
        shuffled = list(verdicts)
        rnd.shuffle(shuffled)
        assert drpe_score(shuffled).raw_score == drpe_score(verdicts).raw_score

    @settings(max_examples=200, deadline=None)
    @given(_verdicts, st.integers(min_value=0, max_value=11))
    def test_flipping_reference_to_candidate_strictly_increases(self, pairs, pick):
        verdicts = [
            verdict(Vote.CANDIDATE if voted else Vote.REFERENCE, conf, str(i))
            for i, (voted, conf) in enumerate(pairs)
        ]
        index = pick % len(verdicts)
        if verdicts[index].vote is Vote.CANDIDATE:
            return
        flipped = list(verdicts)
        flipped[index] = verdict(Vote.CANDIDATE, verdicts[index].confidence, "flip")
        assert drpe_score(flipped).raw_score > drpe_score(verdicts).raw_score

    @settings(max_examples=200, deadline=None)
    @given(_verdicts, _verdicts)
    def test_linearity_of_concatenation(self, first, second):
        def build(pairs, offset):
            return [
                verdict(Vote.CANDIDATE if voted else Vote.REFERENCE, conf,
                        str(offset + i))
                for i, (voted, conf) in enumerate(pairs)
            ]

        a = build(first, 0)
        b = build(second, 100)
        combined = drpe_score(a + b).raw_score
        parts = drpe_score(a).raw_score + drpe_score(b).raw_score
        assert math.isclose(combined, parts, rel_tol=1e-12, abs_tol=1e-12)
