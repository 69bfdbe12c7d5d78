"""Brute-force clustering oracle: exact minimum-inertia partition search.

Enumerates every partition of n points into exactly k non-empty blocks,
scores each by within-cluster sum of squared distances to the block mean,
and reports the optimum plus whether it is unique. Only usable for tiny
instances; that is the point.
"""

from __future__ import annotations

import math


def partitions_into_k(n, k):
    """Yield all partitions of range(n) into exactly k non-empty blocks."""

    def helper(i, blocks):
        remaining = n - i
        if len(blocks) > k or len(blocks) + remaining < k:
            return
        if i == n:
            if len(blocks) == k:
                yield [list(block) for block in blocks]
            return
        for block in blocks:
            block.append(i)
            yield from helper(i + 1, blocks)
            block.pop()
        blocks.append([i])
        yield from helper(i + 1, blocks)
        blocks.pop()

    yield from helper(0, [])


def block_inertia(points, block):
    dim = len(points[0])
    mean = [sum(points[i][d] for i in block) / len(block) for d in range(dim)]
    return sum(
        sum((points[i][d] - mean[d]) ** 2 for d in range(dim)) for i in block
    ), mean


def best_partition(points, k, tie_tolerance=1e-9):
    """Exhaustive optimum: (inertia, partition, rep_candidates, unique).

    ``rep_candidates`` holds, per block, the frozenset of member indices
    whose distance to the block mean is within last-ulp noise of the
    minimum; a singleton means the representative is unambiguous, and exact
    ties (duplicates, two-point clusters) list every tied member. ``unique``
    is False when a second partition comes within ``tie_tolerance`` of the
    optimum inertia.
    """
    best = None
    second = None
    for partition in partitions_into_k(len(points), k):
        inertia = 0.0
        means = []
        for block in partition:
            block_cost, mean = block_inertia(points, block)
            inertia += block_cost
            means.append(mean)
        if best is None or inertia < best[0]:
            second = best[0] if best is not None else None
            best = (inertia, [sorted(b) for b in partition], means)
        elif second is None or inertia < second:
            second = inertia
    assert best is not None
    inertia, partition, means = best
    rep_candidates = []
    for block, mean in zip(partition, means):
        dists = {
            i: math.fsum((points[i][d] - mean[d]) ** 2 for d in range(len(mean)))
            for i in block
        }
        floor = min(dists.values())
        noise = 1e-12 * max(1.0, floor)
        rep_candidates.append(
            frozenset(i for i in block if dists[i] <= floor + noise)
        )
    unique = second is None or (second - inertia) > tie_tolerance
    return inertia, partition, rep_candidates, unique


def exact_representatives(rep_candidates):
    """Lowest-index member of each candidate set (the package's tie rule)."""
    return {min(candidates) for candidates in rep_candidates}
