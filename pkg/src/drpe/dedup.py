"""Role deduplication: embed personas, cluster them, keep one per cluster.

Generated reader personas are often near-duplicates. Each role is embedded
as the string "name: description", the embeddings are clustered with seeded
k-means, and the role closest to each cluster centroid survives.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import math
import os
import time
from dataclasses import dataclass
from typing import Callable, Protocol

import httpx
import numpy as np

from .errors import ConfigurationError, DecodeError, TransportError
from .roles import Role

logger = logging.getLogger(__name__)

DEFAULT_HASH_DIM = 64


class EmbeddingProvider(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


@dataclass(frozen=True)
class ClusteringResult:
    """Output of one k-means run (the best of the seeded restarts)."""

    centroids: np.ndarray
    assignment: tuple[int, ...]
    inertia: float
    inertia_history: tuple[float, ...]


class HashingEmbedder:
    """Deterministic feature-hashed character n-gram embedder.

    Network-free provider for tests and offline runs. Buckets and signs come
    from blake2b digests, so vectors are stable across runs and platforms.
    """

    def __init__(self, dim: int = DEFAULT_HASH_DIM, ngram_sizes: tuple[int, ...] = (2, 3)):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.ngram_sizes = ngram_sizes

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        lowered = text.lower()
        for n in self.ngram_sizes:
            for i in range(max(0, len(lowered) - n + 1)):
                gram = lowered[i : i + n]
                digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
                value = int.from_bytes(digest, "big")
                bucket = value % self.dim
                sign = 1.0 if (value >> 63) & 1 == 0 else -1.0
                vec[bucket] += sign
        norm = float(np.linalg.norm(vec))
        if norm > 0:
            vec /= norm
        return vec


class RemoteEmbedder:
    """Client for an OpenAI-compatible ``/embeddings`` endpoint."""

    def __init__(
        self,
        base_url: str,
        model_id: str,
        *,
        api_key_env: str = "DRPE_API_KEY",
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not base_url:
            raise ConfigurationError("remote embedder requires a base URL")
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._sleep = sleep
        headers = {}
        token = os.environ.get(api_key_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def embed(self, text: str) -> np.ndarray:
        payload = {"model": self.model_id, "input": [text]}
        last_error: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                response = self._client.post(f"{self.base_url}/embeddings", json=payload)
            except httpx.TransportError as exc:
                last_error = exc
            else:
                if response.status_code == 429:
                    last_error = TransportError("rate limited (HTTP 429)", attempt)
                elif response.status_code != 200:
                    raise DecodeError(
                        f"embeddings endpoint returned HTTP {response.status_code}"
                    )
                else:
                    try:
                        data = response.json()
                        values = data["data"][0]["embedding"]
                        return np.asarray(values, dtype=np.float64)
                    except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
                        raise DecodeError(f"malformed embeddings payload: {exc}") from exc
            if attempt < self.max_attempts:
                self._sleep(self.backoff_base * (2 ** (attempt - 1)))
        raise TransportError(f"embedding failed: {last_error}", self.max_attempts)


def embed_role(role: Role, provider: EmbeddingProvider) -> np.ndarray:
    """Embed a role as "name: description" through the configured provider."""
    vector = provider.embed(f"{role.name}: {role.description}")
    if not np.all(np.isfinite(vector)):
        raise ValueError(f"embedding for role {role.name!r} contains non-finite values")
    return vector


def _as_matrix(vectors) -> np.ndarray:
    matrix = np.asarray(vectors, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError("expected a list of same-dimension vectors")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("embedding vectors must be finite")
    return matrix


def _kmeans_plus_plus(matrix: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = matrix.shape[0]
    centers = [int(rng.integers(n))]
    for _ in range(1, k):
        dists = np.min(
            ((matrix[:, None, :] - matrix[centers][None, :, :]) ** 2).sum(axis=2), axis=1
        )
        total = float(dists.sum())
        if total <= 0.0:
            centers.append(int(rng.integers(n)))
        else:
            centers.append(int(rng.choice(n, p=dists / total)))
    return matrix[centers].copy()


def _lloyd(matrix: np.ndarray, centroids: np.ndarray, max_iter: int) -> ClusteringResult:
    n, _ = matrix.shape
    k = centroids.shape[0]
    prev_assignment: np.ndarray | None = None
    history: list[float] = []
    assignment = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        sq_dists = ((matrix[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assignment = np.argmin(sq_dists, axis=1)
        # Repair empty clusters by reseeding from the farthest point. Each
        # reseed strictly lowers inertia, so the loop terminates.
        while True:
            counts = np.bincount(assignment, minlength=k)
            empties = np.flatnonzero(counts == 0)
            if empties.size == 0:
                break
            point_dists = sq_dists[np.arange(n), assignment]
            farthest = int(np.argmax(point_dists))
            if point_dists[farthest] > 0.0:
                centroids[empties[0]] = matrix[farthest]
                sq_dists = ((matrix[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
                assignment = np.argmin(sq_dists, axis=1)
            else:
                # Fewer distinct points than clusters: split a duplicate off
                # a multi-member cluster by hand (inertia is already 0).
                donor = int(np.flatnonzero(counts >= 2)[0])
                member = int(np.flatnonzero(assignment == donor)[1])
                assignment[member] = int(empties[0])
                centroids[empties[0]] = matrix[member]
        history.append(float(sq_dists[np.arange(n), assignment].sum()))
        if prev_assignment is not None and np.array_equal(assignment, prev_assignment):
            break
        prev_assignment = assignment.copy()
        for c in range(k):
            members = matrix[assignment == c]
            centroids[c] = members.mean(axis=0)
    return ClusteringResult(
        centroids=centroids,
        assignment=tuple(int(a) for a in assignment),
        inertia=history[-1],
        inertia_history=tuple(history),
    )


def kmeans(
    vectors,
    k: int,
    seed: int,
    *,
    n_init: int = 10,
    max_iter: int = 100,
) -> ClusteringResult:
    """Seeded k-means: Lloyd iterations to a fixpoint from multiple starts.

    Restarts combine ``n_init`` seeded k-means++ initializations with, when
    the instance is small enough (C(n, k) <= 300), every k-subset of the
    points as an initial center set; the lowest-inertia run wins. The
    exhaustive starts make tiny instances reliably reach the global optimum,
    where k-means++ alone can stall in a local minimum. Deterministic given
    (vectors, k, seed).
    """
    matrix = _as_matrix(vectors)
    n = matrix.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds number of vectors n={n}")
    inits: list[np.ndarray] = []
    if math.comb(n, k) <= 300:
        inits.extend(
            matrix[list(subset)].copy() for subset in itertools.combinations(range(n), k)
        )
    for child in np.random.SeedSequence(seed).spawn(n_init):
        rng = np.random.default_rng(child)
        inits.append(_kmeans_plus_plus(matrix, k, rng))
    best: ClusteringResult | None = None
    for centroids in inits:
        result = _lloyd(matrix, centroids, max_iter)
        if best is None or result.inertia < best.inertia:
            best = result
    assert best is not None
    return best


def select_representatives(
    roles: list[Role],
    vectors,
    k: int,
    seed: int,
    *,
    metric: str = "euclidean",
) -> list[Role]:
    """Cluster roles and keep, per cluster, the role closest to the centroid.

    Ties break toward the lowest role index; output is ordered by cluster
    index and has exactly ``k`` entries. ``metric="cosine"`` L2-normalizes
    the vectors before clustering.
    """
    matrix = _as_matrix(vectors)
    if len(roles) != matrix.shape[0]:
        raise ValueError("roles and vectors must be aligned")
    if metric == "cosine":
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        matrix = np.where(norms > 0, matrix / np.where(norms == 0, 1.0, norms), matrix)
    elif metric != "euclidean":
        raise ValueError(f"unknown metric {metric!r}")
    result = kmeans(matrix, k, seed)
    assignment = np.asarray(result.assignment)
    representatives: list[Role] = []
    for c in range(k):
        members = np.flatnonzero(assignment == c)
        dists = np.linalg.norm(matrix[members] - result.centroids[c], axis=1)
        # np.argmin takes the first minimum, i.e. the lowest role index.
        representatives.append(roles[int(members[int(np.argmin(dists))])])
    return representatives
