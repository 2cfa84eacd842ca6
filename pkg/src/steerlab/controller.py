"""Outcome memory and per-generation steering decisions.

The memory is a budgeted set of clusters keyed by prompt embedding.  Each
cluster keeps a running-mean centroid and per-attribute value counts of the
outcomes observed for prompts that matched it.  Policies turn a cluster's
counts plus a target distribution into a steering plan for the next
generation:

  deficit        -- steer toward the most under-represented value (relative to
                    the target), away from the most over-represented one; the
                    feedback loop keeps realized counts within one generation
                    of the target share
  probabilistic  -- draw the target value from the target distribution (no
                    feedback; realized proportions keep sampling variance)
  static         -- a fixed value pair per attribute, configured up front

A decide followed by its record forms one generation's critical section; the
harness runs generations sequentially so cluster state is never read torn.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import MemorySnapshotError
from .guidance import GuidancePlan, PlanEntry
from .world import AttributeSchema, Condition, MixtureWorld, TargetDistribution

_MAGIC = "steerlab-memory"
_VERSION = 1

POLICY_KINDS = ("deficit", "probabilistic", "static")


@dataclass
class Cluster:
    centroid: np.ndarray
    total: int = 0
    counts: dict[str, dict[str, int]] = field(default_factory=dict)


@dataclass
class MemoryModule:
    """At most `budget` clusters; embeddings within `tau` of a centroid match it."""

    budget: int
    tau: float
    clusters: list[Cluster] = field(default_factory=list)

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


@dataclass
class IndicatorPolicy:
    kind: str
    static_pairs: dict[str, tuple[str, str]] | None = None
    rng: np.random.Generator | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}, expected one of {POLICY_KINDS}")
        if (self.static_pairs is not None) != (self.kind == "static"):
            raise ValueError("static_pairs must be given exactly when kind='static'")


def default_match_threshold(world: MixtureWorld) -> float:
    """Half the smallest inter-concept centroid distance (1.0 for one-concept worlds)."""
    sep = world.min_concept_separation()
    return 0.5 * sep if sep is not None else 1.0


def lookup(memory: MemoryModule, embedding: np.ndarray) -> int | None:
    """Index of the nearest cluster strictly within tau; ties take the lowest index."""
    best = None
    best_dist = memory.tau
    for i, cluster in enumerate(memory.clusters):
        if embedding.shape != cluster.centroid.shape:
            raise ValueError(
                f"embedding dimension {embedding.shape} != centroid {cluster.centroid.shape}"
            )
        dist = float(np.linalg.norm(embedding - cluster.centroid))
        if dist < best_dist:
            best = i
            best_dist = dist
    return best


def _argmax_schema_order(values: tuple[str, ...], score) -> str:
    best = values[0]
    best_score = score(values[0])
    for v in values[1:]:
        s = score(v)
        if s > best_score:
            best, best_score = v, s
    return best


def decide(
    memory: MemoryModule,
    cond: Condition,
    schema: AttributeSchema,
    target: TargetDistribution,
    policy: IndicatorPolicy,
) -> GuidancePlan:
    """Choose a steering plan for one generation; never mutates the memory."""
    target.validate_for(schema)
    idx = lookup(memory, cond.embedding)
    counts = memory.clusters[idx].counts if idx is not None else {}
    entries: dict[str, PlanEntry] = {}
    for attr in schema.attributes:
        values = attr.values
        if policy.kind == "deficit":
            attr_counts = counts.get(attr.name, {})
            total = sum(attr_counts.values())
            def observed(v):
                return attr_counts.get(v, 0) / total if total else 0.0
            tgt = _argmax_schema_order(values, lambda v: target.of(attr.name, v) - observed(v))
            rest = tuple(v for v in values if v != tgt)
            ref = _argmax_schema_order(rest, lambda v: observed(v) - target.of(attr.name, v))
        elif policy.kind == "probabilistic":
            if policy.rng is None:
                raise ValueError("probabilistic policy needs an rng stream")
            probs = np.array([target.of(attr.name, v) for v in values])
            tgt = values[int(policy.rng.choice(len(values), p=probs / probs.sum()))]
            rest = tuple(v for v in values if v != tgt)
            ref = rest[int(policy.rng.integers(len(rest)))]
        else:  # static
            try:
                tgt, ref = policy.static_pairs[attr.name]
            except KeyError:
                raise ValueError(f"static policy has no pair for attribute {attr.name!r}") from None
            schema.check_value(attr.name, tgt)
            schema.check_value(attr.name, ref)
        entries[attr.name] = PlanEntry(target=tgt, reference=ref)
    return GuidancePlan.from_dict(entries)


def record(memory: MemoryModule, cond: Condition, outcome: dict[str, str]) -> None:
    """Fold one generation's outcome into the matching (or a new) cluster.

    The centroid tracks the running mean of member embeddings.  When no
    cluster matches and the budget is exhausted, the two nearest clusters are
    consolidated first, so the budget bound never breaks.
    """
    embedding = np.asarray(cond.embedding, dtype=float)
    idx = lookup(memory, embedding)
    if idx is None:
        if len(memory.clusters) < memory.budget:
            memory.clusters.append(Cluster(centroid=embedding.copy()))
            idx = len(memory.clusters) - 1
        elif len(memory.clusters) >= 2:
            consolidate(memory)
            memory.clusters.append(Cluster(centroid=embedding.copy()))
            idx = len(memory.clusters) - 1
        else:
            idx = 0  # budget of one: the lone cluster absorbs every prompt
    cluster = memory.clusters[idx]
    cluster.centroid = (cluster.centroid * cluster.total + embedding) / (cluster.total + 1)
    cluster.total += 1
    for attr, value in outcome.items():
        per_attr = cluster.counts.setdefault(attr, {})
        per_attr[value] = per_attr.get(value, 0) + 1


def consolidate(memory: MemoryModule) -> None:
    """Merge the two nearest clusters (count-weighted centroid, counts summed)."""
    n = len(memory.clusters)
    if n < 2:
        raise ValueError(f"consolidation needs at least 2 clusters, have {n}")
    best = (0, 1)
    best_dist = np.inf
    for i in range(n):
        for j in range(i + 1, n):
            dist = float(np.linalg.norm(memory.clusters[i].centroid - memory.clusters[j].centroid))
            if dist < best_dist:
                best, best_dist = (i, j), dist
    i, j = best
    a, b = memory.clusters[i], memory.clusters[j]
    total = a.total + b.total
    if total > 0:
        centroid = (a.centroid * a.total + b.centroid * b.total) / total
    else:
        centroid = (a.centroid + b.centroid) / 2.0
    counts = {attr: dict(vals) for attr, vals in a.counts.items()}
    for attr, vals in b.counts.items():
        merged = counts.setdefault(attr, {})
        for v, c in vals.items():
            merged[v] = merged.get(v, 0) + c
    memory.clusters[i] = Cluster(centroid=centroid, total=total, counts=counts)
    del memory.clusters[j]


def _container_checksum(payload: dict) -> str:
    body = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(body).hexdigest()


def snapshot_memory(
    memory: MemoryModule, path: str, schema: AttributeSchema, prompts_seen: int = 0
) -> None:
    """Persist the memory as a versioned, checksummed container."""
    payload = {
        "magic": _MAGIC,
        "version": _VERSION,
        "schema": schema.digest(),
        "budget": memory.budget,
        "tau": memory.tau,
        "prompts_seen": prompts_seen,
        "clusters": [
            {"centroid": c.centroid.tolist(), "total": c.total, "counts": c.counts}
            for c in memory.clusters
        ],
    }
    payload["checksum"] = _container_checksum({k: v for k, v in payload.items()})
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
    os.replace(tmp, path)


def restore_memory(
    path: str, schema: AttributeSchema | None = None
) -> tuple[MemoryModule, int]:
    """Load a persisted memory; returns (memory, prompts_seen).

    Any structural problem (bad magic, version, schema mismatch, checksum,
    truncation) raises MemorySnapshotError before any state is exposed.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise MemorySnapshotError(f"unreadable memory file {path!r}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("magic") != _MAGIC:
        raise MemorySnapshotError(f"{path!r} is not a memory container")
    if payload.get("version") != _VERSION:
        raise MemorySnapshotError(
            f"unsupported memory version {payload.get('version')!r} (expected {_VERSION})"
        )
    declared = payload.get("checksum")
    expected = _container_checksum({k: v for k, v in payload.items() if k != "checksum"})
    if declared != expected:
        raise MemorySnapshotError(f"checksum mismatch in {path!r}; file is corrupt")
    if schema is not None and payload["schema"] != schema.digest():
        raise MemorySnapshotError(
            f"memory file {path!r} was written for a different attribute schema"
        )
    try:
        memory = MemoryModule(budget=payload["budget"], tau=payload["tau"])
        for c in payload["clusters"]:
            memory.clusters.append(
                Cluster(
                    centroid=np.asarray(c["centroid"], dtype=float),
                    total=int(c["total"]),
                    counts={a: {v: int(n) for v, n in vals.items()}
                            for a, vals in c["counts"].items()},
                )
            )
        prompts_seen = int(payload.get("prompts_seen", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise MemorySnapshotError(f"malformed memory container {path!r}: {exc}") from exc
    if len(memory.clusters) > memory.budget:
        raise MemorySnapshotError(f"memory file {path!r} exceeds its own budget")
    return memory, prompts_seen


def cluster_rows(memory: MemoryModule) -> list[dict]:
    """Flat dict rows for inspection dumps (one per cluster)."""
    rows = []
    for i, c in enumerate(memory.clusters):
        row: dict = {"cluster": i, "total": c.total}
        for k, x in enumerate(c.centroid):
            row[f"centroid{k}"] = float(x)
        for attr in sorted(c.counts):
            for value in sorted(c.counts[attr]):
                row[f"{attr}={value}"] = c.counts[attr][value]
        rows.append(row)
    return rows
