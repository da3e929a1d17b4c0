"""Offline model optimizer: node clustering and path clustering.

Node clustering merges same-feature split nodes whose normalized
threshold distance is below the intensity, replacing the members'
thresholds by their occurrence-weighted average. Every merge is gated: a
validator re-scores the updated model and the merge is committed only if
accuracy has not dropped below the pre-clustering baseline (minus an
optional tolerance). Passes repeat until one commits nothing; committed
merges strictly shrink the distinct-threshold set, so the loop terminates.

Path clustering is purely syntactic: paths are keyed by their sorted
(feature, threshold, direction) condition multiset and identical keys
share one cluster, hence one packed SumPath slot. It never changes a
threshold or leaf.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

from .comparison import NodePlan
from .forest import Forest, PathInfo, PathTable, Tree, distinct_pairs, enumerate_paths

__all__ = [
    "ClusterConfig",
    "ClusterReport",
    "cluster_nodes",
    "cluster_paths",
    "plan_from_clusters",
]


@dataclass(frozen=True)
class ClusterConfig:
    """Clustering intensity in [0, 1] and the accuracy gate tolerance."""

    intensity: float = 0.2
    tolerance: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError(f"intensity must lie in [0, 1], got {self.intensity}")
        if self.tolerance < 0.0:
            raise ValueError("tolerance must be non-negative")


@dataclass(frozen=True)
class ClusterReport:
    nodes_before: int
    nodes_after: int
    committed: int
    aborted: int
    passes: int
    accuracy_before: float
    accuracy_after: float
    path_count: int | None = None
    path_cluster_count: int | None = None

    def to_dict(self) -> dict:
        return {
            "nodes_before": self.nodes_before,
            "nodes_after": self.nodes_after,
            "committed": self.committed,
            "aborted": self.aborted,
            "passes": self.passes,
            "accuracy_before": self.accuracy_before,
            "accuracy_after": self.accuracy_after,
            "path_count": self.path_count,
            "path_cluster_count": self.path_cluster_count,
        }


def _retarget(forest: Forest, mapping: dict[tuple[str, float], float]) -> Forest:
    """New forest with thresholds rewritten per the (feature, old) -> new map."""
    trees = []
    for tree in forest.trees:
        splits = tuple(
            replace(sp, threshold=mapping.get((sp.feature, sp.threshold), sp.threshold))
            for sp in tree.splits
        )
        trees.append(Tree(splits, tree.leaves, tree.class_id, tree.weight))
    return replace(forest, trees=tuple(trees))


def _occurrences(forest: Forest) -> dict[tuple[str, float], int]:
    counts: dict[tuple[str, float], int] = {}
    for tree in forest.trees:
        for sp in tree.splits:
            counts[(sp.feature, sp.threshold)] = counts.get((sp.feature, sp.threshold), 0) + 1
    return counts


def cluster_nodes(
    forest: Forest,
    cfg: ClusterConfig,
    validator: Callable[[Forest], float],
) -> tuple[Forest, ClusterReport]:
    """Validation-gated threshold merging over distinct node types.

    ``validator`` maps a forest to its plaintext accuracy on the held-out
    validation set; it must accept any forest with this one's schema.
    Candidate nodes iterate in (feature, threshold) order and join at most
    one committed cluster per pass.
    """
    if forest.quantized:
        raise ValueError("cluster before quantization; thresholds must be raw")
    baseline = validator(forest)
    floor = baseline - cfg.tolerance
    ranges = {f.name: (f.minimum, f.maximum) for f in forest.features}

    nodes_before = len(distinct_pairs(forest))
    committed = aborted = passes = 0
    current = forest
    accuracy = baseline

    changed = True
    while changed:
        changed = False
        passes += 1
        consumed: set[tuple[str, float]] = set()
        for candidate in distinct_pairs(current):
            if candidate in consumed or cfg.intensity == 0.0:
                continue
            feature, value = candidate
            lo, hi = ranges[feature]
            span = hi - lo
            members = [candidate]
            for other in distinct_pairs(current):
                if other == candidate or other in consumed or other[0] != feature:
                    continue
                distance = abs(value - other[1]) / span if span > 0 else 0.0
                if distance < cfg.intensity:
                    members.append(other)
            if len(members) < 2:
                continue
            occur = _occurrences(current)
            weight_sum = sum(occur[m] for m in members)
            average = sum(m[1] * occur[m] for m in members) / weight_sum
            trial = _retarget(current, {m: average for m in members})
            trial_accuracy = validator(trial)
            if trial_accuracy >= floor:
                current = trial
                accuracy = trial_accuracy
                committed += 1
                consumed.update(members)
                consumed.add((feature, average))
                changed = True
            else:
                aborted += 1

    report = ClusterReport(
        nodes_before=nodes_before,
        nodes_after=len(distinct_pairs(current)),
        committed=committed,
        aborted=aborted,
        passes=passes,
        accuracy_before=baseline,
        accuracy_after=accuracy,
    )
    return current, report


def cluster_paths(forest: Forest) -> PathTable:
    """Key every path by its canonical condition multiset.

    Run after node clustering: merged thresholds are what make condition
    sets coincide across trees.
    """
    keys: dict[tuple, int] = {}
    paths = []
    for tree_index, leaf_index, conditions in enumerate_paths(forest):
        key = tuple(sorted(conditions))
        cluster_id = keys.setdefault(key, len(keys))
        paths.append(PathInfo(tree_index, leaf_index, conditions, cluster_id))
    return PathTable(tuple(paths), len(keys))


def plan_from_clusters(forest: Forest) -> NodePlan:
    """Comparison plan: exactly the forest's distinct (feature, threshold) pairs."""
    return NodePlan.from_pairs(distinct_pairs(forest))
