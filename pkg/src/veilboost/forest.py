"""Forest model schema, quantization, and SumPath evaluation.

The model document is the contract with the training toolkit: JSON with
``model_kind``, ``num_classes``, per-feature ranges, and trees whose
split nodes reference children by index (non-negative = another split,
negative v = leaf ~v). Split semantics are strict greater-than: feature
value > threshold goes right, equality goes left.

SumPath gives every root-to-leaf path an encrypted running sum of edge
values r*(1-c) (right edge) / r*c (left edge), so the taken path sums to
zero and every other path to a random nonzero residue. Edge randomness is
drawn per distinct (feature, threshold, direction) condition per query:
paths with identical condition multisets then share their sum and one
packed slot serves the whole path cluster. Evaluation is depth-first,
keeping O(depth) partial sums alive. MultiplyPath exists only as a
clear-value cross-check oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .comparison import ComparisonBit
from .encoding import quantize_to_grid
from .fhe import CapacityError, CipherHandle, PlainVector, ReferenceBackend
from .rng import DeterministicRng

__all__ = [
    "ModelError",
    "Split",
    "LeafNode",
    "Tree",
    "FeatureRange",
    "Forest",
    "load_model",
    "forest_to_dict",
    "save_model",
    "quantize",
    "SCORE_SCALE_BITS",
    "distinct_pairs",
    "PathInfo",
    "PathTable",
    "SumPathPack",
    "edge_value",
    "sum_path",
    "multiply_path_oracle",
    "plain_comparison_bits",
    "leaf_plaintext",
    "eval_scores",
    "predict_from_scores",
    "make_random_forest",
]

SCORE_SCALE_BITS = 12

MODEL_KINDS = ("xgboost", "adaboost")


class ModelError(Exception):
    """Schema violation or structurally invalid forest."""


@dataclass(frozen=True)
class Split:
    feature: str
    threshold: float
    left: int
    right: int


@dataclass(frozen=True)
class LeafNode:
    score: float
    class_id: int | None = None


@dataclass(frozen=True)
class Tree:
    splits: tuple[Split, ...]
    leaves: tuple[LeafNode, ...]
    class_id: int | None = None
    weight: float | None = None


@dataclass(frozen=True)
class FeatureRange:
    name: str
    minimum: float
    maximum: float


@dataclass(frozen=True)
class Forest:
    model_kind: str
    num_classes: int
    features: tuple[FeatureRange, ...]
    trees: tuple[Tree, ...]
    bitwidth: int | None = None  # None until quantized
    score_scale: int | None = None

    @property
    def quantized(self) -> bool:
        return self.bitwidth is not None

    def feature_range(self, name: str) -> FeatureRange:
        for spec in self.features:
            if spec.name == name:
                return spec
        raise ModelError(f"unknown feature {name!r}")


def leaf_class(tree: Tree, leaf: LeafNode) -> int | None:
    """Per-tree class assignment wins; per-leaf is the fallback."""
    return tree.class_id if tree.class_id is not None else leaf.class_id


# ---------------------------------------------------------------------------
# Schema ingest / export
# ---------------------------------------------------------------------------


def _as_number(value, what: str) -> float:
    # the toolkit exports exact decimal strings; accept both
    if isinstance(value, bool) or value is None:
        raise ModelError(f"{what} must be a number")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ModelError(f"{what} must be a number, got {value!r}") from None


def _load_tree(doc: dict, index: int, feature_names: set[str], num_classes: int) -> Tree:
    if not isinstance(doc, dict):
        raise ModelError(f"tree {index} is not an object")
    raw_nodes = doc.get("nodes", [])
    raw_leaves = doc.get("leaves")
    if not raw_leaves:
        raise ModelError(f"tree {index} has no leaves")
    splits = []
    for i, nd in enumerate(raw_nodes):
        for key in ("feature", "threshold", "left", "right"):
            if key not in nd:
                raise ModelError(f"tree {index} node {i} missing {key!r}")
        if nd["feature"] not in feature_names:
            raise ModelError(f"tree {index} node {i} uses unknown feature {nd['feature']!r}")
        splits.append(
            Split(nd["feature"], _as_number(nd["threshold"], "threshold"),
                  int(nd["left"]), int(nd["right"]))
        )
    leaves = []
    for i, lf in enumerate(raw_leaves):
        if "score" not in lf:
            raise ModelError(f"tree {index} leaf {i} missing score")
        cid = lf.get("class_id")
        if cid is not None:
            cid = int(cid)
            if not 0 <= cid < num_classes:
                raise ModelError(f"tree {index} leaf {i} class {cid} out of range")
        leaves.append(LeafNode(_as_number(lf["score"], "leaf score"), cid))

    tree_class = doc.get("class_id")
    if tree_class is not None:
        tree_class = int(tree_class)
        if not 0 <= tree_class < num_classes:
            raise ModelError(f"tree {index} class {tree_class} out of range")
    weight = doc.get("weight")
    if weight is not None:
        weight = _as_number(weight, "tree weight")

    tree = Tree(tuple(splits), tuple(leaves), tree_class, weight)
    _check_tree_shape(tree, index)
    return tree


def _check_tree_shape(tree: Tree, index: int) -> None:
    """Every split/leaf reachable from the root exactly once, no cycles."""
    n_splits, n_leaves = len(tree.splits), len(tree.leaves)
    if n_splits == 0:
        if n_leaves != 1:
            raise ModelError(f"tree {index}: leaf-only tree must have exactly one leaf")
        return
    seen_splits: set[int] = set()
    seen_leaves: set[int] = set()
    stack = [0]
    while stack:
        node = stack.pop()
        if node in seen_splits:
            raise ModelError(f"tree {index}: split {node} visited twice")
        if not 0 <= node < n_splits:
            raise ModelError(f"tree {index}: split index {node} out of range")
        seen_splits.add(node)
        for child in (tree.splits[node].left, tree.splits[node].right):
            if child >= 0:
                stack.append(child)
            else:
                leaf = -child - 1
                if not 0 <= leaf < n_leaves:
                    raise ModelError(f"tree {index}: leaf index {leaf} out of range")
                if leaf in seen_leaves:
                    raise ModelError(f"tree {index}: leaf {leaf} visited twice")
                seen_leaves.add(leaf)
    if len(seen_splits) != n_splits or len(seen_leaves) != n_leaves:
        raise ModelError(f"tree {index}: unreachable nodes present")


def load_model(document) -> Forest:
    """Parse and structurally validate a model document.

    Accepts a dict, a JSON string, or a path to a JSON file.
    """
    if isinstance(document, (str, Path)):
        text = Path(document).read_text() if Path(str(document)).exists() else str(document)
        document = json.loads(text)
    if not isinstance(document, dict):
        raise ModelError("model document must be a JSON object")

    kind = document.get("model_kind")
    if kind not in MODEL_KINDS:
        raise ModelError(f"model_kind must be one of {MODEL_KINDS}, got {kind!r}")
    num_classes = int(document.get("num_classes", 0))
    if num_classes < 2:
        raise ModelError("num_classes must be >= 2")

    raw_features = document.get("features")
    if not raw_features:
        raise ModelError("model has no features")
    features = []
    for f in raw_features:
        if "name" not in f:
            raise ModelError("feature missing name")
        features.append(
            FeatureRange(str(f["name"]), _as_number(f.get("min", 0.0), "feature min"),
                         _as_number(f.get("max", 1.0), "feature max"))
        )
    names = [f.name for f in features]
    if len(set(names)) != len(names):
        raise ModelError("duplicate feature names")

    raw_trees = document.get("trees")
    if not raw_trees:
        raise ModelError("model has no trees")
    trees = [
        _load_tree(t, i, set(names), num_classes) for i, t in enumerate(raw_trees)
    ]

    if kind == "adaboost":
        if num_classes != 2:
            raise ModelError("adaboost models are binary")
        for i, tree in enumerate(trees):
            if tree.weight is None:
                raise ModelError(f"adaboost tree {i} missing weight")
            for j, leaf in enumerate(tree.leaves):
                if abs(abs(leaf.score) - tree.weight) > 1e-9 * max(1.0, abs(tree.weight)):
                    raise ModelError(
                        f"adaboost tree {i} leaf {j}: score must be +/- tree weight"
                    )

    return Forest(kind, num_classes, tuple(features), tuple(trees))


def forest_to_dict(forest: Forest) -> dict:
    return {
        "model_kind": forest.model_kind,
        "num_classes": forest.num_classes,
        "features": [
            {"name": f.name, "min": f.minimum, "max": f.maximum} for f in forest.features
        ],
        "trees": [
            {
                **({"class_id": t.class_id} if t.class_id is not None else {}),
                **({"weight": t.weight} if t.weight is not None else {}),
                "nodes": [
                    {"feature": s.feature, "threshold": s.threshold,
                     "left": s.left, "right": s.right}
                    for s in t.splits
                ],
                "leaves": [
                    {"score": l.score,
                     **({"class_id": l.class_id} if l.class_id is not None else {})}
                    for l in t.leaves
                ],
            }
            for t in forest.trees
        ],
    }


def save_model(forest: Forest, path) -> None:
    Path(path).write_text(json.dumps(forest_to_dict(forest), indent=1))


# ---------------------------------------------------------------------------
# Quantization
# ---------------------------------------------------------------------------


def quantize(
    forest: Forest,
    bitwidth: int,
    feature_ranges: dict[str, tuple[float, float]] | None = None,
    score_scale_bits: int = SCORE_SCALE_BITS,
) -> Forest:
    """Integer thresholds on the bitwidth grid, fixed-point leaf scores.

    Thresholds map by the same floored affine rule clients use for feature
    values, so the homomorphic comparison and the plaintext oracle agree
    bit for bit. Scores scale by 2**score_scale_bits once; all later
    aggregation is exact integer arithmetic.
    """
    if forest.quantized:
        raise ModelError("forest already quantized")
    if not 1 <= bitwidth <= 32:
        raise ModelError(f"unsupported bitwidth {bitwidth}")
    ranges = {f.name: (f.minimum, f.maximum) for f in forest.features}
    if feature_ranges:
        ranges.update(feature_ranges)
    scale = 1 << score_scale_bits

    new_trees = []
    for ti, tree in enumerate(forest.trees):
        splits = []
        for sp in tree.splits:
            lo, hi = ranges[sp.feature]
            if not lo <= sp.threshold <= hi:
                raise ModelError(
                    f"tree {ti}: threshold {sp.threshold} outside range "
                    f"[{lo}, {hi}] of {sp.feature!r}"
                )
            splits.append(replace(sp, threshold=quantize_to_grid(sp.threshold, lo, hi, bitwidth)))
        leaves = tuple(
            replace(leaf, score=int(round(leaf.score * scale))) for leaf in tree.leaves
        )
        weight = int(round(tree.weight * scale)) if tree.weight is not None else None
        new_trees.append(Tree(tuple(splits), leaves, tree.class_id, weight))

    features = tuple(
        FeatureRange(f.name, ranges[f.name][0], ranges[f.name][1]) for f in forest.features
    )
    return Forest(
        forest.model_kind, forest.num_classes, features, tuple(new_trees),
        bitwidth=bitwidth, score_scale=scale,
    )


def distinct_pairs(forest: Forest) -> list[tuple[str, float]]:
    """Sorted distinct (feature, threshold) pairs across all trees."""
    return sorted({(s.feature, s.threshold) for t in forest.trees for s in t.splits})


# ---------------------------------------------------------------------------
# Plaintext evaluation (validator / oracle side)
# ---------------------------------------------------------------------------


def _walk_tree(tree: Tree, row: dict) -> int:
    """Leaf index reached by strict x > threshold routing."""
    if not tree.splits:
        return 0
    node = 0
    while True:
        sp = tree.splits[node]
        child = sp.right if row[sp.feature] > sp.threshold else sp.left
        if child < 0:
            return -child - 1
        node = child


def eval_scores(forest: Forest, row: dict) -> list:
    """Per-class aggregate scores; binary and adaboost use one signed slot."""
    if forest.model_kind == "adaboost" or forest.num_classes == 2:
        buckets = [0 if forest.quantized else 0.0]
    else:
        buckets = [0 if forest.quantized else 0.0] * forest.num_classes
    for tree in forest.trees:
        leaf = tree.leaves[_walk_tree(tree, row)]
        cid = leaf_class(tree, leaf)
        if len(buckets) == 1:
            buckets[0] += leaf.score
        else:
            if cid is None:
                raise ModelError("multi-class tree without class assignment")
            buckets[cid] += leaf.score
    return buckets


def predict_from_scores(scores: list) -> int:
    """Argmax with lowest-index tie-break; sign rule for the binary slot."""
    if len(scores) == 1:
        return 1 if scores[0] > 0 else 0
    best = 0
    for i, s in enumerate(scores):
        if s > scores[best]:
            best = i
    return best


def plain_comparison_bits(forest: Forest, row: dict) -> dict[tuple[str, float], int]:
    """Clear comparison bit for every distinct (feature, threshold) pair."""
    return {(f, t): int(row[f] > t) for f, t in distinct_pairs(forest)}


def multiply_path_oracle(
    forest: Forest, bits: dict[tuple[str, float], int]
) -> dict[tuple[int, int], int]:
    """Clear MultiplyPath: taken edges contribute 1, others 0.

    Returns {(tree index, leaf index): 0/1}; exactly one 1 per tree. Test
    oracle only, never on the homomorphic path.
    """
    out: dict[tuple[int, int], int] = {}

    def descend(ti: int, tree: Tree, node: int, value: int) -> None:
        sp = tree.splits[node]
        bit = bits[(sp.feature, sp.threshold)]
        for child, indicator in ((sp.left, 1 - bit), (sp.right, bit)):
            v = value * indicator
            if child < 0:
                out[(ti, -child - 1)] = v
            else:
                descend(ti, tree, child, v)

    for ti, tree in enumerate(forest.trees):
        if not tree.splits:
            out[(ti, 0)] = 1
        else:
            descend(ti, tree, 0, 1)
    return out


# ---------------------------------------------------------------------------
# Path table and clusters
# ---------------------------------------------------------------------------

Condition = tuple[str, float, bool]  # (feature, threshold, goes right)


@dataclass(frozen=True)
class PathInfo:
    tree_index: int
    leaf_index: int
    conditions: tuple[Condition, ...]  # ordered root -> leaf
    cluster_id: int

    @property
    def key(self) -> tuple[Condition, ...]:
        return tuple(sorted(self.conditions))


@dataclass(frozen=True)
class PathTable:
    """All root-to-leaf paths, clustered by canonical condition multiset."""

    paths: tuple[PathInfo, ...]
    cluster_count: int

    def by_tree(self, tree_index: int) -> list[PathInfo]:
        return [p for p in self.paths if p.tree_index == tree_index]

    def cluster_members(self) -> dict[int, list[PathInfo]]:
        members: dict[int, list[PathInfo]] = {}
        for p in self.paths:
            members.setdefault(p.cluster_id, []).append(p)
        return members


def enumerate_paths(forest: Forest) -> list[tuple[int, int, tuple[Condition, ...]]]:
    """(tree index, leaf index, ordered conditions) for every path."""
    out = []

    def descend(ti: int, tree: Tree, node: int, conds: tuple[Condition, ...]) -> None:
        sp = tree.splits[node]
        for child, right in ((sp.left, False), (sp.right, True)):
            step = conds + ((sp.feature, sp.threshold, right),)
            if child < 0:
                out.append((ti, -child - 1, step))
            else:
                descend(ti, tree, child, step)

    for ti, tree in enumerate(forest.trees):
        if not tree.splits:
            out.append((ti, 0, ()))
        else:
            descend(ti, tree, 0, ())
    return out


# ---------------------------------------------------------------------------
# Homomorphic SumPath
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BucketInfo:
    """Trees whose path clusters share one packed ciphertext."""

    tree_indices: tuple[int, ...]
    cluster_ids: tuple[int, ...]  # packing order; slot i holds cluster_ids[i]

    @property
    def used_slots(self) -> int:
        return len(self.cluster_ids)

    @property
    def zero_count(self) -> int:
        # one true path per tree; identical-condition paths coincide jointly
        return len(self.tree_indices)


@dataclass(frozen=True)
class SumPathPack:
    """Packed SumPath values, one slot per path cluster."""

    ciphertexts: tuple[CipherHandle, ...]
    buckets: tuple[BucketInfo, ...]
    slot_map: dict[int, tuple[int, int]]  # cluster id -> (ciphertext idx, slot)


def edge_value(
    backend: ReferenceBackend, bit: ComparisonBit, side: str, r: int
) -> CipherHandle:
    """Encrypted edge mask: 0 on the taken side, r on the other.

    Right edge (x > threshold) carries r*(1-c); left edge carries r*c.
    """
    t = backend.params.plain_modulus
    if not 1 <= r < t:
        raise ModelError(f"edge randomness must lie in [1, t), got {r}")
    if side == "left":
        return backend.mult_scalar(bit.ciphertext, r)
    if side == "right":
        ones = PlainVector(
            backend.params, np.ones(backend.params.slot_count, dtype=np.int64)
        )
        complement = _plain_minus(backend, ones, bit.ciphertext)
        return backend.mult_scalar(complement, r)
    raise ModelError(f"edge side must be 'left' or 'right', got {side!r}")


def _plain_minus(backend: ReferenceBackend, plain: PlainVector, ct: CipherHandle) -> CipherHandle:
    """plain - ct as negate-and-add (counted as one addition)."""
    neg = CipherHandle(
        ct.params, (-ct.payload) % backend.params.plain_modulus, ct.depth,
        ct.key_id, ct.op_stats,
    )
    return backend.add(neg, plain)


def assign_buckets(forest: Forest, table: PathTable, capacity: int) -> list[BucketInfo]:
    """Greedily group whole trees so each bucket's cluster count fits.

    Keeping every path of a tree in one bucket keeps the bucket's expected
    zero count (== its tree count) a static fact the padding step needs.
    """
    buckets: list[BucketInfo] = []
    current_trees: list[int] = []
    current_clusters: dict[int, None] = {}
    for ti in range(len(forest.trees)):
        tree_clusters = {p.cluster_id: None for p in table.by_tree(ti)}
        merged = {**current_clusters, **tree_clusters}
        if current_trees and len(merged) > capacity:
            buckets.append(BucketInfo(tuple(current_trees), tuple(current_clusters)))
            current_trees, current_clusters = [], {}
            merged = dict(tree_clusters)
        if len(merged) > capacity:
            raise CapacityError(
                f"tree {ti} alone needs {len(merged)} packed slots, capacity {capacity}"
            )
        current_trees.append(ti)
        current_clusters = merged
    if current_trees:
        buckets.append(BucketInfo(tuple(current_trees), tuple(current_clusters)))
    return buckets


def sum_path(
    backend: ReferenceBackend,
    forest: Forest,
    bits: dict[tuple[str, float], ComparisonBit],
    table: PathTable,
    rng: DeterministicRng,
    pack_capacity: int | None = None,
    buckets: list[BucketInfo] | None = None,
) -> SumPathPack:
    """Depth-first SumPath with per-cluster packing.

    Uses only additions and plain multiplications downstream of the
    comparison bits. Each distinct condition draws one fresh r per query;
    one representative per path cluster is rotated into its packed slot.
    """
    t = backend.params.plain_modulus
    if buckets is None:
        capacity = pack_capacity if pack_capacity is not None else backend.params.slot_count // 4
        buckets = assign_buckets(forest, table, capacity)

    cluster_bucket: dict[int, tuple[int, int]] = {}
    for bi, bucket in enumerate(buckets):
        for slot, cid in enumerate(bucket.cluster_ids):
            cluster_bucket[cid] = (bi, slot)

    edge_cache: dict[Condition, CipherHandle] = {}

    def edge_for(cond: Condition) -> CipherHandle:
        if cond not in edge_cache:
            feature, threshold, right = cond
            if (feature, threshold) not in bits:
                raise ModelError(f"missing comparison bit for ({feature}, {threshold})")
            edge_cache[cond] = edge_value(
                backend, bits[(feature, threshold)],
                "right" if right else "left", rng.nonzero_mod(t),
            )
        return edge_cache[cond]

    slot_values: dict[int, CipherHandle] = {}  # cluster id -> unpacked sum ct
    path_by_leaf = {(p.tree_index, p.leaf_index): p for p in table.paths}
    zero_ct: CipherHandle | None = None

    def descend(ti: int, tree: Tree, node: int, acc: CipherHandle | None) -> None:
        sp = tree.splits[node]
        for child, right in ((sp.left, False), (sp.right, True)):
            edge = edge_for((sp.feature, sp.threshold, right))
            branch = edge if acc is None else backend.add(acc, edge)
            if child < 0:
                info = path_by_leaf[(ti, -child - 1)]
                slot_values.setdefault(info.cluster_id, branch)
            else:
                descend(ti, tree, child, branch)

    for ti, tree in enumerate(forest.trees):
        if not tree.splits:
            info = path_by_leaf[(ti, 0)]
            if zero_ct is None:
                zero_ct = _make_zero_ct(backend, bits)
            slot_values.setdefault(info.cluster_id, zero_ct)
        else:
            descend(ti, tree, 0, None)

    # pack one representative slot per cluster
    n = backend.params.slot_count
    half = n // 2
    e0 = PlainVector(backend.params, _unit_vector(n, 0))
    packed: list[CipherHandle | None] = [None] * len(buckets)
    for cid, value in slot_values.items():
        bi, slot = cluster_bucket[cid]
        isolated = backend.mult(value, e0)
        placed = backend.rotate_rows_right(isolated, slot % half)
        if slot >= half:
            placed = backend.rotate_columns(placed)
        packed[bi] = placed if packed[bi] is None else backend.add(packed[bi], placed)

    cts = tuple(ct for ct in packed if ct is not None)
    if len(cts) != len(buckets):
        raise ModelError("internal: empty pack bucket")
    slot_map = {cid: cluster_bucket[cid] for cid in cluster_bucket}
    return SumPathPack(cts, tuple(buckets), slot_map)


def _unit_vector(n: int, slot: int) -> np.ndarray:
    arr = np.zeros(n, dtype=np.int64)
    arr[slot] = 1
    return arr


def _make_zero_ct(backend: ReferenceBackend, bits) -> CipherHandle:
    for bit in bits.values():
        zero = PlainVector(
            backend.params, np.zeros(backend.params.slot_count, dtype=np.int64)
        )
        return backend.mult(bit.ciphertext, zero)
    raise ModelError("forest has no decision nodes; nothing to evaluate")


# ---------------------------------------------------------------------------
# Leaf plaintext assembly
# ---------------------------------------------------------------------------


def leaf_plaintext(
    backend: ReferenceBackend,
    forest: Forest,
    table: PathTable,
    pack: SumPathPack,
    positions: list,
    class_id: int | None,
) -> list[PlainVector]:
    """Per-bucket leaf-score plaintexts aligned to the shuffled slots.

    ``positions[b]`` maps a bucket's packed slot to its post-shuffle slot
    (identity when no shuffle happened). Slot pi(s) of bucket b holds the
    summed scores of cluster member leaves matching ``class_id`` (all
    members, signed, when class_id is None); pad and fake slots stay zero.
    """
    if not forest.quantized:
        raise ModelError("leaf plaintext requires a quantized forest")
    if class_id is not None and not 0 <= class_id < forest.num_classes:
        raise ModelError(f"unknown class {class_id}")
    t = backend.params.plain_modulus
    n = backend.params.slot_count
    members = table.cluster_members()

    out = []
    for bi, bucket in enumerate(pack.buckets):
        arr = np.zeros(n, dtype=np.int64)
        position = positions[bi]
        for slot, cid in enumerate(bucket.cluster_ids):
            total = 0
            for info in members[cid]:
                tree = forest.trees[info.tree_index]
                leaf = tree.leaves[info.leaf_index]
                if class_id is None or leaf_class(tree, leaf) == class_id:
                    total += int(leaf.score)
            arr[position(slot)] = total % t
        out.append(PlainVector(backend.params, arr))
    return out


# ---------------------------------------------------------------------------
# Random forest generator (tests, benches)
# ---------------------------------------------------------------------------


def _uniform(rng: DeterministicRng) -> float:
    return rng.randint(1 << 32) / float(1 << 32)


def make_random_forest(
    rng: DeterministicRng,
    num_trees: int,
    max_depth: int,
    num_classes: int = 2,
    num_features: int = 4,
    model_kind: str = "xgboost",
    duplicate_rate: float = 0.0,
    leaf_prob: float = 0.3,
) -> Forest:
    """Random raw-float forest on unit-range features.

    ``duplicate_rate`` is the chance a split reuses an earlier
    (feature, threshold) pair, for engineering clustering scenarios.
    """
    features = tuple(FeatureRange(f"f{i}", 0.0, 1.0) for i in range(num_features))
    seen_pairs: list[tuple[str, float]] = []

    def make_split() -> tuple[str, float]:
        if seen_pairs and _uniform(rng) < duplicate_rate:
            return seen_pairs[rng.randint(len(seen_pairs))]
        pair = (f"f{rng.randint(num_features)}", round(0.05 + 0.9 * _uniform(rng), 6))
        seen_pairs.append(pair)
        return pair

    trees = []
    for ti in range(num_trees):
        splits: list[Split] = []
        leaves: list[LeafNode] = []
        weight = round(0.1 + 1.9 * _uniform(rng), 6) if model_kind == "adaboost" else None

        def new_leaf() -> int:
            if model_kind == "adaboost":
                sign = 1 if rng.randint(2) else -1
                leaves.append(LeafNode(sign * weight, 1 if sign > 0 else 0))
            else:
                leaves.append(LeafNode(round(_uniform(rng) * 2 - 1, 6)))
            return -len(leaves)

        def grow(depth: int) -> int:
            if depth >= max_depth or (depth > 0 and _uniform(rng) < leaf_prob):
                return new_leaf()
            feature, threshold = make_split()
            idx = len(splits)
            splits.append(Split(feature, threshold, 0, 0))
            left = grow(depth + 1)
            right = grow(depth + 1)
            splits[idx] = Split(feature, threshold, left, right)
            return idx

        if max_depth < 1:
            raise ModelError("max_depth must be >= 1")
        grow(0)
        class_id = ti % num_classes if (model_kind == "xgboost" and num_classes > 2) else None
        trees.append(Tree(tuple(splits), tuple(leaves), class_id, weight))
    return Forest(model_kind, num_classes, features, tuple(trees))
