"""Train gradient-boosting models and export them to the forest schema.

Exports scikit-learn ensembles (GradientBoostingClassifier for xgboost
mode, AdaBoostClassifier with SAMME weights for adaboost mode) as the
JSON document the inference engine consumes: per-tree split nodes with
child indices (negative v = leaf ~v), leaf scores, per-tree class ids /
weights, and per-feature value ranges.

All engine-facing numbers are written as exact decimal strings (repr of
the float), so quantization happens exactly once, engine-side, with no
drift across the process boundary. Base-score offsets are folded into the
first tree of each class: the schema's plain leaf-sum then reproduces
sklearn's raw decision function.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.ensemble import AdaBoostClassifier, GradientBoostingClassifier
from sklearn.tree import DecisionTreeClassifier


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint 0.6 : 0.2 : 0.2 train / test / validation row indices."""

    train: np.ndarray
    test: np.ndarray
    validation: np.ndarray


def split_rows(count: int, seed: int, ratios=(0.6, 0.2, 0.2)) -> DatasetSplit:
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")
    order = np.random.default_rng(seed).permutation(count)
    n_train = int(count * ratios[0])
    n_test = int(count * ratios[1])
    return DatasetSplit(
        train=order[:n_train],
        test=order[n_train : n_train + n_test],
        validation=order[n_train + n_test :],
    )


def read_labeled_csv(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-1] != "label":
            raise ValueError("expected the last CSV column to be 'label'")
        names = header[:-1]
        rows, labels = [], []
        for record in reader:
            rows.append([float(v) for v in record[:-1]])
            labels.append(int(float(record[-1])))
    return names, np.asarray(rows, dtype=np.float64), np.asarray(labels, dtype=np.int64)


def write_labeled_csv(path, names, rows, labels) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + ["label"])
        for row, label in zip(rows, labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


# ---------------------------------------------------------------------------
# tree extraction
# ---------------------------------------------------------------------------


def _tree_to_schema(tree, feature_names, leaf_score) -> tuple[list[dict], list[dict]]:
    """Flatten an sklearn tree_ into schema nodes and leaves.

    ``leaf_score(node_id) -> (score, class_id | None)``. Node children are
    remapped to schema indices: non-negative = split, negative v = leaf ~v.
    """
    left, right = tree.children_left, tree.children_right
    nodes: list[dict] = []
    leaves: list[dict] = []

    def walk(node_id: int) -> int:
        if left[node_id] == -1:  # sklearn leaf
            score, class_id = leaf_score(node_id)
            leaves.append(
                {"score": repr(float(score))}
                | ({"class_id": int(class_id)} if class_id is not None else {})
            )
            return -len(leaves)
        index = len(nodes)
        nodes.append(
            {
                "feature": feature_names[tree.feature[node_id]],
                "threshold": repr(float(tree.threshold[node_id])),
            }
        )
        nodes[index]["left"] = walk(left[node_id])
        nodes[index]["right"] = walk(right[node_id])
        return index

    root = walk(0)
    if root < 0 and not nodes:
        # single-leaf tree: schema allows exactly one leaf with no splits
        pass
    return nodes, leaves


def _export_xgboost(model: GradientBoostingClassifier, names, sample) -> list[dict]:
    """Per-class tree rounds with the init score folded into round zero."""
    lr = model.learning_rate
    n_classes = model.estimators_.shape[1]
    raw = model.decision_function(sample.reshape(1, -1))[0]
    raw = np.atleast_1d(raw)

    trees = []
    for k in range(n_classes):
        column = [model.estimators_[m, k].tree_ for m in range(model.estimators_.shape[0])]
        tree_sum = sum(
            lr * float(t.value[_leaf_of(t, sample)][0][0]) for t in column
        )
        init_k = float(raw[k]) - tree_sum
        for m, tree in enumerate(column):
            offset = init_k if m == 0 else 0.0

            def leaf_score(node_id, _tree=tree, _offset=offset):
                return lr * float(_tree.value[node_id][0][0]) + _offset, None

            nodes, leaves = _tree_to_schema(tree, names, leaf_score)
            doc = {"nodes": nodes, "leaves": leaves}
            if n_classes > 1:
                doc["class_id"] = k
            trees.append(doc)
    return trees


def _leaf_of(tree, sample) -> int:
    node = 0
    x = sample.astype(np.float32)
    while tree.children_left[node] != -1:
        if x[tree.feature[node]] <= tree.threshold[node]:
            node = tree.children_left[node]
        else:
            node = tree.children_right[node]
    return node


def _export_adaboost(model: AdaBoostClassifier, names) -> list[dict]:
    """Stump votes as +/- tree weight; the sign is the leaf's class vote."""
    trees = []
    for estimator, weight in zip(model.estimators_, model.estimator_weights_):
        if weight <= 0:
            continue
        tree = estimator.tree_

        def leaf_score(node_id, _tree=tree, _w=float(weight)):
            class_id = int(np.argmax(_tree.value[node_id][0]))
            return (_w if class_id == 1 else -_w), class_id

        nodes, leaves = _tree_to_schema(tree, names, leaf_score)
        trees.append({"weight": repr(float(weight)), "nodes": nodes, "leaves": leaves})
    return trees


# ---------------------------------------------------------------------------
# train + export
# ---------------------------------------------------------------------------


def train_export(
    csv_path,
    num_trees: int = 100,
    max_depth: int = 7,
    mode: str = "xgboost",
    seed: int = 0,
    out_dir=None,
) -> tuple[dict, dict]:
    """Split, train, export; returns (model document, manifest).

    With ``out_dir`` set, writes model.json, manifest.json, and the
    validation/test row CSVs next to each other.
    """
    names, rows, labels = read_labeled_csv(csv_path)
    classes = sorted(set(int(l) for l in labels))
    if classes != list(range(len(classes))):
        raise ValueError(f"labels must be 0..K-1, got {classes}")
    split = split_rows(len(rows), seed)
    x_train, y_train = rows[split.train], labels[split.train]

    if mode == "xgboost":
        model = GradientBoostingClassifier(
            n_estimators=num_trees, max_depth=max_depth, random_state=seed
        )
        model.fit(x_train, y_train)
        trees = _export_xgboost(model, names, x_train[0])
        num_classes = len(model.classes_)
    elif mode == "adaboost":
        if len(classes) != 2:
            raise ValueError("adaboost mode is binary")
        model = AdaBoostClassifier(
            estimator=DecisionTreeClassifier(max_depth=max_depth, random_state=seed),
            n_estimators=num_trees,
            random_state=seed,
        )
        model.fit(x_train, y_train)
        trees = _export_adaboost(model, names)
        num_classes = 2
    else:
        raise ValueError(f"unknown mode {mode!r}")

    document = {
        "model_kind": mode,
        "num_classes": num_classes,
        "features": [
            {
                "name": name,
                "min": repr(float(rows[:, i].min())),
                "max": repr(float(rows[:, i].max())),
            }
            for i, name in enumerate(names)
        ],
        "trees": trees,
    }

    test_accuracy = float(
        (model.predict(rows[split.test]) == labels[split.test]).mean()
    ) if len(split.test) else None
    manifest = {
        "mode": mode,
        "num_classes": num_classes,
        "trees": len(trees),
        "nodes": sum(len(t["nodes"]) for t in trees),
        "leaves": sum(len(t["leaves"]) for t in trees),
        "features": [
            {"name": f["name"], "min": f["min"], "max": f["max"]}
            for f in document["features"]
        ],
        "rows": {
            "train": int(len(split.train)),
            "test": int(len(split.test)),
            "validation": int(len(split.validation)),
        },
        "test_accuracy": test_accuracy,
    }

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "model.json").write_text(json.dumps(document, indent=1))
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
        write_labeled_csv(
            out / "validation.csv", names, rows[split.validation], labels[split.validation]
        )
        write_labeled_csv(out / "test.csv", names, rows[split.test], labels[split.test])
    return document, manifest
