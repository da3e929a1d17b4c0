"""Plaintext-oracle prediction over exported model documents.

Deliberately independent of the inference engine's code: this module
re-implements traversal and scoring from the schema alone, so engine/
oracle agreement is a meaningful cross-check. The quantization grid and
fixed-point rules are part of the schema contract and are reproduced
here verbatim: floored affine map onto [0, 2^bitwidth), strict
greater-than routing, scores scaled by 2^12 and summed as exact integers.
"""

from __future__ import annotations

import json
from pathlib import Path

SCORE_SCALE_BITS = 12


def load_document(source) -> dict:
    if isinstance(source, dict):
        return source
    return json.loads(Path(source).read_text())


def quantize_value(value: float, lo: float, hi: float, bitwidth: int) -> int:
    top = (1 << bitwidth) - 1
    if hi <= lo:
        return 0
    scaled = int((float(value) - lo) * top / (hi - lo))
    return max(0, min(top, scaled))


def _ranges(document: dict) -> dict[str, tuple[float, float]]:
    return {
        f["name"]: (float(f["min"]), float(f["max"])) for f in document["features"]
    }


def _walk(tree: dict, lookup) -> dict:
    """Route by strict x > threshold; returns the reached leaf object."""
    nodes = tree.get("nodes", [])
    if not nodes:
        return tree["leaves"][0]
    node = nodes[0]
    while True:
        child = node["right"] if lookup(node) else node["left"]
        if child < 0:
            return tree["leaves"][-child - 1]
        node = nodes[child]


def _scores_for_row(document: dict, row: dict, lookup_factory) -> list:
    num_classes = int(document["num_classes"])
    kind = document["model_kind"]
    multi = kind == "xgboost" and num_classes > 2
    buckets = [0] * (num_classes if multi else 1)
    for tree in document["trees"]:
        leaf = _walk(tree, lookup_factory(tree, row))
        score = lookup_factory.score(tree, leaf)
        if multi:
            class_id = tree.get("class_id", leaf.get("class_id"))
            if class_id is None:
                raise ValueError("multi-class tree without class assignment")
            buckets[int(class_id)] += score
        else:
            buckets[0] += score
    return buckets


class _QuantizedRules:
    """Integer comparisons on the bitwidth grid, 2^12 fixed-point scores."""

    def __init__(self, document: dict, bitwidth: int):
        self.bitwidth = bitwidth
        self.ranges = _ranges(document)
        self.scale = 1 << SCORE_SCALE_BITS

    def __call__(self, tree, row):
        quantized_row = {
            name: quantize_value(row[name], lo, hi, self.bitwidth)
            for name, (lo, hi) in self.ranges.items()
        }

        def lookup(node):
            lo, hi = self.ranges[node["feature"]]
            threshold = quantize_value(float(node["threshold"]), lo, hi, self.bitwidth)
            return quantized_row[node["feature"]] > threshold

        return lookup

    def score(self, tree, leaf):
        return int(round(float(leaf["score"]) * self.scale))


class _RawRules:
    """Float comparisons on raw thresholds (the clustering gate's view)."""

    def __call__(self, tree, row):
        return lambda node: row[node["feature"]] > float(node["threshold"])

    def score(self, tree, leaf):
        return float(leaf["score"])


def predict_class(scores: list) -> int:
    if len(scores) == 1:
        return 1 if scores[0] > 0 else 0
    best = 0
    for i, s in enumerate(scores):
        if s > scores[best]:
            best = i
    return best


def oracle_predict(document, rows: list[dict], bitwidth: int) -> list[dict]:
    """Per-row class and raw per-class scores under quantized arithmetic."""
    document = load_document(document)
    rules = _QuantizedRules(document, bitwidth)
    out = []
    for index, row in enumerate(rows):
        scores = _scores_for_row(document, row, rules)
        out.append(
            {
                "row": index,
                "predicted_class": predict_class(scores),
                "class_scores": [int(s) for s in scores],
            }
        )
    return out


def oracle_predict_raw(document, rows: list[dict]) -> list[int]:
    """Unquantized predictions (raw float thresholds)."""
    document = load_document(document)
    rules = _RawRules()
    return [predict_class(_scores_for_row(document, row, rules)) for row in rows]


def validate_accuracy(document, rows: list[dict], labels: list[int]) -> float:
    """Share of raw-threshold predictions matching the labels."""
    if not rows:
        raise ValueError("validation set is empty")
    predictions = oracle_predict_raw(document, rows)
    return sum(p == l for p, l in zip(predictions, labels)) / len(rows)
