"""Homomorphic greater-than over constant-weight encodings.

Equality of two weight-h labels reduces to "exactly h of the encrypted
bits selected by the plaintext label's ones are set": one plain
multiplication selects the bits, additions collect the overlap count s,
and the falling-factorial indicator prod_{j<h}(s - j) / h! is 1 iff
s == h. Multiplicative depth is therefore ceil(log2 h) + 2 regardless of
the operand bitwidth: +1 for the selection mask, ceil(log2 h) for the
balanced product tree, +1 for the normalization constant.

Greater-than ORs the per-level equalities of PE(alpha) against RE(beta).
The range-cover nodes of an RE are ancestors of disjoint leaf sets, so at
most one level matches and the OR is realized as a plain sum, adding no
depth.

``batch_compare`` evaluates every distinct (feature, threshold) node of a
plan in one SIMD pass over the query's bit-planes, then spends one
rotation per plan entry (row and column rotations combined, thanks to the
mirrored slot layout) aligning each result bit to slot 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .encoding import CWCodeword, PEVector, QueryLayout, REVector, re_encode
from .fhe import CipherHandle, PlainVector, ReferenceBackend, SecretKey

__all__ = [
    "ComparisonError",
    "ComparisonBit",
    "NodePlan",
    "PlanEntry",
    "is_equal",
    "greater_than",
    "encrypt_pe",
    "batch_compare",
]


class ComparisonError(Exception):
    pass


@dataclass(frozen=True)
class ComparisonBit:
    """Ciphertext whose ``slot_index`` slot holds 1 iff feature > threshold."""

    ciphertext: CipherHandle
    slot_index: int = 0


@dataclass(frozen=True)
class PlanEntry:
    feature: str
    threshold: int
    slot: int | None = None


@dataclass(frozen=True)
class NodePlan:
    """Distinct (feature, threshold) pairs to compare, post-clustering."""

    entries: tuple[PlanEntry, ...]

    def __post_init__(self):
        pairs = [(e.feature, e.threshold) for e in self.entries]
        if len(set(pairs)) != len(pairs):
            raise ComparisonError("duplicate (feature, threshold) pair in plan")

    def __len__(self):
        return len(self.entries)

    @classmethod
    def from_pairs(cls, pairs) -> "NodePlan":
        unique = sorted(set(pairs))
        return cls(tuple(PlanEntry(f, t) for f, t in unique))

    def max_per_feature(self) -> int:
        counts: dict[str, int] = {}
        for e in self.entries:
            counts[e.feature] = counts.get(e.feature, 0) + 1
        return max(counts.values(), default=1)

    def with_slots(self, layout: QueryLayout) -> "NodePlan":
        """Assign each entry its repetition slot: per feature, thresholds in
        ascending order occupy repetitions 0, 1, ..."""
        by_feature: dict[str, list[int]] = {}
        for e in self.entries:
            by_feature.setdefault(e.feature, []).append(e.threshold)
        placed = []
        for e in self.entries:
            rep = sorted(by_feature[e.feature]).index(e.threshold)
            placed.append(PlanEntry(e.feature, e.threshold, layout.slot_of(e.feature, rep)))
        return NodePlan(tuple(placed))


# ---------------------------------------------------------------------------
# Single-label / single-pair circuits
# ---------------------------------------------------------------------------


def _exact_weight_indicator(
    backend: ReferenceBackend, overlap: CipherHandle, weight: int
) -> CipherHandle:
    """1 where a slot of ``overlap`` equals ``weight``, 0 for smaller values.

    Falling factorial prod_{j<weight}(s - j) vanishes for s < weight and
    equals weight! at s == weight; the inverse-factorial constant
    normalizes. Slots may legally hold any s in [0, weight].
    """
    t = backend.params.plain_modulus
    terms = [overlap if j == 0 else backend.add_scalar(overlap, -j) for j in range(weight)]
    while len(terms) > 1:
        nxt = [
            backend.mult(terms[i], terms[i + 1]) if i + 1 < len(terms) else terms[i]
            for i in range(0, len(terms), 2)
        ]
        terms = nxt
    inv = pow(factorial(weight), -1, t)
    return backend.mult_scalar(terms[0], inv)


def is_equal(
    backend: ReferenceBackend, enc_label: CipherHandle, plain_label: CWCodeword
) -> CipherHandle:
    """Equality of an encrypted label against a plaintext label.

    ``enc_label`` holds the client label's bits in slots [0, length).
    Output slot 0 decrypts to 1 iff the labels are equal; depth consumed
    is exactly ceil(log2 weight) + 2.
    """
    n = backend.params.slot_count
    length, weight = plain_label.length, plain_label.weight
    if length > n // 2:
        raise ComparisonError(f"label length {length} exceeds half row of {n} slots")
    mask = np.zeros(n, dtype=np.int64)
    mask[:length] = plain_label.bits
    selected = backend.mult(enc_label, PlainVector(backend.params, mask))
    # overlap count into slot 0: doubling-window rotate-and-add
    span = 1
    overlap = selected
    while span < length:
        overlap = backend.add(overlap, backend.rotate_rows(overlap, span))
        span *= 2
    return _exact_weight_indicator(backend, overlap, weight)


def encrypt_pe(
    backend: ReferenceBackend, pe: PEVector, key: SecretKey
) -> list[CipherHandle]:
    """One ciphertext per CBT level, label bits in slots [0, length)."""
    return [
        backend.encrypt(backend.encode(list(label.bits)), key) for label in pe.labels
    ]


def greater_than(
    backend: ReferenceBackend, enc_pe: list[CipherHandle], plain_re: REVector
) -> ComparisonBit:
    """alpha > beta from encrypted PE(alpha) and plaintext RE(beta).

    Sum of per-level equalities over the non-null cover levels; the cover
    blocks are disjoint so at most one term is 1.
    """
    if len(enc_pe) != len(plain_re.labels):
        raise ComparisonError(
            f"PE has {len(enc_pe)} levels, RE has {len(plain_re.labels)}"
        )
    acc: CipherHandle | None = None
    for level_ct, label in zip(enc_pe, plain_re.labels):
        if label is None:
            continue
        eq = is_equal(backend, level_ct, label)
        acc = eq if acc is None else backend.add(acc, eq)
    if acc is None:
        # empty range: beta is the maximum, alpha > beta is identically 0
        zero = PlainVector(backend.params, np.zeros(backend.params.slot_count, dtype=np.int64))
        acc = backend.mult(enc_pe[0], zero)
    return ComparisonBit(acc, 0)


# ---------------------------------------------------------------------------
# Batched SIMD comparison over the packed query
# ---------------------------------------------------------------------------


def batch_compare(
    backend: ReferenceBackend,
    planes: list[CipherHandle],
    plan: NodePlan,
    layout: QueryLayout,
) -> dict[tuple[str, int], ComparisonBit]:
    """All plan comparisons at once over decompressed query bit-planes.

    One selection-mask pass per CBT level computes every entry's overlap
    count in its own slot; the falling-factorial indicator and the level
    sum then run SIMD-wide. Alignment afterwards costs |plan| rotations
    total: entries pair up across slot halves, one row rotation per shared
    offset plus one column rotation per second-half entry.
    """
    if len(planes) != layout.plane_count:
        raise ComparisonError(
            f"expected {layout.plane_count} planes, got {len(planes)}"
        )
    for entry in plan.entries:
        if entry.slot is None:
            raise ComparisonError("plan has no slot assignment; call with_slots()")

    n = backend.params.slot_count
    weight = layout.cw_weight
    res = {}
    for entry in plan.entries:
        res[(entry.feature, entry.threshold)] = re_encode(
            entry.threshold, layout.cbt_depth, layout.cw_length, weight
        )

    total: CipherHandle | None = None
    for level in range(1, layout.cbt_depth + 1):
        masks = np.zeros((layout.cw_length, n), dtype=np.int64)
        active = False
        for entry in plan.entries:
            label = res[(entry.feature, entry.threshold)].labels[level]
            if label is None:
                continue
            active = True
            for bit, value in enumerate(label.bits):
                if value:
                    masks[bit, entry.slot] = 1
        if not active:
            continue
        overlap: CipherHandle | None = None
        for bit in range(layout.cw_length):
            if not masks[bit].any():
                continue
            term = backend.mult(
                planes[layout.plane_index(level, bit)],
                PlainVector(backend.params, masks[bit]),
            )
            overlap = term if overlap is None else backend.add(overlap, term)
        eq = _exact_weight_indicator(backend, overlap, weight)
        total = eq if total is None else backend.add(total, eq)

    if total is None:
        raise ComparisonError("plan is empty")

    # Align each entry's bit to slot 0 of the first half. Entries sharing a
    # row offset reuse one row rotation; second-half entries add one column
    # rotation each.
    half = n // 2
    rotated_by_offset: dict[int, CipherHandle] = {}
    out: dict[tuple[str, int], ComparisonBit] = {}
    for entry in plan.entries:
        offset = entry.slot % half
        if offset not in rotated_by_offset:
            rotated_by_offset[offset] = backend.rotate_rows(total, offset)
        aligned = rotated_by_offset[offset]
        if entry.slot >= half:
            aligned = backend.rotate_columns(aligned)
        out[(entry.feature, entry.threshold)] = ComparisonBit(aligned, 0)
    return out
