"""Constant-weight number encodings and the client-side query layout.

A value in [0, 2^depth) is located on a complete binary tree (CBT) whose
nodes carry fixed-popcount codewords. A point encoding (PE) lists the
root-to-leaf labels of one value; a range encoding (RE) lists the minimal
node cover of the suffix range (beta, 2^depth - 1], one node per level at
most. Two values satisfy alpha > beta exactly when PE(alpha) and RE(beta)
share a label at some level, which the comparison module evaluates
homomorphically.

The second half of the module is the query wire layout: bit-plane packing
with per-feature repetition (one slot group per distinct server threshold),
structural compression that interleaves repetition-count many bit-planes
into one ciphertext, and the server-side homomorphic decompression that
restores the repetitions with rotations, masks and additions only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from .fhe import CapacityError, CipherHandle, FheParams, PlainVector, ReferenceBackend, SecretKey

__all__ = [
    "EncodingError",
    "CWCodeword",
    "PEVector",
    "REVector",
    "cw_encode",
    "cw_decode",
    "codeword_length",
    "pe_encode",
    "re_encode",
    "re_cover_blocks",
    "FeatureSlot",
    "QueryLayout",
    "CompressedQuery",
    "pack_query",
    "pack_query_planes",
    "compress_query",
    "decompress_query",
]


class EncodingError(Exception):
    """Value outside its codebook, or a layout contract violation."""


# ---------------------------------------------------------------------------
# Constant-weight codewords
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CWCodeword:
    """Fixed-length bit tuple with a constant number of ones."""

    bits: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.bits)

    @property
    def weight(self) -> int:
        return sum(self.bits)

    def __str__(self):
        return "".join(str(b) for b in self.bits)


def codeword_length(alphabet_size: int, weight: int) -> int:
    """Smallest length l with C(l, weight) >= alphabet_size."""
    if alphabet_size < 1 or weight < 1:
        raise EncodingError("alphabet size and weight must be positive")
    length = weight
    while comb(length, weight) < alphabet_size:
        length += 1
    return length


@lru_cache(maxsize=1 << 16)
def cw_encode(value: int, length: int, weight: int) -> CWCodeword:
    """Rank ``value`` into the weight-``weight`` codebook of ``length`` bits.

    Lexicographic combinatorial ranking: codeword 0 has all ones leftmost
    (e.g. 111000 for length 6, weight 3) and one-position sets enumerate in
    ascending lexicographic order. Bijective and invertible; cached, as
    deep layouts rank the same node labels for every query.
    """
    if not 0 <= value < comb(length, weight):
        raise EncodingError(
            f"value {value} outside codebook of {comb(length, weight)} words"
        )
    bits = [0] * length
    v, w = value, weight
    for pos in range(length):
        if w == 0:
            break
        here = comb(length - pos - 1, w - 1)
        if v < here:
            bits[pos] = 1
            w -= 1
        else:
            v -= here
    return CWCodeword(tuple(bits))


def cw_decode(word: CWCodeword) -> int:
    """Inverse of :func:`cw_encode`."""
    value, w = 0, word.weight
    for pos, bit in enumerate(word.bits):
        if w == 0:
            break
        here = comb(word.length - pos - 1, w - 1)
        if bit:
            w -= 1
        else:
            value += here
    return value


# ---------------------------------------------------------------------------
# Point and range encodings over the CBT
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PEVector:
    """Root-to-leaf labels locating one leaf value; index = CBT level."""

    labels: tuple[CWCodeword, ...]

    @property
    def depth(self) -> int:
        return len(self.labels) - 1


@dataclass(frozen=True)
class REVector:
    """Per-level cover labels of the suffix range (beta, 2^depth - 1]."""

    labels: tuple[CWCodeword | None, ...]

    @property
    def depth(self) -> int:
        return len(self.labels) - 1


def _check_cbt_value(value: int, cbt_depth: int) -> None:
    if not 0 <= value < (1 << cbt_depth):
        raise EncodingError(f"value {value} outside CBT of depth {cbt_depth}")


def pe_encode(alpha: int, cbt_depth: int, length: int, weight: int) -> PEVector:
    """Labels of the root-to-leaf path of leaf ``alpha``, root first."""
    _check_cbt_value(alpha, cbt_depth)
    labels = tuple(
        cw_encode(alpha >> (cbt_depth - d), length, weight)
        for d in range(cbt_depth + 1)
    )
    return PEVector(labels)


def re_cover_blocks(beta: int, cbt_depth: int) -> list[tuple[int, int]]:
    """Minimal aligned cover of (beta, 2^depth - 1] as (level, node index).

    Greedy over the suffix range; each level contributes at most one node.
    Empty for beta == 2^depth - 1.
    """
    _check_cbt_value(beta, cbt_depth)
    blocks: list[tuple[int, int]] = []
    lo, hi = beta + 1, (1 << cbt_depth) - 1
    while lo <= hi:
        size = lo & -lo if lo else 1 << cbt_depth
        while lo + size - 1 > hi:
            size //= 2
        level = cbt_depth - size.bit_length() + 1
        blocks.append((level, lo >> (cbt_depth - level)))
        lo += size
    return blocks


def re_encode(beta: int, cbt_depth: int, length: int, weight: int) -> REVector:
    """Range encoding of (beta, 2^depth - 1]; null levels carry None."""
    labels: list[CWCodeword | None] = [None] * (cbt_depth + 1)
    for level, index in re_cover_blocks(beta, cbt_depth):
        labels[level] = cw_encode(index, length, weight)
    return REVector(tuple(labels))


# ---------------------------------------------------------------------------
# Query layout
# ---------------------------------------------------------------------------

LAYOUT_VERSION = 1


@dataclass(frozen=True)
class FeatureSlot:
    """One feature's packing anchor and quantization range."""

    name: str
    start: int
    minimum: float
    maximum: float


@dataclass(frozen=True)
class QueryLayout:
    """Slot map a client needs to pack a query the server can evaluate.

    Every feature gets ``repetitions`` slots (gap apart) starting at its
    anchor, mirrored across the two slot halves to use all of them. All
    features share one gap: the compression algorithm restores every
    feature's repetitions with a single SIMD rotation schedule only under
    that equal-gap discipline.

    Bit-planes cover CBT levels 1..depth. The root label is identical for
    every value and the suffix-range cover never includes the root, so
    level 0 carries no comparison information.
    """

    features: tuple[FeatureSlot, ...]
    gap: int
    repetitions: int
    bitwidth: int
    cw_length: int
    cw_weight: int
    slot_count: int

    @property
    def cbt_depth(self) -> int:
        return self.bitwidth

    @property
    def plane_count(self) -> int:
        """Bit-planes per query before compression (M)."""
        return self.cbt_depth * self.cw_length

    def plane_index(self, level: int, bit: int) -> int:
        if not 1 <= level <= self.cbt_depth:
            raise EncodingError(f"level {level} outside 1..{self.cbt_depth}")
        return (level - 1) * self.cw_length + bit

    def feature_slot(self, name: str) -> FeatureSlot:
        for spec in self.features:
            if spec.name == name:
                return spec
        raise EncodingError(f"feature {name!r} missing from layout")

    def slot_of(self, name: str, repetition: int) -> int:
        if not 0 <= repetition < self.repetitions:
            raise EncodingError(f"repetition {repetition} outside layout")
        return self.feature_slot(name).start + repetition * self.gap

    def quantize_value(self, name: str, value: float) -> int:
        spec = self.feature_slot(name)
        return quantize_to_grid(value, spec.minimum, spec.maximum, self.bitwidth)

    @classmethod
    def build(
        cls,
        features: list[tuple[str, float, float]],
        repetitions: int,
        bitwidth: int,
        params: FheParams,
        weight: int = 2,
        gap: int = 1,
    ) -> "QueryLayout":
        """Anchor features in mirrored half-blocks of ``repetitions`` slots."""
        if repetitions < 1:
            raise EncodingError("repetitions must be >= 1")
        half = params.slot_count // 2
        block = repetitions * gap
        per_half = (len(features) + 1) // 2
        if per_half * block > half:
            raise CapacityError(
                f"{len(features)} features x {repetitions} repetitions exceed "
                f"{params.slot_count} slots"
            )
        slots = []
        for idx, (name, lo, hi) in enumerate(features):
            base = (idx // 2) * block + (idx % 2) * half
            slots.append(FeatureSlot(name, base, float(lo), float(hi)))
        length = codeword_length(1 << bitwidth, weight)
        return cls(
            features=tuple(slots),
            gap=gap,
            repetitions=repetitions,
            bitwidth=bitwidth,
            cw_length=length,
            cw_weight=weight,
            slot_count=params.slot_count,
        )

    # Exchanged at protocol setup as a versioned JSON document.

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": LAYOUT_VERSION,
                "gap": self.gap,
                "repetitions": self.repetitions,
                "bitwidth": self.bitwidth,
                "cw_length": self.cw_length,
                "cw_weight": self.cw_weight,
                "slot_count": self.slot_count,
                "features": [
                    {"name": f.name, "start": f.start, "min": f.minimum, "max": f.maximum}
                    for f in self.features
                ],
            }
        )

    @classmethod
    def from_json(cls, raw: str) -> "QueryLayout":
        doc = json.loads(raw)
        if doc.get("version") != LAYOUT_VERSION:
            raise EncodingError(f"unsupported layout version {doc.get('version')}")
        return cls(
            features=tuple(
                FeatureSlot(f["name"], int(f["start"]), float(f["min"]), float(f["max"]))
                for f in doc["features"]
            ),
            gap=int(doc["gap"]),
            repetitions=int(doc["repetitions"]),
            bitwidth=int(doc["bitwidth"]),
            cw_length=int(doc["cw_length"]),
            cw_weight=int(doc["cw_weight"]),
            slot_count=int(doc["slot_count"]),
        )


def quantize_to_grid(value: float, minimum: float, maximum: float, bitwidth: int) -> int:
    """Affine map onto [0, 2^bitwidth), floored, endpoints clamped."""
    top = (1 << bitwidth) - 1
    if maximum <= minimum:
        return 0
    scaled = int((float(value) - minimum) * top / (maximum - minimum))
    return max(0, min(top, scaled))


# ---------------------------------------------------------------------------
# Packing, compression, decompression
# ---------------------------------------------------------------------------


def pack_query_planes(features: dict[str, int], layout: QueryLayout) -> list[np.ndarray]:
    """Uncompressed bit-plane slot arrays for quantized feature values.

    Plane (level, bit) holds, for every feature, that bit of the feature's
    PE label at that level, repeated ``layout.repetitions`` times at the
    feature's (start, gap) slots.
    """
    top = 1 << layout.bitwidth
    total = layout.plane_count
    planes = np.zeros((total, layout.slot_count), dtype=np.int64)
    for spec in layout.features:
        if spec.name not in features:
            raise EncodingError(f"feature {spec.name!r} missing from query")
        value = features[spec.name]
        if not 0 <= value < top:
            raise EncodingError(f"feature {spec.name!r}={value} not quantized to layout bitwidth")
        pe = pe_encode(value, layout.cbt_depth, layout.cw_length, layout.cw_weight)
        column = np.fromiter(
            (b for label in pe.labels[1:] for b in label.bits), dtype=np.int64, count=total
        )
        for rep in range(layout.repetitions):
            planes[:, spec.start + rep * layout.gap] = column
    return list(planes)


def pack_query(
    backend: ReferenceBackend,
    features: dict[str, int],
    layout: QueryLayout,
    key: SecretKey,
) -> list[CipherHandle]:
    """Encrypt the uncompressed repetitive encoding (one ct per bit-plane)."""
    return [
        backend.encrypt(PlainVector(backend.params, plane), key)
        for plane in pack_query_planes(features, layout)
    ]


@dataclass(frozen=True)
class CompressedQuery:
    """ceil(M / repetitions) ciphertexts of interleaved bit-planes."""

    ciphertexts: tuple[CipherHandle, ...]
    layout: QueryLayout


def compress_query(
    backend: ReferenceBackend,
    planes: list[np.ndarray],
    layout: QueryLayout,
    key: SecretKey,
) -> CompressedQuery:
    """Remove repetitive encoding, regroup, and encrypt.

    Plane number m lands in compressed array m // R at slot
    ``start + (m mod R) * gap`` per feature: the slots freed by dropping
    R-1 repetitions hold R distinct bit-planes instead.
    """
    r = layout.repetitions
    if r == 1:
        cts = tuple(
            backend.encrypt(PlainVector(backend.params, p.copy()), key) for p in planes
        )
        return CompressedQuery(cts, layout)
    total = len(planes)
    stacked = np.stack(planes)
    groups = np.zeros((-(-total // r), layout.slot_count), dtype=np.int64)
    group_index = np.arange(total) // r
    repeat_index = np.arange(total) % r
    for spec in layout.features:
        bits = stacked[:, spec.start]  # repetition stripped: anchor slot suffices
        groups[group_index, spec.start + repeat_index * layout.gap] = bits
    cts = tuple(
        backend.encrypt(PlainVector(backend.params, g), key) for g in groups
    )
    return CompressedQuery(cts, layout)


def decompress_query(
    backend: ReferenceBackend, compressed: CompressedQuery
) -> list[CipherHandle]:
    """Restore the M uncompressed planes homomorphically.

    Per plane: one mask multiplication isolating its interleaved slots,
    then at most R-1 row rotations re-create the repetitions of every
    feature simultaneously (equal gaps make the schedule SIMD).
    """
    layout = compressed.layout
    r = layout.repetitions
    total = layout.plane_count
    if len(compressed.ciphertexts) != -(-total // r):
        raise EncodingError(
            f"expected {-(-total // r)} compressed ciphertexts, got "
            f"{len(compressed.ciphertexts)}"
        )
    if r == 1:
        return list(compressed.ciphertexts)

    planes: list[CipherHandle] = []
    masks = []
    for rep in range(r):
        arr = np.zeros(layout.slot_count, dtype=np.int64)
        for spec in layout.features:
            arr[spec.start + rep * layout.gap] = 1
        masks.append(PlainVector(backend.params, arr))

    for m in range(total):
        group, rep = divmod(m, r)
        isolated = backend.mult(compressed.ciphertexts[group], masks[rep])
        restored = isolated
        for target in range(r):
            if target == rep:
                continue
            shifted = _rotate_signed(backend, isolated, (target - rep) * layout.gap)
            restored = backend.add(restored, shifted)
        planes.append(restored)
    return planes


def _rotate_signed(backend: ReferenceBackend, ct: CipherHandle, offset: int) -> CipherHandle:
    """Row-rotate so slot s moves to slot s + offset (offset may be negative)."""
    half = backend.params.half
    left = (-offset) % half
    if left == 0:
        return ct
    return backend.rotate_rows(ct, left)
