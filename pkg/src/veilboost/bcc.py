"""Blind code conversion: padding, homomorphic shuffle, client conversion.

The packed SumPath ciphertext leaks model statistics if sent for
conversion as-is (zero slots count trees, used slots count paths). The
server therefore pads it to a fixed per-class frequency profile, shuffles
the slots homomorphically, and only then asks the client to convert
(0 -> 1, nonzero -> 0) and re-encrypt. Decrypted challenge ciphertexts
then always show the same class counts, whatever the model.

The shuffle works on a power-of-two body of n <= N/2 slots replicated
across the vector: log2(n) rounds each split the ciphertext into two
out-of-phase interleaves of 2^s-slot blocks, rotate them independently by
random multiples of 2^s, and recombine. Rotation offsets are constrained
to be congruent modulo 2^(s+1) so the two rotated interleaves land on
disjoint slot sets (no slot is double-written). The server records the
composed permutation: it alone can relate shuffled positions back to path
clusters.

Caveat inherited from the design: with cross-tree path clusters, two
trees' true paths can coincide in one slot for some queries, making the
realized zero count dip below the tree count the padding assumed. Models
without duplicate cross-tree condition multisets (any generically trained
forest) are unaffected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fhe import (
    CapacityError,
    CipherHandle,
    FheError,
    PlainVector,
    ReferenceBackend,
    SecretKey,
)
from .rng import DeterministicRng

__all__ = [
    "BccError",
    "FrequencyProfile",
    "ShuffleRecord",
    "BccTranscript",
    "profile_for_counts",
    "pad_to_profile",
    "replicate",
    "draw_shuffle_rounds",
    "compose_body_permutation",
    "blind_shuffle",
    "run_challenge",
    "client_convert",
    "xgboost_conversion",
]

PAD_ZERO = "zero"
PAD_RANDOM = "random"


class BccError(FheError):
    pass


@dataclass(frozen=True)
class FrequencyProfile:
    """Fixed per-class slot counts the padded ciphertext always exhibits.

    Two value classes (zero / nonzero-random) suffice for forest scoring.
    ``body_length`` is the shuffled body n; the tail counts cover the
    remaining N - n slots so the full ciphertext's class totals are fixed
    too.
    """

    body_length: int
    body_zeros: int
    body_randoms: int
    tail_zeros: int
    tail_randoms: int

    def __post_init__(self):
        n = self.body_length
        if n < 2 or n & (n - 1):
            raise BccError(f"body length must be a power of two >= 2, got {n}")
        if self.body_zeros + self.body_randoms != n:
            raise BccError("body class counts must sum to the body length")
        if min(self.body_zeros, self.body_randoms, self.tail_zeros, self.tail_randoms) < 0:
            raise BccError("negative class count")

    @property
    def total_zeros(self) -> int:
        return self.body_zeros + self.tail_zeros

    @property
    def total_randoms(self) -> int:
        return self.body_randoms + self.tail_randoms

    def tail_length(self) -> int:
        return self.tail_zeros + self.tail_randoms

    def to_dict(self) -> dict:
        return {
            "body_length": self.body_length,
            "body_zeros": self.body_zeros,
            "body_randoms": self.body_randoms,
            "tail_zeros": self.tail_zeros,
            "tail_randoms": self.tail_randoms,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FrequencyProfile":
        return cls(
            int(doc["body_length"]), int(doc["body_zeros"]), int(doc["body_randoms"]),
            int(doc["tail_zeros"]), int(doc["tail_randoms"]),
        )


def profile_for_counts(zero_count: int, random_count: int, slot_count: int) -> FrequencyProfile:
    """Balanced profile fitting the given per-class caps.

    n = smallest power of two >= 2 * max(expected zeros, expected randoms),
    split half and half; tail splits N - n evenly. Errors when the body
    cannot fit in half the slots (the shuffle needs a replicated body).
    """
    need = max(zero_count, random_count, 1)
    n = 2
    while n < 2 * need:
        n *= 2
    if n > slot_count // 2:
        raise CapacityError(
            f"profile body {n} exceeds half of {slot_count} slots; split the model"
        )
    tail = slot_count - n
    return FrequencyProfile(n, n // 2, n // 2, tail // 2, tail - tail // 2)


@dataclass(frozen=True)
class ShuffleRecord:
    """Server-side bookkeeping: the exact composed permutation and pad map.

    ``body_perm[i]`` is the post-shuffle position of body slot i. The
    server uses the forward map to align leaf plaintexts; the inverse map
    answers where a shuffled slot came from ("body" index, "pad" class, or
    "tail" class).
    """

    body_length: int
    used_slots: int
    rounds: tuple[tuple[int, int], ...]
    body_perm: tuple[int, ...]
    pad_classes: tuple[str, ...]   # classes of body slots [used, n)
    tail_classes: tuple[str, ...]  # classes of slots [n, N)

    def position_of(self, body_slot: int) -> int:
        return self.body_perm[body_slot]

    def origin_of(self, slot: int) -> tuple[str, int | str]:
        """Inverse lookup: ("body", original slot) or pad/tail sentinel."""
        n = self.body_length
        if slot < 0 or slot >= n + len(self.tail_classes):
            raise BccError(f"slot {slot} outside ciphertext")
        if slot >= n:
            return ("tail", self.tail_classes[slot - n])
        original = self.body_perm.index(slot)
        if original < self.used_slots:
            return ("body", original)
        return ("pad", self.pad_classes[original - self.used_slots])


@dataclass
class BccTranscript:
    """One conversion round's artifacts, for inspection and leakage tests."""

    c_input: CipherHandle
    c_padded: CipherHandle
    c_shuffled: CipherHandle
    record: ShuffleRecord
    rotations_used: int
    c_converted: CipherHandle | None = None


# ---------------------------------------------------------------------------
# Server side
# ---------------------------------------------------------------------------


def pad_to_profile(
    backend: ReferenceBackend,
    ct: CipherHandle,
    used_slots: int,
    zero_count: int,
    profile: FrequencyProfile,
    rng: DeterministicRng,
) -> tuple[CipherHandle, tuple[str, ...]]:
    """Fill body slots [used, n) so each class reaches its fixed count.

    The server knows ``zero_count`` without decrypting: it equals the
    bucket's tree count, and used - zero_count its non-tree path clusters.
    """
    n = profile.body_length
    random_count = used_slots - zero_count
    if used_slots > n:
        raise CapacityError(f"{used_slots} used slots exceed profile body {n}")
    if zero_count > profile.body_zeros:
        raise BccError(
            f"{zero_count} zeros exceed the profile's {profile.body_zeros}"
        )
    if random_count > profile.body_randoms:
        raise BccError(
            f"{random_count} randoms exceed the profile's {profile.body_randoms}"
        )
    classes = [PAD_ZERO] * (profile.body_zeros - zero_count) + [PAD_RANDOM] * (
        profile.body_randoms - random_count
    )
    rng.shuffle(classes)
    arr = np.zeros(backend.params.slot_count, dtype=np.int64)
    for offset, cls in enumerate(classes):
        if cls == PAD_RANDOM:
            arr[used_slots + offset] = rng.nonzero_mod(backend.params.plain_modulus)
    padded = backend.add(ct, PlainVector(backend.params, arr))
    return padded, tuple(classes)


def replicate(backend: ReferenceBackend, ct: CipherHandle, n: int) -> CipherHandle:
    """Tile the n-slot body across all N slots in log2(N/n) rotate-and-adds."""
    params = backend.params
    if n > params.slot_count:
        raise CapacityError(f"body {n} exceeds {params.slot_count} slots")
    if n & (n - 1):
        raise BccError(f"body length must be a power of two, got {n}")
    if n == params.slot_count:
        return ct
    span = n
    while span < params.half:
        ct = backend.add(ct, backend.rotate_rows_right(ct, span))
        span *= 2
    return backend.add(ct, backend.rotate_columns(ct))


def _interleave_masks(params, gap: int) -> tuple[PlainVector, PlainVector]:
    """Out-of-phase 0/1 block masks of the given gap: M1 + M2 = all ones."""
    n = params.slot_count
    block = (np.arange(n) // gap) % 2
    m1 = PlainVector(params, block.astype(np.int64))          # zeros first
    m2 = PlainVector(params, (1 - block).astype(np.int64))    # ones first
    return m1, m2


def draw_shuffle_rounds(n: int, rng: DeterministicRng) -> list[tuple[int, int]]:
    """Per-round rotation pair (r1, r2), both multiples of 2^s.

    r2 is nudged by 2^s when needed so r1 + r2 ≡ 0 (mod 2^(s+1)): the two
    rotated interleaves then occupy complementary block-parity classes and
    never collide.
    """
    rounds = []
    s = 0
    while (1 << s) < n:
        step = 1 << s
        r1 = rng.randint(n // step) * step
        r2 = rng.randint(n // step) * step
        if (r1 + r2) % (2 * step) != 0:
            r2 = (r2 + step) % n
        rounds.append((r1, r2))
        s += 1
    return rounds


def compose_body_permutation(n: int, rounds) -> tuple[int, ...]:
    """Final body position of each starting slot under the round schedule."""
    pos = np.arange(n, dtype=np.int64)
    for s, (r1, r2) in enumerate(rounds):
        parity = (pos >> s) & 1
        shift = np.where(parity == 1, r1, r2)
        pos = (pos - shift) % n
    return tuple(int(p) for p in pos)


def blind_shuffle(
    backend: ReferenceBackend,
    ct_p: CipherHandle,
    profile: FrequencyProfile,
    rng: DeterministicRng,
    used_slots: int,
    pad_classes: tuple[str, ...],
) -> tuple[CipherHandle, ShuffleRecord]:
    """Uniformly reposition the replicated body, then rebuild the tail.

    2 log2(n) rotations for the rounds (identity rotations skipped), one
    body mask, and a clear tail pad preserving the profile's totals.
    """
    params = backend.params
    n = profile.body_length
    if n > params.half:
        raise CapacityError("shuffle body must fit one slot half")
    rounds = draw_shuffle_rounds(n, rng)
    ct = ct_p
    for s, (r1, r2) in enumerate(rounds):
        step = 1 << s
        assert (r1 + r2) % (2 * step) == 0, "interleaves would collide"
        m1, m2 = _interleave_masks(params, step)
        p1 = backend.mult(ct, m1)
        p2 = backend.mult(ct, m2)
        a = backend.rotate_rows(p1, r1) if r1 else p1
        b = backend.rotate_rows(p2, r2) if r2 else p2
        ct = backend.add(a, b)

    body_mask = np.zeros(params.slot_count, dtype=np.int64)
    body_mask[:n] = 1
    ct = backend.mult(ct, PlainVector(params, body_mask))

    tail_classes = [PAD_ZERO] * profile.tail_zeros + [PAD_RANDOM] * profile.tail_randoms
    rng.shuffle(tail_classes)
    tail = np.zeros(params.slot_count, dtype=np.int64)
    for offset, cls in enumerate(tail_classes):
        if cls == PAD_RANDOM:
            tail[n + offset] = rng.nonzero_mod(params.plain_modulus)
    ct = backend.add(ct, PlainVector(params, tail))

    record = ShuffleRecord(
        body_length=n,
        used_slots=used_slots,
        rounds=tuple(rounds),
        body_perm=compose_body_permutation(n, rounds),
        pad_classes=pad_classes,
        tail_classes=tuple(tail_classes),
    )
    return ct, record


def run_challenge(
    backend: ReferenceBackend,
    ct: CipherHandle,
    used_slots: int,
    zero_count: int,
    profile: FrequencyProfile,
    rng: DeterministicRng,
) -> BccTranscript:
    """Pad, replicate and shuffle one packed ciphertext into a challenge."""
    before = backend.ledger.snapshot()
    padded, pad_classes = pad_to_profile(backend, ct, used_slots, zero_count, profile, rng)
    replicated = replicate(backend, padded, profile.body_length)
    shuffled, record = blind_shuffle(
        backend, replicated, profile, rng, used_slots, pad_classes
    )
    rotations = backend.ledger.snapshot()["rotations"] - before["rotations"]
    return BccTranscript(ct, replicated, shuffled, record, rotations)


# ---------------------------------------------------------------------------
# Client side
# ---------------------------------------------------------------------------


def xgboost_conversion(slots: np.ndarray) -> np.ndarray:
    """SumPath conversion rule: zeros become ones, everything else zero."""
    return np.where(slots == 0, 1, 0).astype(np.int64)


def client_convert(
    backend: ReferenceBackend,
    c_s: CipherHandle,
    key: SecretKey,
    rule: Callable[[np.ndarray], np.ndarray] = xgboost_conversion,
) -> CipherHandle:
    """Decrypt, convert every slot by the class rule, re-encrypt fresh.

    The output is a fresh encryption: depth (noise) resets, as with
    programmable bootstrapping.
    """
    plain = backend.decrypt(c_s, key)
    converted = rule(np.asarray(plain.slots))
    return backend.encrypt(PlainVector(backend.params, converted), key)
