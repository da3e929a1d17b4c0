"""SIMD homomorphic-vector abstraction with a bit-exact reference backend.

Models an RLWE-style scheme operating on N-slot integer vectors modulo a
prime plaintext modulus t: encode/decode, encrypt/decrypt, slotwise
addition and multiplication (cipher-cipher and cipher-plain), per-half
row rotation and the half-swapping column rotation.

The reference backend stores slot vectors in the clear but enforces the
same contract a real scheme would: key binding, a multiplicative depth
budget (cipher-plain multiplications conservatively count as depth +1),
and full operation accounting through :class:`OpLedger`. That makes every
protocol built on top of it testable bit-exactly, including rotation and
depth bounds.

Serialized ciphertexts expose their slots by construction. The format
exists for tests and transport plumbing only and is NOT secure.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass

import numpy as np

from .rng import DeterministicRng

__all__ = [
    "FheError",
    "CapacityError",
    "ParamMismatchError",
    "KeyMismatchError",
    "DepthBudgetError",
    "SerializationError",
    "FheParams",
    "PlainVector",
    "CipherHandle",
    "OpLedger",
    "SecretKey",
    "EvalKey",
    "ReferenceBackend",
    "choose_plain_modulus",
    "is_prime",
]

REFERENCE_BACKEND_TAG = 0x01
_WIRE_VERSION = 1


class FheError(Exception):
    """Base class for scheme-level failures."""


class CapacityError(FheError):
    """More values than slots, or a body that cannot fit the layout."""


class ParamMismatchError(FheError):
    """Operands created under different parameter sets."""


class KeyMismatchError(FheError):
    """Ciphertext and key belong to different sessions."""


class DepthBudgetError(FheError):
    """Multiplicative depth budget exhausted (noise exhaustion)."""


class SerializationError(FheError):
    """Malformed or incompatible wire bytes."""


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, valid for all n < 3.3e24."""
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def choose_plain_modulus(slot_count: int, minimum: int = 1 << 20) -> int:
    """Smallest prime t with t ≡ 1 (mod 2N) and t > minimum.

    The congruence is what enables slot batching in an RLWE scheme with
    polynomial degree N.
    """
    step = 2 * slot_count
    t = (minimum // step + 1) * step + 1
    while not is_prime(t):
        t += step
    return t


@dataclass(frozen=True)
class FheParams:
    """Session parameters: slot count N, plaintext modulus t, depth budget.

    ``scaling_factor`` mirrors the Δ of a real scheme; the reference
    backend never applies it.
    """

    slot_count: int
    plain_modulus: int
    depth_budget: int = 32
    scaling_factor: int = 1

    def __post_init__(self):
        n, t = self.slot_count, self.plain_modulus
        if n < 2 or n & (n - 1):
            raise ValueError(f"slot_count must be a power of two >= 2, got {n}")
        if not is_prime(t) or t % (2 * n) != 1:
            raise ValueError(f"plain_modulus must be prime ≡ 1 mod 2N, got {t}")
        if t >= 1 << 31:
            # int64 slotwise products must not overflow in the backend
            raise ValueError("plain_modulus above 2^31 unsupported by reference backend")
        if self.depth_budget < 1:
            raise ValueError("depth_budget must be positive")

    @classmethod
    def default(
        cls,
        slot_count: int = 1 << 13,
        min_plain_modulus: int = 1 << 20,
        depth_budget: int = 32,
    ) -> "FheParams":
        return cls(slot_count, choose_plain_modulus(slot_count, min_plain_modulus), depth_budget)

    @property
    def half(self) -> int:
        return self.slot_count // 2

    def to_bytes(self) -> bytes:
        return struct.pack(
            "<BIQIQ",
            _WIRE_VERSION,
            self.slot_count,
            self.plain_modulus,
            self.depth_budget,
            self.scaling_factor,
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "FheParams":
        try:
            version, n, t, budget, delta = struct.unpack("<BIQIQ", raw)
        except struct.error as exc:
            raise SerializationError(f"bad params blob: {exc}") from None
        if version != _WIRE_VERSION:
            raise SerializationError(f"unsupported params version {version}")
        return cls(n, t, budget, delta)


class PlainVector:
    """Immutable N-slot integer vector reduced modulo t."""

    __slots__ = ("params", "slots")

    def __init__(self, params: FheParams, slots: np.ndarray):
        if slots.shape != (params.slot_count,):
            raise CapacityError(
                f"expected {params.slot_count} slots, got {slots.shape}"
            )
        slots = np.mod(slots.astype(np.int64), params.plain_modulus)
        slots.setflags(write=False)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "slots", slots)

    def __setattr__(self, *_):
        raise AttributeError("PlainVector is immutable")

    def __eq__(self, other):
        return (
            isinstance(other, PlainVector)
            and self.params == other.params
            and bool(np.array_equal(self.slots, other.slots))
        )

    def __repr__(self):
        return f"PlainVector({self.slots.tolist()!r})"

    def to_list(self) -> list[int]:
        return [int(v) for v in self.slots]


@dataclass(frozen=True)
class HandleStats:
    """Operation counts in a ciphertext's derivation tree."""

    rotations: int = 0
    cipher_mults: int = 0
    plain_mults: int = 0
    additions: int = 0

    def merge(self, other: "HandleStats", **bump) -> "HandleStats":
        return HandleStats(
            rotations=self.rotations + other.rotations + bump.get("rotations", 0),
            cipher_mults=self.cipher_mults + other.cipher_mults + bump.get("cipher_mults", 0),
            plain_mults=self.plain_mults + other.plain_mults + bump.get("plain_mults", 0),
            additions=self.additions + other.additions + bump.get("additions", 0),
        )


_EMPTY_STATS = HandleStats()


class CipherHandle:
    """Opaque encrypted vector plus depth/operation bookkeeping.

    Immutable: every operation returns a new handle. ``payload`` is the
    backend-private representation (clear slots for the reference
    backend).
    """

    __slots__ = ("params", "payload", "depth", "key_id", "op_stats")

    def __init__(self, params, payload, depth, key_id, op_stats=_EMPTY_STATS):
        payload.setflags(write=False)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "payload", payload)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "key_id", key_id)
        object.__setattr__(self, "op_stats", op_stats)

    def __setattr__(self, *_):
        raise AttributeError("CipherHandle is immutable")

    def __repr__(self):
        return f"CipherHandle(depth={self.depth}, key={self.key_id.hex()})"


class OpLedger:
    """Monotone operation counters shared by all ops of a backend.

    Tolerates concurrent increments; ``max_depth`` tracks the deepest
    ciphertext ever produced.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.rotations = 0
        self.cipher_mults = 0
        self.plain_mults = 0
        self.additions = 0
        self.max_depth = 0

    def _bump(self, attr: str, depth: int = 0) -> None:
        with self._lock:
            setattr(self, attr, getattr(self, attr) + 1)
            if depth > self.max_depth:
                self.max_depth = depth

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {
                "rotations": self.rotations,
                "cipher_mults": self.cipher_mults,
                "plain_mults": self.plain_mults,
                "additions": self.additions,
                "max_depth": self.max_depth,
            }

    def delta(self, before: dict[str, int]) -> dict[str, int]:
        now = self.snapshot()
        return {k: now[k] - before[k] for k in before if k != "max_depth"} | {
            "max_depth": now["max_depth"]
        }


@dataclass(frozen=True)
class SecretKey:
    """Decryption capability; lives on the client only."""

    params: FheParams
    key_id: bytes

    def eval_key(self) -> "EvalKey":
        return EvalKey(self.params, self.key_id)


@dataclass(frozen=True)
class EvalKey:
    """Evaluation capability (rotations, multiplications); safe to publish."""

    params: FheParams
    key_id: bytes

    def to_bytes(self) -> bytes:
        blob = self.params.to_bytes()
        return struct.pack("<BB", _WIRE_VERSION, REFERENCE_BACKEND_TAG) + self.key_id + blob

    @classmethod
    def from_bytes(cls, raw: bytes) -> "EvalKey":
        if len(raw) < 10:
            raise SerializationError("eval key blob too short")
        version, tag = struct.unpack_from("<BB", raw)
        if version != _WIRE_VERSION or tag != REFERENCE_BACKEND_TAG:
            raise SerializationError("unsupported eval key encoding")
        return cls(FheParams.from_bytes(raw[10:]), raw[2:10])


class ReferenceBackend:
    """Clear-value simulator of the nine-operation SIMD scheme.

    All operations are pure over immutable handles; the ledger is the
    only shared mutable state. ``decrypt_count`` instruments how often
    this backend has exercised the decryption capability (the server-side
    acceptance check asserts it stays zero).
    """

    def __init__(self, params: FheParams, ledger: OpLedger | None = None):
        self.params = params
        self.ledger = ledger if ledger is not None else OpLedger()
        self.decrypt_count = 0

    # -- key & data management -------------------------------------------------

    def keygen(self, rng: DeterministicRng | None = None) -> SecretKey:
        rng = rng or DeterministicRng()
        return SecretKey(self.params, rng.randbytes(8))

    def encode(self, values) -> PlainVector:
        """Zero-pad ``values`` to N slots and reduce mod t."""
        values = np.asarray(list(values), dtype=np.int64)
        n = self.params.slot_count
        if values.shape[0] > n:
            raise CapacityError(f"{values.shape[0]} values exceed {n} slots")
        slots = np.zeros(n, dtype=np.int64)
        slots[: values.shape[0]] = values
        return PlainVector(self.params, slots)

    def decode(self, plain: PlainVector) -> list[int]:
        self._check_params(plain.params)
        return plain.to_list()

    def encrypt(self, plain: PlainVector, key: SecretKey) -> CipherHandle:
        self._check_params(plain.params)
        self._check_params(key.params)
        return CipherHandle(self.params, plain.slots.copy(), 0, key.key_id)

    def decrypt(self, ct: CipherHandle, key: SecretKey) -> PlainVector:
        self._check_params(ct.params)
        if key.key_id != ct.key_id:
            raise KeyMismatchError("ciphertext was not encrypted under this key")
        self.decrypt_count += 1
        return PlainVector(self.params, ct.payload.copy())

    # -- arithmetic --------------------------------------------------------------

    def add(self, a: CipherHandle, b) -> CipherHandle:
        """Slotwise a + b mod t; b may be a ciphertext or a plaintext."""
        if isinstance(b, PlainVector):
            self._check_pair(a, None)
            self._check_params(b.params)
            payload = (a.payload + b.slots) % self.params.plain_modulus
            depth = a.depth
            stats = a.op_stats.merge(_EMPTY_STATS, additions=1)
        else:
            self._check_pair(a, b)
            payload = (a.payload + b.payload) % self.params.plain_modulus
            depth = max(a.depth, b.depth)
            stats = a.op_stats.merge(b.op_stats, additions=1)
        self.ledger._bump("additions", depth)
        return CipherHandle(self.params, payload, depth, a.key_id, stats)

    def sub(self, a: CipherHandle, b) -> CipherHandle:
        """Slotwise a - b mod t, counted as an addition."""
        if isinstance(b, PlainVector):
            return self.add(a, PlainVector(self.params, -b.slots))
        neg = CipherHandle(self.params, (-b.payload) % self.params.plain_modulus,
                           b.depth, b.key_id, b.op_stats)
        return self.add(a, neg)

    def mult(self, a: CipherHandle, b) -> CipherHandle:
        """Slotwise a * b mod t; depth +1 for plain and cipher operands alike."""
        if isinstance(b, PlainVector):
            self._check_pair(a, None)
            self._check_params(b.params)
            depth = a.depth + 1
            self._check_depth(depth)
            payload = (a.payload * b.slots) % self.params.plain_modulus
            stats = a.op_stats.merge(_EMPTY_STATS, plain_mults=1)
            self.ledger._bump("plain_mults", depth)
        else:
            self._check_pair(a, b)
            depth = max(a.depth, b.depth) + 1
            self._check_depth(depth)
            payload = (a.payload * b.payload) % self.params.plain_modulus
            stats = a.op_stats.merge(b.op_stats, cipher_mults=1)
            self.ledger._bump("cipher_mults", depth)
        return CipherHandle(self.params, payload, depth, a.key_id, stats)

    def mult_scalar(self, a: CipherHandle, scalar: int) -> CipherHandle:
        """Multiply every slot by a constant (a cipher-plain mult)."""
        t = self.params.plain_modulus
        return self.mult(a, PlainVector(self.params, np.full(self.params.slot_count, scalar % t, dtype=np.int64)))

    def add_scalar(self, a: CipherHandle, scalar: int) -> CipherHandle:
        t = self.params.plain_modulus
        return self.add(a, PlainVector(self.params, np.full(self.params.slot_count, scalar % t, dtype=np.int64)))

    # -- rotations ---------------------------------------------------------------

    def rotate_rows(self, ct: CipherHandle, r: int) -> CipherHandle:
        """Rotate each half-row left by r slots independently (wrapping)."""
        half = self.params.half
        if not 0 <= r < half:
            raise FheError(f"row rotation offset {r} outside [0, {half})")
        self._check_params(ct.params)
        payload = np.concatenate(
            [np.roll(ct.payload[:half], -r), np.roll(ct.payload[half:], -r)]
        )
        self.ledger._bump("rotations", ct.depth)
        return CipherHandle(
            self.params, payload, ct.depth, ct.key_id,
            ct.op_stats.merge(_EMPTY_STATS, rotations=1),
        )

    def rotate_columns(self, ct: CipherHandle) -> CipherHandle:
        """Swap slot i with slot i + N/2 (self-inverse)."""
        half = self.params.half
        self._check_params(ct.params)
        payload = np.concatenate([ct.payload[half:], ct.payload[:half]])
        self.ledger._bump("rotations", ct.depth)
        return CipherHandle(
            self.params, payload, ct.depth, ct.key_id,
            ct.op_stats.merge(_EMPTY_STATS, rotations=1),
        )

    def rotate_rows_right(self, ct: CipherHandle, r: int) -> CipherHandle:
        """Right-rotation convenience, realized as one left row rotation."""
        half = self.params.half
        r %= half
        if r == 0:
            return ct
        return self.rotate_rows(ct, half - r)

    # -- serialization -------------------------------------------------------
    #
    # Little-endian, length-prefixed, one-byte backend tag. Reference
    # ciphertexts serialize their slot vector in the clear: transport and
    # test use only.

    def serialize_ciphertext(self, ct: CipherHandle) -> bytes:
        self._check_params(ct.params)
        body = ct.payload.astype("<u8").tobytes()
        header = struct.pack(
            "<BB8sHI", _WIRE_VERSION, REFERENCE_BACKEND_TAG, ct.key_id,
            ct.depth, self.params.slot_count,
        )
        return struct.pack("<I", len(header) + len(body)) + header + body

    def deserialize_ciphertext(self, raw: bytes) -> CipherHandle:
        if len(raw) < 4:
            raise SerializationError("ciphertext blob too short")
        (length,) = struct.unpack_from("<I", raw)
        if length + 4 != len(raw):
            raise SerializationError("ciphertext length prefix mismatch")
        version, tag, key_id, depth, n = struct.unpack_from("<BB8sHI", raw, 4)
        if version != _WIRE_VERSION:
            raise SerializationError(f"unsupported ciphertext version {version}")
        if tag != REFERENCE_BACKEND_TAG:
            raise SerializationError(f"unknown backend tag {tag}")
        if n != self.params.slot_count:
            raise ParamMismatchError("ciphertext slot count differs from session params")
        payload = np.frombuffer(raw, dtype="<u8", offset=4 + 16).astype(np.int64)
        if payload.shape[0] != n:
            raise SerializationError("ciphertext body truncated")
        return CipherHandle(self.params, payload, depth, key_id)

    # -- internals ---------------------------------------------------------------

    def _check_params(self, params: FheParams) -> None:
        if params != self.params:
            raise ParamMismatchError("operand params differ from session params")

    def _check_pair(self, a: CipherHandle, b: CipherHandle | None) -> None:
        self._check_params(a.params)
        if b is not None:
            self._check_params(b.params)
            if a.key_id != b.key_id:
                raise KeyMismatchError("operands encrypted under different keys")

    def _check_depth(self, depth: int) -> None:
        if depth > self.params.depth_budget:
            raise DepthBudgetError(
                f"depth {depth} exceeds budget {self.params.depth_budget}"
            )
