"""Seedable deterministic randomness for masks, shuffles and query ids.

A SHA-256 counter DRBG: deterministic under an explicit seed (tests,
reproducible benchmarks), seeded from ``secrets`` otherwise. All protocol
randomness flows through this class so a fixed seed makes every binary
deterministic end to end.
"""

from __future__ import annotations

import hashlib
import secrets

_BLOCK = hashlib.sha256().digest_size


class DeterministicRng:
    """SHA-256 counter-mode byte stream with rejection-sampled integers."""

    def __init__(self, seed: int | bytes | str | None = None):
        if seed is None:
            seed = secrets.token_bytes(32)
        if isinstance(seed, int):
            seed = seed.to_bytes((seed.bit_length() + 8) // 8, "little", signed=True)
        elif isinstance(seed, str):
            seed = seed.encode()
        self._key = hashlib.sha256(seed).digest()
        self._counter = 0
        self._buffer = b""

    def randbytes(self, n: int) -> bytes:
        while len(self._buffer) < n:
            block = hashlib.sha256(
                self._key + self._counter.to_bytes(8, "little")
            ).digest()
            self._counter += 1
            self._buffer += block
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out

    def randint(self, bound: int) -> int:
        """Uniform integer in [0, bound) via rejection sampling."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        nbytes = (bound.bit_length() + 7) // 8
        limit = (256**nbytes // bound) * bound
        while True:
            value = int.from_bytes(self.randbytes(nbytes), "little")
            if value < limit:
                return value % bound

    def nonzero_mod(self, modulus: int) -> int:
        """Uniform integer in [1, modulus)."""
        return 1 + self.randint(modulus - 1)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def spawn(self, label: bytes | str) -> "DeterministicRng":
        """Derive an independent child stream; parent state is untouched."""
        if isinstance(label, str):
            label = label.encode()
        return DeterministicRng(self._key + b"/" + label)
