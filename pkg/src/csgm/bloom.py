"""Bloom filters over 128-bit band fingerprints, and the per-band bank.

Probe positions use double hashing on the fingerprint itself,
``pos_i = (lo64 + i * hi64) mod filter_bits`` where lo64/hi64 are the two
little-endian halves of the digest, so nothing is re-hashed.

Bank wire format (all integers little-endian)::

    magic "CSGM" | version u16 | num_bands u16 | filter_bits u64 | k u16 | params u64
    then per filter: insert_count u64 | bit array (ceil(filter_bits / 8) bytes, LSB-first)
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"CSGM"
VERSION = 1
_HEADER = struct.Struct("<4sHHQHQ")
_COUNT = struct.Struct("<Q")
DEFAULT_FILTER_BITS = 500_000
DEFAULT_PROBES = 7


class BloomDecodeError(ValueError):
    pass


def size_for(n: int, epsilon: float) -> tuple[int, int]:
    """Filter size and probe count for ``n`` items at false-positive rate ``epsilon``."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be >= 1")
    bits = math.ceil(-n * math.log(epsilon) / math.log(2) ** 2)
    k = max(1, round(-math.log2(epsilon)))
    return max(bits, 8), k


def predicted_fp_rate(n: int, filter_bits: int, k: int) -> float:
    return (1 - math.exp(-k * n / filter_bits)) ** k


def _halves(fingerprints: Sequence[bytes]) -> tuple[np.ndarray, np.ndarray]:
    if not fingerprints:
        empty = np.empty(0, dtype=np.uint64)
        return empty, empty
    arr = np.frombuffer(b"".join(fingerprints), dtype="<u8").reshape(-1, 2)
    return arr[:, 0].astype(np.uint64), arr[:, 1].astype(np.uint64)


class BloomFilter:
    def __init__(self, filter_bits: int = DEFAULT_FILTER_BITS, num_probe_hashes: int = DEFAULT_PROBES, expected_items: int = 0):
        if filter_bits < 8:
            raise ValueError("filter_bits must be >= 8")
        if num_probe_hashes < 1:
            raise ValueError("num_probe_hashes must be >= 1")
        self.filter_bits = filter_bits
        self.num_probe_hashes = num_probe_hashes
        self.expected_items = expected_items
        self.insert_count = 0
        self._bytes = np.zeros((filter_bits + 7) // 8, dtype=np.uint8)

    @classmethod
    def for_capacity(cls, n: int, epsilon: float) -> "BloomFilter":
        bits, k = size_for(n, epsilon)
        return cls(bits, k, n)

    def _positions(self, fingerprints: Sequence[bytes]) -> np.ndarray:
        """Probe positions, shape ``(len(fingerprints), k)``."""
        lo, hi = _halves(fingerprints)
        m = np.uint64(self.filter_bits)
        a, b = lo % m, hi % m
        pos = np.empty((len(lo), self.num_probe_hashes), dtype=np.uint64)
        cur = a
        for i in range(self.num_probe_hashes):
            pos[:, i] = cur
            cur = (cur + b) % m
        return pos

    def insert_many(self, fingerprints: Sequence[bytes]) -> None:
        pos = self._positions(fingerprints).ravel()
        np.bitwise_or.at(self._bytes, (pos >> np.uint64(3)).astype(np.intp), (1 << (pos & np.uint64(7))).astype(np.uint8))
        self.insert_count += len(fingerprints)

    def insert(self, fingerprint: bytes) -> None:
        self.insert_many([fingerprint])

    def query_many(self, fingerprints: Sequence[bytes]) -> np.ndarray:
        if not fingerprints:
            return np.zeros(0, dtype=bool)
        pos = self._positions(fingerprints)
        bits = (self._bytes[(pos >> np.uint64(3)).astype(np.intp)] >> (pos & np.uint64(7)).astype(np.uint8)) & 1
        return bits.all(axis=1)

    def query(self, fingerprint: bytes) -> bool:
        return bool(self.query_many([fingerprint])[0])

    __contains__ = query

    def bit_bytes(self) -> bytes:
        return self._bytes.tobytes()

    def popcount(self) -> int:
        return int(np.unpackbits(self._bytes).sum())

    def __eq__(self, other):
        return (
            isinstance(other, BloomFilter)
            and self.filter_bits == other.filter_bits
            and self.num_probe_hashes == other.num_probe_hashes
            and self.insert_count == other.insert_count
            and np.array_equal(self._bytes, other._bytes)
        )


@dataclass
class BloomBank:
    filters: list[BloomFilter]
    params_digest: int

    def __post_init__(self):
        if len({(f.filter_bits, f.num_probe_hashes) for f in self.filters}) > 1:
            raise ValueError("all filters of a bank must share filter_bits and num_probe_hashes")

    @property
    def num_bands(self) -> int:
        return len(self.filters)

    @property
    def filter_bits(self) -> int:
        return self.filters[0].filter_bits if self.filters else 0

    @property
    def num_probe_hashes(self) -> int:
        return self.filters[0].num_probe_hashes if self.filters else 0

    @classmethod
    def empty(cls, num_bands: int, filter_bits: int, k: int, params_digest: int) -> "BloomBank":
        return cls([BloomFilter(filter_bits, k) for _ in range(num_bands)], params_digest)

    def serialize(self) -> bytes:
        return serialize(self)


def build_bank(banded: Iterable, params, filter_bits: int = DEFAULT_FILTER_BITS, k: int = DEFAULT_PROBES) -> BloomBank:
    """Insert band ``j`` of every banded signature into filter ``j``.

    ``banded`` yields :class:`~csgm.sketch.BandedSignature` objects (or plain
    tuples of fingerprints); ``params`` is the shared
    :class:`~csgm.sketch.MinHashParams`.
    """
    bank = BloomBank.empty(params.num_bands, filter_bits, k, params.digest())
    columns: list[list[bytes]] = [[] for _ in range(params.num_bands)]
    for sig in banded:
        bands = getattr(sig, "bands", sig)
        if len(bands) != params.num_bands:
            raise ValueError("banded signature does not match params")
        for j, fp in enumerate(bands):
            columns[j].append(fp)
    for j, col in enumerate(columns):
        bank.filters[j].insert_many(col)
    return bank


def serialize(bank: BloomBank) -> bytes:
    parts = [
        _HEADER.pack(MAGIC, VERSION, bank.num_bands, bank.filter_bits, bank.num_probe_hashes, bank.params_digest)
    ]
    for f in bank.filters:
        parts.append(_COUNT.pack(f.insert_count))
        parts.append(f.bit_bytes())
    return b"".join(parts)


def serialized_size(num_bands: int, filter_bits: int) -> int:
    return _HEADER.size + num_bands * (_COUNT.size + (filter_bits + 7) // 8)


def deserialize(data: bytes) -> BloomBank:
    view = memoryview(data)
    if len(view) < _HEADER.size:
        raise BloomDecodeError("truncated header")
    magic, version, num_bands, filter_bits, k, digest = _HEADER.unpack_from(view, 0)
    if magic != MAGIC:
        raise BloomDecodeError(f"bad magic {bytes(magic)!r}")
    if version != VERSION:
        raise BloomDecodeError(f"unsupported version {version}")
    if num_bands and (filter_bits < 8 or k < 1):
        raise BloomDecodeError("invalid filter geometry")
    nbytes = (filter_bits + 7) // 8
    expected = serialized_size(num_bands, filter_bits)
    if len(view) != expected:
        raise BloomDecodeError(f"payload is {len(view)} bytes, header implies {expected}")
    filters = []
    off = _HEADER.size
    for _ in range(num_bands):
        f = BloomFilter(filter_bits, k)
        (f.insert_count,) = _COUNT.unpack_from(view, off)
        off += _COUNT.size
        f._bytes = np.frombuffer(view[off : off + nbytes], dtype=np.uint8).copy()
        off += nbytes
        filters.append(f)
    return BloomBank(filters, digest)
