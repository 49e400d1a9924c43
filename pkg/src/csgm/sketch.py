"""MinHash signatures over cross-edge sets and band fingerprints.

Each of the ``num_hashes`` MinHash functions is a keyed 64-bit hash: an edge
(src, dst) is encoded as 16 big-endian bytes, hashed once with keyed BLAKE2b,
then mixed with a per-function key through the SplitMix64 finalizer. The
signature entry is the minimum over the set's edges. Both parties derive all
keys from the shared seed, so equal sets give bit-identical signatures.

Bands group ``band_rows`` consecutive signature entries; each band is reduced
to a 128-bit MD5 fingerprint prefixed with its band index.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .discovery import CrossEdgeSet, EdgeId

_U64 = np.uint64
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class MinHashParams:
    num_hashes: int = 100
    band_rows: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.num_hashes < 1 or self.band_rows < 1:
            raise ValueError("num_hashes and band_rows must be positive")
        if self.num_hashes % self.band_rows:
            raise ValueError(f"band_rows={self.band_rows} does not divide num_hashes={self.num_hashes}")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must be an unsigned 64-bit value")

    @property
    def num_bands(self) -> int:
        return self.num_hashes // self.band_rows

    def digest(self) -> int:
        """64-bit fingerprint of the parameters, carried in the bank wire header."""
        raw = struct.pack("<QQQ", self.num_hashes, self.band_rows, self.seed)
        return int.from_bytes(hashlib.blake2b(raw, digest_size=8, person=b"csgm-params").digest(), "little")


@dataclass(frozen=True)
class Signature:
    values: np.ndarray  # uint64, shape (num_hashes,)

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        return isinstance(other, Signature) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())


@dataclass(frozen=True)
class BandedSignature:
    bands: tuple[bytes, ...]  # one 16-byte fingerprint per band

    def __len__(self):
        return len(self.bands)


def splitmix64(x: np.ndarray) -> np.ndarray:
    z = x.astype(_U64, copy=True)
    z ^= z >> _U64(30)
    z *= _U64(0xBF58476D1CE4E5B9)
    z ^= z >> _U64(27)
    z *= _U64(0x94D049BB133111EB)
    z ^= z >> _U64(31)
    return z


def encode_edge(edge: EdgeId) -> bytes:
    return struct.pack(">QQ", edge[0], edge[1])


class MinHasher:
    """Holds the per-function keys and an element-hash cache for one parameter set."""

    def __init__(self, params: MinHashParams):
        self.params = params
        golden = 0x9E3779B97F4A7C15
        seeds = np.array([(params.seed ^ t) for t in range(params.num_hashes)], dtype=_U64)
        self._keys = splitmix64(seeds + _U64(golden))[:, None]
        self._blake_key = params.seed.to_bytes(8, "big")
        self._cache: dict[EdgeId, int] = {}

    def element_hash(self, edge: EdgeId) -> int:
        h = self._cache.get(edge)
        if h is None:
            d = hashlib.blake2b(encode_edge(edge), digest_size=8, key=self._blake_key).digest()
            h = int.from_bytes(d, "big")
            self._cache[edge] = h
        return h

    def _base(self, edges: Iterable[EdgeId]) -> np.ndarray:
        return np.fromiter((self.element_hash(e) for e in edges), dtype=_U64)

    def signature(self, edges: Iterable[EdgeId] | CrossEdgeSet) -> Signature:
        if isinstance(edges, CrossEdgeSet):
            edges = edges.edges
        base = self._base(sorted(edges))
        if base.size == 0:
            raise ValueError("MinHash of an empty set is undefined")
        return Signature(splitmix64(base[None, :] ^ self._keys).min(axis=1))

    def signature_matrix(self, sets: Sequence[Iterable[EdgeId]], chunk: int = 200_000) -> np.ndarray:
        """Signatures of many sets at once, shape ``(len(sets), num_hashes)``."""
        groups = [sorted(s.edges if isinstance(s, CrossEdgeSet) else s) for s in sets]
        if any(not g for g in groups):
            raise ValueError("MinHash of an empty set is undefined")
        out = np.empty((len(groups), self.params.num_hashes), dtype=_U64)
        i = 0
        while i < len(groups):
            j, width = i, 0
            while j < len(groups) and (width == 0 or width + len(groups[j]) <= chunk):
                width += len(groups[j])
                j += 1
            base = self._base(e for g in groups[i:j] for e in g)
            offsets = np.cumsum([0] + [len(g) for g in groups[i : j - 1]])
            hashed = splitmix64(base[None, :] ^ self._keys)
            out[i:j] = np.minimum.reduceat(hashed, offsets, axis=1).T
            i = j
        return out

    def band(self, sig: Signature | np.ndarray) -> BandedSignature:
        return band(sig, self.params)

    def banded(self, edges) -> BandedSignature:
        return band(self.signature(edges), self.params)


def minhash(s: CrossEdgeSet | Iterable[EdgeId], params: MinHashParams) -> Signature:
    return MinHasher(params).signature(s)


def estimate_jaccard(sig_a: Signature, sig_b: Signature) -> float:
    if len(sig_a) != len(sig_b):
        raise ValueError("signatures have different lengths")
    return float(np.count_nonzero(sig_a.values == sig_b.values)) / len(sig_a)


def band(sig: Signature | np.ndarray, params: MinHashParams) -> BandedSignature:
    values = sig.values if isinstance(sig, Signature) else np.asarray(sig, dtype=_U64)
    if len(values) != params.num_hashes:
        raise ValueError(f"signature length {len(values)} != num_hashes {params.num_hashes}")
    raw = values.astype(">u8").tobytes()
    width = 8 * params.band_rows
    return BandedSignature(
        tuple(
            hashlib.md5(struct.pack(">I", k) + raw[k * width : (k + 1) * width]).digest()
            for k in range(params.num_bands)
        )
    )


def exact_jaccard(a: Iterable, b: Iterable) -> float:
    a, b = set(a), set(b)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)
