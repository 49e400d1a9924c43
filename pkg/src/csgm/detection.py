"""Similar-set detection against a peer's Bloom bank.

``prob`` mode flags a set as soon as one of its band fingerprints is found
in the matching filter. ``sim`` mode counts matching bands ``l`` out of
``K``; ``l/K`` estimates ``P**r`` for the most similar peer set ``P``, which
keeps weakly overlapping sets from inflating the estimate.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .bloom import BloomBank
from .discovery import CrossEdgeSet, SetFamily
from .sketch import BandedSignature, MinHasher, MinHashParams

_TIE_TOL = 1e-12


class Mode(str, enum.Enum):
    PROB = "prob"
    SIM = "sim"


class ParamsMismatch(ValueError):
    """The bank was built with MinHash parameters other than ours."""


@dataclass(frozen=True)
class DetectionConfig:
    mode: Mode = Mode.SIM
    tau: float = 0.2
    params: MinHashParams = field(default_factory=MinHashParams)

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.mode is Mode.SIM and not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")

    @classmethod
    def defaults(cls, mode: Mode | str, seed: int = 0, **overrides) -> "DetectionConfig":
        """Experiment defaults: prob uses r=5, sim uses r=2 with tau=0.2; 100 hashes either way."""
        mode = Mode(mode)
        r = overrides.pop("band_rows", 5 if mode is Mode.PROB else 2)
        m = overrides.pop("num_hashes", 100)
        return cls(mode=mode, params=MinHashParams(m, r, seed), **overrides)


@dataclass
class SetVerdict:
    anchor: int
    hit: bool
    matched_bands: int
    num_bands: int
    estimated_similarity: float | None = None
    matched: tuple[tuple[int, bytes], ...] = ()  # (band index, fingerprint), kept local

    def to_dict(self) -> dict:
        return {
            "anchor": self.anchor,
            "hit": self.hit,
            "l": self.matched_bands,
            "K": self.num_bands,
            "est_sim": self.estimated_similarity,
        }


def _check(bank: BloomBank, params: MinHashParams) -> None:
    if bank.params_digest != params.digest():
        raise ParamsMismatch("bank was built with different MinHash parameters")
    if bank.num_bands != params.num_bands:
        raise ParamsMismatch(f"bank has {bank.num_bands} filters, params imply {params.num_bands}")


def _membership(bands: BandedSignature, bank: BloomBank) -> list[bool]:
    return [bank.filters[k].query(fp) for k, fp in enumerate(bands.bands)]


def _verdict(anchor: int, bands: BandedSignature, found, mode: Mode, params: MinHashParams, tau: float) -> SetVerdict:
    matched = tuple((k, bands.bands[k]) for k, ok in enumerate(found) if ok)
    l, K = len(matched), params.num_bands
    if mode is Mode.PROB:
        return SetVerdict(anchor, l >= 1, l, K, None, matched)
    frac = l / K
    return SetVerdict(
        anchor,
        frac >= tau**params.band_rows - _TIE_TOL,
        l,
        K,
        frac ** (1.0 / params.band_rows),
        matched,
    )


def _banded(s, params: MinHashParams, hasher: MinHasher | None) -> tuple[int, BandedSignature]:
    if isinstance(s, CrossEdgeSet):
        return s.anchor, (hasher or MinHasher(params)).banded(s)
    anchor, bands = s
    return anchor, bands


def is_similar_prob(s: CrossEdgeSet, bank: BloomBank, params: MinHashParams, hasher: MinHasher | None = None) -> SetVerdict:
    """Hit if any band is present. All bands are tested so ``matched_bands`` is exact."""
    _check(bank, params)
    anchor, bands = _banded(s, params, hasher)
    return _verdict(anchor, bands, _membership(bands, bank), Mode.PROB, params, 0.0)


def is_similar_sim(
    s: CrossEdgeSet, bank: BloomBank, params: MinHashParams, tau: float, hasher: MinHasher | None = None
) -> SetVerdict:
    """Hit iff ``l/K >= tau**r``; reports ``(l/K)**(1/r)`` as the similarity estimate."""
    _check(bank, params)
    anchor, bands = _banded(s, params, hasher)
    return _verdict(anchor, bands, _membership(bands, bank), Mode.SIM, params, tau)


def detect_banded(
    banded: list[tuple[int, BandedSignature]], bank: BloomBank, config: DetectionConfig
) -> list[SetVerdict]:
    """Batch detector over precomputed band fingerprints, one filter at a time."""
    params = config.params
    _check(bank, params)
    banded = sorted(banded, key=lambda t: t[0])
    if not banded:
        return []
    found = np.empty((len(banded), params.num_bands), dtype=bool)
    for k, f in enumerate(bank.filters):
        found[:, k] = f.query_many([b.bands[k] for _, b in banded])
    return [_verdict(a, b, row, config.mode, params, config.tau) for (a, b), row in zip(banded, found)]


def detect_family(family: SetFamily | Iterable[CrossEdgeSet], bank: BloomBank, config: DetectionConfig) -> list[SetVerdict]:
    sets = list(family)
    if not sets:
        _check(bank, config.params)
        return []
    hasher = MinHasher(config.params)
    sigs = hasher.signature_matrix(sets)
    banded = [(s.anchor, hasher.band(sig)) for s, sig in zip(sets, sigs)]
    return detect_banded(banded, bank, config)


def hit_probability(s: float, r: int, K: int) -> float:
    """Chance that a set with similarity ``s`` to some banked set matches at least one band."""
    if not 0 <= s <= 1:
        raise ValueError("s must lie in [0, 1]")
    return 1.0 - (1.0 - s**r) ** K


def banding_bias_bound(x1: float, n_overlapping: int, epsilon: float, p: float) -> int:
    """Smallest band width ``r`` that keeps the banded estimate within ``epsilon`` of ``x1``.

    ``p = x2 / x1`` is the ratio of the second-largest to the largest
    similarity. For ``r > log_p(epsilon / (x1 * (N - 1)))`` the bias
    ``(sum x_i**r)**(1/r) - x1`` is at most ``epsilon``.
    """
    if not 0 < x1 <= 1:
        raise ValueError("x1 must lie in (0, 1]")
    if n_overlapping < 2:
        raise ValueError("need at least two overlapping sets")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not 0 <= p < 1:
        raise ValueError("p = x2/x1 must lie in [0, 1)")
    if p == 0:
        return 1
    target = epsilon / (x1 * (n_overlapping - 1))
    if target >= 1:
        return 1
    bound = math.log(target) / math.log(p)
    return max(1, math.floor(bound) + 1)


def banded_similarity(xs: Iterable[float], r: int) -> float:
    """``(sum x_i**r)**(1/r)``, the quantity the sim estimator converges to under banding."""
    return sum(x**r for x in xs) ** (1.0 / r)


def write_verdicts(verdicts: Iterable[SetVerdict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in verdicts:
            fh.write(json.dumps(v.to_dict()) + "\n")
