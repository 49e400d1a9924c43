"""Exact pairwise oracle, node-level metrics and band-repetition diagnostics."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from .discovery import SetFamily
from .sketch import MinHasher, MinHashParams


def brute_force_pairs(fam_a: SetFamily, fam_b: SetFamily, tau: float) -> set[tuple[int, int]]:
    """Every ``(anchor_a, anchor_b)`` whose exact Jaccard similarity is at least ``tau``.

    Pairs sharing no edge have similarity 0, so for ``tau > 0`` only pairs
    that co-occur in the inverted index are scored; the result is identical
    to scoring all ``|A| * |B|`` pairs.
    """
    if tau <= 0:
        return {(a.anchor, b.anchor) for a in fam_a for b in fam_b}
    postings: dict[tuple[int, int], list[int]] = defaultdict(list)
    sets_b = {}
    for b in fam_b:
        sets_b[b.anchor] = b.edges
        for e in b.edges:
            postings[e].append(b.anchor)
    out = set()
    for a in fam_a:
        shared = Counter(bid for e in a.edges for bid in postings.get(e, ()))
        for bid, inter in shared.items():
            union = len(a.edges) + len(sets_b[bid]) - inter
            if inter / union >= tau:
                out.add((a.anchor, bid))
    return out


def max_similarity(fam_a: SetFamily, fam_b: SetFamily) -> dict[int, float]:
    """Largest exact Jaccard similarity of each ``fam_a`` anchor to any set in ``fam_b``."""
    postings: dict[tuple[int, int], list[int]] = defaultdict(list)
    sizes = {}
    for b in fam_b:
        sizes[b.anchor] = len(b.edges)
        for e in b.edges:
            postings[e].append(b.anchor)
    best = {}
    for a in fam_a:
        shared = Counter(bid for e in a.edges for bid in postings.get(e, ()))
        best[a.anchor] = max(
            (inter / (len(a.edges) + sizes[bid] - inter) for bid, inter in shared.items()), default=0.0
        )
    return best


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float | None
    tp: int
    fp: int
    fn: int
    tn: int
    groups_total: int = 0
    groups_touched: int = 0
    groups_majority: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def rank_auc(scores: np.ndarray, positive: np.ndarray) -> float | None:
    """Area under the ROC curve via the Mann-Whitney rank statistic (ties averaged)."""
    from scipy.stats import rankdata

    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def score(
    predicted_illicit: set[int],
    labels: Mapping[int, bool],
    scores: Mapping[int, float] | None = None,
    group_of: Mapping[int, int] | None = None,
) -> MetricsReport:
    """Node-level confusion metrics over every labelled account."""
    tp = fp = fn = tn = 0
    for n, bad in labels.items():
        hit = n in predicted_illicit
        if hit and bad:
            tp += 1
        elif hit:
            fp += 1
        elif bad:
            fn += 1
        else:
            tn += 1
    total = tp + fp + fn + tn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    auc = None
    if scores is not None:
        accounts = sorted(labels)
        s = np.array([scores.get(n, 0.0) for n in accounts], dtype=float)
        y = np.array([labels[n] for n in accounts], dtype=bool)
        auc = rank_auc(s, y)
    accuracy = (tp + tn) / total if total else 0.0
    report = MetricsReport(accuracy, precision, recall, f1, auc, tp, fp, fn, tn)
    if group_of:
        members: dict[int, list[int]] = defaultdict(list)
        for n, gid in group_of.items():
            members[gid].append(n)
        report.groups_total = len(members)
        for ms in members.values():
            k = sum(n in predicted_illicit for n in ms)
            report.groups_touched += k > 0
            report.groups_majority += 2 * k > len(ms)
    return report


def band_repetition_histogram(family: SetFamily, params: MinHashParams) -> dict:
    """How many sets share each band fingerprint with others.

    For band ``k``, a set whose fingerprint is shared by ``c`` sets (itself
    included) lands in bucket ``c``. ``per_band`` keeps the per-band counts,
    ``aggregate`` sums them over bands.
    """
    sets = list(family)
    per_band: list[dict[int, int]] = [dict() for _ in range(params.num_bands)]
    if sets:
        hasher = MinHasher(params)
        banded = [hasher.band(sig) for sig in hasher.signature_matrix(sets)]
        for k in range(params.num_bands):
            mult = Counter(b.bands[k] for b in banded)
            hist: Counter = Counter()
            for b in banded:
                hist[mult[b.bands[k]]] += 1
            per_band[k] = dict(sorted(hist.items()))
    aggregate: Counter = Counter()
    for h in per_band:
        aggregate.update(h)
    return {
        "num_sets": len(sets),
        "num_bands": params.num_bands,
        "band_rows": params.band_rows,
        "per_band": per_band,
        "aggregate": dict(sorted(aggregate.items())),
    }


def repeat_mass(hist: dict) -> float:
    """Mean fraction of sets per band whose fingerprint is shared (repeat > 1)."""
    n, K = hist["num_sets"], hist["num_bands"]
    if not n or not K:
        return 0.0
    shared = sum(c for rep, c in hist["aggregate"].items() if int(rep) > 1)
    return shared / (n * K)
