"""Synthetic two-institution transaction data with planted scatter-gather groups.

Background accounts trade uniformly at random with log-normal amounts. Each
planted group has a source that scatters to ``w`` layering paths of internal
hops; every path crosses institutions exactly once and all paths re-converge
on a destination held by the other institution. With ``noise_fraction > 0``
some paths cross three times instead, which lowers the overlap between the
source's scatter set and the destination's gather set.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping

import numpy as np

from .graph import (
    Edge,
    GraphError,
    InstitutionView,
    Party,
    TransactionGraph,
    split_views,
    write_accounts,
    write_assignment,
    write_graph,
)

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


@dataclass(frozen=True)
class GenConfig:
    num_accounts: int = 10_000
    background_edges: int = 6_000
    num_groups: int = 50
    fan_width: tuple[int, int] = (5, 10)
    layering_depth: tuple[int, int] = (1, 3)
    party_balance: float = 0.5
    # background amounts: log-normal in currency units
    background_amount_median: float = 500.0
    background_amount_sigma: float = 1.0
    # per-path laundering amount, uniform in currency units
    group_amount: tuple[float, float] = (1_000.0, 10_000.0)
    # fraction kept at each layering hop
    hop_retention: tuple[float, float] = (0.95, 1.0)
    noise_fraction: float = 0.0
    source_in_b_fraction: float = 0.5
    min_set_size: int = 5
    seed: int = 0

    def __post_init__(self):
        for name in ("fan_width", "layering_depth", "group_amount", "hop_retention"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        lo, hi = self.fan_width
        if not 1 <= lo <= hi:
            raise ValueError("fan_width must be an increasing range of positive ints")
        if lo < self.min_set_size:
            raise ValueError(f"fan_width lower bound {lo} is below min_set_size {self.min_set_size}")
        dlo, dhi = self.layering_depth
        if not 1 <= dlo <= dhi:
            raise ValueError("layering_depth must be an increasing range of ints >= 1")
        if not 0 < self.party_balance < 1:
            raise ValueError("party_balance must lie in (0, 1)")
        if not 0 <= self.noise_fraction <= 1:
            raise ValueError("noise_fraction must lie in [0, 1]")
        if hi > self.num_accounts:
            raise ValueError("fan_width exceeds the number of accounts")

    @classmethod
    def from_mapping(cls, raw: Mapping) -> "GenConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**dict(raw))

    @classmethod
    def from_toml(cls, path: str | Path) -> "GenConfig":
        with open(path, "rb") as fh:
            return cls.from_mapping(tomllib.load(fh))


@dataclass(frozen=True)
class PlantedGroup:
    group_id: int
    source: int
    destination: int
    members: frozenset[int]
    source_party: Party
    paths: tuple[tuple[int, ...], ...] = ()


@dataclass
class LabeledDataset:
    full: TransactionGraph
    views: tuple[InstitutionView, InstitutionView]
    assignment: dict[int, Party]
    labels: dict[int, bool]  # True = illicit
    groups: list[PlantedGroup] = field(default_factory=list)

    @property
    def illicit(self) -> set[int]:
        return {n for n, bad in self.labels.items() if bad}

    def group_of(self) -> dict[int, int]:
        return {n: g.group_id for g in self.groups for n in g.members}


def _cents(units: float) -> int:
    return max(1, int(round(units * 100)))


def generate(config: GenConfig) -> LabeledDataset:
    rng = np.random.default_rng(config.seed)
    cfg = config

    widths = rng.integers(cfg.fan_width[0], cfg.fan_width[1] + 1, size=cfg.num_groups)
    depths = [rng.integers(cfg.layering_depth[0], cfg.layering_depth[1] + 1, size=w) for w in widths]
    noisy = [rng.random(w) < cfg.noise_fraction for w in widths]
    depths = [np.where(nz, np.maximum(d, 2), d) for d, nz in zip(depths, noisy)]
    needed = int(sum(2 + d.sum() for d in depths))
    if needed > cfg.num_accounts:
        raise ValueError(f"planted groups need {needed} accounts but only {cfg.num_accounts} exist")

    ids = (rng.permutation(cfg.num_accounts) + 1).tolist()
    cursor = 0

    def take() -> int:
        nonlocal cursor
        cursor += 1
        return ids[cursor - 1]

    assignment: dict[int, Party] = {}
    edges: list[Edge] = []
    groups: list[PlantedGroup] = []

    for gid in range(cfg.num_groups):
        src_party = Party.B if rng.random() < cfg.source_in_b_fraction else Party.A
        source, dest = take(), take()
        assignment[source] = src_party
        assignment[dest] = src_party.peer
        members = {source, dest}
        paths = []
        for depth, is_noisy in zip(depths[gid], noisy[gid]):
            depth = int(depth)
            hops = [take() for _ in range(depth)]
            chain = [source, *hops, dest]
            n_edges = len(chain) - 1
            if is_noisy:
                # three crossings among the depth+1 edges of the path
                cross_at = sorted(rng.choice(n_edges, size=3, replace=False)) if n_edges >= 3 else [0, 1, 2][:n_edges]
            else:
                cross_at = [int(rng.integers(0, n_edges))]
            party = src_party
            for i, node in enumerate(chain[1:-1], start=1):
                if i - 1 in cross_at:
                    party = party.peer
                assignment[node] = party
            if (party.peer if n_edges - 1 in cross_at else party) is not src_party.peer:
                # odd crossing count guarantees arrival in the destination's party
                raise AssertionError("path does not reach the destination party")
            amount = rng.uniform(*cfg.group_amount)
            for a, b in zip(chain, chain[1:]):
                edges.append(Edge(a, b, _cents(amount), False))
                amount *= rng.uniform(*cfg.hop_retention)
            members.update(hops)
            paths.append(tuple(chain))
        groups.append(PlantedGroup(gid, source, dest, frozenset(members), src_party, tuple(paths)))

    background = ids[cursor:]
    for n in background:
        assignment[n] = Party.A if rng.random() < cfg.party_balance else Party.B
    if len(background) >= 2 and cfg.background_edges:
        bg = np.asarray(background)
        src = rng.integers(0, len(bg), size=cfg.background_edges)
        off = rng.integers(1, len(bg), size=cfg.background_edges)
        dst = (src + off) % len(bg)
        amounts = rng.lognormal(np.log(cfg.background_amount_median), cfg.background_amount_sigma, cfg.background_edges)
        for s, d, a in zip(bg[src].tolist(), bg[dst].tolist(), amounts.tolist()):
            edges.append(Edge(s, d, _cents(a), False))

    edges = [Edge(e.src, e.dst, e.amount, assignment[e.src] is not assignment[e.dst]) for e in edges]
    full = TransactionGraph.from_edges(edges, nodes=ids)
    views = split_views(full, assignment)
    illicit = {n for g in groups for n in g.members}
    labels = {n: n in illicit for n in full.nodes}
    return LabeledDataset(full, views, assignment, labels, groups)


# -- files -------------------------------------------------------------------


def write_labels(ds: LabeledDataset, path: str | Path) -> None:
    group_of = ds.group_of()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("account,label,group_id\n")
        for n in sorted(ds.labels):
            gid = group_of.get(n, "")
            fh.write(f"{n},{'illicit' if ds.labels[n] else 'licit'},{gid}\n")


def load_labels(path: str | Path) -> tuple[dict[int, bool], dict[int, int]]:
    labels: dict[int, bool] = {}
    group_of: dict[int, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            label = row.get("label", "").strip()
            if label not in ("licit", "illicit"):
                raise GraphError(f"line {lineno}: label must be licit or illicit")
            n = int(row["account"])
            labels[n] = label == "illicit"
            if row.get("group_id", "").strip():
                group_of[n] = int(row["group_id"])
    return labels, group_of


def write_dataset(ds: LabeledDataset, out_dir: str | Path, config: GenConfig | None = None) -> dict[str, Path]:
    """Write every artifact of a dataset under ``out_dir``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "full": out / "full.csv",
        "assignment": out / "assignment.csv",
        "labels": out / "labels.csv",
        "view_a": out / "view_a.csv",
        "view_b": out / "view_b.csv",
        "accounts_a": out / "view_a.accounts.csv",
        "accounts_b": out / "view_b.accounts.csv",
        "groups": out / "groups.json",
    }
    write_graph(ds.full, paths["full"])
    write_assignment(ds.assignment, paths["assignment"])
    write_labels(ds, paths["labels"])
    for view, g, acc in ((ds.views[0], "view_a", "accounts_a"), (ds.views[1], "view_b", "accounts_b")):
        write_graph(view.graph, paths[g])
        write_accounts(view.owned, paths[acc])
    with open(paths["groups"], "w", encoding="utf-8") as fh:
        json.dump(
            {
                "config": asdict(config) if config else None,
                "groups": [
                    {
                        "group_id": g.group_id,
                        "source": g.source,
                        "destination": g.destination,
                        "source_party": g.source_party.value,
                        "members": sorted(g.members),
                    }
                    for g in ds.groups
                ],
            },
            fh,
            indent=1,
        )
    return paths
