"""Cross-institution transaction set discovery.

From an anchor account, a bounded breadth-first search follows internal
transactions and collects every cross-institution transaction it reaches.
A cross edge ends its branch. Gather sets are the same search run on the
reversed graph; edges are always reported as the original (payer, payee).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .graph import GraphError, InstitutionView, Party, TransactionGraph, require_aggregated

DEFAULT_MAX_DEPTH = 6
DEFAULT_MIN_SET_SIZE = 5

EdgeId = tuple[int, int]


class Direction(str, enum.Enum):
    SCATTER = "scatter"
    GATHER = "gather"

    @property
    def opposite(self) -> "Direction":
        return Direction.GATHER if self is Direction.SCATTER else Direction.SCATTER


@dataclass(frozen=True)
class CrossEdgeSet:
    anchor: int
    direction: Direction
    edges: frozenset[EdgeId]

    def __len__(self):
        return len(self.edges)


@dataclass
class SetFamily:
    party: Party
    direction: Direction
    sets: list[CrossEdgeSet]

    def __len__(self):
        return len(self.sets)

    def __iter__(self):
        return iter(self.sets)

    def by_anchor(self) -> dict[int, CrossEdgeSet]:
        return {s.anchor: s for s in self.sets}


def _graph_for(view: InstitutionView, direction: Direction) -> TransactionGraph:
    return view.graph if direction is Direction.SCATTER else view.reversed_graph


def _canonical(v: int, j: int, direction: Direction) -> EdgeId:
    return (v, j) if direction is Direction.SCATTER else (j, v)


def _bfs(g: TransactionGraph, anchor: int, max_depth: int):
    """Yield ``(level, v, edge)`` for every edge expanded from the frontier."""
    visited = {anchor}
    frontier = [anchor]
    for level in range(1, max_depth + 1):
        nxt = []
        for v in frontier:
            for e in g.successors(v):
                yield level, v, e
                if not e.cross and e.dst not in visited:
                    visited.add(e.dst)
                    nxt.append(e.dst)
        if not nxt:
            break
        frontier = nxt


def discover_set(
    view: InstitutionView, anchor: int, direction: Direction | str, max_depth: int = DEFAULT_MAX_DEPTH
) -> CrossEdgeSet:
    direction = Direction(direction)
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    if anchor not in view.graph.node_set:
        raise GraphError(f"account {anchor} is not in the {view.party.value} view")
    g = _graph_for(view, direction)
    found = {_canonical(v, e.dst, direction) for _, v, e in _bfs(g, anchor, max_depth) if e.cross}
    return CrossEdgeSet(anchor, direction, frozenset(found))


def discover_family(
    view: InstitutionView,
    direction: Direction | str,
    max_depth: int = DEFAULT_MAX_DEPTH,
    min_set_size: int = DEFAULT_MIN_SET_SIZE,
) -> SetFamily:
    """Discover sets for every account the view owns; keep those with at least ``min_set_size`` edges."""
    direction = Direction(direction)
    require_aggregated(view.graph)
    sets = []
    for anchor in view.anchors():
        s = discover_set(view, anchor, direction, max_depth)
        if len(s) >= max(min_set_size, 1):
            sets.append(s)
    return SetFamily(view.party, direction, sets)


def trace_members(
    view: InstitutionView,
    anchor: int,
    direction: Direction | str,
    target_edges: Iterable[EdgeId],
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> set[int]:
    """Local accounts lying on search paths from ``anchor`` to any of ``target_edges``.

    The remote endpoint of a target cross edge is not included.
    """
    direction = Direction(direction)
    targets = set(target_edges)
    members = {anchor}
    if not targets:
        return members
    g = _graph_for(view, direction)
    # parents[w] = all nodes from the previous level with an internal edge to w
    level_of = {anchor: 0}
    parents: dict[int, set[int]] = {}
    hit_nodes = set()
    for level, v, e in _bfs(g, anchor, max_depth):
        if e.cross:
            if _canonical(v, e.dst, direction) in targets:
                hit_nodes.add(v)
            continue
        w = e.dst
        if w not in level_of:
            level_of[w] = level
        if level_of[w] == level:
            parents.setdefault(w, set()).add(v)

    stack = list(hit_nodes)
    while stack:
        v = stack.pop()
        if v in members and v != anchor:
            continue
        members.add(v)
        stack.extend(p for p in parents.get(v, ()) if p not in members)
    return members


def dump_family(family: SetFamily, path: str | Path) -> None:
    """Write a family as JSON lines, one anchor per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in sorted(family.sets, key=lambda s: s.anchor):
            row = {"anchor": s.anchor, "dir": s.direction.value, "edges": [list(e) for e in sorted(s.edges)]}
            fh.write(json.dumps(row) + "\n")


def load_family(path: str | Path, party: Party | str) -> SetFamily:
    sets = []
    direction = None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            d = Direction(row["dir"])
            if direction is not None and d is not direction:
                raise ValueError("family dump mixes directions")
            direction = d
            sets.append(CrossEdgeSet(int(row["anchor"]), d, frozenset((int(a), int(b)) for a, b in row["edges"])))
    return SetFamily(Party(party), direction or Direction.SCATTER, sets)
