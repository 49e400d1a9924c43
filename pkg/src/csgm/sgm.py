"""Centralized scatter-gather mining.

All outflow of a candidate source is marked, and that marked money is pushed
downstream. A node forwards marked money in proportion to how much of its
inflow it passes on: if it receives more than it sends, only the matching
fraction of its marked inflow leaves; otherwise all of it does. Nodes whose
marked inflow is a large share of the source's outflow are flagged.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field

from .graph import GraphError, TransactionGraph, require_aggregated

DEFAULT_THRESHOLD = 0.4
_RATIO_TOL = 1e-12


@dataclass
class MarkedFlowState:
    source: int
    marked_in: dict[int, float] = field(default_factory=dict)
    marked_out: dict[int, float] = field(default_factory=dict)
    total_in: dict[int, int] = field(default_factory=dict)
    total_out: dict[int, int] = field(default_factory=dict)


@dataclass
class SgmDetection:
    source: int
    flagged: list[tuple[int, float]]

    @property
    def nodes(self) -> list[int]:
        return [n for n, _ in self.flagged]

    def to_dict(self) -> dict:
        return {"source": self.source, "flagged": [{"node": n, "ratio": r} for n, r in self.flagged]}


def _bfs_levels(g: TransactionGraph, source: int) -> dict[int, int]:
    level = {source: 0}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for e in g.successors(v):
            if e.dst not in level:
                level[e.dst] = level[v] + 1
                queue.append(e.dst)
    return level


def _processing_order(g: TransactionGraph, source: int, level: dict[int, int]) -> list[int]:
    # Kahn's algorithm over the reachable subgraph, smallest BFS level first.
    # When only cycles remain, the lowest-level pending node is forced and
    # its unprocessed in-edges are treated as back-edges.
    pending = {
        n: sum(1 for e in g.predecessors(n) if e.src in level and e.src != source)
        for n in level
        if n != source
    }
    done = {source}
    order = [source]
    ready = [(level[n], n) for n, c in pending.items() if c == 0]
    heapq.heapify(ready)
    stuck = sorted((level[n], n) for n in pending)
    while len(done) < len(level):
        if ready:
            _, v = heapq.heappop(ready)
            if v in done:
                continue
        else:
            v = next(n for _, n in stuck if n not in done)
        done.add(v)
        order.append(v)
        for e in g.successors(v):
            w = e.dst
            if w in done:
                continue
            pending[w] -= 1
            if pending[w] == 0:
                heapq.heappush(ready, (level[w], w))
    return order


def propagate_marked(g: TransactionGraph, source: int) -> MarkedFlowState:
    """Push the source's marked outflow through the graph.

    Nodes are finalized once, in topological order on acyclic graphs; on
    cycles, edges into already-finalized nodes carry nothing. The source's
    own inflow is ignored.
    """
    require_aggregated(g)
    if source not in g.node_set:
        raise GraphError(f"source {source} is not in the graph")

    level = _bfs_levels(g, source)
    state = MarkedFlowState(source)
    for n in level:
        state.total_in[n] = g.total_in(n)
        state.total_out[n] = g.total_out(n)

    marked_out = state.marked_out
    marked_in = state.marked_in
    marked_in[source] = 0.0
    marked_out[source] = float(state.total_out[source])

    for v in _processing_order(g, source, level)[1:]:
        m_in = 0.0
        for e in g.predecessors(v):
            u = e.src
            if u in marked_out and state.total_out[u] > 0:
                m_in += marked_out[u] * e.amount / state.total_out[u]
        t_in, t_out = state.total_in[v], state.total_out[v]
        if t_in > t_out:
            m_out = m_in * t_out / t_in
        else:
            m_out = m_in
        marked_in[v] = m_in
        marked_out[v] = min(m_out, float(t_out))
    return state


def detect_sgm(g: TransactionGraph, source: int, threshold: float = DEFAULT_THRESHOLD) -> SgmDetection:
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    state = propagate_marked(g, source)
    seeded = state.marked_out[source]
    if seeded <= 0:
        return SgmDetection(source, [])
    flagged = []
    for j, m in state.marked_in.items():
        if j == source:
            continue
        ratio = m / seeded
        if ratio >= threshold - _RATIO_TOL:
            flagged.append((j, min(ratio, 1.0)))
    flagged.sort(key=lambda t: (-t[1], t[0]))
    return SgmDetection(source, flagged)


def run_sgm_all_sources(
    g: TransactionGraph,
    threshold: float = DEFAULT_THRESHOLD,
    min_group_size: float = 1,
) -> list[SgmDetection]:
    """Run :func:`detect_sgm` from every node with out-degree >= 2."""
    out = []
    for n in g.nodes:
        if len(g.successors(n)) < 2:
            continue
        det = detect_sgm(g, n, threshold)
        if det.flagged and len(det.flagged) >= min_group_size:
            out.append(det)
    return out
