"""Transaction graph model, CSV ingestion, preprocessing and the two-party split.

Accounts are opaque unsigned 64-bit integers. Amounts are held as integer
minor units (cents) so that flow ratios never accumulate float drift.
"""

from __future__ import annotations

import csv
import enum
import io
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

U64_MAX = 2**64 - 1
GRAPH_HEADER = ("src", "dst", "amount", "cross")
DEFAULT_MIN_AMOUNT = 100 * 100  # 100 currency units, in cents


class GraphError(ValueError):
    """Raised for malformed graph input or violated graph invariants."""


class GraphParseError(GraphError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class Party(str, enum.Enum):
    A = "A"
    B = "B"

    @property
    def peer(self) -> "Party":
        return Party.B if self is Party.A else Party.A


class Edge(NamedTuple):
    src: int
    dst: int
    amount: int  # cents
    cross: bool


@dataclass(frozen=True)
class TransactionGraph:
    """Immutable directed multigraph. Build with :meth:`from_edges`."""

    nodes: tuple[int, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self):
        node_set = set(self.nodes)
        if len(node_set) != len(self.nodes):
            raise GraphError("duplicate node ids")
        for e in self.edges:
            if e.src not in node_set or e.dst not in node_set:
                raise GraphError(f"edge {e.src}->{e.dst} has an endpoint outside the node set")
            if e.amount < 0:
                raise GraphError(f"edge {e.src}->{e.dst} has negative amount")

    @classmethod
    def from_edges(cls, edges: Iterable[Edge | tuple], nodes: Iterable[int] = ()) -> "TransactionGraph":
        es = tuple(Edge(int(s), int(d), int(a), bool(c)) for s, d, a, c in edges)
        ns = set(int(n) for n in nodes)
        for e in es:
            ns.add(e.src)
            ns.add(e.dst)
        for n in ns:
            if not 0 <= n <= U64_MAX:
                raise GraphError(f"account id {n} is not an unsigned 64-bit integer")
        return cls(tuple(sorted(ns)), es)

    @cached_property
    def node_set(self) -> frozenset[int]:
        return frozenset(self.nodes)

    @cached_property
    def out_edges(self) -> dict[int, tuple[Edge, ...]]:
        adj: dict[int, list[Edge]] = defaultdict(list)
        for e in self.edges:
            adj[e.src].append(e)
        return {n: tuple(v) for n, v in adj.items()}

    @cached_property
    def in_edges(self) -> dict[int, tuple[Edge, ...]]:
        adj: dict[int, list[Edge]] = defaultdict(list)
        for e in self.edges:
            adj[e.dst].append(e)
        return {n: tuple(v) for n, v in adj.items()}

    def successors(self, node: int) -> tuple[Edge, ...]:
        return self.out_edges.get(node, ())

    def predecessors(self, node: int) -> tuple[Edge, ...]:
        return self.in_edges.get(node, ())

    @cached_property
    def is_aggregated(self) -> bool:
        pairs = {(e.src, e.dst) for e in self.edges}
        return len(pairs) == len(self.edges)

    def total_out(self, node: int) -> int:
        return sum(e.amount for e in self.successors(node))

    def total_in(self, node: int) -> int:
        return sum(e.amount for e in self.predecessors(node))

    def canonical_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def __len__(self):
        return len(self.nodes)


def require_aggregated(g: TransactionGraph) -> None:
    if not g.is_aggregated:
        raise GraphError("graph has parallel edges; call aggregate_edges first")


# -- ingestion ---------------------------------------------------------------


def parse_amount(text: str) -> int:
    """Parse a decimal currency string into integer cents."""
    try:
        value = Decimal(text.strip())
    except InvalidOperation:
        raise GraphError(f"amount {text!r} is not a number") from None
    if not value.is_finite():
        raise GraphError(f"amount {text!r} is not finite")
    if value < 0:
        raise GraphError(f"amount {text!r} is negative")
    cents = value * 100
    if cents != cents.to_integral_value():
        raise GraphError(f"amount {text!r} has sub-cent precision")
    return int(cents)


def format_amount(cents: int) -> str:
    return f"{cents // 100}.{cents % 100:02d}"


def _parse_id(text: str, id_map: "AccountIndex | None") -> int:
    text = text.strip()
    if id_map is not None:
        return id_map.intern(text)
    value = int(text)
    if not 0 <= value <= U64_MAX:
        raise ValueError("out of u64 range")
    return value


def read_graph_csv(lines: Iterable[str], id_map: "AccountIndex | None" = None) -> TransactionGraph:
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        return TransactionGraph.from_edges([])
    if tuple(h.strip() for h in header) != GRAPH_HEADER:
        raise GraphParseError(1, f"expected header {','.join(GRAPH_HEADER)}, got {','.join(header)}")
    edges = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise GraphParseError(lineno, f"expected 4 fields, got {len(row)}")
        try:
            src = _parse_id(row[0], id_map)
            dst = _parse_id(row[1], id_map)
        except ValueError as exc:
            raise GraphParseError(lineno, f"bad account id ({exc})") from None
        try:
            amount = parse_amount(row[2])
        except GraphError as exc:
            raise GraphParseError(lineno, str(exc)) from None
        flag = row[3].strip()
        if flag not in ("0", "1"):
            raise GraphParseError(lineno, f"cross flag must be 0 or 1, got {flag!r}")
        edges.append(Edge(src, dst, amount, flag == "1"))
    return TransactionGraph.from_edges(edges)


def load_graph(path: str | Path, id_map: "AccountIndex | None" = None) -> TransactionGraph:
    """Load a graph CSV (``src,dst,amount,cross``). Duplicate pairs stay as multi-edges.

    Pass ``id_map`` when the file carries string account names instead of
    integer ids; names are interned to sequential integers.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        return read_graph_csv(fh, id_map)


def graph_to_csv(g: TransactionGraph) -> str:
    buf = io.StringIO()
    buf.write(",".join(GRAPH_HEADER) + "\n")
    for e in g.canonical_edges():
        buf.write(f"{e.src},{e.dst},{format_amount(e.amount)},{int(e.cross)}\n")
    return buf.getvalue()


def write_graph(g: TransactionGraph, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(graph_to_csv(g))


class AccountIndex:
    """Sidecar dictionary mapping external string ids to integer account ids."""

    def __init__(self, mapping: Mapping[str, int] | None = None):
        self._ids: dict[str, int] = dict(mapping or {})
        self._next = max(self._ids.values(), default=-1) + 1

    def intern(self, name: str) -> int:
        if name not in self._ids:
            self._ids[name] = self._next
            self._next += 1
        return self._ids[name]

    def name_of(self, account: int) -> str:
        for k, v in self._ids.items():
            if v == account:
                return k
        raise KeyError(account)

    def __len__(self):
        return len(self._ids)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("name,id\n")
            for name, account in sorted(self._ids.items(), key=lambda kv: kv[1]):
                fh.write(f"{name},{account}\n")

    @classmethod
    def load(cls, path: str | Path) -> "AccountIndex":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        return cls({r["name"]: int(r["id"]) for r in rows})


# -- preprocessing -----------------------------------------------------------


def aggregate_edges(g: TransactionGraph) -> TransactionGraph:
    """Merge parallel edges: amounts summed, cross flags OR-ed."""
    if g.is_aggregated:
        return g
    merged: dict[tuple[int, int], list[int]] = {}
    for e in g.edges:
        slot = merged.setdefault((e.src, e.dst), [0, 0])
        slot[0] += e.amount
        slot[1] |= e.cross
    edges = [Edge(s, d, a, bool(c)) for (s, d), (a, c) in merged.items()]
    return TransactionGraph(g.nodes, tuple(edges))


def filter_small_transactions(g: TransactionGraph, min_amount: int = DEFAULT_MIN_AMOUNT) -> TransactionGraph:
    """Keep edges with ``amount >= min_amount`` (cents). Nodes are kept even if isolated."""
    if min_amount < 0:
        raise GraphError("min_amount must be non-negative")
    return TransactionGraph(g.nodes, tuple(e for e in g.edges if e.amount >= min_amount))


def reverse(g: TransactionGraph) -> TransactionGraph:
    return TransactionGraph(g.nodes, tuple(Edge(e.dst, e.src, e.amount, e.cross) for e in g.edges))


# -- two-party split ---------------------------------------------------------


@dataclass(frozen=True)
class InstitutionView:
    """One institution's local subgraph.

    ``owned`` are the accounts the institution holds. ``boundary`` are the
    accounts touched by cross-institution edges; both parties record both
    endpoints of such an edge, so the remote endpoint is a node of this graph
    too (it just has no local edges besides the cross edges).
    """

    party: Party
    graph: TransactionGraph
    owned: frozenset[int]
    boundary: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        nodes = self.graph.node_set
        if not self.boundary <= nodes:
            raise GraphError("boundary accounts must be nodes of the view graph")
        if not self.owned <= nodes:
            raise GraphError("owned accounts must be nodes of the view graph")
        for e in self.graph.edges:
            inside = (e.src in self.owned) + (e.dst in self.owned)
            if e.cross and inside != 1:
                raise GraphError(f"cross edge {e.src}->{e.dst} must have exactly one owned endpoint")
            if not e.cross and inside != 2:
                raise GraphError(f"internal edge {e.src}->{e.dst} must have both endpoints owned")

    @cached_property
    def reversed_graph(self) -> TransactionGraph:
        return reverse(self.graph)

    def anchors(self) -> list[int]:
        return sorted(self.owned)


def split_views(full: TransactionGraph, assignment: Mapping[int, Party | str]) -> tuple[InstitutionView, InstitutionView]:
    """Split a full graph into the views held by parties A and B.

    The cross flag is recomputed from the assignment: an edge spanning both
    parties is marked cross and appears in both views.
    """
    owner: dict[int, Party] = {}
    for n in full.nodes:
        if n not in assignment:
            raise GraphError(f"account {n} is not assigned to a party")
        owner[n] = Party(assignment[n])

    edges: dict[Party, list[Edge]] = {Party.A: [], Party.B: []}
    boundary: set[int] = set()
    for e in full.edges:
        ps, pd = owner[e.src], owner[e.dst]
        if ps is pd:
            edges[ps].append(Edge(e.src, e.dst, e.amount, False))
        else:
            ce = Edge(e.src, e.dst, e.amount, True)
            edges[Party.A].append(ce)
            edges[Party.B].append(ce)
            boundary.update((e.src, e.dst))

    views = []
    for p in (Party.A, Party.B):
        owned = frozenset(n for n, q in owner.items() if q is p)
        g = TransactionGraph.from_edges(edges[p], nodes=owned)
        views.append(InstitutionView(p, g, owned, frozenset(boundary & g.node_set)))
    return views[0], views[1]


def make_view(party: Party | str, graph: TransactionGraph, owned: Iterable[int] | None = None) -> InstitutionView:
    """Build a view from a party-local graph file.

    Without an explicit account list, ownership is inferred: endpoints of
    internal edges are owned, and for a cross edge the endpoint already known
    to be owned claims it. Cross edges whose ownership stays ambiguous raise.
    """
    party = Party(party)
    if owned is None:
        owned_set = {n for e in graph.edges if not e.cross for n in (e.src, e.dst)}
        pending = [e for e in graph.edges if e.cross]
        for e in pending:
            if (e.src in owned_set) == (e.dst in owned_set):
                raise GraphError(
                    f"cannot infer which endpoint of cross edge {e.src}->{e.dst} is owned; supply an account list"
                )
    else:
        owned_set = set(owned)
    graph = TransactionGraph.from_edges(graph.edges, nodes=owned_set | set(graph.nodes))
    boundary = frozenset(n for e in graph.edges if e.cross for n in (e.src, e.dst))
    return InstitutionView(party, graph, frozenset(owned_set), boundary)


def load_accounts(path: str | Path) -> list[int]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [int(r["account"]) for r in csv.DictReader(fh)]


def write_accounts(accounts: Iterable[int], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("account\n")
        for a in sorted(accounts):
            fh.write(f"{a}\n")


def load_assignment(path: str | Path) -> dict[int, Party]:
    with open(path, newline="", encoding="utf-8") as fh:
        out = {}
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                out[int(row["account"])] = Party(row["party"].strip())
            except (KeyError, ValueError):
                raise GraphParseError(lineno, "expected account,party with party in {A,B}") from None
        return out


def write_assignment(assignment: Mapping[int, Party], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("account,party\n")
        for a in sorted(assignment):
            fh.write(f"{a},{Party(assignment[a]).value}\n")


def prepare_view(view: InstitutionView, min_amount: int = DEFAULT_MIN_AMOUNT) -> InstitutionView:
    """Aggregate parallel edges, then drop small transactions."""
    g = filter_small_transactions(aggregate_edges(view.graph), min_amount)
    boundary = frozenset(n for e in g.edges if e.cross for n in (e.src, e.dst))
    return InstitutionView(view.party, g, view.owned, boundary)
