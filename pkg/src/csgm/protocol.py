"""Two-party collaborative scatter-gather session, simulated in-process.

Each :class:`Party` sees only its own :class:`~csgm.graph.InstitutionView`
and the byte payloads delivered by the :class:`Channel`. The exchange is:

1. ``handshake`` both ways (all shared parameters; mismatch aborts);
2. ``bank_scatter`` and ``bank_gather`` both ways (serialized Bloom banks);
3. local detection: own scatter sets against the peer's gather bank flag
   sources, own gather sets against the peer's scatter bank flag destinations;
4. ``revelation`` both ways: the matched band fingerprints of every hit, so
   the peer can look up which of its own anchors sits at the other end;
5. local tracing of intermediate accounts.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable

from . import bloom
from .discovery import (
    DEFAULT_MAX_DEPTH,
    DEFAULT_MIN_SET_SIZE,
    Direction,
    SetFamily,
    discover_family,
    trace_members,
)
from .detection import DetectionConfig, Mode, SetVerdict, detect_banded
from .graph import InstitutionView, Party
from .sketch import BandedSignature, MinHasher, MinHashParams

MESSAGE_KINDS = ("handshake", "bank_scatter", "bank_gather", "revelation")
STAGES = ("Set Discovery", "Minhash", "Inserting", "Membership Testing")


class SessionError(RuntimeError):
    pass


@dataclass(frozen=True)
class SessionConfig:
    mode: Mode = Mode.SIM
    tau: float = 0.2
    num_hashes: int = 100
    band_rows: int = 2
    seed: int = 0
    filter_bits: int = bloom.DEFAULT_FILTER_BITS
    probe_hashes: int = bloom.DEFAULT_PROBES
    max_depth: int = DEFAULT_MAX_DEPTH
    min_set_size: int = DEFAULT_MIN_SET_SIZE

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        MinHashParams(self.num_hashes, self.band_rows, self.seed)

    @classmethod
    def for_mode(cls, mode: Mode | str, **kw) -> "SessionConfig":
        mode = Mode(mode)
        kw.setdefault("band_rows", 5 if mode is Mode.PROB else 2)
        return cls(mode=mode, **kw)

    @property
    def params(self) -> MinHashParams:
        return MinHashParams(self.num_hashes, self.band_rows, self.seed)

    @property
    def detection(self) -> DetectionConfig:
        return DetectionConfig(self.mode, self.tau, self.params)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d


@dataclass(frozen=True)
class Message:
    sender: Party
    receiver: Party
    kind: str
    payload: bytes

    @property
    def byte_length(self) -> int:
        return len(self.payload)

    def log_entry(self) -> dict:
        return {
            "sender": self.sender.value,
            "receiver": self.receiver.value,
            "kind": self.kind,
            "bytes": self.byte_length,
            "sha256": hashlib.sha256(self.payload).hexdigest(),
        }


class Channel:
    """Ordered, append-only message log that doubles as the transport."""

    def __init__(self):
        self.messages: list[Message] = []

    def send(self, sender: Party, kind: str, payload: bytes) -> None:
        if kind not in MESSAGE_KINDS:
            raise SessionError(f"message kind {kind!r} is not allowed on the channel")
        self.messages.append(Message(sender, sender.peer, kind, payload))

    def receive(self, receiver: Party, kind: str) -> bytes:
        for m in reversed(self.messages):
            if m.receiver is receiver and m.kind == kind:
                return m.payload
        raise SessionError(f"{receiver.value} expected a {kind} message")


@dataclass
class DetectedGroup:
    source_party: Party
    source: int | None
    dest_party: Party
    dest: int | None
    members_source_side: set[int] = field(default_factory=set)
    members_dest_side: set[int] = field(default_factory=set)
    score: float | None = None

    @property
    def key(self):
        return (self.source_party.value, self.source, self.dest_party.value, self.dest)

    @property
    def members(self) -> set[int]:
        return self.members_source_side | self.members_dest_side

    def to_dict(self) -> dict:
        return {
            "source_party": self.source_party.value,
            "source": self.source,
            "dest_party": self.dest_party.value,
            "dest": self.dest,
            "members_source_side": sorted(self.members_source_side),
            "members_dest_side": sorted(self.members_dest_side),
            "score": self.score,
        }


@dataclass
class SessionTranscript:
    config: SessionConfig
    messages: list[dict]
    verdicts: dict[str, dict[str, list[SetVerdict]]]
    revealed_matches: list[dict]
    groups: list[DetectedGroup]
    timings: dict[str, dict[str, float]]

    def predictions(self) -> tuple[set[int], dict[int, float]]:
        """Accounts predicted illicit and a per-account score (max over its groups)."""
        predicted: set[int] = set()
        scores: dict[int, float] = {}
        for g in self.groups:
            predicted |= g.members
            if g.score is not None:
                for n in g.members:
                    scores[n] = max(scores.get(n, 0.0), g.score)
        return predicted, scores

    def to_dict(self, include_timings: bool = True) -> dict:
        predicted, scores = self.predictions()
        out = {
            "params": self.config.to_dict(),
            "messages": self.messages,
            "verdicts": {
                p: {d: [v.to_dict() for v in vs] for d, vs in per.items()} for p, per in sorted(self.verdicts.items())
            },
            "revealed_matches": self.revealed_matches,
            "groups": [g.to_dict() for g in self.groups],
            "predicted_illicit": sorted(predicted),
            "scores": {str(k): v for k, v in sorted(scores.items())},
        }
        if include_timings:
            out["timings"] = self.timings
            out["communication"] = communication_report(self)
        return out

    def to_json(self, include_timings: bool = True) -> str:
        return json.dumps(self.to_dict(include_timings), indent=1)


class _Stopwatch:
    def __init__(self):
        self.stages = {s: 0.0 for s in STAGES}

    def stage(self, name):
        watch = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                watch.stages[name] += time.perf_counter() - self.t0

        return _Ctx()


def build_index(banded: dict[int, BandedSignature]) -> dict[tuple[int, bytes], list[int]]:
    index: dict[tuple[int, bytes], list[int]] = defaultdict(list)
    for anchor in sorted(banded):
        for k, fp in enumerate(banded[anchor].bands):
            index[(k, fp)].append(anchor)
    return index


def match_counts(revealed_fps: Iterable[tuple[int, bytes]], own_family_index: dict) -> Counter:
    """Number of revealed ``(band, fingerprint)`` pairs each local anchor shares."""
    counts: Counter = Counter()
    for key in set(map(tuple, revealed_fps)):
        counts.update(own_family_index.get(key, ()))
    return counts


def resolve_match(revealed_fps: Iterable[tuple[int, bytes]], own_family_index: dict) -> list[int]:
    """All local anchors sharing at least one revealed ``(band, fingerprint)``."""
    return sorted(match_counts(revealed_fps, own_family_index))


def confirm_candidates(counts: Counter, config: SessionConfig) -> list[int]:
    """Resolved anchors whose own band agreement with the revealer passes the detector.

    A candidate sharing ``c`` of the revealed bands agrees with the revealing
    set on ``c`` of ``K`` bands, so ``c/K`` estimates their pairwise
    similarity raised to ``r``. Prob mode accepts any shared band.
    """
    K = config.num_hashes // config.band_rows
    if config.mode is Mode.PROB:
        need = 1
    else:
        need = max(1, math.ceil(K * config.tau**config.band_rows - 1e-9))
    return sorted(a for a, c in counts.items() if c >= need)


class Party:
    """One institution. Holds its view privately; talks only through the channel."""

    def __init__(self, view: InstitutionView, config: SessionConfig, channel: Channel):
        self.view = view
        self.party = view.party
        self.config = config
        self.channel = channel
        self.watch = _Stopwatch()
        self.families: dict[Direction, SetFamily] = {}
        self.banded: dict[Direction, dict[int, BandedSignature]] = {}
        self.verdicts: dict[Direction, list[SetVerdict]] = {}
        self._revealed: list[tuple[Direction, SetVerdict]] = []
        self.resolutions: list[tuple[Direction, list[int], dict]] = []

    def _handshake_payload(self) -> bytes:
        return json.dumps(self.config.to_dict(), sort_keys=True).encode()

    def send_handshake(self) -> None:
        self.channel.send(self.party, "handshake", self._handshake_payload())

    def check_handshake(self) -> None:
        peer = json.loads(self.channel.receive(self.party, "handshake"))
        mine = json.loads(self._handshake_payload())
        diff = sorted(k for k in mine.keys() | peer.keys() if mine.get(k) != peer.get(k))
        if diff:
            raise SessionError(f"handshake mismatch on {', '.join(diff)}")

    def prepare_and_send_banks(self) -> None:
        cfg = self.config
        with self.watch.stage("Set Discovery"):
            for d in Direction:
                self.families[d] = discover_family(self.view, d, cfg.max_depth, cfg.min_set_size)
        with self.watch.stage("Minhash"):
            hasher = MinHasher(cfg.params)
            for d, fam in self.families.items():
                sigs = hasher.signature_matrix(fam.sets) if fam.sets else []
                self.banded[d] = {s.anchor: hasher.band(sig) for s, sig in zip(fam.sets, sigs)}
        with self.watch.stage("Inserting"):
            for d in Direction:
                bank = bloom.build_bank(self.banded[d].values(), cfg.params, cfg.filter_bits, cfg.probe_hashes)
                self.channel.send(self.party, f"bank_{d.value}", bank.serialize())

    def detect(self) -> None:
        with self.watch.stage("Membership Testing"):
            # own scatter sets meet the peer's gather sets and vice versa
            for d in Direction:
                bank = bloom.deserialize(self.channel.receive(self.party, f"bank_{d.opposite.value}"))
                verdicts = detect_banded(list(self.banded[d].items()), bank, self.config.detection)
                self.verdicts[d] = verdicts
                self._revealed.extend((d, v) for v in verdicts if v.hit)

    def send_revelation(self) -> None:
        entries = [
            {"id": i, "resolve_in": d.opposite.value, "bands": [[k, fp.hex()] for k, fp in v.matched]}
            for i, (d, v) in enumerate(self._revealed)
        ]
        self.channel.send(self.party, "revelation", json.dumps({"entries": entries}).encode())

    def resolve_revelation(self) -> None:
        payload = json.loads(self.channel.receive(self.party, "revelation"))
        with self.watch.stage("Membership Testing"):
            indexes = {d: build_index(self.banded[d]) for d in Direction}
            for entry in payload["entries"]:
                d = Direction(entry["resolve_in"])
                fps = [(k, bytes.fromhex(h)) for k, h in entry["bands"]]
                counts = match_counts(fps, indexes[d])
                self.resolutions.append((d, confirm_candidates(counts, self.config), sorted(counts)))

    def trace(self, anchor: int, direction: Direction) -> set[int]:
        with self.watch.stage("Set Discovery"):
            fam = self.banded[direction]
            edges = self.families[direction].by_anchor()[anchor].edges if anchor in fam else ()
            return trace_members(self.view, anchor, direction, edges, self.config.max_depth)

    def revealed_log(self) -> list[dict]:
        return [
            {"party": self.party.value, "anchor": v.anchor, "dir": d.value, "bands": [[k, fp.hex()] for k, fp in v.matched]}
            for d, v in self._revealed
        ]


def run_session(
    view_a: InstitutionView,
    view_b: InstitutionView,
    config: SessionConfig,
    config_b: SessionConfig | None = None,
) -> SessionTranscript:
    """Run the full exchange between the holders of ``view_a`` and ``view_b``.

    ``config_b`` lets the second party bring its own parameters; any
    disagreement aborts at the handshake.
    """
    if view_a.party is view_b.party:
        raise SessionError("both views belong to the same party")
    channel = Channel()
    first = Party(view_a, config, channel)
    second = Party(view_b, config_b or config, channel)
    parties = (first, second)

    for p in parties:
        p.send_handshake()
    for p in parties:
        p.check_handshake()
    for p in parties:
        p.prepare_and_send_banks()
    for p in parties:
        p.detect()
    for p in parties:
        p.send_revelation()
    for p in parties:
        p.resolve_revelation()

    by_party = {p.party: p for p in parties}
    groups: dict[tuple, DetectedGroup] = {}
    for p in parties:
        peer = by_party[p.party.peer]
        # peer.resolutions answer p's revelations in order
        for (d, verdict), (_, candidates, _) in zip(p._revealed, peer.resolutions):
            if d is Direction.SCATTER:
                src_party, src, dst_party, dsts = p.party, [verdict.anchor], peer.party, candidates or [None]
            else:
                src_party, src, dst_party, dsts = peer.party, candidates or [None], p.party, [verdict.anchor]
            for s in src:
                for t in dsts:
                    g = DetectedGroup(src_party, s, dst_party, t)
                    prev = groups.get(g.key)
                    score = verdict.estimated_similarity
                    if prev is None:
                        g.score = score
                        groups[g.key] = g
                    elif score is not None:
                        prev.score = max(prev.score or 0.0, score)

    resolved_anchors = {(g.source_party, g.source) for g in groups.values() if g.dest is not None}
    resolved_anchors |= {(g.dest_party, g.dest) for g in groups.values() if g.source is not None}
    final = []
    for key in sorted(groups, key=lambda k: tuple((x is None, x) for x in k)):
        g = groups[key]
        if g.dest is None and (g.source_party, g.source) in resolved_anchors:
            continue
        if g.source is None and (g.dest_party, g.dest) in resolved_anchors:
            continue
        if g.source is not None:
            g.members_source_side = by_party[g.source_party].trace(g.source, Direction.SCATTER)
        if g.dest is not None:
            g.members_dest_side = by_party[g.dest_party].trace(g.dest, Direction.GATHER)
        final.append(g)

    revealed = [r for p in parties for r in p.revealed_log()]
    verdicts = {p.party.value: {d.value: p.verdicts[d] for d in Direction} for p in parties}
    timings = {}
    for p in parties:
        t = dict(p.watch.stages)
        t["Total"] = sum(t.values())
        timings[p.party.value] = t
    return SessionTranscript(config, [m.log_entry() for m in channel.messages], verdicts, revealed, final, timings)


def communication_report(transcript: SessionTranscript) -> dict:
    per_party: dict[str, dict] = {}
    for m in transcript.messages:
        slot = per_party.setdefault(m["sender"], {"total_bytes": 0, "by_kind": {}})
        slot["total_bytes"] += m["bytes"]
        slot["by_kind"][m["kind"]] = slot["by_kind"].get(m["kind"], 0) + m["bytes"]
    cfg = transcript.config
    K = cfg.num_hashes // cfg.band_rows
    one_bank = bloom.serialized_size(K, cfg.filter_bits)
    return {
        "per_party": per_party,
        "total_bytes": sum(m["bytes"] for m in transcript.messages),
        "filter_bytes": (cfg.filter_bits + 7) // 8,
        "num_filters_per_bank": K,
        "bank_bytes": one_bank,
        "mib_one_family": one_bank / 2**20,
        "mib_both_families": 2 * one_bank / 2**20,
        "stages": transcript.timings,
    }
