import json

import pytest

from csgm import bloom
from csgm.graph import Party, prepare_view
from csgm.protocol import (
    MESSAGE_KINDS,
    STAGES,
    Channel,
    SessionConfig,
    SessionError,
    build_index,
    communication_report,
    confirm_candidates,
    match_counts,
    resolve_match,
    run_session,
)
from csgm.sketch import BandedSignature
from csgm.synth import GenConfig, generate

from conftest import views_from


def one_group(source_in_b=0.0, seed=2):
    ds = generate(
        GenConfig(num_accounts=300, background_edges=150, num_groups=1, source_in_b_fraction=source_in_b, seed=seed)
    )
    return ds, tuple(prepare_view(v) for v in ds.views)


@pytest.mark.parametrize("mode", ["sim", "prob"])
def test_single_planted_group_is_recovered(mode):
    ds, (va, vb) = one_group()
    grp = ds.groups[0]
    assert grp.source_party is Party.A
    tr = run_session(va, vb, SessionConfig.for_mode(mode))
    assert [(g.source_party, g.source, g.dest_party, g.dest) for g in tr.groups] == [
        (Party.A, grp.source, Party.B, grp.destination)
    ]
    g = tr.groups[0]
    assert g.members == grp.members
    assert grp.source in g.members_source_side and grp.destination in g.members_dest_side
    if mode == "sim":
        assert g.score == 1.0
    else:
        assert g.score is None


def test_source_in_b_is_recovered_too():
    ds, (va, vb) = one_group(source_in_b=1.0, seed=5)
    grp = ds.groups[0]
    tr = run_session(va, vb, SessionConfig.for_mode("sim"))
    assert [(g.source_party, g.source, g.dest) for g in tr.groups] == [(Party.B, grp.source, grp.destination)]


def test_no_cross_edges_no_hits():
    va, vb = views_from([(1, 2, 50_000), (3, 4, 50_000)], {1: "A", 2: "A", 3: "B", 4: "B"})
    tr = run_session(va, vb, SessionConfig.for_mode("sim", filter_bits=1024))
    assert tr.groups == []
    assert all(not v for per in tr.verdicts.values() for v in per.values())
    rep = communication_report(tr)
    for party in "AB":
        assert rep["per_party"][party]["by_kind"]["bank_scatter"] == bloom.serialized_size(50, 1024)


def test_swapping_inputs_gives_same_groups(small_dataset):
    va, vb = (prepare_view(v) for v in small_dataset.views)
    cfg = SessionConfig.for_mode("sim")
    fwd = run_session(va, vb, cfg)
    back = run_session(vb, va, cfg)
    key = lambda tr: sorted((g.source_party.value, g.source, g.dest_party.value, g.dest) for g in tr.groups)
    assert key(fwd) == key(back)
    assert fwd.predictions()[0] == back.predictions()[0]
    assert [m["sender"] for m in fwd.messages] == [{"A": "B", "B": "A"}[m["sender"]] for m in back.messages]


def test_transcript_is_deterministic(small_dataset):
    va, vb = (prepare_view(v) for v in small_dataset.views)
    cfg = SessionConfig.for_mode("sim", seed=7)
    assert run_session(va, vb, cfg).to_json(False) == run_session(va, vb, cfg).to_json(False)


def test_handshake_mismatch_aborts():
    _, (va, vb) = one_group()
    with pytest.raises(SessionError, match="seed"):
        run_session(va, vb, SessionConfig.for_mode("sim", seed=1), SessionConfig.for_mode("sim", seed=2))
    with pytest.raises(SessionError, match="band_rows"):
        run_session(va, vb, SessionConfig.for_mode("sim"), SessionConfig.for_mode("sim", band_rows=4))
    with pytest.raises(SessionError):
        run_session(va, va, SessionConfig.for_mode("sim"))


def test_message_order_and_whitelist(small_dataset):
    va, vb = (prepare_view(v) for v in small_dataset.views)
    tr = run_session(va, vb, SessionConfig.for_mode("prob"))
    kinds = [m["kind"] for m in tr.messages]
    assert set(kinds) <= set(MESSAGE_KINDS)
    assert kinds[:2] == ["handshake", "handshake"]
    assert kinds.count("revelation") == 2
    ch = Channel()
    with pytest.raises(SessionError):
        ch.send(Party.A, "raw_edges", b"")
    with pytest.raises(SessionError):
        ch.receive(Party.A, "handshake")


def test_revelation_carries_only_band_fingerprints(monkeypatch):
    _, (va, vb) = one_group()
    ch_payloads = []
    orig = Channel.send

    def spy(self, sender, kind, payload):
        if kind == "revelation":
            ch_payloads.append(json.loads(payload))
        return orig(self, sender, kind, payload)

    monkeypatch.setattr(Channel, "send", spy)
    run_session(va, vb, SessionConfig.for_mode("sim"))
    entries = [e for p in ch_payloads for e in p["entries"]]
    assert entries
    for e in entries:
        assert set(e) == {"id", "resolve_in", "bands"}
        assert all(len(bytes.fromhex(fp)) == 16 for _, fp in e["bands"])


def test_resolve_match_multimap():
    fp1, fp2 = b"\x01" * 16, b"\x02" * 16
    idx = build_index({10: BandedSignature((fp1, fp2)), 11: BandedSignature((fp1, b"\x03" * 16))})
    assert resolve_match([(0, fp1)], idx) == [10, 11]
    assert resolve_match([(1, fp2)], idx) == [10]
    assert resolve_match([(1, fp1)], idx) == []
    assert resolve_match([(0, b"\x09" * 16)], idx) == []
    counts = match_counts([(0, fp1), (1, fp2)], idx)
    assert counts == {10: 2, 11: 1}
    cfg = SessionConfig.for_mode("sim", num_hashes=4, band_rows=2, tau=1.0)
    assert confirm_candidates(counts, cfg) == [10]
    assert confirm_candidates(counts, SessionConfig.for_mode("prob", num_hashes=10)) == [10, 11]


def test_communication_report_and_stages(small_dataset):
    va, vb = (prepare_view(v) for v in small_dataset.views)
    tr = run_session(va, vb, SessionConfig.for_mode("sim"))
    rep = communication_report(tr)
    one = bloom.serialized_size(50, 500_000)
    assert rep["bank_bytes"] == one
    assert rep["total_bytes"] == sum(m["bytes"] for m in tr.messages)
    for party in "AB":
        kinds = rep["per_party"][party]["by_kind"]
        assert kinds["bank_scatter"] == kinds["bank_gather"] == one
        stages = tr.timings[party]
        assert set(stages) == set(STAGES) | {"Total"}
        assert stages["Total"] == pytest.approx(sum(stages[s] for s in STAGES))
    d = tr.to_dict()
    assert d["communication"]["mib_both_families"] == pytest.approx(2 * one / 2**20)
    assert "timings" not in tr.to_dict(include_timings=False)


def test_config_validation():
    with pytest.raises(ValueError):
        SessionConfig.for_mode("sim", num_hashes=100, band_rows=3)
    cfg = SessionConfig.for_mode("prob")
    assert cfg.band_rows == 5 and cfg.to_dict()["mode"] == "prob"
