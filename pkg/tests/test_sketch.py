import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csgm.discovery import CrossEdgeSet, Direction
from csgm.sketch import (
    MinHasher,
    MinHashParams,
    Signature,
    band,
    encode_edge,
    estimate_jaccard,
    exact_jaccard,
    minhash,
)

edge_sets = st.frozensets(st.tuples(st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1)), min_size=1, max_size=30)


def test_params_validation_and_digest():
    p = MinHashParams(100, 5, 7)
    assert p.num_bands == 20
    with pytest.raises(ValueError):
        MinHashParams(100, 3)
    with pytest.raises(ValueError):
        MinHashParams(0, 1)
    with pytest.raises(ValueError):
        MinHashParams(10, 2, -1)
    assert p.digest() == MinHashParams(100, 5, 7).digest()
    assert p.digest() != MinHashParams(100, 5, 8).digest()
    assert p.digest() != MinHashParams(100, 2, 7).digest()


def test_edge_encoding_is_big_endian():
    assert encode_edge((1, 2)) == b"\x00" * 7 + b"\x01" + b"\x00" * 7 + b"\x02"


def test_identical_sets_identical_signatures():
    p = MinHashParams(64, 4, 3)
    s = {(1, 2), (3, 4), (5, 6)}
    a, b = minhash(s, p), minhash(set(s), p)
    assert a == b
    assert estimate_jaccard(a, b) == 1.0
    assert minhash(CrossEdgeSet(1, Direction.SCATTER, frozenset(s)), p) == a


def test_disjoint_sets_rarely_agree():
    p = MinHashParams(200, 2, 0)
    a = minhash({(i, i + 1) for i in range(20)}, p)
    b = minhash({(i, i + 1) for i in range(100, 120)}, p)
    assert estimate_jaccard(a, b) == 0.0


def test_half_overlap_example():
    p = MinHashParams(400, 2, 1)
    a = minhash({(1, 0), (2, 0), (3, 0)}, p)
    b = minhash({(2, 0), (3, 0), (4, 0)}, p)
    assert abs(estimate_jaccard(a, b) - 0.5) < 3 / np.sqrt(400)


def test_errors():
    p = MinHashParams(10, 2)
    with pytest.raises(ValueError):
        minhash(set(), p)
    with pytest.raises(ValueError):
        MinHasher(p).signature_matrix([{(1, 2)}, set()])
    with pytest.raises(ValueError):
        estimate_jaccard(minhash({(1, 2)}, p), minhash({(1, 2)}, MinHashParams(12, 2)))
    with pytest.raises(ValueError):
        band(np.zeros(8, dtype=np.uint64), p)


def test_completely_disagreeing():
    a = Signature(np.arange(10, dtype=np.uint64))
    b = Signature(np.arange(10, 20, dtype=np.uint64))
    assert estimate_jaccard(a, b) == 0.0


def test_band_shapes():
    p = MinHashParams(6, 2)
    bs = band(minhash({(1, 2)}, p), p)
    assert len(bs) == 3 and all(len(fp) == 16 for fp in bs.bands)
    one = MinHashParams(6, 6)
    assert len(band(minhash({(1, 2)}, one), one)) == 1


def test_band_depends_only_on_its_rows_and_index():
    p = MinHashParams(6, 2)
    v = np.array([1, 2, 3, 4, 5, 6], dtype=np.uint64)
    w = v.copy()
    w[5] = 99
    a, b = band(v, p), band(w, p)
    assert a.bands[:2] == b.bands[:2] and a.bands[2] != b.bands[2]
    same_rows = np.array([7, 7, 7, 7, 7, 7], dtype=np.uint64)
    fps = band(same_rows, p).bands
    assert len(set(fps)) == 3


def test_matrix_matches_single_signatures():
    p = MinHashParams(32, 4, 9)
    sets = [{(i, j) for j in range(i % 7 + 1)} for i in range(50)]
    h = MinHasher(p)
    mat = h.signature_matrix(sets, chunk=13)
    for s, row in zip(sets, mat):
        assert np.array_equal(row, h.signature(s).values)


def test_cross_party_determinism():
    p = MinHashParams(100, 2, 42)
    s = {(10, 20), (30, 40), (2**63, 5)}
    assert MinHasher(p).banded(s) == MinHasher(p).banded(s)


def _py_splitmix(z):
    m = (1 << 64) - 1
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & m
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & m
    return z ^ (z >> 31)


def _py_minhash(edges, num_hashes, seed):
    import hashlib

    key = seed.to_bytes(8, "big")
    base = [int.from_bytes(hashlib.blake2b(encode_edge(e), digest_size=8, key=key).digest(), "big") for e in edges]
    out = []
    for t in range(num_hashes):
        k = _py_splitmix(((seed ^ t) + 0x9E3779B97F4A7C15) & ((1 << 64) - 1))
        out.append(min(_py_splitmix(b ^ k) for b in base))
    return out


def test_signature_matches_pure_python_reference():
    for seed in (0, 1, 2**64 - 1):
        edges = {(1, 2), (3, 4), (2**40, 17)}
        assert [int(v) for v in minhash(edges, MinHashParams(8, 2, seed)).values] == _py_minhash(edges, 8, seed)


def test_golden_values_are_stable():
    p = MinHashParams(4, 2, 0)
    sig = minhash({(1, 2), (3, 4)}, p)
    assert [int(x) for x in sig.values] == [
        630787264322685335,
        11263913620891370287,
        5720933480548254012,
        8344382113627464104,
    ]
    assert [b.hex() for b in band(sig, p).bands] == [
        "de1107c612361c97b34f34243e384ca6",
        "75411429b979ba5f3f8002dd1a18989b",
    ]
    assert MinHashParams(100, 2, 0).digest() == 11964408262396721854


def test_position_collision_rate_tracks_jaccard():
    # |A & B| = 30, |A | B| = 100 -> J = 0.3; average over seeds
    a = {(i, 0) for i in range(65)}
    b = {(i, 0) for i in range(35, 100)}
    assert exact_jaccard(a, b) == pytest.approx(0.3)
    rates = [estimate_jaccard(minhash(a, MinHashParams(100, 1, s)), minhash(b, MinHashParams(100, 1, s))) for s in range(40)]
    assert abs(np.mean(rates) - 0.3) < 0.03


def test_band_collision_rate_is_s_to_the_r():
    a = {(i, 1) for i in range(75)}
    b = {(i, 1) for i in range(25, 100)}
    s = exact_jaccard(a, b)  # 0.5
    r = 3
    hits = total = 0
    for seed in range(40):
        p = MinHashParams(150, r, seed)
        h = MinHasher(p)
        ba, bb = h.banded(a), h.banded(b)
        hits += sum(x == y for x, y in zip(ba.bands, bb.bands))
        total += p.num_bands
    assert abs(hits / total - s**r) < 0.03


def test_exact_jaccard():
    assert exact_jaccard(set(), set()) == 1.0
    assert exact_jaccard({1}, {2}) == 0.0
    assert exact_jaccard({1, 2}, {2, 3}) == pytest.approx(1 / 3)


@settings(max_examples=50, deadline=None)
@given(edge_sets, edge_sets)
def test_estimate_in_unit_interval_and_symmetric(a, b):
    p = MinHashParams(20, 2, 5)
    sa, sb = minhash(a, p), minhash(b, p)
    est = estimate_jaccard(sa, sb)
    assert 0.0 <= est <= 1.0
    assert est == estimate_jaccard(sb, sa)
    if a == b:
        assert est == 1.0
