import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkdsec.errors import DimensionError, InfeasibleError, RankError
from qkdsec.gf2 import (
    BitVector,
    CandidateSet,
    VectorSet,
    dot,
    dual_set,
    hash_recover,
    parities,
    random_li_set,
    rank,
)


def bv(s):
    return BitVector.from_str(s)


def bitstrings(min_n=1, max_n=10):
    return st.integers(min_n, max_n).flatmap(
        lambda n: st.lists(st.sampled_from("01"), min_size=n, max_size=n).map("".join))


def _span(vectors, n):
    """Every GF(2) combination as an int, by brute force."""
    out = {0}
    for v in vectors:
        x = v.to_int()
        out |= {y ^ x for y in out}
    return out


def _orthogonal_complement(w, n):
    return {x for x in range(2**n)
            if all(dot(BitVector.from_int(x, n), v) == 0 for v in w)}


class TestBitVector:
    def test_roundtrip(self):
        v = bv("0110")
        assert str(v) == "0110"
        assert v.to_int() == 6
        assert BitVector.from_int(6, 4) == v
        assert v.weight() == 2

    def test_xor(self):
        assert str(bv("1100") ^ bv("1010")) == "0110"
        with pytest.raises(DimensionError):
            bv("10") ^ bv("100")

    @pytest.mark.parametrize("bad", ["", "012", "ab"])
    def test_rejects_bad_strings(self, bad):
        with pytest.raises(ValueError):
            bv(bad)

    def test_from_int_range(self):
        with pytest.raises(ValueError):
            BitVector.from_int(8, 3)


class TestDot:
    def test_examples(self):
        assert dot(bv("1011"), bv("1101")) == 0
        assert dot(bv("1000"), bv("1000")) == 1

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            dot(bv("101"), bv("10"))

    @given(bitstrings(), st.data())
    def test_bilinear(self, s, data):
        n = len(s)
        gen = st.lists(st.sampled_from("01"), min_size=n, max_size=n).map("".join)
        v, w, u = bv(s), bv(data.draw(gen)), bv(data.draw(gen))
        assert dot(v, w) == dot(w, v)
        assert dot(v ^ w, u) == dot(v, u) ^ dot(w, u)


class TestRank:
    def test_examples(self):
        assert rank(VectorSet.of(["110", "011", "101"])) == 2
        assert rank(VectorSet.of(["100", "010", "001"])) == 3
        assert rank(VectorSet.of(["000"])) == 0

    @given(st.lists(st.integers(0, 63), min_size=0, max_size=8))
    def test_matches_span_size(self, ints):
        vs = [BitVector.from_int(x, 6) for x in ints]
        assert 2 ** rank(vs) == len(_span(vs, 6))


class TestRandomLiSet:
    @pytest.mark.parametrize("n,count", [(1, 1), (5, 0), (5, 3), (8, 8)])
    def test_independent(self, n, count):
        vs = random_li_set(n, count, np.random.default_rng(n + count))
        assert len(vs) == count and rank(vs) == count

    def test_too_many(self):
        with pytest.raises(InfeasibleError):
            random_li_set(3, 4, 0)

    def test_uniform_over_pairs(self):
        # in dimension 2 there are 6 ordered independent pairs
        rng = np.random.default_rng(5)
        counts = {}
        trials = 6000
        for _ in range(trials):
            key = tuple(str(v) for v in random_li_set(2, 2, rng))
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 6
        sigma = math.sqrt(trials * (1 / 6) * (5 / 6))
        assert all(abs(c - trials / 6) < 5 * sigma for c in counts.values())


class TestDualSet:
    def test_example(self):
        v = dual_set(VectorSet.of(["1100", "0011"], kind="W"))
        assert len(v) == 2 and v.kind == "V"
        assert _span(v, 4) == _span([bv("1100"), bv("0011")], 4)

    def test_empty_w(self):
        v = dual_set(VectorSet((), 3, "W"))
        assert rank(v) == 3

    def test_errors(self):
        with pytest.raises(RankError):
            dual_set(VectorSet.of(["110", "110"]))
        with pytest.raises(InfeasibleError):
            dual_set(VectorSet.of(["10", "01"]))

    @given(st.integers(1, 7), st.data())
    @settings(max_examples=150)
    def test_complement_by_brute_force(self, n, data):
        m = data.draw(st.integers(0, n - 1))
        w = random_li_set(n, m, data.draw(st.integers(0, 2**32 - 1)), kind="W")
        v = dual_set(w)
        assert len(v) == n - m
        assert rank(v) == n - m
        for a, b in itertools.product(v, w):
            assert dot(a, b) == 0
        assert _span(v, n) == _orthogonal_complement(w, n)


class TestCandidateSet:
    def test_basic(self):
        t = CandidateSet.from_vectors(["01", "10", "01"])
        assert len(t) == 2 and t.n == 2
        assert bv("10") in t and bv("11") not in t
        assert {str(v) for v in t} == {"01", "10"}

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError):
            CandidateSet(np.array([[1, 0], [1, 0]]))

    def test_rejects_mixed_lengths(self):
        with pytest.raises(DimensionError):
            CandidateSet.from_vectors(["01", "101"])


class TestHashRecover:
    def test_example(self):
        t = CandidateSet.from_vectors(["00", "11"])
        assert hash_recover(t, [(bv("10"), 1)]) == bv("11")

    def test_no_checks(self):
        assert hash_recover(CandidateSet.from_vectors(["101"]), []) == bv("101")
        assert hash_recover(CandidateSet.from_vectors(["101", "111"]), []) is None

    def test_ambiguous_and_empty(self):
        t = CandidateSet.from_vectors(["00", "11"])
        assert hash_recover(t, [(bv("11"), 0)]) is None
        assert hash_recover(t, [(bv("11"), 1)]) is None

    def test_length_check(self):
        with pytest.raises(DimensionError):
            hash_recover(CandidateSet.from_vectors(["00"]), [(bv("1"), 0)])

    @given(st.integers(2, 10), st.data())
    def test_true_member_consistent(self, n, data):
        seed = data.draw(st.integers(0, 2**32 - 1))
        rng = np.random.default_rng(seed)
        k = data.draw(st.integers(1, min(2**n, 20)))
        ints = rng.choice(2**n, size=k, replace=False)
        t = CandidateSet.from_vectors([BitVector.from_int(int(x), n) for x in ints])
        x = BitVector.from_int(int(ints[0]), n)
        ws = [BitVector.random(n, rng) for _ in range(data.draw(st.integers(0, 2 * n)))]
        checks = [(w, dot(x, w)) for w in ws]
        got = hash_recover(t, checks)
        assert got is None or got == x

    def test_failure_rate_union_bound(self):
        rng = np.random.default_rng(3)
        n, k, m, trials = 10, 16, 8, 4000
        fails = 0
        for _ in range(trials):
            ints = rng.choice(2**n, size=k, replace=False)
            members = ((ints[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.uint8)
            w = rng.integers(0, 2, size=(m, n), dtype=np.uint8)
            p = parities(members[:1], w)[0]
            checks = [(BitVector(tuple(row)), int(b)) for row, b in zip(w, p)]
            got = hash_recover(CandidateSet(members), checks)
            fails += got is None or got.bits != tuple(members[0])
        bound = (k - 1) * 2.0**-m
        assert fails / trials <= bound + 3 * math.sqrt(bound / trials)


def test_parities_shape():
    members = np.array([[1, 0, 1], [0, 1, 1]], dtype=np.uint8)
    w = np.array([[1, 1, 0]], dtype=np.uint8)
    assert parities(members, w).tolist() == [[1], [1]]


def test_text_roundtrip():
    vs = VectorSet.of(["101", "011"], kind="V")
    assert VectorSet.from_text(vs.to_text(), kind="V") == vs
    assert vs.to_matrix().shape == (2, 3)
