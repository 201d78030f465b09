import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qml import lcentral as lc
from qml.arith import jacobi, sieve_primes
from qml.errors import CacheError, CacheMismatchError, CapacityError, DomainError, MissingValuesError

PRIMES = [int(p) for p in sieve_primes(20000).primes[1:]]


def mpmath_central_value(p):
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 30
    q = 8 * p
    total = mpmath.mpf(0)
    for a in range(1, q, 2):
        if a % p:
            total += jacobi(q, a) * mpmath.zeta(mpmath.mpf(1) / 2, mpmath.mpf(a) / q)
    return float(total / mpmath.sqrt(q))


@pytest.mark.parametrize("p", [3, 5, 7, 11])
def test_afe_matches_mpmath(p):
    assert abs(lc.afe_central_value(p, eps=1e-10).value - mpmath_central_value(p)) <= 1e-8


@pytest.mark.parametrize("p", [3, 5, 13, 97, 1009])
def test_hurwitz_oracle_matches_afe(p):
    assert abs(lc.hurwitz_central_value(p) - lc.afe_central_value(p, eps=1e-10).value) <= 1e-8


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(PRIMES))
def test_doubling_truncation_within_tail(p):
    rec = lc.afe_central_value(p, eps=1e-8)
    longer = lc.afe_central_value(p, eps=1e-8, truncation=2 * rec.truncation)
    assert rec.tail_bound <= 1e-8
    assert abs(longer.value - rec.value) <= rec.tail_bound + 1e-12


def test_tail_bound_dominates_actual_tail():
    p = 1009
    exact = lc.afe_central_value(p, eps=1e-12).value
    for n in (20, 40, 60, 80):
        rec = lc.afe_central_value(p, eps=1e-8, truncation=n)
        assert abs(rec.value - exact) <= rec.tail_bound


def test_truncation_is_minimal():
    ps = np.array(PRIMES[:300])
    ns = lc.truncation_lengths(ps, 1e-8)
    assert np.all(lc.log_tail_bound(ns, ps) <= math.log(1e-8))
    assert np.all((ns == 1) | (lc.log_tail_bound(ns - 1, ps) > math.log(1e-8)))


def test_truncation_grows_like_sqrt_p():
    n = lc.truncation_lengths([10**6 + 3], 1e-8)[0]
    assert 3 * math.sqrt(1e6) < n < 10 * math.sqrt(1e6)


def test_character_sum_vanishes():
    assert lc.character_sum_mod(3) == 0
    assert all(lc.character_sum_mod(p) == 0 for p in PRIMES[:30])


class TestErrors:
    @pytest.mark.parametrize("p", [2, 9, 1, -7, 15])
    def test_not_odd_prime(self, p):
        with pytest.raises(DomainError):
            lc.afe_central_value(p)

    @pytest.mark.parametrize("eps", [0.0, -1e-8, 0.5])
    def test_bad_eps(self, eps):
        with pytest.raises(DomainError):
            lc.afe_central_value(3, eps=eps)

    def test_term_ceiling(self):
        with pytest.raises(CapacityError):
            lc.afe_central_value(1_000_003, max_terms=100)

    def test_oracle_capacity(self):
        with pytest.raises(CapacityError):
            lc.hurwitz_central_value(100_003)

    def test_batch_range(self):
        with pytest.raises(DomainError):
            lc.batch_central_values(10, 5)
        with pytest.raises(DomainError):
            lc.batch_central_values(3, 10, workers=0)


class TestBatch:
    def test_singleton(self):
        recs = lc.batch_central_values(3, 3)
        assert [r.p for r in recs] == [3]
        assert recs[0].value == lc.afe_central_value(3, eps=1e-8).value

    def test_empty_range(self):
        assert lc.batch_central_values(24, 28) == []

    def test_matches_single(self):
        recs = lc.batch_central_values(3, 2000)
        assert [r.p for r in recs] == [p for p in PRIMES if p <= 2000]
        for r in recs[::37]:
            assert r.value == pytest.approx(lc.afe_central_value(r.p, eps=1e-8).value, abs=1e-13)

    def test_workers_identical(self):
        one = lc.batch_central_values(3, 30000, workers=1)
        eight = lc.batch_central_values(3, 30000, workers=8)
        assert [r.row() for r in one] == [r.row() for r in eight]

    def test_instrumentation(self):
        info = {}
        recs = lc.batch_central_values(3, 5000, instrument=info)
        assert len(info["symbol_evals"]) == len(recs)
        counts = np.searchsorted(sieve_primes(int(info["truncations"].max())).primes, info["truncations"], side="right")
        assert np.all(info["symbol_evals"] <= counts)

    def test_nonnegative_small_range(self):
        recs = lc.batch_central_values(3, 10**4)
        assert min(r.value for r in recs) >= -1e-6


class TestCache:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "cv.csv"
        cache = lc.LValueCache.open(path, 1e-8)
        recs = lc.batch_central_values(3, 600)[:100]
        assert len(recs) == 100
        assert cache.add(recs) == 100
        eps, back = lc.read_cache(path)
        assert eps == 1e-8
        assert [back[r.p] for r in recs] == recs

    def test_append_then_insert(self, tmp_path):
        path = tmp_path / "cv.csv"
        cache = lc.LValueCache.open(path, 1e-8)
        recs = lc.batch_central_values(3, 200)
        cache.add(recs[10:20])
        cache.add(recs[20:])
        cache.add(recs[:10])
        _, back = lc.read_cache(path)
        assert sorted(back) == [r.p for r in recs]
        assert cache.add(recs) == 0

    def test_eps_policy(self, tmp_path):
        path = tmp_path / "cv.csv"
        lc.LValueCache.open(path, 1e-8).add(lc.batch_central_values(3, 50, eps=1e-8))
        assert lc.LValueCache.open(path, 1e-6).eps == 1e-8
        with pytest.raises(CacheMismatchError):
            lc.LValueCache.open(path, 1e-10)

    def test_corrupt_line(self, tmp_path):
        path = tmp_path / "cv.csv"
        lc.LValueCache.open(path, 1e-8).add(lc.batch_central_values(3, 50))
        lines = path.read_text().splitlines()
        lines[4] = "13,abc,1,2"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CacheError, match=r"cv\.csv:5:"):
            lc.read_cache(path)

    def test_out_of_order(self, tmp_path):
        path = tmp_path / "cv.csv"
        path.write_text("QMLCV1,eps=1e-08\n5,1.0,3,1e-9\n3,1.0,3,1e-9\n")
        with pytest.raises(CacheError, match=":3:"):
            lc.read_cache(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "cv.csv"
        path.write_text("p,value\n")
        with pytest.raises(CacheError, match=":1:"):
            lc.read_cache(path)

    def test_ensure(self, tmp_path):
        cache = lc.LValueCache.open(tmp_path / "cv.csv", 1e-8)
        assert cache.ensure(3, 500) == len([p for p in PRIMES if p <= 500])
        assert cache.ensure(3, 500) == 0


class TestTable:
    def test_select_missing(self):
        table = lc.LValueTable.from_records(lc.batch_central_values(3, 100), 1e-8)
        with pytest.raises(MissingValuesError) as info:
            table.select([3, 101, 103, 107, 113])
        assert info.value.gaps == [(101, 107), (113, 113)]
        assert "101" in str(info.value)

    def test_odd_primes_in(self):
        table = lc.LValueTable.from_records(lc.batch_central_values(3, 100), 1e-8)
        assert table.odd_primes_in(10, 30).p.tolist() == [11, 13, 17, 19, 23, 29]
        assert [r.p for r in table.records()] == table.p.tolist()
