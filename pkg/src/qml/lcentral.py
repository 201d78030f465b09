"""Central values L(1/2, chi_8p) by the approximate functional equation.

    L(1/2, chi_8p) = 2 sum_n chi_8p(n) n^(-1/2) V(n / sqrt p)

truncated at the smallest N whose closed-form tail bound is below the
requested tolerance, with an independent Hurwitz-zeta oracle for validation.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from qml import kernels
from qml.arith import is_prime, smallest_prime_factors, table_covering
from qml.errors import CacheError, CacheMismatchError, CapacityError, DomainError, MissingValuesError
from qml.special import LOG_GAMMA_QUARTER, V_SCALE, hurwitz_zeta

CACHE_MAGIC = "QMLCV1"
DEFAULT_MAX_TERMS = 10**7
ORACLE_MAX_P = 10**5


@dataclass(frozen=True)
class CentralValueRecord:
    p: int
    value: float
    truncation: int
    tail_bound: float

    def row(self) -> str:
        return f"{self.p},{self.value:.17g},{self.truncation},{self.tail_bound:.17g}"


# -- truncation -------------------------------------------------------------------


def log_tail_bound(n, p):
    """log of a bound on 2 sum_{m > n} m^(-1/2) V(m / sqrt p).

    V(t) <= u^(-3/4) e^(-u) / Gamma(1/4) with u = pi t^2 / 8, so the m-th term
    has u_m = c m^2, c = pi / (8p). Comparing the decreasing sum with its integral
    and using int_n^inf e^(-c x^2) dx <= e^(-c n^2) / (2 c n) gives
    n^(-3/2) u_n^(-3/4) e^(-u_n) / (Gamma(1/4) c).
    """
    n = np.asarray(n, dtype=float)
    c = V_SCALE / np.asarray(p, dtype=float)
    u = c * n * n
    return -1.5 * np.log(n) - 0.75 * np.log(u) - u - LOG_GAMMA_QUARTER - np.log(c)


def truncation_lengths(ps, eps: float) -> np.ndarray:
    """Smallest N >= 1 with tail bound <= eps, for each p (vectorized bisection)."""
    ps = np.asarray(ps, dtype=np.int64)
    log_eps = math.log(eps)
    c = V_SCALE / ps.astype(float)
    hi = np.ceil(np.sqrt((-log_eps + 50.0) / c)).astype(np.int64) + 1
    lo = np.zeros_like(hi)  # invariant: bound(lo) > eps (lo = 0 stands for "infinite")
    while True:
        active = hi - lo > 1
        if not np.any(active):
            break
        mid = (lo + hi) // 2
        ok = log_tail_bound(np.maximum(mid, 1), ps) <= log_eps
        hi = np.where(active & ok, mid, hi)
        lo = np.where(active & ~ok, mid, lo)
    return hi


def tail_bound(n: int, p: int) -> float:
    return float(np.exp(log_tail_bound(n, p)))


@lru_cache(maxsize=4)
def _spf(limit: int) -> np.ndarray:
    return smallest_prime_factors(limit)


def spf_table(n_max: int) -> np.ndarray:
    limit = 1 << max(12, math.ceil(math.log2(n_max + 1)))
    return _spf(limit)


def _check_eps(eps):
    if not 0 < eps <= 1e-2:
        raise DomainError(f"eps must lie in (0, 1e-2], got {eps}")


def _check_prime(p):
    if p < 3 or p % 2 == 0 or not is_prime(int(p)):
        raise DomainError(f"expected an odd prime, got {p}")


# -- single values ----------------------------------------------------------------------


def afe_central_value(
    p: int, eps: float = 1e-9, max_terms: int = DEFAULT_MAX_TERMS, truncation: int | None = None
) -> CentralValueRecord:
    """L(1/2, chi_8p) with a certified bound on the omitted tail.

    ``truncation`` overrides the automatic choice of N (used to test that
    extending the sum stays within the certified tail).
    """
    _check_prime(p)
    _check_eps(eps)
    n_max = int(truncation_lengths([p], eps)[0]) if truncation is None else int(truncation)
    if n_max > max_terms:
        raise CapacityError(f"p={p} needs {n_max} terms, above the ceiling {max_terms}")
    chi, _ = kernels.chi8p_fill(p, n_max, spf_table(n_max))
    value = kernels.afe_sum(p, n_max, chi)
    return CentralValueRecord(int(p), float(value), n_max, tail_bound(n_max, p))


def hurwitz_central_value(p: int) -> float:
    """L(1/2, chi_8p) = q^(-1/2) sum_{a mod q} chi(a) zeta(1/2, a/q), q = 8p."""
    _check_prime(p)
    if p > ORACLE_MAX_P:
        raise CapacityError(f"Hurwitz oracle is limited to p <= {ORACLE_MAX_P}, got {p}")
    q = 8 * p
    a = np.arange(1, q, 2, dtype=np.int64)
    a = a[a % p != 0]
    chi = kernels.python_kernels.jacobi_array(q, a)
    zeta = hurwitz_zeta(0.5, a / q)
    return math.fsum(chi * zeta) / math.sqrt(q)


def character_sum_mod(p: int) -> int:
    """sum_{a mod 8p} chi_8p(a); zero for a non-principal character."""
    q = 8 * p
    a = np.arange(1, q, 2, dtype=np.int64)
    return int(kernels.python_kernels.jacobi_array(q, a).sum())


# -- batches ---------------------------------------------------------------------------


def _chunk_values(ps, truncations):
    n_top = int(truncations.max()) if len(truncations) else 1
    return kernels.batch_afe(ps, truncations, spf_table(n_top))


def _split(n, parts):
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [(bounds[i], bounds[i + 1]) for i in range(parts) if bounds[i + 1] > bounds[i]]


def odd_primes_between(p_min: int, p_max: int) -> np.ndarray:
    table = table_covering(p_max)
    return table.odd_between(p_min - 1, p_max)


def batch_central_values(
    p_min: int,
    p_max: int,
    eps: float = 1e-8,
    workers: int = 1,
    primes=None,
    instrument: dict | None = None,
    max_terms: int = DEFAULT_MAX_TERMS,
) -> list[CentralValueRecord]:
    """Records for every odd prime in [p_min, p_max] (or the given ``primes``), increasing p.

    Work is split into contiguous chunks; each value depends only on its own
    p, and chunks are merged by index, so output is identical for any
    ``workers``. When ``instrument`` is a dict it receives per-prime Jacobi
    evaluation counts under ``"symbol_evals"``.
    """
    _check_eps(eps)
    if workers < 1:
        raise DomainError(f"workers must be >= 1, got {workers}")
    if primes is None:
        if not 2 < p_min <= p_max:
            raise DomainError(f"need 2 < p_min <= p_max, got [{p_min}, {p_max}]")
        ps = odd_primes_between(p_min, p_max)
    else:
        ps = np.asarray(primes, dtype=np.int64)
    if len(ps) == 0:
        return []
    ns = truncation_lengths(ps, eps)
    if ns.max() > max_terms:
        worst = int(ps[np.argmax(ns)])
        raise CapacityError(f"p={worst} needs {int(ns.max())} terms, above the ceiling {max_terms}")
    # many small chunks so the pool can balance the sqrt(p) growth of the work
    chunks = _split(len(ps), max(1, min(len(ps), 8 * workers)) if workers > 1 else 1)
    values = np.empty(len(ps))
    evals = np.empty(len(ps), dtype=np.int64)
    if workers == 1:
        for lo, hi in chunks:
            values[lo:hi], evals[lo:hi] = _chunk_values(ps[lo:hi], ns[lo:hi])
    else:
        pool_cls = ThreadPoolExecutor if kernels.BACKEND == "compiled" else ProcessPoolExecutor
        with pool_cls(max_workers=workers) as pool:
            futures = [pool.submit(_chunk_values, ps[lo:hi], ns[lo:hi]) for lo, hi in chunks]
            for (lo, hi), fut in zip(chunks, futures):
                values[lo:hi], evals[lo:hi] = fut.result()
    if instrument is not None:
        instrument["primes"] = ps
        instrument["truncations"] = ns
        instrument["symbol_evals"] = evals
    tails = np.exp(log_tail_bound(ns, ps))
    return [
        CentralValueRecord(int(p), float(v), int(n), float(t))
        for p, v, n, t in zip(ps.tolist(), values.tolist(), ns.tolist(), tails.tolist())
    ]


# -- value tables and the cache file ------------------------------------------------------


@dataclass
class LValueTable:
    """Central values as parallel arrays sorted by p."""

    p: np.ndarray
    value: np.ndarray
    truncation: np.ndarray
    tail_bound: np.ndarray
    eps: float

    @classmethod
    def from_records(cls, records, eps: float) -> "LValueTable":
        recs = sorted(records, key=lambda r: r.p)
        return cls(
            np.array([r.p for r in recs], dtype=np.int64),
            np.array([r.value for r in recs], dtype=float),
            np.array([r.truncation for r in recs], dtype=np.int64),
            np.array([r.tail_bound for r in recs], dtype=float),
            eps,
        )

    def __len__(self):
        return len(self.p)

    def records(self):
        return [
            CentralValueRecord(int(p), float(v), int(n), float(t))
            for p, v, n, t in zip(self.p, self.value, self.truncation, self.tail_bound)
        ]

    def select(self, primes) -> "LValueTable":
        """Rows for exactly these primes; raises MissingValuesError listing the gaps."""
        primes = np.asarray(primes, dtype=np.int64)
        idx = np.searchsorted(self.p, primes)
        idx_c = np.minimum(idx, max(len(self.p) - 1, 0))
        found = (idx < len(self.p)) & (self.p[idx_c] == primes) if len(self.p) else np.zeros(len(primes), bool)
        if not np.all(found):
            raise MissingValuesError(_gaps(primes[~found]))
        return LValueTable(self.p[idx], self.value[idx], self.truncation[idx], self.tail_bound[idx], self.eps)

    def odd_primes_in(self, lo: float, hi: float) -> "LValueTable":
        """Values for every odd prime q with lo < q <= hi (checked for coverage)."""
        return self.select(table_covering(hi).odd_between(lo, hi))


def _gaps(missing):
    """Collapse missing primes into (first, last) runs of consecutive primes."""
    missing = np.asarray(missing, dtype=np.int64)
    if len(missing) == 0:
        return []
    index = np.searchsorted(table_covering(int(missing.max())).primes, missing)
    breaks = np.flatnonzero(np.diff(index) != 1)
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [len(missing) - 1]])
    return [(int(missing[a]), int(missing[b])) for a, b in zip(starts, ends)]


class LValueCache:
    """Append-only CSV cache of central values at one tolerance.

    Format: a header line ``QMLCV1,eps=<eps>`` followed by rows
    ``p,value,truncation,tail_bound`` in increasing p.
    """

    def __init__(self, path, eps: float, records: dict[int, CentralValueRecord] | None = None):
        self.path = Path(path)
        self.eps = float(eps)
        self._records = dict(records or {})

    @classmethod
    def open(cls, path, eps: float) -> "LValueCache":
        """Open or create a cache for requests at tolerance ``eps``.

        A file written at a tolerance no coarser than ``eps`` is reused; a
        coarser one is refused with CacheMismatchError.
        """
        _check_eps(eps)
        path = Path(path)
        if not path.exists():
            return cls(path, eps)
        file_eps, records = read_cache(path)
        if file_eps > eps:
            raise CacheMismatchError(
                f"{path} holds values at eps={file_eps!r}, coarser than the requested eps={eps!r}"
            )
        return cls(path, file_eps, records)

    def __len__(self):
        return len(self._records)

    def __contains__(self, p):
        return int(p) in self._records

    def get(self, p):
        return self._records.get(int(p))

    def missing(self, primes) -> np.ndarray:
        primes = np.asarray(primes, dtype=np.int64)
        have = np.fromiter(self._records.keys(), dtype=np.int64, count=len(self._records))
        return primes[~np.isin(primes, have)]

    def add(self, records) -> int:
        """Store new records; appends when they all follow the cached range."""
        new = sorted((r for r in records if r.p not in self._records), key=lambda r: r.p)
        if not new:
            return 0
        top = max(self._records) if self._records else 0
        appendable = self.path.exists() and new[0].p > top
        for r in new:
            self._records[r.p] = r
        try:
            if appendable:
                with open(self.path, "a") as fh:
                    fh.write("".join(r.row() + "\n" for r in new))
            else:
                self._rewrite()
        except OSError as exc:
            raise CacheError(f"cannot write cache {self.path}: {exc}") from exc
        return len(new)

    def _rewrite(self):
        tmp = self.path.with_name(self.path.name + ".tmp")
        with open(tmp, "w") as fh:
            fh.write(f"{CACHE_MAGIC},eps={self.eps!r}\n")
            for p in sorted(self._records):
                fh.write(self._records[p].row() + "\n")
        os.replace(tmp, self.path)

    def table(self) -> LValueTable:
        return LValueTable.from_records(self._records.values(), self.eps)

    def ensure(self, p_min: int, p_max: int, workers: int = 1) -> int:
        """Compute and store whatever is missing for odd primes in [p_min, p_max]."""
        needed = self.missing(odd_primes_between(max(p_min, 3), p_max))
        if len(needed) == 0:
            return 0
        return self.add(batch_central_values(0, 0, self.eps, workers, primes=needed))


def read_cache(path):
    """Parse a cache file into (eps, {p: record}); raises CacheError naming bad lines."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise CacheError(f"cannot read cache {path}: {exc}") from exc
    if not lines or not lines[0].startswith(CACHE_MAGIC + ",eps="):
        raise CacheError(f"{path}:1: missing '{CACHE_MAGIC},eps=' header")
    try:
        eps = float(lines[0].split("=", 1)[1])
    except ValueError:
        raise CacheError(f"{path}:1: unreadable eps in header") from None
    records = {}
    prev = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            if len(parts) != 4:
                raise ValueError
            rec = CentralValueRecord(int(parts[0]), float(parts[1]), int(parts[2]), float(parts[3]))
        except ValueError:
            raise CacheError(f"{path}:{lineno}: corrupt row {line!r}") from None
        if rec.p <= prev:
            raise CacheError(f"{path}:{lineno}: rows out of order (p={rec.p} after {prev})")
        prev = rec.p
        records[rec.p] = rec
    return eps, records
