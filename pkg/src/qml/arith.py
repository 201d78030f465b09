"""Exact integer arithmetic: prime sieving, Kronecker symbols, factor statistics.

Everything here works on Python integers or int64 numpy arrays. The prime
table is immutable once built and may be shared freely between workers.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from qml.errors import CacheError, CapacityError, DomainError

DEFAULT_SEGMENT = 1 << 18
# bytes; primes are stored as int64 plus their float64 logarithms
DEFAULT_MEMORY_BUDGET = 2 * 1024**3
PRIME_TABLE_MAGIC = b"QMLPT1"

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


@dataclass(frozen=True)
class PrimeTable:
    """All primes up to ``limit`` with cached natural logarithms."""

    limit: int
    primes: np.ndarray = field(repr=False)
    logs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.primes.setflags(write=False)
        self.logs.setflags(write=False)

    def __len__(self):
        return len(self.primes)

    def upto(self, x: float) -> np.ndarray:
        """Primes <= x as a read-only view."""
        return self.primes[: np.searchsorted(self.primes, x, side="right")]

    def between(self, lo: float, hi: float) -> np.ndarray:
        """Primes q with lo < q <= hi."""
        i = np.searchsorted(self.primes, lo, side="right")
        j = np.searchsorted(self.primes, hi, side="right")
        return self.primes[i:j]

    def odd_between(self, lo: float, hi: float) -> np.ndarray:
        ps = self.between(lo, hi)
        return ps[ps != 2]

    def save(self, path) -> None:
        """Write the binary cache: magic, LE u64 limit, LE u64 count, u32 gaps."""
        deltas = np.diff(self.primes, prepend=0).astype("<u4")
        payload = PRIME_TABLE_MAGIC + struct.pack("<QQ", self.limit, len(self.primes))
        try:
            _atomic_write_bytes(Path(path), payload + deltas.tobytes())
        except OSError as exc:
            raise CacheError(f"cannot write prime table {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "PrimeTable":
        try:
            raw = Path(path).read_bytes()
        except OSError as exc:
            raise CacheError(f"cannot read prime table {path}: {exc}") from exc
        head = len(PRIME_TABLE_MAGIC)
        if raw[:head] != PRIME_TABLE_MAGIC or len(raw) < head + 16:
            raise CacheError(f"{path}: not a prime table (bad magic)")
        limit, count = struct.unpack_from("<QQ", raw, head)
        body = raw[head + 16 :]
        if len(body) != 4 * count:
            raise CacheError(f"{path}: expected {count} gaps, found {len(body) // 4}")
        primes = np.cumsum(np.frombuffer(body, dtype="<u4").astype(np.int64))
        return cls(limit, primes, np.log(primes.astype(np.float64)))


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def _small_sieve(limit: int) -> np.ndarray:
    if limit < 2:
        return np.zeros(0, dtype=np.int64)
    flags = np.ones(limit + 1, dtype=bool)
    flags[:2] = False
    flags[4::2] = False
    for p in range(3, math.isqrt(limit) + 1, 2):
        if flags[p]:
            flags[p * p :: 2 * p] = False
    return np.flatnonzero(flags).astype(np.int64)


def sieve_primes(
    limit: int,
    segment: int = DEFAULT_SEGMENT,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> PrimeTable:
    """Segmented sieve of Eratosthenes over odd numbers.

    Args:
        limit: Inclusive upper bound.
        segment: Number of odd candidates examined per segment.
        memory_budget: Upper bound in bytes for the finished table.

    Raises:
        CapacityError: if the estimated table size exceeds ``memory_budget``.
    """
    limit = int(limit)
    if limit < 0:
        raise DomainError(f"limit must be >= 0, got {limit}")
    estimate = 16 * int(1.26 * limit / max(math.log(max(limit, 3)), 1.0) + 16)
    if estimate > memory_budget:
        raise CapacityError(
            f"prime table up to {limit} needs ~{estimate} bytes, "
            f"over the memory budget of {memory_budget} bytes"
        )
    if limit < 2:
        empty = np.zeros(0, dtype=np.int64)
        return PrimeTable(limit, empty, np.zeros(0))

    base = _small_sieve(math.isqrt(limit))[1:]  # odd base primes
    chunks = [np.array([2], dtype=np.int64)]
    top = limit if limit % 2 else limit - 1
    lo = 3
    while lo <= top:
        # odd candidates lo, lo+2, ..., end
        end = min(lo + 2 * (segment - 1), top)
        mask = np.ones((end - lo) // 2 + 1, dtype=bool)
        for p in base:
            p = int(p)
            if p * p > end:
                break
            start = max(p * p, ((lo + p - 1) // p) * p)
            if start % 2 == 0:
                start += p
            mask[(start - lo) // 2 :: p] = False
        chunks.append(lo + 2 * np.flatnonzero(mask).astype(np.int64))
        lo = end + 2
    primes = np.concatenate(chunks)
    return PrimeTable(limit, primes, np.log(primes.astype(np.float64)))


@lru_cache(maxsize=4)
def shared_table(limit: int) -> PrimeTable:
    """Process-wide table reused by callers that only need "enough" primes."""
    return sieve_primes(limit)


def table_covering(x: float) -> PrimeTable:
    """A cached prime table with limit >= x (rounded up to a power of two)."""
    limit = 1 << max(10, math.ceil(math.log2(max(x, 2))))
    return shared_table(limit)


def smallest_prime_factors(limit: int) -> np.ndarray:
    """spf[n] = least prime factor of n for 2 <= n <= limit (spf[0] = spf[1] = 0)."""
    spf = np.zeros(limit + 1, dtype=np.int32)
    if limit >= 2:
        spf[2::2] = 2
        for p in range(3, limit + 1, 2):
            if spf[p] == 0:
                spf[p] = p
                if p * p <= limit:
                    multiples = spf[p * p :: 2 * p]
                    multiples[multiples == 0] = p
    return spf


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for every n < 3.3e24."""
    if n < 2:
        return False
    for b in _MR_BASES:
        if n % b == 0:
            return n == b
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for b in _MR_BASES:
        x = pow(b, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def jacobi(a: int, n: int) -> int:
    """Jacobi symbol (a|n) for odd n > 0."""
    if n <= 0 or n % 2 == 0:
        raise DomainError(f"Jacobi symbol needs odd positive n, got {n}")
    a %= n
    sign = 1
    while a:
        while a % 2 == 0:
            a //= 2
            if n % 8 in (3, 5):
                sign = -sign
        a, n = n, a
        if a % 4 == 3 and n % 4 == 3:
            sign = -sign
        a %= n
    return sign if n == 1 else 0


def kronecker(a: int, n: int) -> int:
    """Kronecker symbol (a|n) for all integers with (a, n) != (0, 0)."""
    a, n = int(a), int(n)
    if a == 0 and n == 0:
        raise DomainError("kronecker(0, 0) is undefined")
    if n == 0:
        return 1 if abs(a) == 1 else 0
    sign = 1
    if n < 0:
        n = -n
        if a < 0:
            sign = -1
    v = (n & -n).bit_length() - 1
    if v:
        if a % 2 == 0:
            return 0
        n >>= v
        if v % 2 == 1 and a % 8 in (3, 5):
            sign = -sign
    return sign * jacobi(a, n)


def chi8p(p: int, n: int) -> int:
    """The quadratic character chi_{8p}(n) = (8p|n)."""
    if p % 2 == 0 or not is_prime(p):
        raise DomainError(f"chi8p needs an odd prime, got p={p}")
    if n < 1:
        raise DomainError(f"chi8p is evaluated on n >= 1, got {n}")
    if n % 2 == 0:
        return 0
    return jacobi(8 * p, n)


@dataclass(frozen=True)
class FactorStats:
    n: int
    factorization: tuple[tuple[int, int], ...]
    big_omega: int  # counted with multiplicity
    w: int  # product of exponent factorials
    ell1: int  # squarefree part
    ell2: int


def factor_stats(n: int) -> FactorStats:
    """Factor n by trial division and derive Omega, w and the split n = ell1*ell2^2."""
    n = int(n)
    if n < 1:
        raise DomainError(f"factor_stats needs n >= 1, got {n}")
    factors = []
    m = n
    for q in table_covering(math.isqrt(n) + 1).primes:
        q = int(q)
        if q * q > m:
            break
        if m % q == 0:
            e = 0
            while m % q == 0:
                m //= q
                e += 1
            factors.append((q, e))
    if m > 1:
        factors.append((m, 1))
    big_omega = sum(e for _, e in factors)
    w = math.prod(math.factorial(e) for _, e in factors)
    ell1 = math.prod(q for q, e in factors if e % 2)
    ell2 = math.prod(q ** (e // 2) for q, e in factors)
    return FactorStats(n, tuple(factors), big_omega, w, ell1, ell2)


def squarefree_split(n: int) -> tuple[int, int]:
    st = factor_stats(n)
    return st.ell1, st.ell2


def prime_sums(x: float, table: PrimeTable | None = None) -> tuple[float, float]:
    """Chebyshev theta(x) and the sum of 1/p over p <= x, exactly rounded."""
    if x < 2:
        raise DomainError(f"prime_sums needs x >= 2, got {x}")
    table = table if table is not None and table.limit >= x else table_covering(x)
    k = np.searchsorted(table.primes, x, side="right")
    theta = math.fsum(table.logs[:k])
    recip = math.fsum(1.0 / table.primes[:k].astype(np.float64))
    return theta, recip
