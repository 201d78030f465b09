import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qml import kernels
from qml.arith import jacobi, sieve_primes
from qml.lcentral import spf_table, truncation_lengths
from qml.special import V_SCALE, v_closed_form

BACKENDS = kernels.available_backends()
PRIMES = [int(p) for p in sieve_primes(3000).primes[1:]]


def test_backend_reported():
    assert kernels.BACKEND in BACKENDS
    assert "python" in BACKENDS


@pytest.mark.parametrize("name", sorted(BACKENDS))
@pytest.mark.parametrize("u", [1e-12, 1e-4, 0.3, 1.2, 1.3, 5.0, 40.0, 400.0])
def test_v_of_u_matches_closed_form(name, u):
    t = (u / V_SCALE) ** 0.5
    ref = v_closed_form(t)
    assert abs(BACKENDS[name].v_of_u(u) - ref) <= 1e-13 + 1e-12 * ref


@pytest.mark.parametrize("name", sorted(BACKENDS))
@given(a=st.integers(-10**6, 10**6), n=st.integers(0, 10**6).map(lambda m: 2 * m + 1))
def test_jacobi_backends(name, a, n):
    assert BACKENDS[name].jacobi(a, n) == jacobi(a, n)


def test_jacobi_array_matches_scalar():
    rng = np.random.default_rng(7)
    a = rng.integers(-10**9, 10**9, 2000)
    n = 2 * rng.integers(0, 10**6, 2000) + 1
    got = kernels.python_kernels.jacobi_array(a, n)
    assert got.tolist() == [jacobi(int(x), int(y)) for x, y in zip(a, n)]


@pytest.mark.parametrize("p", [3, 5, 7, 101, 2999])
def test_chi_fill_backends_agree(p):
    spf = spf_table(4000)
    tables = [BACKENDS[name].chi8p_fill(p, 4000, spf) for name in sorted(BACKENDS)]
    chi0, evals0 = tables[0]
    for chi, evals in tables[1:]:
        assert np.array_equal(np.asarray(chi), np.asarray(chi0))
        assert evals == evals0
    ref = [0] + [jacobi(8 * p, n) if n % 2 else 0 for n in range(1, 4001)]
    assert np.asarray(chi0).tolist() == ref


def test_batch_afe_backends_agree():
    ps = np.array(PRIMES[:200], dtype=np.int64)
    ns = truncation_lengths(ps, 1e-8)
    spf = spf_table(int(ns.max()))
    results = [BACKENDS[name].batch_afe(ps, ns, spf) for name in sorted(BACKENDS)]
    for values, evals in results[1:]:
        assert np.max(np.abs(np.asarray(values) - np.asarray(results[0][0]))) <= 1e-12
        assert np.array_equal(np.asarray(evals), np.asarray(results[0][1]))


def test_chi_matrix():
    ps = np.array(PRIMES[:20])
    ns = np.arange(1, 60)
    mat = kernels.chi8p_matrix(ps, ns)
    assert mat.tolist() == [[jacobi(8 * p, n) if n % 2 else 0 for n in ns.tolist()] for p in ps.tolist()]


def test_pure_python_switch():
    env = dict(os.environ, QML_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from qml import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
