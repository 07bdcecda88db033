import math

import numpy as np
import pytest

from fracvar import kernels
from fracvar._kernels_py import left_product_integrate as py_kernel

needs_ext = pytest.mark.skipif("cython" not in kernels.BACKENDS, reason="compiled kernel not built")


def _data(rng, n, m, const=False):
    if const:
        P = np.broadcast_to(0.37, (n + 1, n))
    else:
        P = rng.uniform(0.05, 0.95, (n + 1, n))
    Y = rng.standard_normal((m, n + 1))
    return P, Y


def test_constant_data_closed_form():
    # int_0^1 (1 - tau)^(p - 1) / Gamma(p) dtau = 1 / Gamma(p + 1)
    n = 50
    for p in (0.2, 0.5, 0.9):
        P = np.full((1, n), p)
        out = py_kernel(P, np.ones((1, n + 1)), 1.0 / n, [n])
        assert out[0, 0] == pytest.approx(1.0 / math.gamma(p + 1.0), rel=1e-13)


def test_linear_data_exact():
    # linear data is reproduced exactly by the interpolant
    n, p = 40, 0.3
    t = np.linspace(0, 2, n + 1)
    out = py_kernel(np.full((1, n), p), t[None, :], 2.0 / n, [n])
    assert out[0, 0] == pytest.approx(2.0 ** (p + 1) / math.gamma(p + 2), rel=1e-13)


def test_row_zero_is_zero(rng):
    P, Y = _data(rng, 10, 2)
    out = py_kernel(P[:1], Y, 0.1, [0])
    assert np.all(out == 0.0)


@needs_ext
@pytest.mark.parametrize("const", [False, True])
def test_backends_agree(rng, const):
    n, m = 300, 3
    P, Y = _data(rng, n, m, const)
    rows = np.arange(n + 1)
    a = kernels.left_product_integrate(P, Y, 0.01, rows, backend="python")
    b = kernels.left_product_integrate(P, Y, 0.01, rows, backend="cython")
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


@needs_ext
def test_backends_agree_on_subset_of_rows(rng):
    n = 120
    P, Y = _data(rng, n, 1)
    rows = np.array([0, 5, 60, 119, 120])
    a = kernels.left_product_integrate(P[rows], Y, 0.02, rows, backend="python")
    b = kernels.left_product_integrate(P[rows], Y, 0.02, rows, backend="cython")
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


@needs_ext
def test_thread_cap_does_not_change_results(rng, monkeypatch):
    n = 200
    P, Y = _data(rng, n, 2)
    rows = np.arange(n + 1)
    monkeypatch.setenv("FRACVAR_THREADS", "1")
    a = kernels.left_product_integrate(P, Y, 0.01, rows, backend="cython")
    monkeypatch.setenv("FRACVAR_THREADS", "0")
    b = kernels.left_product_integrate(P, Y, 0.01, rows, backend="cython")
    assert np.array_equal(a, b)


def test_thread_count_parsing(monkeypatch):
    monkeypatch.setenv("FRACVAR_THREADS", "junk")
    assert kernels.thread_count() == 0
    monkeypatch.setenv("FRACVAR_THREADS", "3")
    assert kernels.thread_count() == 3


@pytest.mark.parametrize("backend", sorted(kernels.BACKENDS))
def test_result_independent_of_batching(rng, backend):
    n = 150
    P, Y = _data(rng, n, 7)
    rows = np.arange(n + 1)
    together = kernels.left_product_integrate(P, Y, 0.01, rows, backend=backend)
    for i in range(7):
        alone = kernels.left_product_integrate(P, Y[i:i + 1], 0.01, rows, backend=backend)
        assert np.array_equal(alone[0], together[i])
