"""The numba kernels and their numpy twins must agree."""
import numpy as np
import pytest

from sphere_hierarchy import _kernels
from sphere_hierarchy.polynomial import monomial_basis

numba_impl = _kernels.numba_impl
numpy_impl = _kernels.numpy_impl


@pytest.mark.parametrize("n,deg", [(1, 3), (2, 4), (3, 3), (4, 2), (5, 4)])
def test_monomial_ranks(n, deg):
    basis = np.array(monomial_basis(n, deg), dtype=np.int64)
    binom = _kernels.binomial_table(n + deg + 2)
    want = np.arange(len(basis))
    assert np.array_equal(numpy_impl.monomial_ranks(basis, binom), want)
    assert np.array_equal(numba_impl.monomial_ranks(basis, binom), want)


@pytest.mark.parametrize("n,deg", [(1, 2), (3, 1), (3, 2), (4, 3)])
def test_pair_targets(n, deg):
    basis = np.array(monomial_basis(n, deg), dtype=np.int64)
    binom = _kernels.binomial_table(n + 2 * deg + 2)
    a = numpy_impl.pair_targets(basis, binom)
    b = numba_impl.pair_targets(basis, binom)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    targets = monomial_basis(n, 2 * deg)
    for i, j, t in zip(*a):
        assert tuple(basis[i] + basis[j]) == targets[t]


def test_evaluate_many():
    rng = np.random.default_rng(1)
    exps = rng.integers(0, 4, size=(7, 3))
    coeffs = rng.normal(size=7)
    pts = rng.normal(size=(50, 3))
    direct = np.array([sum(c * np.prod(p ** e) for e, c in zip(exps, coeffs)) for p in pts])
    np.testing.assert_allclose(numpy_impl.evaluate_many(exps, coeffs, pts), direct, rtol=1e-12)
    np.testing.assert_allclose(numba_impl.evaluate_many(exps, coeffs, pts), direct, rtol=1e-12)


def test_evaluate_no_terms():
    pts = np.ones((4, 2))
    empty = np.zeros((0, 2), dtype=np.int64)
    assert np.all(numpy_impl.evaluate_many(empty, np.zeros(0), pts) == 0)
    assert np.all(numba_impl.evaluate_many(empty, np.zeros(0), pts) == 0)


def test_dd_margins():
    A = np.array([[2.0, 1, -1], [1, 2, 1], [-1, 1, 1.5]])
    want = np.array([0.0, 0.0, -0.5])
    np.testing.assert_allclose(numpy_impl.dd_margins(A), want)
    np.testing.assert_allclose(numba_impl.dd_margins(A), want)


def test_flag_selects_path(monkeypatch):
    monkeypatch.setenv("SPHERE_HIERARCHY_NUMBA", "0")
    assert not _kernels._flag_enabled()
    monkeypatch.setenv("SPHERE_HIERARCHY_NUMBA", "1")
    assert _kernels._flag_enabled()
