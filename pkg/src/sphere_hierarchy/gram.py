"""Coefficient matching between a symmetric Gram matrix and a form.

For the degree-``e`` monomial vector ``z(x)``, ``z(x)^T Q z(x)`` is a form of
degree ``2e`` whose coefficient on each monomial is a sparse linear function
of the upper-triangular entries of ``Q``.  :class:`GramSystem` stores that map.
"""
from dataclasses import dataclass
from fractions import Fraction
from math import factorial

import numpy as np

from . import _kernels
from .polynomial import DimensionError, Polynomial, _check_caps, monomial_basis


@dataclass(frozen=True)
class GramRow:
    target: tuple
    entries: tuple  # of (i, j, multiplicity) with i <= j


@dataclass(frozen=True)
class GramSystem:
    n: int
    half_degree: int
    basis: tuple
    rows: tuple

    @property
    def size(self):
        return len(self.basis)

    def upper_pairs(self):
        """(i, j) pairs, i <= j, in row-major upper-triangular order."""
        N = self.size
        return [(i, j) for i in range(N) for j in range(i, N)]

    def row_index(self):
        return {row.target: k for k, row in enumerate(self.rows)}


def gram_system(n, half_degree):
    _check_caps(n, 2 * half_degree)
    basis = monomial_basis(n, half_degree)
    targets = monomial_basis(n, 2 * half_degree)
    exps = np.array(basis, dtype=np.int64).reshape(len(basis), n)
    binom = _kernels.binomial_table(n + 2 * half_degree + 2)
    ii, jj, tt = _kernels.pair_targets(exps, binom)

    order = np.lexsort((jj, ii, tt))
    buckets = {}
    for k in order:
        t, i, j = int(tt[k]), int(ii[k]), int(jj[k])
        buckets.setdefault(t, []).append((i, j, 1 if i == j else 2))
    rows = tuple(GramRow(targets[t], tuple(buckets[t])) for t in sorted(buckets))
    return GramSystem(n, half_degree, tuple(basis), rows)


def _check_symmetric(Q, size, tol=1e-12):
    Q = np.asarray(Q, dtype=np.float64)
    if Q.shape != (size, size):
        raise DimensionError(f"Gram matrix has shape {Q.shape}, expected ({size}, {size})")
    scale = max(1.0, float(np.max(np.abs(Q)))) if Q.size else 1.0
    if Q.size and np.max(np.abs(Q - Q.T)) > tol * scale:
        raise ValueError("Gram matrix is not symmetric")
    return Q


def reconstruct(system, Q):
    """The form ``z(x)^T Q z(x)``, coefficients taken from float entries exactly."""
    Q = _check_symmetric(Q, system.size)
    terms = {}
    for row in system.rows:
        c = Fraction(0)
        for i, j, mult in row.entries:
            c += mult * Fraction(float(Q[i, j]))
        terms[row.target] = c
    return Polynomial(system.n, terms)


def reconstruct_coefficients(system, Q):
    """Float coefficient vector aligned with ``system.rows``."""
    Q = _check_symmetric(Q, system.size)
    return np.array([sum(mult * Q[i, j] for i, j, mult in row.entries) for row in system.rows])


def target_vector(system, p):
    """Coefficients of ``p`` on the rows of ``system``, as exact fractions.

    Raises if ``p`` has a monomial outside the degree-``2e`` block.
    """
    index = system.row_index()
    out = [Fraction(0)] * len(system.rows)
    for mono, c in p.items():
        k = index.get(mono)
        if k is None:
            raise DimensionError(f"monomial {mono} is not of degree {2 * system.half_degree}")
        out[k] = c
    return out


def monomial_vector(system, points):
    """Rows ``z(x)`` for each point."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    exps = np.array(system.basis, dtype=np.int64)
    return np.prod(points[:, None, :] ** exps[None, :, :], axis=2)


def sphere_gram_diagonal(system):
    """Diagonal Gram of ``(x1^2+...+xn^2)^e`` over the system basis.

    The entry for ``x^a`` is the multinomial coefficient ``e! / prod(a_i!)``;
    these are exactly the coefficients of ``x^(2a)`` in the sphere power.
    """
    e = system.half_degree
    out = []
    for mono in system.basis:
        v = factorial(e)
        for a in mono:
            v //= factorial(a)
        out.append(float(v))
    return np.array(out)
