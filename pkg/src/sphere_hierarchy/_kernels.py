"""Numeric inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin.  The numba path is used unless the
environment variable ``SPHERE_HIERARCHY_NUMBA`` is set to ``0`` (or numba
fails to import).  Both paths are importable directly as ``numba_impl`` and
``numpy_impl`` so tests and benchmarks can compare them.
"""
import os
import types

import numpy as np

try:
    import numba
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    _HAVE_NUMBA = False


def _flag_enabled():
    return os.environ.get("SPHERE_HIERARCHY_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


USE_NUMBA = _HAVE_NUMBA and _flag_enabled()


def binomial_table(size):
    """Pascal triangle as int64, ``T[a, b] = C(a, b)`` for ``a, b < size``."""
    table = np.zeros((size, size), dtype=np.int64)
    for a in range(size):
        table[a, 0] = 1
        for b in range(1, a + 1):
            table[a, b] = table[a - 1, b - 1] + table[a - 1, b]
    return table


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _np_monomial_ranks(exps, binom):
    # rank within the degree-k block, lexicographic with larger x1 exponent first
    exps = np.asarray(exps, dtype=np.int64)
    m, n = exps.shape
    ranks = np.zeros(m, dtype=np.int64)
    remaining = exps.sum(axis=1)
    for i in range(n - 1):
        a = exps[:, i]
        tail = n - i - 2
        # monomials sharing the prefix with a larger exponent at position i:
        # sum_{e=a+1}^{R} C(R - e + tail, tail) = C(R - a - 1 + tail + 1, tail + 1)
        top = remaining - a - 1 + tail + 1
        valid = remaining > a
        ranks += np.where(valid, binom[np.maximum(top, 0), tail + 1], 0)
        remaining = remaining - a
    return ranks


def _np_pair_targets(basis_exps, binom):
    basis_exps = np.asarray(basis_exps, dtype=np.int64)
    size = basis_exps.shape[0]
    ii, jj = np.triu_indices(size)
    sums = basis_exps[ii] + basis_exps[jj]
    return ii.astype(np.int64), jj.astype(np.int64), _np_monomial_ranks(sums, binom)


def _np_evaluate_many(exps, coeffs, points):
    exps = np.asarray(exps, dtype=np.int64)
    points = np.asarray(points, dtype=np.float64)
    if exps.shape[0] == 0:
        return np.zeros(points.shape[0])
    # (points, terms) table of monomial values
    mono = np.prod(points[:, None, :] ** exps[None, :, :], axis=2)
    return mono @ np.asarray(coeffs, dtype=np.float64)


def _np_dd_margins(a):
    a = np.asarray(a, dtype=np.float64)
    diag = np.diag(a)
    off = np.abs(a).sum(axis=1) - np.abs(diag)
    return diag - off


numpy_impl = types.SimpleNamespace(
    monomial_ranks=_np_monomial_ranks,
    pair_targets=_np_pair_targets,
    evaluate_many=_np_evaluate_many,
    dd_margins=_np_dd_margins,
)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _nb_rank_one(row, binom):
        n = row.shape[0]
        remaining = 0
        for i in range(n):
            remaining += row[i]
        rank = 0
        for i in range(n - 1):
            a = row[i]
            tail = n - i - 2
            if remaining > a:
                rank += binom[remaining - a + tail, tail + 1]
            remaining -= a
        return rank

    @numba.njit(cache=True)
    def _nb_monomial_ranks(exps, binom):
        m = exps.shape[0]
        out = np.empty(m, dtype=np.int64)
        for k in range(m):
            out[k] = _nb_rank_one(exps[k], binom)
        return out

    @numba.njit(cache=True)
    def _nb_pair_targets(basis_exps, binom):
        size, n = basis_exps.shape
        count = size * (size + 1) // 2
        ii = np.empty(count, dtype=np.int64)
        jj = np.empty(count, dtype=np.int64)
        tt = np.empty(count, dtype=np.int64)
        buf = np.empty(n, dtype=np.int64)
        k = 0
        for i in range(size):
            for j in range(i, size):
                for v in range(n):
                    buf[v] = basis_exps[i, v] + basis_exps[j, v]
                ii[k] = i
                jj[k] = j
                tt[k] = _nb_rank_one(buf, binom)
                k += 1
        return ii, jj, tt

    @numba.njit(cache=True)
    def _nb_evaluate_many(exps, coeffs, points):
        npts, n = points.shape
        nterms = exps.shape[0]
        out = np.zeros(npts)
        for p in range(npts):
            acc = 0.0
            for t in range(nterms):
                term = coeffs[t]
                for v in range(n):
                    e = exps[t, v]
                    if e:
                        term *= points[p, v] ** e
                acc += term
            out[p] = acc
        return out

    @numba.njit(cache=True)
    def _nb_dd_margins(a):
        size = a.shape[0]
        out = np.empty(size)
        for i in range(size):
            s = 0.0
            for j in range(size):
                if j != i:
                    s += abs(a[i, j])
            out[i] = a[i, i] - s
        return out

    def _wrap_ranks(exps, binom):
        return _nb_monomial_ranks(np.ascontiguousarray(exps, dtype=np.int64), binom)

    def _wrap_pairs(basis_exps, binom):
        return _nb_pair_targets(np.ascontiguousarray(basis_exps, dtype=np.int64), binom)

    def _wrap_eval(exps, coeffs, points):
        return _nb_evaluate_many(
            np.ascontiguousarray(exps, dtype=np.int64).reshape(-1, np.shape(points)[1]),
            np.ascontiguousarray(coeffs, dtype=np.float64),
            np.ascontiguousarray(points, dtype=np.float64),
        )

    def _wrap_dd(a):
        return _nb_dd_margins(np.ascontiguousarray(a, dtype=np.float64))

    numba_impl = types.SimpleNamespace(
        monomial_ranks=_wrap_ranks,
        pair_targets=_wrap_pairs,
        evaluate_many=_wrap_eval,
        dd_margins=_wrap_dd,
    )
else:  # pragma: no cover
    numba_impl = numpy_impl


active = numba_impl if USE_NUMBA else numpy_impl

monomial_ranks = active.monomial_ranks
pair_targets = active.pair_targets
evaluate_many = active.evaluate_many
dd_margins = active.dd_margins
