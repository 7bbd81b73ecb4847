"""Lower bounds for a form on the unit sphere from the DSOS/SDSOS/SOS levels.

Level ``r`` of cone ``K`` is the conic program::

    maximize    gamma
    subject to  (p - gamma * s^d) * s^r == z^T Q z,   Q in K

with ``s = x1^2 + ... + xn^2``, ``deg p = 2d`` and ``z`` the degree-``d+r``
monomial vector.  Its optimum is a lower bound on ``min p`` over the sphere.
"""
import enum
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from . import conic_ir
from .backends import get_backend
from .cones import (Certificate, ConeKind, SddBlock, add_gram_variables, blocks_from_solution,
                    dd_slack_from_solution, ENCODERS, verify_certificate)
from .gram import gram_system, sphere_gram_diagonal
from .polynomial import (CapExceeded, Polynomial, evaluate_many, monomial_basis, monomial_index,
                         sphere_power)

MAX_LEVEL = 10
SPHERE_SAMPLES = 10_000
DEFAULT_SEED = 0

NEG_INF = float("-inf")

OPTIMAL = conic_ir.OPTIMAL
INFEASIBLE = conic_ir.INFEASIBLE
FAILED = conic_ir.NUMERICAL_FAILURE
SKIPPED = "skipped"


class Membership(enum.Enum):
    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class LevelSpec:
    p: Polynomial
    cone: ConeKind
    r: int

    def __post_init__(self):
        object.__setattr__(self, "cone", ConeKind.parse(self.cone))
        if self.p.is_zero() or not self.p.is_homogeneous():
            raise ValueError("the objective must be a nonzero form (homogeneous polynomial)")
        if self.p.degree < 2 or self.p.degree % 2:
            raise ValueError(f"the form must have even degree >= 2, got {self.p.degree}")
        if not 0 <= self.r <= MAX_LEVEL:
            raise CapExceeded(f"level r={self.r} outside 0..{MAX_LEVEL}")

    @property
    def d(self):
        return self.p.degree // 2

    @property
    def half_degree(self):
        return self.d + self.r


@dataclass
class LevelProgram:
    spec: LevelSpec
    program: conic_ir.ConicProgram
    system: object
    qvars: np.ndarray
    bundle: object
    gamma: int = None  # variable index, None for a pure feasibility program


@dataclass
class BoundResult:
    spec: LevelSpec
    bound: float
    status: str
    certificate: Certificate = None
    program_stats: dict = field(default_factory=dict)
    p_star_hint: float = None
    verification: object = None
    dual_bound: float = None
    solve_time: float = 0.0
    solver: str = ""
    repair_shift: float = 0.0
    message: str = ""

    @property
    def cone(self):
        return self.spec.cone

    @property
    def r(self):
        return self.spec.r


def _rational_coeffs(system, poly):
    index = system.row_index()
    out = {}
    for mono, c in poly.items():
        out[index[mono]] = c
    return out


def assemble_level(spec, with_gamma=True):
    """Build the level program and remember where everything lives."""
    p, n = spec.p, spec.p.n
    system = gram_system(n, spec.half_degree)
    rhs = _rational_coeffs(system, p * sphere_power(n, spec.r))
    sphere = _rational_coeffs(system, sphere_power(n, spec.half_degree))

    builder = conic_ir.ProgramBuilder()
    gamma = builder.add_variable("gamma") if with_gamma else None
    qvars = add_gram_variables(builder, system.size)
    for k, row in enumerate(system.rows):
        coeffs = [(qvars[i, j], float(mult)) for i, j, mult in row.entries]
        if with_gamma and k in sphere:
            coeffs.append((gamma, float(sphere[k])))
        builder.add_equality(coeffs, float(rhs.get(k, 0)))
    bundle = ENCODERS[spec.cone](builder, qvars)
    if with_gamma:
        builder.set_objective({gamma: 1.0}, "max")
    else:
        builder.set_objective({}, "max")
    return LevelProgram(spec, builder.build(), system, qvars, bundle, gamma)


def build_level(spec):
    return assemble_level(spec).program


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

def gram_matrix_from(level, x):
    N = level.system.size
    Q = np.empty((N, N))
    for i in range(N):
        for j in range(i, N):
            Q[i, j] = Q[j, i] = x[level.qvars[i, j]]
    return Q


def certificate_from(level, x, gamma):
    Q = gram_matrix_from(level, x)
    cone = level.spec.cone
    cert = Certificate(cone, Q, gamma, level.spec.r)
    if cone == ConeKind.SDD and Q.shape[0] > 1:
        cert.blocks = blocks_from_solution(level.bundle, x)
    elif cone == ConeKind.DD:
        cert.slack = dd_slack_from_solution(level.bundle, level.qvars, x)
    return cert


def shift_certificate(cert, diag, delta):
    """Certificate for ``gamma - delta``: adds ``delta * diag`` to the Gram.

    ``diag`` is the diagonal Gram of ``s^(d+r)``, so the coefficient match is
    preserved exactly and every cone only gains margin.
    """
    Q = cert.Q + delta * np.diag(diag)
    blocks = None
    if cert.blocks is not None:
        placed = set()
        blocks = []
        for b in cert.blocks:
            a, c = b.a, b.c
            if b.i not in placed:
                a += delta * diag[b.i]
                placed.add(b.i)
            if b.j not in placed:
                c += delta * diag[b.j]
                placed.add(b.j)
            blocks.append(SddBlock(b.i, b.j, a, b.b, c))
    return Certificate(cert.cone, Q, cert.gamma - delta, cert.r, blocks, cert.slack)


def lift_gram(Q, n, half_degree, k):
    """Gram of ``f * s^k`` from a Gram ``Q`` of ``f`` over the degree-e basis.

    Uses ``s^k = sum_a multinomial(k; a) (x^a)^2``: each term contributes the
    principal embedding of ``Q`` shifted by ``x^a``.  Embeddings and positive
    sums keep DD, SDD and PSD membership.
    """
    Q = np.asarray(Q, dtype=np.float64)
    small = monomial_basis(n, half_degree)
    size = comb(n + half_degree + k - 1, n - 1)
    out = np.zeros((size, size))
    base = np.array(small, dtype=np.int64).reshape(len(small), n)
    for alpha in monomial_basis(n, k):
        w = factorial(k)
        for e in alpha:
            w //= factorial(e)
        idx = monomial_index(base + np.array(alpha, dtype=np.int64), half_degree + k)
        out[np.ix_(idx, idx)] += w * Q
    return out


def lift_blocks(blocks, n, half_degree, k):
    """SDD blocks of the lifted Gram, mirroring :func:`lift_gram`."""
    small = monomial_basis(n, half_degree)
    base = np.array(small, dtype=np.int64).reshape(len(small), n)
    acc = {}
    for alpha in monomial_basis(n, k):
        w = factorial(k)
        for e in alpha:
            w //= factorial(e)
        idx = monomial_index(base + np.array(alpha, dtype=np.int64), half_degree + k)
        for b in blocks:
            i, j = int(idx[b.i]), int(idx[b.j])
            a, c = w * b.a, w * b.c
            if i > j:
                i, j, a, c = j, i, c, a
            prev = acc.get((i, j), (0.0, 0.0, 0.0))
            acc[i, j] = (prev[0] + a, prev[1] + w * b.b, prev[2] + c)
    return [SddBlock(i, j, *acc[i, j]) for i, j in sorted(acc)]


def quadratic_gram(p):
    """The unique Gram matrix of a quadratic form."""
    n = p.n
    G = np.zeros((n, n))
    for mono, c in p.items():
        idx = [i for i, e in enumerate(mono) for _ in range(e)]
        i, j = idx
        if i == j:
            G[i, i] = float(c)
        else:
            G[i, j] = G[j, i] = float(c) / 2
    return G


def _repair(p, r, cert, diag, report):
    # lower gamma by the smallest power-of-ten step that makes the cone check pass
    if report.passed or report.residual > report.residual_tol:
        return cert, report, 0.0
    scale = 1.0 + abs(cert.gamma)
    for exp in range(-13, -5):
        delta = scale * 10.0 ** exp
        shifted = shift_certificate(cert, diag, delta)
        rep = verify_certificate(p, r, shifted.gamma, shifted)
        if rep.passed:
            return shifted, rep, delta
    return cert, report, 0.0


# ---------------------------------------------------------------------------
# solving levels
# ---------------------------------------------------------------------------

def _solve_quadratic_sos(spec):
    t0 = time.perf_counter()
    G = quadratic_gram(spec.p)
    lam = float(np.linalg.eigvalsh(G).min())
    Q = lift_gram(G - lam * np.eye(spec.p.n), spec.p.n, 1, spec.r)
    cert = Certificate(ConeKind.PSD, Q, lam, spec.r)
    report = verify_certificate(spec.p, spec.r, lam, cert)
    diag = sphere_gram_diagonal(gram_system(spec.p.n, spec.half_degree))
    cert, report, delta = _repair(spec.p, spec.r, cert, diag, report)
    status = OPTIMAL if report.passed else FAILED
    N = Q.shape[0]
    return BoundResult(spec, cert.gamma, status, cert,
                       {"N": N, "variables": 1 + N * (N + 1) // 2, "equalities": 0, "nonnegative": 0,
                        "soc": 0, "psd": 0},
                       verification=report, dual_bound=lam, solve_time=time.perf_counter() - t0,
                       solver="eigenvalue", repair_shift=delta,
                       message="" if report.passed else "; ".join(report.messages))


def solve_level(spec, backend=None, shortcut=True, presolve=True):
    """Solve one level and return a verified :class:`BoundResult`.

    Quadratic forms with the PSD cone use the eigenvalue shortcut when
    ``shortcut`` is set: the level value is the smallest eigenvalue of the
    unique Gram matrix, for every ``r``.
    """
    if not isinstance(spec, LevelSpec):
        raise TypeError("solve_level expects a LevelSpec")
    if spec.cone == ConeKind.PSD and spec.p.degree == 2 and shortcut:
        return _solve_quadratic_sos(spec)
    backend = get_backend(backend)
    if spec.cone == ConeKind.PSD and "psd" not in backend.capabilities:
        raise conic_ir.CapabilityError(
            f"backend {backend.name!r} has no PSD cone; SOS levels need degree 2 or a PSD backend")
    level = assemble_level(spec)
    stats = dict(level.program.stats(), N=level.system.size)
    sol = conic_ir.solve(level.program, backend, presolve_program=presolve)
    result = BoundResult(spec, NEG_INF, sol.status, program_stats=stats, solve_time=sol.wall_time,
                         solver=sol.solver_name, message=sol.message)
    if sol.dual is not None and sol.dual.kind == "bound" and sol.dual.valid:
        result.dual_bound = sol.dual.bound
    if sol.status == conic_ir.INFEASIBLE:
        result.bound = NEG_INF
        return result
    if sol.status != conic_ir.OPTIMAL:
        result.status = FAILED
        return result
    gamma = float(sol.primal[level.gamma])
    cert = certificate_from(level, sol.primal, gamma)
    report = verify_certificate(spec.p, spec.r, gamma, cert)
    diag = sphere_gram_diagonal(level.system)
    cert, report, delta = _repair(spec.p, spec.r, cert, diag, report)
    result.bound = cert.gamma
    result.certificate = cert
    result.verification = report
    result.repair_shift = delta
    if not report.passed:
        result.status = FAILED
        result.message = "; ".join(report.messages)
    return result


@dataclass
class MembershipResult:
    answer: Membership
    level_value: float = None
    certificate: Certificate = None
    farkas: object = None
    message: str = ""

    def __bool__(self):
        return self.answer == Membership.TRUE


def is_r_member(f, cone, r, backend=None, tol=1e-9):
    """Is ``f * s^r`` in the dsos / sdsos / sos cone?

    ``FALSE`` is only returned together with a Farkas ray for the Gram
    feasibility system that passes an independent check.
    """
    cone = ConeKind.parse(cone)
    spec = LevelSpec(f, cone, r)
    backend = get_backend(backend)
    if cone == ConeKind.PSD and f.degree == 2:
        res = _solve_quadratic_sos(spec)
        return _membership_from_value(spec, res, tol)
    if cone == ConeKind.PSD and "psd" not in backend.capabilities:
        raise conic_ir.CapabilityError(f"backend {backend.name!r} has no PSD cone")
    level = assemble_level(spec)
    sol = conic_ir.solve(level.program, backend, presolve_program=False)
    if sol.status != conic_ir.OPTIMAL:
        return MembershipResult(Membership.UNKNOWN, message=f"level solve: {sol.status} {sol.message}")
    value = float(sol.primal[level.gamma])
    scale = 1.0 + f.max_abs_coefficient()
    if value >= -tol * scale:
        cert = certificate_from(level, sol.primal, value)
        diag = sphere_gram_diagonal(level.system)
        cert = shift_certificate(cert, diag, value)  # now gamma == 0
        cert.gamma = 0.0
        report = verify_certificate(f, r, 0.0, cert)
        if report.passed:
            return MembershipResult(Membership.TRUE, value, cert)
        return MembershipResult(Membership.UNKNOWN, value, cert, message="; ".join(report.messages))
    if sol.dual is None:
        return MembershipResult(Membership.UNKNOWN, value, message="backend returned no dual")
    feasibility = assemble_level(spec, with_gamma=False).program
    farkas = conic_ir.check_dual(feasibility, sol.dual.y, "farkas", margin_tol=1e-10)
    if farkas.valid:
        return MembershipResult(Membership.FALSE, value, farkas=farkas)
    return MembershipResult(Membership.UNKNOWN, value, farkas=farkas,
                            message="infeasibility ray failed verification")


def _membership_from_value(spec, res, tol):
    value = res.bound
    if res.status != OPTIMAL:
        return MembershipResult(Membership.UNKNOWN, value, message=res.message)
    if value >= -tol * (1.0 + spec.p.max_abs_coefficient()):
        diag = sphere_gram_diagonal(gram_system(spec.p.n, spec.half_degree))
        cert = shift_certificate(res.certificate, diag, value)
        cert.gamma = 0.0
        if verify_certificate(spec.p, spec.r, 0.0, cert).passed:
            return MembershipResult(Membership.TRUE, value, cert)
        return MembershipResult(Membership.UNKNOWN, value)
    # the quadratic case is decided by the eigenvalue itself
    return MembershipResult(Membership.FALSE, value, message="negative smallest eigenvalue")


# ---------------------------------------------------------------------------
# counting
# ---------------------------------------------------------------------------

def count_constraints(n, d, r, cone=None):
    """Sizes of the level-``r`` program for a degree-``2d`` form in ``n`` variables.

    ``N_paper`` counts all monomials of degree at most ``d+r`` (the size of a
    nonhomogeneous basis); ``N_h`` is the homogeneous basis actually used.
    """
    if n < 1 or d < 1 or r < 0:
        raise ValueError("need n >= 1, d >= 1, r >= 0")
    if r > MAX_LEVEL:
        raise CapExceeded(f"level r={r} outside 0..{MAX_LEVEL}")
    N_paper = comb(n + d + r, n)
    N_h = comb(n + d + r - 1, n - 1)
    pairs = comb(N_h, 2)
    out = {
        "n": n, "d": d, "r": r,
        "N_paper": N_paper,
        "N_h": N_h,
        "soc_blocks": pairs,
        "soc_blocks_paper": comb(N_paper, 2),
        "lp_rows": 2 * pairs + N_h,
        "dd_slacks": pairs,
        "gram_entries": N_h * (N_h + 1) // 2,
    }
    if cone is not None:
        out["cone"] = ConeKind.parse(cone).label
    return out


def count_sequence(n, d, r_max, cone=None):
    return [count_constraints(n, d, r, cone) for r in range(r_max + 1)]


# ---------------------------------------------------------------------------
# sampling and tables
# ---------------------------------------------------------------------------

def sphere_points(n, count=SPHERE_SAMPLES, seed=DEFAULT_SEED):
    """Deterministic quasi-random points on the unit sphere in R^n."""
    u = qmc.Halton(d=n, scramble=True, seed=seed).random(count)
    g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return g / norms


def sampled_minimum(p, count=SPHERE_SAMPLES, seed=DEFAULT_SEED):
    return float(np.min(evaluate_many(p, sphere_points(p.n, count, seed))))


def run_table(p, cones, r_max, backend=None, seed=DEFAULT_SEED, workers=1, shortcut=True):
    """One :class:`BoundResult` per (cone, r), sorted by cone then r.

    Cells that cannot be run (SOS above degree 2 without a PSD backend) are
    returned with status ``skipped``; failures are recorded, never raised.
    """
    hint = sampled_minimum(p, seed=seed)
    backend_name = backend if isinstance(backend, str) or backend is None else backend
    keys = sorted({(ConeKind.parse(c), r) for c in cones for r in range(r_max + 1)})

    def cell(key):
        cone, r = key
        spec = LevelSpec(p, cone, r)
        try:
            res = solve_level(spec, get_backend(backend_name), shortcut=shortcut)
        except conic_ir.CapabilityError as exc:
            res = BoundResult(spec, math.nan, SKIPPED, message=str(exc))
        except Exception as exc:  # keep the table whole
            res = BoundResult(spec, math.nan, FAILED, message=f"{type(exc).__name__}: {exc}")
        res.p_star_hint = hint
        return res

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(zip(keys, pool.map(cell, keys)))
    else:
        results = {k: cell(k) for k in keys}
    return [results[k] for k in keys]
