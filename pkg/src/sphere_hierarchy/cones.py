"""Diagonally dominant, scaled diagonally dominant and PSD Gram cones.

Two sides live here: encoders that add cone constraints on Gram-matrix
variables to a :class:`~sphere_hierarchy.conic_ir.ProgramBuilder`, and
numeric membership checks for explicit matrices, used to verify
certificates without trusting the solver.
"""
import enum
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _kernels, conic_ir
from .gram import gram_system, reconstruct_coefficients, target_vector
from .polynomial import DimensionError, sphere_power

CERT_TOL = 1e-8
RESIDUAL_TOL = 1e-6


class ConeKind(enum.IntEnum):
    DD = 0
    SDD = 1
    PSD = 2

    @classmethod
    def parse(cls, text):
        if isinstance(text, ConeKind):
            return text
        key = str(text).strip().lower()
        aliases = {"dd": cls.DD, "dsos": cls.DD, "sdd": cls.SDD, "sdsos": cls.SDD,
                   "psd": cls.PSD, "sos": cls.PSD}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown cone {text!r}; use dsos, sdsos or sos") from None

    @property
    def label(self):
        return {ConeKind.DD: "dsos", ConeKind.SDD: "sdsos", ConeKind.PSD: "sos"}[self]


class SolverFailure(RuntimeError):
    """The solver broke down; membership is unknown."""


@dataclass(frozen=True)
class SddBlock:
    i: int
    j: int
    a: float
    b: float
    c: float

    def matrix(self):
        return np.array([[self.a, self.b], [self.b, self.c]])

    def psd_violation(self):
        return max(0.0, -self.a, -self.c, self.b * self.b - self.a * self.c)


@dataclass
class Certificate:
    cone: ConeKind
    Q: np.ndarray
    gamma: float = 0.0
    r: int = 0
    blocks: list = None
    slack: np.ndarray = None

    @property
    def size(self):
        return self.Q.shape[0]

    def to_dict(self):
        N = self.size
        out = {
            "cone": self.cone.label,
            "N": N,
            "Q": [float(self.Q[i, j]) for i in range(N) for j in range(i, N)],
            "gamma": float(self.gamma),
            "r": int(self.r),
        }
        if self.blocks is not None:
            out["blocks"] = [{"i": b.i, "j": b.j, "a": b.a, "b": b.b, "c": b.c} for b in self.blocks]
        return out

    def to_json(self):
        return dumps_json(self.to_dict())

    @classmethod
    def from_dict(cls, data):
        N = int(data["N"])
        flat = data["Q"]
        if len(flat) != N * (N + 1) // 2:
            raise DimensionError(f"Q has {len(flat)} entries, expected {N * (N + 1) // 2} for N={N}")
        Q = np.zeros((N, N))
        k = 0
        for i in range(N):
            for j in range(i, N):
                Q[i, j] = Q[j, i] = float(flat[k])
                k += 1
        blocks = None
        if data.get("blocks") is not None:
            blocks = [SddBlock(int(b["i"]), int(b["j"]), float(b["a"]), float(b["b"]), float(b["c"]))
                      for b in data["blocks"]]
            for b in blocks:
                if not 0 <= b.i < b.j < N:
                    raise DimensionError(f"block ({b.i}, {b.j}) out of range for N={N}")
        return cls(ConeKind.parse(data["cone"]), Q, float(data["gamma"]), int(data["r"]), blocks)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _fmt17(x):
    x = float(x)
    if math.isinf(x):
        return '"-inf"' if x < 0 else '"inf"'
    if math.isnan(x):
        return '"nan"'
    return format(x, ".17g")


def dumps_json(obj, indent=0):
    """JSON with every float written to 17 significant digits."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_fmt17(v) if isinstance(v, float) else str(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps_json(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt17(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------------------
# encoders
# ---------------------------------------------------------------------------

@dataclass
class ConeBundle:
    kind: ConeKind
    size: int
    slack_variables: list = field(default_factory=list)
    inequality_rows: int = 0
    equality_rows: int = 0
    soc_constraints: int = 0
    blocks: dict = field(default_factory=dict)  # (i, j) -> (a, b, c) variable indices


def add_gram_variables(builder, N, prefix="Q"):
    """Upper-triangle Gram variables; returns an N x N array of indices."""
    qvars = np.zeros((N, N), dtype=np.int64)
    for i in range(N):
        for j in range(i, N):
            qvars[i, j] = qvars[j, i] = builder.add_variable(f"{prefix}[{i},{j}]")
    return qvars


def _add_inequality(builder, coeffs, name):
    # sum(coeffs) >= 0  becomes  sum(coeffs) - s = 0 with s >= 0
    s = builder.add_variable(name)
    builder.add_equality(list(coeffs) + [(s, -1.0)], 0.0)
    builder.add_cone("nonnegative", [s])
    return s


def encode_dd(builder, qvars):
    """Diagonal dominance of Q as linear constraints.

    Slack ``M[i,j] >= 0`` for ``i < j`` with ``-M <= Q[i,j] <= M`` and
    ``Q[i,i] >= sum_j M``: binom(N,2) slacks and 2*binom(N,2)+N inequalities.
    """
    N = qvars.shape[0]
    bundle = ConeBundle(ConeKind.DD, N)
    M = {}
    for i in range(N):
        for j in range(i + 1, N):
            M[i, j] = builder.add_variable(f"M[{i},{j}]")
            bundle.slack_variables.append(M[i, j])
    if M:
        builder.add_cone("nonnegative", list(M.values()))
    for (i, j), m in M.items():
        _add_inequality(builder, [(m, 1.0), (qvars[i, j], -1.0)], f"s+[{i},{j}]")
        _add_inequality(builder, [(m, 1.0), (qvars[i, j], 1.0)], f"s-[{i},{j}]")
        bundle.inequality_rows += 2
    for i in range(N):
        coeffs = [(qvars[i, i], 1.0)]
        coeffs += [(M[min(i, j), max(i, j)], -1.0) for j in range(N) if j != i]
        _add_inequality(builder, coeffs, f"sd[{i}]")
        bundle.inequality_rows += 1
    bundle.equality_rows = bundle.inequality_rows
    return bundle


def encode_sdd(builder, qvars):
    """Q as a sum of PSD 2x2 blocks, one second-order cone per pair ``i < j``."""
    N = qvars.shape[0]
    bundle = ConeBundle(ConeKind.SDD, N)
    if N == 1:
        _add_inequality(builder, [(qvars[0, 0], 1.0)], "sd[0]")
        bundle.inequality_rows = 1
        bundle.equality_rows = 1
        return bundle
    for i in range(N):
        for j in range(i + 1, N):
            a = builder.add_variable(f"a[{i},{j}]")
            b = builder.add_variable(f"b[{i},{j}]")
            c = builder.add_variable(f"c[{i},{j}]")
            builder.add_cone("psd-2x2-as-soc", [a, b, c])
            bundle.blocks[i, j] = (a, b, c)
            bundle.soc_constraints += 1
    for i in range(N):
        for j in range(i + 1, N):
            builder.add_equality([(qvars[i, j], 1.0), (bundle.blocks[i, j][1], -1.0)], 0.0)
            bundle.equality_rows += 1
    for i in range(N):
        coeffs = [(qvars[i, i], 1.0)]
        for j in range(N):
            if j == i:
                continue
            a, _, c = bundle.blocks[min(i, j), max(i, j)]
            coeffs.append((a if i < j else c, -1.0))
        builder.add_equality(coeffs, 0.0)
        bundle.equality_rows += 1
    return bundle


def encode_psd(builder, qvars):
    N = qvars.shape[0]
    builder.add_cone("psd", [qvars[i, j] for i in range(N) for j in range(i, N)])
    return ConeBundle(ConeKind.PSD, N)


ENCODERS = {ConeKind.DD: encode_dd, ConeKind.SDD: encode_sdd, ConeKind.PSD: encode_psd}


def blocks_from_solution(bundle, x):
    return [SddBlock(i, j, float(x[a]), float(x[b]), float(x[c]))
            for (i, j), (a, b, c) in sorted(bundle.blocks.items())]


def dd_slack_from_solution(bundle, qvars, x):
    N = bundle.size
    M = np.zeros((N, N))
    it = iter(bundle.slack_variables)
    for i in range(N):
        for j in range(i + 1, N):
            M[i, j] = M[j, i] = x[next(it)]
    return M


# ---------------------------------------------------------------------------
# membership of explicit matrices
# ---------------------------------------------------------------------------

def _symmetric(A, tol=1e-12):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    scale = max(1.0, float(np.abs(A).max())) if A.size else 1.0
    if A.size and np.abs(A - A.T).max() > tol * scale:
        raise ValueError("matrix is not symmetric")
    return A


def is_dd(A):
    """``A[i,i] >= sum_{j != i} |A[i,j]|`` for every row, in exact arithmetic."""
    A = _symmetric(A)
    N = A.shape[0]
    for i in range(N):
        off = sum(Fraction(abs(float(A[i, j]))) for j in range(N) if j != i)
        if Fraction(float(A[i, i])) < off:
            return False
    return True


def dd_margin(A):
    """Smallest ``A[i,i] - sum_{j != i} |A[i,j]|`` over rows (float)."""
    A = _symmetric(A)
    if A.shape[0] == 0:
        return 0.0
    return float(_kernels.dd_margins(A).min())


def _inf_norm(A):
    return float(np.abs(A).sum(axis=1).max()) if A.size else 0.0


def psd_margin(A):
    A = _symmetric(A)
    return float(np.linalg.eigvalsh(A).min()) if A.size else 0.0


def is_psd(A, tol=1e-9):
    """Smallest eigenvalue at least ``-tol * (1 + ||A||_inf)``."""
    A = _symmetric(A)
    return psd_margin(A) >= -tol * (1.0 + _inf_norm(A))


def block_sum(blocks, N):
    S = np.zeros((N, N))
    for b in blocks:
        S[b.i, b.i] += b.a
        S[b.j, b.j] += b.c
        S[b.i, b.j] += b.b
        S[b.j, b.i] += b.b
    return S


def sdd_violation(A, blocks):
    """(max entrywise mismatch of the block sum, worst block PSD violation)."""
    A = np.asarray(A, dtype=np.float64)
    mismatch = float(np.abs(block_sum(blocks, A.shape[0]) - A).max()) if A.size else 0.0
    worst = max((b.psd_violation() for b in blocks), default=0.0)
    return mismatch, worst


@dataclass
class SddCheck:
    member: bool
    blocks: list
    margin: float  # largest t with A - t*I scaled diagonally dominant
    dual: object = None

    def __bool__(self):
        return self.member


def is_sdd(A, tol=1e-9, backend=None):
    """Decide scaled diagonal dominance by a second-order cone solve.

    Solves ``max t`` subject to ``A - t*I`` being a sum of PSD 2x2 blocks;
    ``A`` is SDD iff the optimum is nonnegative.  A negative answer is only
    returned with a verified dual bound proving ``t* < 0``; a solver
    breakdown raises :class:`SolverFailure`.
    """
    from .backends import get_backend

    A = _symmetric(A)
    N = A.shape[0]
    scale = 1.0 + _inf_norm(A)
    if N == 1:
        member = A[0, 0] >= -tol * scale
        return SddCheck(bool(member), [], float(A[0, 0]))
    # solve on a unit-norm copy; interior-point steps misbehave on large entries
    unit = max(1.0, _inf_norm(A))
    builder = conic_ir.ProgramBuilder()
    t = builder.add_variable("t")
    qvars = add_gram_variables(builder, N)
    for i in range(N):
        for j in range(i, N):
            coeffs = [(qvars[i, j], 1.0)] + ([(t, 1.0)] if i == j else [])
            builder.add_equality(coeffs, A[i, j] / unit)
    bundle = encode_sdd(builder, qvars)
    builder.set_objective({t: 1.0}, "max")
    program = builder.build()
    backend = get_backend(backend)
    if "psd-2x2-as-soc" not in backend.capabilities:
        raise conic_ir.CapabilityError(f"backend {backend.name!r} has no second-order cones")
    sol = conic_ir.solve(program, backend)
    if sol.status != conic_ir.OPTIMAL:
        raise SolverFailure(f"SDD feasibility solve ended with status {sol.status}: {sol.message}")
    tstar = float(sol.primal[t]) * unit
    if tstar >= -tol * scale:
        blocks = blocks_from_solution(bundle, sol.primal)
        # fold t* back in so the blocks sum to A itself
        shift = tstar
        placed = set()
        fixed = []
        for blk in blocks:
            a, c = blk.a * unit, blk.c * unit
            if blk.i not in placed:
                a += shift
                placed.add(blk.i)
            if blk.j not in placed:
                c += shift
                placed.add(blk.j)
            fixed.append(SddBlock(blk.i, blk.j, a, A[blk.i, blk.j], c))
        return SddCheck(True, fixed, tstar, sol.dual)
    if sol.dual is not None and sol.dual.valid and sol.dual.bound < 0:
        return SddCheck(False, None, tstar, sol.dual)
    raise SolverFailure(f"optimum t*={tstar:.3e} < 0 but the dual bound could not be verified")


# ---------------------------------------------------------------------------
# certificate verification
# ---------------------------------------------------------------------------

@dataclass
class VerificationReport:
    passed: bool
    residual: float
    residual_tol: float
    cone_margin: float
    cone_ok: bool
    block_mismatch: float = 0.0
    messages: list = field(default_factory=list)


def level_target(p, r, gamma):
    """The form ``(p - gamma*s^d) * s^r`` with ``s = x1^2 + ... + xn^2``."""
    if not p.is_homogeneous() or p.degree % 2:
        raise ValueError("p must be a form of even degree")
    d = p.degree // 2
    g = Fraction(gamma) if not isinstance(gamma, Fraction) else gamma
    return (p - sphere_power(p.n, d) * g) * sphere_power(p.n, r)


def verify_certificate(p, r, gamma, cert):
    """Check ``z^T Q z == (p - gamma*s^d)*s^r`` and the cone of ``Q``."""
    target = level_target(p, r, gamma)
    d = p.degree // 2
    system = gram_system(p.n, d + r)
    if cert.Q.shape != (system.size, system.size):
        raise DimensionError(f"certificate is {cert.Q.shape[0]}x{cert.Q.shape[1]}, "
                             f"level {r} needs {system.size}x{system.size}")
    Q = _symmetric(cert.Q, tol=1e-9)
    want = np.array([float(c) for c in target_vector(system, target)])
    have = reconstruct_coefficients(system, Q)
    residual = float(np.abs(have - want).max()) if want.size else 0.0
    residual_tol = RESIDUAL_TOL * (1.0 + float(np.abs(want).max(initial=0.0)))
    report = VerificationReport(False, residual, residual_tol, 0.0, False)
    if cert.cone == ConeKind.DD:
        margin = dd_margin(Q)
        report.cone_margin = margin
        report.cone_ok = margin >= -CERT_TOL
    elif cert.cone == ConeKind.SDD:
        if Q.shape[0] == 1:
            report.cone_margin = float(Q[0, 0])
            report.cone_ok = Q[0, 0] >= -CERT_TOL
        elif cert.blocks is None:
            report.messages.append("SDD certificate has no block decomposition")
        else:
            mismatch, worst = sdd_violation(Q, cert.blocks)
            report.block_mismatch = mismatch
            report.cone_margin = -worst
            report.cone_ok = mismatch <= CERT_TOL and worst <= CERT_TOL
    else:
        margin = psd_margin(Q)
        report.cone_margin = margin
        report.cone_ok = margin >= -CERT_TOL * (1.0 + _inf_norm(Q))
    if residual > residual_tol:
        report.messages.append(f"coefficient residual {residual:.3e} exceeds {residual_tol:.3e}")
    if not report.cone_ok:
        report.messages.append(f"Gram matrix fails the {cert.cone.label} cone check "
                               f"(margin {report.cone_margin:.3e})")
    report.passed = residual <= residual_tol and report.cone_ok
    return report
