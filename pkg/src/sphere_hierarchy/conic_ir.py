"""Solver-agnostic conic programs.

A :class:`ConicProgram` has scalar variables, a linear objective, sparse
equality rows ``A v = b`` and cone memberships on tuples of variables::

    nonnegative      every listed variable >= 0
    second-order     (t, u1, ..., uk) with ||u|| <= t
    psd-2x2-as-soc   (a, b, c) with [[a, b], [b, c]] PSD, i.e. ||(2b, a-c)|| <= a+c
    psd              upper triangle (row-major) of a k x k PSD matrix

Variables outside every cone are free.  Backends receive the program through
:func:`standard_form`; duals and infeasibility rays coming back are checked
here, independently of the backend that produced them.
"""
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

CONE_KINDS = ("nonnegative", "second-order", "psd-2x2-as-soc", "psd")

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical-failure"

VERIFIED = "verified"
UNVERIFIED = "reported, unverified"

FEAS_TOL = 1e-8
GAP_TOL = 1e-8


class CapabilityError(RuntimeError):
    """The backend cannot handle a cone present in the program."""


class ProgramError(ValueError):
    pass


@dataclass(frozen=True)
class Cone:
    kind: str
    variables: tuple

    @property
    def psd_order(self):
        # k with k(k+1)/2 == len(variables)
        m = len(self.variables)
        k = int(round((math.sqrt(8 * m + 1) - 1) / 2))
        return k


@dataclass(frozen=True)
class ConicProgram:
    names: tuple
    objective: tuple  # ((var, coeff), ...)
    sense: str
    rows: tuple  # (((var, coeff), ...), rhs)
    cones: tuple
    objective_constant: float = 0.0

    def __post_init__(self):
        nvar = len(self.names)
        if self.sense not in ("max", "min"):
            raise ProgramError(f"bad sense {self.sense!r}")
        for v, _ in self.objective:
            if not 0 <= v < nvar:
                raise ProgramError(f"objective references unknown variable {v}")
        for coeffs, _ in self.rows:
            for v, _ in coeffs:
                if not 0 <= v < nvar:
                    raise ProgramError(f"row references unknown variable {v}")
        seen = set()
        for cone in self.cones:
            if cone.kind not in CONE_KINDS:
                raise ProgramError(f"unknown cone {cone.kind!r}")
            for v in cone.variables:
                if not 0 <= v < nvar:
                    raise ProgramError(f"cone references unknown variable {v}")
                if v in seen:
                    raise ProgramError(f"variable {self.names[v]} is in two cones")
                seen.add(v)
            k = len(cone.variables)
            if cone.kind == "second-order" and k < 2:
                raise ProgramError("second-order cone needs at least 2 coordinates")
            if cone.kind == "psd-2x2-as-soc" and k != 3:
                raise ProgramError("psd-2x2-as-soc takes exactly (a, b, c)")
            if cone.kind == "psd":
                order = cone.psd_order
                if order * (order + 1) // 2 != k:
                    raise ProgramError(f"{k} is not a triangular number")

    @property
    def num_variables(self):
        return len(self.names)

    def cone_kinds(self):
        return {c.kind for c in self.cones}

    def stats(self):
        counts = {kind: 0 for kind in CONE_KINDS}
        for c in self.cones:
            counts[c.kind] += 1 if c.kind != "nonnegative" else len(c.variables)
        return {
            "variables": self.num_variables,
            "equalities": len(self.rows),
            "nonnegative": counts["nonnegative"],
            "soc": counts["second-order"] + counts["psd-2x2-as-soc"],
            "psd": counts["psd"],
        }


class ProgramBuilder:
    """Mutable helper; :meth:`build` freezes it into a :class:`ConicProgram`."""

    def __init__(self):
        self.names = []
        self.objective = {}
        self.sense = "max"
        self.rows = []
        self.cones = []
        self.constant = 0.0

    def add_variable(self, name):
        self.names.append(name)
        return len(self.names) - 1

    def add_variables(self, names):
        return [self.add_variable(nm) for nm in names]

    def add_equality(self, coeffs, rhs):
        merged = {}
        for v, c in coeffs:
            merged[v] = merged.get(v, 0.0) + float(c)
        row = tuple(sorted((v, c) for v, c in merged.items() if c != 0.0))
        self.rows.append((row, float(rhs)))
        return len(self.rows) - 1

    def add_cone(self, kind, variables):
        self.cones.append(Cone(kind, tuple(int(v) for v in variables)))

    def set_objective(self, coeffs, sense="max", constant=0.0):
        self.objective = dict(coeffs)
        self.sense = sense
        self.constant = float(constant)

    def build(self):
        return ConicProgram(
            names=tuple(self.names),
            objective=tuple(sorted((v, float(c)) for v, c in self.objective.items() if c != 0.0)),
            sense=self.sense,
            rows=tuple(self.rows),
            cones=tuple(self.cones),
            objective_constant=self.constant,
        )


# ---------------------------------------------------------------------------
# matrix view
# ---------------------------------------------------------------------------

@dataclass
class StandardForm:
    """``min c^T x`` s.t. ``A x = b`` and cone memberships on variables."""
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    cones: tuple
    free: np.ndarray
    sign: float  # +1 for min, -1 for max (objective was negated)


def standard_form(program):
    nvar = program.num_variables
    sign = 1.0 if program.sense == "min" else -1.0
    c = np.zeros(nvar)
    for v, coef in program.objective:
        c[v] = sign * coef
    data, ri, ci = [], [], []
    for k, (coeffs, _) in enumerate(program.rows):
        for v, coef in coeffs:
            ri.append(k)
            ci.append(v)
            data.append(coef)
    A = sp.csr_matrix((data, (ri, ci)), shape=(len(program.rows), nvar))
    b = np.array([rhs for _, rhs in program.rows], dtype=np.float64)
    free = np.ones(nvar, dtype=bool)
    for cone in program.cones:
        free[list(cone.variables)] = False
    return StandardForm(c, A, b, program.cones, free, sign)


# ---------------------------------------------------------------------------
# cone geometry
# ---------------------------------------------------------------------------

def _psd_matrix(vals, order, offdiag_scale=1.0):
    M = np.zeros((order, order))
    k = 0
    for i in range(order):
        for j in range(i, order):
            M[i, j] = M[j, i] = vals[k] * (1.0 if i == j else offdiag_scale)
            k += 1
    return M


def cone_violation(cone, values):
    """How far ``values`` is outside the cone (0 when inside)."""
    v = np.asarray(values, dtype=np.float64)
    if cone.kind == "nonnegative":
        return float(max(0.0, -v.min())) if v.size else 0.0
    if cone.kind == "second-order":
        return float(max(0.0, np.linalg.norm(v[1:]) - v[0]))
    if cone.kind == "psd-2x2-as-soc":
        a, b, c = v
        return float(max(0.0, math.hypot(2 * b, a - c) - (a + c)))
    return float(max(0.0, -np.linalg.eigvalsh(_psd_matrix(v, cone.psd_order)).min()))


def dual_cone_margin(cone, values):
    """Signed distance-like margin of a dual slack inside the dual cone.

    Dual pairing is the plain dot product on the cone's coordinates, so the
    off-diagonal coordinates of the matrix cones enter with a factor 1/2.
    """
    v = np.asarray(values, dtype=np.float64)
    if cone.kind == "nonnegative":
        return float(v.min()) if v.size else 0.0
    if cone.kind == "second-order":
        return float(v[0] - np.linalg.norm(v[1:]))
    if cone.kind == "psd-2x2-as-soc":
        a, b, c = v
        return float(np.linalg.eigvalsh(np.array([[a, b / 2], [b / 2, c]])).min())
    return float(np.linalg.eigvalsh(_psd_matrix(v, cone.psd_order, 0.5)).min())


def primal_residuals(program, x):
    form = standard_form(program)
    x = np.asarray(x, dtype=np.float64)
    eq = float(np.max(np.abs(form.A @ x - form.b))) if form.b.size else 0.0
    cone = max((cone_violation(c, x[list(c.variables)]) for c in program.cones), default=0.0)
    return {"equality": eq, "cone": cone}


def objective_value(program, x):
    return float(sum(c * x[v] for v, c in program.objective) + program.objective_constant)


# ---------------------------------------------------------------------------
# dual certificates
# ---------------------------------------------------------------------------

@dataclass
class DualCheck:
    """Outcome of checking a dual vector ``y`` for a program.

    ``bound`` is, for an optimality certificate, the bound on the objective
    implied by weak duality (an upper bound for ``max`` programs, lower for
    ``min``); for an infeasibility ray it is the positive quantity ``b^T y``.
    """
    kind: str  # "bound" or "farkas"
    valid: bool
    bound: float
    free_residual: float
    cone_margin: float
    y: np.ndarray = field(repr=False)


def _repair_free(form, y, target):
    # make (target - A^T y) vanish on free columns by a least-squares shift of y
    if not form.free.any():
        return y
    Af = form.A[:, form.free].toarray()
    r = target[form.free] - Af.T @ y
    dy, *_ = np.linalg.lstsq(Af.T, r, rcond=None)
    return y + dy


def check_dual(program, y, kind="bound", margin_tol=0.0, free_tol=1e-9):
    """Verify a dual vector independently of the solver that produced it.

    ``kind="bound"``: ``s = c - A^T y`` must vanish on free variables and lie
    in the dual cone on cone variables; then ``b^T y`` bounds the optimum.
    ``kind="farkas"``: same with ``c = 0`` and ``b^T y > 0``, which proves the
    equality system has no solution inside the cones.
    """
    form = standard_form(program)
    y = np.asarray(y, dtype=np.float64).copy()
    target = form.c if kind == "bound" else np.zeros_like(form.c)
    if kind == "farkas":
        # normalize so that b^T y = 1 before repairing
        by = float(form.b @ y)
        if by > 0:
            y = y / by
    y = _repair_free(form, y, target)
    s = target - form.A.T @ y
    scale = 1.0 + float(np.max(np.abs(form.A.data), initial=0.0)) * float(np.max(np.abs(y), initial=0.0))
    free_res = float(np.max(np.abs(s[form.free]), initial=0.0)) / scale
    margin = min((dual_cone_margin(c, s[list(c.variables)]) for c in program.cones), default=0.0)
    by = float(form.b @ y)
    if kind == "bound":
        bound = form.sign * by + program.objective_constant
        valid = free_res <= free_tol and margin >= -margin_tol
    else:
        bound = by
        valid = free_res <= free_tol and margin >= -margin_tol and by > 0
    return DualCheck(kind, bool(valid), float(bound), free_res, float(margin), y)


# ---------------------------------------------------------------------------
# presolve
# ---------------------------------------------------------------------------

@dataclass
class PresolveMap:
    original: ConicProgram
    kept: tuple  # original indices of surviving variables
    fixed: dict  # original index -> value
    infeasible: bool = False

    def recover(self, x_reduced):
        x = np.zeros(self.original.num_variables)
        for new, old in enumerate(self.kept):
            x[old] = x_reduced[new]
        for old, val in self.fixed.items():
            x[old] = val
        return x


def _presolve_pass(program):
    nonneg = set()
    coned = set()
    for cone in program.cones:
        coned.update(cone.variables)
        if cone.kind == "nonnegative":
            nonneg.update(cone.variables)
    fixed = {}
    for coeffs, rhs in program.rows:
        if len(coeffs) == 1:
            v, a = coeffs[0]
            val = rhs / a
            if v in fixed:
                continue
            if v not in coned or (v in nonneg and val >= 0):
                fixed[v] = val
    rows = []
    seen = set()
    infeasible = False
    for coeffs, rhs in program.rows:
        new = []
        for v, a in coeffs:
            if v in fixed:
                rhs -= a * fixed[v]
            else:
                new.append((v, a))
        if not new:
            if abs(rhs) > FEAS_TOL:
                infeasible = True
            continue
        key = (tuple(new), rhs)
        if key in seen:
            continue
        seen.add(key)
        rows.append(key)
    if not fixed and len(rows) == len(program.rows):
        return program, (), {}, infeasible
    kept = tuple(v for v in range(program.num_variables) if v not in fixed)
    remap = {old: new for new, old in enumerate(kept)}
    constant = program.objective_constant
    objective = []
    for v, c in program.objective:
        if v in fixed:
            constant += c * fixed[v]
        else:
            objective.append((remap[v], c))
    cones = []
    for cone in program.cones:
        vs = tuple(remap[v] for v in cone.variables if v not in fixed)
        if vs:
            cones.append(Cone(cone.kind, vs))
    reduced = ConicProgram(
        names=tuple(program.names[v] for v in kept),
        objective=tuple(objective),
        sense=program.sense,
        rows=tuple((tuple((remap[v], a) for v, a in coeffs), rhs) for coeffs, rhs in rows),
        cones=tuple(cones),
        objective_constant=constant,
    )
    return reduced, kept, fixed, infeasible


def presolve(program):
    """Drop fixed variables, empty rows and duplicate rows.

    Returns ``(reduced_program, PresolveMap)``; ``map.recover`` lifts a
    solution of the reduced program back to the original variables.
    Repeated until nothing changes, so presolving twice is a no-op.
    """
    current = program
    kept = tuple(range(program.num_variables))
    fixed = {}
    infeasible = False
    while True:
        reduced, k, f, inf = _presolve_pass(current)
        infeasible = infeasible or inf
        if reduced is current:
            break
        for local, val in f.items():
            fixed[kept[local]] = val
        kept = tuple(kept[i] for i in k)
        current = reduced
    return current, PresolveMap(program, kept, fixed, infeasible)


# ---------------------------------------------------------------------------
# text serialization
# ---------------------------------------------------------------------------

def _num(x):
    return repr(float(x))


def dumps(program):
    """Deterministic plain-text form: sections VARS, OBJ, EQ, CONES."""
    lines = ["VARS"]
    lines += [f"{i} {name}" for i, name in enumerate(program.names)]
    lines.append(f"OBJ {program.sense} {_num(program.objective_constant)}")
    lines += [f"{v} {_num(c)}" for v, c in program.objective]
    lines.append("EQ")
    for coeffs, rhs in program.rows:
        body = " ".join(f"{v}:{_num(c)}" for v, c in coeffs)
        lines.append(f"{body} = {_num(rhs)}")
    lines.append("CONES")
    for cone in program.cones:
        lines.append(cone.kind + " " + " ".join(str(v) for v in cone.variables))
    return "\n".join(lines) + "\n"


def loads(text):
    section = None
    names, objective, rows, cones = [], [], [], []
    sense, constant = "max", 0.0
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        head = line.split()[0]
        if head in ("VARS", "EQ", "CONES"):
            section = head
            continue
        if head == "OBJ":
            section = "OBJ"
            _, sense, constant = line.split()
            constant = float(constant)
            continue
        if section == "VARS":
            idx, name = line.split(" ", 1)
            if int(idx) != len(names):
                raise ProgramError(f"variable index {idx} out of order")
            names.append(name)
        elif section == "OBJ":
            v, c = line.split()
            objective.append((int(v), float(c)))
        elif section == "EQ":
            lhs, rhs = line.rsplit("=", 1)
            coeffs = []
            for tok in lhs.split():
                v, c = tok.split(":")
                coeffs.append((int(v), float(c)))
            rows.append((tuple(coeffs), float(rhs)))
        elif section == "CONES":
            parts = line.split()
            cones.append(Cone(parts[0], tuple(int(v) for v in parts[1:])))
        else:
            raise ProgramError(f"line outside any section: {raw!r}")
    return ConicProgram(tuple(names), tuple(objective), sense, tuple(rows), tuple(cones), constant)


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------

@dataclass
class RawResult:
    """What a backend hands back, in terms of the program it was given."""
    status: str
    x: np.ndarray = None
    y: np.ndarray = None  # equality duals, convention c - A^T y in dual cone
    ray: np.ndarray = None  # Farkas ray, convention b^T y > 0, -A^T y in dual cone
    iterations: int = 0
    message: str = ""


@dataclass
class Solution:
    status: str
    objective_value: float = None
    primal: np.ndarray = None
    residuals: dict = field(default_factory=dict)
    solver_name: str = ""
    iterations: int = 0
    wall_time: float = 0.0
    dual: DualCheck = None
    certificate_status: str = None
    message: str = ""

    @property
    def optimal(self):
        return self.status == OPTIMAL


class Backend:
    """Backend contract.

    Subclasses set ``name`` and ``capabilities`` (a set of cone kinds) and
    implement :meth:`solve_standard`, which receives a :class:`ConicProgram`
    and returns a :class:`RawResult`.
    """
    name = "abstract"
    capabilities = frozenset()

    def check(self, program):
        missing = program.cone_kinds() - set(self.capabilities)
        if missing:
            raise CapabilityError(f"backend {self.name!r} cannot handle cones {sorted(missing)}")

    def solve_standard(self, program, **options):  # pragma: no cover - interface
        raise NotImplementedError


def solve(program, backend, presolve_program=True, feas_tol=FEAS_TOL, **options):
    """Solve ``program`` on ``backend`` and check what comes back."""
    backend.check(program)
    t0 = time.perf_counter()
    if presolve_program:
        reduced, pmap = presolve(program)
    else:
        reduced, pmap = program, PresolveMap(program, tuple(range(program.num_variables)), {})
    if pmap.infeasible:
        return Solution(INFEASIBLE, solver_name=backend.name, certificate_status=VERIFIED,
                        wall_time=time.perf_counter() - t0,
                        message="presolve found an empty row with nonzero right-hand side")
    if reduced.num_variables == 0:
        x = pmap.recover(np.zeros(0))
        return Solution(OPTIMAL, objective_value(program, x), x, primal_residuals(program, x),
                        backend.name, 0, time.perf_counter() - t0)
    raw = backend.solve_standard(reduced, **options)
    wall = time.perf_counter() - t0
    sol = Solution(raw.status, solver_name=backend.name, iterations=raw.iterations,
                   wall_time=wall, message=raw.message)
    if raw.status == OPTIMAL:
        x = pmap.recover(raw.x)
        sol.primal = x
        sol.objective_value = objective_value(program, x)
        sol.residuals = primal_residuals(program, x)
        scale = 1.0 + max((abs(r) for _, r in program.rows), default=0.0)
        if sol.residuals["equality"] > feas_tol * scale or sol.residuals["cone"] > feas_tol * scale:
            sol.status = NUMERICAL_FAILURE
            sol.message = f"residuals {sol.residuals} exceed tolerance"
        if raw.y is not None:
            sol.dual = check_dual(reduced, raw.y, "bound", margin_tol=feas_tol)
    elif raw.status == INFEASIBLE:
        sol.certificate_status = UNVERIFIED
        if raw.ray is not None:
            check = check_dual(reduced, raw.ray, "farkas", margin_tol=1e-10)
            sol.dual = check
            if check.valid:
                sol.certificate_status = VERIFIED
    elif raw.status == UNBOUNDED:
        sol.certificate_status = UNVERIFIED
    return sol
