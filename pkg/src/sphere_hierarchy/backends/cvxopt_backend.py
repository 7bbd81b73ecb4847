"""Primal-dual interior point backend via cvxopt.conelp (LP, SOC, PSD)."""
import numpy as np
import cvxopt
from cvxopt import solvers

from ..conic_ir import (INFEASIBLE, NUMERICAL_FAILURE, OPTIMAL, UNBOUNDED, Backend,
                        RawResult, check_dual, standard_form)


def _sparse(rows, cols, vals, shape):
    if not vals:
        return cvxopt.spmatrix([], [], [], shape)
    return cvxopt.spmatrix([float(v) for v in vals], [int(r) for r in rows], [int(c) for c in cols], shape)


def _cone_rows(program):
    """G, dims for s = h - G x with h = 0, i.e. s is the cone image of x."""
    gr, gc, gv = [], [], []
    dims = {"l": 0, "q": [], "s": []}
    row = 0
    for cone in program.cones:
        if cone.kind == "nonnegative":
            for v in cone.variables:
                gr.append(row); gc.append(v); gv.append(-1.0)
                row += 1
            dims["l"] += len(cone.variables)
    for cone in program.cones:
        if cone.kind == "second-order":
            for v in cone.variables:
                gr.append(row); gc.append(v); gv.append(-1.0)
                row += 1
            dims["q"].append(len(cone.variables))
        elif cone.kind == "psd-2x2-as-soc":
            a, b, c = cone.variables
            # (a + c, 2b, a - c) in the second-order cone
            gr += [row, row, row + 1, row + 2, row + 2]
            gc += [a, c, b, a, c]
            gv += [-1.0, -1.0, -2.0, -1.0, 1.0]
            row += 3
            dims["q"].append(3)
    for cone in program.cones:
        if cone.kind == "psd":
            k = cone.psd_order
            idx = 0
            for i in range(k):
                for j in range(i, k):
                    v = cone.variables[idx]
                    idx += 1
                    # column-major k x k block; fill both triangles
                    gr.append(row + i + j * k); gc.append(v); gv.append(-1.0)
                    if i != j:
                        gr.append(row + j + i * k); gc.append(v); gv.append(-1.0)
            row += k * k
            dims["s"].append(k)
    return gr, gc, gv, row, dims


class CvxoptBackend(Backend):
    name = "cvxopt"
    capabilities = frozenset({"nonnegative", "second-order", "psd-2x2-as-soc", "psd"})

    def __init__(self, feastol=1e-9, abstol=1e-9, reltol=1e-9, maxiters=200):
        self.options = {"feastol": feastol, "abstol": abstol, "reltol": reltol,
                        "maxiters": maxiters, "show_progress": False}

    def _conelp(self, c, G, h, dims, A, b, opts):
        # conelp can hit a domain error in its line search once iterates sit on
        # the cone boundary; loosen towards the 1e-8 contract before giving up
        err = None
        tol = opts["feastol"]
        while True:
            trial = dict(opts, feastol=tol, abstol=max(tol, opts["abstol"]), reltol=max(tol, opts["reltol"]))
            try:
                return solvers.conelp(c, G, h, dims, A, b, options=trial)
            except (ValueError, ArithmeticError) as exc:
                err = exc
            if tol >= 1e-8:
                raise err
            tol = min(tol * 10, 1e-8)

    def solve_standard(self, program, **options):
        form = standard_form(program)
        nvar = program.num_variables
        gr, gc, gv, nrows, dims = _cone_rows(program)
        G = _sparse(gr, gc, gv, (nrows, nvar))
        h = cvxopt.matrix(0.0, (nrows, 1))
        Acoo = form.A.tocoo()
        A = _sparse(Acoo.row.tolist(), Acoo.col.tolist(), Acoo.data.tolist(), form.A.shape)
        b = cvxopt.matrix(form.b.reshape(-1, 1)) if form.b.size else cvxopt.matrix(0.0, (0, 1))
        c = cvxopt.matrix(form.c.reshape(-1, 1))
        opts = dict(self.options)
        opts.update(options)
        try:
            res = self._conelp(c, G, h, dims, A, b, opts)
        except (ValueError, ArithmeticError) as exc:
            return RawResult(NUMERICAL_FAILURE, message=str(exc))
        status = res["status"]
        iters = int(res.get("iterations", 0))
        y = -np.array(res["y"]).ravel() if res.get("y") is not None else None
        if status == "optimal":
            return RawResult(OPTIMAL, x=np.array(res["x"]).ravel(), y=y, iterations=iters)
        if status == "primal infeasible":
            return RawResult(INFEASIBLE, ray=y, iterations=iters)
        if status == "dual infeasible":
            return RawResult(UNBOUNDED, iterations=iters)
        # 'unknown': accept a usable iterate, or a usable ray, otherwise give up
        if res.get("x") is not None:
            pinf = res.get("primal infeasibility")
            dinf = res.get("dual infeasibility")
            gap = res.get("relative gap")
            if pinf is not None and dinf is not None and gap is not None:
                if pinf <= 1e-8 and dinf <= 1e-8 and gap <= 1e-7:
                    return RawResult(OPTIMAL, x=np.array(res["x"]).ravel(), y=y, iterations=iters,
                                     message="accepted near-optimal iterate")
        if y is not None and y.size:
            check = check_dual(program, y, "farkas", margin_tol=1e-10)
            if check.valid:
                return RawResult(INFEASIBLE, ray=check.y, iterations=iters,
                                 message="ray extracted from stalled iterate")
        return RawResult(NUMERICAL_FAILURE, iterations=iters, message=f"cvxopt status {status}")
