"""LP-only backend using the HiGHS solvers shipped with SciPy."""
import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix, vstack

from ..conic_ir import (INFEASIBLE, NUMERICAL_FAILURE, OPTIMAL, UNBOUNDED, Backend,
                        RawResult, standard_form)


class HighsBackend(Backend):
    name = "highs"
    capabilities = frozenset({"nonnegative"})

    def __init__(self, method="highs", tol=1e-10):
        self.method = method
        self.tol = tol

    def _options(self):
        return {"primal_feasibility_tolerance": self.tol,
                "dual_feasibility_tolerance": self.tol}

    def solve_standard(self, program, **options):
        form = standard_form(program)
        bounds = [(None, None) if f else (0, None) for f in form.free]
        res = linprog(form.c, A_eq=form.A if form.b.size else None,
                      b_eq=form.b if form.b.size else None,
                      bounds=bounds, method=self.method, options=self._options())
        if res.status == 0:
            y = np.asarray(res.eqlin.marginals) if form.b.size else np.zeros(0)
            return RawResult(OPTIMAL, x=np.asarray(res.x), y=y, iterations=int(res.nit))
        if res.status == 2:
            return RawResult(INFEASIBLE, ray=self._farkas_ray(form), iterations=int(res.nit))
        if res.status == 3:
            return RawResult(UNBOUNDED, iterations=int(res.nit))
        return RawResult(NUMERICAL_FAILURE, iterations=int(res.nit), message=res.message)

    def _farkas_ray(self, form):
        # max b^T y  s.t.  (A^T y)_j <= 0 on nonnegative columns,
        #                  (A^T y)_j == 0 on free columns,  b^T y <= 1
        if not form.b.size:
            return None
        At = form.A.T.tocsr()
        ineq = At[~form.free]
        eq = At[form.free]
        A_ub = ineq if ineq.shape[0] else None
        b_ub = np.zeros(ineq.shape[0]) if ineq.shape[0] else None
        norm_row = csr_matrix(form.b.reshape(1, -1))
        A_ub = norm_row if A_ub is None else vstack([A_ub, norm_row])
        b_ub = np.array([1.0]) if b_ub is None else np.append(b_ub, 1.0)
        res = linprog(-form.b, A_ub=A_ub, b_ub=b_ub,
                      A_eq=eq if eq.shape[0] else None,
                      b_eq=np.zeros(eq.shape[0]) if eq.shape[0] else None,
                      bounds=[(None, None)] * form.b.size, method=self.method,
                      options=self._options())
        if res.status == 0 and -res.fun > 0.5:
            return np.asarray(res.x)
        return None
