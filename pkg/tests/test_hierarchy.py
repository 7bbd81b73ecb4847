import itertools
from fractions import Fraction
from math import comb

import numpy as np
import pytest
from scipy.optimize import linprog

from forms import form_cases
from sphere_hierarchy import conic_ir
from sphere_hierarchy.cones import ConeKind, is_dd, is_psd, is_sdd, verify_certificate
from sphere_hierarchy.gram import gram_system
from sphere_hierarchy.hierarchy import (FAILED, OPTIMAL, SKIPPED, LevelSpec, Membership,
                                        assemble_level, build_level, count_constraints,
                                        count_sequence, is_r_member, lift_blocks, lift_gram,
                                        quadratic_gram, run_table, sampled_minimum, solve_level,
                                        sphere_points)
from sphere_hierarchy.polynomial import CapExceeded, evaluate_many, parse_polynomial

DD, SDD, PSD = ConeKind.DD, ConeKind.SDD, ConeKind.PSD


class TestLevelSpec:
    def test_rejects(self):
        with pytest.raises(ValueError):
            LevelSpec(parse_polynomial("x1^2 + x2", 2), DD, 0)
        with pytest.raises(ValueError):
            LevelSpec(parse_polynomial("x1^3", 1), DD, 0)
        with pytest.raises(ValueError):
            LevelSpec(parse_polynomial("0", 2), DD, 0)
        with pytest.raises(CapExceeded):
            LevelSpec(parse_polynomial("x1^2", 1), DD, 11)


class TestBuildLevel:
    def test_dd_r0(self, eq2):
        prog = build_level(LevelSpec(eq2, DD, 0))
        stats = prog.stats()
        # gamma + 6 Gram entries + 3 slacks + 9 surplus variables
        assert stats["variables"] == 1 + 6 + 3 + 9
        assert stats["soc"] == 0 and stats["psd"] == 0
        assert stats["equalities"] == 6 + 9

    def test_sdd_counts(self, eq2):
        assert build_level(LevelSpec(eq2, SDD, 0)).stats()["soc"] == 3
        assert build_level(LevelSpec(eq2, SDD, 1)).stats()["soc"] == 15

    def test_psd(self, eq2):
        assert build_level(LevelSpec(eq2, PSD, 1)).stats()["psd"] == 1

    def test_equality_rows_match_monomials(self, eq2):
        for r in range(3):
            level = assemble_level(LevelSpec(eq2, PSD, r))
            assert len(level.program.rows) == comb(3 + 2 + 2 * r - 1, 2)


class TestSolveLevel:
    def test_eq2_sos(self, eq2):
        res = solve_level(LevelSpec(eq2, PSD, 0))
        assert res.status == OPTIMAL
        assert abs(res.bound) <= 1e-6
        assert res.solver == "eigenvalue"

    @pytest.mark.parametrize("cone", [DD, SDD])
    def test_eq2_r0(self, eq2, cone):
        res = solve_level(LevelSpec(eq2, cone, 0))
        assert res.status == OPTIMAL
        assert res.bound == pytest.approx(-1.0, abs=1e-5)
        assert res.verification.passed

    def test_eq2_dd_independent_lp(self, eq2):
        # oracle: plain scipy LP over (gamma, q12, q13, q23, m12, m13, m23)
        # with Q = J - gamma*I off-diagonals fixed at 1: maximize gamma s.t. 1 - gamma >= 2
        c = np.zeros(7)
        c[0] = -1
        A_ub, b_ub = [], []
        pairs = [(0, 1), (0, 2), (1, 2)]
        for k in range(3):
            # diag_k = 1 - gamma >= sum of m over pairs touching k
            row = np.zeros(7)
            row[0] = 1
            for p, (i, j) in enumerate(pairs):
                if k in (i, j):
                    row[4 + p] = 1
            A_ub.append(row)
            b_ub.append(1)
        for p in range(3):
            for sign in (1, -1):
                row = np.zeros(7)
                row[1 + p] = sign
                row[4 + p] = -1
                A_ub.append(row)
                b_ub.append(0)
        A_eq = np.zeros((3, 7))
        A_eq[:, 1:4] = np.eye(3)
        lp = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1, 1, 1],
                     bounds=[(None, None)] * 4 + [(0, None)] * 3)
        assert -lp.fun == pytest.approx(-1.0, abs=1e-9)
        assert solve_level(LevelSpec(eq2, DD, 0)).bound == pytest.approx(-lp.fun, abs=1e-6)

    def test_eq2_higher_levels(self, eq2):
        for cone in (DD, SDD):
            for r in (1, 2):
                assert solve_level(LevelSpec(eq2, cone, r)).bound <= -1 + 1e-6

    @pytest.mark.parametrize("cone", list(ConeKind))
    @pytest.mark.parametrize("r", [0, 1])
    def test_sum_of_squares_coordinates(self, cone, r):
        p = parse_polynomial("x1^2+x2^2+x3^2", 3)
        assert solve_level(LevelSpec(p, cone, r)).bound == pytest.approx(1.0, abs=1e-6)

    def test_quartic_dd_grid_oracle(self):
        # brute force over (gamma, q13): Gram over (x1^2, x1x2, x2^2) with
        # Q11 = Q33 = 1 - gamma, Q22 = -2 gamma - 2 q13, all else 0
        best = None
        grid = [Fraction(k, 20) for k in range(-40, 41)]
        for gamma in grid:
            for q in grid:
                Q = np.array([[1 - gamma, 0, q], [0, -2 * gamma - 2 * q, 0], [q, 0, 1 - gamma]],
                             dtype=float)
                if is_dd(Q):
                    best = gamma if best is None else max(best, gamma)
        assert best == Fraction(1, 2)
        p = parse_polynomial("x1^4+x2^4", 2)
        assert solve_level(LevelSpec(p, DD, 0)).bound == pytest.approx(float(best), abs=1e-6)

    def test_dual_bound_brackets(self, eq2):
        res = solve_level(LevelSpec(eq2, SDD, 1))
        assert res.dual_bound is not None
        assert res.dual_bound >= res.bound - 1e-6
        assert res.dual_bound - res.bound <= 1e-6

    def test_highs_matches_cvxopt(self):
        p = parse_polynomial("x1^4 - x1^2*x2^2 + 2*x2^4 + x1*x2^3", 2)
        for r in range(2):
            a = solve_level(LevelSpec(p, DD, r), "highs").bound
            b = solve_level(LevelSpec(p, DD, r), "cvxopt").bound
            assert a == pytest.approx(b, abs=1e-6)

    def test_presolve_agrees(self, eq2):
        a = solve_level(LevelSpec(eq2, SDD, 1), presolve=True).bound
        b = solve_level(LevelSpec(eq2, SDD, 1), presolve=False).bound
        assert a == pytest.approx(b, abs=1e-6)

    def test_psd_needs_backend(self):
        p = parse_polynomial("x1^4+x2^4", 2)
        with pytest.raises(conic_ir.CapabilityError):
            solve_level(LevelSpec(p, PSD, 0), "highs")


class TestMembership:
    @pytest.mark.parametrize("r", [0, 1, 2])
    def test_prop1_not_sdsos(self, prop1, r):
        res = is_r_member(prop1, SDD, r)
        assert res.answer == Membership.FALSE
        assert res.farkas.valid and res.farkas.kind == "farkas"

    def test_prop1_psd(self, prop1):
        G = quadratic_gram(prop1)
        assert is_psd(G)
        assert np.linalg.eigvalsh(G).min() == pytest.approx(0.5)
        assert is_r_member(prop1, PSD, 0).answer == Membership.TRUE

    def test_true_with_certificate(self):
        p = parse_polynomial("x1^2 + x2^2", 2)
        res = is_r_member(p, DD, 1)
        assert res.answer == Membership.TRUE
        assert verify_certificate(p, 1, 0.0, res.certificate).passed

    def test_eq2_dd_false(self, eq2):
        assert is_r_member(eq2, "dsos", 0).answer == Membership.FALSE

    def test_square_of_difference(self):
        p = parse_polynomial("(x1 - x2)^2", 2)
        assert is_r_member(p, DD, 0).answer == Membership.TRUE

    def test_negative_quadratic(self):
        p = parse_polynomial("x1^2 - x2^2", 2)
        assert is_r_member(p, PSD, 3).answer == Membership.FALSE


class TestCounts:
    def test_examples(self):
        c = count_constraints(3, 1, 0)
        assert (c["N_h"], c["soc_blocks"], c["N_paper"]) == (3, 3, 4)
        c = count_constraints(3, 1, 2)
        assert (c["N_h"], c["soc_blocks"]) == (10, 45)

    def test_sequence(self):
        soc = [c["soc_blocks"] for c in count_sequence(3, 1, 6)]
        assert soc == [comb(comb(r + 3, 2), 2) for r in range(7)]
        assert soc == [3, 15, 45, 105, 210, 378, 630]

    def test_n_one(self):
        for d in (1, 2, 5):
            c = count_constraints(1, d, 3)
            assert c["N_h"] == 1 and c["soc_blocks"] == 0

    def test_matches_built_program(self):
        p = parse_polynomial("x1^4 + x2^4 + x3^4", 3)
        for r in range(3):
            c = count_constraints(3, 2, r)
            assert build_level(LevelSpec(p, SDD, r)).stats()["soc"] == c["soc_blocks"]
            assert gram_system(3, 2 + r).size == c["N_h"]

    def test_bad_input(self):
        with pytest.raises(ValueError):
            count_constraints(0, 1, 0)
        with pytest.raises(CapExceeded):
            count_constraints(3, 1, 11)


def test_lift_preserves_cones():
    rng = np.random.default_rng(8)
    for _ in range(5):
        B = rng.normal(size=(3, 3))
        Q = B @ B.T
        L = lift_gram(Q, 3, 1, 2)
        assert L.shape == (10, 10)
        assert np.linalg.eigvalsh(L).min() >= -1e-9
    J = np.ones((3, 3))
    assert is_dd(lift_gram(J + np.eye(3), 3, 1, 1))
    assert is_sdd(lift_gram(J + np.eye(3), 3, 1, 1)).member


def test_lift_matches_polynomial(eq2):
    from sphere_hierarchy.gram import reconstruct
    from sphere_hierarchy.polynomial import sphere_power
    G = quadratic_gram(eq2)
    L = lift_gram(G, 3, 1, 2)
    assert reconstruct(gram_system(3, 3), L) == eq2 * sphere_power(3, 2)


def test_lift_blocks_sum(eq2):
    from sphere_hierarchy.cones import SddBlock, block_sum
    blocks = [SddBlock(0, 1, 1, 1, 1), SddBlock(0, 2, 1, 1, 1), SddBlock(1, 2, 1, 1, 1)]
    lifted = lift_blocks(blocks, 3, 1, 1)
    L = lift_gram(np.ones((3, 3)) + np.eye(3), 3, 1, 1)
    assert np.allclose(block_sum(lifted, 6), L)


QUADRATICS = form_cases(11, 8, 3, 2)
QUARTICS = form_cases(12, 4, 3, 4)


@pytest.mark.parametrize("p", QUADRATICS + QUARTICS, ids=str)
def test_sandwich_and_soundness(p):
    sampled = sampled_minimum(p)
    bounds = {}
    for cone in ConeKind:
        res = solve_level(LevelSpec(p, cone, 0))
        assert res.status == OPTIMAL
        assert res.verification.passed and res.verification.residual <= 1e-6
        bounds[cone] = res.bound
        assert res.bound <= sampled + 1e-6
    assert bounds[DD] <= bounds[SDD] + 1e-6
    assert bounds[SDD] <= bounds[PSD] + 1e-6


@pytest.mark.parametrize("p", QUARTICS[:3], ids=str)
@pytest.mark.parametrize("cone", [DD, SDD])
def test_monotone_in_r(p, cone):
    values = [solve_level(LevelSpec(p, cone, r)).bound for r in range(3)]
    for lo, hi in zip(values, values[1:]):
        assert hi >= lo - 1e-6


@pytest.mark.parametrize("c", [0.5, 2, 10])
@pytest.mark.parametrize("cone", list(ConeKind))
def test_scaling(c, cone):
    p = parse_polynomial("x1^4 - x1^2*x2^2 + 2*x2^4 + x1*x2^3", 2)
    base = solve_level(LevelSpec(p, cone, 0)).bound
    scaled = solve_level(LevelSpec(p * Fraction(c), cone, 0)).bound
    assert scaled == pytest.approx(c * base, rel=1e-6, abs=1e-7)


@pytest.mark.parametrize("p", QUADRATICS, ids=str)
def test_shortcut_matches_sdp(p):
    for r in (0, 1):
        fast = solve_level(LevelSpec(p, PSD, r)).bound
        slow = solve_level(LevelSpec(p, PSD, r), shortcut=False).bound
        assert fast == pytest.approx(slow, abs=1e-6)


def test_sphere_points():
    pts = sphere_points(3, 500, seed=4)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1)
    assert np.array_equal(pts, sphere_points(3, 500, seed=4))
    assert not np.array_equal(pts, sphere_points(3, 500, seed=5))


class TestRunTable:
    def test_eq2(self, eq2):
        rows = run_table(eq2, {"dsos", "sdsos", "sos"}, 2)
        assert [(r.cone, r.spec.r) for r in rows] == [(c, r) for c in ConeKind for r in range(3)]
        for row in rows:
            assert row.status == OPTIMAL
            assert row.p_star_hint == pytest.approx(0.0, abs=1e-3)
            if row.cone == PSD:
                assert abs(row.bound) <= 1e-6
            else:
                assert row.bound <= -1 + 1e-6

    def test_skipped_cell(self):
        p = parse_polynomial("x1^4 + x2^4", 2)
        rows = run_table(p, {"sos", "dsos"}, 0, backend="highs")
        assert [r.status for r in rows] == [OPTIMAL, SKIPPED]

    def test_parallel_same(self, eq2):
        a = run_table(eq2, {"dsos", "sdsos"}, 1)
        b = run_table(eq2, {"dsos", "sdsos"}, 1, workers=4)
        assert [r.bound for r in a] == pytest.approx([r.bound for r in b], abs=1e-9)
