import itertools
import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest

import sphere_hierarchy
from sphere_hierarchy import conic_ir
from sphere_hierarchy.cones import (Certificate, ConeKind, SddBlock, add_gram_variables, block_sum,
                                    encode_dd, encode_sdd, is_dd, is_psd, is_sdd, sdd_violation,
                                    verify_certificate)

J = np.ones((3, 3))
I3 = np.eye(3)
SCHEMA = json.loads((Path(sphere_hierarchy.__file__).parent / "schemas" / "certificate.schema.json").read_text())


def bundle_for(encoder, N):
    b = conic_ir.ProgramBuilder()
    q = add_gram_variables(b, N)
    return b, encoder(b, q)


def test_cone_order():
    assert ConeKind.DD < ConeKind.SDD < ConeKind.PSD
    assert ConeKind.parse("dsos") is ConeKind.DD
    assert ConeKind.parse("sdd") is ConeKind.SDD
    assert ConeKind.parse("sos") is ConeKind.PSD
    with pytest.raises(ValueError):
        ConeKind.parse("tsos")


class TestEncoders:
    def test_dd_one(self):
        b, bundle = bundle_for(encode_dd, 1)
        assert bundle.slack_variables == []
        assert bundle.inequality_rows == 1

    @pytest.mark.parametrize("N", [2, 3, 5])
    def test_dd_counts(self, N):
        b, bundle = bundle_for(encode_dd, N)
        pairs = N * (N - 1) // 2
        assert len(bundle.slack_variables) == pairs
        assert bundle.inequality_rows == 2 * pairs + N
        assert len(b.rows) == 2 * pairs + N

    def test_dd_three(self):
        _, bundle = bundle_for(encode_dd, 3)
        assert len(bundle.slack_variables) == 3
        assert bundle.inequality_rows == 9

    @pytest.mark.parametrize("q11,q12,q22", [(1, 0.5, 1), (1, 1, 1), (1, 1.5, 2), (2, -1.5, 1), (0, 0, 0)])
    def test_dd_two_feasibility(self, q11, q12, q22):
        # fix Q and ask whether the LP constraints can be met
        b = conic_ir.ProgramBuilder()
        q = add_gram_variables(b, 2)
        for (i, j), v in {(0, 0): q11, (0, 1): q12, (1, 1): q22}.items():
            b.add_equality([(q[i, j], 1.0)], v)
        encode_dd(b, q)
        sol = conic_ir.solve(b.build(), sphere_hierarchy.backends.get_backend("highs"))
        expected = q11 >= abs(q12) and q22 >= abs(q12)
        assert (sol.status == conic_ir.OPTIMAL) == expected

    def test_sdd_three(self):
        b, bundle = bundle_for(encode_sdd, 3)
        assert bundle.soc_constraints == 3
        block_vars = [v for blk in bundle.blocks.values() for v in blk]
        assert len(block_vars) == 9
        assert bundle.equality_rows == 6
        assert sum(1 for c in b.cones if c.kind == "psd-2x2-as-soc") == 3

    def test_sdd_one(self):
        b, bundle = bundle_for(encode_sdd, 1)
        assert bundle.soc_constraints == 0
        assert [c.kind for c in b.cones] == ["nonnegative"]

    def test_sdd_ten(self):
        _, bundle = bundle_for(encode_sdd, 10)
        assert bundle.soc_constraints == 45


class TestMembership:
    def test_is_dd(self):
        assert is_dd(np.eye(4))
        assert not is_dd(np.array([[1.0, 2], [2, 1]]))
        assert is_dd(J + I3)
        assert not is_dd(J)

    def test_is_dd_asymmetric(self):
        with pytest.raises(ValueError):
            is_dd(np.array([[1.0, 0.5], [0.0, 1]]))

    def test_three_block_decomposition_of_J_plus_I(self):
        # oracle: the explicit decomposition, summed entry by entry
        blocks = [SddBlock(0, 1, 1, 1, 1), SddBlock(0, 2, 1, 1, 1), SddBlock(1, 2, 1, 1, 1)]
        total = np.zeros((3, 3))
        for blk in blocks:
            for (u, v), val in {(blk.i, blk.i): blk.a, (blk.j, blk.j): blk.c,
                                (blk.i, blk.j): blk.b, (blk.j, blk.i): blk.b}.items():
                total[u, v] += val
        assert np.array_equal(total, J + I3)
        assert all(np.linalg.eigvalsh(b.matrix()).min() >= -1e-15 for b in blocks)

    def test_is_sdd_J_plus_I(self):
        check = is_sdd(J + I3)
        assert check.member
        mismatch, worst = sdd_violation(J + I3, check.blocks)
        assert mismatch <= 1e-8 and worst <= 1e-8
        assert sorted((b.i, b.j) for b in check.blocks) == [(0, 1), (0, 2), (1, 2)]
        for b in check.blocks:
            assert b.a == pytest.approx(1, abs=1e-6)
            assert b.b == pytest.approx(1, abs=1e-12)
            assert b.c == pytest.approx(1, abs=1e-6)

    def test_is_sdd_negative(self):
        check = is_sdd(np.array([[1.0, 2], [2, 1]]))
        assert not check.member
        assert check.dual.valid and check.dual.bound < 0

    def test_J_is_not_sdd(self):
        assert not is_sdd(J).member

    def test_dd_implies_sdd(self):
        A = np.array([[3.0, 1, -1, 0.5], [1, 2.5, 0.5, 1], [-1, 0.5, 2, -0.5], [0.5, 1, -0.5, 2]])
        assert is_dd(A)
        assert is_sdd(A).member

    def test_is_psd(self):
        assert is_psd(J)
        assert not is_psd(J - 0.1 * I3)
        assert is_psd(J + 0.5 * I3)
        assert np.linalg.eigvalsh(J + 0.5 * I3).min() == pytest.approx(0.5)

    def test_one_by_one(self):
        assert is_sdd(np.array([[2.0]])).member
        assert not is_sdd(np.array([[-1.0]])).member


GRID = [-2, -1, 0, 1, 2]


@pytest.mark.parametrize("a,b,c", list(itertools.product(GRID, GRID, GRID)))
def test_two_by_two_sdd_equals_psd(a, b, c):
    A = np.array([[a, b], [b, c]], dtype=float)
    assert is_sdd(A).member == is_psd(A)


def random_matrix(rng, N):
    kind = rng.integers(4)
    if kind == 0:  # dd
        B = rng.normal(size=(N, N))
        B = (B + B.T) / 2
        np.fill_diagonal(B, 0)
        return B + np.diag(np.abs(B).sum(axis=1) + rng.uniform(0, 0.5, N))
    if kind == 1:  # sum of random psd 2x2 blocks
        A = np.zeros((N, N))
        for i, j in itertools.combinations(range(N), 2):
            if rng.random() < 0.6:
                v = rng.normal(size=2)
                M = np.outer(v, v)
                A[np.ix_([i, j], [i, j])] += M
        return A + 1e-3 * np.eye(N)
    if kind == 2:  # psd
        B = rng.normal(size=(N, N))
        return B @ B.T
    B = rng.normal(size=(N, N))
    return (B + B.T) / 2


def test_inclusion_chain_random():
    rng = np.random.default_rng(2024)
    seen = {"dd": 0, "sdd": 0, "psd": 0}
    for _ in range(200):
        A = random_matrix(rng, int(rng.integers(2, 7)))
        dd, psd = is_dd(A), is_psd(A)
        sdd = is_sdd(A)
        if dd:
            assert sdd.member
        if sdd.member:
            assert psd
            mismatch, worst = sdd_violation(A, sdd.blocks)
            assert mismatch <= 1e-8 and worst <= 1e-8
        seen["dd"] += dd
        seen["sdd"] += sdd.member
        seen["psd"] += psd
    assert seen["dd"] > 0 and seen["sdd"] > seen["dd"] and seen["psd"] > seen["sdd"]


@pytest.mark.parametrize("scale", [0.01, 3.0, 100.0])
def test_positive_scaling(scale):
    rng = np.random.default_rng(5)
    for _ in range(10):
        A = random_matrix(rng, 4)
        assert is_dd(scale * A) == is_dd(A)
        assert is_psd(scale * A) == is_psd(A)
        assert is_sdd(scale * A).member == is_sdd(A).member


class TestVerifyCertificate:
    def test_dd_pass(self, eq2):
        report = verify_certificate(eq2, 0, -1.0, Certificate(ConeKind.DD, J + I3, -1.0, 0))
        assert report.passed
        assert report.residual == 0.0

    def test_dd_cone_fail(self, eq2):
        report = verify_certificate(eq2, 0, 0.0, Certificate(ConeKind.DD, J, 0.0, 0))
        assert report.residual == 0.0
        assert not report.cone_ok and not report.passed

    def test_psd_pass(self, eq2):
        assert verify_certificate(eq2, 0, 0.0, Certificate(ConeKind.PSD, J, 0.0, 0)).passed

    def test_sdd_pass_and_tamper(self, eq2):
        blocks = [SddBlock(0, 1, 1, 1, 1), SddBlock(0, 2, 1, 1, 1), SddBlock(1, 2, 1, 1, 1)]
        cert = Certificate(ConeKind.SDD, J + I3, -1.0, 0, blocks)
        assert verify_certificate(eq2, 0, -1.0, cert).passed
        bad = Certificate(ConeKind.SDD, J + I3, -1.0, 0, blocks[:2])
        report = verify_certificate(eq2, 0, -1.0, bad)
        assert not report.passed and report.block_mismatch > 0.5

    def test_residual_fail(self, eq2):
        Q = J + I3
        Q[0, 1] = Q[1, 0] = 1.1
        report = verify_certificate(eq2, 0, -1.0, Certificate(ConeKind.DD, Q, -1.0, 0))
        assert report.residual == pytest.approx(0.2)
        assert not report.passed

    def test_dimension(self, eq2):
        with pytest.raises(ValueError):
            verify_certificate(eq2, 1, -1.0, Certificate(ConeKind.DD, J + I3, -1.0, 1))

    def test_json_round_trip(self):
        blocks = [SddBlock(0, 1, 1, 1, 1), SddBlock(0, 2, 1, 1, 1), SddBlock(1, 2, 1, 1, 1)]
        cert = Certificate(ConeKind.SDD, J + I3 + 1e-13, -1.0 + 1e-13, 0, blocks)
        text = cert.to_json()
        data = json.loads(text)
        jsonschema.validate(data, SCHEMA)
        back = Certificate.from_json(text)
        assert np.array_equal(back.Q, cert.Q)
        assert back.gamma == cert.gamma and back.blocks == cert.blocks
        assert "2.0000000000000999" in text  # 17 significant digits
