"""
Test script for the dense linear algebra kernels
Tests SPD factorization, triangular solves, rank filtering and the SPD operator.
"""

import sys

import numpy as np


def test_factor_and_solve():
    """Cholesky factor, reconstruction and solves"""
    print("=" * 80)
    print("LINALG TEST: Factor and Solve")
    print("=" * 80)
    from linalg import NotPositiveDefinite, factor_spd, solve_spd

    print("Test 1: Factoring diag(4, 9)...")
    F = factor_spd(np.diag([4.0, 9.0]))
    assert np.allclose(F.lower, np.diag([2.0, 3.0]))
    assert np.allclose(solve_spd(F, [4.0, 9.0]), [1.0, 1.0])
    print("✅ L = diag(2, 3), solve gives (1, 1)")

    print("Test 2: 2x2 SPD matrix...")
    M = np.array([[2.0, 1.0], [1.0, 2.0]])
    F = factor_spd(M)
    assert np.allclose(F.reconstruct(), M, atol=1e-14)
    assert np.allclose(solve_spd(F, [3.0, 3.0]), [1.0, 1.0])
    print("✅ Reconstruction and solve exact")

    print("Test 3: Random SPD reconstruction...")
    rng = np.random.default_rng(0)
    Q = rng.standard_normal((12, 12))
    M = Q @ Q.T + 12 * np.eye(12)
    F = factor_spd(M)
    assert np.max(np.abs(F.reconstruct() - M)) <= 1e-12 * np.max(np.abs(M))
    B = rng.standard_normal((12, 3))
    assert np.allclose(M @ solve_spd(F, B), B, atol=1e-10)
    print("✅ ||L L^T - M|| within 1e-12 relative; matrix right-hand sides solved")

    print("Test 4: Indefinite and singular matrices...")
    for bad in (np.array([[1.0, 2.0], [2.0, 1.0]]), np.array([[1.0, 1.0], [1.0, 1.0]])):
        try:
            factor_spd(bad)
            raise AssertionError("expected NotPositiveDefinite")
        except NotPositiveDefinite:
            pass
    print("✅ NotPositiveDefinite raised")
    print()


def test_shape_errors():
    """DimensionMismatch on inconsistent shapes"""
    print("=" * 80)
    print("LINALG TEST: Shape Errors")
    print("=" * 80)
    from linalg import DimensionMismatch, factor_spd, solve_spd

    print("Test 1: Non-square input...")
    try:
        factor_spd(np.ones((2, 3)))
        raise AssertionError("expected DimensionMismatch")
    except DimensionMismatch:
        print("✅ DimensionMismatch for 2x3")

    print("Test 2: Wrong right-hand side length...")
    F = factor_spd(np.eye(3))
    try:
        solve_spd(F, np.ones(2))
        raise AssertionError("expected DimensionMismatch")
    except DimensionMismatch:
        print("✅ DimensionMismatch for rhs length 2")
    print()


def test_independent_rows():
    """Order-preserving rank filtering"""
    print("=" * 80)
    print("LINALG TEST: Independent Rows")
    print("=" * 80)
    from linalg import independent_rows

    print("Test 1: Duplicate rows keep the first...")
    assert independent_rows(np.array([[1.0, 0.0], [1.0, 0.0]])) == [0]
    print("✅ [[1,0],[1,0]] -> [0]")

    print("Test 2: Independent rows all kept...")
    assert independent_rows(np.array([[1.0, 0.0], [0.0, 1.0]])) == [0, 1]
    print("✅ [[1,0],[0,1]] -> [0, 1]")

    print("Test 3: Dependent third row dropped...")
    J = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [1.0, 2.0, 1.0]])
    assert independent_rows(J) == [0, 1]
    print("✅ Row 2 = row 0 + row 1 dropped")

    print("Test 4: Empty and zero matrices...")
    assert independent_rows(np.zeros((0, 3))) == []
    assert independent_rows(np.zeros((2, 3))) == []
    print("✅ Nothing kept")

    print("Test 5: Kept rows have full row rank...")
    rng = np.random.default_rng(3)
    base = rng.standard_normal((4, 8))
    J = np.vstack([base, base[:2].sum(axis=0), base[3] * 2.0])
    kept = independent_rows(J)
    assert kept == [0, 1, 2, 3]
    assert np.linalg.matrix_rank(J[kept]) == len(kept)
    print("✅ Rank equals the number of kept rows")
    print()


def test_spd_operator():
    """Scaled-identity and explicit operators"""
    print("=" * 80)
    print("LINALG TEST: SPD Operator")
    print("=" * 80)
    from linalg import NotPositiveDefinite, SpdOperator

    print("Test 1: Scaled identity...")
    op = SpdOperator.scaled_identity(0.5, 3)
    assert op.is_scaled_identity
    assert np.allclose(op.solve(np.ones(3)), 2.0 * np.ones(3))
    assert np.allclose(op.to_dense(), 0.5 * np.eye(3))
    print("✅ (0.5 I)^-1 1 = 2")

    print("Test 2: Explicit matrix...")
    H = np.array([[2.0, 0.5], [0.5, 1.0]])
    op = SpdOperator.from_matrix(H)
    x = np.array([1.0, -1.0])
    assert np.allclose(op.apply(op.solve(x)), x)
    print("✅ H H^-1 x = x")

    print("Test 3: Non-positive scale...")
    try:
        SpdOperator.scaled_identity(0.0, 2)
        raise AssertionError("expected NotPositiveDefinite")
    except NotPositiveDefinite:
        print("✅ lambda = 0 rejected")
    print()


def run_all_tests():
    """Run all linalg tests"""
    tests = [test_factor_and_solve, test_shape_errors, test_independent_rows, test_spd_operator]
    failed = 0
    for t in tests:
        try:
            t()
        except Exception as e:
            failed += 1
            print(f"❌ {t.__name__} FAILED: {e}")
    print("=" * 80)
    print("✅ ALL LINALG TESTS PASSED" if not failed else f"❌ {failed} LINALG TESTS FAILED")
    print("=" * 80)
    return failed == 0


if __name__ == "__main__":
    sys.exit(0 if run_all_tests() else 1)
