"""
Test script for the sensitivity layer
Tests active-set detection, Jacobian assembly, the reduced Schur gradient,
the LP specialization, normal injection and the dense projector oracles.
"""

import sys

import numpy as np


def _solution(z, y):
    from solver import PrimalDualSolution, SolveStatus
    return PrimalDualSolution(z=np.asarray(z, dtype=float), y=np.asarray(y, dtype=float),
                              status=SolveStatus.SOLVED, stationarity_residual=0.0, primal_residual=0.0)


def test_detect_active():
    """Complementary slackness test"""
    print("=" * 80)
    print("SENSITIVITY TEST: Active-Set Detection")
    print("=" * 80)
    from sensitivity import detect_active
    from solver import ConvexInstance, ScaledIdentity, SolveStatus, SolverError, solve

    inst = ConvexInstance(n=3, curvature=ScaledIdentity(1.0), G=np.eye(3),
                          l=np.zeros(3), u=np.ones(3))

    print("Test 1: Lower, upper and inactive rows...")
    act = detect_active(inst, _solution([0.0, 1.0, 0.5], [-0.5, 0.5, 0.0]))
    assert act.lower == (0,) and act.upper == (1,)
    assert act.active == (0, 1)
    assert list(act.mask()) == [True, True, False]
    print(f"✅ lower={act.lower}, upper={act.upper}")

    print("Test 2: Pinned row (l = u)...")
    pinned = ConvexInstance(n=1, curvature=ScaledIdentity(1.0), G=np.eye(1),
                            l=np.array([0.5]), u=np.array([0.5]))
    act = detect_active(pinned, _solution([0.5], [0.0]))
    assert act.pinned == (0,) and act.lower == () and act.upper == ()
    print("✅ Row classified as equality")

    print("Test 3: Binding rows with vanishing multipliers...")
    act = detect_active(inst, _solution([0.0, 1.0, 0.5], [0.0, 1e-8, 0.0]))
    assert act.lower == () and act.upper == () and act.pinned == ()
    print("✅ Touching a bound without a multiplier is not active")

    print("Test 4: Detection on a solver output...")
    inst = inst.with_cost([1.0, -2.0, -0.5])
    sol = solve(inst)
    act = detect_active(inst, sol)
    assert act.lower == (0,) and act.upper == (1,)
    print(f"✅ lower={act.lower}, upper={act.upper}")

    print("Test 5: Unsolved status rejected...")
    bad = _solution([0.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    bad.status = SolveStatus.MAX_ITERATIONS
    try:
        detect_active(inst, bad)
        raise AssertionError("expected SolverError")
    except SolverError:
        print("✅ SolverError")
    print()


def test_assemble_jacobian():
    """Stacking and rank filtering"""
    print("=" * 80)
    print("SENSITIVITY TEST: Jacobian Assembly")
    print("=" * 80)
    from sensitivity import ActiveSet, assemble_jacobian
    from solver import ConvexInstance, ScaledIdentity

    print("Test 1: Equalities only...")
    inst = ConvexInstance(n=2, curvature=ScaledIdentity(1.0), A=np.array([[1.0, 1.0]]), b=np.ones(1),
                          G=np.eye(2), l=np.zeros(2), u=np.ones(2))
    jac = assemble_jacobian(inst, ActiveSet(lower=(), upper=(), equality_count=1, m=2))
    assert np.allclose(jac.J, [[1.0, 1.0]]) and jac.k == 1
    print("✅ J = A")

    print("Test 2: One active inequality, no equalities...")
    G = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, -1.0]])
    inst = ConvexInstance(n=2, curvature=ScaledIdentity(1.0), G=G, l=np.zeros(3), u=np.ones(3))
    jac = assemble_jacobian(inst, ActiveSet(lower=(2,), upper=(), equality_count=0, m=3))
    assert np.allclose(jac.J, [[1.0, -1.0]])
    assert jac.row_origin[0].kind == "lower" and jac.row_origin[0].index == 2
    print("✅ J = row 2 of G")

    print("Test 3: Dependent inequality dropped...")
    inst = ConvexInstance(n=2, curvature=ScaledIdentity(1.0), A=np.array([[1.0, 0.0]]), b=np.zeros(1),
                          G=np.array([[2.0, 0.0]]), l=np.zeros(1), u=np.ones(1))
    jac = assemble_jacobian(inst, ActiveSet(lower=(0,), upper=(), equality_count=1, m=1))
    assert np.allclose(jac.J, [[1.0, 0.0]])
    assert len(jac.dropped) == 1 and jac.dropped[0].kind == "lower"
    print("✅ Only [1, 0] kept; dropped row recorded")
    print()


def test_pear_gradient():
    """Reduced Schur gradient"""
    print("=" * 80)
    print("SENSITIVITY TEST: PEAR Gradient")
    print("=" * 80)
    from linalg import SpdOperator
    from sensitivity import pear_gradient

    print("Test 1: H = I, J = [1, 0], e = (1, 1)...")
    pg = pear_gradient(SpdOperator.from_matrix(np.eye(2)), np.array([[1.0, 0.0]]), [1.0, 1.0])
    assert np.allclose(pg.g, [0.0, 1.0], atol=1e-12)
    assert np.allclose(pg.n_vec, [1.0, 0.0], atol=1e-12)
    print(f"✅ g = {pg.g}, n = {pg.n_vec}")

    print("Test 2: k = 0, H = 2I, e = (2, 4)...")
    pg = pear_gradient(SpdOperator.scaled_identity(2.0, 2), np.zeros((0, 2)), [2.0, 4.0])
    assert np.allclose(pg.g, [1.0, 2.0]) and np.allclose(pg.n_vec, 0.0)
    print(f"✅ g = {pg.g}")

    print("Test 3: H = diag(1, 2), J = [1, 1], e = (1, 0)...")
    J = np.array([[1.0, 1.0]])
    pg = pear_gradient(SpdOperator.from_matrix(np.diag([1.0, 2.0])), J, [1.0, 0.0])
    assert np.allclose(pg.g, [1.0 / 3.0, -1.0 / 3.0], atol=1e-12)
    assert abs(float(J @ pg.g)) <= 1e-12
    print(f"✅ g = {pg.g}, J g = 0")

    print("Test 4: Tangency and decomposition on random inputs...")
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(3, 15))
        k = int(rng.integers(1, n))
        Q = rng.standard_normal((n, n))
        H = Q @ Q.T / n + 0.5 * np.eye(n)
        J = rng.standard_normal((k, n))
        e = rng.standard_normal(n)
        pg = pear_gradient(SpdOperator.from_matrix(H), J, e)
        assert np.max(np.abs(J @ pg.g)) <= 1e-6 * (1 + np.max(np.abs(pg.g)))
        assert np.allclose(pg.g + pg.n_vec, np.linalg.solve(H, e), atol=1e-10)
    print("✅ J g = 0 and g + n = H^-1 e on 50 instances")

    print("Test 5: Duplicated rows without filtering...")
    from sensitivity import SchurSingular, dense_projector
    try:
        dense_projector(np.eye(2), np.array([[1.0, 0.0], [1.0, 0.0]]))
        raise AssertionError("expected SchurSingular")
    except SchurSingular:
        print("✅ Dense oracle raises SchurSingular")
    print()


def test_lp_path_and_injection():
    """Scaled-identity path and normal injection"""
    print("=" * 80)
    print("SENSITIVITY TEST: LP Path and Normal Injection")
    print("=" * 80)
    from linalg import SpdOperator
    from sensitivity import PearGradient, normal_inject, pear_gradient, pear_gradient_lp

    J = np.array([[1.0, 0.0]])

    print("Test 1: lambda = 1 and lambda = 0.1...")
    assert np.allclose(pear_gradient_lp(1.0, J, [1.0, 1.0]).g, [0.0, 1.0])
    assert np.allclose(pear_gradient_lp(0.1, J, [1.0, 1.0]).g, [0.0, 10.0])
    assert np.allclose(pear_gradient_lp(0.1, np.zeros((0, 2)), [1.0, 0.0]).g, [10.0, 0.0])
    print("✅ (0, 1), (0, 10) and (10, 0)")

    print("Test 2: LP path matches the general path...")
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(3, 20))
        k = int(rng.integers(1, n))
        lam = float(rng.uniform(0.01, 2.0))
        Jr = rng.standard_normal((k, n))
        e = rng.standard_normal(n)
        a = pear_gradient_lp(lam, Jr, e)
        b = pear_gradient(SpdOperator.scaled_identity(lam, n), Jr, e)
        worst = max(worst, float(np.max(np.abs(a.g - b.g))) / (1 + float(np.max(np.abs(b.g)))))
    assert worst <= 1e-8
    print(f"✅ Worst relative deviation {worst:.1e}")

    print("Test 3: Injection arithmetic...")
    pg = PearGradient(g=np.array([0.0, 1.0]), n_vec=np.array([1.0, 0.0]), v=np.ones(1))
    assert np.allclose(normal_inject(pg, 0.1), [0.1, 1.0])
    assert np.allclose(normal_inject(pg, 0.0), pg.g)
    pg = PearGradient(g=np.array([3.0, 4.0]), n_vec=np.array([0.0, 2.0]), v=np.ones(1))
    assert np.allclose(normal_inject(pg, 0.5), [3.0, 6.5])
    pg = PearGradient(g=np.array([3.0, 4.0]), n_vec=np.zeros(2), v=np.zeros(0))
    assert np.allclose(normal_inject(pg, 0.5), [3.0, 4.0])
    print("✅ (0.1, 1), unchanged at beta = 0, (3, 6.5), unchanged with zero normal")
    print()


def test_dense_oracles():
    """Explicit projectors"""
    print("=" * 80)
    print("SENSITIVITY TEST: Dense Oracles")
    print("=" * 80)
    from sensitivity import dense_projector, tangent_projector

    J = np.array([[1.0, 0.0]])
    assert np.allclose(dense_projector(np.eye(2), J), [[0.0, 0.0], [0.0, 1.0]])
    assert np.allclose(tangent_projector(np.eye(2), J), np.diag([0.0, 1.0]))
    print("✅ Coordinate projector for H = I, J = [1, 0]")

    H = np.diag([2.0, 4.0])
    assert np.allclose(dense_projector(H, np.zeros((0, 2))), np.linalg.inv(H))
    print("✅ Empty J gives H^-1")

    H = np.diag([1.0, 2.0])
    J = np.array([[1.0, 1.0]])
    P = dense_projector(H, J)
    Pi = tangent_projector(H, J)
    assert np.allclose(P @ [1.0, 0.0], [1.0 / 3.0, -1.0 / 3.0])
    assert np.max(np.abs(Pi @ Pi - Pi)) <= 1e-10
    assert np.max(np.abs(Pi @ np.linalg.inv(H) - P)) <= 1e-10
    print("✅ P (1, 0) = (1/3, -1/3); Pi idempotent; Pi H^-1 = P")
    print()


def run_all_tests():
    """Run all sensitivity tests"""
    tests = [test_detect_active, test_assemble_jacobian, test_pear_gradient,
             test_lp_path_and_injection, test_dense_oracles]
    failed = 0
    for t in tests:
        try:
            t()
        except Exception as e:
            failed += 1
            print(f"❌ {t.__name__} FAILED: {e}")
    print("=" * 80)
    print("✅ ALL SENSITIVITY TESTS PASSED" if not failed else f"❌ {failed} SENSITIVITY TESTS FAILED")
    print("=" * 80)
    return failed == 0


if __name__ == "__main__":
    sys.exit(0 if run_all_tests() else 1)
