"""
Test script for the forward QP solver
Tests KKT certificates, dual signs, polishing, infeasibility detection and the
warm-start cache.
"""

import sys

import numpy as np


def _box_qp(z_low=1.0, z_high=2.0, cost=0.0):
    from solver import ConvexInstance, ScaledIdentity
    return ConvexInstance(n=1, curvature=ScaledIdentity(1.0), cost=np.array([cost]),
                          G=np.eye(1), l=np.array([z_low]), u=np.array([z_high]))


def test_hand_solved_instances():
    """Closed-form KKT points"""
    print("=" * 80)
    print("SOLVER TEST: Hand-Solved Instances")
    print("=" * 80)
    from solver import ConvexInstance, ScaledIdentity, SolveStatus, solve

    print("Test 1: min 1/2 z^2 s.t. 1 <= z <= 2...")
    sol = solve(_box_qp())
    assert sol.status is SolveStatus.SOLVED
    assert abs(sol.z[0] - 1.0) <= 1e-8 and abs(sol.y[0] + 1.0) <= 1e-8
    print(f"✅ z* = {sol.z[0]:.6f}, y* = {sol.y[0]:.6f}")

    print("Test 2: min 1/2 z^2 - 3z s.t. 1 <= z <= 2...")
    sol = solve(_box_qp(cost=-3.0))
    assert abs(sol.z[0] - 2.0) <= 1e-8 and abs(sol.y[0] - 1.0) <= 1e-8
    print(f"✅ z* = {sol.z[0]:.6f}, y* = {sol.y[0]:.6f}")

    print("Test 3: min 1/2 ||z||^2 s.t. z1 + z2 = 1...")
    inst = ConvexInstance(n=2, curvature=ScaledIdentity(1.0), A=np.ones((1, 2)), b=np.ones(1))
    sol = solve(inst)
    assert np.allclose(sol.z, [0.5, 0.5], atol=1e-8)
    assert sol.y_eq(1).shape == (1,) and sol.y_ineq(1).shape == (0,)
    print(f"✅ z* = {sol.z}")
    print()


def test_kkt_report():
    """Residual recomputation"""
    print("=" * 80)
    print("SOLVER TEST: KKT Report")
    print("=" * 80)
    from linalg import DimensionMismatch
    from solver import ConvexInstance, ExplicitSpd, PrimalDualSolution, SolveStatus, kkt_report

    inst = _box_qp()

    print("Test 1: Exact KKT point...")
    exact = PrimalDualSolution(z=np.array([1.0]), y=np.array([-1.0]), status=SolveStatus.SOLVED,
                               stationarity_residual=0.0, primal_residual=0.0)
    report = kkt_report(inst, exact)
    assert all(v <= 1e-12 for v in report.values())
    print(f"✅ {report}")

    print("Test 2: z moved 0.1 inside the box...")
    moved = PrimalDualSolution(z=np.array([1.1]), y=np.array([-1.0]), status=SolveStatus.SOLVED,
                               stationarity_residual=0.0, primal_residual=0.0)
    report = kkt_report(inst, moved)
    assert report["primal"] <= 1e-12
    assert abs(report["stationarity"] - 0.1) <= 1e-12
    print(f"✅ primal {report['primal']:.1e}, stationarity {report['stationarity']:.3f}")

    print("Test 3: Unconstrained optimum...")
    H = np.array([[2.0, 0.5], [0.5, 1.0]])
    q = np.array([1.0, -1.0])
    free = ConvexInstance(n=2, curvature=ExplicitSpd(H), cost=q)
    z = -np.linalg.solve(H, q)
    report = kkt_report(free, PrimalDualSolution(z=z, y=np.zeros(0), status=SolveStatus.SOLVED,
                                                 stationarity_residual=0.0, primal_residual=0.0))
    assert report["stationarity"] <= 1e-12
    print("✅ Stationarity 0")

    print("Test 4: Wrong dual length...")
    try:
        kkt_report(inst, PrimalDualSolution(z=np.ones(1), y=np.ones(3), status=SolveStatus.SOLVED,
                                            stationarity_residual=0.0, primal_residual=0.0))
        raise AssertionError("expected DimensionMismatch")
    except DimensionMismatch:
        print("✅ DimensionMismatch")
    print()


def test_random_box_instances():
    """Certificates, dual signs and a projected-gradient oracle"""
    print("=" * 80)
    print("SOLVER TEST: Random Box Instances")
    print("=" * 80)
    from solver import ConvexInstance, ExplicitSpd, SolveStatus, kkt_report, solve

    rng = np.random.default_rng(7)
    worst_stat, worst_oracle = 0.0, 0.0
    for trial in range(60):
        n = int(rng.integers(2, 21))
        Q = rng.standard_normal((n, n))
        H = Q @ Q.T / n + 0.5 * np.eye(n)
        l = -rng.uniform(0.1, 1.0, n)
        u = rng.uniform(0.1, 1.0, n)
        inst = ConvexInstance(n=n, curvature=ExplicitSpd(H), cost=rng.standard_normal(n) * 2,
                              G=np.eye(n), l=l, u=u)
        sol = solve(inst)
        assert sol.status is SolveStatus.SOLVED, f"trial {trial}: {sol.status}"
        report = kkt_report(inst, sol)
        assert report["stationarity"] <= 1e-8 and report["primal"] <= 1e-8
        worst_stat = max(worst_stat, report["stationarity"])

        # dual sign convention
        neg, pos = sol.y < -1e-10, sol.y > 1e-10
        assert np.all(sol.z[neg] - l[neg] <= 1e-8)
        assert np.all(u[pos] - sol.z[pos] <= 1e-8)

        # projected gradient oracle
        step = 1.0 / np.linalg.eigvalsh(H)[-1]
        z = np.zeros(n)
        for _ in range(20000):
            z_next = np.clip(z - step * (H @ z + inst.cost), l, u)
            if np.max(np.abs(z_next - z)) < 1e-13:
                z = z_next
                break
            z = z_next
        worst_oracle = max(worst_oracle, float(np.max(np.abs(sol.z - z))))
    assert worst_oracle <= 1e-6
    print(f"✅ 60 instances: worst stationarity {worst_stat:.2e}, worst oracle gap {worst_oracle:.2e}")
    print()


def test_repeat_and_warm_start():
    """Repeated solves agree; a cached warm start reproduces the solution"""
    print("=" * 80)
    print("SOLVER TEST: Repeat and Warm Start")
    print("=" * 80)
    from cache import WarmStartCache
    from solver import ConvexInstance, ScaledIdentity, solve

    rng = np.random.default_rng(1)
    n = 8
    inst = ConvexInstance(n=n, curvature=ScaledIdentity(0.1), A=np.ones((1, n)), b=np.ones(1),
                          G=np.eye(n), l=np.zeros(n), u=np.ones(n), cost=rng.uniform(0, 1, n))

    print("Test 1: Two cold solves...")
    a, b = solve(inst), solve(inst)
    assert np.max(np.abs(a.z - b.z)) <= 1e-7
    print("✅ Agree within 10 * eps_abs")

    print("Test 2: Cache hit on a similar cost...")
    cache = WarmStartCache(similarity_threshold=0.9)
    solve(inst, cache=cache)
    nearby = inst.with_cost(inst.cost * 1.01)
    warm = solve(nearby, cache=cache)
    cold = solve(nearby)
    stats = cache.get_stats()
    assert stats["hits"] >= 1 and stats["stores"] >= 1
    assert np.max(np.abs(warm.z - cold.z)) <= 1e-7
    print(f"✅ Hit rate {stats['hit_rate']:.0f}%, warm solution matches cold")

    print("Test 3: Different region does not hit...")
    other = ConvexInstance(n=n, curvature=ScaledIdentity(0.1), G=np.eye(n),
                           l=np.zeros(n), u=np.ones(n), cost=inst.cost)
    assert cache.lookup(other) is None
    cache.invalidate()
    assert cache.get_stats()["size"] == 0
    print("✅ Miss on a new feasible region; invalidation clears everything")
    print()


def test_cache_eviction():
    """Capacity bound per feasible region"""
    print("=" * 80)
    print("SOLVER TEST: Cache Eviction")
    print("=" * 80)
    from cache import WarmStartCache
    from solver import solve

    cache = WarmStartCache(capacity=2)
    inst = _box_qp()
    for k in range(4):
        cache.store(inst, solve(inst.with_cost([float(k)])))
    stats = cache.get_stats()
    assert stats["size"] == 2 and stats["evictions"] == 2
    print(f"✅ {stats['size']} entries kept, {stats['evictions']} evicted")
    print()


def test_unpolished_iterates():
    """ADMM exit without polishing"""
    print("=" * 80)
    print("SOLVER TEST: Unpolished Iterates")
    print("=" * 80)
    from solver import ConvexInstance, ExplicitSpd, SolverSettings, SolveStatus, solve

    def scaled_box(rng, n):
        Q = rng.standard_normal((n, n))
        H = 50.0 * (Q @ Q.T / n + 0.5 * np.eye(n))
        return ConvexInstance(n=n, curvature=ExplicitSpd(H), cost=rng.standard_normal(n) * 100.0,
                              G=np.eye(n), l=-rng.uniform(0.1, 1.0, n), u=rng.uniform(0.1, 1.0, n))

    print("Test 1: Solved means absolute residuals within eps_abs...")
    rng = np.random.default_rng(52)
    settings = SolverSettings(polish=False, max_iter=4000)
    solved = 0
    for _ in range(20):
        inst = scaled_box(rng, int(rng.integers(2, 9)))
        sol = solve(inst, settings)
        if sol.status is SolveStatus.SOLVED:
            solved += 1
            assert sol.stationarity_residual <= settings.eps_abs
            assert sol.primal_residual <= settings.eps_abs
    print(f"✅ {solved} of 20 certified, all within {settings.eps_abs:.0e}")

    print("Test 2: MaxIterations returns the best checked iterate...")
    inst = scaled_box(np.random.default_rng(3), 8)
    scores = []
    for max_iter in (25, 50, 100, 200):
        sol = solve(inst, SolverSettings(polish=False, max_iter=max_iter))
        scores.append(max(sol.stationarity_residual, sol.primal_residual))
    assert all(b <= a for a, b in zip(scores, scores[1:])), scores
    print(f"✅ Residuals never grow with the budget: {['%.2e' % s for s in scores]}")
    print()


def test_infeasible_and_validation():
    """Infeasible regions and invalid data"""
    print("=" * 80)
    print("SOLVER TEST: Infeasibility and Validation")
    print("=" * 80)
    from solver import ConvexInstance, ScaledIdentity, SolveStatus, SolverError, solve, solve_certified

    print("Test 1: z1 + z2 = 3 with 0 <= z <= 1...")
    inst = ConvexInstance(n=2, curvature=ScaledIdentity(1.0), A=np.ones((1, 2)), b=np.array([3.0]),
                          G=np.eye(2), l=np.zeros(2), u=np.ones(2))
    sol = solve(inst)
    assert sol.status is not SolveStatus.SOLVED
    try:
        solve_certified(inst)
        raise AssertionError("expected SolverError")
    except SolverError:
        pass
    print(f"✅ Status {sol.status.value}, solve_certified raised SolverError")

    print("Test 2: l > u rejected...")
    try:
        ConvexInstance(n=1, curvature=ScaledIdentity(1.0), G=np.eye(1), l=np.ones(1), u=np.zeros(1))
        raise AssertionError("expected ValueError")
    except ValueError:
        print("✅ ValueError")
    print()


def run_all_tests():
    """Run all solver tests"""
    tests = [test_hand_solved_instances, test_kkt_report, test_random_box_instances,
             test_repeat_and_warm_start, test_cache_eviction, test_unpolished_iterates,
             test_infeasible_and_validation]
    failed = 0
    for t in tests:
        try:
            t()
        except Exception as e:
            failed += 1
            print(f"❌ {t.__name__} FAILED: {e}")
    print("=" * 80)
    print("✅ ALL SOLVER TESTS PASSED" if not failed else f"❌ {failed} SOLVER TESTS FAILED")
    print("=" * 80)
    return failed == 0


if __name__ == "__main__":
    sys.exit(0 if run_all_tests() else 1)
