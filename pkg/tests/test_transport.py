from itertools import permutations

import numpy as np
import pytest

from flowprox.rng import make_rng
from flowprox.transport import (PointCloud, check_cyclical_monotonicity, cost_matrix,
                                empirical_w2, load_point_cloud_csv, ot_couple,
                                save_point_cloud_csv, solve_assignment)


def cloud(*rows):
    return PointCloud(np.array(rows, dtype=float))


class TestCostMatrix:
    def test_identical_points(self):
        assert cost_matrix(cloud([0.0]), cloud([0.0])).tolist() == [[0.0]]

    def test_two_point_swap(self):
        c = cost_matrix(cloud([0.0], [1.0]), cloud([1.0], [0.0]))
        assert c.tolist() == [[0.5, 0.0], [0.0, 0.5]]

    def test_pythagorean(self):
        c = cost_matrix(cloud([0.0, 0.0]), cloud([3.0, 4.0]))
        assert c.tolist() == [[12.5]]

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            cost_matrix(cloud([0.0]), cloud([0.0, 1.0]))

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            cost_matrix(cloud([0.0], [1.0]), cloud([0.0]))


class TestSolveAssignment:
    def test_swap_is_free(self):
        cpl = solve_assignment(np.array([[0.5, 0.0], [0.0, 0.5]]))
        assert cpl.perm.tolist() == [1, 0]
        assert cpl.total_cost == 0.0

    def test_singleton(self):
        cpl = solve_assignment(np.array([[0.0]]))
        assert cpl.perm.tolist() == [0]
        assert cpl.total_cost == 0.0

    def test_matches_brute_force_8x8(self):
        cost = np.random.default_rng(42).random((8, 8))
        cpl = solve_assignment(cost)
        best = min(sum(cost[l, p[l]] for l in range(8))
                   for p in permutations(range(8)))
        assert cpl.total_cost == pytest.approx(best, rel=1e-12)

    def test_nonfinite_rejected(self):
        bad = np.array([[0.0, np.inf], [1.0, 0.0]])
        with pytest.raises(ValueError):
            solve_assignment(bad)

    def test_beats_identity_and_random_permutations(self):
        rng = make_rng(3)
        for trial in range(5):
            cost = rng.random((12, 12))
            cpl = solve_assignment(cost)
            idx = np.arange(12)
            assert cpl.total_cost <= cost[idx, idx].sum() + 1e-12
            for _ in range(100):
                p = rng.permutation(12)
                assert cpl.total_cost <= cost[idx, p].sum() + 1e-12


class TestDuals:
    def test_feasibility_and_slackness(self):
        rng = make_rng(11)
        for trial in range(10):
            a = PointCloud(rng.standard_normal((16, 2)))
            b = PointCloud(rng.standard_normal((16, 2)))
            cost = cost_matrix(a, b)
            cpl = solve_assignment(cost, source=a, target=b)
            scale = max(1.0, cost.max())
            slack = cpl.dual_f[:, None] + cpl.dual_g[None, :] - cost
            assert slack.max() <= 1e-9 * scale
            matched = cost[np.arange(16), cpl.perm]
            tight = cpl.dual_f + cpl.dual_g[cpl.perm] - matched
            assert np.abs(tight).max() <= 1e-9 * scale

    def test_normalization(self):
        rng = make_rng(5)
        cpl = ot_couple(PointCloud(rng.standard_normal((8, 2))),
                        PointCloud(rng.standard_normal((8, 2))))
        assert cpl.dual_g[0] == 0.0


class TestCyclicalMonotonicity:
    def test_optimal_couplings_pass(self):
        rng = make_rng(7)
        for trial in range(50):
            n = int(rng.integers(2, 17))
            a = PointCloud(rng.standard_normal((n, 2)))
            b = PointCloud(rng.standard_normal((n, 2)))
            rep = check_cyclical_monotonicity(ot_couple(a, b), 3)
            assert rep.ok

    def test_crossed_matching_fails(self):
        # sorted 1-D data matched across each other has a crossing pair
        from flowprox.transport import Coupling
        src = cloud([0.0], [1.0])
        tgt = cloud([0.0], [1.0])
        crossed = Coupling(perm=np.array([1, 0]), total_cost=1.0,
                           source=src, target=tgt)
        rep = check_cyclical_monotonicity(crossed, 2)
        assert not rep.ok
        assert rep.worst_violation < 0

    def test_single_pair(self):
        rep = check_cyclical_monotonicity(ot_couple(cloud([0.0]), cloud([1.0])), 3)
        assert rep.ok and rep.worst_violation == 0.0

    def test_cycle_length_guard(self):
        cpl = ot_couple(cloud([0.0]), cloud([1.0]))
        with pytest.raises(ValueError):
            check_cyclical_monotonicity(cpl, 6)


class TestEmpiricalW2:
    def test_identity(self):
        a = PointCloud(make_rng(1).standard_normal((10, 2)))
        assert empirical_w2(a, a) == 0.0

    def test_single_pair_distance(self):
        assert empirical_w2(cloud([0.0]), cloud([2.0])) == pytest.approx(2.0)

    def test_two_point_shift(self):
        # brute force over both pairings: identity matching is optimal
        assert empirical_w2(cloud([0.0], [1.0]), cloud([1.0], [2.0])) == pytest.approx(1.0)

    def test_symmetry_and_triangle(self):
        rng = make_rng(9)
        for trial in range(5):
            a = PointCloud(rng.standard_normal((8, 2)))
            b = PointCloud(rng.standard_normal((8, 2)))
            c = PointCloud(rng.standard_normal((8, 2)))
            dab, dba = empirical_w2(a, b), empirical_w2(b, a)
            assert dab == pytest.approx(dba, abs=1e-9)
            assert dab <= empirical_w2(a, c) + empirical_w2(c, b) + 1e-9


def test_point_cloud_validation():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        PointCloud(np.array([[np.nan, 0.0]]))


def test_csv_roundtrip(tmp_path):
    a = PointCloud(make_rng(2).standard_normal((5, 3)))
    path = tmp_path / "cloud.csv"
    save_point_cloud_csv(a, path)
    b = load_point_cloud_csv(path)
    assert np.array_equal(a.points, b.points)
    assert "." in path.read_text() and "\r" not in path.read_text()
