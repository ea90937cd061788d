import math

import numpy as np
import pytest

from aggtree import (
    CovarianceConstraintSet,
    ExtremalResult,
    RootedTree,
    build_constraints,
    extremal_correlation,
    psd_feasible,
    symmetric_tree_constraints,
    symmetric_tree_dep_corr,
    three_leaf_corr_interval,
)


def three_leaf_constraints(v1, v2, v3, rho12, rho0, objective=("1.1", "2")):
    tree = RootedTree.from_nested({"children": [{"children": [{}, {}]}, {}]})
    corrs = {
        (1,): np.array([[1.0, rho12], [rho12, 1.0]]),
        (): np.array([[1.0, rho0], [rho0, 1.0]]),
    }
    return build_constraints(
        tree, {(1, 1): v1, (1, 2): v2, (2,): v3}, corrs, objective=objective)


class TestBuildConstraints:
    def test_three_leaf_structure(self):
        cs = three_leaf_constraints(1.0, 4.0, 2.25, 0.6, 0.3)
        assert cs.leaf_order == ((1, 1), (1, 2), (2,))
        np.testing.assert_array_equal(cs.variances, [1.0, 4.0, 2.25])
        # sibling covariance pinned to rho12 * s1 * s2
        assert set(cs.fixed) == {(0, 1)}
        assert cs.fixed[(0, 1)] == pytest.approx(0.6 * 1.0 * 2.0)
        # one aggregate constraint: s13 + s23 = rho0 * sd(S1) * sd(X3)
        assert len(cs.sums) == 1
        entries, rhs = cs.sums[0]
        assert set(entries) == {(0, 2), (1, 2)}
        sd_pair = math.sqrt(1.0 + 4.0 + 2 * 0.6 * 2.0)
        assert rhs == pytest.approx(0.3 * sd_pair * 1.5)
        assert cs.objective == (0, 2)

    def test_tree_dep_start_matches_closed_form(self):
        cs = three_leaf_constraints(1.0, 4.0, 2.25, 0.6, 0.3)
        interval = three_leaf_corr_interval(1.0, 2.0, 1.5, 0.6, 0.3)
        assert cs.tree_dep[0, 2] == pytest.approx(
            interval.tree_dep * 1.0 * 1.5, abs=1e-12)
        ok, _ = psd_feasible(cs.tree_dep)
        assert ok

    def test_single_level_all_fixed(self):
        tree = RootedTree.from_nested({"children": [{}, {}, {}]})
        R = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, -0.1], [0.2, -0.1, 1.0]])
        cs = build_constraints(
            tree, {(1,): 1.0, (2,): 4.0, (3,): 1.0}, {(): R},
            objective=("1", "2"))
        assert cs.sums == []
        assert cs.fixed[(0, 1)] == pytest.approx(0.5 * 2.0)
        assert cs.fixed[(0, 2)] == pytest.approx(0.2)
        assert cs.fixed[(1, 2)] == pytest.approx(-0.1 * 2.0)

    def test_symmetric_depth3_structure(self):
        rho = -0.5
        cs = symmetric_tree_constraints(3, rho, objective=("1.1.1", "2.2.2"))
        assert cs.dim == 8
        np.testing.assert_array_equal(cs.variances, np.ones(8))
        # four sibling pairs pinned at rho
        assert len(cs.fixed) == 4
        for v in cs.fixed.values():
            assert v == pytest.approx(rho)
        # two mid-level blocks of 2x2 cross entries and one 4x4 root block
        sizes = sorted(len(e) for e, _ in cs.sums)
        assert sizes == [4, 4, 16]
        for entries, rhs in cs.sums:
            if len(entries) == 4:
                assert rhs == pytest.approx(rho * 2.0 * (1.0 + rho))
            else:
                assert rhs == pytest.approx(rho * 4.0 * (1.0 + rho) ** 2)

    def test_each_entry_constrained_once(self):
        cs = symmetric_tree_constraints(3, 0.4, objective=("1.1.1", "2.2.2"))
        seen = set(cs.fixed)
        for entries, _ in cs.sums:
            for e in entries:
                assert e not in seen
                seen.add(e)
        npairs = cs.dim * (cs.dim - 1) // 2
        assert len(seen) == npairs

    def test_objective_accepts_labels_and_indices(self):
        a = three_leaf_constraints(1.0, 4.0, 2.25, 0.6, 0.3, ("1.1", "2"))
        b = three_leaf_constraints(1.0, 4.0, 2.25, 0.6, 0.3, (0, 2))
        assert a.objective == b.objective == (0, 2)

    def test_unknown_leaf_rejected(self):
        with pytest.raises(Exception):
            three_leaf_constraints(1.0, 4.0, 2.25, 0.6, 0.3, ("1.3", "2"))


class TestPsdFeasible:
    def test_identity(self):
        ok, lam = psd_feasible(np.eye(3))
        assert ok and lam == pytest.approx(1.0)

    def test_excess_correlation_block(self):
        ok, lam = psd_feasible(np.array([[1.0, 1.2], [1.2, 1.0]]))
        assert not ok
        assert lam == pytest.approx(-0.2, abs=1e-12)

    def test_tolerance_parameter(self):
        m = np.array([[1.0, 0.0], [0.0, -1e-10]])
        ok_default, _ = psd_feasible(m)
        ok_tight, _ = psd_feasible(m, tol=1e-12)
        assert ok_default and not ok_tight


class TestExtremalCorrelation:
    def test_agrees_with_closed_form_on_grid(self):
        for rho12 in (-0.9, 0.0, 0.9):
            for rho0 in (-0.45, 0.45):
                cs = three_leaf_constraints(1.0, 1.0, 1.0, rho12, rho0)
                interval = three_leaf_corr_interval(1.0, 1.0, 1.0, rho12, rho0)
                lo = extremal_correlation(cs, "min")
                hi = extremal_correlation(cs, "max")
                assert lo.value == pytest.approx(interval.min, abs=1e-6)
                assert hi.value == pytest.approx(interval.max, abs=1e-6)
                assert lo.status == "optimal" and hi.status == "optimal"

    def test_result_fields_and_witness_quality(self):
        cs = three_leaf_constraints(1.0, 4.0, 2.25, 0.6, 0.3)
        res = extremal_correlation(cs, "max")
        assert isinstance(res, ExtremalResult)
        # value is on the correlation scale, covariance on the raw scale
        assert res.covariance == pytest.approx(res.value * 1.0 * 1.5, abs=1e-12)
        w = res.witness
        ok, lam = psd_feasible(w)
        assert ok, lam
        np.testing.assert_allclose(np.diag(w), cs.variances, atol=1e-7)
        assert w[0, 1] == pytest.approx(cs.fixed[(0, 1)], abs=1e-7)
        entries, rhs = cs.sums[0]
        got = sum(w[e] for e in entries)
        assert got == pytest.approx(rhs, abs=1e-7)
        assert w[cs.objective] == pytest.approx(res.covariance, abs=1e-9)
        assert res.info["direction"] == "max"
        assert res.info["probes"] >= 1

    def test_fully_fixed_objective_is_trivial(self):
        tree = RootedTree.from_nested({"children": [{}, {}, {}]})
        R = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, -0.1], [0.2, -0.1, 1.0]])
        cs = build_constraints(
            tree, {(1,): 1.0, (2,): 4.0, (3,): 1.0}, {(): R},
            objective=("1", "2"))
        lo = extremal_correlation(cs, "min")
        hi = extremal_correlation(cs, "max")
        assert lo.value == pytest.approx(0.5, abs=1e-9)
        assert hi.value == pytest.approx(0.5, abs=1e-9)

    def test_symmetric_negative_rho_full_range(self):
        for pair in (("1.1.1", "1.2.1"), ("1.1.1", "2.2.2")):
            cs = symmetric_tree_constraints(3, -0.5, objective=pair)
            lo = extremal_correlation(cs, "min")
            hi = extremal_correlation(cs, "max")
            assert lo.value == pytest.approx(-1.0, abs=1e-3)
            assert hi.value == pytest.approx(1.0, abs=1e-3)

    def test_requires_objective(self):
        tree = RootedTree.from_nested({"children": [{"children": [{}, {}]}, {}]})
        corrs = {(1,): np.eye(2), (): np.eye(2)}
        cs = build_constraints(tree, {(1, 1): 1.0, (1, 2): 1.0, (2,): 1.0}, corrs)
        with pytest.raises(ValueError):
            extremal_correlation(cs, "min")

    def test_rejects_bad_direction(self):
        cs = three_leaf_constraints(1.0, 1.0, 1.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            extremal_correlation(cs, "both")

    def test_min_below_tree_dep_below_max(self):
        rng = np.random.default_rng(17)
        for _ in range(5):
            rho12 = float(rng.uniform(-0.8, 0.8))
            rho0 = float(rng.uniform(-0.8, 0.8))
            v = rng.uniform(0.5, 3.0, size=3)
            cs = three_leaf_constraints(v[0], v[1], v[2], rho12, rho0)
            td_corr = cs.tree_dep[0, 2] / math.sqrt(v[0] * v[2])
            lo = extremal_correlation(cs, "min").value
            hi = extremal_correlation(cs, "max").value
            assert lo - 1e-7 <= td_corr <= hi + 1e-7


class TestSymmetricTreeDepCorr:
    def test_level_formulas(self):
        rho = 0.3
        assert symmetric_tree_dep_corr(1, rho) == pytest.approx(rho)
        assert symmetric_tree_dep_corr(2, rho) == pytest.approx(
            rho * (1 + rho) / 2.0)
        assert symmetric_tree_dep_corr(3, rho) == pytest.approx(
            rho * (1 + rho) ** 2 / 4.0)

    def test_specific_values(self):
        assert symmetric_tree_dep_corr(2, -0.5) == pytest.approx(-0.125)
        assert symmetric_tree_dep_corr(3, -0.5) == pytest.approx(-0.03125)

    def test_decay_with_distance(self):
        rho = 0.6
        vals = [abs(symmetric_tree_dep_corr(k, rho)) for k in range(1, 21)]
        assert all(b < a for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 1e-2

    def test_domain(self):
        with pytest.raises(ValueError):
            symmetric_tree_dep_corr(0, 0.3)
        with pytest.raises(ValueError):
            symmetric_tree_dep_corr(1, -1.0)
        with pytest.raises(ValueError):
            symmetric_tree_dep_corr(1, 1.1)


class TestConstraintSetType:
    def test_direct_construction(self):
        cs = CovarianceConstraintSet(
            leaf_order=((1,), (2,), (3,)),
            variances=[1.0, 1.0, 1.0],
            fixed={(0, 1): 0.2},
            sums=[(((0, 2), (1, 2)), 0.5)],
            tree_dep=np.eye(3),
            objective=(0, 2),
        )
        assert cs.dim == 3
        assert cs.objective == (0, 2)
