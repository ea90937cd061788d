import math

import numpy as np
import pytest

from aggtree import (
    AggregationTreeModel,
    Discrete,
    DiscreteJointPmf,
    GaussianCopula,
    GenerationBudgetError,
    Independence,
    MraOutput,
    Normal,
    NodeAtoms,
    ROOT,
    RootedTree,
    SupportSizeError,
    empirical_joint_pmf,
    reorder_children,
    reorder_fixed_first,
    run_mra,
    tree_dependent_pmf,
    tv_distance,
)
from aggtree.errors import UnsupportedModelError

X1 = np.array([1.0, 4.0, 2.0])
X2 = np.array([9.0, 0.0, 3.0])
U = np.array([[0.6, 0.9], [0.3, 0.5], [0.5, 0.2]])


def atoms_pair():
    return [NodeAtoms.for_leaf((1,), X1), NodeAtoms.for_leaf((2,), X2)]


def coin():
    return Discrete([0.0, 1.0], [0.5, 0.5])


def bernoulli3(rho1=0.7, rho0=0.2):
    tree = RootedTree.from_nested({"children": [{"children": [{}, {}]}, {}]})
    cop1 = GaussianCopula.bivariate(rho1) if rho1 is not None else Independence(2)
    cop0 = GaussianCopula.bivariate(rho0) if rho0 is not None else Independence(2)
    return AggregationTreeModel(
        tree,
        {"1.1": coin(), "1.2": coin(), "2": coin()},
        {"1": cop1, "root": cop0},
    )


class TestReorderFixedFirst:
    def test_worked_example_row_order(self):
        out = reorder_fixed_first(atoms_pair(), U)
        np.testing.assert_array_equal(out.components,
                                      [[1.0, 3.0], [4.0, 9.0], [2.0, 0.0]])
        np.testing.assert_array_equal(out.sums, [4.0, 13.0, 2.0])
        # first component is child 1's sample in original order
        np.testing.assert_array_equal(out.components[:, 0], X1)

    def test_multiset_matches_plain_reordering(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = int(rng.integers(1, 30))
            xs = [rng.normal(size=n), rng.normal(size=n)]
            u = rng.random((n, 2))
            kids = lambda: [NodeAtoms.for_leaf((i + 1,), x)
                            for i, x in enumerate(xs)]
            a = reorder_children(kids(), u).components
            b = reorder_fixed_first(kids(), u).components
            np.testing.assert_array_equal(
                a[np.lexsort(a.T[::-1])], b[np.lexsort(b.T[::-1])])

    def test_identity_ranks_identical_children(self):
        x = np.array([2.0, 7.0, 5.0])
        u = np.array([[0.1, 0.1], [0.9, 0.9], [0.5, 0.5]])
        kids = [NodeAtoms.for_leaf((1,), x), NodeAtoms.for_leaf((2,), x)]
        out = reorder_fixed_first(kids, u)
        np.testing.assert_array_equal(out.components[:, 0], x)
        np.testing.assert_array_equal(out.components[:, 1], x)

    def test_single_row_matches_plain(self):
        a = NodeAtoms.for_leaf((1,), np.array([5.0]))
        b = NodeAtoms.for_leaf((2,), np.array([7.0]))
        u = np.array([[0.4, 0.8]])
        plain = reorder_children([a, b], u)
        fixed = reorder_fixed_first(
            [NodeAtoms.for_leaf((1,), np.array([5.0])),
             NodeAtoms.for_leaf((2,), np.array([7.0]))], u)
        np.testing.assert_array_equal(plain.components, fixed.components)


class TestRunMra:
    def test_shapes_and_determinism(self, four_leaf_model):
        out = run_mra(four_leaf_model, 64, seed=3)
        assert isinstance(out, MraOutput)
        assert out.realizations.shape == (64, 4)
        assert out.leaf_order == tuple(four_leaf_model.tree.leaves())
        again = run_mra(four_leaf_model, 64, seed=3)
        np.testing.assert_array_equal(out.realizations, again.realizations)
        other = run_mra(four_leaf_model, 64, seed=4)
        assert not np.array_equal(out.realizations, other.realizations)

    def test_chunking_does_not_change_output(self, four_leaf_model):
        full = run_mra(four_leaf_model, 100, seed=8)
        chunked = run_mra(four_leaf_model, 100, seed=8, chunk_elems=5000)
        np.testing.assert_array_equal(full.realizations, chunked.realizations)

    def test_depth_one_moments(self):
        tree = RootedTree.from_nested({"children": [{}, {}]})
        model = AggregationTreeModel(
            tree,
            {"1": Normal(1.0, 2.0), "2": Normal(-1.0, 1.0)},
            {"root": GaussianCopula.bivariate(0.6)},
        )
        out = run_mra(model, 2000, seed=5)
        x = out.realizations
        assert abs(x[:, 0].mean() - 1.0) <= 0.15
        assert abs(x[:, 1].mean() + 1.0) <= 0.15
        assert abs(x[:, 0].var() - 2.0) <= 0.3
        r = np.corrcoef(x[:, 0], x[:, 1])[0, 1]
        assert abs(r - 0.6) <= 0.08

    def test_independence_pairwise_correlations(self):
        # rows are i.i.d., so pooling runs gives the same law as one big run
        model = bernoulli3(rho1=None, rho0=None)
        x = np.vstack([run_mra(model, 100, seed=s).realizations
                       for s in range(10)])
        assert x.shape == (10**3, 3)
        corr = np.corrcoef(x.T)
        off = corr[np.triu_indices(3, 1)]
        assert np.max(np.abs(off)) <= 0.1

    def test_node_sums_accessor(self, four_leaf_model):
        out = run_mra(four_leaf_model, 32, seed=1)
        np.testing.assert_allclose(
            out.node_sums(ROOT), out.realizations.sum(axis=1), atol=1e-12)
        np.testing.assert_allclose(
            out.node_sums((1,)), out.realizations[:, :2].sum(axis=1),
            atol=1e-12)

    def test_generation_budget(self):
        model = bernoulli3()
        with pytest.raises(GenerationBudgetError) as exc:
            run_mra(model, 10**5, seed=0)
        err = exc.value
        assert err.estimate == pytest.approx(1e10)
        assert err.budget == pytest.approx(1e8)
        assert "exceeds budget" in str(err)
        # explicit budget raise lets the same call through
        run_mra(model, 120, seed=0, budget=10**8)

    def test_iid_halves_close_in_tv(self):
        model = bernoulli3()
        x = np.vstack([run_mra(model, 150, seed=s).realizations
                       for s in (13, 14, 15, 16)])
        p = empirical_joint_pmf(x[0::2])
        q = empirical_joint_pmf(x[1::2])
        assert tv_distance(p, q) <= 0.12


class TestTreeDependentPmf:
    def test_two_independent_coins_uniform(self):
        tree = RootedTree.from_nested({"children": [{}, {}]})
        model = AggregationTreeModel(
            tree, {"1": coin(), "2": coin()}, {"root": Independence(2)})
        pmf = tree_dependent_pmf(model)
        d = pmf.as_dict()
        assert len(d) == 4
        for v in d.values():
            assert v == pytest.approx(0.25, abs=1e-12)

    def test_two_point_masses(self):
        tree = RootedTree.from_nested({"children": [{}, {}]})
        model = AggregationTreeModel(
            tree,
            {"1": Discrete([2.0], [1.0]), "2": Discrete([-1.0], [1.0])},
            {"root": GaussianCopula.bivariate(0.4)},
        )
        pmf = tree_dependent_pmf(model)
        d = pmf.as_dict()
        assert d == {(2.0, -1.0): pytest.approx(1.0, abs=1e-12)}

    def test_three_leaf_frozen_oracle(self):
        # independent recomputation: copula rectangle masses for the sibling
        # pair, root rectangles on the pair-sum cdf, conditional independence
        # glue; evaluated with scipy's bivariate normal cdf and frozen here
        pmf = tree_dependent_pmf(bernoulli3()).as_dict()
        expected = {
            (0.0, 0.0, 0.0): 0.217102224377984,
            (0.0, 0.0, 1.0): 0.156306120068698,
            (0.0, 1.0, 0.0): 0.063295827776659,
            (0.0, 1.0, 1.0): 0.063295827776659,
            (1.0, 0.0, 0.0): 0.063295827776659,
            (1.0, 0.0, 1.0): 0.063295827776659,
            (1.0, 1.0, 0.0): 0.156306120068698,
            (1.0, 1.0, 1.0): 0.217102224377984,
        }
        assert set(pmf) == set(expected)
        for k, v in expected.items():
            assert pmf[k] == pytest.approx(v, abs=5e-9)

    def test_sibling_pair_matches_arcsine_table(self):
        pmf = tree_dependent_pmf(bernoulli3()).as_dict()
        pair = {}
        for (a, b, c), p in pmf.items():
            pair[(a, b)] = pair.get((a, b), 0.0) + p
        c00 = 0.25 + math.asin(0.7) / (2.0 * math.pi)
        assert pair[(0.0, 0.0)] == pytest.approx(c00, abs=1e-10)
        assert pair[(1.0, 1.0)] == pytest.approx(c00, abs=1e-10)
        assert pair[(0.0, 1.0)] == pytest.approx(0.5 - c00, abs=1e-10)
        assert pair[(1.0, 0.0)] == pytest.approx(0.5 - c00, abs=1e-10)
        assert c00 == pytest.approx(0.3734083444466825, abs=1e-15)

    def test_leaf_marginals_recovered(self):
        tree = RootedTree.from_nested({"children": [{"children": [{}, {}]}, {}]})
        model = AggregationTreeModel(
            tree,
            {
                "1.1": Discrete([0.0, 2.0], [0.3, 0.7]),
                "1.2": Discrete([1.0, 4.0, 6.0], [0.2, 0.5, 0.3]),
                "2": Discrete([-1.0, 1.0], [0.6, 0.4]),
            },
            {"1": GaussianCopula.bivariate(0.5),
             "root": GaussianCopula.bivariate(-0.3)},
        )
        pmf = tree_dependent_pmf(model)
        spec = {0: model.marginals[(1, 1)], 1: model.marginals[(1, 2)],
                2: model.marginals[(2,)]}
        for col, marg in spec.items():
            got = {}
            for pt, p in zip(pmf.points, pmf.probs):
                got[pt[col]] = got.get(pt[col], 0.0) + p
            want = dict(zip(marg.support, marg.probs))
            assert set(got) == set(want)
            for v, p in want.items():
                assert got[v] == pytest.approx(p, abs=1e-9)

    def test_support_cap(self):
        n = 400
        sup = list(np.arange(n) + np.linspace(0, 0.3, n))
        tree = RootedTree.from_nested({"children": [{}, {}]})
        model = AggregationTreeModel(
            tree,
            {"1": Discrete(sup, [1.0 / n] * n),
             "2": Discrete(sup, [1.0 / n] * n)},
            {"root": GaussianCopula.bivariate(0.3)},
        )
        with pytest.raises(SupportSizeError) as exc:
            tree_dependent_pmf(model)
        assert exc.value.size > exc.value.cap == 10**5
        # the cap is a parameter: a tiny cap trips even an 8-point support
        with pytest.raises(SupportSizeError):
            tree_dependent_pmf(bernoulli3(), support_cap=4)

    def test_non_binary_rejected(self):
        tree = RootedTree.from_nested({"children": [{}, {}, {}]})
        model = AggregationTreeModel(
            tree,
            {"1": coin(), "2": coin(), "3": coin()},
            {"root": Independence(3)},
        )
        with pytest.raises(UnsupportedModelError):
            tree_dependent_pmf(model)

    def test_continuous_marginal_rejected(self):
        tree = RootedTree.from_nested({"children": [{}, {}]})
        model = AggregationTreeModel(
            tree, {"1": Normal(0, 1), "2": coin()},
            {"root": GaussianCopula.bivariate(0.2)})
        with pytest.raises(UnsupportedModelError):
            tree_dependent_pmf(model)


class TestEmpiricalPmfAndTv:
    def test_empirical_counts(self):
        x = np.array([[0.0, 1.0], [0.0, 1.0], [1.0, 0.0], [0.0, 0.0]])
        pmf = empirical_joint_pmf(x)
        d = pmf.as_dict()
        assert d[(0.0, 1.0)] == pytest.approx(0.5)
        assert d[(1.0, 0.0)] == pytest.approx(0.25)
        assert d[(0.0, 0.0)] == pytest.approx(0.25)

    def test_tv_identical_zero(self):
        p = DiscreteJointPmf([(0.0,), (1.0,)], [0.5, 0.5])
        assert tv_distance(p, p) == pytest.approx(0.0)

    def test_tv_disjoint_one(self):
        p = DiscreteJointPmf([(0.0,)], [1.0])
        q = DiscreteJointPmf([(1.0,)], [1.0])
        assert tv_distance(p, q) == pytest.approx(1.0)

    def test_tv_direct_formula(self):
        p = DiscreteJointPmf([(0.0,), (1.0,)], [0.5, 0.5])
        q = DiscreteJointPmf([(0.0,), (1.0,)], [0.6, 0.4])
        assert tv_distance(p, q) == pytest.approx(0.1)

    def test_mra_converges_to_oracle(self):
        model = bernoulli3()
        target = tree_dependent_pmf(model)
        x = run_mra(model, 200, seed=2).realizations
        tv = tv_distance(empirical_joint_pmf(x), target)
        assert tv <= 0.15
