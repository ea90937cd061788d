"""Modified reordering: i.i.d. joint realizations from an aggregation tree.

The plain reordering of :mod:`aggtree.reorder` produces the right
aggregate law but dependent rows. Here every branching level draws n
independent reordered sets, each built with the first component pinned to
its own fresh sample, and keeps the diagonal (set k, atom k), which makes
the kept rows independent. The cost grows by a factor of n per branching
level, so runs are gated by an explicit generation budget.

Also provides the exact tree-dependent pmf for discrete models on binary
trees, the validation target for the sampler.
"""
import numpy as np

from ._rng import node_stream
from .distributions import Discrete, bivariate_gaussian_copula_cdf
from .errors import GenerationBudgetError, SupportSizeError, UnsupportedModelError
from .reorder import NodeAtoms, _assemble, _check_children, _fix_first_perm, _linked_picks
from .tree import node_label

__all__ = [
    "reorder_fixed_first",
    "run_mra",
    "MraOutput",
    "DiscreteJointPmf",
    "tree_dependent_pmf",
    "empirical_joint_pmf",
    "tv_distance",
]

_SNAP_DECIMALS = 9


def reorder_fixed_first(child_atoms, copula_samples):
    """Reorder like :func:`aggtree.reorder.reorder_children`, then permute
    the atoms so atom k's first component is child 1's sample k unchanged.

    The atom multiset is identical to the plain reordering's; only the
    order of atoms differs.
    """
    copula_samples = _check_children(child_atoms, copula_samples)
    sums = [c.sums[None, :] for c in child_atoms]
    u = copula_samples[None, :, :]
    picks = _linked_picks(sums, u)
    perm = _fix_first_perm(sums[0], u)
    return _assemble(child_atoms, picks, row_perm=perm)


def _reorder_fixed_batched(child_sums, child_comps, u):
    """Fixed-first reordering applied independently along the first axis.

    child_sums are (r, n) blocks, child_comps (r, n, M_i), u is (r, n, m).
    Returns parent sums (r, n) and composition (r, n, sum M_i).
    """
    picks = _linked_picks(child_sums, u)
    perm = _fix_first_perm(child_sums[0], u)
    parts = []
    comps = []
    for s, c, pick in zip(child_sums, child_comps, picks):
        final = np.take_along_axis(pick, perm, axis=1)
        parts.append(np.take_along_axis(s, final, axis=1))
        comps.append(np.take_along_axis(c, final[:, :, None], axis=1))
    sums = parts[0].copy()
    for p in parts[1:]:
        sums += p
    return sums, np.concatenate(comps, axis=2)


def _iid_sets(model, streams, node, sets, n):
    """``sets`` independent blocks of n i.i.d. subtree realizations.

    Returns (sums, composition) with shapes (sets, n) and (sets, n, M).
    For a branching node this regenerates the whole subtree n times per
    output set and keeps the diagonal atoms.
    """
    tree = model.tree
    if tree.arity(node) == 0:
        x = model.marginals[node].sample(sets * n, streams("marginal", node))
        x = x.reshape(sets, n)
        return x, x[:, :, None]
    children = tree.children(node)
    child_sums = []
    child_comps = []
    for child in children:
        s, c = _iid_sets(model, streams, child, sets * n, n)
        child_sums.append(s)
        child_comps.append(c)
    u = model.copulas[node].sample(sets * n * n, streams("copula", node))
    u = u.reshape(sets * n, n, len(children))
    sums, comp = _reorder_fixed_batched(child_sums, child_comps, u)
    k = np.arange(n)
    sums = sums.reshape(sets, n, n)[:, k, k]
    comp = comp.reshape(sets, n, n, -1)[:, k, k, :]
    return sums, comp


class MraOutput:
    """n i.i.d. joint leaf realizations with column-to-leaf mapping."""

    __slots__ = ("model", "realizations", "leaf_order")

    def __init__(self, model, realizations, leaf_order):
        self.model = model
        self.realizations = realizations
        self.leaf_order = leaf_order

    @property
    def n(self):
        return self.realizations.shape[0]

    def node_sums(self, node):
        """Per-row sum over the leaf descendants of ``node``."""
        cols = [self.leaf_order.index(lf)
                for lf in self.model.tree.leaf_descendants(node)]
        return self.realizations[:, cols].sum(axis=1)

    def __repr__(self):
        return f"MraOutput(n={self.n}, leaves={len(self.leaf_order)})"


def run_mra(model, n, seed, budget=10**8, chunk_elems=2 * 10**7):
    """Sample n i.i.d. joint leaf vectors; deterministic given ``seed``.

    Refuses to run when the estimated generation count n**levels (levels =
    largest number of branching ancestors over all leaves) exceeds
    ``budget``. ``chunk_elems`` bounds working-set array sizes; it does
    not change the output.
    """
    model.require_valid()
    if n < 2:
        raise ValueError("n must be >= 2")
    tree = model.tree
    leaves = tree.leaves()
    levels = max(len(lf) for lf in leaves)
    estimate = float(n) ** levels
    if estimate > budget:
        raise GenerationBudgetError(estimate, budget)

    cache = {}

    def streams(purpose, node):
        key = (purpose, node)
        if key not in cache:
            cache[key] = node_stream(seed, purpose, node)
        return cache[key]

    root = ()
    if levels == 0:
        x = model.marginals[root].sample(n, streams("marginal", root))
        return MraOutput(model, x[:, None], leaves)

    children = tree.children(root)
    copula = model.copulas[root]
    out = np.empty((n, len(leaves)))
    # sets * n**levels elements at the deepest level of the recursion
    max_sets = max(1, min(n, chunk_elems // (n ** levels)))
    offset = 0
    while offset < n:
        b = min(max_sets, n - offset)
        child_sums = []
        child_comps = []
        for child in children:
            s, c = _iid_sets(model, streams, child, b, n)
            child_sums.append(s)
            child_comps.append(c)
        u = copula.sample(b * n, streams("copula", root)).reshape(b, n, len(children))
        _, comp = _reorder_fixed_batched(child_sums, child_comps, u)
        local = np.arange(b)
        out[offset:offset + b] = comp[local, offset + local, :]
        offset += b
    return MraOutput(model, out, leaves)


class DiscreteJointPmf:
    """Finite pmf over vectors, points sorted lexicographically by row."""

    __slots__ = ("points", "probs")

    def __init__(self, points, probs):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        probs = np.asarray(probs, dtype=float)
        if points.shape[0] != probs.shape[0]:
            raise ValueError("points and probs must have matching length")
        if np.any(probs < 0.0):
            raise ValueError("probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > 1e-10:
            raise ValueError("probabilities must sum to 1")
        order = np.lexsort(points.T[::-1])
        self.points = points[order]
        self.probs = probs[order]

    @property
    def dim(self):
        return self.points.shape[1]

    def as_dict(self):
        return {tuple(row): float(p) for row, p in zip(self.points, self.probs)}

    def __repr__(self):
        return f"DiscreteJointPmf({self.points.shape[0]} points, dim={self.dim})"


def empirical_joint_pmf(realizations):
    """Counting-measure pmf of the rows (snapped to 9 decimals)."""
    rows = np.atleast_2d(np.asarray(realizations, dtype=float))
    rows = np.round(rows, _SNAP_DECIMALS)
    points, counts = np.unique(rows, axis=0, return_counts=True)
    return DiscreteJointPmf(points, counts / rows.shape[0])


def tv_distance(p, q):
    """Total variation distance between two finite pmfs."""
    a, b = p.as_dict(), q.as_dict()
    keys = set(a) | set(b)
    return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)


def _node_rho(copula, node):
    corr = getattr(copula, "correlation", None)
    if corr is None:
        raise UnsupportedModelError(
            f"copula at {node_label(node)} is not usable for the exact pmf"
        )
    corr = np.asarray(corr, dtype=float)
    if corr.shape != (2, 2):
        raise UnsupportedModelError(
            f"exact pmf needs bivariate copulas, node {node_label(node)} has "
            f"dimension {corr.shape[0]}"
        )
    return float(corr[0, 1])


def _rectangles(rho, cdf_a, cdf_b):
    """Joint cell probabilities for two sums coupled by a Gaussian copula."""
    na, nb = len(cdf_a), len(cdf_b)
    grid = np.empty((na + 1, nb + 1))
    grid[0, :] = 0.0
    grid[:, 0] = 0.0
    for i in range(1, na + 1):
        for j in range(1, nb + 1):
            grid[i, j] = bivariate_gaussian_copula_cdf(rho, cdf_a[i - 1], cdf_b[j - 1])
    cells = grid[1:, 1:] - grid[:-1, 1:] - grid[1:, :-1] + grid[:-1, :-1]
    return np.clip(cells, 0.0, None)


def tree_dependent_pmf(model, support_cap=10**5):
    """Exact joint pmf of the tree dependent leaf vector.

    Requires all-discrete marginals and a binary tree. Built bottom-up:
    children sum laws are coupled through the node copula's rectangle
    probabilities, and leaf detail is glued back on with the conditional
    independence factorization given the sums.
    """
    model.require_valid()
    tree = model.tree
    for leaf in tree.leaves():
        if not isinstance(model.marginals[leaf], Discrete):
            raise UnsupportedModelError(
                f"exact pmf needs discrete marginals, leaf {node_label(leaf)} "
                f"is {model.marginals[leaf]!r}"
            )
    for node in tree.branching():
        if tree.arity(node) != 2:
            raise UnsupportedModelError(
                f"exact pmf needs a binary tree, node {node_label(node)} has "
                f"{tree.arity(node)} children"
            )

    def snap(x):
        return round(float(x), _SNAP_DECIMALS)

    # state per node: {sum value: {leaf vector: joint probability}}
    def build(node):
        if tree.arity(node) == 0:
            spec = model.marginals[node]
            return {
                snap(v): {(snap(v),): float(p)}
                for v, p in zip(spec.support, spec.probs)
            }
        left, right = (build(c) for c in tree.children(node))
        rho = _node_rho(model.copulas[node], node)
        sums_l = sorted(left)
        sums_r = sorted(right)
        p_l = np.array([sum(left[s].values()) for s in sums_l])
        p_r = np.array([sum(right[s].values()) for s in sums_r])
        cells = _rectangles(rho, np.cumsum(p_l), np.cumsum(p_r))
        state = {}
        size = 0
        for i, s in enumerate(sums_l):
            if p_l[i] <= 0.0:
                continue
            for j, t in enumerate(sums_r):
                q = cells[i, j]
                if q <= 0.0 or p_r[j] <= 0.0:
                    continue
                weight = q / (p_l[i] * p_r[j])
                bucket = state.setdefault(snap(s + t), {})
                for vec_l, a in left[s].items():
                    for vec_r, b in right[t].items():
                        vec = vec_l + vec_r
                        bucket[vec] = bucket.get(vec, 0.0) + weight * a * b
            size = sum(len(v) for v in state.values())
            if size > support_cap:
                raise SupportSizeError(size, support_cap)
        return state

    state = build(())
    points = []
    probs = []
    for bucket in state.values():
        for vec, p in bucket.items():
            points.append(vec)
            probs.append(p)
    probs = np.asarray(probs)
    return DiscreteJointPmf(np.asarray(points), probs / probs.sum())
