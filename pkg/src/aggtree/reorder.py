"""Rank-reordering construction of dependent samples on an aggregation tree.

Leaves are sampled independently; at every branching node, samples of the
children sums are re-paired so that their ranks match the ranks of a
sample from the node copula, and the paired rows are summed. Full leaf
composition is carried along so the joint leaf vector behind every node
sum stays recoverable.
"""
import numpy as np

from ._rng import node_stream
from .tree import node_label

__all__ = [
    "NodeAtoms",
    "ranks",
    "reorder_children",
    "run_reordering",
    "empirical_joint_cdf",
]


def ranks(values):
    """1-based ranks of ``values`` with ties broken by original index.

    The result is always a permutation of 1..n; for distinct values it
    equals the count definition #{j : v_j <= v_k}.
    """
    values = np.asarray(values)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("values must be a nonempty 1-d sequence")
    order = np.argsort(values, kind="stable")
    out = np.empty(values.size, dtype=np.int64)
    out[order] = np.arange(1, values.size + 1)
    return out


def _ranks0(block):
    """Stable 0-based ranks along axis 1 of a 2-d block."""
    order = np.argsort(block, axis=1, kind="stable")
    out = np.empty(block.shape, dtype=np.int64)
    np.put_along_axis(
        out, order, np.broadcast_to(np.arange(block.shape[1]), block.shape), axis=1
    )
    return out


def _linked_picks(child_sums, copula_samples):
    """Row indices into each child that realize the copula's rank pattern.

    child_sums is a list of (r, n) blocks, copula_samples is (r, n, m).
    Returns one (r, n) int array per child: entry [s, k] is the row of
    child i holding the order statistic matched to atom k in set s.
    """
    picks = []
    for i, sums in enumerate(child_sums):
        p = _ranks0(copula_samples[:, :, i])
        order = np.argsort(sums, axis=1, kind="stable")
        picks.append(np.take_along_axis(order, p, axis=1))
    return picks


def _fix_first_perm(first_child_sums, copula_samples):
    """Row permutation that pins atom k's first component to sample k."""
    p1 = _ranks0(copula_samples[:, :, 0])
    inv = np.empty(p1.shape, dtype=np.int64)
    np.put_along_axis(
        inv, p1, np.broadcast_to(np.arange(p1.shape[1]), p1.shape), axis=1
    )
    q1 = _ranks0(first_child_sums)
    return np.take_along_axis(inv, q1, axis=1)


class NodeAtoms:
    """Sampled sums of one node plus their decomposition bookkeeping.

    sums holds the n node-sum samples. For branching nodes, components
    column i holds the child-i summand of each atom. composition holds
    the underlying leaf values (columns follow leaf_order, the
    lexicographic leaf order of the subtree); it is None when composition
    tracking is disabled.
    """

    __slots__ = ("node", "sums", "components", "composition", "leaf_order")

    def __init__(self, node, sums, components, composition, leaf_order):
        self.node = node
        self.sums = sums
        self.components = components
        self.composition = composition
        self.leaf_order = leaf_order

    @classmethod
    def for_leaf(cls, node, samples, track_composition=True):
        samples = np.asarray(samples, dtype=float)
        comp = samples[:, None] if track_composition else None
        return cls(node, samples, None, comp, (node,))

    @property
    def n(self):
        return self.sums.shape[0]

    def __repr__(self):
        return f"NodeAtoms({node_label(self.node)}, n={self.n})"


def _assemble(child_atoms, picks, row_perm=None):
    parts = []
    comps = []
    track = all(c.composition is not None for c in child_atoms)
    for child, pick in zip(child_atoms, picks):
        if row_perm is not None:
            pick = np.take_along_axis(pick, row_perm, axis=1)
        idx = pick[0]
        parts.append(child.sums[idx])
        if track:
            comps.append(child.composition[idx])
    components = np.column_stack(parts)
    sums = components.sum(axis=1)
    composition = np.hstack(comps) if track else None
    leaf_order = tuple(x for child in child_atoms for x in child.leaf_order)
    parent = child_atoms[0].node[:-1] if child_atoms[0].node else child_atoms[0].node
    return NodeAtoms(parent, sums, components, composition, leaf_order)


def _check_children(child_atoms, copula_samples):
    copula_samples = np.asarray(copula_samples, dtype=float)
    if not child_atoms:
        raise ValueError("need at least one child")
    n = child_atoms[0].n
    if any(c.n != n for c in child_atoms):
        raise ValueError("children carry different sample counts")
    if copula_samples.shape != (n, len(child_atoms)):
        raise ValueError(
            f"copula sample block must have shape {(n, len(child_atoms))}, "
            f"got {copula_samples.shape}"
        )
    return copula_samples


def reorder_children(child_atoms, copula_samples):
    """Pair children order statistics by copula ranks and sum them.

    Atom k's component i is the order statistic of child i's sums whose
    rank equals the rank of copula sample k in column i.
    """
    copula_samples = _check_children(child_atoms, copula_samples)
    sums = [c.sums[None, :] for c in child_atoms]
    picks = _linked_picks(sums, copula_samples[None, :, :])
    return _assemble(child_atoms, picks)


def run_reordering(model, n, seed, track_composition=True):
    """Run the full bottom-up reordering; returns {node: NodeAtoms}.

    Leaves hold raw marginal samples. The root's composition block is an
    n x (number of leaves) matrix of joint leaf realizations.
    Deterministic given ``seed``.
    """
    model.require_valid()
    if n < 2:
        raise ValueError("n must be >= 2")
    tree = model.tree
    atoms = {}
    for leaf in tree.leaves():
        rng = node_stream(seed, "marginal", leaf)
        atoms[leaf] = NodeAtoms.for_leaf(
            leaf, model.marginals[leaf].sample(n, rng), track_composition
        )
    for node in sorted(tree.branching(), key=len, reverse=True):
        u = model.copulas[node].sample(n, node_stream(seed, "copula", node))
        atoms[node] = reorder_children([atoms[c] for c in tree.children(node)], u)
    return atoms


def empirical_joint_cdf(points, x):
    """Fraction of rows of ``points`` that are componentwise <= x."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x = np.asarray(x, dtype=float)
    return float(np.mean(np.all(pts <= x, axis=1)))
