"""Exact second-moment analytics for Gaussian aggregation tree models.

The tree dependent joint law of normal leaves under Gaussian copulas is
normal again; its covariance follows from a bottom-up recursion over the
tree. For the three-leaf tree the set of attainable leaf-1/leaf-3
correlations is a closed interval with explicit endpoints, and the pairs
(cov(X1, X3), cov(X2, X3)) trace an ellipse whose parameters are also in
closed form.
"""
import math
from dataclasses import dataclass

import numpy as np

from .distributions import Normal, copula_correlation
from .errors import InfeasibleCorrelationError, UnsupportedModelError
from .tree import node_label

__all__ = [
    "node_sum_variances",
    "tree_dependent_covariance",
    "tree_dependent_law",
    "GaussianTreeLaw",
    "CorrelationInterval",
    "three_leaf_corr_interval",
    "three_leaf_covariance",
    "ellipse_parameters",
    "model_second_moments",
]


def model_second_moments(model):
    """Leaf variance and copula correlation maps of a Gaussian model."""
    for leaf in model.tree.leaves():
        if not isinstance(model.marginals[leaf], Normal):
            raise UnsupportedModelError(
                f"leaf {node_label(leaf)} is not normal: {model.marginals[leaf]!r}"
            )
    leaf_vars = {leaf: model.marginals[leaf].variance for leaf in model.tree.leaves()}
    corrs = {node: copula_correlation(model.copulas[node])
             for node in model.tree.branching()}
    return leaf_vars, corrs


def _node_correlation(corrs, node, arity):
    r = np.asarray(corrs[node], dtype=float)
    if r.shape != (arity, arity):
        raise ValueError(
            f"correlation at {node_label(node)} has shape {r.shape}, "
            f"expected {(arity, arity)}"
        )
    return r


def node_sum_variances(tree, leaf_variances, copula_corrs):
    """Variance of the partial sum at every node, computed bottom-up."""
    out = {}
    for node in sorted(tree.nodes, key=len, reverse=True):
        if tree.arity(node) == 0:
            out[node] = float(leaf_variances[node])
            continue
        children = tree.children(node)
        r = _node_correlation(copula_corrs, node, len(children))
        sd = np.sqrt([max(out[c], 0.0) for c in children])
        out[node] = max(float(sd @ r @ sd), 0.0)
    return out


def tree_dependent_covariance(tree, leaf_variances, copula_corrs):
    """Joint covariance of the leaves under the tree dependent law.

    Returns (leaf_order, covariance). Partial sums of sibling subtrees
    are coupled by the node copula's correlation; within-subtree structure
    is already fixed lower down, and each cross entry factorizes through
    the two subtree sums.
    """
    leaves = tree.leaves()
    index = {leaf: k for k, leaf in enumerate(leaves)}
    cov = np.zeros((len(leaves), len(leaves)))
    var_sum = {}
    leaf_cov = {}
    for node in sorted(tree.nodes, key=len, reverse=True):
        if tree.arity(node) == 0:
            v = float(leaf_variances[node])
            cov[index[node], index[node]] = v
            var_sum[node] = v
            leaf_cov[node] = {node: v}
            continue
        children = tree.children(node)
        r = _node_correlation(copula_corrs, node, len(children))
        sd = np.sqrt([max(var_sum[c], 0.0) for c in children])
        cross = r * np.outer(sd, sd)
        for i in range(len(children)):
            vi = var_sum[children[i]]
            for j in range(i + 1, len(children)):
                vj = var_sum[children[j]]
                if vi <= 0.0 or vj <= 0.0:
                    continue
                scale = cross[i, j] / (vi * vj)
                for a, ca in leaf_cov[children[i]].items():
                    for b, cb in leaf_cov[children[j]].items():
                        val = ca * cb * scale
                        cov[index[a], index[b]] = val
                        cov[index[b], index[a]] = val
        merged = {}
        for i, child in enumerate(children):
            vi = var_sum[child]
            if vi <= 0.0:
                factor = 1.0
            else:
                factor = 1.0 + (cross[i].sum() - cross[i, i]) / vi
            for a, ca in leaf_cov[child].items():
                merged[a] = ca * factor
        var_sum[node] = max(float(cross.sum()), 0.0)
        leaf_cov[node] = merged
    return leaves, cov


@dataclass(frozen=True)
class GaussianTreeLaw:
    """Normal joint law of the leaves: mean vector plus covariance."""

    leaf_order: tuple
    mean: np.ndarray
    covariance: np.ndarray

    def total_law(self):
        """Law of the overall sum across all leaves."""
        return Normal(float(self.mean.sum()), float(self.covariance.sum()))


def tree_dependent_law(model):
    """Exact joint leaf law of a Gaussian model under tree dependence."""
    model.require_valid()
    leaf_vars, corrs = model_second_moments(model)
    leaves, cov = tree_dependent_covariance(model.tree, leaf_vars, corrs)
    mean = np.array([model.marginals[leaf].mean for leaf in leaves])
    return GaussianTreeLaw(tuple(leaves), mean, cov)


@dataclass(frozen=True)
class CorrelationInterval:
    """Attainable leaf-1/leaf-3 correlations in the three-leaf tree.

    ``tree_dep`` is the value realized by the tree dependent law itself;
    it always equals ``mid``. When the grouped pair is countermonotone
    with matching scales the first sum is degenerate and every
    correlation is attainable, flagged by ``degenerate``.
    """

    min: float
    mid: float
    half_length: float
    max: float
    tree_dep: float
    degenerate: bool = False


def _check_three_leaf_params(sigma1, sigma2, sigma3, rho12, rho_root):
    for name, s in (("sigma1", sigma1), ("sigma2", sigma2), ("sigma3", sigma3)):
        if not s > 0.0:
            raise ValueError(f"{name} must be positive, got {s}")
    for name, r in (("rho12", rho12), ("rho_root", rho_root)):
        if not -1.0 <= r <= 1.0:
            raise ValueError(f"{name} must lie in [-1, 1], got {r}")


def three_leaf_corr_interval(sigma1, sigma2, sigma3, rho12, rho_root):
    """Interval of correlations between leaf 1 and the lone leaf.

    Model: leaves 1 and 2 are grouped with correlation ``rho12``; their
    sum couples to leaf 3 (scale ``sigma3``) with correlation
    ``rho_root``. The interval does not depend on ``sigma3``.
    """
    _check_three_leaf_params(sigma1, sigma2, sigma3, rho12, rho_root)
    d = sigma1**2 + sigma2**2 + 2.0 * rho12 * sigma1 * sigma2
    if d <= 1e-14 * (sigma1**2 + sigma2**2):
        return CorrelationInterval(-1.0, 0.0, 1.0, 1.0, 0.0, degenerate=True)
    root = math.sqrt(d)
    mid = rho_root * (rho12 * sigma2 + sigma1) / root
    rad = sigma2**2 * (1.0 - rho12**2) * (1.0 - rho_root**2)
    half = math.sqrt(max(rad, 0.0)) / root
    return CorrelationInterval(mid - half, mid, half, mid + half, mid)


def three_leaf_covariance(sigma1, sigma2, sigma3, rho12, rho_root, rho13):
    """Complete the three-leaf covariance matrix for a requested rho13.

    The pair (sigma13, sigma23) is pinned by the variance and root
    coupling of the grouped sum, so choosing rho13 determines everything.
    Raises InfeasibleCorrelationError when rho13 lies outside the
    attainable interval.
    """
    interval = three_leaf_corr_interval(sigma1, sigma2, sigma3, rho12, rho_root)
    slack = 1e-12
    if rho13 < interval.min - slack or rho13 > interval.max + slack:
        distance = max(interval.min - rho13, rho13 - interval.max)
        raise InfeasibleCorrelationError(rho13, (interval.min, interval.max), distance)
    s12 = rho12 * sigma1 * sigma2
    s13 = rho13 * sigma1 * sigma3
    if interval.degenerate:
        s23 = -s13
    else:
        d = sigma1**2 + sigma2**2 + 2.0 * s12
        s23 = rho_root * math.sqrt(d) * sigma3 - s13
    return np.array([
        [sigma1**2, s12, s13],
        [s12, sigma2**2, s23],
        [s13, s23, sigma3**2],
    ])


def ellipse_parameters(sigma1, sigma2, sigma3, rho12, rho_root):
    """Ellipse traced by the attainable (cov13, cov23) pairs.

    Returns a dict with the axis-aligned description after the shear that
    maps the grouped pair to independent coordinates: center ``x0`` (in
    cov13), semi-axes ``a`` (cov13 direction) and ``b``, plus the shear
    parameters ``u`` and ``v``. Undefined when the grouped pair is
    perfectly correlated.
    """
    _check_three_leaf_params(sigma1, sigma2, sigma3, rho12, rho_root)
    l22 = sigma2 * math.sqrt(max(1.0 - rho12**2, 0.0))
    if l22 == 0.0:
        raise ValueError("rho12 = +/-1 degenerates the ellipse to a point set")
    d = sigma1**2 + sigma2**2 + 2.0 * rho12 * sigma1 * sigma2
    u = rho_root * math.sqrt(d) * sigma3 / l22
    v = (sigma1 + rho12 * sigma2) / l22
    x0 = u * v / (1.0 + v**2)
    a = math.sqrt(max((sigma3**2 - u**2) / (1.0 + v**2) + x0**2, 0.0))
    b = math.sqrt(max(sigma3**2 - u**2 + u**2 * v**2 / (1.0 + v**2), 0.0))
    return {"u": u, "v": v, "x0": x0, "a": a, "b": b}
