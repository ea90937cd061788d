"""Attainable joint covariances under mild tree dependence.

A Gaussian aggregation tree pins the variance of every partial sum and
the covariance between sibling partial sums. On the leaf covariance
matrix this induces one affine constraint per branching node and child
pair; sibling leaves get their entry fixed outright. The feasible bodies
are the PSD matrices satisfying those constraints, and the attainable
range of a single leaf-pair correlation is found by bisecting over pinned
values with an alternating-projection feasibility oracle.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .gaussian import node_sum_variances, tree_dependent_covariance
from .tree import RootedTree, node_id

__all__ = [
    "CovarianceConstraintSet",
    "build_constraints",
    "psd_feasible",
    "extremal_correlation",
    "ExtremalResult",
    "symmetric_tree_constraints",
    "symmetric_tree_dep_corr",
]


class CovarianceConstraintSet:
    """Affine description of the covariances a tree model can induce.

    ``fixed`` maps entry (i, j), i < j, to its pinned value; ``sums`` is a
    list of (entries, rhs) with each off-diagonal entry appearing in
    exactly one place overall. ``objective`` is the entry whose range is
    being explored, or None.
    """

    def __init__(self, leaf_order, variances, fixed, sums, tree_dep, objective=None):
        self.leaf_order = tuple(leaf_order)
        self.variances = np.asarray(variances, dtype=float)
        self.fixed = dict(fixed)
        self.sums = [(tuple(e), float(r)) for e, r in sums]
        self.tree_dep = np.asarray(tree_dep, dtype=float)
        self.objective = self._entry(objective) if objective is not None else None

    @property
    def dim(self):
        return len(self.leaf_order)

    def _entry(self, pair):
        a, b = pair
        idx = []
        for x in (a, b):
            if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
                k = int(x)
                if not 0 <= k < self.dim:
                    raise ValueError(f"leaf index {k} out of range")
            else:
                node = node_id(x)
                if node not in self.leaf_order:
                    raise ValueError(f"{x!r} is not a leaf of this model")
                k = self.leaf_order.index(node)
            idx.append(k)
        i, j = sorted(idx)
        if i == j:
            raise ValueError("objective must name two distinct leaves")
        return (i, j)

    def with_objective(self, pair):
        return CovarianceConstraintSet(
            self.leaf_order, self.variances, self.fixed, self.sums,
            self.tree_dep, objective=pair,
        )

    def tree_dep_matrix(self):
        return self.tree_dep.copy()

    def residual(self, matrix):
        """Largest absolute constraint violation of ``matrix``."""
        m = np.asarray(matrix, dtype=float)
        worst = float(np.max(np.abs(np.diag(m) - self.variances)))
        for (i, j), v in self.fixed.items():
            worst = max(worst, abs(m[i, j] - v))
        for entries, rhs in self.sums:
            total = sum(m[i, j] for i, j in entries)
            worst = max(worst, abs(total - rhs))
        return worst


def build_constraints(tree, leaf_variances, copula_corrs, objective=None):
    """Covariance constraints induced by a tree's second moments.

    ``leaf_variances`` maps leaf to variance, ``copula_corrs`` maps each
    branching node to its copula correlation matrix. ``objective``, if
    given, is a pair of leaves (ids or indices).
    """
    leaves = tree.leaves()
    index = {leaf: k for k, leaf in enumerate(leaves)}
    variances = [float(leaf_variances[leaf]) for leaf in leaves]
    var_sum = node_sum_variances(tree, leaf_variances, copula_corrs)
    fixed = {}
    sums = []
    for node in tree.branching():
        children = tree.children(node)
        r = np.asarray(copula_corrs[node], dtype=float)
        sd = [math.sqrt(max(var_sum[c], 0.0)) for c in children]
        for i in range(len(children)):
            for j in range(i + 1, len(children)):
                rhs = r[i, j] * sd[i] * sd[j]
                entries = tuple(sorted(
                    (min(index[a], index[b]), max(index[a], index[b]))
                    for a in tree.leaf_descendants(children[i])
                    for b in tree.leaf_descendants(children[j])
                ))
                if len(entries) == 1:
                    fixed[entries[0]] = rhs
                else:
                    sums.append((entries, rhs))
    _, tree_dep = tree_dependent_covariance(tree, leaf_variances, copula_corrs)
    return CovarianceConstraintSet(leaves, variances, fixed, sums, tree_dep, objective)


def symmetric_tree_constraints(depth, rho, objective=None):
    """Constraints of the symmetric binary tree with unit leaf variances
    and the same pairwise correlation ``rho`` at every branching node."""
    tree = RootedTree.symmetric_binary(depth)
    corr = np.array([[1.0, rho], [rho, 1.0]])
    leaf_vars = {leaf: 1.0 for leaf in tree.leaves()}
    corrs = {node: corr for node in tree.branching()}
    return build_constraints(tree, leaf_vars, corrs, objective)


def symmetric_tree_dep_corr(levels_up, rho):
    """Tree dependent leaf-pair correlation in the symmetric binary tree.

    ``levels_up`` counts branching levels from the leaves to the pair's
    meeting node (1 for siblings).
    """
    k = int(levels_up)
    if k < 1:
        raise ValueError("levels_up must be at least 1")
    if not -1.0 < rho <= 1.0:
        raise ValueError(f"rho must lie in (-1, 1], got {rho}")
    return rho * (1.0 + rho) ** (k - 1) / 2.0 ** (k - 1)


def psd_feasible(matrix, tol=1e-9):
    """Whether ``matrix`` is PSD up to ``tol``; returns (ok, min eigenvalue)."""
    m = np.asarray(matrix, dtype=float)
    lam = float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])
    return lam >= -tol, lam


@dataclass(frozen=True)
class ExtremalResult:
    """Outcome of an extremal correlation search."""

    value: float
    covariance: float
    witness: np.ndarray
    status: str
    info: dict = field(default_factory=dict)


def _psd_project(m):
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    np.clip(w, 0.0, None, out=w)
    return (v * w) @ v.T


def _affine_projector(dim, variances, fixed, sums):
    diag = np.arange(dim)
    f_rows = np.array([i for i, _ in fixed], dtype=np.intp)
    f_cols = np.array([j for _, j in fixed], dtype=np.intp)
    f_vals = np.array([fixed[e] for e in fixed], dtype=float)
    blocks = [
        (np.array([i for i, _ in entries], dtype=np.intp),
         np.array([j for _, j in entries], dtype=np.intp),
         rhs, len(entries))
        for entries, rhs in sums
    ]

    def project(m):
        out = m.copy()
        out[diag, diag] = variances
        out[f_rows, f_cols] = f_vals
        out[f_cols, f_rows] = f_vals
        for rows, cols, rhs, k in blocks:
            shift = (rhs - out[rows, cols].sum()) / k
            out[rows, cols] += shift
            out[cols, rows] = out[rows, cols]
        return out

    return project


def _pin(constraints, value):
    """Fixed entries and sum constraints with the objective pinned."""
    obj = constraints.objective
    fixed = dict(constraints.fixed)
    fixed[obj] = value
    sums = []
    for entries, rhs in constraints.sums:
        if obj in entries:
            rest = tuple(e for e in entries if e != obj)
            if len(rest) == 1:
                fixed[rest[0]] = rhs - value
            elif rest:
                sums.append((rest, rhs - value))
        else:
            sums.append((entries, rhs))
    return fixed, sums


_FEASIBLE, _INFEASIBLE, _STALLED, _EXHAUSTED = range(4)

_PSD_TOL = 1e-9


def _pin_structure(constraints):
    """Orthonormal basis of the affine set's null space once the objective
    is pinned. Free entries get a single-pair matrix; a sum group of size
    g contributes the g-1 zero-sum directions over its support."""
    fixed, sums = _pin(constraints, 0.0)
    dim = constraints.dim
    in_sum = {e for entries, _ in sums for e in entries}
    root2 = math.sqrt(2.0)
    basis = []
    for a in range(dim):
        for b in range(a + 1, dim):
            if (a, b) in fixed or (a, b) in in_sum:
                continue
            m = np.zeros((dim, dim))
            m[a, b] = m[b, a] = 1.0 / root2
            basis.append(m)
    for entries, _ in sums:
        g = len(entries)
        for k in range(1, g):
            v = np.zeros(g)
            v[:k] = 1.0
            v[k] = -float(k)
            v /= np.linalg.norm(v) * root2
            m = np.zeros((dim, dim))
            for val, (a, b) in zip(v, entries):
                m[a, b] = m[b, a] = val
            basis.append(m)
    if not basis:
        return np.zeros((0, dim, dim))
    return np.stack(basis)


def _max_lambda_min(x0, basis, scale):
    """Maximize the smallest eigenvalue over x0 + span(basis).

    Smoothed concave maximization: the soft minimum -mu log sum exp(-l/mu)
    is sharpened over a decreasing mu schedule with warm starts. Returns
    the exact smallest eigenvalue at the final point and the point itself.
    """
    if len(basis) == 0:
        return float(np.linalg.eigvalsh(x0)[0]), x0

    def negated(z, mu):
        m = x0 + np.tensordot(z, basis, axes=1)
        lam, vec = np.linalg.eigh(m)
        a = -lam / mu
        a_max = a.max()
        w = np.exp(a - a_max)
        total = w.sum()
        f = -mu * (a_max + math.log(total))
        g = (vec * (w / total)) @ vec.T
        grad = np.tensordot(basis, g, axes=([1, 2], [0, 1]))
        return -f, -grad

    z = np.zeros(len(basis))
    for mu in (1e-2 * scale, 1e-4 * scale, 1e-6 * scale, 3e-9 * scale):
        res = minimize(negated, z, args=(mu,), jac=True, method="L-BFGS-B",
                       options={"maxiter": 300, "ftol": 1e-18, "gtol": 1e-12})
        z = res.x
    m = x0 + np.tensordot(z, basis, axes=1)
    m = 0.5 * (m + m.T)
    return float(np.linalg.eigvalsh(m)[0]), m


def _probe(start, project, residual_tol, stall_floor, stall_window, max_steps):
    """Dykstra alternating projections; classifies the pinned problem.

    Feasibility is only ever declared with a witness in hand: an iterate
    on the affine set whose smallest eigenvalue clears -1e-9.
    """
    y = project(start)
    lam = float(np.linalg.eigvalsh(y)[0])
    if lam >= -_PSD_TOL:
        return _FEASIBLE, y, 0
    s = np.zeros_like(y)
    best = math.inf
    since = 0
    for step in range(1, max_steps + 1):
        r = y - s
        x = _psd_project(r)
        s = x - r
        y = project(x)
        res = float(np.linalg.norm(x - y))
        if res <= residual_tol or step % 64 == 0:
            lam = float(np.linalg.eigvalsh(y)[0])
            if lam >= -_PSD_TOL:
                return _FEASIBLE, y, step
        if res < best * 0.99:
            best = res
            since = 0
        else:
            since += 1
        if since >= stall_window:
            if best > stall_floor:
                return _INFEASIBLE, y, step
            lam = float(np.linalg.eigvalsh(y)[0])
            if lam >= -_PSD_TOL:
                return _FEASIBLE, y, step
            return _STALLED, y, step
    lam = float(np.linalg.eigvalsh(y)[0])
    if lam >= -_PSD_TOL:
        return _FEASIBLE, y, max_steps
    return _EXHAUSTED, y, max_steps


def extremal_correlation(constraints, direction, bracket_tol=1e-7,
                         residual_tol=1e-8, stall_floor=1e-6,
                         stall_window=2000, max_steps=50000):
    """Largest or smallest attainable correlation for the objective pair.

    Bisects the pinned objective value between the tree dependent value
    and the requested bound. Each pin is tested by projecting onto the
    pinned affine set and maximizing the smallest eigenvalue over its
    null space; pins this polish cannot settle fall back to Dykstra
    alternating projections between the affine set and the PSD cone,
    declared infeasible when the projection residual stalls above
    ``stall_floor`` for ``stall_window`` consecutive steps. Feasibility
    is only ever declared with a witness on the affine set whose
    smallest eigenvalue clears -1e-9, so the returned witness satisfies
    every constraint to rounding and passes the PSD check. Status is
    "optimal" unless some probe ran out of projection steps, in which
    case it is "budget_exhausted" and the value is a certified lower
    estimate of the range endpoint.
    """
    if constraints.objective is None:
        raise ValueError("constraint set has no objective pair")
    if direction not in ("max", "min"):
        raise ValueError(f"direction must be 'max' or 'min', got {direction!r}")
    i, j = constraints.objective
    scale = math.sqrt(constraints.variances[i] * constraints.variances[j])
    eig_scale = float(np.max(constraints.variances))
    base = constraints.tree_dep_matrix()
    basis = _pin_structure(constraints)
    info = {"direction": direction, "probes": 0, "steps": 0,
            "stall_floor": stall_floor, "stall_window": stall_window,
            "max_steps": max_steps}

    if constraints.objective in constraints.fixed:
        t = constraints.fixed[constraints.objective]
        return ExtremalResult(t / scale, t, base, "optimal", info)

    def attempt(t, settle=True):
        fixed, sums = _pin(constraints, t)
        project = _affine_projector(constraints.dim, constraints.variances,
                                    fixed, sums)
        start = base.copy()
        start[i, j] = start[j, i] = t
        info["probes"] += 1
        y = project(start)
        if float(np.linalg.eigvalsh(y)[0]) >= -_PSD_TOL:
            return _FEASIBLE, y
        lam, m = _max_lambda_min(y, basis, eig_scale)
        if lam >= -_PSD_TOL:
            return _FEASIBLE, m
        if len(basis) == 0 or lam < -1e-8 * eig_scale or not settle:
            return _INFEASIBLE, m
        verdict, y, steps = _probe(m, project, residual_tol, stall_floor,
                                   stall_window, max_steps)
        info["steps"] += steps
        return verdict, y

    sign = 1.0 if direction == "max" else -1.0
    exhausted = False

    verdict, y = attempt(sign * scale, settle=False)
    if verdict == _FEASIBLE:
        return ExtremalResult(sign, sign * scale, y, "optimal", info)

    lo = float(base[i, j])
    hi = sign * scale
    verdict, lo_wit = attempt(lo)
    if verdict != _FEASIBLE:
        # the tree dependent matrix itself realizes lo
        lo_wit = base
    while abs(hi - lo) > bracket_tol * scale:
        t = 0.5 * (lo + hi)
        verdict, y = attempt(t)
        if verdict == _FEASIBLE:
            lo, lo_wit = t, y
        else:
            exhausted |= verdict == _EXHAUSTED
            hi = t
    status = "budget_exhausted" if exhausted else "optimal"
    info["bracket"] = (lo / scale, hi / scale)
    return ExtremalResult(lo / scale, lo, lo_wit, status, info)
