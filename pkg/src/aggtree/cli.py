"""Command line surface: JSON model configs in, CSV numbers out.

Subcommands cover model validation, the two sampling algorithms, the
exact Gaussian law, three-leaf correlation bounds, extremal correlation
search, and canned experiment presets. All runs are seeded; identical
invocations produce byte-identical output files.
"""
import argparse
import json
import math
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from ._rng import node_stream
from .distributions import Discrete, GaussianCopula, Independence, Normal
from .errors import (
    AggTreeError,
    GenerationBudgetError,
    InfeasibleCorrelationError,
    SupportSizeError,
)
from .feasible import (
    build_constraints,
    extremal_correlation,
    psd_feasible,
    symmetric_tree_constraints,
    symmetric_tree_dep_corr,
)
from .gaussian import (
    ellipse_parameters,
    model_second_moments,
    three_leaf_corr_interval,
    three_leaf_covariance,
    tree_dependent_law,
)
from .mra import run_mra
from .reorder import run_reordering
from .stats import henze_zirkler, sample_mean_cov
from .tree import ROOT, AggregationTreeModel, RootedTree, node_id, node_label

__all__ = ["main", "model_from_config", "config_echo", "PRESETS"]


class ConfigError(ValueError):
    """A config file that parses as JSON but does not describe a model."""


def _require(mapping, key, where):
    if key not in mapping:
        raise ConfigError(f"{where} is missing required field {key!r}")
    return mapping[key]


def _marginal_from_spec(spec, where):
    kind = _require(spec, "type", where)
    if kind == "normal":
        return Normal(float(_require(spec, "mean", where)),
                      float(_require(spec, "var", where)))
    if kind == "discrete":
        return Discrete(_require(spec, "support", where),
                        _require(spec, "probs", where))
    raise ConfigError(f"{where}: unknown marginal type {kind!r}")


def _copula_from_spec(spec, arity, where):
    kind = _require(spec, "type", where)
    if kind == "independence":
        return Independence(arity)
    if kind == "gaussian":
        if "rho" in spec:
            if arity != 2:
                raise ConfigError(
                    f"{where}: 'rho' shorthand needs a binary node, arity is {arity}"
                )
            return GaussianCopula.bivariate(float(spec["rho"]))
        corr = np.asarray(_require(spec, "correlation", where), dtype=float)
        return GaussianCopula(corr)
    raise ConfigError(f"{where}: unknown copula type {kind!r}")


def model_from_config(cfg):
    """Build (model, seed, n) from a parsed config dict.

    seed and n are returned as ints or None when absent; commands that
    need them enforce their presence.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    tree = RootedTree.from_nested(_require(cfg, "tree", "config"))
    marginals = {}
    for label, spec in _require(cfg, "marginals", "config").items():
        marginals[node_id(label)] = _marginal_from_spec(spec, f"marginal {label!r}")
    copulas = {}
    for label, spec in _require(cfg, "copulas", "config").items():
        node = node_id(label)
        # misplaced copulas get a placeholder arity; validate() reports them
        arity = tree.arity(node) if node in tree and tree.arity(node) > 0 else 2
        copulas[node] = _copula_from_spec(spec, arity, f"copula {label!r}")
    model = AggregationTreeModel(tree, marginals, copulas)
    seed = cfg.get("seed")
    n = cfg.get("n")
    return model, (None if seed is None else int(seed)), (None if n is None else int(n))


def _marginal_spec(dist):
    if isinstance(dist, Normal):
        return {"type": "normal", "mean": dist.mean, "var": dist.variance}
    if isinstance(dist, Discrete):
        return {"type": "discrete", "support": dist.support.tolist(),
                "probs": dist.probs.tolist()}
    raise ConfigError(f"cannot serialize marginal {dist!r}")


def _copula_spec(copula):
    if isinstance(copula, Independence):
        return {"type": "independence"}
    if isinstance(copula, GaussianCopula):
        return {"type": "gaussian", "correlation": copula.correlation.tolist()}
    raise ConfigError(f"cannot serialize copula {copula!r}")


def config_echo(model, seed=None, n=None):
    """Normalized config dict; re-parsing it rebuilds the same model."""
    cfg = {
        "tree": model.tree.to_nested(),
        "marginals": {node_label(k): _marginal_spec(v)
                      for k, v in sorted(model.marginals.items())},
        "copulas": {node_label(k): _copula_spec(v)
                    for k, v in sorted(model.copulas.items())},
    }
    if seed is not None:
        cfg["seed"] = int(seed)
    if n is not None:
        cfg["n"] = int(n)
    return cfg


def _fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    return f"{float(value):.17g}"


@contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as handle:
            yield handle


def _write_csv(handle, header, rows):
    handle.write(",".join(header) + "\n")
    for row in rows:
        handle.write(",".join(_fmt(cell) for cell in row) + "\n")


def _load_config(path):
    with open(path) as handle:
        return json.load(handle)


def _need(value, flag, name):
    if flag is not None:
        return int(flag)
    if value is None:
        raise ConfigError(f"{name} must be set in the config or by flag")
    return int(value)


def cmd_validate(args):
    cfg = _load_config(args.config)
    model, seed, n = model_from_config(cfg)
    violations = model.validate()
    if violations:
        for line in violations:
            print(f"invalid: {line}", file=sys.stderr)
        return 2
    if args.echo:
        json.dump(config_echo(model, seed, n), sys.stdout, indent=2, sort_keys=True)
        print()
    else:
        print("ok")
    return 0


def cmd_sample(args):
    cfg = _load_config(args.config)
    model, seed, n = model_from_config(cfg)
    seed = _need(seed, args.seed, "seed")
    n = _need(n, args.n, "n")
    if args.algorithm == "mra":
        out = run_mra(model, n, seed, budget=args.budget)
        block, leaf_order = out.realizations, out.leaf_order
    else:
        atoms = run_reordering(model, n, seed)[ROOT]
        block, leaf_order = atoms.composition, atoms.leaf_order
    header = [node_label(leaf) for leaf in leaf_order]
    with _open_out(args.out) as handle:
        _write_csv(handle, header, block)
    return 0


def cmd_treedep(args):
    cfg = _load_config(args.config)
    model, _, _ = model_from_config(cfg)
    law = tree_dependent_law(model)
    labels = [node_label(leaf) for leaf in law.leaf_order]
    rows = [
        [label, law.mean[i]] + list(law.covariance[i])
        for i, label in enumerate(labels)
    ]
    with _open_out(args.out) as handle:
        _write_csv(handle, ["leaf", "mean"] + labels, rows)
    return 0


def cmd_bounds3(args):
    interval = three_leaf_corr_interval(args.sigma1, args.sigma2, args.sigma3,
                                        args.rho12, args.rho_root)
    header = ["sigma1", "sigma2", "sigma3", "rho12", "rho_root",
              "min", "mid", "half_length", "max", "tree_dep", "degenerate"]
    row = [args.sigma1, args.sigma2, args.sigma3, args.rho12, args.rho_root,
           interval.min, interval.mid, interval.half_length, interval.max,
           interval.tree_dep, interval.degenerate]
    if args.rho13 is not None:
        cov = three_leaf_covariance(args.sigma1, args.sigma2, args.sigma3,
                                    args.rho12, args.rho_root, args.rho13)
        _, lam = psd_feasible(cov)
        header += ["rho13", "sigma13", "sigma23", "lambda_min"]
        row += [args.rho13, cov[0, 2], cov[1, 2], lam]
    if args.ellipse:
        ell = ellipse_parameters(args.sigma1, args.sigma2, args.sigma3,
                                 args.rho12, args.rho_root)
        header += ["u", "v", "x0", "a", "b"]
        row += [ell["u"], ell["v"], ell["x0"], ell["a"], ell["b"]]
    with _open_out(args.out) as handle:
        _write_csv(handle, header, [row])
    return 0


def cmd_extremal(args):
    cfg = _load_config(args.config)
    model, _, _ = model_from_config(cfg)
    pair = [part.strip() for part in args.pair.split(",")]
    if len(pair) != 2:
        raise ConfigError(f"--pair must name two leaves, got {args.pair!r}")
    leaf_vars, corrs = model_second_moments(model)
    constraints = build_constraints(model.tree, leaf_vars, corrs, objective=pair)
    directions = ["max", "min"] if args.direction == "both" else [args.direction]
    results = {d: extremal_correlation(constraints, d, bracket_tol=args.bracket_tol)
               for d in directions}
    for d, res in results.items():
        print(f"direction={d} value={_fmt(res.value)} "
              f"covariance={_fmt(res.covariance)} status={res.status}")
    if args.out:
        labels = [node_label(leaf) for leaf in constraints.leaf_order]
        rows = []
        for d, res in results.items():
            for label, wrow in zip(labels, res.witness):
                rows.append([d, label] + list(wrow))
        with _open_out(args.out) as handle:
            _write_csv(handle, ["direction", "leaf"] + labels, rows)
    if any(res.status == "budget_exhausted" for res in results.values()):
        return 3
    return 0


def _four_leaf_model():
    """Two groups of two normal leaves, Gaussian copulas throughout."""
    tree = RootedTree.from_nested(
        {"children": [{"children": [{}, {}]}, {"children": [{}, {}]}]}
    )
    marginals = {
        (1, 1): Normal(4.0, 3.0),
        (1, 2): Normal(2.0, 4.0),
        (2, 1): Normal(0.0, 10.0),
        (2, 2): Normal(3.0, 2.0),
    }
    copulas = {
        (1,): GaussianCopula.bivariate(0.7),
        (2,): GaussianCopula.bivariate(0.5),
        ROOT: GaussianCopula.bivariate(0.2),
    }
    return AggregationTreeModel(tree, marginals, copulas)


def _regroup_models():
    """Two groupings of three standard normal risks X, Y, Z.

    The first groups (X, Y) at correlation 0.5 with Z independent on top;
    the second groups (X, Z) independently and couples their sum to Y.
    Returns (first, second, display) where display maps each model's leaf
    order to the common X, Y, Z order.
    """
    two_then_one = RootedTree.from_nested({"children": [{"children": [{}, {}]}, {}]})
    std = Normal(0.0, 1.0)
    first = AggregationTreeModel(
        two_then_one,
        {(1, 1): std, (1, 2): std, (2,): std},
        {(1,): GaussianCopula.bivariate(0.5), ROOT: Independence(2)},
    )
    second = AggregationTreeModel(
        two_then_one,
        {(1, 1): std, (1, 2): std, (2,): std},
        {(1,): Independence(2),
         ROOT: GaussianCopula.bivariate(1.0 / (2.0 * math.sqrt(2.0)))},
    )
    display = {"first": [0, 1, 2], "second": [0, 2, 1]}
    return first, second, display


def _summary(out_dir, lines):
    text = "".join(f"{k}={_fmt(v)}\n" for k, v in lines)
    (Path(out_dir) / "summary.txt").write_text(text)
    sys.stdout.write(text)


def _write_matrix(path, labels, matrix, means=None):
    rows = []
    for i, label in enumerate(labels):
        row = [label]
        if means is not None:
            row.append(means[i])
        row.extend(matrix[i])
        rows.append(row)
    header = ["leaf"] + (["mean"] if means is not None else []) + list(labels)
    with open(path, "w", newline="") as handle:
        _write_csv(handle, header, rows)


def _preset_four_leaf(out_dir, n, seed, _grid):
    n = 10**6 if n is None else n
    seed = 1234 if seed is None else seed
    model = _four_leaf_model()
    law = tree_dependent_law(model)
    labels = [node_label(leaf) for leaf in law.leaf_order]
    _write_matrix(Path(out_dir) / "treedep.csv", labels, law.covariance, law.mean)

    atoms = run_reordering(model, n, seed)[ROOT]
    mean, cov = sample_mean_cov(atoms.composition)
    _write_matrix(Path(out_dir) / "sample_cov.csv", labels, cov, mean)

    sub = min(10**4, n)
    pick = node_stream(seed, "subsample").choice(n, size=sub, replace=False)
    hz = henze_zirkler(atoms.composition[pick], seed=seed)
    _summary(out_dir, [
        ("n", n),
        ("seed", seed),
        ("max_abs_cov_deviation", float(np.max(np.abs(cov - law.covariance)))),
        ("hz_statistic", hz.statistic),
        ("hz_p_value", hz.p_value),
    ])
    return 0


def _preset_regroup(out_dir, _n, _seed, _grid):
    first, second, display = _regroup_models()
    labels = ["x", "y", "z"]
    covs = {}
    for name, model in (("first", first), ("second", second)):
        law = tree_dependent_law(model)
        perm = display[name]
        cov = law.covariance[np.ix_(perm, perm)]
        covs[name] = cov
        _write_matrix(Path(out_dir) / f"{name}_grouping.csv", labels, cov)
    diff = float(np.max(np.abs(covs["first"] - covs["second"])))
    _summary(out_dir, [
        ("max_abs_difference", diff),
        ("covariances_equal", diff == 0.0),
    ])
    return 0


def _interval_row(s1, s2, s3, r12, r0):
    iv = three_leaf_corr_interval(s1, s2, s3, r12, r0)
    return [s1, s2, s3, r12, r0, iv.min, iv.mid, iv.half_length, iv.max,
            iv.tree_dep, iv.degenerate], iv


_BOUNDS_HEADER = ["sigma1", "sigma2", "sigma3", "rho12", "rho_root",
                  "min", "mid", "half_length", "max", "tree_dep", "degenerate"]


def _preset_scale_limits(out_dir, _n, _seed, _grid):
    big = 1e6
    rows = []
    errors = {"case1": 0.0, "case2": 0.0, "case3": 0.0}
    small = [-0.9, -0.4, 0.0, 0.4, 0.9]
    for r12 in small:
        for r0 in small:
            row, iv = _interval_row(big, 1.0, 1.0, r12, r0)
            rows.append(["case1"] + row)
            errors["case1"] = max(errors["case1"],
                                  abs(iv.min - r0), abs(iv.max - r0))
            row, iv = _interval_row(1.0, big, 1.0, r12, r0)
            rows.append(["case2"] + row)
            width = math.sqrt((1.0 - r12**2) * (1.0 - r0**2))
            errors["case2"] = max(errors["case2"],
                                  abs(iv.min - (r0 * r12 - width)),
                                  abs(iv.max - (r0 * r12 + width)))
            base = three_leaf_corr_interval(1.0, 2.0, 1.0, r12, r0)
            for s3 in (0.5, 1.0, 2.0, 10.0):
                row, iv = _interval_row(1.0, 2.0, s3, r12, r0)
                rows.append(["case3"] + row)
                errors["case3"] = max(errors["case3"],
                                      abs(iv.min - base.min), abs(iv.max - base.max))
    with open(Path(out_dir) / "limits.csv", "w", newline="") as handle:
        _write_csv(handle, ["case"] + _BOUNDS_HEADER, rows)
    _summary(out_dir, [
        ("case1_max_error", errors["case1"]),
        ("case2_max_error", errors["case2"]),
        ("case3_max_error", errors["case3"]),
    ])
    return 0


def _preset_interval_length(out_dir, _n, _seed, grid):
    grid = grid if grid is not None else [round(-1.0 + 0.1 * k, 10) for k in range(21)]
    rows = []
    max_length = -math.inf
    for r12 in grid:
        for r0 in grid:
            row, iv = _interval_row(1.0, 1.0, 1.0, r12, r0)
            length = iv.max - iv.min
            rows.append([length] + row)
            max_length = max(max_length, length)
    with open(Path(out_dir) / "lengths.csv", "w", newline="") as handle:
        _write_csv(handle, ["length"] + _BOUNDS_HEADER, rows)
    _, corner = _interval_row(1.0, 1.0, 1.0, -1.0, 0.0)
    _summary(out_dir, [
        ("max_length", max_length),
        ("length_at_rho12_-1_rho_root_0", corner.max - corner.min),
    ])
    return 0


def _preset_interval_position(out_dir, _n, _seed, grid):
    grid = grid if grid is not None else [round(-1.0 + 0.25 * k, 10) for k in range(9)]
    rows = []
    off_center = 0.0
    comonotone_width = 0.0
    for r12 in grid:
        for r0 in grid:
            row, iv = _interval_row(1.0, 1.0, 1.0, r12, r0)
            rows.append(row)
            if not iv.degenerate:
                off_center = max(off_center, abs(iv.tree_dep - iv.mid))
                if r12 == 1.0:
                    comonotone_width = max(comonotone_width, iv.max - iv.min)
    with open(Path(out_dir) / "intervals.csv", "w", newline="") as handle:
        _write_csv(handle, _BOUNDS_HEADER, rows)
    _summary(out_dir, [
        ("max_abs_treedep_minus_mid", off_center),
        ("comonotone_max_width", comonotone_width),
    ])
    return 0


def _preset_insurers(out_dir, _n, _seed, _grid):
    rows = []
    sqrt2 = math.sqrt(2.0)
    row, iv1 = _interval_row(1.0, sqrt2, 1.0, -1.0 / sqrt2, 0.0)
    rows.append(["insurer1"] + row)
    row, iv2 = _interval_row(1.0, 1.0, sqrt2, 1.0, -1.0 / sqrt2)
    rows.append(["insurer2"] + row)
    with open(Path(out_dir) / "insurers.csv", "w", newline="") as handle:
        _write_csv(handle, ["model"] + _BOUNDS_HEADER, rows)

    lam_worst = math.inf
    for a in (-1.0, 0.0, 1.0):
        cov = three_leaf_covariance(1.0, sqrt2, 1.0, -1.0 / sqrt2, 0.0, a)
        _, lam = psd_feasible(cov)
        lam_worst = min(lam_worst, lam)
    cov2 = three_leaf_covariance(1.0, 1.0, sqrt2, 1.0, -1.0 / sqrt2, iv2.tree_dep)
    true_cov = np.array([[1.0, 1.0, -1.0], [1.0, 1.0, -1.0], [-1.0, -1.0, 2.0]])
    _summary(out_dir, [
        ("insurer1_min", iv1.min),
        ("insurer1_max", iv1.max),
        ("insurer1_worst_lambda_min", lam_worst),
        ("insurer2_half_length", iv2.half_length),
        ("insurer2_cov_error", float(np.max(np.abs(cov2 - true_cov)))),
    ])
    return 0


def _preset_symmetric(out_dir, _n, _seed, grid):
    grid = grid if grid is not None else [round(-0.9 + 0.3 * k, 10) for k in range(7)]
    pairs = {"pair13": ("1.1.1", "1.2.1"), "pair18": ("1.1.1", "2.2.2")}
    degree = {"pair13": 2, "pair18": 3}
    rows = []
    nesting_slack = 0.0
    inside_slack = 0.0
    for rho in grid:
        bounds = {}
        for name, pair in pairs.items():
            cs = symmetric_tree_constraints(3, rho, objective=pair)
            lo = extremal_correlation(cs, "min")
            hi = extremal_correlation(cs, "max")
            td = symmetric_tree_dep_corr(degree[name], rho)
            bounds[name] = (lo.value, hi.value)
            rows.append([rho, name, td, lo.value, hi.value, lo.status, hi.status])
            inside_slack = max(inside_slack, lo.value - td, td - hi.value)
        nesting_slack = max(nesting_slack,
                            bounds["pair18"][0] - bounds["pair13"][0],
                            bounds["pair13"][1] - bounds["pair18"][1])
    with open(Path(out_dir) / "symmetric.csv", "w", newline="") as handle:
        _write_csv(handle, ["rho", "pair", "tree_dep", "min", "max",
                            "min_status", "max_status"], rows)
    _summary(out_dir, [
        ("nesting_slack", nesting_slack),
        ("treedep_outside_slack", inside_slack),
    ])
    return 0


PRESETS = {
    "exp-3.4": _preset_four_leaf,
    "exp-4.3": _preset_regroup,
    "exp-5.ex1": _preset_scale_limits,
    "exp-5.ex2": _preset_interval_length,
    "exp-5.ex3": _preset_interval_position,
    "exp-5.ex4": _preset_insurers,
    "exp-5.sym8": _preset_symmetric,
}


def cmd_experiment(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = None
    if args.rho_grid:
        grid = [float(part) for part in args.rho_grid.split(",")]
    return PRESETS[args.preset](out_dir, args.n, args.seed, grid)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="aggtree",
        description="Hierarchical risk aggregation: sampling, exact laws, "
                    "and attainable-correlation bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model config")
    p.add_argument("config")
    p.add_argument("--echo", action="store_true",
                   help="print the normalized config as JSON")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sample", help="draw joint leaf samples as CSV")
    p.add_argument("config")
    p.add_argument("--algorithm", choices=["reorder", "mra"], default="reorder")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--budget", type=float, default=10**8,
                   help="generation budget for the mra algorithm")
    p.add_argument("--out", default=None, help="output CSV path (default stdout)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("treedep", help="exact joint law of a Gaussian model")
    p.add_argument("config")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_treedep)

    p = sub.add_parser("bounds3", help="three-leaf correlation interval")
    p.add_argument("--sigma1", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--sigma3", type=float, required=True)
    p.add_argument("--rho12", type=float, required=True)
    p.add_argument("--rho-root", type=float, required=True)
    p.add_argument("--rho13", type=float, default=None,
                   help="also complete the covariance at this correlation")
    p.add_argument("--ellipse", action="store_true",
                   help="append the feasible-ellipse parameters")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bounds3)

    p = sub.add_parser("extremal", help="attainable correlation range of a leaf pair")
    p.add_argument("config")
    p.add_argument("--pair", required=True, help="two leaf labels, e.g. '1.1,2.1'")
    p.add_argument("--direction", choices=["max", "min", "both"], default="both")
    p.add_argument("--bracket-tol", type=float, default=1e-7)
    p.add_argument("--out", default=None, help="write witness matrices as CSV")
    p.set_defaults(func=cmd_extremal)

    p = sub.add_parser("experiment", help="run a canned experiment preset")
    p.add_argument("preset", choices=sorted(PRESETS))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--rho-grid", default=None,
                   help="comma-separated grid override for grid-based presets")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (GenerationBudgetError, SupportSizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except InfeasibleCorrelationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (AggTreeError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
