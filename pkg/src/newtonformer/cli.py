"""Command-line entry point.

Five subcommands: ``invert``, ``linreg``, ``logreg`` run the CSV
experiment harness, ``budget`` prints a width/depth allocation, and
``scan-decrease`` evaluates the constant-decrease certificate grid.
Every knob can come from a flat key=value config file via ``--config``;
an explicit CLI flag wins over the file.  Exit codes: 0 on success, 2
on budget or convergence failure, 1 on usage errors.
"""

import argparse
import sys

from .builders import width_depth_budget
from .errors import BudgetError, ConvergenceError, ScanAnomalyError
from .harness import (
    ExperimentConfig,
    run_invert_experiment,
    run_linreg_experiment,
    run_logreg_experiment,
)
from .logistic import scan_constant_decrease

__all__ = ["main"]

_TASK_DEFAULTS = {
    "invert": dict(
        d=8, n=8, kappa=16.0, noise_std=0.0, mu=0.1, eps=1e-10,
        orders="2,3", t_max=60, seed=0, out_dir=".", batch=1,
    ),
    "linreg": dict(
        d=10, n=50, kappa=100.0, noise_std=0.0, mu=0.0, eps=1e-10,
        orders="2,3", t_max=30, seed=0, out_dir=".", batch=16,
    ),
    "logreg": dict(
        d=5, n=26, kappa=10.0, noise_std=0.0, mu=0.1, eps=1e-2,
        orders="2", t_max=15, seed=0, out_dir=".", batch=1,
    ),
}

_BUDGET_DEFAULTS = dict(
    eps=1e-2, mu=0.1, kappa_f=None, d=5, piece_ceiling=5_000_000
)

_FIELD_TYPES = {
    "task": str,
    "d": int,
    "n": int,
    "kappa": float,
    "noise_std": float,
    "mu": float,
    "eps": float,
    "orders": str,
    "t_max": int,
    "seed": int,
    "out_dir": str,
    "batch": int,
    "kappa_f": float,
    "piece_ceiling": int,
}

_RUNNERS = {
    "invert": run_invert_experiment,
    "linreg": run_linreg_experiment,
    "logreg": run_logreg_experiment,
}


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_orders(text):
    tokens = [tok.strip() for tok in str(text).split(",") if tok.strip()]
    if not tokens:
        raise ValueError(f"orders must be a comma-separated list, got {text!r}")
    return tuple(int(tok) for tok in tokens)


def _load_config(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key = key.strip().replace("-", "_")
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value.strip()
    return values


def _add_experiment_flags(sub):
    sub.add_argument("--config", help="flat key=value config file")
    sub.add_argument("--d", type=int)
    sub.add_argument("--n", type=int)
    sub.add_argument("--kappa", type=float)
    sub.add_argument("--noise-std", dest="noise_std", type=float)
    sub.add_argument("--mu", type=float)
    sub.add_argument("--eps", type=float)
    sub.add_argument("--orders", help="comma-separated iteration orders")
    sub.add_argument("--t-max", dest="t_max", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out-dir", dest="out_dir")
    sub.add_argument("--batch", type=int)


def _build_parser():
    parser = _Parser(prog="newtonformer", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True,
                                 parser_class=_Parser)
    for task in _RUNNERS:
        sub = subs.add_parser(task, help=f"run the {task} experiment")
        _add_experiment_flags(sub)
    budget = subs.add_parser("budget", help="print a width/depth budget")
    budget.add_argument("--config", help="flat key=value config file")
    budget.add_argument("--eps", type=float)
    budget.add_argument("--mu", type=float)
    budget.add_argument("--kappa-f", dest="kappa_f", type=float)
    budget.add_argument("--d", type=int)
    budget.add_argument("--piece-ceiling", dest="piece_ceiling", type=int)
    scan = subs.add_parser("scan-decrease",
                           help="grid-certify the constant decrease")
    scan.add_argument("--grid-x", dest="grid_x", type=int, default=500)
    scan.add_argument("--grid-c", dest="grid_c", type=int, default=500)
    return parser


def _merge(defaults, args):
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        for key, raw in _load_config(config_path).items():
            if key not in merged and key != "task":
                raise ValueError(
                    f"config key {key!r} does not apply to this subcommand"
                )
            if key == "task":
                if raw != args.command:
                    raise ValueError(
                        f"config task {raw!r} conflicts with "
                        f"subcommand {args.command!r}"
                    )
                continue
            merged[key] = _FIELD_TYPES[key](raw)
    for key in merged:
        override = getattr(args, key, None)
        if override is not None:
            merged[key] = override
    return merged


def _dispatch(args):
    if args.command in _RUNNERS:
        merged = _merge(_TASK_DEFAULTS[args.command], args)
        merged["orders"] = _parse_orders(merged["orders"])
        cfg = ExperimentConfig(task=args.command, **merged)
        for path in _RUNNERS[args.command](cfg):
            print(f"wrote {path}")
        return 0
    if args.command == "budget":
        merged = _merge(_BUDGET_DEFAULTS, args)
        report = width_depth_budget(
            merged["eps"], merged["mu"], merged["kappa_f"], merged["d"],
            piece_ceiling=merged["piece_ceiling"],
        )
        print(report.to_text())
        return 0
    maximum = scan_constant_decrease(args.grid_x, args.grid_c)
    print(f"max_decrease_bound {maximum:.17g}")
    return 0 if maximum <= -0.01 else 2


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (BudgetError, ConvergenceError, ScanAnomalyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
