"""Experiment runners emitting reproducible CSV summaries.

Each runner consumes an :class:`ExperimentConfig`, generates data from
its seed, compares the constructed transformers against closed-form or
iterative oracles, and writes plain CSV so plotting stays external.
Re-running with the same config yields byte-identical files.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import builders, datagen, inversion, logistic
from .inversion import MAX_ORDER
from .linalg import spectral_norm_est, solve_spd
from .transformer import model_forward

__all__ = [
    "ExperimentConfig",
    "run_invert_experiment",
    "run_linreg_experiment",
    "run_logreg_experiment",
]

_TASKS = ("invert", "linreg", "logreg")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated bundle of experiment knobs shared by all subcommands."""

    task: str
    d: int = 8
    n: int = 50
    kappa: float = 100.0
    noise_std: float = 0.0
    mu: float = 0.1
    eps: float = 1e-2
    orders: tuple = (2, 3)
    t_max: int = 20
    seed: int = 0
    out_dir: str = "."
    batch: int = 16

    def __post_init__(self):
        if self.task not in _TASKS:
            raise ValueError(f"task must be one of {_TASKS}, got {self.task!r}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.kappa < 1.0:
            raise ValueError(f"kappa must be >= 1, got {self.kappa}")
        if self.noise_std < 0.0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")
        if not self.eps > 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.t_max < 1:
            raise ValueError(f"t_max must be >= 1, got {self.t_max}")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")
        orders = tuple(int(o) for o in self.orders)
        if not orders:
            raise ValueError("orders must be nonempty")
        for o in orders:
            if not 2 <= o <= MAX_ORDER:
                raise ValueError(f"orders must lie in [2, {MAX_ORDER}], got {o}")
        object.__setattr__(self, "orders", orders)
        if self.task in ("linreg", "logreg"):
            if self.n < self.d:
                raise ValueError(f"need n >= d, got n={self.n}, d={self.d}")
            if self.task == "logreg" and not self.mu > 0.0:
                raise ValueError(f"logreg needs mu > 0, got {self.mu}")
            if self.task == "linreg" and self.mu < 0.0:
                raise ValueError(f"ridge mu must be >= 0, got {self.mu}")


def _write_csv(path, header, rows):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def _fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def run_invert_experiment(cfg):
    """Residual traces of run_inverse per order on one SPD matrix."""
    if cfg.task != "invert":
        raise ValueError(f"config task is {cfg.task!r}, expected 'invert'")
    rng = np.random.default_rng(cfg.seed)
    a = datagen.make_covariance(cfg.d, cfg.kappa, rng)
    rows = []
    for order in cfg.orders:
        run = inversion.run_inverse(
            a, order=order, tol=cfg.eps, max_iters=cfg.t_max
        )
        for step, residual in enumerate(run.residuals):
            rows.append((order, step, residual))
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "invert.csv")
    return [_write_csv(path, "order,step,residual_frobenius", rows)]


def run_linreg_experiment(cfg):
    """Prediction MSE versus depth for the constructed least-squares
    transformer, hyperpower oracles sharing its initialization, and the
    closed-form solver, over a batch of fresh prompts.

    The squared error is measured against the clean target
    a_test . w_star, so the closed-form row is the attainable floor.
    """
    if cfg.task != "linreg":
        raise ValueError(f"config task is {cfg.task!r}, expected 'linreg'")
    prompts = []
    for item in range(cfg.batch):
        item_cfg = ExperimentConfig(
            task="linreg", d=cfg.d, n=cfg.n, kappa=cfg.kappa,
            noise_std=cfg.noise_std, mu=cfg.mu, eps=cfg.eps,
            orders=cfg.orders, t_max=cfg.t_max,
            seed=cfg.seed + item, out_dir=cfg.out_dir, batch=1,
        )
        a, y, a_test, w_star = datagen.gen_linreg_data(item_cfg)
        gram = a.T @ a + cfg.mu * np.eye(cfg.d)
        alpha = 2.0 * builders.INIT_SAFETY / spectral_norm_est(gram) ** 2
        prompts.append({
            "a": a, "y": y, "a_test": a_test,
            "target": float(a_test @ w_star),
            "gram": gram, "alpha": alpha,
            "aty": a.T @ y,
        })

    def mse(preds):
        errs = [(p - item["target"]) ** 2
                for p, item in zip(preds, prompts)]
        return float(np.mean(errs))

    rows = []
    ls_preds = [
        float(item["a_test"] @ solve_spd(item["gram"], item["aty"][:, None])[:, 0])
        for item in prompts
    ]
    oracle_x = {
        order: [item["alpha"] * item["gram"] for item in prompts]
        for order in cfg.orders
    }
    for t in range(1, cfg.t_max + 1):
        tf_preds = []
        for item in prompts:
            layers, layout = builders.build_linreg_transformer(
                cfg.d, cfg.n, t, item["alpha"], ridge_mu=cfg.mu
            )
            h = model_forward(
                layers,
                builders.make_linreg_prompt(item["a"], item["y"], item["a_test"]),
            )
            tf_preds.append(builders.read_linreg_prediction(h, layout))
        rows.append(("constructed", 2, t, mse(tf_preds)))
        for order in cfg.orders:
            preds = []
            for idx, item in enumerate(prompts):
                x = inversion.hyperpower_step(
                    oracle_x[order][idx], item["gram"], order
                )
                oracle_x[order][idx] = x
                preds.append(float(item["a_test"] @ x @ item["aty"]))
            rows.append((f"newton_order_{order}", order, t, mse(preds)))
        rows.append(("least_squares", 0, t, mse(ls_preds)))
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "linreg.csv")
    return [_write_csv(path, "method,order,steps,mse", rows)]


def run_logreg_experiment(cfg):
    """Loss traces for exact, error-injected, and constructed Newton.

    All three traces run exactly t_max steps from x0 = 0; the CSV
    carries a layers_per_step column (the constructed depth 11 + 2k)
    so loss-versus-layers plots can be drawn externally.
    """
    if cfg.task != "logreg":
        raise ValueError(f"config task is {cfg.task!r}, expected 'logreg'")
    problem, _ = datagen.gen_logreg_data(cfg)
    budget = builders.width_depth_budget(cfg.eps, cfg.mu, d=cfg.d)
    x_star, g_star = logistic.optimum(problem)

    x0 = np.zeros(cfg.d)
    exact = [x0]
    for _ in range(cfg.t_max):
        exact.append(logistic.damped_step(problem, exact[-1]).x)
    source = logistic.bounded_error_source(cfg.eps, cfg.d, cfg.seed + 1)
    inexact = [x0]
    for step in range(cfg.t_max):
        state = logistic.damped_step(
            problem, inexact[-1], injected_error=source(step)
        )
        inexact.append(state.x)
    constructed = builders.run_constructed_newton(
        problem, x0, budget, cfg.t_max
    )

    rows = []
    for method, xs in (
        ("exact_newton", exact),
        ("inexact_newton", inexact),
        ("constructed", constructed),
    ):
        for step, x in enumerate(xs):
            f_val, _, _ = logistic.loss_grad_hess(problem, x)
            g_sub = f_val / (4.0 * cfg.mu) - g_star
            rows.append((method, step, budget.depth, f_val, g_sub))
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "logreg.csv")
    header = "method,step,layers_per_step,f,g_suboptimality"
    return [_write_csv(path, header, rows)]
