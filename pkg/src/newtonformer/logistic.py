"""Regularized logistic regression and its inexact damped Newton solver.

The objective is

    f(x) = (1/n) sum_i log(1 + exp(-y_i x.a_i)) + (mu/2) ||x||^2

with unit-bounded feature rows.  Scaling by 1/(4 mu) makes the
objective standard self-concordant, which yields the usual two-phase
damped Newton analysis: a constant per-step decrease of at least 0.01
in the scaled objective while the scaled decrement is >= 1/6, then
quadratic contraction of the decrement (up to a floor set by any
injected step errors).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, ScanAnomalyError
from .linalg import solve_spd

__all__ = [
    "LogisticProblem",
    "loss_grad_hess",
    "newton_decrement",
    "scaled_decrement",
    "NewtonState",
    "damped_step",
    "IterateTrace",
    "run_inexact_newton",
    "optimum",
    "bounded_error_source",
    "omega",
    "omega_star",
    "suboptimality_bound",
    "quadratic_phase_epsilon",
    "iterate_norm_bound",
    "decrease_bound",
    "scan_constant_decrease",
]

EXP_CLAMP = 40.0
QUADRATIC_PHASE_THRESHOLD = 1.0 / 6.0


@dataclass(frozen=True)
class LogisticProblem:
    """A dataset (features, labels) with ridge weight mu.

    Feature rows must have 2-norm at most 1 and labels must be +-1;
    both are validated on construction.
    """

    features: np.ndarray
    labels: np.ndarray
    mu: float

    def __post_init__(self):
        a = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {a.shape}")
        if y.shape != (a.shape[0],):
            raise ValueError(
                f"labels must have shape ({a.shape[0]},), got {y.shape}"
            )
        if not np.all(np.isfinite(a)):
            raise ValueError("features contain non-finite entries")
        norms = np.linalg.norm(a, axis=1)
        if np.any(norms > 1.0 + 1e-12):
            raise ValueError(
                f"feature row norms must be <= 1, max is {norms.max():.6g}"
            )
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if not self.mu > 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        object.__setattr__(self, "features", a)
        object.__setattr__(self, "labels", y)

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]


def _check_point(problem, x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (problem.dim,):
        raise ValueError(f"x must have shape ({problem.dim},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("x contains non-finite entries")
    return x


def margin_probabilities(problem, x):
    """P(mislabel) per sample: p_i = 1 / (1 + exp(y_i x.a_i)).

    The exponent is clamped to +-40, where the logistic term already
    saturates to double precision.
    """
    x = _check_point(problem, x)
    z = problem.labels * (problem.features @ x)
    return 1.0 / (1.0 + np.exp(np.clip(z, -EXP_CLAMP, EXP_CLAMP)))


def loss_grad_hess(problem, x):
    """Objective value, gradient, and Hessian at *x*.

    The loss uses the stable log-sum form log(1 + exp(-z)) evaluated
    via logaddexp.  The Hessian is
    (1/n) A.T diag(p (1 - p)) A + mu I, so its eigenvalues always lie
    in [mu, 1 + mu] for unit-bounded rows.
    """
    x = _check_point(problem, x)
    a, y, mu = problem.features, problem.labels, problem.mu
    n = problem.n_samples
    z = y * (a @ x)
    f = float(np.mean(np.logaddexp(0.0, -z)) + 0.5 * mu * (x @ x))
    p = 1.0 / (1.0 + np.exp(np.clip(z, -EXP_CLAMP, EXP_CLAMP)))
    grad = -(a.T @ (y * p)) / n + mu * x
    weights = p * (1.0 - p)
    hess = (a.T * (weights / n)) @ a + mu * np.eye(problem.dim)
    return f, grad, hess


def newton_decrement(problem, x):
    """Newton decrement sqrt(g.T H^-1 g) of the raw objective at *x*."""
    _, grad, hess = loss_grad_hess(problem, x)
    direction = solve_spd(hess, grad[:, None])[:, 0]
    return float(np.sqrt(max(grad @ direction, 0.0)))


def scaled_decrement(problem, x):
    """Newton decrement of the standard self-concordant scaling f/(4 mu).

    Equals the raw decrement divided by 2 sqrt(mu).
    """
    return newton_decrement(problem, x) / (2.0 * np.sqrt(problem.mu))


@dataclass(frozen=True)
class NewtonState:
    """Result of one damped step: the next iterate plus step diagnostics.

    ``decrement`` and ``step_size`` were computed at the point the step
    left from; with no injected error,
    ``step_size == 2 sqrt(mu) / (2 sqrt(mu) + decrement)``.
    """

    x: np.ndarray
    decrement: float
    step_size: float
    injected_error_norm: float


def damped_step(problem, x, injected_error=None):
    """One damped Newton step from *x*, optionally perturbed.

    The update is x - step_size * H^-1 g + injected_error with
    step_size = 2 sqrt(mu) / (2 sqrt(mu) + lambda), the damping that
    guarantees progress for the self-concordant scaling.
    """
    x = _check_point(problem, x)
    _, grad, hess = loss_grad_hess(problem, x)
    direction = solve_spd(hess, grad[:, None])[:, 0]
    lam = float(np.sqrt(max(grad @ direction, 0.0)))
    two_sqrt_mu = 2.0 * np.sqrt(problem.mu)
    step_size = two_sqrt_mu / (two_sqrt_mu + lam)
    x_next = x - step_size * direction
    err_norm = 0.0
    if injected_error is not None:
        injected_error = np.ascontiguousarray(injected_error, dtype=np.float64)
        if injected_error.shape != x.shape:
            raise ValueError(f"injected_error must have shape {x.shape}")
        err_norm = float(np.linalg.norm(injected_error))
        x_next = x_next + injected_error
    return NewtonState(
        x=x_next,
        decrement=lam,
        step_size=step_size,
        injected_error_norm=err_norm,
    )


@dataclass
class IterateTrace:
    """Per-iterate history of a damped Newton run.

    Row t holds the objective f, scaled objective g, scaled decrement,
    the step size used to leave iterate t, the norm of the error
    injected into that step, and the scaled suboptimality g - g*.  The
    final row's step size is the one that would be used next, with zero
    injected error.
    """

    iterates: list = field(default_factory=list)
    f: list = field(default_factory=list)
    g: list = field(default_factory=list)
    lambda_g: list = field(default_factory=list)
    step_size: list = field(default_factory=list)
    injected_error_norm: list = field(default_factory=list)
    g_suboptimality: list = field(default_factory=list)
    converged: bool = False

    @property
    def steps(self):
        return len(self.iterates) - 1

    def save_csv(self, path):
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(
                "step,f,g,lambda_g,step_size,"
                "injected_error_norm,g_suboptimality\n"
            )
            for t in range(len(self.iterates)):
                fh.write(
                    f"{t},{self.f[t]:.17g},{self.g[t]:.17g},"
                    f"{self.lambda_g[t]:.17g},{self.step_size[t]:.17g},"
                    f"{self.injected_error_norm[t]:.17g},"
                    f"{self.g_suboptimality[t]:.17g}\n"
                )


def bounded_error_source(eps, dim, seed=0):
    """Callable t -> error vector of norm exactly *eps*, seeded.

    Draws an isotropic direction per step from a dedicated generator,
    so a run with the same seed replays identical errors.
    """
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    rng = np.random.default_rng(seed)

    def source(_step):
        v = rng.standard_normal(dim)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            v = np.zeros(dim)
            v[0] = 1.0
            norm = 1.0
        return (eps / norm) * v

    return source


def run_inexact_newton(
    problem,
    x0,
    eps,
    error_source=None,
    max_iters=100,
    reference=None,
):
    """Damped Newton from *x0* with per-step errors bounded by *eps*.

    *error_source* maps the step index to an error vector (norm at most
    *eps*); None means exact steps.  Iteration stops once the scaled
    decrement falls to sqrt(eps) -- the level below which injected
    errors dominate -- or after *max_iters* steps, whichever comes
    first; ``trace.converged`` records which.

    *reference* is an optional precomputed ``(x_star, g_star)`` pair
    used for the suboptimality column; by default it is computed here
    with an exact high-precision run.  Exhausting *max_iters* without
    reaching the threshold raises ``ConvergenceError`` with the trace
    attached.
    """
    x = _check_point(problem, x0)
    if not eps > 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    if reference is None:
        reference = optimum(problem)
    g_star = reference[1]
    threshold = np.sqrt(eps)
    mu = problem.mu
    trace = IterateTrace()

    def record(f, g, lam_g, step_size, err_norm):
        trace.iterates.append(x)
        trace.f.append(f)
        trace.g.append(g)
        trace.lambda_g.append(lam_g)
        trace.step_size.append(step_size)
        trace.injected_error_norm.append(err_norm)
        trace.g_suboptimality.append(g - g_star)

    for step in range(max_iters + 1):
        f, _, _ = loss_grad_hess(problem, x)
        lam_g = scaled_decrement(problem, x)
        g = f / (4.0 * mu)
        if lam_g <= threshold or step == max_iters:
            state = damped_step(problem, x)  # step-size diagnostic only
            record(f, g, lam_g, state.step_size, 0.0)
            if lam_g <= threshold:
                trace.converged = True
                return trace
            raise ConvergenceError(
                f"scaled decrement {lam_g:.3e} still above threshold "
                f"{threshold:.3e} after {max_iters} steps",
                trace=trace,
            )
        error = None if error_source is None else error_source(step)
        if error is not None and np.linalg.norm(error) > eps * (1 + 1e-12):
            raise ValueError(
                f"error_source produced a vector of norm "
                f"{np.linalg.norm(error):.3e} > eps {eps:.3e} at step {step}"
            )
        state = damped_step(problem, x, error)
        record(f, g, lam_g, state.step_size, state.injected_error_norm)
        x = state.x
    raise AssertionError("unreachable")


def optimum(problem, tol=1e-12, max_iters=500):
    """High-precision minimizer via exact damped Newton.

    Runs until the scaled decrement is at most *tol* and returns
    ``(x_star, g_star)`` with g the scaled objective f/(4 mu).
    """
    x = np.zeros(problem.dim)
    for _ in range(max_iters):
        if scaled_decrement(problem, x) <= tol:
            break
        x = damped_step(problem, x).x
    f, _, _ = loss_grad_hess(problem, x)
    return x, f / (4.0 * problem.mu)


def omega(t):
    """omega(t) = t - log(1 + t), the self-concordant decrease function."""
    if t < 0.0:
        raise ValueError(f"omega requires t >= 0, got {t}")
    return float(t - np.log1p(t))


def omega_star(t):
    """omega*(t) = -t - log(1 - t), conjugate to omega; needs t < 1."""
    if not 0.0 <= t < 1.0:
        raise ValueError(f"omega_star requires 0 <= t < 1, got {t}")
    return float(-t - np.log1p(-t))


def suboptimality_bound(lambda_g):
    """Upper bound on g(x) - g* from the scaled decrement.

    Returns omega*(lambda_g), valid for lambda_g < 1; for
    lambda_g <= 1/6 this is further bounded by (3/5) lambda_g**2.
    """
    return omega_star(lambda_g)


def quadratic_phase_epsilon(eps, mu):
    """Additive slack eps' in the quadratic-phase decrement inequality.

    With per-step errors of norm at most *eps*, the contraction
    lambda_g(x_{t+1}) <= 3 lambda_g(x_t)**2 + eps' holds for
    eps' = 3 eps (1 + mu) / (8 mu) + eps sqrt(1 + mu) / (2 sqrt(mu)).
    """
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    if not mu > 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    return float(
        3.0 * eps * (1.0 + mu) / (8.0 * mu)
        + eps * np.sqrt(1.0 + mu) / (2.0 * np.sqrt(mu))
    )


def iterate_norm_bound(mu):
    """Norm bound on damped Newton iterates started at the origin.

    The objective at 0 is log 2 and every step decreases it, so
    mu ||x||^2 / 2 <= f(x) <= log 2 along the trajectory; one unit of
    slack absorbs bounded injected errors.
    """
    if not mu > 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    return float(np.sqrt(2.0 * np.log(2.0) / mu) + 1.0)


def decrease_bound(x, c, c_prime):
    """Pointwise upper bound h on the per-step change of g.

        h = -x**2 / (1 + x) + c + omega_star(delta)
        delta = sqrt(x**2 / (1 + x)**2 - 2 c / (1 + x) + c_prime)

    where x is the scaled decrement at the current iterate, c the
    inner product of the injected error with the scaled gradient, and
    c_prime its squared local-norm.  Vectorized over numpy inputs; the
    caller is responsible for delta staying inside [0, 1).
    """
    x = np.asarray(x, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    delta = np.sqrt(x**2 / (1.0 + x) ** 2 - 2.0 * c / (1.0 + x) + c_prime)
    h = -(x**2) / (1.0 + x) + c + (-delta - np.log1p(-delta))
    return float(h) if h.ndim == 0 else h


def scan_constant_decrease(
    grid_x=500,
    grid_c=500,
    c_prime_values=(0.0, 5e-5, 1e-4),
):
    """Numerically verify the constant-decrease margin of damped steps.

    Evaluates ``decrease_bound`` over x in [1/6, 1] and c in
    [-0.06, 0.06] on a grid_x-by-grid_c grid for each c_prime value,
    restricted to combinations realizable by an actual error vector:
    Cauchy-Schwarz forces |c| <= x * sqrt(c_prime), and unrealizable
    (x, c, c_prime) triples are skipped.  Returns the maximum of h over
    the realizable grid; a decrease guarantee of 0.01 per step needs
    this maximum to be at most -0.01.

    Raises ``ScanAnomalyError`` if delta leaves [0, 1) at a realizable
    grid point, which would put the formula outside its domain.
    """
    if grid_x < 100 or grid_c < 100:
        raise ValueError("grid must be at least 100x100")
    xs = np.linspace(1.0 / 6.0, 1.0, grid_x)
    cs = np.linspace(-0.06, 0.06, grid_c)
    x, c = np.meshgrid(xs, cs, indexing="ij")
    best = -np.inf
    for c_prime in c_prime_values:
        if not 0.0 <= c_prime <= 1e-4:
            raise ValueError(f"c_prime must be in [0, 1e-4], got {c_prime}")
        feasible = np.abs(c) <= x * np.sqrt(c_prime) + 1e-15
        if not np.any(feasible):
            continue
        radicand = x**2 / (1.0 + x) ** 2 - 2.0 * c / (1.0 + x) + c_prime
        bad = feasible & (radicand < -1e-15)
        if np.any(bad):
            i = tuple(np.argwhere(bad)[0])
            raise ScanAnomalyError(
                "negative radicand at a realizable grid point",
                location=(float(x[i]), float(c[i]), c_prime),
            )
        delta = np.sqrt(np.maximum(radicand, 0.0))
        out_of_domain = feasible & (delta >= 1.0)
        if np.any(out_of_domain):
            i = tuple(np.argwhere(out_of_domain)[0])
            raise ScanAnomalyError(
                "delta >= 1 at a realizable grid point",
                location=(float(x[i]), float(c[i]), c_prime),
            )
        h = -(x**2) / (1.0 + x) + c + (-delta - np.log1p(-delta))
        h = np.where(feasible, h, -np.inf)
        best = max(best, float(h.max()))
    return best
