"""Mechanical construction of transformer weights for three tasks:
matrix inversion, in-context least squares, and one damped Newton step
on the regularized logistic loss.

Every builder returns immutable layers for the linear-attention
forward pass plus a :class:`~.transformer.PromptLayout` describing the
prompt rows it expects.  Heads are assembled from sparse block triples
so the selector structure stays auditable; feed-forward blocks are
compiled from scalar piecewise-linear approximators by
:class:`FfnBuilder`.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetError
from .inversion import MAX_ORDER  # noqa: F401  (re-exported context)
from .logistic import iterate_norm_bound
from .pwl import _square_pwl, build_pwl
from .transformer import (
    AttentionHead,
    PromptLayout,
    RowBlock,
    TransformerLayer,
    assemble_blocks,
    attention_forward,
    ffn_forward,
)

__all__ = [
    "BudgetReport",
    "width_depth_budget",
    "FfnBuilder",
    "build_inversion_block",
    "inversion_layout",
    "make_inversion_prompt",
    "read_inversion_iterate",
    "build_linreg_transformer",
    "make_linreg_prompt",
    "read_linreg_prediction",
    "build_logreg_newton_step",
    "make_logistic_prompt",
    "read_logistic_iterate",
    "logistic_step_forward",
    "run_constructed_newton",
]

INIT_SAFETY = 0.9
SIGMOID_RANGE = 10.0
GATE_SHIFT = 20.0
CLEANUP_RANGE = 10.0

_REF_EPS = 1e-2
_REF_MU = 0.1
_REF_D = 5


@dataclass(frozen=True)
class BudgetReport:
    """Width and depth allocation for the constructed logistic step.

    ``widths`` maps each scalar approximator to its piece count
    (u1_pieces, u2_pieces, u3_pieces, eps4_pieces) plus the inversion
    step count ``k``; depth is always 11 + 2 k.
    """

    target_eps: float
    mu: float
    kappa_f: float
    d: int
    depth: int
    widths: dict
    z_max: float
    norm_bound: float

    @property
    def k(self):
        return self.widths["k"]

    @property
    def u1_pieces(self):
        return self.widths["u1_pieces"]

    @property
    def u2_pieces(self):
        return self.widths["u2_pieces"]

    @property
    def u3_pieces(self):
        return self.widths["u3_pieces"]

    @property
    def eps4_pieces(self):
        return self.widths["eps4_pieces"]

    def to_text(self):
        payload = {
            "target_eps": self.target_eps,
            "mu": self.mu,
            "kappa_f": self.kappa_f,
            "d": self.d,
            "depth": self.depth,
            "widths": self.widths,
            "z_max": self.z_max,
            "norm_bound": self.norm_bound,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def width_depth_budget(eps, mu, kappa_f=None, d=5, piece_ceiling=5_000_000):
    """Allocate approximator widths and inversion steps for target *eps*.

    The per-approximator error families scale as 1/N (pieces), so the
    piece counts are reference-normalized power laws in eps and mu,
    calibrated so the end-to-end constructed step at
    (eps=1e-2, mu=0.1, d=5) lands well inside its tolerance; the
    inversion count is k = ceil(2 log2 kappa_f
    + log2 log2((1+mu)^3/(eps^2 mu^2))), floored at 1.  *kappa_f*
    defaults to (1+mu)/mu, the global Hessian spectral bound ratio.

    Any piece count above *piece_ceiling* raises ``BudgetError`` naming
    the overflowing family.
    """
    if not eps > 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not mu > 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    if kappa_f is None:
        kappa_f = (1.0 + mu) / mu
    if kappa_f < 1.0:
        raise ValueError(f"kappa_f must be >= 1, got {kappa_f}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")

    c_here = iterate_norm_bound(mu)
    c_ref = iterate_norm_bound(_REF_MU)
    ratio = (1.0 + mu * c_here) / (1.0 + _REF_MU * c_ref)
    re = _REF_EPS / eps
    rm = _REF_MU / mu

    widths = {
        "u1_pieces": math.ceil(2000.0 * re**2 * rm**5 * ratio**4),
        "u2_pieces": math.ceil(2000.0 * re**4 * rm**10 * ratio**8 * d / _REF_D),
        "u3_pieces": math.ceil(2000.0 * re**2 * rm**4 * ratio**3),
        "eps4_pieces": math.ceil(4000.0 * re * rm * ratio),
    }
    for name, pieces in widths.items():
        if pieces > piece_ceiling:
            raise BudgetError(
                f"{name} = {pieces} exceeds the ceiling {piece_ceiling} "
                f"at eps={eps}, mu={mu}, d={d}",
                bound=name,
            )

    inner = (1.0 + mu) ** 3 / (eps**2 * mu**2)
    k = max(
        1,
        math.ceil(2.0 * math.log2(kappa_f) + math.log2(math.log2(inner))),
    )
    widths["k"] = k

    return BudgetReport(
        target_eps=float(eps),
        mu=float(mu),
        kappa_f=float(kappa_f),
        d=int(d),
        depth=11 + 2 * k,
        widths=widths,
        z_max=float(((1.0 + mu * c_here) / (2.0 * math.sqrt(mu))) ** 2),
        norm_bound=float(c_here),
    )


def _merge_coeffs(*dicts):
    out = {}
    for d in dicts:
        for row, coeff in d.items():
            out[row] = out.get(row, 0.0) + coeff
    return out


class FfnBuilder:
    """Accumulates ReLU neurons into one position-wise (w1, w2) pair.

    Each neuron reads an affine combination of prompt rows (biases go
    through the ones row) and adds a weighted ReLU output to a single
    destination row.
    """

    def __init__(self, dim, ones_row=None):
        self.dim = dim
        self.ones_row = ones_row
        self._args = []
        self._outs = []

    @property
    def width(self):
        return len(self._args)

    def add_neuron(self, coeffs, bias, out_row, weight):
        arg = np.zeros(self.dim)
        for row, coeff in coeffs.items():
            arg[row] += coeff
        if bias != 0.0:
            if self.ones_row is None:
                raise ValueError("a bias needs a ones row in the prompt")
            arg[self.ones_row] += bias
        self._args.append(arg)
        self._outs.append((out_row, float(weight)))

    def add_identity(self, src_row, out_row, weight=1.0):
        """Add weight*x of the source row, exact for every input."""
        self.add_neuron({src_row: 1.0}, 0.0, out_row, weight)
        self.add_neuron({src_row: -1.0}, 0.0, out_row, -weight)

    def add_pwl(self, approx, coeffs, out_row, scale=1.0, gate=None):
        """Compile a clamped PwlApprox of the affine argument *coeffs*.

        With ``gate=(label_row, sign)`` every neuron is shifted dead
        unless that row holds exactly ``sign`` (labels are +-1), and
        the constant term is routed through an exact 0/1 ReLU of the
        label, so two gated copies realize a per-column branch on the
        label value.
        """
        if not approx.clamp_outside:
            raise ValueError("only clamped approximators compile to ReLU form")
        knots, values = approx.knots, approx.values
        slopes = np.diff(values) / np.diff(knots)
        gate_coeffs = {}
        gate_bias = 0.0
        if gate is None:
            self.add_neuron({}, 1.0, out_row, scale * values[0])
        else:
            gate_row, gate_sign = gate
            if gate_sign not in (-1.0, 1.0, -1, 1):
                raise ValueError("gate sign must be -1 or +1")
            gate_coeffs = {gate_row: GATE_SHIFT * gate_sign}
            gate_bias = -GATE_SHIFT
            self.add_neuron(
                {gate_row: 0.5 * gate_sign}, 0.5, out_row, scale * values[0]
            )
        prev_slope = 0.0
        for j, slope in enumerate(slopes):
            self.add_neuron(
                _merge_coeffs(coeffs, gate_coeffs),
                -knots[j] + gate_bias,
                out_row,
                scale * (slope - prev_slope),
            )
            prev_slope = slope
        self.add_neuron(
            _merge_coeffs(coeffs, gate_coeffs),
            -knots[-1] + gate_bias,
            out_row,
            -scale * slopes[-1],
        )

    def add_signed_copy(self, src_row, label_row, out_row, scale=1.0):
        """Add scale * x * y for a +-1 label row, exact to rounding."""
        for c_src, c_lab, weight in (
            (0.5, 2.0, 1.0),
            (-0.5, 2.0, -1.0),
            (-0.5, -2.0, 1.0),
            (0.5, -2.0, -1.0),
        ):
            self.add_neuron(
                {src_row: c_src, label_row: c_lab}, 0.0, out_row,
                weight * scale,
            )

    def add_product(self, x_row, y_row, out_row, range_x, range_y, pieces,
                    scale=1.0):
        """Add scale * x * y via the quarter-square decomposition.

        Shares knot tables with :func:`~.pwl.pwl_product`, so the
        compiled gadget computes the same approximation.
        """
        xlo, xhi = map(float, range_x)
        ylo, yhi = map(float, range_y)
        sq_sum = _square_pwl(xlo + ylo, xhi + yhi, pieces)
        sq_dif = _square_pwl(xlo - yhi, xhi - ylo, pieces)
        self.add_pwl(sq_sum, {x_row: 1.0, y_row: 1.0}, out_row, 0.25 * scale)
        self.add_pwl(sq_dif, {x_row: 1.0, y_row: -1.0}, out_row, -0.25 * scale)

    def build(self):
        if not self._args:
            raise ValueError("no neurons added")
        w1 = np.vstack(self._args)
        w2 = np.zeros((self.dim, len(self._args)))
        for idx, (row, weight) in enumerate(self._outs):
            w2[row, idx] += weight
        return w1, w2


def _head(dim, v_entries, k_entries, q_entries):
    return AttentionHead(
        w_v=assemble_blocks(dim, v_entries),
        w_k=assemble_blocks(dim, k_entries),
        w_q=assemble_blocks(dim, q_entries),
    )


# ---------------------------------------------------------------------------
# matrix inversion block


def inversion_layout(d):
    return PromptLayout(
        n_rows=4 * d,
        n_cols=d,
        blocks=(
            RowBlock("iterate", 0, d, "iterate"),
            RowBlock("data", d, 2 * d, "data_matrix"),
            RowBlock("work", 2 * d, 3 * d, "scratch"),
            RowBlock("identity", 3 * d, 4 * d, "identity_pad"),
        ),
    )


def make_inversion_prompt(a, x0):
    """Stack (X0; A^T; 0; I) for the two-layer inversion block."""
    a = np.asarray(a, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    d = a.shape[0]
    if a.shape != (d, d) or x0.shape != (d, d):
        raise ValueError("a and x0 must be square with matching shape")
    return np.vstack([x0, a.T, np.zeros((d, d)), np.eye(d)])


def read_inversion_iterate(h, d):
    return np.ascontiguousarray(h[:d, :])


def build_inversion_block(d):
    """Two attention-only layers advancing X by one inverse iteration.

    On a prompt (X; A^T; 0; I) the pair writes AX into the work block
    and then forms X(2I - AX) in the top block while clearing the work
    block, so the output prompt has the same shape and bookkeeping as
    the input and the block can be chained.
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    dim = 4 * d
    eye = np.eye(d)
    x_blk = slice(0, d)
    a_blk = slice(d, 2 * d)
    w_blk = slice(2 * d, 3 * d)
    i_blk = slice(3 * d, 4 * d)

    layer1 = TransformerLayer(
        heads=(
            _head(
                dim,
                v_entries=[(w_blk, i_blk, eye)],
                k_entries=[(x_blk, a_blk, eye)],
                q_entries=[(x_blk, x_blk, eye)],
            ),
        ),
    )
    layer2 = TransformerLayer(
        heads=(
            _head(
                dim,
                v_entries=[(x_blk, x_blk, eye)],
                k_entries=[(x_blk, i_blk, eye)],
                q_entries=[(x_blk, w_blk, -eye)],
            ),
            _head(
                dim,
                v_entries=[(x_blk, x_blk, eye), (w_blk, w_blk, -eye)],
                k_entries=[(x_blk, i_blk, eye)],
                q_entries=[(x_blk, i_blk, eye)],
            ),
        ),
    )
    return [layer1, layer2]


# ---------------------------------------------------------------------------
# in-context least squares


def _linreg_layout(d, n):
    return PromptLayout(
        n_rows=4 * d + 3,
        n_cols=n,
        blocks=(
            RowBlock("x_slot", 0, d, "iterate"),
            RowBlock("b_slot", d, 2 * d, "scratch"),
            RowBlock("identity", 2 * d, 3 * d, "identity_pad"),
            RowBlock("data", 3 * d, 4 * d, "data_matrix"),
            RowBlock("test_point", 4 * d, 4 * d + 1, "constant"),
            RowBlock("labels", 4 * d + 1, 4 * d + 2, "labels"),
            RowBlock("output", 4 * d + 2, 4 * d + 3, "scratch"),
        ),
    )


def make_linreg_prompt(a, y, a_test):
    """Prompt (I; I; I; A^T; a_test^T; y^T; 0) with d-wide identities."""
    a = np.asarray(a, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    a_test = np.asarray(a_test, dtype=np.float64)
    n, d = a.shape
    if n < d:
        raise ValueError(f"need n >= d, got n={n}, d={d}")
    if y.shape != (n,) or a_test.shape != (d,):
        raise ValueError("y must be length n and a_test length d")
    h = np.zeros((4 * d + 3, n))
    for blk in range(3):
        h[blk * d:(blk + 1) * d, :d] = np.eye(d)
    h[3 * d:4 * d, :] = a.T
    h[4 * d, :d] = a_test
    h[4 * d + 1, :] = y
    return h


def read_linreg_prediction(h, layout):
    return float(h[layout.block("output").start, 0])


def build_linreg_transformer(d, n, t_steps, alpha, ridge_mu=0.0):
    """Attention-only pipeline predicting a_test^T (A^T A)^-1 A^T y.

    One init layer forms (alpha*B; B) for B = A^T A + ridge_mu*I, each
    of *t_steps* layers advances X <- X(2I - BX) (one layer suffices
    because B is symmetric), and two output layers contract
    y^T A X_T against a_test into the output row's first column.
    The caller supplies *alpha* in (0, 2/sigma_max(B)^2).
    """
    if d < 1 or n < d:
        raise ValueError(f"need n >= d >= 1, got d={d}, n={n}")
    if t_steps < 0:
        raise ValueError(f"t_steps must be >= 0, got {t_steps}")
    if not alpha > 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if ridge_mu < 0.0:
        raise ValueError(f"ridge_mu must be >= 0, got {ridge_mu}")
    dim = 4 * d + 3
    eye = np.eye(d)
    x_slot = slice(0, d)
    b_slot = slice(d, 2 * d)
    ident = slice(2 * d, 3 * d)
    data = slice(3 * d, 4 * d)
    test_row = 4 * d
    label_row = 4 * d + 1
    out_row = 4 * d + 2

    init = TransformerLayer(
        heads=(
            _head(
                dim,
                v_entries=[(x_slot, data, alpha * eye), (b_slot, data, eye)],
                k_entries=[(x_slot, data, eye)],
                q_entries=[(x_slot, x_slot, eye)],
            ),
            _head(
                dim,
                v_entries=[
                    (x_slot, ident, (alpha * ridge_mu - 1.0) * eye),
                    (b_slot, ident, (ridge_mu - 1.0) * eye),
                ],
                k_entries=[(x_slot, ident, eye)],
                q_entries=[(x_slot, ident, eye)],
            ),
        ),
    )

    newton = TransformerLayer(
        heads=(
            _head(
                dim,
                v_entries=[(x_slot, x_slot, -eye)],
                k_entries=[(x_slot, b_slot, eye)],
                q_entries=[(x_slot, x_slot, eye)],
            ),
            _head(
                dim,
                v_entries=[(x_slot, x_slot, eye)],
                k_entries=[(x_slot, ident, eye)],
                q_entries=[(x_slot, ident, eye)],
            ),
        ),
    )

    contract = TransformerLayer(
        heads=(
            _head(
                dim,
                v_entries=[(out_row, label_row, 1.0)],
                k_entries=[(x_slot, data, eye)],
                q_entries=[(x_slot, x_slot, eye)],
            ),
        ),
    )
    readout = TransformerLayer(
        heads=(
            _head(
                dim,
                v_entries=[(out_row, out_row, 1.0)],
                k_entries=[(0, test_row, 1.0)],
                q_entries=[(0, 2 * d, 1.0)],
            ),
            _head(
                dim,
                v_entries=[(out_row, out_row, -1.0)],
                k_entries=[(x_slot, ident, eye)],
                q_entries=[(x_slot, ident, eye)],
            ),
        ),
    )

    layers = [init] + [newton] * t_steps + [contract, readout]
    return layers, _linreg_layout(d, n)


# ---------------------------------------------------------------------------
# one damped Newton step on the logistic loss


def _logistic_layout(d, n):
    return PromptLayout(
        n_rows=6 * d + 4,
        n_cols=n,
        blocks=(
            RowBlock("x_slot", 0, d, "scratch"),
            RowBlock("b_slot", d, 2 * d, "scratch"),
            RowBlock("identity", 2 * d, 3 * d, "identity_pad"),
            RowBlock("work", 3 * d, 4 * d, "scratch"),
            RowBlock("data", 4 * d, 5 * d, "data_matrix"),
            RowBlock("labels", 5 * d, 5 * d + 1, "labels"),
            RowBlock("iterate", 5 * d + 1, 6 * d + 1, "iterate"),
            RowBlock("mean_picker", 6 * d + 1, 6 * d + 2, "constant"),
            RowBlock("accumulator", 6 * d + 2, 6 * d + 3, "scratch"),
            RowBlock("ones", 6 * d + 3, 6 * d + 4, "ones"),
        ),
    )


def make_logistic_prompt(problem, x):
    """Prompt carrying the dataset, the current iterate broadcast over
    all columns, a first-column mean picker e1^T/n, and a ones row."""
    d, n = problem.dim, problem.n_samples
    if n < d:
        raise ValueError(f"need n >= d, got n={n}, d={d}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (d,):
        raise ValueError(f"x must have shape ({d},), got {x.shape}")
    h = np.zeros((6 * d + 4, n))
    for blk in range(3):
        h[blk * d:(blk + 1) * d, :d] = np.eye(d)
    h[4 * d:5 * d, :] = problem.features.T
    h[5 * d, :] = problem.labels
    h[5 * d + 1:6 * d + 1, :] = x[:, None]
    h[6 * d + 1, 0] = 1.0 / n
    h[6 * d + 3, :] = 1.0
    return h


def read_logistic_iterate(h, layout):
    return np.ascontiguousarray(h[layout.rows_of("iterate"), 0])


def _sigmoid(t):
    t = np.clip(t, -40.0, 40.0)
    return 1.0 / (1.0 + np.exp(-t))


def _sigmoid_derivative(t):
    s = _sigmoid(t)
    return s * (1.0 - s)


def build_logreg_newton_step(problem, budget):
    """Full stack computing one damped Newton step in-context.

    The stack (depth 11 + 2k) computes margins, the per-sample Hessian
    weights through a PWL sigmoid-derivative, the scaled data rows via
    quarter-square products, assembles B = (1/n) A^T D A + mu I next to
    alpha*B^T, runs k two-layer inverse iterations, recomputes margins
    into label-gated PWL probabilities, assembles the gradient, forms
    the decrement and the damped step size, updates the iterate block,
    and restores every bookkeeping block so the stack can be chained.
    """
    d, n = problem.dim, problem.n_samples
    if n < d:
        raise ValueError(f"need n >= d, got n={n}, d={d}")
    if budget.depth != 11 + 2 * budget.k:
        raise BudgetError(
            f"inconsistent budget: depth {budget.depth} != 11 + 2k "
            f"with k={budget.k}",
            bound="depth",
        )
    if budget.d != d:
        raise BudgetError(
            f"budget built for d={budget.d}, problem has d={d}", bound="d"
        )
    if abs(budget.mu - problem.mu) > 1e-12 * max(1.0, problem.mu):
        raise BudgetError(
            f"budget built for mu={budget.mu}, problem has mu={problem.mu}",
            bound="mu",
        )

    mu = problem.mu
    dim = 6 * d + 4
    eye = np.eye(d)
    x_slot = slice(0, d)
    b_slot = slice(d, 2 * d)
    ident = slice(2 * d, 3 * d)
    work = slice(3 * d, 4 * d)
    data = slice(4 * d, 5 * d)
    label_row = 5 * d
    iterate = slice(5 * d + 1, 6 * d + 1)
    picker_row = 6 * d + 1
    acc_row = 6 * d + 2
    ones_row = 6 * d + 3
    e1_row = 2 * d  # first identity row holds e1^T

    # eigenvalues of the Hessian lie in [mu, 1+mu], so this alpha is
    # inside (0, 2/sigma_max^2) for every iterate
    alpha = 2.0 * INIT_SAFETY / (1.0 + mu) ** 2

    def margins_to_accumulator():
        # accumulator += (A x)^T, broadcast from the iterate block
        return _head(
            dim,
            v_entries=[(acc_row, e1_row, 1.0)],
            k_entries=[(x_slot, iterate, eye)],
            q_entries=[(x_slot, data, eye)],
        )

    def rescale_accumulator():
        # accumulator: s -> s/n using the mean-picker row
        return (
            _head(
                dim,
                v_entries=[(acc_row, picker_row, 1.0)],
                k_entries=[(0, e1_row, 1.0)],
                q_entries=[(0, acc_row, 1.0)],
            ),
            _head(
                dim,
                v_entries=[(acc_row, e1_row, -1.0)],
                k_entries=[(0, e1_row, 1.0)],
                q_entries=[(0, acc_row, 1.0)],
            ),
        )

    layers = []

    # margins, then per-sample curvature weights
    fb = FfnBuilder(dim, ones_row)
    sig_deriv = build_pwl(
        _sigmoid_derivative, -SIGMOID_RANGE, SIGMOID_RANGE, budget.u1_pieces
    )
    fb.add_pwl(sig_deriv, {acc_row: 1.0}, acc_row)
    fb.add_identity(acc_row, acc_row, -1.0)
    layers.append(
        TransformerLayer(heads=(margins_to_accumulator(),), ffn=fb.build())
    )

    # weight-scaled data rows replace the top identity block
    fb = FfnBuilder(dim, ones_row)
    for j in range(d):
        fb.add_product(
            acc_row, 4 * d + j, j,
            range_x=(0.0, 0.25), range_y=(-1.0, 1.0),
            pieces=budget.u2_pieces,
        )
        fb.add_identity(2 * d + j, j, -1.0)
    fb.add_identity(acc_row, acc_row, -1.0)
    layers.append(
        TransformerLayer(heads=rescale_accumulator(), ffn=fb.build())
    )

    # Hessian assembly: x_slot <- alpha*B, b_slot <- B
    layers.append(
        TransformerLayer(
            heads=(
                _head(
                    dim,
                    v_entries=[(x_slot, data, alpha * eye), (b_slot, data, eye)],
                    k_entries=[(x_slot, x_slot, eye)],
                    q_entries=[(x_slot, ident, eye)],
                ),
                _head(
                    dim,
                    v_entries=[
                        (x_slot, ident, alpha * mu * eye),
                        (b_slot, ident, (mu - 1.0) * eye),
                    ],
                    k_entries=[(x_slot, ident, eye)],
                    q_entries=[(x_slot, ident, eye)],
                ),
                _head(
                    dim,
                    v_entries=[(x_slot, ident, eye)],
                    k_entries=[(x_slot, ident, eye)],
                    q_entries=[(x_slot, x_slot, -eye)],
                ),
            ),
        )
    )
    # transpose the inverse seed: x_slot <- alpha*B^T
    layers.append(
        TransformerLayer(
            heads=(
                _head(
                    dim,
                    v_entries=[(x_slot, ident, eye)],
                    k_entries=[(x_slot, x_slot, eye)],
                    q_entries=[(x_slot, ident, eye)],
                ),
                _head(
                    dim,
                    v_entries=[(x_slot, x_slot, -eye)],
                    k_entries=[(x_slot, ident, eye)],
                    q_entries=[(x_slot, ident, eye)],
                ),
            ),
        )
    )

    # k inverse iterations, two layers each
    inv_first = TransformerLayer(
        heads=(
            _head(
                dim,
                v_entries=[(work, b_slot, eye)],
                k_entries=[(x_slot, ident, eye)],
                q_entries=[(x_slot, x_slot, eye)],
            ),
        ),
    )
    inv_second = TransformerLayer(
        heads=(
            _head(
                dim,
                v_entries=[(x_slot, x_slot, eye)],
                k_entries=[(x_slot, ident, eye)],
                q_entries=[(x_slot, work, -eye)],
            ),
            _head(
                dim,
                v_entries=[(x_slot, x_slot, eye), (work, work, -eye)],
                k_entries=[(x_slot, ident, eye)],
                q_entries=[(x_slot, ident, eye)],
            ),
        ),
    )
    layers.extend([inv_first, inv_second] * budget.k)

    # margins again, then label-gated probabilities
    fb = FfnBuilder(dim, ones_row)
    p_pos = build_pwl(
        lambda t: _sigmoid(-t), -SIGMOID_RANGE, SIGMOID_RANGE,
        budget.u3_pieces,
    )
    p_neg = build_pwl(
        _sigmoid, -SIGMOID_RANGE, SIGMOID_RANGE, budget.u3_pieces
    )
    fb.add_pwl(p_pos, {acc_row: 1.0}, acc_row, gate=(label_row, 1.0))
    fb.add_pwl(p_neg, {acc_row: 1.0}, acc_row, gate=(label_row, -1.0))
    fb.add_identity(acc_row, acc_row, -1.0)
    layers.append(
        TransformerLayer(heads=(margins_to_accumulator(),), ffn=fb.build())
    )

    # rescale to p/n, then attach labels exactly
    fb = FfnBuilder(dim, ones_row)
    fb.add_signed_copy(acc_row, label_row, acc_row)
    fb.add_identity(acc_row, acc_row, -1.0)
    layers.append(
        TransformerLayer(heads=rescale_accumulator(), ffn=fb.build())
    )

    # gradient assembly into b_slot's first column
    layers.append(
        TransformerLayer(
            heads=(
                _head(
                    dim,
                    v_entries=[(b_slot, data, -eye)],
                    k_entries=[(0, acc_row, 1.0)],
                    q_entries=[(0, e1_row, 1.0)],
                ),
                _head(
                    dim,
                    v_entries=[(b_slot, b_slot, -eye)],
                    k_entries=[(x_slot, ident, eye)],
                    q_entries=[(x_slot, ident, eye)],
                ),
                _head(
                    dim,
                    v_entries=[(b_slot, iterate, mu * eye)],
                    k_entries=[(0, e1_row, 1.0)],
                    q_entries=[(0, e1_row, 1.0)],
                ),
            ),
        )
    )

    # Newton direction into x_slot's first column
    layers.append(
        TransformerLayer(
            heads=(
                _head(
                    dim,
                    v_entries=[(x_slot, x_slot, eye)],
                    k_entries=[(x_slot, ident, eye)],
                    q_entries=[(x_slot, b_slot, eye)],
                ),
                _head(
                    dim,
                    v_entries=[(x_slot, x_slot, -eye)],
                    k_entries=[(x_slot, ident, eye)],
                    q_entries=[(x_slot, ident, eye)],
                ),
            ),
        )
    )

    # squared decrement, then the damped step size via PWL
    fb = FfnBuilder(dim, ones_row)
    two_sqrt_mu = 2.0 * math.sqrt(mu)
    step_size = build_pwl(
        lambda z: two_sqrt_mu / (two_sqrt_mu + math.sqrt(z)),
        0.0, budget.z_max, budget.eps4_pieces,
    )
    fb.add_pwl(step_size, {acc_row: 1.0}, acc_row)
    fb.add_identity(acc_row, acc_row, -1.0)
    layers.append(
        TransformerLayer(
            heads=(
                _head(
                    dim,
                    v_entries=[(acc_row, e1_row, 1.0)],
                    k_entries=[(x_slot, b_slot, eye)],
                    q_entries=[(x_slot, x_slot, eye)],
                ),
                _head(
                    dim,
                    v_entries=[(acc_row, e1_row, -1.0)],
                    k_entries=[(0, ones_row, 1.0)],
                    q_entries=[(0, acc_row, 1.0)],
                ),
            ),
            ffn=fb.build(),
        )
    )

    # scaled direction spread across the accumulator row
    layers.append(
        TransformerLayer(
            heads=(
                _head(
                    dim,
                    v_entries=[(acc_row, acc_row, 1.0)],
                    k_entries=[(x_slot, x_slot, eye)],
                    q_entries=[(x_slot, ident, eye)],
                ),
                _head(
                    dim,
                    v_entries=[(acc_row, acc_row, -1.0)],
                    k_entries=[(x_slot, ident, eye)],
                    q_entries=[(x_slot, ident, eye)],
                ),
            ),
        )
    )

    # iterate update, block restore, accumulator cleanup
    fb = FfnBuilder(dim, ones_row)
    fb.add_neuron({acc_row: -0.5, ones_row: 5.0}, 0.0, acc_row, 1.0)
    fb.add_neuron({acc_row: 0.5, ones_row: 5.0}, 0.0, acc_row, -1.0)
    layers.append(
        TransformerLayer(
            heads=(
                _head(
                    dim,
                    v_entries=[(iterate, ident, -eye)],
                    k_entries=[(0, acc_row, 1.0)],
                    q_entries=[(0, ones_row, 1.0)],
                ),
                _head(
                    dim,
                    v_entries=[
                        (x_slot, x_slot, -eye),
                        (x_slot, ident, eye),
                        (b_slot, b_slot, -eye),
                        (b_slot, ident, eye),
                    ],
                    k_entries=[(x_slot, ident, eye)],
                    q_entries=[(x_slot, ident, eye)],
                ),
            ),
            ffn=fb.build(),
        )
    )

    assert len(layers) == budget.depth
    return layers, _logistic_layout(d, n)


def logistic_step_forward(layers, layout, h, check=True):
    """Run one constructed step, verifying the cleanup range.

    The final layer's ffn cancels the accumulator row exactly only
    while its entries stay inside (-10, 10); *check* asserts that
    before applying it.
    """
    h = layout.validate_prompt(h)
    acc_row = layout.block("accumulator").start
    last = len(layers) - 1
    for i, layer in enumerate(layers):
        h = attention_forward(layer, h)
        if check and i == last:
            reach = float(np.max(np.abs(h[acc_row])))
            if reach >= CLEANUP_RANGE:
                raise RuntimeError(
                    f"accumulator magnitude {reach:.3g} exceeds the exact "
                    f"cleanup range {CLEANUP_RANGE}"
                )
        if layer.has_ffn:
            h = ffn_forward(layer, h)
    return h


def run_constructed_newton(problem, x0, budget, n_steps, check=True):
    """Apply the constructed step *n_steps* times; returns the iterates."""
    layers, layout = build_logreg_newton_step(problem, budget)
    h = make_logistic_prompt(problem, np.asarray(x0, dtype=np.float64))
    xs = [read_logistic_iterate(h, layout)]
    for _ in range(n_steps):
        h = logistic_step_forward(layers, layout, h, check=check)
        xs.append(read_logistic_iterate(h, layout))
    return xs
