"""Piecewise-linear scalar approximators and exact ReLU product gadgets.

These are the function-approximation primitives that the transformer
weight builders compile into feed-forward ReLU layers: uniform-knot
interpolants for smooth curves, a four-ReLU gadget that multiplies a
bounded value by a +-1 label exactly, and a quarter-square product
approximator built from two squared-argument interpolants.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "PwlApprox",
    "build_pwl",
    "eval_pwl",
    "signed_copy",
    "pwl_product",
]


@dataclass(frozen=True)
class PwlApprox:
    """A piecewise-linear function on [knots[0], knots[-1]].

    Outside the knot range the function clamps to the endpoint values
    when ``clamp_outside`` is true and extends the end segments linearly
    otherwise.
    """

    knots: np.ndarray
    values: np.ndarray
    clamp_outside: bool = True

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if knots.ndim != 1 or knots.size < 2:
            raise ValueError("need at least two knots")
        if values.shape != knots.shape:
            raise ValueError("knots and values must have matching length")
        if not np.all(np.diff(knots) > 0):
            raise ValueError("knots must be strictly increasing")
        if not (np.all(np.isfinite(knots)) and np.all(np.isfinite(values))):
            raise ValueError("knots and values must be finite")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)

    @property
    def lo(self):
        return float(self.knots[0])

    @property
    def hi(self):
        return float(self.knots[-1])

    @property
    def pieces(self):
        return self.knots.size - 1

    def __call__(self, x):
        return eval_pwl(self, x)

    def save_csv(self, path):
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("knot,value\n")
            for k, v in zip(self.knots, self.values):
                fh.write(f"{k:.17g},{v:.17g}\n")


def build_pwl(f, lo, hi, pieces, clamp_outside=True):
    """Interpolate scalar function *f* on *pieces* uniform segments.

    The sup-norm error of the interpolant is at most
    ``L * (hi - lo) / pieces`` for L-Lipschitz f (and order
    ``(hi - lo)**2 / pieces**2`` for twice-differentiable f).
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    if pieces < 1:
        raise ValueError(f"pieces must be >= 1, got {pieces}")
    knots = np.linspace(lo, hi, pieces + 1)
    values = np.asarray([f(k) for k in knots], dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("target function is non-finite at a knot")
    return PwlApprox(knots, values, clamp_outside)


def eval_pwl(p, x):
    """Evaluate a :class:`PwlApprox` at scalar or array *x*.

    Exactly reproduces the stored value at each knot.  Scalars come
    back as float, arrays elementwise.
    """
    arr = np.asarray(x, dtype=np.float64)
    out = np.interp(arr, p.knots, p.values)
    if not p.clamp_outside:
        k, v = p.knots, p.values
        lo_slope = (v[1] - v[0]) / (k[1] - k[0])
        hi_slope = (v[-1] - v[-2]) / (k[-1] - k[-2])
        out = np.where(arr < k[0], v[0] + lo_slope * (arr - k[0]), out)
        out = np.where(arr > k[-1], v[-1] + hi_slope * (arr - k[-1]), out)
    if np.ndim(x) == 0:
        return float(out)
    return out


def signed_copy(x, y):
    """Multiply *x* by a label *y* in {-1.0, +1.0} using four ReLUs.

    Evaluates relu(x/2 + 2y) - relu(-x/2 + 2y) + relu(-x/2 - 2y)
    - relu(x/2 - 2y), which equals x*y up to one unit in the last
    place whenever |x| < 4.  The one-ulp slack comes from aligning
    x/2 against the offset 2 before the cancelling subtraction.
    """
    if y not in (-1.0, 1.0):
        raise ValueError(f"y must be -1.0 or +1.0, got {y!r}")
    h = 0.5 * x
    off = 2.0 * y
    return (
        max(h + off, 0.0)
        - max(-h + off, 0.0)
        + max(-h - off, 0.0)
        - max(h - off, 0.0)
    )


@lru_cache(maxsize=256)
def _square_pwl(lo, hi, pieces):
    return build_pwl(lambda t: t * t, lo, hi, pieces)


def pwl_product(x, y, range_x, range_y, pieces):
    """Approximate x*y by the quarter-square identity on PWL squares.

    Uses ((x+y)^2 - (x-y)^2) / 4 with both squares replaced by
    uniform-knot interpolants over the ranges implied by *range_x* and
    *range_y*.  The absolute error is bounded by half the squared knot
    spacing and therefore falls quadratically in *pieces*.
    """
    xlo, xhi = map(float, range_x)
    ylo, yhi = map(float, range_y)
    if not (xlo <= x <= xhi):
        raise ValueError(f"x={x} outside range [{xlo}, {xhi}]")
    if not (ylo <= y <= yhi):
        raise ValueError(f"y={y} outside range [{ylo}, {yhi}]")
    sum_lo, sum_hi = xlo + ylo, xhi + yhi
    dif_lo, dif_hi = xlo - yhi, xhi - ylo
    sq_sum = _square_pwl(sum_lo, sum_hi, pieces)
    sq_dif = _square_pwl(dif_lo, dif_hi, pieces)
    return 0.25 * (eval_pwl(sq_sum, x + y) - eval_pwl(sq_dif, x - y))
