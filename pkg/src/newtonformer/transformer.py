"""Linear-attention transformer forward pass.

Layers use attention without softmax: each head contributes
(W_V H) (W_K H).T (W_Q H) additively to the residual stream, and an
optional position-wise feed-forward block adds W_2 relu(W_1 H).
Prompts are matrices with one column per token and a fixed row layout
described by ``PromptLayout``.
"""

import os
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, load_matrix_csv, save_matrix_csv

__all__ = [
    "SEMANTICS",
    "RowBlock",
    "PromptLayout",
    "AttentionHead",
    "TransformerLayer",
    "assemble_blocks",
    "attention_forward",
    "ffn_forward",
    "model_forward",
    "save_model",
    "load_model",
]

SEMANTICS = frozenset(
    {
        "identity_pad",
        "data_matrix",
        "labels",
        "iterate",
        "scratch",
        "ones",
        "constant",
    }
)


@dataclass(frozen=True)
class RowBlock:
    """A contiguous, named band of prompt rows with a semantic tag."""

    name: str
    start: int
    stop: int
    semantic: str

    def __post_init__(self):
        if not 0 <= self.start < self.stop:
            raise ValueError(
                f"block {self.name!r}: need 0 <= start < stop, "
                f"got [{self.start}, {self.stop})"
            )
        if self.semantic not in SEMANTICS:
            raise ValueError(
                f"block {self.name!r}: unknown semantic {self.semantic!r}"
            )

    @property
    def rows(self):
        return slice(self.start, self.stop)

    @property
    def size(self):
        return self.stop - self.start


@dataclass(frozen=True)
class PromptLayout:
    """Row layout of a prompt matrix.

    Named blocks must be disjoint and together cover every row.
    """

    n_rows: int
    n_cols: int
    blocks: tuple

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        seen = set()
        occupied = np.zeros(self.n_rows, dtype=bool)
        for block in self.blocks:
            if block.name in seen:
                raise ValueError(f"duplicate block name {block.name!r}")
            seen.add(block.name)
            if block.stop > self.n_rows:
                raise ValueError(
                    f"block {block.name!r} ends at row {block.stop}, "
                    f"layout has {self.n_rows} rows"
                )
            if occupied[block.rows].any():
                raise ValueError(f"block {block.name!r} overlaps another")
            occupied[block.rows] = True
        if not occupied.all():
            gap = int(np.argmin(occupied))
            raise ValueError(f"row {gap} is not covered by any block")

    def block(self, name):
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(f"no block named {name!r}")

    def rows_of(self, name):
        return self.block(name).rows

    def validate_prompt(self, h):
        h = as_matrix(h, "prompt")
        if h.shape != (self.n_rows, self.n_cols):
            raise ValueError(
                f"prompt shape {h.shape} does not match layout "
                f"({self.n_rows}, {self.n_cols})"
            )
        return h


@dataclass(frozen=True)
class AttentionHead:
    """Value / key / query projections of one linear-attention head."""

    w_v: np.ndarray
    w_k: np.ndarray
    w_q: np.ndarray

    def __post_init__(self):
        dim = None
        for field_name in ("w_v", "w_k", "w_q"):
            m = as_matrix(getattr(self, field_name), field_name)
            if m.shape[0] != m.shape[1]:
                raise ValueError(
                    f"{field_name} must be square, got {m.shape}"
                )
            if dim is None:
                dim = m.shape[0]
            elif m.shape[0] != dim:
                raise ValueError(
                    f"{field_name} is {m.shape[0]}x{m.shape[0]}, other "
                    f"projections are {dim}x{dim}"
                )
            object.__setattr__(self, field_name, m)

    @property
    def dim(self):
        return self.w_v.shape[0]


@dataclass(frozen=True)
class TransformerLayer:
    """One block: parallel attention heads plus an optional ffn.

    ``ffn`` is None or a pair (w1, w2) with w1 of shape (hidden, dim)
    and w2 of shape (dim, hidden); biases are encoded through the
    prompt's ones row rather than stored separately.
    """

    heads: tuple
    ffn: object = None

    def __post_init__(self):
        heads = tuple(self.heads)
        if not heads:
            raise ValueError("a layer needs at least one head")
        dim = heads[0].dim
        for head in heads:
            if head.dim != dim:
                raise ValueError("heads disagree on model dimension")
        object.__setattr__(self, "heads", heads)
        if self.ffn is not None:
            w1, w2 = self.ffn
            w1 = as_matrix(w1, "ffn w1")
            w2 = as_matrix(w2, "ffn w2")
            if w1.shape[1] != dim or w2.shape[0] != dim:
                raise ValueError(
                    f"ffn shapes {w1.shape}, {w2.shape} do not match "
                    f"model dimension {dim}"
                )
            if w2.shape[1] != w1.shape[0]:
                raise ValueError(
                    f"ffn hidden sizes disagree: w1 has {w1.shape[0]} "
                    f"rows, w2 has {w2.shape[1]} columns"
                )
            object.__setattr__(self, "ffn", (w1, w2))

    @property
    def dim(self):
        return self.heads[0].dim

    @property
    def has_ffn(self):
        return self.ffn is not None


def assemble_blocks(dim, entries):
    """Build a dense dim x dim weight matrix from sparse block triples.

    Each entry is (rows, cols, content) with slice or integer indices;
    scalar content broadcasts, and overlapping entries accumulate.
    """
    m = np.zeros((dim, dim))
    for rows, cols, content in entries:
        m[rows, cols] += content
    return m


def _check_stream(h, dim):
    h = as_matrix(h, "h")
    if h.shape[0] != dim:
        raise ValueError(
            f"h has {h.shape[0]} rows, model dimension is {dim}"
        )
    return h


def _as_heads(layer):
    if isinstance(layer, TransformerLayer):
        return layer.heads
    if isinstance(layer, AttentionHead):
        return (layer,)
    heads = tuple(layer)
    if not heads:
        raise ValueError("need at least one head")
    return heads


def attention_forward(layer, h):
    """Residual attention update: h + sum of head contributions.

    Accepts a layer (its ffn, if any, is NOT applied here) or a bare
    head sequence.
    """
    heads = _as_heads(layer)
    h = _check_stream(h, heads[0].dim)
    out = h.copy()
    for head in heads:
        if head.dim != h.shape[0]:
            raise ValueError("head dimension does not match h")
        value = head.w_v @ h
        key = head.w_k @ h
        query = head.w_q @ h
        out += value @ (key.T @ query)
    return out


def ffn_forward(layer, h):
    """Residual feed-forward update: h + w2 relu(w1 h).

    A layer without an ffn passes h through unchanged; callers can
    consult ``layer.has_ffn`` to distinguish the no-op case.
    """
    h = _check_stream(h, layer.dim)
    if layer.ffn is None:
        return h.copy()
    w1, w2 = layer.ffn
    return h + w2 @ np.maximum(w1 @ h, 0.0)


def model_forward(layers, h):
    """Run the stream through each layer: attention, then its ffn.

    An empty layer list returns the prompt unchanged.
    """
    layers = tuple(layers)
    if not layers:
        return as_matrix(h, "h").copy()
    h = _check_stream(h, layers[0].dim)
    for layer in layers:
        h = attention_forward(layer, h)
        if layer.has_ffn:
            h = ffn_forward(layer, h)
    return h


def save_model(layers, directory):
    """Write layers to *directory*: one CSV per weight matrix plus a
    plain-text manifest with one line per layer and per head.  Values
    round-trip exactly."""
    layers = tuple(layers)
    os.makedirs(directory, exist_ok=True)
    lines = []
    for i, layer in enumerate(layers):
        if layer.has_ffn:
            w1, w2 = layer.ffn
            f1, f2 = f"layer{i}_ffn_w1.csv", f"layer{i}_ffn_w2.csv"
            save_matrix_csv(w1, os.path.join(directory, f1))
            save_matrix_csv(w2, os.path.join(directory, f2))
            lines.append(
                f"layer {i} heads={len(layer.heads)} "
                f"ffn_width={w1.shape[0]} w1={f1} w2={f2}"
            )
        else:
            lines.append(f"layer {i} heads={len(layer.heads)} ffn_width=0")
        for j, head in enumerate(layer.heads):
            files = {}
            for tag, w in (("v", head.w_v), ("k", head.w_k), ("q", head.w_q)):
                files[tag] = f"layer{i}_head{j}_{tag}.csv"
                save_matrix_csv(w, os.path.join(directory, files[tag]))
            lines.append(
                f"head {i} {j} v={files['v']} k={files['k']} q={files['q']}"
            )
    with open(
        os.path.join(directory, "model.txt"), "w", encoding="ascii",
        newline="\n",
    ) as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


def load_model(directory):
    """Inverse of ``save_model``; returns a tuple of layers."""
    with open(
        os.path.join(directory, "model.txt"), "r", encoding="ascii"
    ) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    ffns = {}
    head_files = {}
    n_heads = {}
    for line in lines:
        parts = line.split()
        kv = dict(p.split("=", 1) for p in parts if "=" in p)
        if parts[0] == "layer":
            i = int(parts[1])
            n_heads[i] = int(kv["heads"])
            if int(kv["ffn_width"]) > 0:
                ffns[i] = (kv["w1"], kv["w2"])
        elif parts[0] == "head":
            head_files[(int(parts[1]), int(parts[2]))] = (
                kv["v"], kv["k"], kv["q"],
            )
        else:
            raise ValueError(f"unrecognized manifest line: {line!r}")
    layers = []
    for i in sorted(n_heads):
        heads = []
        for j in range(n_heads[i]):
            fv, fk, fq = head_files[(i, j)]
            heads.append(
                AttentionHead(
                    w_v=load_matrix_csv(os.path.join(directory, fv)),
                    w_k=load_matrix_csv(os.path.join(directory, fk)),
                    w_q=load_matrix_csv(os.path.join(directory, fq)),
                )
            )
        ffn = None
        if i in ffns:
            f1, f2 = ffns[i]
            ffn = (
                load_matrix_csv(os.path.join(directory, f1)),
                load_matrix_csv(os.path.join(directory, f2)),
            )
        layers.append(TransformerLayer(heads=tuple(heads), ffn=ffn))
    return tuple(layers)
