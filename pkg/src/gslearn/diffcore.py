"""Reverse-mode differentiation over dense float64 matrices.

Everything downstream (kernels, sampler, encoder) is built from the
operations in this module. A matrix is a plain 2-D numpy float64 array;
``DiffNode`` pairs one with a gradient slot and records, per parent, a pull
function that maps the output gradient to that parent's gradient
contribution. ``backward`` walks the graph once in reverse topological
order and accumulates into ``grad`` slots, so calling it twice without
``zero_grads`` doubles the gradients; the trainer zeroes explicitly.

Numeric guards: ``log`` clamps its input at 1e-12, ``exp`` caps its
argument at 700, and ``row_l2_normalize`` rejects rows with norm below
1e-12, so no public operation turns finite input into NaN or Inf.

Randomness flows through :class:`RngState`, a deterministic seed tree.
Substreams are keyed by name ("init", "gumbel", "dropout", "split", ...)
so consuming one stream never shifts another; toggling dropout does not
perturb the Gumbel draws.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

LOG_FLOOR = 1e-12
EXP_CEIL = 700.0
NORM_FLOOR = 1e-12


class DimensionError(ValueError):
    """Operand shapes do not line up."""


class ConfigError(ValueError):
    """A value lies outside its documented range."""


class ContractError(ValueError):
    """An operation was invoked outside its contract."""


class NormalizationError(ValueError):
    """A row cannot be L2-normalized."""

    def __init__(self, row: int, message: str | None = None):
        self.row = row
        super().__init__(message or f"row {row} has zero L2 norm")


def as_matrix(data) -> np.ndarray:
    """Coerce to a 2-D float64 array; scalars and 1-D rows are promoted."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise DimensionError(f"expected a matrix, got ndim={arr.ndim}")
    return arr


class DiffNode:
    """One value in the differentiation graph.

    ``parents`` holds ``(parent, pull)`` pairs where ``pull`` maps this
    node's output gradient to the parent's gradient contribution. Interior
    nodes inherit ``requires_grad`` from their parents; leaves opt in.
    The graph is acyclic by construction because nodes only reference
    previously created nodes.
    """

    __slots__ = ("value", "grad", "parents", "requires_grad")

    def __init__(self, value, requires_grad: bool = False, parents=()):
        self.value = as_matrix(value)
        self.grad = np.zeros_like(self.value)
        self.parents = tuple(parents)
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p, _ in self.parents
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        flag = ", requires_grad" if self.requires_grad else ""
        return f"DiffNode(shape={self.value.shape}{flag})"


def constant(value) -> DiffNode:
    return DiffNode(value, requires_grad=False)


def param(value) -> DiffNode:
    return DiffNode(value, requires_grad=True)


def _coerce(x) -> DiffNode:
    return x if isinstance(x, DiffNode) else constant(x)


def _check_binary(a: DiffNode, b: DiffNode, op: str):
    sa, sb = a.value.shape, b.value.shape
    for da, db in zip(sa, sb):
        if da != db and da != 1 and db != 1:
            raise DimensionError(f"{op}: incompatible shapes {sa} and {sb}")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Reduce a gradient back to an operand shape by summing expanded axes."""
    if grad.shape == shape:
        return grad
    out = grad
    if shape[0] == 1 and out.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and out.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def add(a, b) -> DiffNode:
    a, b = _coerce(a), _coerce(b)
    _check_binary(a, b, "add")
    return DiffNode(
        a.value + b.value,
        parents=[
            (a, lambda g: _unbroadcast(g, a.value.shape)),
            (b, lambda g: _unbroadcast(g, b.value.shape)),
        ],
    )


def sub(a, b) -> DiffNode:
    a, b = _coerce(a), _coerce(b)
    _check_binary(a, b, "sub")
    return DiffNode(
        a.value - b.value,
        parents=[
            (a, lambda g: _unbroadcast(g, a.value.shape)),
            (b, lambda g: _unbroadcast(-g, b.value.shape)),
        ],
    )


def mul(a, b) -> DiffNode:
    a, b = _coerce(a), _coerce(b)
    _check_binary(a, b, "mul")
    return DiffNode(
        a.value * b.value,
        parents=[
            (a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
            (b, lambda g: _unbroadcast(g * a.value, b.value.shape)),
        ],
    )


def div(a, b) -> DiffNode:
    """Elementwise a / b. The caller guarantees b is bounded away from zero."""
    a, b = _coerce(a), _coerce(b)
    _check_binary(a, b, "div")
    return DiffNode(
        a.value / b.value,
        parents=[
            (a, lambda g: _unbroadcast(g / b.value, a.value.shape)),
            (b, lambda g: _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape)),
        ],
    )


def scale(a, k: float) -> DiffNode:
    a = _coerce(a)
    k = float(k)
    if not np.isfinite(k):
        raise ConfigError(f"scale factor must be finite, got {k}")
    return DiffNode(a.value * k, parents=[(a, lambda g: g * k)])


def matmul(a, b) -> DiffNode:
    a, b = _coerce(a), _coerce(b)
    if a.value.shape[1] != b.value.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions differ, {a.value.shape} @ {b.value.shape}"
        )
    return DiffNode(
        a.value @ b.value,
        parents=[
            (a, lambda g: g @ b.value.T),
            (b, lambda g: a.value.T @ g),
        ],
    )


def transpose(a) -> DiffNode:
    # Materialized, not a view: feeding matmul two views of one buffer makes
    # BLAS pick a different accumulation path than it does for distinct
    # buffers with equal bits, which breaks exact reproducibility between
    # aliased and non-aliased call sites.
    a = _coerce(a)
    return DiffNode(np.ascontiguousarray(a.value.T), parents=[(a, lambda g: g.T)])


def relu(a) -> DiffNode:
    a = _coerce(a)
    mask = (a.value > 0).astype(np.float64)
    return DiffNode(a.value * mask, parents=[(a, lambda g: g * mask)])


def sigmoid(a) -> DiffNode:
    a = _coerce(a)
    v = a.value
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return DiffNode(out, parents=[(a, lambda g: g * out * (1.0 - out))])


def exp(a) -> DiffNode:
    a = _coerce(a)
    e = np.exp(np.minimum(a.value, EXP_CEIL))
    mask = (a.value < EXP_CEIL).astype(np.float64)
    return DiffNode(e, parents=[(a, lambda g: g * e * mask)])


def log(a) -> DiffNode:
    """Natural log of max(x, 1e-12); clamped entries get zero gradient."""
    a = _coerce(a)
    clamped = np.maximum(a.value, LOG_FLOOR)
    mask = (a.value > LOG_FLOOR).astype(np.float64)
    return DiffNode(np.log(clamped), parents=[(a, lambda g: g * mask / clamped)])


def clamp_min(a, floor: float) -> DiffNode:
    a = _coerce(a)
    floor = float(floor)
    mask = (a.value > floor).astype(np.float64)
    return DiffNode(np.maximum(a.value, floor), parents=[(a, lambda g: g * mask)])


def row_sums(a) -> DiffNode:
    """Per-row sum as an (n, 1) column."""
    a = _coerce(a)
    shape = a.value.shape
    return DiffNode(
        a.value.sum(axis=1, keepdims=True),
        parents=[(a, lambda g: np.broadcast_to(g, shape))],
    )


def sum_all(a) -> DiffNode:
    """Sum of all entries as a 1x1 matrix."""
    a = _coerce(a)
    shape = a.value.shape
    return DiffNode(
        np.array([[a.value.sum()]]),
        parents=[(a, lambda g: np.broadcast_to(g, shape))],
    )


def softmax_rows(a) -> DiffNode:
    """Row-wise softmax with per-row max subtraction for stability."""
    a = _coerce(a)
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def pull(g, y=y):
        return y * (g - (g * y).sum(axis=1, keepdims=True))

    return DiffNode(y, parents=[(a, pull)])


def row_l2_normalize(a, strict: bool = True) -> DiffNode:
    """Scale each row to unit L2 norm.

    Rows with norm below 1e-12 are rejected when ``strict`` is true. With
    ``strict=False`` such rows (e.g. fully relu-suppressed) pass through as
    zeros and receive no gradient, so dead rows stay dead instead of
    injecting 1/floor-scale gradients.
    """
    a = _coerce(a)
    norms = np.sqrt((a.value * a.value).sum(axis=1, keepdims=True))
    clamped = norms < NORM_FLOOR
    if strict and clamped.any():
        raise NormalizationError(int(np.flatnonzero(clamped.ravel())[0]))
    denom = np.maximum(norms, NORM_FLOOR)
    y = a.value / denom

    def pull(g, y=y, denom=denom, clamped=clamped):
        out = (g - y * (g * y).sum(axis=1, keepdims=True)) / denom
        if clamped.any():
            out = np.where(clamped, 0.0, out)
        return out

    return DiffNode(y, parents=[(a, pull)])


def dropout(a, p: float, rng, training: bool = True) -> DiffNode:
    """Inverted dropout: survivors scale by 1/(1-p); identity at inference.

    The mask is drawn once and reused by the backward pass.
    """
    a = _coerce(a)
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    gen = _as_generator(rng, "dropout")
    keep = (gen.random(a.value.shape) >= p).astype(np.float64) / (1.0 - p)
    return DiffNode(a.value * keep, parents=[(a, lambda g: g * keep)])


def gumbel_noise(shape, rng) -> np.ndarray:
    """Standard Gumbel draws: -log(-log(u)), u uniform clamped to
    [1e-12, 1 - 1e-12]. Returns a plain array; the noise is not a graph node.
    """
    shape = tuple(int(s) for s in (shape if hasattr(shape, "__len__") else (shape,)))
    if any(s < 1 for s in shape):
        raise ConfigError(f"gumbel_noise shape must be positive, got {shape}")
    gen = _as_generator(rng, "gumbel")
    u = np.clip(gen.random(shape), LOG_FLOOR, 1.0 - LOG_FLOOR)
    return -np.log(-np.log(u))


def glorot_init(rows: int, cols: int, rng) -> np.ndarray:
    """Glorot uniform: entries from U(-a, a) with a = sqrt(6 / (rows + cols))."""
    if rows < 1 or cols < 1:
        raise ConfigError(f"glorot_init needs positive dims, got {rows}x{cols}")
    a = np.sqrt(6.0 / (rows + cols))
    gen = _as_generator(rng, "init")
    return gen.uniform(-a, a, size=(rows, cols))


def zeros_init(rows: int, cols: int) -> np.ndarray:
    return np.zeros((rows, cols), dtype=np.float64)


def cross_entropy(logits: DiffNode, labels, mask=None) -> DiffNode:
    """Mean cross-entropy over the masked rows of a logits matrix.

    ``labels`` is one class index per row; ``mask`` selects the rows that
    contribute (boolean per row, or integer row indices; default all rows).
    """
    logits = _coerce(logits)
    n, num_classes = logits.value.shape
    labels = np.asarray(labels).reshape(-1).astype(np.int64)
    if labels.shape[0] != n:
        raise DimensionError(f"labels length {labels.shape[0]} != rows {n}")
    rows = _mask_rows(mask, n)
    if rows.size == 0:
        raise ConfigError("cross_entropy mask selects no rows")
    picked = labels[rows]
    if picked.min() < 0 or picked.max() >= num_classes:
        bad = rows[(picked < 0) | (picked >= num_classes)][0]
        raise ConfigError(
            f"label {labels[bad]} at row {bad} outside [0, {num_classes})"
        )

    v = logits.value
    m = v.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(v - m).sum(axis=1, keepdims=True))
    logp = v - lse
    loss = -logp[rows, picked].mean()

    softmax = np.exp(logp)

    def pull(g, rows=rows, picked=picked):
        gm = np.zeros_like(v)
        gm[rows] = softmax[rows]
        gm[rows, picked] -= 1.0
        gm /= rows.size
        return gm * g[0, 0]

    return DiffNode(np.array([[loss]]), parents=[(logits, pull)])


def _mask_rows(mask, n: int) -> np.ndarray:
    if mask is None:
        return np.arange(n)
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if mask.shape != (n,):
            raise DimensionError(f"boolean mask shape {mask.shape} != ({n},)")
        return np.flatnonzero(mask)
    rows = mask.reshape(-1).astype(np.int64)
    if rows.size and (rows.min() < 0 or rows.max() >= n):
        raise DimensionError("mask indices out of range")
    return rows


def backward(loss: DiffNode):
    """Reverse-mode sweep from a scalar loss.

    Gradients are added into the ``grad`` slot of every node on a path to a
    ``requires_grad`` leaf, so repeated calls accumulate.
    """
    if loss.value.shape != (1, 1):
        raise ContractError(
            f"backward needs a scalar (1x1) loss, got shape {loss.value.shape}"
        )
    if not loss.requires_grad:
        return

    order: list[DiffNode] = []
    seen: set[int] = set()
    stack: list[tuple[DiffNode, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    adjoint: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node in reversed(order):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        node.grad = node.grad + g
        for parent, pull in node.parents:
            if not parent.requires_grad:
                continue
            contribution = pull(g)
            key = id(parent)
            if key in adjoint:
                adjoint[key] = adjoint[key] + contribution
            else:
                adjoint[key] = contribution


def zero_grads(params):
    for p in params:
        p.zero_grad()


@dataclass
class AdamState:
    """Moment estimates and step counter shared by one optimizer instance."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


class Adam:
    """Adam with bias correction over a fixed parameter list.

    update: m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2
            theta -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
    """

    def __init__(self, params, lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        self.state.m = [np.zeros_like(p.value) for p in self.params]
        self.state.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self):
        zero_grads(self.params)

    def step(self):
        s = self.state
        s.step_count += 1
        t = s.step_count
        bc1 = 1.0 - s.beta1 ** t
        bc2 = 1.0 - s.beta2 ** t
        for i, p in enumerate(self.params):
            g = p.grad
            if g.shape != p.value.shape:
                raise DimensionError(
                    f"grad shape {g.shape} != param shape {p.value.shape}"
                )
            s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g
            s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * (g * g)
            m_hat = s.m[i] / bc1
            v_hat = s.v[i] / bc2
            p.value = p.value - s.lr * m_hat / (np.sqrt(v_hat) + s.eps)


class RngState:
    """Root of a deterministic random tree.

    Substreams are independent PCG64 generators keyed by a BLAKE2b digest
    of (seed, path), so the draw sequence of one stream is unchanged by
    whether any other stream is consumed, and is reproducible across runs
    and platforms.
    """

    __slots__ = ("seed",)

    def __init__(self, seed: int):
        self.seed = int(seed)

    def _digest_words(self, path: tuple) -> list[int]:
        text = repr((self.seed,) + tuple(path)).encode("utf-8")
        digest = hashlib.blake2b(text, digest_size=32).digest()
        return [int.from_bytes(digest[i:i + 8], "little") for i in (0, 8, 16, 24)]

    def generator(self, *path) -> np.random.Generator:
        """A fresh generator for the named substream; same path, same draws."""
        seq = np.random.SeedSequence(self._digest_words(path))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, *path) -> "RngState":
        """A derived RngState whose streams are independent of the parent's."""
        return RngState(self._digest_words(path + ("child",))[0])

    def __repr__(self):
        return f"RngState(seed={self.seed})"


def _as_generator(rng, stream: str) -> np.random.Generator:
    if isinstance(rng, RngState):
        return rng.generator(stream)
    if isinstance(rng, np.random.Generator):
        return rng
    raise ConfigError(
        f"expected RngState or numpy Generator, got {type(rng).__name__}"
    )
