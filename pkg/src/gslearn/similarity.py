"""Row-stochastic edge-probability kernels over learned node embeddings.

Kernel tags, shared with the CLI: "lin" (softmax of inner products),
"diff" (difference-weighted inner products), "gau" (Gaussian bell over
inner products with fixed center and width), "neuralgau" (per-node center
and width predicted from the embedding), and "heat" (heat kernel over raw
feature distances, used by the kNN baseline and curve export).

Every kernel emits a :class:`SimilarityMatrix` whose rows sum to one; the
pre-softmax scores are kept alongside for curve export and inspection.
Score-buffer allocations are recorded in :data:`similarity_buffer` so the
complexity probe can verify that the transition path never materializes an
n-by-n buffer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diffcore import (
    ConfigError,
    ContractError,
    DiffNode,
    RngState,
    _coerce,
    add,
    clamp_min,
    constant,
    div,
    exp,
    glorot_init,
    matmul,
    mul,
    param,
    relu,
    row_l2_normalize,
    row_sums,
    scale,
    sigmoid,
    softmax_rows,
    sub,
    transpose,
    zeros_init,
)

KERNELS = ("lin", "diff", "gau", "neuralgau", "heat")

GAUSIM_B_DEFAULT = 0.5
GAUSIM_C_DEFAULT = 0.02 * math.e
C_SCALE_DEFAULT = 0.1
C_FLOOR = 1e-6

# Added to masked score entries before the softmax; large enough that the
# corresponding probability underflows to zero.
MASK_SCORE = -1e9


class BufferLedger:
    """Records similarity score-buffer allocations (rows x cols entries)."""

    def __init__(self):
        self.shapes: list[tuple[int, int]] = []

    def record(self, rows: int, cols: int):
        self.shapes.append((int(rows), int(cols)))

    @property
    def peak_entries(self) -> int:
        return max((r * c for r, c in self.shapes), default=0)

    def reset(self):
        self.shapes.clear()


similarity_buffer = BufferLedger()


@dataclass
class EmbeddingMatrix:
    """Node embeddings plus whether rows are unit L2 norm."""

    Z: DiffNode
    normalized: bool

    @property
    def n(self) -> int:
        return self.Z.value.shape[0]

    @property
    def dim(self) -> int:
        return self.Z.value.shape[1]


@dataclass
class SimilarityMatrix:
    """Row-stochastic edge probabilities and the scores they came from."""

    pi: DiffNode
    kernel: str
    scores: DiffNode

    @property
    def shape(self) -> tuple[int, int]:
        return self.pi.value.shape


@dataclass
class GaussianParams:
    """Fixed Gaussian kernel: center b, width c (both scalar)."""

    b: float = GAUSIM_B_DEFAULT
    c: float = GAUSIM_C_DEFAULT

    def __post_init__(self):
        if self.c <= 0:
            raise ConfigError(f"gaussian width c must be positive, got {self.c}")


@dataclass
class NeuralGaussianParams:
    """Per-node Gaussian kernel: b_i = sigmoid(z_i w_b^T) and
    c_i = c_scale * sigmoid(z_i w_c^T), floored at 1e-6."""

    w_b: DiffNode
    w_c: DiffNode
    c_scale: float = C_SCALE_DEFAULT

    def __post_init__(self):
        if self.c_scale <= 0:
            raise ConfigError(f"c_scale must be positive, got {self.c_scale}")


class MlpEncoder:
    """Per-node MLP producing embeddings, with optional output row
    normalization. Depth counts linear layers; relu sits between them.
    Weights are Glorot uniform, biases zero."""

    def __init__(self, in_dim: int, out_dim: int, rng: RngState,
                 name: str = "enc", depth: int = 1, normalize: bool = True):
        if depth < 1:
            raise ConfigError(f"encoder depth must be >= 1, got {depth}")
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.name = name
        self.normalize = bool(normalize)
        dims = [self.in_dim] + [self.out_dim] * depth
        self.weights = []
        self.biases = []
        for i in range(depth):
            w = glorot_init(dims[i], dims[i + 1], rng.generator("init", f"{name}.W{i}"))
            self.weights.append(param(w))
            self.biases.append(param(zeros_init(1, dims[i + 1])))

    def embed(self, X) -> EmbeddingMatrix:
        h = _coerce(X)
        if h.value.shape[1] != self.in_dim:
            raise ConfigError(
                f"{self.name}: input has {h.value.shape[1]} features, expected {self.in_dim}"
            )
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = add(matmul(h, w), b)
            if i < last:
                h = relu(h)
        if self.normalize:
            h = row_l2_normalize(h, strict=False)
        return EmbeddingMatrix(h, self.normalize)

    def named_parameters(self) -> dict[str, DiffNode]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{self.name}.W{i}"] = w
            out[f"{self.name}.b{i}"] = b
        return out

    def parameters(self) -> list[DiffNode]:
        return list(self.named_parameters().values())


def _check_pair(Z: EmbeddingMatrix, C: EmbeddingMatrix, op: str):
    if not isinstance(Z, EmbeddingMatrix) or not isinstance(C, EmbeddingMatrix):
        raise ContractError(f"{op} expects EmbeddingMatrix operands")
    if Z.dim != C.dim:
        raise ConfigError(
            f"{op}: embedding dims differ, {Z.dim} vs {C.dim}"
        )


def _mask_diagonal(scores: DiffNode) -> DiffNode:
    n, c = scores.value.shape
    if n != c:
        raise ConfigError("self-masking needs a square score matrix")
    return add(scores, constant(np.eye(n) * MASK_SCORE))


def linsim(Z: EmbeddingMatrix, C: EmbeddingMatrix,
           mask_self: bool = False) -> SimilarityMatrix:
    """Softmax over raw inner products z_i c_j^T."""
    _check_pair(Z, C, "linsim")
    scores = matmul(Z.Z, transpose(C.Z))
    similarity_buffer.record(Z.n, C.n)
    if mask_self:
        scores = _mask_diagonal(scores)
    return SimilarityMatrix(softmax_rows(scores), "lin", scores)


def diffsim(Z: EmbeddingMatrix, C: EmbeddingMatrix,
            mask_self: bool = False) -> SimilarityMatrix:
    """Softmax over z_i (z_i - c_j)^T, which equals 1 - z_i c_j^T on
    unit-norm rows. Requires normalized embeddings; the self-score is then
    zero, the row minimum."""
    _check_pair(Z, C, "diffsim")
    if not (Z.normalized and C.normalized):
        raise ContractError("diffsim requires row-normalized embeddings")
    own = row_sums(mul(Z.Z, Z.Z))
    scores = sub(own, matmul(Z.Z, transpose(C.Z)))
    similarity_buffer.record(Z.n, C.n)
    if mask_self:
        scores = _mask_diagonal(scores)
    return SimilarityMatrix(softmax_rows(scores), "diff", scores)


def gausim_phi(s, b: float = GAUSIM_B_DEFAULT, c: float = GAUSIM_C_DEFAULT):
    """Scalar Gaussian score exp(-(s - b)^2 / c); peak value 1 at s = b."""
    if c <= 0:
        raise ConfigError(f"gaussian width c must be positive, got {c}")
    s = np.asarray(s, dtype=np.float64)
    return np.exp(-((s - b) ** 2) / c)


def gausim(Z: EmbeddingMatrix, C: EmbeddingMatrix,
           params: GaussianParams | None = None,
           mask_self: bool = False) -> SimilarityMatrix:
    """Softmax over the Gaussian bell exp(-(z_i c_j^T - b)^2 / c)."""
    _check_pair(Z, C, "gausim")
    p = params or GaussianParams()
    inner = matmul(Z.Z, transpose(C.Z))
    similarity_buffer.record(Z.n, C.n)
    centered = add(inner, -p.b)
    phi = exp(scale(mul(centered, centered), -1.0 / p.c))
    scores = _mask_diagonal(phi) if mask_self else phi
    return SimilarityMatrix(softmax_rows(scores), "gau", phi)


def neural_gausim(Z: EmbeddingMatrix, C: EmbeddingMatrix,
                  params: NeuralGaussianParams,
                  mask_self: bool = False):
    """Gaussian kernel with per-node center and width predicted from z_i.

    Returns (SimilarityMatrix, b_values, c_values) where the vectors hold
    the realized per-node parameters (c after scaling and flooring).
    """
    _check_pair(Z, C, "neural_gausim")
    for w, tag in ((params.w_b, "w_b"), (params.w_c, "w_c")):
        if w.value.shape != (1, Z.dim):
            raise ConfigError(
                f"{tag} shape {w.value.shape} does not match embedding dim {Z.dim}"
            )
    b_col = sigmoid(matmul(Z.Z, transpose(params.w_b)))
    c_col = clamp_min(scale(sigmoid(matmul(Z.Z, transpose(params.w_c))), params.c_scale), C_FLOOR)
    inner = matmul(Z.Z, transpose(C.Z))
    similarity_buffer.record(Z.n, C.n)
    centered = sub(inner, b_col)
    phi = exp(scale(div(mul(centered, centered), c_col), -1.0))
    scores = _mask_diagonal(phi) if mask_self else phi
    sim = SimilarityMatrix(softmax_rows(scores), "neuralgau", phi)
    return sim, b_col.value.ravel().copy(), c_col.value.ravel().copy()


def heat_kernel(X, t: float = 1.0, mask_self: bool = False) -> SimilarityMatrix:
    """Heat kernel over pairwise feature distances: exp(-||x_i - x_j||^2 / t).

    Feature-based and non-learnable; for unit-norm rows the score reduces
    to exp(-2 (1 - x_i x_j^T) / t).
    """
    if t <= 0:
        raise ConfigError(f"heat kernel time t must be positive, got {t}")
    V = X.value if isinstance(X, DiffNode) else np.asarray(X, dtype=np.float64)
    sq = (V * V).sum(axis=1, keepdims=True)
    d2 = np.maximum(sq + sq.T - 2.0 * (V @ V.T), 0.0)
    phi = np.exp(-d2 / t)
    similarity_buffer.record(V.shape[0], V.shape[0])
    scores = phi + np.eye(V.shape[0]) * MASK_SCORE if mask_self else phi
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    pi = e / e.sum(axis=1, keepdims=True)
    return SimilarityMatrix(constant(pi), "heat", constant(phi))


def compute_similarity(kernel: str, Z: EmbeddingMatrix, C: EmbeddingMatrix,
                       gaussian: GaussianParams | None = None,
                       neural: NeuralGaussianParams | None = None,
                       mask_self: bool = False):
    """Dispatch on a kernel tag. Returns (SimilarityMatrix, info) where the
    info dict carries the realized per-node parameters for "neuralgau"."""
    if kernel == "lin":
        return linsim(Z, C, mask_self), {}
    if kernel == "diff":
        return diffsim(Z, C, mask_self), {}
    if kernel == "gau":
        return gausim(Z, C, gaussian, mask_self), {}
    if kernel == "neuralgau":
        if neural is None:
            raise ConfigError("neuralgau kernel needs NeuralGaussianParams")
        sim, b_vec, c_vec = neural_gausim(Z, C, neural, mask_self)
        return sim, {"b_vec": b_vec, "c_vec": c_vec}
    if kernel == "heat":
        raise ConfigError(
            "heat kernel is feature-based; call heat_kernel on features directly"
        )
    raise ConfigError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
