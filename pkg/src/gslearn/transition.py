"""Transition node set: learned projections that keep structure learning
linear in the number of nodes.

Two s-by-n matrices project each layer's input onto s transition nodes:
W_t feeds the structure path (candidates for similarity), W_e feeds the
feature path (what the GCN aggregates). Similarity is then n-by-s instead
of n-by-n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import (
    ConfigError,
    DiffNode,
    RngState,
    _coerce,
    glorot_init,
    matmul,
    param,
)
from .sampler import RelaxedAdjacency, relaxed_sample
from .similarity import (
    EmbeddingMatrix,
    GaussianParams,
    NeuralGaussianParams,
    compute_similarity,
)


@dataclass
class TransitionProjector:
    """Structure and feature projections onto s transition nodes."""

    W_t: DiffNode
    W_e: DiffNode
    s: int

    def named_parameters(self, name: str = "proj") -> dict[str, DiffNode]:
        out = {}
        if self.W_t.requires_grad:
            out[f"{name}.W_t"] = self.W_t
            out[f"{name}.W_e"] = self.W_e
        return out


def make_projector(s: int, n: int, rng: RngState,
                   name: str = "proj") -> TransitionProjector:
    """Trainable projector; Glorot entries scaled by 1/sqrt(n) so projected
    rows start at a magnitude comparable to single node features."""
    if s < 1:
        raise ConfigError(f"transition size s must be >= 1, got {s}")
    if n < 1:
        raise ConfigError(f"node count n must be >= 1, got {n}")
    k = 1.0 / np.sqrt(n)
    w_t = glorot_init(s, n, rng.generator("init", f"{name}.W_t")) * k
    w_e = glorot_init(s, n, rng.generator("init", f"{name}.W_e")) * k
    return TransitionProjector(param(w_t), param(w_e), int(s))


def selection_projector(s: int, n: int, rng: RngState,
                        name: str = "anchors") -> TransitionProjector:
    """Frozen random anchor selection: both projections pick the same s
    distinct nodes (one-hot rows). Serves as a non-learned baseline."""
    if not 1 <= s <= n:
        raise ConfigError(f"anchor count s must be in [1, {n}], got {s}")
    gen = rng.generator("init", f"{name}.pick")
    picked = gen.choice(n, size=s, replace=False)
    sel = np.zeros((s, n))
    sel[np.arange(s), picked] = 1.0
    node = DiffNode(sel, requires_grad=False)
    return TransitionProjector(node, node, int(s))


def project_structure(h_in, proj: TransitionProjector) -> DiffNode:
    """R = W_t @ input: transition rows for the structure path."""
    return matmul(proj.W_t, _coerce(h_in))


def project_features(h_in, proj: TransitionProjector) -> DiffNode:
    """X_t = W_e @ input: transition rows the GCN aggregates."""
    return matmul(proj.W_e, _coerce(h_in))


def transition_structure(Z: EmbeddingMatrix, R_emb: EmbeddingMatrix,
                         kernel: str, tau: float, k: int, rng,
                         gaussian: GaussianParams | None = None,
                         neural: NeuralGaussianParams | None = None,
                         straight_through: bool = False):
    """Relaxed n-by-s structure over transition candidates.

    Returns (RelaxedAdjacency, SimilarityMatrix, info); info carries the
    per-node parameters for the "neuralgau" kernel.
    """
    sim, info = compute_similarity(kernel, Z, R_emb, gaussian=gaussian, neural=neural)
    adj = relaxed_sample(sim, tau, k, rng, straight_through=straight_through)
    return adj, sim, info
