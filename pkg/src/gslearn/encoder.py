"""Two-layer GCN where each layer first learns the structure it aggregates
over.

Per layer: embed the layer input, score candidate neighbors with the
configured kernel, draw a relaxed row-stochastic adjacency, then apply one
GCN step ``act(A @ F @ W)``. In full mode candidates are the nodes
themselves and F is the layer input; in transition mode candidates are s
projected transition nodes and F is the feature projection of the layer
input. Because the adjacency rows sum to one, aggregation is exactly the
1/K neighbor mean the bounded-aggregation property speaks about, so no
extra degree normalization is applied. The knn mode is a fixed-structure
baseline: one hard kNN graph from raw feature similarity, then a plain
two-layer GCN.

Gradients flow through both structure learners; nothing is detached.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .data import l2_normalize_rows
from .diffcore import (
    ConfigError,
    ContractError,
    DiffNode,
    RngState,
    _coerce,
    add,
    constant,
    dropout,
    glorot_init,
    matmul,
    param,
    relu,
    scale,
)
from .sampler import hard_knn, relaxed_sample
from .similarity import (
    GAUSIM_B_DEFAULT,
    GAUSIM_C_DEFAULT,
    KERNELS,
    C_SCALE_DEFAULT,
    GaussianParams,
    MlpEncoder,
    NeuralGaussianParams,
    compute_similarity,
    heat_kernel,
)
from .transition import (
    TransitionProjector,
    make_projector,
    project_features,
    project_structure,
    selection_projector,
)

MODES = ("full", "transition", "knn")
KNN_KERNELS = ("lin", "heat")


@dataclass
class ModelConfig:
    """Everything needed to rebuild a model and its training run."""

    kernel: str = "neuralgau"
    mode: str = "full"
    k: int = 5
    tau: float = 0.25
    s: int = 500
    hidden: int = 32
    dropout: float = 0.5
    lr: float = 0.001
    c_scale: float = C_SCALE_DEFAULT
    gausim_b: float = GAUSIM_B_DEFAULT
    gausim_c: float = GAUSIM_C_DEFAULT
    seed: int = 0
    encoder_depth: int = 1
    normalize_features: bool = True
    normalize_embeddings: bool = True
    mask_self: bool = False
    self_loop: bool = False
    shared_transition: bool = False
    anchors_random: bool = False
    straight_through: bool = False

    def validate(self) -> "ModelConfig":
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}; expected one of {KERNELS}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.mode == "knn" and self.kernel not in KNN_KERNELS:
            raise ConfigError(
                f"knn mode supports kernels {KNN_KERNELS}, got {self.kernel!r}"
            )
        if self.kernel == "heat" and self.mode != "knn":
            raise ConfigError("heat kernel is only available in knn mode")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.s < 1:
            raise ConfigError(f"s must be >= 1, got {self.s}")
        if self.hidden < 1:
            raise ConfigError(f"hidden must be >= 1, got {self.hidden}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.c_scale <= 0:
            raise ConfigError(f"c_scale must be positive, got {self.c_scale}")
        if self.gausim_c <= 0:
            raise ConfigError(f"gausim_c must be positive, got {self.gausim_c}")
        if self.encoder_depth < 1:
            raise ConfigError(f"encoder_depth must be >= 1, got {self.encoder_depth}")
        if self.self_loop and self.mode != "full":
            raise ConfigError("self_loop applies to full mode only")
        if self.mask_self and self.mode != "full":
            raise ConfigError("mask_self applies to full mode only")
        if (self.shared_transition or self.anchors_random) and self.mode != "transition":
            raise ConfigError("transition flags need mode=transition")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data).validate()


def gcn_layer(A_hat, F, W, activate: bool = True) -> DiffNode:
    """One graph convolution: act(A @ F @ W); relu when activate is set,
    no output activation otherwise."""
    out = matmul(matmul(_coerce(A_hat), _coerce(F)), _coerce(W))
    return relu(out) if activate else out


def bounded_mean_aggregate(h, neighbors, tol: float = 1e-8):
    """Mean of unit neighbor vectors plus its distance to the unit anchor.

    When every neighbor lies within distance eps of the anchor, the mean
    also does; the randomized suite in the analysis module exercises
    exactly this helper. Inputs must already be unit-norm.
    """
    h = np.asarray(h, dtype=np.float64).ravel()
    nb = np.asarray(neighbors, dtype=np.float64)
    if nb.ndim != 2 or nb.shape[1] != h.size:
        raise ConfigError(f"neighbors must be K x {h.size}, got shape {nb.shape}")
    norms = np.concatenate(([np.linalg.norm(h)], np.linalg.norm(nb, axis=1)))
    off = np.abs(norms - 1.0)
    if off.max() > tol:
        raise ContractError(
            f"vector {int(off.argmax())} has norm {norms[off.argmax()]:.12f}, not unit"
        )
    agg = nb.mean(axis=0)
    return agg, float(np.linalg.norm(agg - h))


class GslModel:
    """Structure-learning GCN over a fixed two-layer architecture.

    Transition projections act on the node axis, so a transition-mode model
    is bound to one node count at construction; other modes ignore it.
    """

    def __init__(self, config: ModelConfig, in_dim: int, num_classes: int,
                 n_nodes: int | None = None):
        config.validate()
        if in_dim < 1 or num_classes < 2:
            raise ConfigError(
                f"need in_dim >= 1 and num_classes >= 2, got {in_dim}, {num_classes}"
            )
        self.config = config
        self.in_dim = int(in_dim)
        self.num_classes = int(num_classes)
        self.n_nodes = int(n_nodes) if n_nodes is not None else None
        self.rng = RngState(config.seed)
        cfg = config

        layer_dims = ((self.in_dim, cfg.hidden), (cfg.hidden, self.num_classes))
        self.gcn_weights = [
            param(glorot_init(d_in, d_out, self.rng.generator("init", f"gcn{i}.W")))
            for i, (d_in, d_out) in enumerate(layer_dims)
        ]

        self.encoders: list[MlpEncoder | None] = [None, None]
        self.neural: list[NeuralGaussianParams | None] = [None, None]
        self.gaussian: GaussianParams | None = None
        self.projectors: list[TransitionProjector | None] = [None, None]
        self._knn_adjacency: np.ndarray | None = None

        if cfg.mode != "knn":
            for i, (d_in, _) in enumerate(layer_dims):
                self.encoders[i] = MlpEncoder(
                    d_in, cfg.hidden, self.rng, name=f"enc{i}",
                    depth=cfg.encoder_depth, normalize=cfg.normalize_embeddings,
                )
            if cfg.kernel == "gau":
                self.gaussian = GaussianParams(cfg.gausim_b, cfg.gausim_c)
            elif cfg.kernel == "neuralgau":
                for i in range(2):
                    self.neural[i] = NeuralGaussianParams(
                        w_b=param(glorot_init(1, cfg.hidden,
                                              self.rng.generator("init", f"gauss{i}.w_b"))),
                        w_c=param(glorot_init(1, cfg.hidden,
                                              self.rng.generator("init", f"gauss{i}.w_c"))),
                        c_scale=cfg.c_scale,
                    )

        if cfg.mode == "transition":
            if self.n_nodes is None:
                raise ConfigError("transition mode needs n_nodes at construction")
            if cfg.anchors_random:
                shared = selection_projector(cfg.s, self.n_nodes, self.rng)
                self.projectors = [shared, shared]
            elif cfg.shared_transition:
                shared = make_projector(cfg.s, self.n_nodes, self.rng, name="proj")
                self.projectors = [shared, shared]
            else:
                self.projectors = [
                    make_projector(cfg.s, self.n_nodes, self.rng, name=f"proj{i}")
                    for i in range(2)
                ]

    def named_parameters(self) -> dict[str, DiffNode]:
        out: dict[str, DiffNode] = {}
        for i in range(2):
            enc = self.encoders[i]
            if enc is not None:
                out.update(enc.named_parameters())
            ng = self.neural[i]
            if ng is not None:
                out[f"gauss{i}.w_b"] = ng.w_b
                out[f"gauss{i}.w_c"] = ng.w_c
            out[f"gcn{i}.W"] = self.gcn_weights[i]
        if self.config.mode == "transition":
            if self.config.shared_transition or self.config.anchors_random:
                out.update(self.projectors[0].named_parameters("proj"))
            else:
                for i in range(2):
                    out.update(self.projectors[i].named_parameters(f"proj{i}"))
        return out

    def parameters(self) -> list[DiffNode]:
        return list(self.named_parameters().values())

    def forward(self, X, rng: RngState, training: bool = False,
                trace: dict | None = None) -> DiffNode:
        """Class logits for every node. The caller's RngState fully
        determines the structure noise and dropout masks, so the same rng
        gives the same logits; the training flag only gates dropout."""
        cfg = self.config
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.in_dim:
            raise ConfigError(f"features must be n x {self.in_dim}, got {X.shape}")
        if self.n_nodes is not None and X.shape[0] != self.n_nodes:
            raise ConfigError(
                f"model is bound to n={self.n_nodes}, got features with n={X.shape[0]}"
            )
        if not isinstance(rng, RngState):
            raise ConfigError("forward needs an RngState")
        Xn = l2_normalize_rows(X) if cfg.normalize_features else X
        gumbel_gen = rng.generator("gumbel")
        dropout_gen = rng.generator("dropout")

        h: DiffNode = constant(Xn)
        n = Xn.shape[0]
        for layer in range(2):
            if cfg.mode == "knn":
                A = constant(self._knn_graph(Xn))
                F = h
                if trace is not None:
                    trace[f"layer{layer + 1}"] = {"adjacency": A.value.copy()}
            else:
                enc = self.encoders[layer]
                Z = enc.embed(h)
                if cfg.mode == "transition":
                    proj = self.projectors[layer]
                    R = project_structure(h, proj)
                    candidates = enc.embed(R)
                    F = project_features(h, proj)
                else:
                    candidates = Z
                    F = h
                sim, info = compute_similarity(
                    cfg.kernel, Z, candidates,
                    gaussian=self.gaussian, neural=self.neural[layer],
                    mask_self=cfg.mask_self,
                )
                adj = relaxed_sample(sim, cfg.tau, cfg.k, gumbel_gen,
                                     straight_through=cfg.straight_through)
                A = adj.A
                if cfg.self_loop:
                    A = scale(add(A, constant(np.eye(n))), 0.5)
                if trace is not None:
                    trace[f"layer{layer + 1}"] = {
                        "pi": sim.pi.value.copy(),
                        "adjacency": A.value.copy(),
                        **info,
                    }
            out = gcn_layer(A, F, self.gcn_weights[layer], activate=(layer == 0))
            if layer == 0:
                out = dropout(out, cfg.dropout, dropout_gen, training)
            h = out
        return h

    def _knn_graph(self, Xn: np.ndarray) -> np.ndarray:
        """Hard kNN adjacency built once from raw feature similarity
        (inner products, or heat kernel scores for the heat baseline),
        self column excluded, rows scaled to sum to one."""
        if self._knn_adjacency is None:
            if self.config.kernel == "heat":
                scores = heat_kernel(Xn, t=1.0).scores.value.copy()
            else:
                scores = Xn @ Xn.T
            np.fill_diagonal(scores, -np.inf)
            self._knn_adjacency = hard_knn(scores, self.config.k) / self.config.k
        return self._knn_adjacency
