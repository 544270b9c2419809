"""Differentiable graph structure learning on dense float64 matrices.

The package jointly learns a latent graph and node representations for
semi-supervised node classification. Edge probabilities come from one of
several similarity kernels over learned embeddings, sampling is made
differentiable with a Gumbel-Softmax relaxation, and an optional transition
node set keeps the similarity buffer linear in the number of nodes.
"""

import os as _os


def _cap_threads():
    # GSL_NUM_THREADS caps BLAS parallelism; it must be applied before numpy
    # first loads its backend, which is why this runs at package import.
    cap = _os.environ.get("GSL_NUM_THREADS")
    if cap:
        for var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "VECLIB_MAXIMUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            _os.environ.setdefault(var, cap)


_cap_threads()

from .diffcore import (  # noqa: E402
    Adam,
    AdamState,
    ConfigError,
    ContractError,
    DiffNode,
    DimensionError,
    NormalizationError,
    RngState,
    backward,
    constant,
    cross_entropy,
    glorot_init,
    gumbel_noise,
    param,
    zero_grads,
)
from .similarity import (  # noqa: E402
    KERNELS,
    EmbeddingMatrix,
    GaussianParams,
    MlpEncoder,
    NeuralGaussianParams,
    SimilarityMatrix,
)
from .sampler import RelaxedAdjacency, hard_knn, relaxed_sample  # noqa: E402
from .transition import TransitionProjector, make_projector  # noqa: E402
from .encoder import GslModel, ModelConfig, bounded_mean_aggregate  # noqa: E402
from .data import Dataset, SplitMasks, load_dataset, make_splits, synth_blobs  # noqa: E402
from .train import train_model, evaluate_checkpoint  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AdamState",
    "ConfigError",
    "ContractError",
    "Dataset",
    "DiffNode",
    "DimensionError",
    "EmbeddingMatrix",
    "GaussianParams",
    "GslModel",
    "KERNELS",
    "MlpEncoder",
    "ModelConfig",
    "NeuralGaussianParams",
    "NormalizationError",
    "RelaxedAdjacency",
    "RngState",
    "SimilarityMatrix",
    "SplitMasks",
    "TransitionProjector",
    "backward",
    "bounded_mean_aggregate",
    "constant",
    "cross_entropy",
    "evaluate_checkpoint",
    "glorot_init",
    "gumbel_noise",
    "hard_knn",
    "load_dataset",
    "make_projector",
    "make_splits",
    "param",
    "relaxed_sample",
    "synth_blobs",
    "train_model",
    "zero_grads",
]
