"""Evidence-based claim verification with graph semantics mining.

Claims and their retrieved evidences become word co-occurrence graphs,
a gated graph encoder propagates context, a structure-learning layer
scores and discards redundant evidence nodes, attentive readouts build
the claim-evidence interaction, and training couples cross entropy with
an adversarially augmented supervised contrastive loss.
"""

from . import autodiff
from .backend import ACTIVE_BACKEND, get_backend
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig, parse_config_file, resolve_config
from .data import ClaimInstance, Evidence, keyword_label, load_dataset, make_synthetic
from .ggnn import GgnnParams, ggnn_scaled_step, ggnn_step
from .metrics import MetricsReport, compute_metrics
from .model import ModelParams, build_vocab, forward_instance, make_bank, prepare_instance
from .refinement import KernelBank, default_bank, discard_topk, srm_layer
from .rng import RngState, stream
from .textgraph import (
    EmbeddingTable,
    TokenGraph,
    Vocab,
    build_graph,
    load_embeddings,
    normalize_adjacency,
    random_embeddings,
    tokenize,
)
from .train import Adam, evaluate, stratified_split, train

__version__ = "0.1.0"

__all__ = [
    "ACTIVE_BACKEND",
    "Adam",
    "ClaimInstance",
    "EmbeddingTable",
    "Evidence",
    "GgnnParams",
    "KernelBank",
    "MetricsReport",
    "ModelParams",
    "RngState",
    "TokenGraph",
    "TrainConfig",
    "Vocab",
    "autodiff",
    "build_graph",
    "build_vocab",
    "compute_metrics",
    "default_bank",
    "discard_topk",
    "evaluate",
    "forward_instance",
    "get_backend",
    "ggnn_scaled_step",
    "ggnn_step",
    "keyword_label",
    "load_checkpoint",
    "load_dataset",
    "load_embeddings",
    "make_bank",
    "make_synthetic",
    "normalize_adjacency",
    "parse_config_file",
    "prepare_instance",
    "random_embeddings",
    "resolve_config",
    "save_checkpoint",
    "srm_layer",
    "stratified_split",
    "stream",
    "tokenize",
    "train",
]
