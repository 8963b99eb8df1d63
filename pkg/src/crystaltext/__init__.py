"""Crossmodal crystal-structure / text embeddings.

Train a crystal-graph encoder and a text encoder into one shared latent
space with a large-margin cosine contrastive loss; screen structures
zero-shot from free-form text; map the embedding space into a clustered,
coherence-scored atlas.
"""

from .cifio import (
    AtomSite,
    CrystalStructure,
    LatticeParams,
    SymmetryOp,
    expand_symmetry,
    frac_to_cart,
    load_structure,
    parse_cif,
    parse_symmetry_op,
)
from .corpus import CorpusRecord, KeywordFilter, ingest, split, synth_toy_corpus
from .encoders import DualEncoder, encode_crystal, encode_text, init_dual_encoder, tokenize
from .graphs import CrystalGraph, GraphConfig, build_graph, gaussian_expand, periodic_neighbors
from .retrieval import EmbeddingIndex, LabelRule, average_precision, roc_auc
from .training import LossConfig, TrainConfig, cosface_loss, train_run

__version__ = "0.1.0"

__all__ = [
    "AtomSite",
    "CorpusRecord",
    "CrystalGraph",
    "CrystalStructure",
    "DualEncoder",
    "EmbeddingIndex",
    "GraphConfig",
    "KeywordFilter",
    "LabelRule",
    "LatticeParams",
    "LossConfig",
    "SymmetryOp",
    "TrainConfig",
    "average_precision",
    "build_graph",
    "cosface_loss",
    "encode_crystal",
    "encode_text",
    "expand_symmetry",
    "frac_to_cart",
    "gaussian_expand",
    "ingest",
    "init_dual_encoder",
    "load_structure",
    "parse_cif",
    "parse_symmetry_op",
    "periodic_neighbors",
    "roc_auc",
    "split",
    "synth_toy_corpus",
    "tokenize",
    "train_run",
    "__version__",
]
