"""The two encoders that share one embedding space.

Crystal side: a gated graph-convolution stack over the periodic neighbor
graph, mean-pooled over atoms, then a linear projection head. Text side: a
hashed-token embedding table, mean-pooled over tokens, then a three-layer
MLP. Both emit unit-norm vectors of the same dimensionality, so a cosine
between a structure and a caption is always well defined.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import EmptyText, ShapeMismatch
from .graphs import N_ELEMENT_FEATURES, CrystalGraph
from .tensor import Tensor

EMBED_DIM = 768

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_WORD_RE = re.compile(r"[0-9a-z]+")


def split_words(text: str) -> list[str]:
    """Lowercase and split on any non-alphanumeric run."""
    return _WORD_RE.findall(text.lower())


def fnv1a_64(token: str) -> int:
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def tokenize(text: str, vocab_size: int = 32768) -> list[int]:
    """Hash the words of a text into stable token ids."""
    return [fnv1a_64(w) % vocab_size for w in split_words(text)]


# ---------------------------------------------------------------------------
# configs and weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrystalEncoderConfig:
    n_atom_features: int = N_ELEMENT_FEATURES
    n_edge_features: int = 41
    hidden: int = 128
    n_conv: int = 3
    embed_dim: int = EMBED_DIM

    def __post_init__(self):
        if self.n_conv < 1:
            raise ValueError("n_conv must be >= 1")


@dataclass(frozen=True)
class TextEncoderConfig:
    vocab_size: int = 32768
    hidden: int = 256
    embed_dim: int = EMBED_DIM


@dataclass
class ConvLayerWeights:
    w_gate: Tensor
    b_gate: Tensor
    w_core: Tensor
    b_core: Tensor


@dataclass
class CrystalEncoderWeights:
    config: CrystalEncoderConfig
    w_in: Tensor
    b_in: Tensor
    convs: list[ConvLayerWeights]
    w_proj: Tensor
    b_proj: Tensor


@dataclass
class TextEncoderWeights:
    config: TextEncoderConfig
    table: Tensor
    layers: list[tuple[Tensor, Tensor]] = field(default_factory=list)  # 3 affine (w, b)


def _param(rng: np.random.Generator, shape, scale: float, dtype) -> Tensor:
    return Tensor(rng.normal(0.0, scale, size=shape).astype(dtype), requires_grad=True)


def init_crystal_encoder(
    config: CrystalEncoderConfig, rng: np.random.Generator, dtype=np.float32
) -> CrystalEncoderWeights:
    h = config.hidden
    z_dim = 2 * h + config.n_edge_features
    convs = []
    for _ in range(config.n_conv):
        convs.append(
            ConvLayerWeights(
                w_gate=_param(rng, (z_dim, h), z_dim**-0.5, dtype),
                b_gate=Tensor(np.zeros(h, dtype=dtype), requires_grad=True),
                w_core=_param(rng, (z_dim, h), z_dim**-0.5, dtype),
                b_core=Tensor(np.zeros(h, dtype=dtype), requires_grad=True),
            )
        )
    return CrystalEncoderWeights(
        config=config,
        w_in=_param(rng, (config.n_atom_features, h), config.n_atom_features**-0.5, dtype),
        b_in=Tensor(np.zeros(h, dtype=dtype), requires_grad=True),
        convs=convs,
        w_proj=_param(rng, (h, config.embed_dim), h**-0.5, dtype),
        b_proj=Tensor(np.zeros(config.embed_dim, dtype=dtype), requires_grad=True),
    )


def init_text_encoder(
    config: TextEncoderConfig, rng: np.random.Generator, dtype=np.float32
) -> TextEncoderWeights:
    h = config.hidden
    layers = [
        (_param(rng, (h, h), h**-0.5, dtype), Tensor(np.zeros(h, dtype=dtype), requires_grad=True)),
        (_param(rng, (h, h), h**-0.5, dtype), Tensor(np.zeros(h, dtype=dtype), requires_grad=True)),
        (
            _param(rng, (h, config.embed_dim), h**-0.5, dtype),
            Tensor(np.zeros(config.embed_dim, dtype=dtype), requires_grad=True),
        ),
    ]
    return TextEncoderWeights(
        config=config,
        table=_param(rng, (config.vocab_size, h), 0.1, dtype),
        layers=layers,
    )


def crystal_parameters(weights: CrystalEncoderWeights) -> dict[str, Tensor]:
    params = {"crystal/w_in": weights.w_in, "crystal/b_in": weights.b_in}
    for k, conv in enumerate(weights.convs):
        params[f"crystal/conv{k}/w_gate"] = conv.w_gate
        params[f"crystal/conv{k}/b_gate"] = conv.b_gate
        params[f"crystal/conv{k}/w_core"] = conv.w_core
        params[f"crystal/conv{k}/b_core"] = conv.b_core
    params["crystal/w_proj"] = weights.w_proj
    params["crystal/b_proj"] = weights.b_proj
    return params


def text_parameters(weights: TextEncoderWeights) -> dict[str, Tensor]:
    params = {"text/table": weights.table}
    for k, (w, b) in enumerate(weights.layers):
        params[f"text/mlp{k}/w"] = w
        params[f"text/mlp{k}/b"] = b
    return params


# ---------------------------------------------------------------------------
# forward passes (batched, on the tape)
# ---------------------------------------------------------------------------

def crystal_forward(graphs: list[CrystalGraph], weights: CrystalEncoderWeights) -> Tensor:
    """Embed a batch of graphs; returns a B x D tensor with unit-norm rows."""
    if not graphs:
        raise ShapeMismatch("crystal_forward needs at least one graph")
    dtype = weights.w_in.data.dtype
    node_parts, edge_parts, src_parts, dst_parts, graph_ids = [], [], [], [], []
    base = 0
    for gi, graph in enumerate(graphs):
        node_parts.append(graph.node_features.astype(dtype))
        edge_parts.append(graph.edge_features.astype(dtype))
        src_parts.append(graph.edge_src.astype(np.int64) + base)
        dst_parts.append(graph.edge_dst.astype(np.int64) + base)
        graph_ids.append(np.full(graph.n_nodes, gi, dtype=np.int64))
        base += graph.n_nodes
    x = Tensor(np.concatenate(node_parts, axis=0))
    src = np.concatenate(src_parts)
    dst = np.concatenate(dst_parts)
    seg = np.concatenate(graph_ids)
    n_nodes = base

    v = T.add(T.matmul(x, weights.w_in), weights.b_in)
    if src.size:
        e = Tensor(np.concatenate(edge_parts, axis=0))
        for conv in weights.convs:
            vi = T.row_gather(v, src)
            vj = T.row_gather(v, dst)
            z = T.concat([vi, vj, e], axis=1)
            gate = T.sigmoid(T.add(T.matmul(z, conv.w_gate), conv.b_gate))
            core = T.softplus(T.add(T.matmul(z, conv.w_core), conv.b_core))
            v = T.add(v, T.segment_sum(T.mul(gate, core), src, n_nodes))
    counts = np.bincount(seg, minlength=len(graphs)).astype(dtype)
    pooled = T.scale_rows(T.segment_sum(v, seg, len(graphs)), Tensor(1.0 / counts))
    projected = T.add(T.matmul(pooled, weights.w_proj), weights.b_proj)
    return T.l2_normalize(projected)


def encode_crystal(graph: CrystalGraph, weights: CrystalEncoderWeights) -> np.ndarray:
    """Embedding of a single structure as a unit-norm vector."""
    return crystal_forward([graph], weights).data[0].copy()


def text_forward(token_seqs: list[list[int]], weights: TextEncoderWeights) -> Tensor:
    """Embed a batch of token sequences; returns B x D with unit-norm rows."""
    if not token_seqs:
        raise ShapeMismatch("text_forward needs at least one sequence")
    for k, seq in enumerate(token_seqs):
        if len(seq) == 0:
            raise EmptyText(f"sequence {k} has no tokens")
    ids = np.concatenate([np.asarray(seq, dtype=np.int64) for seq in token_seqs])
    seg = np.concatenate(
        [np.full(len(seq), k, dtype=np.int64) for k, seq in enumerate(token_seqs)]
    )
    lengths = np.array([len(seq) for seq in token_seqs], dtype=weights.table.data.dtype)

    gathered = T.row_gather(weights.table, ids)
    pooled = T.scale_rows(T.segment_sum(gathered, seg, len(token_seqs)), Tensor(1.0 / lengths))
    h = pooled
    for k, (w, b) in enumerate(weights.layers):
        h = T.add(T.matmul(h, w), b)
        if k < len(weights.layers) - 1:
            h = T.relu(h)
    return T.l2_normalize(h)


def encode_text(text: str, weights: TextEncoderWeights) -> np.ndarray:
    """Embedding of one text as a unit-norm vector. Raises EmptyText."""
    tokens = tokenize(text, weights.config.vocab_size)
    if not tokens:
        raise EmptyText(f"no tokens in {text!r}")
    return text_forward([tokens], weights).data[0].copy()


# ---------------------------------------------------------------------------
# the paired model
# ---------------------------------------------------------------------------

@dataclass
class DualEncoder:
    crystal: CrystalEncoderWeights
    text: TextEncoderWeights

    def parameters(self) -> dict[str, Tensor]:
        params = crystal_parameters(self.crystal)
        params.update(text_parameters(self.text))
        return params

    def meta(self) -> dict:
        return {
            "crystal": {
                "n_atom_features": self.crystal.config.n_atom_features,
                "n_edge_features": self.crystal.config.n_edge_features,
                "hidden": self.crystal.config.hidden,
                "n_conv": self.crystal.config.n_conv,
                "embed_dim": self.crystal.config.embed_dim,
            },
            "text": {
                "vocab_size": self.text.config.vocab_size,
                "hidden": self.text.config.hidden,
                "embed_dim": self.text.config.embed_dim,
            },
        }


def init_dual_encoder(
    seed: int,
    crystal_config: CrystalEncoderConfig | None = None,
    text_config: TextEncoderConfig | None = None,
    dtype=np.float32,
) -> DualEncoder:
    rng = np.random.default_rng(seed)
    crystal_config = crystal_config or CrystalEncoderConfig()
    text_config = text_config or TextEncoderConfig()
    return DualEncoder(
        crystal=init_crystal_encoder(crystal_config, rng, dtype),
        text=init_text_encoder(text_config, rng, dtype),
    )


def save_model(path, model: DualEncoder, extra_meta: dict | None = None) -> None:
    from .checkpoint import save_checkpoint

    meta = {"model": model.meta()}
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, model.parameters(), meta=meta)


def load_model(path) -> tuple[DualEncoder, dict]:
    from .checkpoint import load_checkpoint

    tensors, meta = load_checkpoint(path)
    mc = meta["model"]
    crystal_config = CrystalEncoderConfig(**mc["crystal"])
    text_config = TextEncoderConfig(**mc["text"])
    model = init_dual_encoder(0, crystal_config, text_config)
    params = model.parameters()
    for name, param in params.items():
        if name not in tensors:
            raise ValueError(f"checkpoint lacks tensor {name!r}")
        if tensors[name].shape != param.data.shape:
            raise ValueError(
                f"checkpoint tensor {name!r} has shape {tensors[name].shape}, "
                f"expected {param.data.shape}"
            )
        param.data = tensors[name].astype(param.data.dtype)
    return model, meta
