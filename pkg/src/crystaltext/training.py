"""Large-margin cosine contrastive training of the dual encoder.

The loss couples each structure with its own caption against the other
captions in the batch: scaled cosines with a margin subtracted from the
matched pair, pushed through a stabilized log-softmax. Margin zero recovers
the plain symmetric-free cross-entropy form. Training runs in two stages,
titles first and keyword captions second, with validation checkpoint
selection by mean retrieval ROC-AUC rather than loss.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .cifio import load_structure
from .corpus import CorpusRecord, keyword_corpus
from .encoders import (
    DualEncoder,
    crystal_forward,
    encode_text,
    init_dual_encoder,
    save_model,
    text_forward,
    tokenize,
)
from .errors import CrystalTextError, EmptyCorpus, NonUnitRows, ShapeMismatch
from .graphs import CrystalGraph, GraphConfig, build_graph
from .optim import AdamW, AdamWConfig
from .retrieval import EmbeddingIndex, LabelRule, mean_roc_auc
from .tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossConfig:
    s: float = 3.0
    m: float = 0.5

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("scale s must be positive")
        if not 0.0 <= self.m <= 1.0:
            raise ValueError("margin m must lie in [0, 1]")


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 200
    lr: float = 1e-3
    stage: str = "pretrain"  # or "finetune"
    seed: int = 0
    weight_decay: float = 0.0
    val_every: int = 10

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.stage not in ("pretrain", "finetune"):
            raise ValueError(f"unknown stage {self.stage!r}")


def cosface_loss(crystal_emb, text_emb, cfg: LossConfig) -> Tensor:
    """Mean over rows of -log softmax(s*(cos_pos - m) against s*cos_negatives)."""
    C = as_tensor(crystal_emb)
    X = as_tensor(text_emb)
    if C.data.ndim != 2 or C.shape != X.shape:
        raise ShapeMismatch(f"loss inputs {C.shape} vs {X.shape}")
    if C.shape[0] < 1:
        raise ShapeMismatch("loss needs at least one row")
    for name, t in (("crystal", C), ("text", X)):
        norms = np.linalg.norm(t.data, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-3):
            raise NonUnitRows(f"{name} embeddings are not unit rows (max dev "
                              f"{np.max(np.abs(norms - 1.0)):.2e})")
    n = C.shape[0]
    logits = T.mul(T.matmul(T.l2_normalize(C), T.transpose(T.l2_normalize(X))), cfg.s)
    margin = Tensor(np.eye(n, dtype=logits.data.dtype) * (cfg.s * cfg.m))
    shifted = T.sub(logits, margin)
    per_row = T.sub(T.row_logsumexp(shifted), T.diag_part(shifted))
    return T.mean(per_row)


# ---------------------------------------------------------------------------
# dataset preparation
# ---------------------------------------------------------------------------

@dataclass
class PreparedRecord:
    record: CorpusRecord
    graph: CrystalGraph
    tokens: list[int]


def prepare_dataset(
    records: list[CorpusRecord],
    caption_mode: str,
    graph_config: GraphConfig,
    vocab_size: int,
    graphs: dict[str, CrystalGraph] | None = None,
) -> list[PreparedRecord]:
    """Build graphs and token sequences; records that fail are skipped with a log."""
    prepared: list[PreparedRecord] = []
    for record in records:
        if caption_mode == "keywords" and not record.keywords:
            continue
        try:
            if graphs is not None and record.id in graphs:
                graph = graphs[record.id]
            else:
                structure = load_structure(Path(record.cif_path).read_text(encoding="utf-8"))
                graph = build_graph(structure, graph_config)
            tokens = tokenize(record.caption(caption_mode), vocab_size)
            if not tokens:
                raise CrystalTextError("caption has no tokens")
        except (CrystalTextError, OSError, ValueError) as exc:
            logger.warning("skipping record %s: %s", record.id, exc)
            continue
        prepared.append(PreparedRecord(record=record, graph=graph, tokens=tokens))
    if not prepared:
        raise EmptyCorpus(f"no trainable records for caption mode {caption_mode!r}")
    return prepared


def train_epoch(
    dataset: list[PreparedRecord],
    model: DualEncoder,
    optimizer: AdamW,
    loss_cfg: LossConfig,
    batch_size: int,
    rng: np.random.Generator,
) -> float:
    """One pass: shuffled batches (last partial kept), forward, backward, step."""
    order = rng.permutation(len(dataset))
    losses = []
    for start in range(0, len(dataset), batch_size):
        batch = [dataset[i] for i in order[start:start + batch_size]]
        crystal_emb = crystal_forward([b.graph for b in batch], model.crystal)
        text_emb = text_forward([b.tokens for b in batch], model.text)
        loss = cosface_loss(crystal_emb, text_emb, loss_cfg)
        losses.append(loss.item())
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    return float(np.mean(losses))


def embed_records(
    prepared: list[PreparedRecord], model: DualEncoder, batch_size: int = 64,
    include_structures: bool = False,
) -> EmbeddingIndex:
    """Index the crystal embeddings of prepared records (inference only)."""
    rows = []
    for start in range(0, len(prepared), batch_size):
        batch = prepared[start:start + batch_size]
        rows.append(crystal_forward([b.graph for b in batch], model.crystal).data)
    matrix = np.concatenate(rows, axis=0)
    metadata = {}
    for p in prepared:
        entry = {"title": p.record.title}
        if include_structures:
            from .cifio import structure_to_json

            structure = load_structure(Path(p.record.cif_path).read_text(encoding="utf-8"))
            entry["structure"] = json.loads(structure_to_json(structure))
        metadata[p.record.id] = entry
    return EmbeddingIndex(
        ids=[p.record.id for p in prepared],
        matrix=matrix.astype(np.float64) if matrix.dtype != np.float32 else matrix,
        metadata=metadata,
    )


# ---------------------------------------------------------------------------
# training runs
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    final_checkpoint: Path
    best_checkpoint: Path
    best_val_auc: float | None
    epoch_losses: list[float]


def train_run(
    records: list[CorpusRecord],
    model: DualEncoder,
    train_cfg: TrainConfig,
    loss_cfg: LossConfig,
    out_dir,
    eval_rules: list[LabelRule] | None = None,
    graph_config: GraphConfig | None = None,
) -> TrainResult:
    """Full stage: train on the train split, validate by mean ROC-AUC, checkpoint.

    Writes config.json, metrics.csv, and best/final checkpoints under out_dir.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    graph_config = graph_config or GraphConfig()
    caption_mode = "title" if train_cfg.stage == "pretrain" else "keywords"

    train_records = [r for r in records if r.split == "train"]
    val_records = [r for r in records if r.split == "val"]
    if train_cfg.stage == "finetune":
        train_records = keyword_corpus(train_records)
    if not train_records:
        raise EmptyCorpus(f"no train-split records for stage {train_cfg.stage!r}")

    vocab = model.text.config.vocab_size
    dataset = prepare_dataset(train_records, caption_mode, graph_config, vocab)
    val_prepared = (
        prepare_dataset(val_records, "title", graph_config, vocab) if val_records else []
    )

    config_doc = {
        "train": asdict(train_cfg),
        "loss": asdict(loss_cfg),
        "graph": asdict(graph_config),
        "model": model.meta(),
        "caption_mode": caption_mode,
        "n_train": len(dataset),
        "n_val": len(val_prepared),
        "eval_keywords": [r.keyword for r in eval_rules] if eval_rules else [],
    }
    (out_dir / "config.json").write_text(json.dumps(config_doc, indent=2, sort_keys=True))

    optimizer = AdamW(
        model.parameters(),
        AdamWConfig(lr=train_cfg.lr, weight_decay=train_cfg.weight_decay),
    )
    best_auc = None
    best_path = out_dir / "best.ckpt"
    final_path = out_dir / "final.ckpt"
    epoch_losses: list[float] = []

    def validate() -> float | None:
        if not (eval_rules and val_prepared):
            return None
        index = embed_records(val_prepared, model)
        return mean_roc_auc(index, eval_rules, lambda kw: encode_text(kw, model.text))

    with open(out_dir / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "val_auc"])
        for epoch in range(1, train_cfg.epochs + 1):
            rng = np.random.default_rng([train_cfg.seed, epoch])
            epoch_loss = train_epoch(
                dataset, model, optimizer, loss_cfg, train_cfg.batch_size, rng
            )
            epoch_losses.append(epoch_loss)
            val_auc = None
            if train_cfg.val_every and (
                epoch % train_cfg.val_every == 0 or epoch == train_cfg.epochs
            ):
                val_auc = validate()
                if val_auc is not None and (best_auc is None or val_auc >= best_auc):
                    best_auc = val_auc
                    save_model(best_path, model, extra_meta={"epoch": epoch, "val_auc": val_auc})
            writer.writerow(
                [epoch, f"{epoch_loss:.6f}", "" if val_auc is None else f"{val_auc:.6f}"]
            )
            if epoch % 25 == 0 or epoch == train_cfg.epochs:
                logger.info("epoch %d: loss %.4f val_auc %s", epoch, epoch_loss, val_auc)

    save_model(final_path, model, extra_meta={"epoch": train_cfg.epochs})
    if best_auc is None:
        save_model(best_path, model, extra_meta={"epoch": train_cfg.epochs})
    return TrainResult(
        final_checkpoint=final_path,
        best_checkpoint=best_path,
        best_val_auc=best_auc,
        epoch_losses=epoch_losses,
    )


# ---------------------------------------------------------------------------
# hyperparameter sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    margin: float
    scale: float
    pretrain_val_auc: float | None
    finetune_val_auc: float | None
    error: str | None = None


def sweep(
    margins: list[float],
    scales: list[float],
    records: list[CorpusRecord],
    base_cfg: TrainConfig,
    eval_rules: list[LabelRule],
    out_dir,
    finetune_epochs: int | None = None,
    finetune_lr: float | None = None,
) -> list[SweepRow]:
    """Train one model per (margin, scale) cell and tabulate validation AUCs.

    A failing cell is recorded and the sweep continues. Rows come back
    sorted best-first by fine-tuned (then pre-trained) validation AUC.
    """
    if not margins or not scales:
        raise ValueError("sweep needs nonempty margin and scale grids")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[SweepRow] = []
    has_keywords = bool(keyword_corpus([r for r in records if r.split == "train"]))
    for m in margins:
        for s in scales:
            cell_dir = out_dir / f"m{m}_s{s}"
            try:
                model = init_dual_encoder(base_cfg.seed)
                loss_cfg = LossConfig(s=s, m=m)
                pre_cfg = TrainConfig(**{**asdict(base_cfg), "stage": "pretrain"})
                result = train_run(
                    records, model, pre_cfg, loss_cfg, cell_dir / "pretrain", eval_rules
                )
                pre_auc = result.best_val_auc
                fine_auc = None
                if has_keywords:
                    fine_cfg = TrainConfig(
                        **{
                            **asdict(base_cfg),
                            "stage": "finetune",
                            "epochs": finetune_epochs or max(1, base_cfg.epochs // 4),
                            "lr": finetune_lr if finetune_lr is not None else base_cfg.lr / 10,
                        }
                    )
                    fine = train_run(
                        records, model, fine_cfg, loss_cfg, cell_dir / "finetune", eval_rules
                    )
                    fine_auc = fine.best_val_auc
                rows.append(SweepRow(m, s, pre_auc, fine_auc))
            except CrystalTextError as exc:
                logger.warning("sweep cell (m=%s, s=%s) failed: %s", m, s, exc)
                rows.append(SweepRow(m, s, None, None, error=str(exc)))
    rows.sort(
        key=lambda r: (
            -(r.finetune_val_auc if r.finetune_val_auc is not None else -1.0),
            -(r.pretrain_val_auc if r.pretrain_val_auc is not None else -1.0),
        )
    )
    with open(out_dir / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["margin", "scale", "pretrain_val_auc", "finetune_val_auc", "error"])
        for row in rows:
            writer.writerow(
                [
                    row.margin,
                    row.scale,
                    "" if row.pretrain_val_auc is None else f"{row.pretrain_val_auc:.6f}",
                    "" if row.finetune_val_auc is None else f"{row.finetune_val_auc:.6f}",
                    row.error or "",
                ]
            )
    return rows
