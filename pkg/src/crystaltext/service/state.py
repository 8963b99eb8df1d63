"""Immutable service state: a loaded model, an index, and an optional atlas."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from ..atlas import load_atlas_export
from ..encoders import DualEncoder, load_model
from ..retrieval import EmbeddingIndex, load_index


@dataclass
class ServiceState:
    model: DualEncoder
    index: EmbeddingIndex
    model_checksum: str
    atlas: dict | None = None                 # the atlas export document
    cors_origins: list[str] = field(
        default_factory=lambda: ["http://localhost:5173", "http://127.0.0.1:5173"]
    )


def file_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_state(checkpoint_path, index_path, atlas_path=None,
               cors_origins: list[str] | None = None) -> ServiceState:
    model, _meta = load_model(checkpoint_path)
    index = load_index(index_path)
    atlas = load_atlas_export(atlas_path) if atlas_path else None
    state = ServiceState(
        model=model,
        index=index,
        model_checksum=file_checksum(checkpoint_path),
        atlas=atlas,
    )
    if cors_origins:
        state.cors_origins = cors_origins
    return state
