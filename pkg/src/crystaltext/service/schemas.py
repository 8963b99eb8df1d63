"""Pydantic request/response models for the read-only JSON API."""

from __future__ import annotations

from pydantic import BaseModel


class HealthResponse(BaseModel):
    status: str
    model_checksum: str
    n_structures: int


class SearchRequest(BaseModel):
    query: str
    k: int = 10


class SearchHit(BaseModel):
    id: str
    title: str
    score: float


class MapPoint(BaseModel):
    id: str
    x: float
    y: float
    cluster: int


class ClusterInfo(BaseModel):
    id: int
    label: str
    size: int


class MapResponse(BaseModel):
    points: list[MapPoint]
    clusters: list[ClusterInfo]
    jsd: list[list[float]]


class HeatmapRequest(BaseModel):
    query: str


class HeatmapResponse(BaseModel):
    values: list[float]


class LatticeOut(BaseModel):
    a: float
    b: float
    c: float
    alpha: float
    beta: float
    gamma: float


class SiteOut(BaseModel):
    element: str
    frac: list[float]


class StructureResponse(BaseModel):
    id: str
    title: str
    lattice: LatticeOut
    sites: list[SiteOut]


class ClustersResponse(BaseModel):
    clusters: list[ClusterInfo]
    jsd: list[list[float]]
