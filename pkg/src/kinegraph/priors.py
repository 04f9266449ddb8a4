"""Prior graphs derived from per-(class, joint) text embeddings.

Two artifacts come out of an embedding table: a global distance graph
(Euclidean distances between per-joint class centroids) and per-class
similarity templates (cosine similarity of joint embeddings within a class).
The distance graph also guides which difference-vector skeleton the encoder
consumes, via :func:`weight_skeleton`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from .errors import DimensionMismatch, SchemaViolation, ZeroVector

if TYPE_CHECKING:
    from .bones import BoneMatrix
    from .skeleton import SkeletonSequence

__all__ = [
    "EmbeddingTable",
    "GprGraph",
    "ClassTemplateSet",
    "load_embedding_table",
    "class_centroids",
    "build_gpr",
    "build_templates",
    "weight_skeleton",
]

PROMPT_IDS = ("p1", "p2", "p3", "p4", "p5", "p6")


@dataclass
class EmbeddingTable:
    """Dense M x V x C embedding tensor with naming metadata."""

    vectors: np.ndarray
    prompt_id: str = "p3"
    encoder: str = ""
    class_names: list[str] | None = None
    joint_names: list[str] | None = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.ndim != 3:
            raise DimensionMismatch(
                f"expected M x V x C tensor, got ndim={self.vectors.ndim}"
            )
        m, v, c = self.vectors.shape
        if m < 1 or v < 2 or c < 1:
            raise DimensionMismatch(f"need M >= 1, V >= 2, C >= 1, got {self.vectors.shape}")
        if not np.all(np.isfinite(self.vectors)):
            raise DimensionMismatch("embedding tensor contains NaN/Inf")

    @property
    def classes(self) -> int:
        return self.vectors.shape[0]

    @property
    def joints(self) -> int:
        return self.vectors.shape[1]

    @property
    def dim(self) -> int:
        return self.vectors.shape[2]


@dataclass
class GprGraph:
    """Symmetric nonnegative joint-to-joint distance matrix, zero diagonal."""

    dist: np.ndarray

    def __post_init__(self):
        self.dist = np.asarray(self.dist, dtype=float)
        v = self.dist.shape[0]
        if self.dist.shape != (v, v):
            raise DimensionMismatch(f"distance matrix must be square, got {self.dist.shape}")
        if not np.all(np.isfinite(self.dist)):
            raise DimensionMismatch("distances contain NaN/Inf")
        if np.any(self.dist < 0):
            raise DimensionMismatch("distances must be nonnegative")
        if np.any(np.abs(np.diag(self.dist)) > 1e-12):
            raise DimensionMismatch("distance diagonal must be zero")
        if not np.allclose(self.dist, self.dist.T, atol=1e-9):
            raise DimensionMismatch("distance matrix must be symmetric")

    @property
    def joints(self) -> int:
        return self.dist.shape[0]


@dataclass
class ClassTemplateSet:
    """Per-class V x V similarity templates plus the similarity kind tag."""

    templates: np.ndarray
    kind: str = "cosine"

    def __post_init__(self):
        self.templates = np.asarray(self.templates, dtype=float)
        if self.templates.ndim != 3 or self.templates.shape[1] != self.templates.shape[2]:
            raise DimensionMismatch(
                f"expected M x V x V tensor, got {self.templates.shape}"
            )
        if not np.all(np.isfinite(self.templates)):
            raise DimensionMismatch("templates contain NaN/Inf")
        sym = np.transpose(self.templates, (0, 2, 1))
        if not np.allclose(self.templates, sym, atol=1e-9):
            raise DimensionMismatch("each template slice must be symmetric")

    @property
    def classes(self) -> int:
        return self.templates.shape[0]

    @property
    def joints(self) -> int:
        return self.templates.shape[1]


def load_embedding_table(obj: dict) -> EmbeddingTable:
    """Validate the embedding-file schema and build the table.

    Schema: {"version":1, "classes":M, "joints":V, "dim":C, "prompt":"p3",
    "encoder":str, "class_names":[...], "joint_names":[...],
    "vectors": M x V x C nested lists}.
    """
    if not isinstance(obj, dict):
        raise SchemaViolation("/", "expected object")
    for key in ("version", "classes", "joints", "dim", "vectors"):
        if key not in obj:
            raise SchemaViolation(f"/{key}", "missing")
    if obj["version"] != 1:
        raise SchemaViolation("/version", f"unsupported version {obj['version']!r}")
    for key in ("classes", "joints", "dim"):
        if not isinstance(obj[key], int) or isinstance(obj[key], bool):
            raise SchemaViolation(f"/{key}", "expected integer")
    prompt = obj.get("prompt", "p3")
    if prompt not in PROMPT_IDS:
        raise SchemaViolation("/prompt", f"expected one of {PROMPT_IDS}, got {prompt!r}")
    try:
        vectors = np.asarray(obj["vectors"], dtype=float)
    except (ValueError, TypeError):
        raise SchemaViolation("/vectors", "ragged or non-numeric tensor") from None
    if vectors.ndim != 3:
        raise SchemaViolation("/vectors", f"expected 3-d tensor, got ndim={vectors.ndim}")
    expect = (obj["classes"], obj["joints"], obj["dim"])
    if vectors.shape != expect:
        raise SchemaViolation("/vectors", f"shape {vectors.shape} != declared {expect}")
    if not np.all(np.isfinite(vectors)):
        raise SchemaViolation("/vectors", "contains NaN/Inf")
    names = obj.get("class_names")
    if names is not None and len(names) != obj["classes"]:
        raise SchemaViolation("/class_names", "length != classes")
    jnames = obj.get("joint_names")
    if jnames is not None and len(jnames) != obj["joints"]:
        raise SchemaViolation("/joint_names", "length != joints")
    return EmbeddingTable(
        vectors=vectors,
        prompt_id=prompt,
        encoder=str(obj.get("encoder", "")),
        class_names=names,
        joint_names=jnames,
    )


def class_centroids(table: EmbeddingTable) -> np.ndarray:
    """Per-joint centroid over classes: V x C, row i = mean_c vectors[c, i]."""
    return table.vectors.mean(axis=0)


def build_gpr(centroids: np.ndarray) -> GprGraph:
    """Pairwise Euclidean distances between centroid rows."""
    cen = np.asarray(centroids, dtype=float)
    if cen.ndim != 2:
        raise DimensionMismatch(f"expected V x C matrix, got ndim={cen.ndim}")
    diff = cen[:, None, :] - cen[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    dist = 0.5 * (dist + dist.T)
    np.fill_diagonal(dist, 0.0)
    return GprGraph(dist=dist)


def build_templates(table: EmbeddingTable) -> ClassTemplateSet:
    """Within-class cosine similarity of joint embeddings, per class."""
    norms = np.linalg.norm(table.vectors, axis=-1)  # M x V
    zero = np.argwhere(norms == 0)
    if zero.size:
        c, j = zero[0]
        raise ZeroVector(f"joint {j} of class {c} has zero-norm embedding")
    unit = table.vectors / norms[..., None]
    templates = np.einsum("mic,mjc->mij", unit, unit)
    templates = 0.5 * (templates + np.transpose(templates, (0, 2, 1)))
    return ClassTemplateSet(templates=templates, kind="cosine")


def weight_skeleton(seq: "SkeletonSequence", selected: "BoneMatrix") -> "SkeletonSequence":
    """Prior-guided difference-vector input for the encoder.

    Applies the selected bone transform per frame; identical math to
    :func:`kinegraph.skeleton.bone_stream`, kept as its own entry point
    because the selected matrix (not the physical one) defines this input.
    """
    from .skeleton import bone_stream

    return bone_stream(seq, selected)
