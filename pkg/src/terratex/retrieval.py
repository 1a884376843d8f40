"""Exact nearest-neighbor retrieval over test-split embeddings.

The index is immutable after build. Queries run exhaustive euclidean search
in 64-bit arithmetic with deterministic tie-breaking (ascending patch id);
candidates sharing the query's rover position are excluded on request, and
the query patch itself never appears among its own neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import embstore
from .patchex import PatchRecord, Split
from .taxonomy import TerrainClass, format_code, same_class


@dataclass(frozen=True)
class Neighbor:
    patch_id: str
    distance: float
    same_site_drive: bool


@dataclass(frozen=True)
class RetrievalResult:
    query_id: str | None
    neighbors: tuple[Neighbor, ...]
    requested_k: int

    @property
    def short(self) -> bool:
        return len(self.neighbors) < self.requested_k


@dataclass(frozen=True)
class EmbeddingIndex:
    ids: tuple[str, ...]
    vectors: np.ndarray  # N x dim, float32
    metadata: Mapping[str, tuple[int, int, str]]  # patch_id -> (site, drive, image_id)
    row_of: Mapping[str, int]

    def __len__(self) -> int:
        return len(self.ids)

    def vector_for(self, patch_id: str) -> np.ndarray:
        if patch_id not in self.row_of:
            raise KeyError(f"patch {patch_id} is not in the index")
        return self.vectors[self.row_of[patch_id]]


def build_index(records: Sequence[PatchRecord], store_path) -> EmbeddingIndex:
    """Index the test-split patches of a manifest against an embedding store.

    Every test-split patch must have an embedding row; row order follows the
    store file.
    """
    ids, vectors = embstore.read_store(store_path)
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate patch ids in embedding store: {dupes[:5]}")
    by_id = {r.patch_id: r for r in records}
    test_ids = [r.patch_id for r in records if r.split is Split.TEST]
    if not test_ids:
        raise ValueError("empty index: manifest has no test-split patches")
    available = set(ids)
    missing = [pid for pid in test_ids if pid not in available]
    if missing:
        raise ValueError(f"missing embedding for patches: {missing[:5]}")
    keep = [i for i, pid in enumerate(ids) if pid in by_id and by_id[pid].split is Split.TEST]
    kept_ids = tuple(ids[i] for i in keep)
    metadata = {pid: (by_id[pid].site, by_id[pid].drive, by_id[pid].image_id) for pid in kept_ids}
    return EmbeddingIndex(
        ids=kept_ids,
        vectors=np.array(vectors[keep]),
        metadata=metadata,
        row_of={pid: row for row, pid in enumerate(kept_ids)},
    )


def knn(
    index: EmbeddingIndex,
    query: np.ndarray,
    query_meta: tuple[int, int] | None,
    k: int,
    exclude_same_site_drive: bool = True,
    site_only: bool = False,
    query_id: str | None = None,
) -> RetrievalResult:
    """Top-k nearest rows by euclidean distance, computed in float64.

    With exclusion on, candidates matching the query's (site, drive) (or just
    site when `site_only`) are dropped before truncation. Ties break on
    ascending patch id. A result with fewer than k rows is flagged short.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    q = np.asarray(query, dtype=np.float64)
    dists = np.sqrt(((index.vectors - q) ** 2).sum(axis=1))
    rows = []
    for i, pid in enumerate(index.ids):
        if pid == query_id:
            continue
        site, drive, _ = index.metadata[pid]
        same = query_meta is not None and (
            site == query_meta[0] if site_only else (site, drive) == tuple(query_meta)
        )
        if exclude_same_site_drive and same:
            continue
        rows.append((float(dists[i]), pid, same))
    rows.sort(key=lambda r: (r[0], r[1]))
    neighbors = tuple(Neighbor(pid, d, same) for d, pid, same in rows[:k])
    return RetrievalResult(query_id=query_id, neighbors=neighbors, requested_k=k)


def precision_at_k(
    result: RetrievalResult,
    labels: Mapping[str, TerrainClass],
    query_class: TerrainClass,
) -> float:
    """Fraction of the requested k neighbors sharing the query's class.

    Missing slots in a short result count as misses; an unlabeled neighbor is
    an error.
    """
    unlabeled = [n.patch_id for n in result.neighbors if n.patch_id not in labels]
    if unlabeled:
        raise ValueError(f"unlabeled neighbors: {unlabeled}")
    hits = sum(1 for n in result.neighbors if same_class(labels[n.patch_id], query_class))
    return hits / result.requested_k


@dataclass
class PrecisionTable:
    rows: list[tuple[int, str, float]] = field(default_factory=list)  # (class_id, code, precision)
    macro_avg: float = 0.0

    def as_tsv(self) -> str:
        lines = ["class_id\ttaxonomy\tprecision"]
        for class_id, code, precision in self.rows:
            lines.append(f"{class_id}\t{code}\t{precision:.4f}")
        lines.append(f"Avg.\t\t{self.macro_avg:.4f}")
        return "\n".join(lines) + "\n"


def eval_all(
    index: EmbeddingIndex,
    queries: Sequence[tuple[str, TerrainClass]],
    labels: Mapping[str, TerrainClass],
    k: int,
    exclude_same_site_drive: bool = True,
) -> PrecisionTable:
    """Per-class mean precision@k over the queries plus the unweighted mean."""
    per_class: dict[int, list[float]] = {}
    codes: dict[int, str] = {}
    for patch_id, cls in queries:
        vec = index.vector_for(patch_id)
        meta = index.metadata.get(patch_id)
        result = knn(
            index, vec, (meta[0], meta[1]) if meta else None, k,
            exclude_same_site_drive=exclude_same_site_drive, query_id=patch_id,
        )
        p = precision_at_k(result, labels, cls)
        per_class.setdefault(cls.class_id, []).append(p)
        codes[cls.class_id] = format_code(cls.code)
    table = PrecisionTable()
    for class_id in sorted(per_class):
        values = per_class[class_id]
        table.rows.append((class_id, codes[class_id], sum(values) / len(values)))
    table.macro_avg = sum(p for _, _, p in table.rows) / len(table.rows)
    return table


def macro_average(per_class_precisions: Sequence[float]) -> float:
    """Unweighted mean over per-class precision values."""
    values = list(per_class_precisions)
    if not values:
        raise ValueError("no per-class precision values")
    return sum(values) / len(values)


def sample_queries(
    ids: Sequence[str], assignments: np.ndarray, per_cluster: int, seed: int
) -> list[str]:
    """Seeded uniform sample (without replacement) of ids from each cluster."""
    rng = np.random.default_rng(seed)
    assignments = np.asarray(assignments)
    out: list[str] = []
    for cluster in np.unique(assignments):
        members = [ids[i] for i in np.flatnonzero(assignments == cluster)]
        take = min(per_cluster, len(members))
        if take > 0:
            chosen = rng.choice(len(members), size=take, replace=False)
            out.extend(members[i] for i in sorted(chosen))
    return out


def export_embeddings(index: EmbeddingIndex, out_path, clusters: Mapping[str, int] | None = None) -> Path:
    """Write the index rows to an embedding store plus id sidecar.

    When cluster assignments are given, also writes `<out>.clusters` with
    one `patch_id<TAB>cluster` line per row for external 2-d projection.
    """
    if len(index) == 0:
        raise ValueError("cannot export an empty index")
    out_path = Path(out_path)
    embstore.write_store(out_path, list(index.ids), index.vectors)
    if clusters is not None:
        lines = [f"{pid}\t{clusters[pid]}" for pid in index.ids if pid in clusters]
        Path(str(out_path) + ".clusters").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out_path
