"""HTTP service backing the annotation interface.

Serves cluster samples, neighbor grids, patch imagery with source-image
context, and persists expert labels in an append-only line-delimited store.
Reads are lock-free against immutable artifacts; label writes are serialized
and fsynced before the response is sent.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import __version__
from .nnet import load_checkpoint
from .patchex import PATCH_DIR, PatchRecord, read_manifest
from .retrieval import EmbeddingIndex, build_index, eval_all, knn, sample_queries
from .taxonomy import TaxonomyParseError, TerrainClass, format_code, parse

DEFAULT_GRID_K = 15


@dataclass
class LabelRecord:
    patch_id: str
    taxonomy_code: str
    class_id: int | None
    free_text: str | None
    annotator: str
    timestamp: float


class LabelStore:
    """Append-only JSONL store; later records supersede earlier ones."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._records: list[LabelRecord] = []
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line:
                    self._records.append(LabelRecord(**json.loads(line)))
        else:
            self.path.touch()

    def append(self, record: LabelRecord) -> None:
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(asdict(record)) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self._records.append(record)

    def for_patch(self, patch_id: str) -> list[LabelRecord]:
        return [r for r in self._records if r.patch_id == patch_id]

    def latest(self) -> dict[str, LabelRecord]:
        out: dict[str, LabelRecord] = {}
        for r in self._records:
            out[r.patch_id] = r
        return out

    def latest_for(self, patch_id: str) -> LabelRecord | None:
        records = self.for_patch(patch_id)
        return records[-1] if records else None


def export_labels(store: LabelStore, path) -> Path:
    """Write the superseded view as a labeled-query file for evaluation."""
    path = Path(path)
    lines = ["patch_id\tclass_id\ttaxonomy_code"]
    for patch_id in sorted(store.latest()):
        r = store.latest()[patch_id]
        class_id = "" if r.class_id is None else str(r.class_id)
        lines.append(f"{patch_id}\t{class_id}\t{r.taxonomy_code}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_labels_file(path) -> dict[str, TerrainClass]:
    """Load patch -> class labels; rows without a class id are skipped."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "patch_id\tclass_id\ttaxonomy_code":
        raise ValueError(f"{path}: not a labeled-query file")
    out: dict[str, TerrainClass] = {}
    for line in lines[1:]:
        if not line:
            continue
        patch_id, class_id, code = line.split("\t")
        if class_id:
            out[patch_id] = TerrainClass(class_id=int(class_id), code=parse(code), description="")
    return out


@dataclass
class ServiceArtifacts:
    manifest_path: Path
    records: dict[str, PatchRecord]
    index: EmbeddingIndex
    store: LabelStore
    clusters: dict[str, int]
    sources_dir: Path | None
    ui_dir: Path | None


def load_artifacts(artifacts_dir) -> ServiceArtifacts:
    """Validate and load everything the service needs; errors name paths."""
    root = Path(artifacts_dir)
    manifest_path = root / "manifest.tsv"
    index_path = root / "index.temb"
    checkpoint_path = root / "model.depc"
    for required in (manifest_path, index_path, checkpoint_path):
        if not required.exists():
            raise FileNotFoundError(f"missing required artifact: {required}")
    load_checkpoint(checkpoint_path)  # fail fast on a corrupt model file
    records = {r.patch_id: r for r in read_manifest(manifest_path)}
    index = build_index(list(records.values()), index_path)
    clusters: dict[str, int] = {}
    clusters_path = root / "clusters.tsv"
    if clusters_path.exists():
        for line in clusters_path.read_text(encoding="utf-8").splitlines():
            if line:
                pid, cluster = line.split("\t")
                clusters[pid] = int(cluster)
    sources = root / "sources"
    ui = root / "ui"
    return ServiceArtifacts(
        manifest_path=manifest_path,
        records=records,
        index=index,
        store=LabelStore(root / "labels.jsonl"),
        clusters=clusters,
        sources_dir=sources if sources.is_dir() else None,
        ui_dir=ui if ui.is_dir() else None,
    )


class LabelPost(BaseModel):
    patch_id: str
    taxonomy_code: str
    class_id: int | None = None
    free_text: str | None = None
    annotator: str = "expert"


def _record_json(record: LabelRecord) -> dict:
    return asdict(record)


def create_app(artifacts: ServiceArtifacts) -> FastAPI:
    app = FastAPI(title="terrain annotation service")
    records = artifacts.records
    index = artifacts.index
    store = artifacts.store

    def descriptor(patch_id: str) -> dict:
        r = records[patch_id]
        label = store.latest_for(patch_id)
        return {
            "patch_id": r.patch_id,
            "image_id": r.image_id,
            "x": r.x,
            "y": r.y,
            "side": r.side,
            "sol": r.sol,
            "site": r.site,
            "drive": r.drive,
            "eye": r.eye.value,
            "split": r.split.value,
            "image_url": f"/api/patch/{r.patch_id}/image",
            "label": _record_json(label) if label else None,
        }

    @app.get("/api/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/api/clusters")
    def clusters(per_cluster: int = Query(default=8, ge=1, le=100), seed: int = 0):
        if not artifacts.clusters:
            return {"clusters": []}
        ids = sorted(artifacts.clusters)
        assignments = [artifacts.clusters[i] for i in ids]
        sampled = sample_queries(ids, np.asarray(assignments), per_cluster, seed)
        grouped: dict[int, list[str]] = {}
        for pid in sampled:
            grouped.setdefault(artifacts.clusters[pid], []).append(pid)
        return {
            "clusters": [
                {"cluster": c, "members": members} for c, members in sorted(grouped.items())
            ]
        }

    @app.get("/api/grid")
    def grid(patch: str, k: int = Query(default=DEFAULT_GRID_K, ge=1, le=100)):
        if patch not in index.row_of:
            raise HTTPException(status_code=404, detail=f"patch {patch} is not in the index")
        site, drive, _ = index.metadata[patch]
        result = knn(index, index.vector_for(patch), (site, drive), k,
                     exclude_same_site_drive=False, query_id=patch)
        neighbors = []
        for n in result.neighbors:
            entry = descriptor(n.patch_id)
            entry["distance"] = n.distance
            entry["same_site_drive"] = n.same_site_drive
            neighbors.append(entry)
        return {"query": descriptor(patch), "k": k, "neighbors": neighbors}

    @app.get("/api/patch/{patch_id}/image")
    def patch_image(patch_id: str):
        if patch_id not in records:
            raise HTTPException(status_code=404, detail=f"unknown patch {patch_id}")
        path = artifacts.manifest_path.parent / PATCH_DIR / f"{patch_id}.png"
        if not path.exists():
            raise HTTPException(status_code=410, detail=f"patch image missing: {path.name}")
        return FileResponse(path, media_type="image/png")

    @app.get("/api/patch/{patch_id}/context")
    def patch_context(patch_id: str):
        if patch_id not in records:
            raise HTTPException(status_code=404, detail=f"unknown patch {patch_id}")
        r = records[patch_id]
        source = None
        if artifacts.sources_dir is not None:
            candidate = artifacts.sources_dir / f"{r.image_id}.png"
            if candidate.exists():
                source = candidate
        if source is None:
            raise HTTPException(status_code=410, detail=f"source image unavailable: {r.image_id}")
        headers = {
            "X-Patch-X": str(r.x),
            "X-Patch-Y": str(r.y),
            "X-Patch-Side": str(r.side),
            "X-Image-Id": r.image_id,
        }
        return Response(content=source.read_bytes(), media_type="image/png", headers=headers)

    @app.post("/api/labels", status_code=201)
    def post_label(body: LabelPost):
        if body.patch_id not in records:
            raise HTTPException(status_code=404, detail=f"unknown patch {body.patch_id}")
        try:
            canonical = format_code(parse(body.taxonomy_code))
        except TaxonomyParseError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        record = LabelRecord(
            patch_id=body.patch_id,
            taxonomy_code=canonical,
            class_id=body.class_id,
            free_text=body.free_text,
            annotator=body.annotator,
            timestamp=time.time(),
        )
        store.append(record)
        return _record_json(record)

    @app.get("/api/labels")
    def get_labels(patch: str | None = None):
        if patch is not None:
            return {"records": [_record_json(r) for r in store.for_patch(patch)]}
        return {"records": [_record_json(r) for r in store.latest().values()]}

    @app.get("/api/eval")
    def evaluate(k: int = Query(default=10, ge=1, le=100)):
        labels = {}
        for patch_id, r in store.latest().items():
            if r.class_id is not None:
                labels[patch_id] = TerrainClass(
                    class_id=r.class_id, code=parse(r.taxonomy_code), description=r.free_text or ""
                )
        queries = [(pid, cls) for pid, cls in labels.items() if pid in index.row_of]
        if not queries:
            return {"rows": [], "macro_avg": None, "k": k}
        try:
            table = eval_all(index, queries, labels, k)
        except ValueError as exc:
            return JSONResponse(status_code=422, content={"detail": str(exc)})
        return {
            "rows": [
                {"class_id": cid, "taxonomy": code, "precision": p} for cid, code, p in table.rows
            ],
            "macro_avg": table.macro_avg,
            "k": k,
        }

    if artifacts.ui_dir is not None:
        app.mount("/", StaticFiles(directory=artifacts.ui_dir, html=True), name="ui")

    return app


def serve(artifacts_dir, port: int = 8000, host: str = "127.0.0.1") -> None:
    """Run the annotation service until interrupted."""
    import uvicorn

    artifacts = load_artifacts(artifacts_dir)
    app = create_app(artifacts)
    uvicorn.run(app, host=host, port=port)
