"""Alternating cluster / metric-learning training.

Each epoch embeds the training split, whitens and clusters the embeddings,
treats the cluster indices as pseudo-labels, and runs one pass of SGD over
cluster-balanced batches with a hinged triplet objective. Training stops
when consecutive-epoch cluster assignments stabilize (NMI change below a
threshold for a patience window) or at the epoch cap. No flip or crop
augmentation is applied anywhere; texture orientation and scale carry class
information here.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .autodiff import Tensor, relu, take_rows
from .cluster import apply_whiten, fit_whiten, kmeans, nmi
from .nnet import DepModel, embed, embed_batch, save_checkpoint
from .patchex import Split, load_patch_image, read_manifest, resize_patch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Triplet:
    anchor: str
    positive: str
    negative: str


@dataclass(frozen=True)
class TrainConfig:
    margin: float = 1.0
    samples_per_cluster: int = 4
    clusters: int = 150
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    max_epochs: int = 40
    nmi_patience: int = 3
    nmi_delta: float = 0.01
    n_pca: int = 256
    refit_whiten: bool = True
    seed: int = 0

    def __post_init__(self):
        if min(self.margin, self.learning_rate, self.weight_decay) < 0:
            raise ValueError("margin, learning_rate, and weight_decay must be nonnegative")
        if self.nmi_delta <= 0:
            raise ValueError("nmi_delta must be positive")
        counts = ("samples_per_cluster", "clusters", "max_epochs", "nmi_patience", "n_pca")
        bad = [name for name in counts if getattr(self, name) < 1]
        if bad:
            raise ValueError(f"config values must be positive: {bad}")

    @property
    def batch_size(self) -> int:
        return self.clusters * self.samples_per_cluster


def read_train_config(path) -> TrainConfig:
    """Parse a flat key=value config file with exactly the TrainConfig keys."""
    values: dict[str, object] = {}
    known = {f.name for f in fields(TrainConfig)}
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key=value")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in known:
            raise ValueError(f"{path}:{ln}: unknown config key {key!r}")
        if key == "refit_whiten":
            values[key] = raw.lower() in ("1", "true", "yes")
        elif key in ("margin", "learning_rate", "weight_decay", "nmi_delta"):
            values[key] = float(raw)
        else:
            values[key] = int(raw)
    return TrainConfig(**values)


def write_train_config(config: TrainConfig, path) -> None:
    lines = [f"{f.name}={getattr(config, f.name)}" for f in fields(TrainConfig)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- loss ----------------------------------------------------------------

def triplet_loss(anchors, positives, negatives, margin: float = 1.0) -> Tensor:
    """Hinged squared-distance triplet objective, summed over the triplets.

    max(0, ||a - p||^2 - ||a - n||^2 + margin) per triplet. The hinge keeps
    the objective nonnegative; without it a batch of easy triplets would pay
    an unbounded bonus for pushing negatives away.
    """

    def as2d(x):
        t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
        return t.reshape(1, t.data.shape[0]) if t.data.ndim == 1 else t

    a, p, n = as2d(anchors), as2d(positives), as2d(negatives)
    d_ap = ((a - p) ** 2).sum(axis=1)
    d_an = ((a - n) ** 2).sum(axis=1)
    return relu(d_ap - d_an + margin).sum()


# -- batching and mining ---------------------------------------------------

def build_batches(
    assignments: Mapping[str, int], samples_per_cluster: int, seed: int
) -> list[list[str]]:
    """Cluster-balanced batches: every batch draws `samples_per_cluster`
    patches from every cluster (with replacement when a cluster is smaller).

    The number of batches covers the dataset size at the implied batch size.
    """
    members: dict[int, list[str]] = {}
    for pid in sorted(assignments):
        members.setdefault(assignments[pid], []).append(pid)
    k = max(members) + 1
    empty = [c for c in range(k) if c not in members]
    if empty:
        raise ValueError(f"empty clusters: {empty[:5]} (repair before batching)")
    rng = np.random.default_rng(seed)
    batch_size = k * samples_per_cluster
    n_batches = max(1, math.ceil(len(assignments) / batch_size))
    batches = []
    for _ in range(n_batches):
        batch: list[str] = []
        for cluster in range(k):
            pool = members[cluster]
            if len(pool) >= samples_per_cluster:
                chosen = rng.choice(len(pool), size=samples_per_cluster, replace=False)
            else:
                chosen = rng.choice(len(pool), size=samples_per_cluster, replace=True)
            batch.extend(pool[i] for i in chosen)
        batches.append(batch)
    return batches


def mine_triplets(
    embeddings: np.ndarray,
    labels: Sequence[int],
    margin: float = 1.0,
    strategy: str = "semi_hard",
    rng: np.random.Generator | None = None,
) -> list[tuple[int, int, int]]:
    """Pick (anchor, positive, negative) index triples within a batch.

    Every same-label pair becomes an anchor/positive pair. The default
    strategy selects the semi-hard negative: the closest negative that is
    still farther than the positive; when none qualifies it falls back to
    the closest negative overall. Anchors without a positive are skipped.
    """
    if strategy not in ("semi_hard", "hardest", "random"):
        raise ValueError(f"unknown mining strategy {strategy!r}")
    emb = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    sq = ((emb[:, None, :] - emb[None, :, :]) ** 2).sum(axis=2)
    triples = []
    for a in range(emb.shape[0]):
        positives = np.flatnonzero((labels == labels[a]) & (np.arange(labels.size) != a))
        negatives = np.flatnonzero(labels != labels[a])
        if positives.size == 0 or negatives.size == 0:
            continue
        for p in positives:
            if strategy == "random":
                n = int((rng or np.random.default_rng()).choice(negatives))
            elif strategy == "hardest":
                n = int(negatives[sq[a, negatives].argmin()])
            else:
                d_ap = sq[a, p]
                semi = negatives[sq[a, negatives] > d_ap]
                pool = semi if semi.size else negatives
                n = int(pool[sq[a, pool].argmin()])
            triples.append((a, int(p), n))
    return triples


def as_triplets(ids: Sequence[str], triples: Sequence[tuple[int, int, int]]) -> list[Triplet]:
    return [Triplet(ids[a], ids[p], ids[n]) for a, p, n in triples]


# -- datasets ----------------------------------------------------------

@dataclass
class PatchDataset:
    ids: list[str]
    images: np.ndarray  # N x 3 x S x S float32 in [0, 1]
    labels: dict[str, int] = field(default_factory=dict)  # optional ground truth

    def subset(self, ids: Sequence[str]) -> np.ndarray:
        index = {pid: i for i, pid in enumerate(self.ids)}
        return self.images[[index[pid] for pid in ids]]


def load_dataset(manifest_path, split: Split, input_size: int) -> PatchDataset:
    """Load one split of a manifest into memory, resized for the network."""
    records = [r for r in read_manifest(manifest_path) if r.split is split]
    ids = [r.patch_id for r in records]
    images = np.empty((len(records), 3, input_size, input_size), dtype=np.float32)
    for i, r in enumerate(records):
        pixels = load_patch_image(manifest_path, r.patch_id)
        images[i] = resize_patch(pixels, input_size).transpose(2, 0, 1)
    return PatchDataset(ids=ids, images=images)


# -- training ----------------------------------------------------------

def sgd_step(model: DepModel, learning_rate: float, weight_decay: float) -> None:
    for t in model.params.values():
        if t.grad is not None:
            t.data -= learning_rate * (t.grad + weight_decay * t.data)
        elif weight_decay > 0:
            t.data -= learning_rate * weight_decay * t.data


def train_epoch(
    model: DepModel,
    dataset: PatchDataset,
    assignments: Mapping[str, int],
    config: TrainConfig,
    epoch_seed: int,
    strategy: str = "semi_hard",
) -> float:
    """One SGD pass over cluster-balanced batches; returns the mean batch loss.

    The reported (and optimized) batch loss is the triplet-loss sum divided
    by the number of mined triplets, which keeps the step size comparable
    across batches.
    """
    batches = build_batches(assignments, config.samples_per_cluster, epoch_seed)
    losses = []
    for batch_id, batch_ids in enumerate(batches):
        images = dataset.subset(batch_ids)
        emb = embed(model, Tensor(np.asarray(images, dtype=model.dtype)))
        labels = [assignments[pid] for pid in batch_ids]
        triples = mine_triplets(emb.data, labels, config.margin, strategy=strategy)
        if not triples:
            losses.append(0.0)
            continue
        a_idx = [t[0] for t in triples]
        p_idx = [t[1] for t in triples]
        n_idx = [t[2] for t in triples]
        loss_sum = triplet_loss(
            take_rows(emb, a_idx), take_rows(emb, p_idx), take_rows(emb, n_idx), config.margin
        )
        loss = loss_sum * (1.0 / len(triples))
        value = float(loss.data)
        if not np.isfinite(value):
            raise RuntimeError(f"non-finite loss in batch {batch_id} (epoch seed {epoch_seed})")
        model.zero_grad()
        loss.backward()
        sgd_step(model, config.learning_rate, config.weight_decay)
        losses.append(value)
    return float(np.mean(losses)) if losses else 0.0


@dataclass
class TrainResult:
    model: DepModel
    history: list[tuple[int, float, float]]  # (epoch, consecutive nmi, mean loss)
    assignments: np.ndarray
    train_ids: list[str]


def train(
    model: DepModel,
    dataset: PatchDataset,
    config: TrainConfig,
    out_dir=None,
    strategy: str = "semi_hard",
) -> TrainResult:
    """Run the full alternation until NMI saturation or the epoch cap.

    Epoch t: embed the train split, (re)fit whitening, k-means into the
    configured number of clusters, compare assignments with epoch t-1 via
    NMI, then train one epoch on the fresh pseudo-labels. Stops once the
    NMI change stays below `nmi_delta` for `nmi_patience` epochs.
    """
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    prev_assign: np.ndarray | None = None
    transform = None
    history: list[tuple[int, float, float]] = []
    nmi_values: list[float] = []
    assignments = np.zeros(len(dataset.ids), dtype=np.int64)
    for epoch in range(1, config.max_epochs + 1):
        embeddings = embed_batch(model, dataset.images)
        if transform is None or config.refit_whiten:
            transform = fit_whiten(embeddings, n_pca=min(config.n_pca, embeddings.shape[1]))
        whitened = apply_whiten(transform, embeddings)
        state = kmeans(whitened, config.clusters, seed=config.seed + 7919 * epoch)
        assignments = state.assignments
        epoch_nmi = float("nan")
        if prev_assign is not None:
            epoch_nmi = nmi(assignments, prev_assign)
            nmi_values.append(epoch_nmi)
        prev_assign = assignments.copy()
        pseudo = {pid: int(c) for pid, c in zip(dataset.ids, assignments)}
        mean_loss = train_epoch(model, dataset, pseudo, config, config.seed + 104729 * epoch, strategy)
        if not math.isnan(epoch_nmi):
            history.append((epoch, epoch_nmi, mean_loss))
        log.info("epoch %d: nmi=%.4f mean_loss=%.5f", epoch, epoch_nmi, mean_loss)
        if len(nmi_values) > config.nmi_patience:
            deltas = [
                abs(nmi_values[i] - nmi_values[i - 1])
                for i in range(len(nmi_values) - config.nmi_patience, len(nmi_values))
            ]
            if all(d < config.nmi_delta for d in deltas):
                log.info("nmi saturated after epoch %d", epoch)
                break
    if out_dir is not None:
        save_checkpoint(model, out_dir / "model.depc")
        write_nmi_log(history, out_dir / "nmi_log.tsv")
    return TrainResult(model=model, history=history, assignments=assignments, train_ids=list(dataset.ids))


def write_nmi_log(history: Sequence[tuple[int, float, float]], path) -> None:
    lines = [f"{epoch}\t{value:.6f}\t{loss:.6f}" for epoch, value, loss in history]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
