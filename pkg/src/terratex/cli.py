"""Command-line interface for the terrain-texture pipeline."""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, embstore
from .cluster import apply_whiten, fit_whiten, kmeans
from .dcml import TrainConfig, load_dataset, read_train_config, train
from .labelsvc import read_labels_file
from .nnet import (
    DepModel,
    ModelConfig,
    embed_batch,
    load_checkpoint,
    read_model_config,
    save_checkpoint,
)
from .patchex import ExtractConfig, Split, build_manifest, load_source_images, read_manifest
from .report import save_cluster_sizes, save_nmi_curve, save_precision_chart
from .retrieval import build_index, eval_all, knn
from .taxonomy import TaxonomyParseError, describe, format_code, load_registry, parse


@click.group()
@click.version_option(version=__version__)
def main():
    """Terrain-texture clustering and retrieval toolkit."""


# -- extraction ---------------------------------------------------------

@main.command()
@click.option("--images", "images_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--meta", "meta_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--max-range", default=15.0, show_default=True)
@click.option("--left-frac", default=0.6, show_default=True)
@click.option("--stride-frac", default=0.5, show_default=True)
@click.option("--side-left", default=256, show_default=True)
@click.option("--side-right", default=128, show_default=True)
@click.option("--exclude", "exclude_file", type=click.Path(exists=True, dir_okay=False),
              help="file with one image_id per line to skip")
def extract(images_dir, meta_path, out_dir, max_range, left_frac, stride_frac,
            side_left, side_right, exclude_file):
    """Extract patches from source images into a dataset manifest."""
    exclude = frozenset()
    if exclude_file:
        exclude = frozenset(Path(exclude_file).read_text().split())
    config = ExtractConfig(
        side_left=side_left, side_right=side_right, stride_fraction=stride_frac,
        left_fraction=left_frac, max_range_m=max_range, exclude_image_ids=exclude,
    )
    manifest = build_manifest(load_source_images(images_dir, meta_path), config, out_dir)
    records = read_manifest(manifest)
    n_train = sum(1 for r in records if r.split is Split.TRAIN)
    click.echo(f"wrote {manifest} ({len(records)} patches: {n_train} train, "
               f"{len(records) - n_train} test)")


# -- taxonomy -----------------------------------------------------------

@main.group()
def taxon():
    """Parse, describe, and validate terrain-class codes."""


@taxon.command("parse")
@click.argument("code_text")
def taxon_parse(code_text):
    try:
        code = parse(code_text)
    except TaxonomyParseError as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(format_code(code))


@taxon.command("describe")
@click.argument("code_text")
def taxon_describe(code_text):
    try:
        code = parse(code_text)
    except TaxonomyParseError as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(describe(code))


@taxon.command("validate")
@click.argument("registry_file", type=click.Path(exists=True, dir_okay=False))
def taxon_validate(registry_file):
    try:
        registry = load_registry(registry_file)
    except (ValueError, TaxonomyParseError) as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(f"{len(registry)} classes ok")


# -- model --------------------------------------------------------------

@main.group()
def model():
    """Initialize models and compute embeddings."""


@model.command("init")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="flat key=value architecture file; defaults used when omitted")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", default=0, show_default=True)
def model_init(config_path, out_path, seed):
    config = read_model_config(config_path) if config_path else ModelConfig()
    net = DepModel.init(config, seed=seed)
    save_checkpoint(net, out_path)
    click.echo(f"wrote {out_path} ({sum(t.data.size for t in net.params.values())} parameters)")


@model.command("embed")
@click.option("--checkpoint", "checkpoint_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--split", type=click.Choice(["train", "test", "all"]), default="all",
              show_default=True)
@click.option("--batch-size", default=256, show_default=True)
def model_embed(checkpoint_path, manifest_path, out_path, split, batch_size):
    """Embed manifest patches into an embedding store."""
    net = load_checkpoint(checkpoint_path)
    wanted = {"train": Split.TRAIN, "test": Split.TEST}.get(split)
    dataset = load_dataset(manifest_path, wanted, net.config.input_size) if wanted else None
    if dataset is None:
        from .dcml import PatchDataset

        parts = [load_dataset(manifest_path, s, net.config.input_size)
                 for s in (Split.TRAIN, Split.TEST)]
        dataset = PatchDataset(
            ids=parts[0].ids + parts[1].ids,
            images=np.concatenate([p.images for p in parts]),
        )
    vectors = embed_batch(net, dataset.images, batch_size=batch_size)
    embstore.write_store(out_path, dataset.ids, vectors)
    click.echo(f"wrote {out_path} ({len(dataset.ids)} x {vectors.shape[1]})")


# -- clustering ---------------------------------------------------------

@main.group()
def cluster():
    """Cluster embeddings into pseudo-label groups."""


@cluster.command("run")
@click.option("--embeddings", "store_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--k", default=150, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--n-pca", default=256, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def cluster_run(store_path, k, seed, n_pca, out_dir):
    ids, vectors = embstore.read_store(store_path)
    transform = fit_whiten(vectors, n_pca=min(n_pca, vectors.shape[1]))
    state = kmeans(apply_whiten(transform, vectors), k, seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"{pid}\t{c}" for pid, c in zip(ids, state.assignments)]
    (out / "clusters.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    embstore.write_store(out / "centroids.temb",
                         [f"centroid_{i}" for i in range(k)], state.centroids)
    save_cluster_sizes(state.assignments, out / "cluster_sizes.png")
    click.echo(f"wrote {out / 'clusters.tsv'} (K={k}, inertia={state.inertia:.2f})")


# -- training -----------------------------------------------------------

@main.command("train")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True, dir_okay=False),
              help="starting checkpoint; a fresh default model when omitted")
@click.option("--input-size", default=64, show_default=True,
              help="network input size when no starting checkpoint is given")
def train_cmd(manifest_path, config_path, out_dir, checkpoint_path, input_size):
    """Run the alternating cluster/triplet training loop."""
    config = read_train_config(config_path)
    if checkpoint_path:
        net = load_checkpoint(checkpoint_path)
    else:
        net = DepModel.init(ModelConfig(input_size=input_size), seed=config.seed)
    dataset = load_dataset(manifest_path, Split.TRAIN, net.config.input_size)
    result = train(net, dataset, config, out_dir=out_dir)
    out = Path(out_dir)
    if result.history:
        save_nmi_curve(result.history, out / "nmi_curve.png")
    lines = [f"{pid}\t{c}" for pid, c in zip(result.train_ids, result.assignments)]
    (out / "clusters.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    click.echo(f"trained {len(result.history) + 1} epochs; artifacts in {out}")


# -- retrieval ----------------------------------------------------------

@main.group()
def index():
    """Build retrieval indexes."""


@index.command("build")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--embeddings", "store_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def index_build(manifest_path, store_path, out_path):
    """Restrict an embedding store to the test split and write it out."""
    records = read_manifest(manifest_path)
    idx = build_index(records, store_path)
    embstore.write_store(out_path, list(idx.ids), idx.vectors)
    click.echo(f"wrote {out_path} ({len(idx)} test-split rows)")


@main.command("query")
@click.option("--index", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--patch", "patch_id", required=True)
@click.option("--k", default=10, show_default=True)
@click.option("--no-exclude", is_flag=True, help="keep same site/drive neighbors")
@click.option("--site-only", is_flag=True, help="exclude on site alone, ignoring drive")
def query_cmd(store_path, manifest_path, patch_id, k, no_exclude, site_only):
    """Nearest neighbors of an indexed patch."""
    records = read_manifest(manifest_path)
    idx = build_index(records, store_path)
    if patch_id not in idx.row_of:
        raise click.ClickException(f"patch {patch_id} is not in the index")
    site, drive, _ = idx.metadata[patch_id]
    result = knn(idx, idx.vector_for(patch_id), (site, drive), k,
                 exclude_same_site_drive=not no_exclude, site_only=site_only,
                 query_id=patch_id)
    click.echo("rank\tpatch_id\tdistance\tsame_site_drive")
    for rank, n in enumerate(result.neighbors, start=1):
        click.echo(f"{rank}\t{n.patch_id}\t{n.distance:.6f}\t{n.same_site_drive}")
    if result.short:
        click.echo(f"# short result: {len(result.neighbors)} of {k} requested", err=True)


@main.command("eval")
@click.option("--index", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", "labels_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--k", default=10, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              help="also write precision.tsv and precision.png here")
def eval_cmd(store_path, manifest_path, labels_path, k, out_dir):
    """Precision@K over labeled queries."""
    records = read_manifest(manifest_path)
    idx = build_index(records, store_path)
    labels = read_labels_file(labels_path)
    queries = [(pid, cls) for pid, cls in labels.items() if pid in idx.row_of]
    if not queries:
        raise click.ClickException("no labeled queries present in the index")
    table = eval_all(idx, queries, labels, k)
    click.echo(table.as_tsv(), nl=False)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "precision.tsv").write_text(table.as_tsv(), encoding="utf-8")
        save_precision_chart(table, out / "precision.png", k=k)
        click.echo(f"# wrote {out / 'precision.tsv'} and precision.png", err=True)


# -- synthetic corpus ---------------------------------------------------

@main.group()
def synth():
    """Generate the synthetic texture corpus."""


@synth.command("corpus")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=123, show_default=True)
@click.option("--images-per-class", default=40, show_default=True)
def synth_corpus(out_dir, seed, images_per_class):
    """Write synthetic source images, metadata, and ground-truth classes."""
    from PIL import Image

    from .synth import make_corpus

    out = Path(out_dir)
    (out / "sources").mkdir(parents=True, exist_ok=True)
    images, image_class = make_corpus(seed=seed, images_per_class=images_per_class)
    meta = ["image_id\tsol\tsite\tdrive\teye\ttarget_range_m"]
    for img in images:
        Image.fromarray(img.pixels).save(out / "sources" / f"{img.image_id}.png")
        meta.append(f"{img.image_id}\t{img.sol}\t{img.site}\t{img.drive}"
                    f"\t{img.eye.value}\t{img.target_range_m}")
    (out / "meta.tsv").write_text("\n".join(meta) + "\n", encoding="utf-8")
    lines = [f"{iid}\t{cls}" for iid, cls in sorted(image_class.items())]
    (out / "image_classes.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    click.echo(f"wrote {len(images)} source images to {out}")


@synth.command("labels")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--image-classes", "classes_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def synth_labels(manifest_path, classes_path, out_path):
    """Propagate ground-truth image classes to a labeled-query file."""
    from .synth import corpus_classes

    image_class = {}
    for line in Path(classes_path).read_text(encoding="utf-8").splitlines():
        if line:
            iid, cls = line.split("\t")
            image_class[iid] = int(cls)
    classes = corpus_classes()
    lines = ["patch_id\tclass_id\ttaxonomy_code"]
    for r in read_manifest(manifest_path):
        cls = classes[image_class[r.image_id]]
        lines.append(f"{r.patch_id}\t{cls.class_id}\t{format_code(cls.code)}")
    Path(out_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    click.echo(f"wrote {out_path}")


# -- service ------------------------------------------------------------

@main.command("serve")
@click.option("--dir", "artifacts_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve_cmd(artifacts_dir, port, host):
    """Serve the annotation API and UI over the prepared artifacts."""
    from .labelsvc import serve

    try:
        serve(artifacts_dir, port=port, host=host)
    except FileNotFoundError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
