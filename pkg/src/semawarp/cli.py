"""Command-line surface; report verbs write figures alongside their tables."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import analysis, figures
from .config import dump_config, load_config
from .fileio import load_image, load_label_image, save_image, save_label_image
from .losses import LossConfig
from .nets import ModelSpec, load_retrieval_model, load_shape_transformer
from .parsemap import LabelImage
from .pipeline import AlignmentSpec, PipelineConfig, PipelineRuntime, ingest
from .retrieval import build_index, load_index, save_index
from .toydata import ToySpec, generate_toy_dataset, load_toy_dataset, save_toy_dataset
from .train import TrainSchedule, train_retrieval, train_shape_transformer


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Configuration document (overrides SEMAWARP_CONFIG).")
@click.pass_context
def main(ctx, config_path):
    """Semantic shape transformation for caricature-style map warping."""
    ctx.ensure_object(dict)
    pipeline_cfg, loss_cfg, schedule = load_config(config_path)
    ctx.obj.update(pipeline=pipeline_cfg, loss=loss_cfg, schedule=schedule)


def _schedule_from_options(base: TrainSchedule, batch, lr, epochs_flat, epochs_decay,
                           steps, seed) -> TrainSchedule:
    kwargs = dict(
        batch_size=batch if batch is not None else base.batch_size,
        lr_initial=lr if lr is not None else base.lr_initial,
        epochs_flat=epochs_flat if epochs_flat is not None else base.epochs_flat,
        epochs_decay=epochs_decay if epochs_decay is not None else base.epochs_decay,
        max_generator_steps=steps if steps is not None else base.max_generator_steps,
        seed=seed if seed is not None else base.seed,
        critic_steps_per_gen=base.critic_steps_per_gen,
        critic_clip=base.critic_clip,
    )
    return TrainSchedule(**kwargs)


def _model_spec_for(dataset, code_dim=128) -> ModelSpec:
    return ModelSpec(in_channels=dataset.num_categories, height=dataset.spec.size,
                     width=dataset.spec.size, code_dim=code_dim)


@main.command("toy-gen")
@click.option("--out", required=True, type=click.Path())
@click.option("--size", default=64, show_default=True)
@click.option("--identities", default=200, show_default=True)
@click.option("--samples", default=1, show_default=True)
@click.option("--seed", default=0, show_default=True)
def toy_gen(out, size, identities, samples, seed):
    """Generate a deterministic toy photo/caricature dataset."""
    spec = ToySpec(size=size, identity_count=identities, samples_per_identity=samples)
    dataset = generate_toy_dataset(spec, seed)
    save_toy_dataset(dataset, out)
    click.echo(f"wrote {len(dataset)} photo/caricature pairs to {out}")


@main.command("train-shape")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "checkpoint", required=True, type=click.Path())
@click.option("--metrics", "metrics_path", type=click.Path(), default=None)
@click.option("--batch", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--epochs-flat", type=int, default=None)
@click.option("--epochs-decay", type=int, default=None)
@click.option("--steps", type=int, default=None, help="Cap on generator steps.")
@click.option("--seed", type=int, default=None)
@click.pass_context
def train_shape(ctx, data_dir, checkpoint, metrics_path, batch, lr,
                epochs_flat, epochs_decay, steps, seed):
    """Train the dense warp transformer on a dataset directory."""
    dataset = load_toy_dataset(data_dir)
    schedule = _schedule_from_options(ctx.obj["schedule"], batch, lr,
                                      epochs_flat, epochs_decay, steps, seed)
    metrics_path = metrics_path or str(Path(checkpoint).with_suffix(".metrics.jsonl"))
    result = train_shape_transformer(
        dataset, schedule, ctx.obj["loss"], model_spec=_model_spec_for(dataset),
        checkpoint_path=checkpoint, metrics_path=metrics_path,
    )
    curves = Path(metrics_path).with_suffix(".png")
    figures.save_training_curves(result.metrics, curves)
    click.echo(f"trained {result.step} steps -> {checkpoint}")
    click.echo(f"metrics: {metrics_path}  curves: {curves}")


@main.command("train-retrieval")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "checkpoint", required=True, type=click.Path())
@click.option("--metrics", "metrics_path", type=click.Path(), default=None)
@click.option("--batch", type=int, default=None)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.option("--epochs-flat", type=int, default=100, show_default=True)
@click.option("--epochs-decay", type=int, default=100, show_default=True)
@click.option("--steps", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_context
def train_retrieval_cmd(ctx, data_dir, checkpoint, metrics_path, batch, lr,
                        epochs_flat, epochs_decay, steps, seed):
    """Train the contrastive retrieval embedders."""
    dataset = load_toy_dataset(data_dir)
    schedule = _schedule_from_options(ctx.obj["schedule"], batch, lr,
                                      epochs_flat, epochs_decay, steps, seed)
    metrics_path = metrics_path or str(Path(checkpoint).with_suffix(".metrics.jsonl"))
    result = train_retrieval(
        dataset, schedule, ctx.obj["loss"], model_spec=_model_spec_for(dataset),
        checkpoint_path=checkpoint, metrics_path=metrics_path,
    )
    curves = Path(metrics_path).with_suffix(".png")
    figures.save_training_curves(result.metrics, curves)
    click.echo(f"trained {result.step} steps -> {checkpoint}")


@main.command("build-index")
@click.option("--maps", "maps_dir", required=True, type=click.Path(exists=True),
              help="Directory of caricature label PNGs (cari_*.png with sidecars).")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--pattern", default="cari_*.png", show_default=True)
def build_index_cmd(maps_dir, checkpoint, out, pattern):
    """Encode gallery caricature maps into a retrieval index."""
    model, _ = load_retrieval_model(checkpoint)
    items = []
    for path in sorted(Path(maps_dir).glob(pattern)):
        label_image, _ = load_label_image(path)
        items.append((path.stem, label_image, str(path)))
    index = build_index(items, model)
    save_index(index, out)
    click.echo(f"indexed {len(index)} maps -> {out}")


@main.command("retrieve")
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--index", "index_path", required=True, type=click.Path(exists=True))
@click.option("--k", default=5, show_default=True)
def retrieve_cmd(labels_path, checkpoint, index_path, k):
    """Query the gallery with a photo parsing map."""
    from .retrieval import query_top_k

    model, _ = load_retrieval_model(checkpoint)
    index = load_index(index_path)
    label_image, _ = load_label_image(labels_path)
    click.echo("record_id\tdistance")
    for record_id, dist in query_top_k(index, label_image, model, k=k):
        click.echo(f"{record_id}\t{dist:.6f}")


@main.command("transform")
@click.option("--photo", required=True, type=click.Path(exists=True))
@click.option("--photo-labels", required=True, type=click.Path(exists=True))
@click.option("--cari-labels", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--out-image", required=True, type=click.Path())
@click.option("--out-labels", required=True, type=click.Path())
@click.option("--style", "style_path", type=click.Path(exists=True), default=None)
@click.pass_context
def transform_cmd(ctx, photo, photo_labels, cari_labels, checkpoint,
                  out_image, out_labels, style_path):
    """Deform a photo toward a reference caricature map."""
    model, _ = load_shape_transformer(checkpoint)
    cfg = ctx.obj["pipeline"]
    if style_path:
        cfg = PipelineConfig(**{**cfg.__dict__, "style_mode": "statistic-match"})
    runtime = PipelineRuntime(cfg, transformer=model)
    photo_img = load_image(photo)
    pl, C = load_label_image(photo_labels)
    cl, _ = load_label_image(cari_labels)
    style = load_image(style_path) if style_path else None
    out = runtime.transform(photo_img, pl, cl, style_image=style)
    save_image(out["image"], out_image)
    save_label_image(out["fake_labels"], out_labels, C=C)
    click.echo(f"wrote {out_image} and {out_labels}")


@main.command("ingest")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--landmarks", "landmarks_path", required=True, type=click.Path(exists=True),
              help="JSON file with 17 [row, col] landmark pairs.")
@click.option("--out-image", required=True, type=click.Path())
@click.option("--out-labels", required=True, type=click.Path())
@click.option("--size", type=int, default=None)
@click.pass_context
def ingest_cmd(ctx, image_path, labels_path, landmarks_path, out_image, out_labels, size):
    """Align an image + label map to the canonical frame."""
    size = size or ctx.obj["pipeline"].image_size
    image = load_image(image_path)
    labels, C = load_label_image(labels_path)
    landmarks = json.loads(Path(landmarks_path).read_text())
    spec = AlignmentSpec(landmarks=np.asarray(landmarks))
    aligned_img, aligned_labels = ingest(image, labels, spec, size=size)
    save_image(aligned_img, out_image)
    save_label_image(aligned_labels, out_labels, C=C)
    click.echo(f"aligned to {size}x{size}: {out_image}, {out_labels}")


@main.command("ablate")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out-table", required=True, type=click.Path())
@click.option("--out-figure", type=click.Path(), default=None)
@click.option("--batch", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--epochs-flat", type=int, default=None)
@click.option("--epochs-decay", type=int, default=None)
@click.option("--steps", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--variants", default=",".join(analysis.ABLATION_VARIANTS), show_default=True)
@click.pass_context
def ablate_cmd(ctx, data_dir, out_table, out_figure, batch, lr, epochs_flat,
               epochs_decay, steps, seed, variants):
    """Train each loss-ablation variant and report mIoU / pixAcc."""
    dataset = load_toy_dataset(data_dir)
    schedule = _schedule_from_options(ctx.obj["schedule"], batch, lr,
                                      epochs_flat, epochs_decay, steps, seed)
    rows = analysis.ablation_run(
        dataset, schedule, variants=tuple(v.strip() for v in variants.split(",")),
        cfg=ctx.obj["loss"], model_spec=_model_spec_for(dataset),
    )
    analysis.write_ablation_table(rows, out_table)
    out_figure = out_figure or str(Path(out_table).with_suffix(".png"))
    figures.save_ablation_chart(rows, out_figure)
    click.echo(f"table: {out_table}  figure: {out_figure}")
    for row in rows:
        click.echo(f"{row.variant}\tmIoU={row.miou:.4f}\tpixAcc={row.pixacc:.4f}")


@main.command("analyze-codes")
@click.option("--index", "index_path", required=True, type=click.Path(exists=True))
@click.option("--out-table", required=True, type=click.Path())
@click.option("--out-figure", type=click.Path(), default=None)
@click.option("--bandwidth", type=float, default=None,
              help="Mean-shift bandwidth; default is the median pairwise distance.")
def analyze_codes_cmd(index_path, out_table, out_figure, bandwidth):
    """Cluster gallery shape codes and export the embedding table."""
    index = load_index(index_path)
    codes = index.code_matrix()
    bandwidth = bandwidth or analysis.median_pairwise_bandwidth(codes)
    labels, modes = analysis.mean_shift_cluster(codes, bandwidth)
    ids = [e.record_id for e in index.entries]
    analysis.export_embeddings(out_table, codes, cluster_labels=labels, ids=ids)
    out_figure = out_figure or str(Path(out_table).with_suffix(".png"))
    figures.save_embedding_scatter(codes, labels, out_figure)
    click.echo(f"{len(modes)} clusters at bandwidth {bandwidth:.4f}")
    click.echo(f"table: {out_table}  figure: {out_figure}")


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--ui-dir", type=click.Path(), default=None)
@click.pass_context
def serve_cmd(ctx, host, port, ui_dir):
    """Run the HTTP service for the editor UI."""
    import uvicorn

    from .service import create_app

    runtime = PipelineRuntime.load(ctx.obj["pipeline"])
    app = create_app(runtime, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)


@main.command("show-config")
@click.pass_context
def show_config_cmd(ctx):
    """Print the effective configuration document."""
    sys.stdout.write(dump_config(ctx.obj["pipeline"], ctx.obj["loss"], ctx.obj["schedule"]))


if __name__ == "__main__":
    main()
