"""Evaluation metrics, the loss-ablation harness, and embedding analysis."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from . import losses as L
from .errors import ConfigError, ShapeMismatch
from .nets import ModelSpec, ShapeCode, ShapeTransformer
from .parsemap import LabelImage, bilinear_warp
from .toydata import ToyDataset
from .train import TrainSchedule, encode_label_batch, train_shape_transformer

ABLATION_VARIANTS = ("full", "drop_rec", "drop_adv", "drop_cyc", "drop_coo")


def _paired_labels(pred: LabelImage, ref: LabelImage) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.asarray(pred.labels), np.asarray(ref.labels)
    if a.shape != b.shape:
        raise ShapeMismatch(f"label grids differ: {a.shape} vs {b.shape}")
    return a, b


def miou(pred: LabelImage, ref: LabelImage, C: int) -> float:
    """Mean IoU over the classes present in either map."""
    a, b = _paired_labels(pred, ref)
    ious = []
    for c in range(C):
        in_a, in_b = a == c, b == c
        union = int(np.count_nonzero(in_a | in_b))
        if union == 0:
            continue  # class absent from both maps: skipped, not averaged
        inter = int(np.count_nonzero(in_a & in_b))
        ious.append(inter / union)
    return sum(ious) / len(ious) if ious else 1.0


def pixacc(pred: LabelImage, ref: LabelImage) -> float:
    a, b = _paired_labels(pred, ref)
    return float(np.count_nonzero(a == b)) / a.size


def predict_fake_labels(model: ShapeTransformer, photo_labels: np.ndarray,
                        cari_labels: np.ndarray) -> np.ndarray:
    """Warp photo maps toward caricature references; argmax label output."""
    C = model.spec.in_channels
    model.eval()
    with torch.no_grad():
        pho = encode_label_batch(photo_labels, C)
        car = encode_label_batch(cari_labels, C)
        field = model.dec_forward(model.enc_photo(pho), model.enc_cari(car))
        fake = bilinear_warp(pho, field)
    return fake.numpy().argmax(axis=1)


def evaluate_pairs(model: ShapeTransformer | None, dataset: ToyDataset,
                   indices, batch: int = 32) -> dict:
    """mIoU / pixAcc of predicted maps against each sample's reference.

    ``model=None`` scores the identity-warp baseline (photo labels as-is).
    """
    indices = list(indices)
    C = dataset.num_categories
    miou_sum = acc_sum = 0.0
    for lo in range(0, len(indices), batch):
        chunk = indices[lo: lo + batch]
        pho = np.stack([dataset.samples[i].photo_labels for i in chunk])
        ref = np.stack([dataset.samples[i].cari_labels for i in chunk])
        pred = pho if model is None else predict_fake_labels(model, pho, ref)
        for p, r in zip(pred, ref):
            miou_sum += miou(LabelImage(p), LabelImage(r), C)
            acc_sum += pixacc(LabelImage(p), LabelImage(r))
    n = len(indices)
    return {"miou": miou_sum / n, "pixacc": acc_sum / n}


def split_by_identity(dataset: ToyDataset, holdout_fraction: float = 0.2):
    """Deterministic train/held-out split on identity boundaries."""
    identities = dataset.identities()
    n_hold = max(1, int(round(holdout_fraction * len(identities))))
    held = set(identities[-n_hold:])
    train_idx = [i for i, s in enumerate(dataset.samples) if s.identity not in held]
    held_idx = [i for i, s in enumerate(dataset.samples) if s.identity in held]
    return train_idx, held_idx


@dataclass
class AblationRow:
    variant: str
    miou: float
    pixacc: float
    seed: int
    steps: int
    error: str = ""


_VARIANT_TERMS = {
    "full": ("rec", "adv", "cyc", "coo"),
    "drop_rec": ("adv", "cyc", "coo"),
    "drop_adv": ("rec", "cyc", "coo"),
    "drop_cyc": ("rec", "adv", "coo"),
    "drop_coo": ("rec", "adv", "cyc"),
}


def ablation_run(dataset: ToyDataset, schedule: TrainSchedule,
                 variants=ABLATION_VARIANTS, cfg: L.LossConfig | None = None,
                 model_spec: ModelSpec | None = None,
                 holdout_fraction: float = 0.2) -> list[AblationRow]:
    """Train one model per loss variant under identical seeds and score each.

    Every run shares the seed and data split; an untrained identity-warp
    baseline row is always included for calibration. A variant that fails
    to train is reported with the error and does not stop the others.
    """
    cfg = cfg or L.LossConfig()
    unknown = set(variants) - set(_VARIANT_TERMS)
    if unknown:
        raise ConfigError(f"unknown ablation variants {sorted(unknown)}")
    train_idx, held_idx = split_by_identity(dataset, holdout_fraction)
    train_data = replace(dataset, samples=[dataset.samples[i] for i in train_idx])

    baseline = evaluate_pairs(None, dataset, held_idx)
    rows = [AblationRow("identity", baseline["miou"], baseline["pixacc"],
                        schedule.seed, 0)]
    for variant in variants:
        try:
            result = train_shape_transformer(
                train_data, schedule, cfg, model_spec=model_spec,
                loss_terms=_VARIANT_TERMS[variant],
            )
            scores = evaluate_pairs(result.model, dataset, held_idx)
            rows.append(AblationRow(variant, scores["miou"], scores["pixacc"],
                                    schedule.seed, result.step))
        except Exception as exc:  # keep the remaining variants running
            rows.append(AblationRow(variant, float("nan"), float("nan"),
                                    schedule.seed, 0, error=str(exc)))
    return rows


def write_ablation_table(rows: list[AblationRow], path, delimiter: str = "\t") -> None:
    lines = [delimiter.join(("variant", "mIoU", "pixAcc", "seed", "steps"))]
    for row in rows:
        lines.append(delimiter.join((
            row.variant, f"{row.miou:.6f}", f"{row.pixacc:.6f}",
            str(row.seed), str(row.steps),
        )))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _as_matrix(codes) -> np.ndarray:
    rows = [c.values if isinstance(c, ShapeCode) else np.asarray(c, dtype=np.float64)
            for c in codes]
    return np.asarray(rows, dtype=np.float64)


def median_pairwise_bandwidth(codes) -> float:
    """Median pairwise distance; the default bandwidth convention."""
    X = _as_matrix(codes)
    if X.shape[0] < 2:
        return 1.0
    d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
    upper = np.sqrt(d2[np.triu_indices(X.shape[0], k=1)])
    return float(np.median(upper))


def mean_shift_cluster(codes, bandwidth: float, max_iter: int = 300,
                       tol: float = 1e-5) -> tuple[np.ndarray, np.ndarray]:
    """Flat-kernel mean shift: returns (labels, modes).

    Every point iterates to the mean of its bandwidth neighborhood until
    convergence; converged modes closer than bandwidth/2 merge into one
    cluster. Fully deterministic in the input order.
    """
    if bandwidth <= 0:
        raise ConfigError("bandwidth must be positive")
    X = _as_matrix(codes)
    if X.shape[0] == 0:
        raise ConfigError("need at least one code")
    points = X.copy()
    b2 = bandwidth * bandwidth
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - X[None, :, :]) ** 2).sum(-1)
        within = d2 <= b2
        counts = within.sum(axis=1, keepdims=True)
        shifted = (within[:, :, None] * X[None, :, :]).sum(axis=1) / counts
        move = np.linalg.norm(shifted - points, axis=1).max()
        points = shifted
        if move < tol * bandwidth:
            break

    modes: list[np.ndarray] = []
    labels = np.zeros(X.shape[0], dtype=np.int64)
    merge = bandwidth / 2
    for i, p in enumerate(points):
        for k, m in enumerate(modes):
            if np.linalg.norm(p - m) < merge:
                labels[i] = k
                break
        else:
            labels[i] = len(modes)
            modes.append(p)
    return labels, np.asarray(modes)


def interpolate_codes(z_a, z_b, t: float):
    """Affine blend (1-t)*z_a + t*z_b for t in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise ConfigError(f"interpolation parameter t={t} outside [0, 1]")
    a = z_a.values if isinstance(z_a, ShapeCode) else np.asarray(z_a)
    b = z_b.values if isinstance(z_b, ShapeCode) else np.asarray(z_b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"code lengths differ: {a.shape} vs {b.shape}")
    mixed = (1.0 - t) * a + t * b
    if isinstance(z_a, ShapeCode):
        return ShapeCode(values=mixed)
    return mixed


def export_embeddings(path, codes, cluster_labels=None, ids=None,
                      delimiter: str = "\t") -> None:
    """Portable embedding table: header row, then float32 values per code."""
    X = _as_matrix(codes).astype(np.float32)
    n, d = X.shape
    ids = list(ids) if ids is not None else [f"z{i:05d}" for i in range(n)]
    clusters = list(cluster_labels) if cluster_labels is not None else [-1] * n
    header = delimiter.join(["id", "cluster"] + [f"c{j}" for j in range(d)])
    lines = [header]
    for i in range(n):
        values = delimiter.join(np.format_float_positional(v, trim="0") for v in X[i])
        lines.append(delimiter.join([str(ids[i]), str(int(clusters[i])), values]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
