"""End-to-end assembly: ingestion, retrieval, shape transform, style stub.

``PipelineRuntime`` is the single execution path behind both the CLI and
the HTTP service, so the two surfaces produce byte-identical outputs for
identical inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from importlib import resources
from pathlib import Path

import numpy as np
import torch

from .analysis import interpolate_codes
from .errors import ConfigError, DegenerateGeometry, ShapeMismatch
from .nets import (RetrievalModel, ShapeCode, ShapeTransformer,
                   load_retrieval_model, load_shape_transformer)
from .parsemap import (DEFAULT_CATEGORIES, LabelImage, ParsingMap, WarpField,
                       bilinear_warp, decode_argmax, encode_one_hot, grid_deform)
from .retrieval import GalleryIndex, load_index, query_top_k

N_LANDMARKS = 17


def canonical_landmarks(height: int = 256, width: int = 256) -> np.ndarray:
    """The shipped frontal 17-landmark template, scaled to the output frame."""
    with resources.files("semawarp.data").joinpath("canonical_landmarks.json").open() as fh:
        fractions = np.asarray(json.load(fh)["landmarks"], dtype=np.float64)
    return fractions * np.asarray([height, width], dtype=np.float64)


@dataclass
class AlignmentSpec:
    """17 detected landmarks plus the canonical targets they align to."""

    landmarks: np.ndarray                      # (17, 2) as (row, col)
    target_points: np.ndarray | None = None    # defaults to the shipped template

    def __post_init__(self):
        self.landmarks = np.asarray(self.landmarks, dtype=np.float64)
        if self.landmarks.shape != (N_LANDMARKS, 2):
            raise ShapeMismatch(f"expected {N_LANDMARKS} landmarks, got {self.landmarks.shape}")
        if not np.isfinite(self.landmarks).all():
            raise DegenerateGeometry("landmarks must be finite")
        if self.target_points is not None:
            self.target_points = np.asarray(self.target_points, dtype=np.float64)
            if self.target_points.shape != (N_LANDMARKS, 2):
                raise ShapeMismatch("target points must match the 17 landmarks")


def similarity_from_points(src: np.ndarray, dst: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Least-squares similarity (scale, rotation, translation) src -> dst."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    cs, cd = src - mu_s, dst - mu_d
    var_s = (cs ** 2).sum() / len(src)
    sv = np.linalg.svd(cs, compute_uv=False)
    if var_s <= 0 or len(sv) < 2 or sv[1] <= 1e-9 * max(sv[0], 1.0):
        raise DegenerateGeometry("landmark configuration has rank < 2")
    cov = cd.T @ cs / len(src)
    U, D, Vt = np.linalg.svd(cov)
    S = np.eye(2)
    if np.linalg.det(U @ Vt) < 0:
        S[1, 1] = -1
    R = U @ S @ Vt
    scale = float(np.trace(np.diag(D) @ S) / var_s)
    t = mu_d - scale * R @ mu_s
    return scale, R, t


def _inverse_sample_grid(scale, R, t, out_h: int, out_w: int) -> torch.Tensor:
    """Source coordinates for every output pixel under the inverse similarity."""
    rows, cols = np.meshgrid(np.arange(out_h), np.arange(out_w), indexing="ij")
    pts = np.stack([rows.ravel(), cols.ravel()], axis=1).astype(np.float64)
    src = (pts - t) @ np.linalg.inv(scale * R).T
    return torch.from_numpy(src.T.reshape(2, out_h, out_w).astype(np.float32))


def ingest(image: np.ndarray, labels: LabelImage, spec: AlignmentSpec,
           size: int = 256) -> tuple[np.ndarray, LabelImage]:
    """Align image and labels to the canonical frame at the configured size.

    A least-squares similarity maps the detected landmarks onto the
    canonical template; the image is resampled bilinearly and labels by
    nearest neighbor through the identical inverse transform.
    """
    image = np.asarray(image)
    if image.shape[:2] != (labels.height, labels.width):
        raise ShapeMismatch(
            f"image {image.shape[:2]} vs labels {(labels.height, labels.width)}")
    h, w = image.shape[:2]
    lm = spec.landmarks
    if (lm < -0.5).any() or (lm[:, 0] > h - 0.5).any() or (lm[:, 1] > w - 0.5).any():
        raise DegenerateGeometry("landmarks fall outside the image bounds")
    targets = spec.target_points if spec.target_points is not None \
        else canonical_landmarks(size, size)
    scale, R, t = similarity_from_points(lm, targets)
    grid = _inverse_sample_grid(scale, R, t, size, size)

    planes = image.astype(np.float32)
    if planes.ndim == 2:
        planes = planes[:, :, None]
    src = torch.from_numpy(np.ascontiguousarray(planes.transpose(2, 0, 1)))
    warped = bilinear_warp(src, grid).numpy().transpose(1, 2, 0)
    if image.dtype == np.uint8:
        warped = np.clip(np.rint(warped), 0, 255).astype(np.uint8)
    if image.ndim == 2:
        warped = warped[:, :, 0]

    nn_r = np.clip(np.rint(grid[0].numpy()), 0, h - 1).astype(np.int64)
    nn_c = np.clip(np.rint(grid[1].numpy()), 0, w - 1).astype(np.int64)
    new_labels = np.asarray(labels.labels)[nn_r, nn_c]
    return warped, LabelImage(labels=new_labels, palette=dict(labels.palette))


def _category_names(C: int, palette: dict[int, str]) -> tuple[str, ...]:
    if palette:
        return tuple(palette.get(c, f"component_{c}") for c in range(C))
    if C == len(DEFAULT_CATEGORIES):
        return DEFAULT_CATEGORIES
    return tuple(f"component_{c}" for c in range(C))


def transform_photo(photo_image: np.ndarray, photo_labels: LabelImage,
                    cari_labels: LabelImage, model: ShapeTransformer,
                    z_target: ShapeCode | None = None
                    ) -> tuple[np.ndarray, ParsingMap, WarpField]:
    """Warp a photo (image + map) toward a reference caricature map.

    The predicted field is applied channel-wise to the photo image with the
    same bilinear sampler used for parsing maps. ``z_target`` overrides the
    encoded reference code (used by interpolation).
    """
    spec = model.spec
    C = spec.in_channels
    if (photo_labels.height, photo_labels.width) != (spec.height, spec.width):
        raise ShapeMismatch(
            f"photo labels {photo_labels.height}x{photo_labels.width} do not match "
            f"checkpoint {spec.height}x{spec.width}")
    if photo_image.shape[:2] != (spec.height, spec.width):
        raise ShapeMismatch("photo image does not match the checkpoint size")
    if int(np.max(photo_labels.labels, initial=0)) >= C \
            or int(np.max(cari_labels.labels, initial=0)) >= C:
        raise ConfigError(f"labels exceed the checkpoint's {C} categories")

    p_pho = encode_one_hot(photo_labels, C)
    z_pho = model.encode("photo", p_pho)
    if z_target is None:
        p_cari = encode_one_hot(cari_labels, C)
        z_target = model.encode("caricature", p_cari)
    field = model.decode_warp(z_pho, z_target)

    fake = ParsingMap(data=bilinear_warp(p_pho.data, field.data),
                      categories=_category_names(C, photo_labels.palette), hard=False)

    planes = photo_image.astype(np.float32)
    squeeze = planes.ndim == 2
    if squeeze:
        planes = planes[:, :, None]
    src = torch.from_numpy(np.ascontiguousarray(planes.transpose(2, 0, 1)))
    warped = bilinear_warp(src, field.data).numpy().transpose(1, 2, 0)
    if photo_image.dtype == np.uint8:
        warped = np.clip(np.rint(warped), 0, 255).astype(np.uint8)
    if squeeze:
        warped = warped[:, :, 0]
    return warped, fake, field


def style_stub(content: np.ndarray, style: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Per-channel mean/std matching; a stand-in for real style transfer."""
    content = np.asarray(content)
    style = np.asarray(style)
    if content.shape != style.shape:
        raise ShapeMismatch(f"content {content.shape} vs style {style.shape}")
    c = content.astype(np.float64)
    s = style.astype(np.float64)
    axes = (0, 1)
    mu_c, mu_s = c.mean(axis=axes), s.mean(axis=axes)
    sd_c, sd_s = c.std(axis=axes), s.std(axis=axes)
    out = (c - mu_c) / np.maximum(sd_c, eps) * sd_s + mu_s
    if content.dtype == np.uint8:
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return np.clip(out, 0.0, 1.0) if c.max() <= 1.0 else out


@dataclass
class PipelineConfig:
    transformer_checkpoint: str = ""
    retrieval_checkpoint: str = ""
    index_path: str = ""
    categories: tuple[str, ...] = DEFAULT_CATEGORIES
    image_size: int = 256
    style_mode: str = "off"  # or "statistic-match"

    def __post_init__(self):
        if self.image_size < 1:
            raise ConfigError("image size must be positive")
        if self.style_mode not in ("off", "statistic-match"):
            raise ConfigError(f"unknown style mode {self.style_mode!r}")
        self.categories = tuple(self.categories)


class PipelineRuntime:
    """Loaded checkpoints and index behind the CLI and HTTP surfaces."""

    def __init__(self, config: PipelineConfig,
                 transformer: ShapeTransformer | None = None,
                 retrieval_model: RetrievalModel | None = None,
                 index: GalleryIndex | None = None):
        self.config = config
        self.transformer = transformer
        self.retrieval_model = retrieval_model
        self.index = index

    @classmethod
    def load(cls, config: PipelineConfig) -> "PipelineRuntime":
        transformer = retrieval_model = index = None
        if config.transformer_checkpoint:
            transformer, _ = load_shape_transformer(config.transformer_checkpoint)
        if config.retrieval_checkpoint:
            retrieval_model, _ = load_retrieval_model(config.retrieval_checkpoint)
        if config.index_path:
            index = load_index(config.index_path)
        return cls(config, transformer, retrieval_model, index)

    def _require(self, attr: str):
        value = getattr(self, attr)
        if value is None:
            raise ConfigError(f"pipeline is missing {attr!r}; check the configuration")
        return value

    def retrieve(self, photo_labels: LabelImage, k: int = 5) -> list[tuple[str, float]]:
        return query_top_k(self._require("index"), photo_labels,
                           self._require("retrieval_model"), k=k)

    def transform(self, photo_image: np.ndarray, photo_labels: LabelImage,
                  cari_labels: LabelImage, style_image: np.ndarray | None = None,
                  z_target: ShapeCode | None = None) -> dict:
        model = self._require("transformer")
        warped, fake, field = transform_photo(photo_image, photo_labels,
                                              cari_labels, model, z_target=z_target)
        if self.config.style_mode == "statistic-match" and style_image is not None:
            warped = style_stub(warped, style_image)
        fake_labels = decode_argmax(fake)
        counts = {name: float(fake.data[c].sum())
                  for c, name in enumerate(fake.categories)}
        return {"image": warped, "fake_map": fake, "fake_labels": fake_labels,
                "field": field, "component_counts": counts}

    def interpolate(self, photo_image: np.ndarray, photo_labels: LabelImage,
                    ref_a, ref_b, t: float) -> dict:
        """Transform with the blend of two reference shape codes.

        ``ref_a``/``ref_b`` are caricature LabelImages or raw codes.
        """
        model = self._require("transformer")
        z_a = self._reference_code(model, ref_a)
        z_b = self._reference_code(model, ref_b)
        z_t = interpolate_codes(z_a, z_b, t)
        return self.transform(photo_image, photo_labels, photo_labels, z_target=z_t)

    def _reference_code(self, model: ShapeTransformer, ref) -> ShapeCode:
        if isinstance(ref, ShapeCode):
            return ref
        if isinstance(ref, LabelImage):
            return model.encode("caricature", encode_one_hot(ref, model.spec.in_channels))
        return ShapeCode(values=np.asarray(ref, dtype=np.float32))

    def edit(self, labels: LabelImage, controls, C: int | None = None) -> dict:
        C = C or (self.transformer.spec.in_channels if self.transformer
                  else len(self.config.categories))
        names = _category_names(C, labels.palette)
        pmap = encode_one_hot(labels, C, categories=names)
        edited = grid_deform(pmap, controls)
        counts = {name: float(edited.data[c].sum())
                  for c, name in enumerate(edited.categories)}
        return {"labels": decode_argmax(edited), "component_counts": counts}
