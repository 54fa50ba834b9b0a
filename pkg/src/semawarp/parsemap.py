"""Parsing maps, warp fields, coordinate maps, and the bilinear warp kernel.

Conventions used everywhere in this package:

* tensors are channel-first ``(C, H, W)``; axis 0 of the spatial grid is the
  row ``i`` and axis 1 the column ``j``, origin top-left;
* a warp field stores, per output pixel, the absolute source coordinate to
  sample (channel 0 = source row, channel 1 = source column), in pixel
  units; sampling is backward and bilinear, with source coordinates clamped
  to the image rectangle (clamp-to-edge, no mass loss at borders);
* warped maps are "soft": values stay in [0, 1] but pixels are no longer
  one-hot.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import torch

from .errors import DegenerateGeometry, InvalidLabel, ShapeMismatch
from .tps import fit_tps, evaluate_tps

DEFAULT_CATEGORIES = (
    "background",
    "skin",
    "left_brow",
    "right_brow",
    "left_eye",
    "right_eye",
    "nose",
    "upper_lip",
    "inner_mouth",
    "lower_lip",
    "hair",
)


@dataclass
class ParsingMap:
    """Per-pixel component distribution over C facial categories."""

    data: torch.Tensor  # (C, H, W), values in [0, 1]
    categories: tuple[str, ...]
    hard: bool = True

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ShapeMismatch(f"parsing map must be (C, H, W), got {tuple(self.data.shape)}")
        if len(self.categories) != self.data.shape[0]:
            raise ShapeMismatch(
                f"{len(self.categories)} categories for {self.data.shape[0]} channels"
            )
        self.categories = tuple(self.categories)

    @property
    def num_categories(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def validate(self, atol: float = 1e-6) -> None:
        """Assert the value-range invariant, and one-hotness for hard maps."""
        data = self.data
        if not torch.isfinite(data).all():
            raise ValueError("parsing map contains non-finite values")
        if data.min() < -atol or data.max() > 1 + atol:
            raise ValueError("parsing map values outside [0, 1]")
        if self.hard:
            sums = data.sum(dim=0)
            if not torch.allclose(sums, torch.ones_like(sums), atol=atol):
                raise ValueError("hard map pixel sums differ from 1")
            maxes = data.max(dim=0).values
            if not torch.allclose(maxes, torch.ones_like(maxes), atol=atol):
                raise ValueError("hard map pixels are not one-hot")


@dataclass
class WarpField:
    """Absolute source coordinates (row, column) per output pixel."""

    data: torch.Tensor  # (2, H, W)

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[0] != 2:
            raise ShapeMismatch(f"warp field must be (2, H, W), got {tuple(self.data.shape)}")

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass
class CoordinateMap:
    """A 2-D pixel location stored at every grid position."""

    data: torch.Tensor  # (2, H, W)

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[0] != 2:
            raise ShapeMismatch(
                f"coordinate map must be (2, H, W), got {tuple(self.data.shape)}"
            )


@dataclass
class LabelImage:
    """Integer label grid plus the label -> component-name palette."""

    labels: np.ndarray  # (H, W) integer grid
    palette: dict[int, str] = dc_field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 2:
            raise ShapeMismatch(f"label grid must be 2-D, got {self.labels.shape}")

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def category_names(self, C: int) -> tuple[str, ...]:
        return tuple(self.palette.get(c, f"component_{c}") for c in range(C))


def _coordinate_grid(H: int, W: int, dtype=torch.float32) -> torch.Tensor:
    rows = torch.arange(H, dtype=dtype).view(H, 1).expand(H, W)
    cols = torch.arange(W, dtype=dtype).view(1, W).expand(H, W)
    return torch.stack([rows, cols], dim=0)


def encode_one_hot(labels: LabelImage, C: int, categories: tuple[str, ...] | None = None,
                   dtype=torch.float32) -> ParsingMap:
    """One-hot encode a label grid into a hard C-channel parsing map."""
    grid = np.asarray(labels.labels)
    if grid.min() < 0 or grid.max() >= C:
        bad = np.argwhere((grid < 0) | (grid >= C))[0]
        raise InvalidLabel(
            f"label {int(grid[tuple(bad)])} at (row={int(bad[0])}, col={int(bad[1])}) "
            f"outside [0, {C})",
            row=int(bad[0]), col=int(bad[1]),
        )
    idx = torch.from_numpy(np.ascontiguousarray(grid)).long()
    onehot = torch.nn.functional.one_hot(idx, num_classes=C)  # (H, W, C)
    data = onehot.permute(2, 0, 1).to(dtype)
    if categories is None:
        categories = labels.category_names(C)
    return ParsingMap(data=data, categories=tuple(categories), hard=True)


def decode_argmax(pmap: ParsingMap) -> LabelImage:
    """Collapse a (possibly soft) map to labels; ties go to the lowest channel."""
    arr = pmap.data.detach().cpu().numpy()
    labels = np.argmax(arr, axis=0).astype(np.int64)  # np.argmax takes the first maximum
    palette = {c: name for c, name in enumerate(pmap.categories)}
    return LabelImage(labels=labels, palette=palette)


def identity_warp(H: int, W: int, dtype=torch.float32) -> WarpField:
    if H < 1 or W < 1:
        raise ShapeMismatch(f"identity field needs H, W >= 1, got {H}x{W}")
    return WarpField(data=_coordinate_grid(H, W, dtype=dtype))


def bilinear_warp(src: torch.Tensor, field: torch.Tensor) -> torch.Tensor:
    """Backward-warp ``src`` (..., C, Hs, Ws) by absolute source coordinates.

    ``field`` is (..., 2, Ho, Wo); its grid defines the output size and may
    differ from the source size. Entries outside the source rectangle are
    clamped to the edge. Differentiable with respect to both arguments.
    An integer-valued field reproduces the gathered pixels bit-exactly.
    """
    batched = src.ndim == 4
    if not batched:
        src = src.unsqueeze(0)
        field = field.unsqueeze(0)
    B, C, H, W = src.shape
    if field.ndim != 4 or field.shape[0] != B or field.shape[1] != 2:
        raise ShapeMismatch(
            f"field shape {tuple(field.shape)} does not match source {tuple(src.shape)}"
        )
    Ho, Wo = field.shape[2:]

    rows = field[:, 0].clamp(0, H - 1)
    cols = field[:, 1].clamp(0, W - 1)

    r0 = rows.detach().floor().clamp(0, max(H - 2, 0)).long()
    c0 = cols.detach().floor().clamp(0, max(W - 2, 0)).long()
    r1 = (r0 + 1).clamp(max=H - 1)
    c1 = (c0 + 1).clamp(max=W - 1)

    wr = (rows - r0).unsqueeze(1)  # (B, 1, Ho, Wo), carries the field gradient
    wc = (cols - c0).unsqueeze(1)

    flat = src.reshape(B, C, H * W)

    def gather(ri, ci):
        idx = (ri * W + ci).reshape(B, 1, Ho * Wo).expand(B, C, Ho * Wo)
        return flat.gather(2, idx).reshape(B, C, Ho, Wo)

    out = ((1 - wr) * (1 - wc) * gather(r0, c0) + (1 - wr) * wc * gather(r0, c1)
           + wr * (1 - wc) * gather(r1, c0) + wr * wc * gather(r1, c1))
    return out if batched else out.squeeze(0)


def warp(src: ParsingMap, field: WarpField) -> ParsingMap:
    """Bilinearly resample a parsing map through a warp field (soft output)."""
    if src.data.shape[1:] != field.data.shape[1:]:
        raise ShapeMismatch(
            f"map {tuple(src.data.shape[1:])} vs field {tuple(field.data.shape[1:])}"
        )
    out = bilinear_warp(src.data, field.data)
    return ParsingMap(data=out, categories=src.categories, hard=False)


def warp_coordinates(m: CoordinateMap, field: WarpField) -> CoordinateMap:
    """Transport a coordinate map through the same bilinear sampling as maps."""
    if m.data.shape[1:] != field.data.shape[1:]:
        raise ShapeMismatch(
            f"coordinate map {tuple(m.data.shape[1:])} vs field {tuple(field.data.shape[1:])}"
        )
    return CoordinateMap(data=bilinear_warp(m.data, field.data))


def fresh_coordinates(H: int, W: int, dtype=torch.float32) -> CoordinateMap:
    """Coordinate map holding each pixel's own (row, column) location."""
    return CoordinateMap(data=_coordinate_grid(H, W, dtype=dtype))


def component_centroid(pmap: ParsingMap, c: int) -> tuple[float, float]:
    """Mass-weighted mean location of channel c, normalized by H*W.

    Normalization is by the full pixel count, not the component size, so the
    value shrinks with small components; that is the form the location loss
    consumes. See ``component_mean_position`` for the size-normalized one.
    """
    x, y = _centroid_terms(pmap.data, c)
    return float(x), float(y)


def _centroid_terms(data: torch.Tensor, c: int):
    C, H, W = data.shape
    if not 0 <= c < C:
        raise InvalidLabel(f"channel {c} outside [0, {C})")
    grid = _coordinate_grid(H, W, dtype=data.dtype)
    denom = H * W
    x = (data[c] * grid[0]).sum() / denom
    y = (data[c] * grid[1]).sum() / denom
    return x, y


def component_mean_position(pmap: ParsingMap, c: int) -> tuple[float, float]:
    """Centroid normalized by component mass (unused by losses)."""
    x, y = _centroid_terms(pmap.data, c)
    mass = component_pixel_count(pmap, c) / (pmap.height * pmap.width)
    if mass == 0:
        return 0.0, 0.0
    return float(x / mass), float(y / mass)


def component_pixel_count(pmap: ParsingMap, c: int) -> float:
    C = pmap.num_categories
    if not 0 <= c < C:
        raise InvalidLabel(f"channel {c} outside [0, {C})")
    return float(pmap.data[c].sum())


def grid_deform(pmap: ParsingMap, controls) -> ParsingMap:
    """Deform a hard map by dragging control points.

    ``controls`` is a sequence of ``((row, col), (drow, dcol))`` pairs: the
    anchor and where the user moved it. A thin-plate spline interpolates the
    displacements into a dense backward field; labels are resampled by
    nearest neighbor so the result stays hard.
    """
    if not pmap.hard:
        raise ShapeMismatch("grid_deform requires a hard map")
    anchors = np.asarray([a for a, _ in controls], dtype=np.float64)
    disps = np.asarray([d for _, d in controls], dtype=np.float64)
    if anchors.ndim != 2 or anchors.shape[0] < 3 or anchors.shape[1] != 2:
        raise DegenerateGeometry(f"need >= 3 anchor points, got {anchors.shape}")
    if not (np.isfinite(anchors).all() and np.isfinite(disps).all()):
        raise DegenerateGeometry("anchors and displacements must be finite")
    _reject_collinear(anchors)

    # Backward TPS: interpolate target positions (anchor + displacement)
    # back to their source anchors, then evaluate at every output pixel.
    targets = anchors + disps
    _reject_collinear(targets)
    spline = fit_tps(targets, anchors)

    H, W = pmap.height, pmap.width
    grid = np.stack(np.meshgrid(np.arange(H), np.arange(W), indexing="ij"), axis=-1)
    sources = evaluate_tps(spline, grid.reshape(-1, 2).astype(np.float64))

    src_r = np.clip(np.rint(sources[:, 0]), 0, H - 1).astype(np.int64)
    src_c = np.clip(np.rint(sources[:, 1]), 0, W - 1).astype(np.int64)
    old_labels = decode_argmax(pmap).labels
    new_labels = old_labels[src_r, src_c].reshape(H, W)
    palette = {c: name for c, name in enumerate(pmap.categories)}
    return encode_one_hot(
        LabelImage(labels=new_labels, palette=palette),
        pmap.num_categories,
        categories=pmap.categories,
        dtype=pmap.data.dtype,
    )


def _reject_collinear(points: np.ndarray, tol: float = 1e-8) -> None:
    centered = points - points.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    scale = max(s[0], 1.0)
    if len(s) < 2 or s[1] <= tol * scale:
        raise DegenerateGeometry("anchor points are collinear")
