"""Training objectives for the shape transformer and the retrieval embedder.

All losses are differentiable torch expressions returning 0-dim tensors, so
they serve both the training loops and the finite-difference gradient tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import DimensionMismatch, EmptyInput, NonFiniteValue, ShapeMismatch
from .parsemap import CoordinateMap, ParsingMap, _coordinate_grid

RECIPROCAL_RATIO = "reciprocal-ratio"
UNIFORM = "uniform"


@dataclass
class LossConfig:
    """Weights and knobs shared by every objective.

    Defaults are the shipped values: location/count weights 2, overall
    reconstruction weight 500, contrastive margin 2.
    """

    lambda_l: float = 2.0
    lambda_n: float = 2.0
    lambda_r: float = 500.0
    margin_m: float = 2.0
    component_weight_mode: str = RECIPROCAL_RATIO
    epsilon_ratio: float = 1e-4

    def __post_init__(self):
        # lambda_l / lambda_n may be zeroed (term ablations); lambda_r may not
        if min(self.lambda_l, self.lambda_n) < 0 or self.lambda_r <= 0:
            raise ValueError("loss weights must be positive (term weights may be 0)")
        if self.margin_m <= 0:
            raise ValueError("margin must be positive")
        if not 0 < self.epsilon_ratio < 1:
            raise ValueError("epsilon_ratio must lie in (0, 1)")
        if self.component_weight_mode not in (RECIPROCAL_RATIO, UNIFORM):
            raise ValueError(f"unknown component weight mode {self.component_weight_mode!r}")


def _unwrap(m) -> torch.Tensor:
    return m.data if isinstance(m, (ParsingMap, CoordinateMap)) else torch.as_tensor(m)


def _paired(cari, fake) -> tuple[torch.Tensor, torch.Tensor]:
    a, b = _unwrap(cari), _unwrap(fake)
    if a.shape != b.shape:
        raise ShapeMismatch(f"map shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    return a, b


def rec_pixel(cari, fake) -> torch.Tensor:
    """Mean absolute per-pixel difference, averaged over all C*H*W entries."""
    a, b = _paired(cari, fake)
    return (a - b).abs().mean()


def _centroids(data: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    # Per-channel mean location normalized by H*W (not by component mass).
    C, H, W = data.shape
    grid = _coordinate_grid(H, W, dtype=data.dtype)
    x = (data * grid[0]).sum(dim=(1, 2)) / (H * W)
    y = (data * grid[1]).sum(dim=(1, 2)) / (H * W)
    return x, y


def rec_location(cari, fake) -> torch.Tensor:
    """Centroid alignment per component, averaged over channels."""
    a, b = _paired(cari, fake)
    xa, ya = _centroids(a)
    xb, yb = _centroids(b)
    return ((xb - xa).abs() + (yb - ya).abs()).mean()


def rec_count(cari, fake) -> torch.Tensor:
    """Per-component pixel-count difference, averaged over channels."""
    a, b = _paired(cari, fake)
    return (a.sum(dim=(1, 2)) - b.sum(dim=(1, 2))).abs().mean()


def component_weights(cari, cfg: LossConfig) -> torch.Tensor:
    """Per-channel weights from the target map's pixel ratios.

    Reciprocal-ratio mode puts weight 1/max(ratio, epsilon) on each channel
    so small components are not drowned out; the ratio always comes from the
    supervision target, never the prediction.
    """
    a = _unwrap(cari)
    C, H, W = a.shape
    if cfg.component_weight_mode == UNIFORM:
        return torch.ones(C, dtype=a.dtype)
    ratio = a.sum(dim=(1, 2)) / (H * W)
    return 1.0 / ratio.clamp(min=cfg.epsilon_ratio)


def rec_total(cari, fake, cfg: LossConfig | None = None) -> torch.Tensor:
    """Combined reconstruction objective with per-component weighting.

    Each channel contributes its slice of the pixel, location, and count
    terms (weighted by lambda_l / lambda_n), scaled by that channel's
    component weight. In uniform mode the sum collapses to
    rec_pixel + lambda_l * rec_location + lambda_n * rec_count.
    """
    cfg = cfg or LossConfig()
    a, b = _paired(cari, fake)
    C, H, W = a.shape

    per_pixel = (a - b).abs().sum(dim=(1, 2)) / (C * H * W)
    xa, ya = _centroids(a)
    xb, yb = _centroids(b)
    per_location = ((xb - xa).abs() + (yb - ya).abs()) / C
    per_count = (a.sum(dim=(1, 2)) - b.sum(dim=(1, 2))).abs() / C

    weights = component_weights(cari, cfg)
    per_channel = per_pixel + cfg.lambda_l * per_location + cfg.lambda_n * per_count
    return (weights * per_channel).sum()


def coordinate_loss(m_pho, m_cyc) -> torch.Tensor:
    """Mean L1 distance between transported and original pixel locations."""
    a, b = _paired(m_pho, m_cyc)
    if a.shape[0] != 2:
        raise ShapeMismatch("coordinate maps must have two channels")
    H, W = a.shape[1:]
    return (a - b).abs().sum() / (H * W)


def _code_tensor(z) -> torch.Tensor:
    if torch.is_tensor(z):
        return z
    if hasattr(z, "values") and not callable(z.values):  # ShapeCode-style wrapper
        z = z.values
    return torch.as_tensor(z)


def contrastive(z_a, z_b, positive: bool, cfg: LossConfig | None = None) -> torch.Tensor:
    """Euclidean pull for positives, margin-hinged push for negatives."""
    cfg = cfg or LossConfig()
    a, b = _code_tensor(z_a), _code_tensor(z_b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"code lengths differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    dist = torch.linalg.vector_norm(a - b)
    if positive:
        return dist
    return (cfg.margin_m - dist).clamp(min=0)


def wgan_critic_objective(real_scores, fake_scores) -> torch.Tensor:
    """The critic's minimization target: mean fake score minus mean real."""
    real = torch.as_tensor(real_scores, dtype=torch.get_default_dtype()) \
        if not torch.is_tensor(real_scores) else real_scores
    fake = torch.as_tensor(fake_scores, dtype=torch.get_default_dtype()) \
        if not torch.is_tensor(fake_scores) else fake_scores
    if real.numel() == 0 or fake.numel() == 0:
        raise EmptyInput("score batches must be non-empty")
    return fake.mean() - real.mean()


def wgan_generator_objective(fake_scores) -> torch.Tensor:
    fake = torch.as_tensor(fake_scores, dtype=torch.get_default_dtype()) \
        if not torch.is_tensor(fake_scores) else fake_scores
    if fake.numel() == 0:
        raise EmptyInput("score batch must be non-empty")
    return -fake.mean()


def shape_objective(terms, cfg: LossConfig | None = None) -> torch.Tensor:
    """Full generator objective: lambda_r * rec + adv + cyc + coo."""
    cfg = cfg or LossConfig()
    parts = {}
    for key in ("rec", "adv", "cyc", "coo"):
        if key not in terms:
            raise NonFiniteValue(f"missing objective term {key!r}")
        value = terms[key]
        if not torch.is_tensor(value):
            value = torch.as_tensor(float(value), dtype=torch.float64)
        if not torch.isfinite(value).all():
            raise NonFiniteValue(f"objective term {key!r} is non-finite")
        parts[key] = value
    return cfg.lambda_r * parts["rec"] + parts["adv"] + parts["cyc"] + parts["coo"]
