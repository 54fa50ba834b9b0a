"""Central finite-difference oracle for gradient tests.

The oracle only ever calls the function forward; the analytic side comes
from autograd. Inputs must be resampled away from the non-smooth points of
|.|, max(., 0), and integer sampling coordinates before calling this.
"""

import numpy as np
import torch

H_STEP = 1e-6


def central_diff_grad(fn, x: torch.Tensor, h: float = H_STEP) -> torch.Tensor:
    """Gradient of scalar fn at x, one central difference per element."""
    grad = torch.zeros_like(x)
    flat_grad = grad.reshape(-1)
    for i in range(x.numel()):
        xp = x.detach().clone()
        xp.reshape(-1)[i] += h
        xm = x.detach().clone()
        xm.reshape(-1)[i] -= h
        flat_grad[i] = (float(fn(xp)) - float(fn(xm))) / (2 * h)
    return grad


def analytic_grad(fn, x: torch.Tensor) -> torch.Tensor:
    leaf = x.detach().clone().requires_grad_(True)
    value = fn(leaf)
    value.backward()
    return leaf.grad.detach().clone()


def rel_error(a: torch.Tensor, b: torch.Tensor) -> float:
    scale = max(float(a.abs().max()), float(b.abs().max()), 1e-10)
    return float((a - b).abs().max()) / scale


def check_gradient(fn, x: torch.Tensor, tol: float = 1e-4) -> float:
    """Returns the relative error; asserts it is within tolerance."""
    err = rel_error(analytic_grad(fn, x), central_diff_grad(fn, x))
    assert err < tol, f"gradient mismatch: rel error {err:.3e} >= {tol}"
    return err


# --- resampling helpers -----------------------------------------------------
# |.| and max(., 0) are non-smooth on measure-zero sets; finite differences
# straddle a kink whenever an input sits within the step h of one, so inputs
# are redrawn until they clear the kinks by a wide margin.

CLEAR = 100 * H_STEP


def sample_interior_field(rng, H, W, margin=0.15) -> torch.Tensor:
    """Random field strictly inside the image with fractional parts clear
    of 0 and 1 (the bilinear kinks)."""
    while True:
        field = rng.uniform(margin, H - 1 - margin, size=(2, H, W))
        frac = field - np.floor(field)
        if ((frac > CLEAR) & (frac < 1 - CLEAR)).all():
            return torch.from_numpy(field)


def sample_map_pair(rng, C, H, W) -> tuple[torch.Tensor, torch.Tensor]:
    """Map pair clear of the elementwise, centroid, and count kinks."""
    while True:
        a = rng.uniform(0.0, 1.0, size=(C, H, W))
        b = rng.uniform(0.0, 1.0, size=(C, H, W))
        if np.abs(a - b).min() <= CLEAR:
            continue
        counts_gap = np.abs(a.sum(axis=(1, 2)) - b.sum(axis=(1, 2))).min()
        rows = np.arange(H).reshape(-1, 1)
        cols = np.arange(W).reshape(1, -1)
        ax = (a * rows).sum(axis=(1, 2)) - (b * rows).sum(axis=(1, 2))
        ay = (a * cols).sum(axis=(1, 2)) - (b * cols).sum(axis=(1, 2))
        if counts_gap > 10 * CLEAR and np.abs(ax).min() > 10 * CLEAR \
                and np.abs(ay).min() > 10 * CLEAR:
            return torch.from_numpy(a), torch.from_numpy(b)


def sample_code_pair(rng, dim, distance: float) -> tuple[torch.Tensor, torch.Tensor]:
    """Codes at an exact Euclidean distance (clear of 0 and the margin)."""
    a = rng.standard_normal(dim)
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    return torch.from_numpy(a), torch.from_numpy(a + distance * direction)
