"""Thin-plate spline interpolation of 2-D point displacements."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry


def _kernel(r2: np.ndarray) -> np.ndarray:
    # U(r) = r^2 log(r) written on squared distances; U(0) = 0.
    out = np.zeros_like(r2)
    mask = r2 > 0
    out[mask] = 0.5 * r2[mask] * np.log(r2[mask])
    return out


@dataclass
class ThinPlateSpline:
    controls: np.ndarray   # (K, 2) interpolation sites
    weights: np.ndarray    # (K, 2) kernel weights per output dimension
    affine: np.ndarray     # (3, 2) rows: constant, x, y


def fit_tps(controls: np.ndarray, values: np.ndarray) -> ThinPlateSpline:
    """Fit f with f(controls[k]) = values[k] exactly (2-D in, 2-D out)."""
    controls = np.asarray(controls, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    K = controls.shape[0]
    d2 = ((controls[:, None, :] - controls[None, :, :]) ** 2).sum(-1)
    A = np.zeros((K + 3, K + 3))
    A[:K, :K] = _kernel(d2)
    P = np.concatenate([np.ones((K, 1)), controls], axis=1)  # (K, 3)
    A[:K, K:] = P
    A[K:, :K] = P.T
    rhs = np.zeros((K + 3, 2))
    rhs[:K] = values
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateGeometry(f"thin-plate system is singular: {exc}") from exc
    return ThinPlateSpline(controls=controls, weights=sol[:K], affine=sol[K:])


def evaluate_tps(spline: ThinPlateSpline, points: np.ndarray) -> np.ndarray:
    """Evaluate the fitted map at (N, 2) query points."""
    points = np.asarray(points, dtype=np.float64)
    d2 = ((points[:, None, :] - spline.controls[None, :, :]) ** 2).sum(-1)
    U = _kernel(d2)  # (N, K)
    poly = np.concatenate([np.ones((points.shape[0], 1)), points], axis=1)
    return U @ spline.weights + poly @ spline.affine
