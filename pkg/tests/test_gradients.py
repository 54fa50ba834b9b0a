"""Analytic (autograd) gradients against the central finite-difference oracle.

The exhaustive 100-instance sweeps live in the acceptance suite; this module
covers every differentiable surface at a lighter instance count.
"""

import numpy as np
import torch

from semawarp import losses as L
from semawarp.parsemap import bilinear_warp

from fdcheck import (check_gradient, sample_code_pair, sample_interior_field,
                     sample_map_pair)

N_INSTANCES = 15
H = W = 6


def test_warp_gradient_wrt_field(rng):
    for _ in range(N_INSTANCES):
        src = torch.from_numpy(rng.uniform(0, 1, size=(2, H, W)))
        field = sample_interior_field(rng, H, W)
        check_gradient(lambda f: bilinear_warp(src, f).sum(), field)


def test_warp_gradient_wrt_source(rng):
    for _ in range(N_INSTANCES):
        src = torch.from_numpy(rng.uniform(0, 1, size=(2, H, W)))
        field = sample_interior_field(rng, H, W)
        check_gradient(lambda s: bilinear_warp(s, field).sum(), src)


def test_warp_gradient_random_projection(rng):
    # a random linear functional of the output catches sign errors that the
    # plain sum would cancel out
    for _ in range(5):
        src = torch.from_numpy(rng.uniform(0, 1, size=(2, H, W)))
        field = sample_interior_field(rng, H, W)
        weights = torch.from_numpy(rng.standard_normal((2, H, W)))
        check_gradient(lambda f: (bilinear_warp(src, f) * weights).sum(), field)
        check_gradient(lambda s: (bilinear_warp(s, field) * weights).sum(), src)


def test_warp_coordinates_gradient(rng):
    for _ in range(N_INSTANCES):
        coords = torch.from_numpy(rng.uniform(0, H - 1, size=(2, H, W)))
        field = sample_interior_field(rng, H, W)
        check_gradient(lambda f: bilinear_warp(coords, f).sum(), field)
        check_gradient(lambda m: bilinear_warp(m, field).sum(), coords)


def test_rec_pixel_gradients(rng):
    for _ in range(N_INSTANCES):
        a, b = sample_map_pair(rng, 3, H, W)
        check_gradient(lambda x: L.rec_pixel(x, b), a)
        check_gradient(lambda x: L.rec_pixel(a, x), b)


def test_rec_location_gradients(rng):
    for _ in range(N_INSTANCES):
        a, b = sample_map_pair(rng, 3, H, W)
        check_gradient(lambda x: L.rec_location(x, b), a)
        check_gradient(lambda x: L.rec_location(a, x), b)


def test_rec_count_gradients(rng):
    for _ in range(N_INSTANCES):
        a, b = sample_map_pair(rng, 3, H, W)
        check_gradient(lambda x: L.rec_count(x, b), a)
        check_gradient(lambda x: L.rec_count(a, x), b)


def test_rec_total_gradients_both_modes(rng):
    for mode in (L.RECIPROCAL_RATIO, L.UNIFORM):
        cfg = L.LossConfig(component_weight_mode=mode)
        for _ in range(N_INSTANCES // 2):
            a, b = sample_map_pair(rng, 3, H, W)
            check_gradient(lambda x: L.rec_total(x, b, cfg), a)
            check_gradient(lambda x: L.rec_total(a, x, cfg), b)


def test_coordinate_loss_gradients(rng):
    for _ in range(N_INSTANCES):
        a, b = sample_map_pair(rng, 2, H, W)
        check_gradient(lambda x: L.coordinate_loss(x, b), a)
        check_gradient(lambda x: L.coordinate_loss(a, x), b)


def test_contrastive_gradients(rng):
    cfg = L.LossConfig()
    for _ in range(N_INSTANCES):
        a, b = sample_code_pair(rng, 16, distance=1.3)
        check_gradient(lambda x: L.contrastive(x, b, True, cfg), a)
        check_gradient(lambda x: L.contrastive(a, x, True, cfg), b)
        # negative branch, inside the margin so the hinge is active
        a2, b2 = sample_code_pair(rng, 16, distance=0.6 * cfg.margin_m)
        check_gradient(lambda x: L.contrastive(x, b2, False, cfg), a2)


def test_warp_chain_gradient(rng):
    # the training composition: loss(target, warp(src, field)) wrt the field
    for _ in range(5):
        src = torch.from_numpy(rng.uniform(0, 1, size=(2, H, W)))
        tgt = torch.from_numpy(rng.uniform(0, 1, size=(2, H, W)))
        field = sample_interior_field(rng, H, W)

        def chain(f):
            out = bilinear_warp(src, f)
            if float((out - tgt).abs().min().detach()) < 1e-4:
                raise AssertionError("resample: output touched a kink")
            return L.rec_pixel(tgt, out)

        check_gradient(chain, field)
