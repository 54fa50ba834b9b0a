"""Semantic parsing-map shape transformation toolkit."""

__version__ = "0.1.0"

from .losses import LossConfig
from .nets import ModelSpec, ShapeCode
from .parsemap import (CoordinateMap, LabelImage, ParsingMap, WarpField,
                       component_centroid, component_pixel_count, decode_argmax,
                       encode_one_hot, grid_deform, identity_warp, warp,
                       warp_coordinates)
from .train import TrainSchedule

__all__ = [
    "LossConfig", "ModelSpec", "ShapeCode", "TrainSchedule",
    "CoordinateMap", "LabelImage", "ParsingMap", "WarpField",
    "component_centroid", "component_pixel_count", "decode_argmax",
    "encode_one_hot", "grid_deform", "identity_warp", "warp",
    "warp_coordinates",
]
