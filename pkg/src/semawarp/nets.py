"""Encoders, warp decoder, critic, and retrieval autoencoder.

The shape transformer encodes photo and caricature parsing maps with two
independent dense-block encoders into 128-d codes, concatenates them, and
decodes a dense residual flow on top of the identity field. The residual
passes through tanh scaled to half the image extent, and the final head is
zero-initialized, so an untrained model warps with the exact identity.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, DimensionMismatch, ShapeMismatch
from .parsemap import ParsingMap, WarpField, identity_warp

CHECKPOINT_MAGIC = "SEMAWARP-CKPT v1"


@dataclass
class ShapeCode:
    """Compact embedding of one parsing map's facial structure."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32).reshape(-1)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass
class ModelSpec:
    """Architecture knobs; defaults are sized for desk-scale CPU runs."""

    in_channels: int = 11
    height: int = 64
    width: int = 64
    code_dim: int = 128
    n_blocks: int = 4
    block_widths: tuple[int, ...] = (16, 24, 32, 40)
    growth: int = 4
    layers_per_block: int = 2
    flow_bound: float | None = None  # None -> half the larger image extent
    cycle_decoder: str = "separate"  # or "shared"

    def __post_init__(self):
        if self.n_blocks < 1 or self.code_dim < 1:
            raise ConfigError("n_blocks and code_dim must be >= 1")
        if len(self.block_widths) != self.n_blocks:
            raise ConfigError(f"need {self.n_blocks} block widths, got {len(self.block_widths)}")
        stride = 2 ** (self.n_blocks + 1)
        if self.height % stride or self.width % stride:
            raise ConfigError(
                f"H and W must be divisible by {stride} for {self.n_blocks} blocks"
            )
        if self.cycle_decoder not in ("separate", "shared"):
            raise ConfigError(f"unknown cycle decoder mode {self.cycle_decoder!r}")
        self.block_widths = tuple(int(w) for w in self.block_widths)

    @property
    def effective_flow_bound(self) -> float:
        if self.flow_bound is not None:
            return float(self.flow_bound)
        return 0.5 * max(self.height, self.width)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["block_widths"] = tuple(d["block_widths"])
        return cls(**d)


class DenseBlock(nn.Module):
    """Concatenative conv stack; output width grows by layers * growth."""

    def __init__(self, in_ch: int, growth: int, n_layers: int):
        super().__init__()
        self.convs = nn.ModuleList()
        ch = in_ch
        for _ in range(n_layers):
            self.convs.append(nn.Conv2d(ch, growth, 3, padding=1))
            ch += growth
        self.out_channels = ch

    def forward(self, x):
        for conv in self.convs:
            x = torch.cat([x, F.relu(conv(x))], dim=1)
        return x


class MapEncoder(nn.Module):
    """Dense blocks with stride-2 transitions, flattened to a code vector."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        stages = []
        stages.append(nn.Conv2d(spec.in_channels, spec.block_widths[0], 3, stride=2, padding=1))
        stages.append(nn.ReLU(inplace=True))
        ch = spec.block_widths[0]
        for width in spec.block_widths:
            block = DenseBlock(ch, spec.growth, spec.layers_per_block)
            stages.append(block)
            stages.append(nn.Conv2d(block.out_channels, width, 3, stride=2, padding=1))
            stages.append(nn.ReLU(inplace=True))
            ch = width
        self.features = nn.Sequential(*stages)
        grid_h = spec.height // (2 ** (spec.n_blocks + 1))
        grid_w = spec.width // (2 ** (spec.n_blocks + 1))
        self.flatten_dim = ch * grid_h * grid_w
        self.fc = nn.Linear(self.flatten_dim, spec.code_dim)

    def forward(self, x):  # (B, C, H, W) -> (B, code_dim)
        h = self.features(x)
        return self.fc(h.flatten(1))


class _UpStack(nn.Module):
    """Code to feature grids via transposed convolutions.

    ``forward`` returns every intermediate resolution (coarse to fine), the
    last at half the image resolution.
    """

    def __init__(self, spec: ModelSpec, in_dim: int):
        super().__init__()
        self.grid_h = spec.height // (2 ** (spec.n_blocks + 1))
        self.grid_w = spec.width // (2 ** (spec.n_blocks + 1))
        widths = list(reversed(spec.block_widths))
        self.start_ch = widths[0]
        self.fc = nn.Linear(in_dim, self.start_ch * self.grid_h * self.grid_w)
        self.ups = nn.ModuleList()
        ch = self.start_ch
        self.stage_channels = []
        for width in widths[1:] + [widths[-1]]:
            self.ups.append(nn.ConvTranspose2d(ch, width, 4, stride=2, padding=1))
            ch = width
            self.stage_channels.append(ch)
        self.out_channels = ch

    def forward(self, z):  # (B, in_dim) -> list of (B, ch_i, h_i, w_i)
        h = F.relu(self.fc(z))
        h = h.view(-1, self.start_ch, self.grid_h, self.grid_w)
        stages = []
        for up in self.ups:
            h = F.relu(up(h))
            stages.append(h)
        return stages


class WarpDecoder(nn.Module):
    """Predicts a dense flow residual from a (source, target) code pair.

    The decoder sees the two codes plus their difference; the difference
    carries no new information but shortens the path to learning
    target-relative-to-source deformations.
    """

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.up = _UpStack(spec, 3 * spec.code_dim)
        self.head = nn.Conv2d(self.up.out_channels, 2, 3, padding=1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, z_src, z_tgt):  # (B, D), (B, D) -> (B, 2, H, W) fields
        spec = self.spec
        h = self.up(torch.cat([z_src, z_tgt, z_tgt - z_src], dim=1))[-1]
        flow = torch.tanh(self.head(h)) * spec.effective_flow_bound
        flow = F.interpolate(flow, size=(spec.height, spec.width),
                             mode="bilinear", align_corners=False)
        identity = identity_warp(spec.height, spec.width, dtype=flow.dtype).data
        return identity.to(flow.device) + flow


class RetrievalDecoder(nn.Module):
    """Reconstructs a parsing map from a single shape code."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.up = _UpStack(spec, spec.code_dim)
        self.head = nn.ConvTranspose2d(self.up.out_channels, spec.in_channels, 4,
                                       stride=2, padding=1)

    def forward(self, z):  # (B, D) -> (B, C, H, W) in [0, 1]
        return torch.sigmoid(self.head(self.up(z)[-1]))


class Critic(nn.Module):
    """Scalar realism score for parsing maps, trained Wasserstein-style."""

    def __init__(self, spec: ModelSpec, widths: tuple[int, ...] = (16, 32, 32)):
        super().__init__()
        layers = []
        ch = spec.in_channels
        for width in widths:
            layers.append(nn.Conv2d(ch, width, 3, stride=2, padding=1))
            layers.append(nn.LeakyReLU(0.2, inplace=True))
            ch = width
        self.features = nn.Sequential(*layers)
        down = 2 * 2 ** len(widths)  # input average pool plus the conv strides
        if spec.height % down or spec.width % down:
            raise ConfigError(f"critic needs H, W divisible by {down}")
        self.fc = nn.Linear(ch * (spec.height // down) * (spec.width // down), 1)
        self.spec = spec

    def forward(self, x):  # (B, C, H, W) -> (B,)
        h = F.avg_pool2d(x, 2)
        h = self.features(h)
        return self.fc(h.flatten(1)).squeeze(1)

    def score(self, pmap: ParsingMap) -> float:
        _check_map(self.spec, pmap)
        self.eval()
        with torch.no_grad():
            return float(self.forward(pmap.data.float().unsqueeze(0))[0])


def clip_parameters(module: nn.Module, clip: float) -> None:
    """In-place clamp of every parameter to [-clip, clip]."""
    with torch.no_grad():
        for p in module.parameters():
            p.clamp_(-clip, clip)


def _check_map(spec: ModelSpec, pmap: ParsingMap) -> None:
    expected = (spec.in_channels, spec.height, spec.width)
    if tuple(pmap.data.shape) != expected:
        raise ShapeMismatch(f"map shape {tuple(pmap.data.shape)} does not match spec {expected}")


def _check_code(spec: ModelSpec, z) -> torch.Tensor:
    values = z.values if isinstance(z, ShapeCode) else z
    t = torch.as_tensor(values, dtype=torch.float32).reshape(-1)
    if t.shape[0] != spec.code_dim:
        raise DimensionMismatch(f"code length {t.shape[0]} != {spec.code_dim}")
    return t


class ShapeTransformer(nn.Module):
    """Photo/caricature encoders plus forward and cycle warp decoders."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.enc_photo = MapEncoder(spec)
        self.enc_cari = MapEncoder(spec)
        self.dec_forward = WarpDecoder(spec)
        if spec.cycle_decoder == "shared":
            self.dec_cycle = self.dec_forward
        else:
            self.dec_cycle = WarpDecoder(spec)

    def encoder(self, domain: str) -> MapEncoder:
        if domain == "photo":
            return self.enc_photo
        if domain == "caricature":
            return self.enc_cari
        raise ConfigError(f"unknown encoder domain {domain!r}")

    def encode(self, domain: str, pmap: ParsingMap) -> ShapeCode:
        _check_map(self.spec, pmap)
        enc = self.encoder(domain)
        enc.eval()
        with torch.no_grad():
            z = enc(pmap.data.float().unsqueeze(0))[0]
        return ShapeCode(values=z.numpy())

    def decode_warp(self, z_src, z_tgt, direction: str = "forward") -> WarpField:
        a = _check_code(self.spec, z_src)
        b = _check_code(self.spec, z_tgt)
        dec = self.dec_forward if direction == "forward" else self.dec_cycle
        dec.eval()
        with torch.no_grad():
            field = dec(a.unsqueeze(0), b.unsqueeze(0))[0]
        return WarpField(data=field)


class RetrievalModel(nn.Module):
    """Contrastive photo/caricature embedders with a map-reconstruction head."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.enc_photo = MapEncoder(spec)
        self.enc_cari = MapEncoder(spec)
        self.decoder = RetrievalDecoder(spec)

    def encoder(self, domain: str) -> MapEncoder:
        if domain in ("photo", "retrieval-photo"):
            return self.enc_photo
        if domain in ("caricature", "retrieval-caricature"):
            return self.enc_cari
        raise ConfigError(f"unknown encoder domain {domain!r}")

    def encode(self, domain: str, pmap: ParsingMap) -> ShapeCode:
        _check_map(self.spec, pmap)
        enc = self.encoder(domain)
        enc.eval()
        with torch.no_grad():
            z = enc(pmap.data.float().unsqueeze(0))[0]
        return ShapeCode(values=z.numpy())

    def retrieval_decode(self, z, categories: tuple[str, ...] | None = None) -> ParsingMap:
        t = _check_code(self.spec, z)
        self.decoder.eval()
        with torch.no_grad():
            out = self.decoder(t.unsqueeze(0))[0]
        if categories is None:
            categories = tuple(f"component_{c}" for c in range(self.spec.in_channels))
        return ParsingMap(data=out, categories=categories, hard=False)


def state_fingerprint(state_dict: dict) -> str:
    """Stable content hash of a parameter state dict."""
    digest = hashlib.sha256()
    for name in sorted(state_dict):
        digest.update(name.encode())
        tensor = state_dict[name].detach().cpu().contiguous()
        digest.update(str(tensor.dtype).encode())
        digest.update(np.asarray(tensor).tobytes())
    return digest.hexdigest()


def model_fingerprint(model: nn.Module) -> str:
    return state_fingerprint(model.state_dict())


def save_checkpoint(path, kind: str, spec: ModelSpec, states: dict,
                    step: int = 0, seed: int = 0, extra: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_MAGIC,
        "kind": kind,
        "model_spec": spec.to_dict(),
        "step": int(step),
        "seed": int(seed),
        "states": states,
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_MAGIC:
        raise ConfigError(f"not a {CHECKPOINT_MAGIC} checkpoint: {path}")
    return payload


def load_shape_transformer(path) -> tuple[ShapeTransformer, dict]:
    payload = load_checkpoint(path)
    if payload["kind"] != "shape":
        raise ConfigError(f"expected a shape checkpoint, got {payload['kind']!r}")
    spec = ModelSpec.from_dict(payload["model_spec"])
    model = ShapeTransformer(spec)
    model.load_state_dict(payload["states"]["transformer"])
    model.eval()
    return model, payload


def load_retrieval_model(path) -> tuple[RetrievalModel, dict]:
    payload = load_checkpoint(path)
    if payload["kind"] != "retrieval":
        raise ConfigError(f"expected a retrieval checkpoint, got {payload['kind']!r}")
    spec = ModelSpec.from_dict(payload["model_spec"])
    model = RetrievalModel(spec)
    model.load_state_dict(payload["states"]["model"])
    model.eval()
    return model, payload
