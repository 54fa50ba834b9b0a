"""Procedural face-like parsing maps for desk-scale training and tests.

Each identity is a family of ellipse parameters (one ellipse per facial
component, painted back-to-front). A photo sample rasterizes the identity
with small jitter; the caricature sample additionally scales a few chosen
component groups by an exaggeration factor, the toy stand-in for artist
shape exaggeration.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigError
from .parsemap import DEFAULT_CATEGORIES

# Painter's order: later entries overwrite earlier ones.
DRAW_ORDER = (
    "hair", "skin", "left_brow", "right_brow", "left_eye", "right_eye",
    "nose", "upper_lip", "inner_mouth", "lower_lip",
)

# Exaggeration acts on whole groups so left/right parts stay symmetric.
PART_GROUPS = {
    "skin": ("skin",),
    "hair": ("hair",),
    "eyes": ("left_eye", "right_eye"),
    "brows": ("left_brow", "right_brow"),
    "nose": ("nose",),
    "mouth": ("upper_lip", "inner_mouth", "lower_lip"),
}

# Large structures take the strong exaggeration range; their long boundaries
# give the warp objective plenty of gradient support.
LARGE_GROUPS = ("skin", "hair")


def default_geometry() -> dict[str, dict[str, tuple[float, float]]]:
    """Per-part ellipse parameter ranges, in image-fraction units.

    Center ranges are kept narrow so components of any two identities
    overlap; that keeps every cross-identity warp reachable by the
    boundary-driven gradients of bilinear sampling.
    """

    def part(cr, cc, ar, ac, spread=0.015, scale=0.15):
        return {
            "center_row": (cr - spread, cr + spread),
            "center_col": (cc - spread, cc + spread),
            "axis_row": (ar * (1 - scale), ar * (1 + scale)),
            "axis_col": (ac * (1 - scale), ac * (1 + scale)),
        }

    return {
        "hair": part(0.26, 0.50, 0.26, 0.40),
        "skin": part(0.57, 0.50, 0.33, 0.29),
        "left_brow": part(0.40, 0.32, 0.040, 0.105),
        "right_brow": part(0.40, 0.68, 0.040, 0.105),
        "left_eye": part(0.51, 0.33, 0.058, 0.090),
        "right_eye": part(0.51, 0.67, 0.058, 0.090),
        "nose": part(0.63, 0.50, 0.105, 0.068),
        "upper_lip": part(0.79, 0.50, 0.034, 0.125),
        "inner_mouth": part(0.835, 0.50, 0.028, 0.100),
        "lower_lip": part(0.875, 0.50, 0.034, 0.115),
    }


@dataclass
class ToySpec:
    size: int = 64
    identity_count: int = 200
    samples_per_identity: int = 1
    jitter: float = 0.01
    exaggeration_range: tuple[float, float] = (1.6, 2.1)    # area growth, large parts
    small_exaggeration_range: tuple[float, float] = (1.1, 1.35)  # area growth, small parts
    aspect_range: tuple[float, float] = (1.0, 1.08)         # tall/flat distortion
    shift_fraction: float = 0.0                             # component displacement
    groups_per_identity: int = 6
    shared_factor: bool = False  # one growth factor per identity vs per group
    exaggerated_groups: tuple[str, ...] = ("skin", "nose", "eyes", "brows", "mouth", "hair")
    geometry: dict = dc_field(default_factory=default_geometry)

    def __post_init__(self):
        if self.size < 8 or self.identity_count < 1 or self.samples_per_identity < 1:
            raise ConfigError("size >= 8 and at least one identity/sample required")
        for name in ("exaggeration_range", "small_exaggeration_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ConfigError(f"bad {name} {getattr(self, name)}")
        for name, ranges in self.geometry.items():
            for key, (rlo, rhi) in ranges.items():
                if rlo > rhi:
                    raise ConfigError(f"{name}.{key} range is inverted")
                if key.startswith("axis") and rlo <= 0:
                    raise ConfigError(f"{name}.{key} must be positive")
        unknown = set(self.exaggerated_groups) - set(PART_GROUPS)
        if unknown:
            raise ConfigError(f"unknown exaggeration groups {sorted(unknown)}")


@dataclass
class ToySample:
    identity: int
    photo_labels: np.ndarray
    cari_labels: np.ndarray
    exaggerated: tuple[str, ...]


@dataclass
class ToyDataset:
    spec: ToySpec
    seed: int
    categories: tuple[str, ...]
    samples: list[ToySample]

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def num_categories(self) -> int:
        return len(self.categories)

    def identities(self) -> list[int]:
        return sorted({s.identity for s in self.samples})


def _rasterize(size: int, params: dict[str, tuple[float, float, float, float]]) -> np.ndarray:
    labels = np.zeros((size, size), dtype=np.uint8)
    rows = np.arange(size).reshape(-1, 1) + 0.5
    cols = np.arange(size).reshape(1, -1) + 0.5
    for name in DRAW_ORDER:
        cr, cc, ar, ac = params[name]
        mask = ((rows - cr * size) / (ar * size)) ** 2 \
            + ((cols - cc * size) / (ac * size)) ** 2 <= 1.0
        labels[mask] = DEFAULT_CATEGORIES.index(name)
    return labels


def _sample_identity(rng: np.random.Generator, spec: ToySpec) -> dict:
    base = {}
    for name, ranges in spec.geometry.items():
        base[name] = tuple(
            rng.uniform(*ranges[key])
            for key in ("center_row", "center_col", "axis_row", "axis_col")
        )
    groups = list(spec.exaggerated_groups)
    k = min(spec.groups_per_identity, len(groups))
    chosen = tuple(sorted(rng.choice(len(groups), size=k, replace=False).tolist()))
    shared_area = float(rng.uniform(*spec.exaggeration_range))
    distortions = {}
    for i in chosen:
        group = groups[i]
        aspect = rng.uniform(*spec.aspect_range)
        if rng.random() < 0.5:
            aspect = 1.0 / aspect  # flat rather than tall
        area_range = spec.exaggeration_range if group in LARGE_GROUPS \
            else spec.small_exaggeration_range
        area = shared_area if spec.shared_factor \
            else float(rng.uniform(*area_range))
        distortions[group] = {
            "area": area,
            "aspect": float(aspect),
            "shift": (float(rng.uniform(-spec.shift_fraction, spec.shift_fraction)),
                      float(rng.uniform(-spec.shift_fraction, spec.shift_fraction))),
        }
    return {"parts": base, "groups": tuple(groups[i] for i in chosen),
            "distortions": distortions}


def _with_jitter(rng, spec: ToySpec, parts: dict) -> dict:
    out = {}
    for name, (cr, cc, ar, ac) in parts.items():
        out[name] = (
            cr + rng.uniform(-spec.jitter, spec.jitter),
            cc + rng.uniform(-spec.jitter, spec.jitter),
            ar, ac,
        )
    return out


def _exaggerate(parts: dict, distortions: dict[str, dict]) -> dict:
    """Scale area, distort aspect, and shift each exaggerated group."""
    out = dict(parts)
    for group, d in distortions.items():
        row_f = np.sqrt(d["area"]) * d["aspect"]
        col_f = np.sqrt(d["area"]) / d["aspect"]
        dr, dc = d["shift"]
        for name in PART_GROUPS[group]:
            cr, cc, ar, ac = out[name]
            out[name] = (cr + dr, cc + dc, ar * row_f, ac * col_f)
    return out


def save_toy_dataset(dataset: ToyDataset, out_dir) -> None:
    """Write every sample as label PNG + sidecar plus a manifest table."""
    from pathlib import Path

    from .fileio import save_label_image
    from .parsemap import LabelImage

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    palette = {i: name for i, name in enumerate(dataset.categories)}
    C = dataset.num_categories
    lines = ["index\tidentity\tphoto\tcari\texaggerated"]
    for i, s in enumerate(dataset.samples):
        photo_name, cari_name = f"photo_{i:05d}.png", f"cari_{i:05d}.png"
        save_label_image(LabelImage(s.photo_labels, palette), out / photo_name, C=C)
        save_label_image(LabelImage(s.cari_labels, palette), out / cari_name, C=C)
        lines.append(f"{i}\t{s.identity}\t{photo_name}\t{cari_name}\t{','.join(s.exaggerated)}")
    (out / "manifest.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_toy_dataset(data_dir) -> ToyDataset:
    """Rebuild a dataset from a directory written by save_toy_dataset."""
    from pathlib import Path

    from .fileio import load_label_image

    root = Path(data_dir)
    lines = (root / "manifest.tsv").read_text(encoding="utf-8").splitlines()
    samples = []
    size = None
    for line in lines[1:]:
        _, identity, photo_name, cari_name, exaggerated = line.split("\t")
        photo, _ = load_label_image(root / photo_name)
        cari, _ = load_label_image(root / cari_name)
        size = photo.height
        samples.append(ToySample(
            identity=int(identity),
            photo_labels=np.asarray(photo.labels, dtype=np.uint8),
            cari_labels=np.asarray(cari.labels, dtype=np.uint8),
            exaggerated=tuple(g for g in exaggerated.split(",") if g),
        ))
    identities = {s.identity for s in samples}
    spec = ToySpec(size=size or 64, identity_count=max(len(identities), 1),
                   samples_per_identity=max(1, len(samples) // max(len(identities), 1)))
    return ToyDataset(spec=spec, seed=-1, categories=DEFAULT_CATEGORIES, samples=samples)


def generate_toy_dataset(spec: ToySpec, seed: int) -> ToyDataset:
    """Deterministically generate paired photo/caricature label maps."""
    rng = np.random.default_rng(seed)
    samples = []
    for identity in range(spec.identity_count):
        ident = _sample_identity(rng, spec)
        for _ in range(spec.samples_per_identity):
            photo_parts = _with_jitter(rng, spec, ident["parts"])
            cari_parts = _exaggerate(
                _with_jitter(rng, spec, ident["parts"]), ident["distortions"]
            )
            samples.append(ToySample(
                identity=identity,
                photo_labels=_rasterize(spec.size, photo_parts),
                cari_labels=_rasterize(spec.size, cari_parts),
                exaggerated=ident["groups"],
            ))
    return ToyDataset(spec=spec, seed=seed, categories=DEFAULT_CATEGORIES, samples=samples)
