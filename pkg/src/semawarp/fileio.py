"""On-disk formats for label images and warp fields.

Label images are stored as 8-bit single-channel PNG plus a UTF-8 sidecar
(`<stem>.txt`) carrying the palette and grid size. Warp fields are a text
header line ``SEMAWARP-FIELD v1 H W`` followed by the raw little-endian
float32 payload, channel 0 (rows) first, row-major.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .errors import ConfigError, InvalidLabel
from .parsemap import LabelImage, WarpField

FIELD_MAGIC = "SEMAWARP-FIELD v1"
LABEL_FORMAT = "SEMAWARP-LABELS v1"


def sidecar_path(image_path) -> Path:
    return Path(image_path).with_suffix(".txt")


def label_image_to_png_bytes(label_image: LabelImage) -> bytes:
    labels = np.asarray(label_image.labels)
    if labels.min() < 0 or labels.max() > 255:
        raise InvalidLabel("labels must fit in 8 bits for PNG export")
    buf = io.BytesIO()
    Image.fromarray(labels.astype(np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def label_image_from_png_bytes(data: bytes, palette: dict[int, str] | None = None) -> LabelImage:
    img = Image.open(io.BytesIO(data))
    if img.mode != "L":
        img = img.convert("L")
    return LabelImage(labels=np.asarray(img, dtype=np.int64), palette=dict(palette or {}))


def save_label_image(label_image: LabelImage, path, C: int | None = None) -> None:
    path = Path(path)
    path.write_bytes(label_image_to_png_bytes(label_image))
    if C is None:
        C = int(np.max(label_image.labels)) + 1 if label_image.labels.size else 0
        C = max(C, len(label_image.palette))
    lines = [
        f"format = {LABEL_FORMAT}",
        f"C = {C}",
        f"H = {label_image.height}",
        f"W = {label_image.width}",
    ]
    for label in range(C):
        name = label_image.palette.get(label, f"component_{label}")
        lines.append(f"label.{label} = {name}")
    sidecar_path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_label_image(path) -> tuple[LabelImage, int]:
    """Read a label PNG plus sidecar; returns (label image, C)."""
    path = Path(path)
    meta = _parse_keyvalues(sidecar_path(path).read_text(encoding="utf-8"))
    if meta.get("format") != LABEL_FORMAT:
        raise ConfigError(f"unexpected sidecar format {meta.get('format')!r}")
    C = int(meta["C"])
    palette = {}
    for key, value in meta.items():
        if key.startswith("label."):
            palette[int(key.split(".", 1)[1])] = value
    label_image = label_image_from_png_bytes(path.read_bytes(), palette=palette)
    if (label_image.height, label_image.width) != (int(meta["H"]), int(meta["W"])):
        raise ConfigError("sidecar H/W disagree with the PNG")
    if label_image.labels.size and label_image.labels.max() >= C:
        raise InvalidLabel(f"label {int(label_image.labels.max())} outside [0, {C})")
    return label_image, C


def _parse_keyvalues(text: str) -> dict[str, str]:
    out = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"malformed key/value line: {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def save_image(image: np.ndarray, path) -> None:
    Image.fromarray(np.asarray(image)).save(path)


def load_image(path) -> np.ndarray:
    img = Image.open(path)
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB")
    return np.asarray(img)


def image_to_png_bytes(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image)).save(buf, format="PNG")
    return buf.getvalue()


def image_from_png_bytes(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data))
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB")
    return np.asarray(img)


def save_warp_field(field: WarpField, path) -> None:
    arr = field.data.detach().cpu().numpy().astype("<f4")
    header = f"{FIELD_MAGIC} {field.height} {field.width}\n".encode("ascii")
    Path(path).write_bytes(header + arr.tobytes(order="C"))


def load_warp_field(path) -> WarpField:
    blob = Path(path).read_bytes()
    newline = blob.index(b"\n")
    header = blob[:newline].decode("ascii")
    parts = header.rsplit(" ", 2)
    if len(parts) != 3 or parts[0] != FIELD_MAGIC:
        raise ConfigError(f"bad warp field header {header!r}")
    H, W = int(parts[1]), int(parts[2])
    body = blob[newline + 1:]
    if len(body) != 2 * H * W * 4:
        raise ConfigError(f"warp field payload has {len(body)} bytes, expected {2 * H * W * 4}")
    payload = np.frombuffer(body, dtype="<f4")
    data = torch.from_numpy(payload.reshape(2, H, W).copy())
    return WarpField(data=data)
