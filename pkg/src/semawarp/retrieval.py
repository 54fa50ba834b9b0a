"""Persistent gallery of caricature shape codes and exact top-k query.

The index binds itself to the encoder that produced the codes through a
content fingerprint of the checkpoint; querying with a different encoder is
rejected rather than silently returning meaningless distances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyInput, FingerprintMismatch, ShapeMismatch
from .nets import RetrievalModel, ShapeCode, model_fingerprint
from .parsemap import LabelImage, encode_one_hot

INDEX_MAGIC = "SEMAWARP-INDEX v1"


@dataclass
class IndexEntry:
    record_id: str
    code: np.ndarray
    map_path: str = ""


@dataclass
class GalleryIndex:
    entries: list[IndexEntry]
    code_dim: int
    fingerprint: str

    def __post_init__(self):
        ids = [e.record_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ConfigError("gallery record ids must be unique")
        for e in self.entries:
            e.code = np.asarray(e.code, dtype=np.float32).reshape(-1)
            if e.code.shape[0] != self.code_dim:
                raise ShapeMismatch(
                    f"record {e.record_id!r} code length {e.code.shape[0]} != {self.code_dim}"
                )

    def __len__(self) -> int:
        return len(self.entries)

    def code_matrix(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, self.code_dim), dtype=np.float32)
        return np.stack([e.code for e in self.entries])


def build_index(maps, model: RetrievalModel) -> GalleryIndex:
    """Encode each gallery caricature map into one index entry.

    ``maps`` items may be LabelImage, (record_id, LabelImage), or
    (record_id, LabelImage, map_path).
    """
    C = model.spec.in_channels
    entries = []
    for i, item in enumerate(maps):
        if isinstance(item, LabelImage):
            record_id, label_image, map_path = f"g{i:05d}", item, ""
        elif len(item) == 2:
            (record_id, label_image), map_path = item, ""
        else:
            record_id, label_image, map_path = item
        if (label_image.height, label_image.width) != (model.spec.height, model.spec.width):
            raise ShapeMismatch(
                f"record {record_id!r}: map {label_image.height}x{label_image.width} does not "
                f"match encoder {model.spec.height}x{model.spec.width}",
                record_id=record_id,
            )
        pmap = encode_one_hot(label_image, C)
        code = model.encode("caricature", pmap)
        entries.append(IndexEntry(record_id=str(record_id), code=code.values,
                                  map_path=str(map_path)))
    return GalleryIndex(entries=entries, code_dim=model.spec.code_dim,
                        fingerprint=model_fingerprint(model))


def query_by_code(index: GalleryIndex, code, k: int = 5) -> list[tuple[str, float]]:
    """Exact linear scan: ascending Euclidean distance, ties by record id."""
    if len(index) == 0:
        raise EmptyInput("gallery index is empty")
    if k < 1:
        raise ConfigError("k must be >= 1")
    q = np.asarray(code.values if isinstance(code, ShapeCode) else code,
                   dtype=np.float32).reshape(-1)
    if q.shape[0] != index.code_dim:
        raise ShapeMismatch(f"query code length {q.shape[0]} != {index.code_dim}")
    dists = np.linalg.norm(index.code_matrix() - q[None, :], axis=1)
    order = sorted(range(len(index)), key=lambda i: (dists[i], index.entries[i].record_id))
    return [(index.entries[i].record_id, float(dists[i])) for i in order[: min(k, len(index))]]


def query_top_k(index: GalleryIndex, photo_map: LabelImage, model: RetrievalModel,
                k: int = 5) -> list[tuple[str, float]]:
    """Encode a photo map and rank the gallery by embedding distance."""
    if index.fingerprint != model_fingerprint(model):
        raise FingerprintMismatch(
            "index was built with a different encoder checkpoint"
        )
    pmap = encode_one_hot(photo_map, model.spec.in_channels)
    code = model.encode("photo", pmap)
    return query_by_code(index, code, k=k)


def entry_by_id(index: GalleryIndex, record_id: str) -> IndexEntry:
    for e in index.entries:
        if e.record_id == record_id:
            return e
    raise ConfigError(f"no gallery record {record_id!r}")


def save_index(index: GalleryIndex, path) -> None:
    meta = json.dumps({
        "count": len(index),
        "code_dim": index.code_dim,
        "fingerprint": index.fingerprint,
    })
    table = "".join(f"{e.record_id}\t{e.map_path}\n" for e in index.entries)
    blob = (f"{INDEX_MAGIC}\n{meta}\n".encode("utf-8")
            + index.code_matrix().astype("<f4").tobytes(order="C")
            + table.encode("utf-8"))
    Path(path).write_bytes(blob)


def load_index(path) -> GalleryIndex:
    blob = Path(path).read_bytes()
    first = blob.index(b"\n")
    if blob[:first].decode("utf-8") != INDEX_MAGIC:
        raise ConfigError(f"not a {INDEX_MAGIC} file: {path}")
    second = blob.index(b"\n", first + 1)
    meta = json.loads(blob[first + 1: second].decode("utf-8"))
    count, dim = int(meta["count"]), int(meta["code_dim"])
    start = second + 1
    end = start + count * dim * 4
    codes = np.frombuffer(blob[start:end], dtype="<f4").reshape(count, dim)
    lines = blob[end:].decode("utf-8").splitlines()
    if len(lines) != count:
        raise ConfigError(f"index table has {len(lines)} rows, expected {count}")
    entries = []
    for i, line in enumerate(lines):
        record_id, _, map_path = line.partition("\t")
        entries.append(IndexEntry(record_id=record_id, code=codes[i].copy(),
                                  map_path=map_path))
    return GalleryIndex(entries=entries, code_dim=dim, fingerprint=meta["fingerprint"])
