import numpy as np
import pytest

from semawarp.errors import ConfigError
from semawarp.parsemap import LabelImage, encode_one_hot
from semawarp.toydata import (PART_GROUPS, ToySpec, generate_toy_dataset,
                              load_toy_dataset, save_toy_dataset)

SMALL = ToySpec(size=32, identity_count=6, samples_per_identity=2)


def test_same_seed_is_byte_identical():
    a = generate_toy_dataset(SMALL, seed=11)
    b = generate_toy_dataset(SMALL, seed=11)
    assert len(a) == len(b) == 12
    for sa, sb in zip(a.samples, b.samples):
        assert sa.identity == sb.identity
        assert np.array_equal(sa.photo_labels, sb.photo_labels)
        assert np.array_equal(sa.cari_labels, sb.cari_labels)
        assert sa.exaggerated == sb.exaggerated


def test_different_seed_differs():
    a = generate_toy_dataset(SMALL, seed=11)
    b = generate_toy_dataset(SMALL, seed=12)
    assert any(not np.array_equal(sa.photo_labels, sb.photo_labels)
               for sa, sb in zip(a.samples, b.samples))


def test_every_map_is_hard():
    ds = generate_toy_dataset(SMALL, seed=5)
    for s in ds.samples:
        for grid in (s.photo_labels, s.cari_labels):
            pm = encode_one_hot(LabelImage(grid), ds.num_categories)
            pm.validate()


def test_exaggerated_component_count_differs():
    ds = generate_toy_dataset(ToySpec(size=64, identity_count=20), seed=3)
    for s in ds.samples:
        parts = [p for g in s.exaggerated for p in PART_GROUPS[g]]
        assert any(
            (s.photo_labels == ds.categories.index(p)).sum()
            != (s.cari_labels == ds.categories.index(p)).sum()
            for p in parts
        ), f"identity {s.identity}: no count change on {parts}"


def test_identities_have_photo_and_cari():
    ds = generate_toy_dataset(SMALL, seed=5)
    assert ds.identities() == list(range(6))
    for s in ds.samples:
        assert s.photo_labels.shape == (32, 32)
        assert s.cari_labels.shape == (32, 32)


def test_infeasible_ranges_rejected():
    with pytest.raises(ConfigError):
        ToySpec(exaggeration_range=(2.0, 1.0))
    with pytest.raises(ConfigError):
        ToySpec(identity_count=0)
    geo = {"skin": {"center_row": (0.5, 0.4), "center_col": (0.5, 0.5),
                    "axis_row": (0.1, 0.2), "axis_col": (0.1, 0.2)}}
    with pytest.raises(ConfigError):
        ToySpec(geometry=geo)


def test_save_load_round_trip(tmp_path):
    ds = generate_toy_dataset(SMALL, seed=9)
    save_toy_dataset(ds, tmp_path / "toy")
    back = load_toy_dataset(tmp_path / "toy")
    assert len(back) == len(ds)
    for sa, sb in zip(ds.samples, back.samples):
        assert sa.identity == sb.identity
        assert np.array_equal(sa.photo_labels, sb.photo_labels)
        assert np.array_equal(sa.cari_labels, sb.cari_labels)
        assert sa.exaggerated == sb.exaggerated
