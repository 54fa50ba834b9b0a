import numpy as np
import pytest
import torch

from semawarp.errors import ConfigError, DegenerateGeometry, ShapeMismatch
from semawarp.nets import ModelSpec, ShapeTransformer
from semawarp.parsemap import DEFAULT_CATEGORIES, LabelImage
from semawarp.pipeline import (AlignmentSpec, PipelineConfig, PipelineRuntime,
                               canonical_landmarks, ingest,
                               similarity_from_points, style_stub, transform_photo)
from semawarp.toydata import ToySpec, generate_toy_dataset

SPEC32 = ModelSpec(in_channels=11, height=32, width=32, code_dim=16,
                   block_widths=(8, 8, 8, 8))


def toy_photo(size=32, seed=5):
    ds = generate_toy_dataset(ToySpec(size=size, identity_count=1), seed=seed)
    s = ds.samples[0]
    rng = np.random.default_rng(seed)
    image = rng.integers(0, 256, size=(size, size, 3)).astype(np.uint8)
    palette = {i: n for i, n in enumerate(DEFAULT_CATEGORIES)}
    return image, LabelImage(s.photo_labels, palette), LabelImage(s.cari_labels, palette)


class TestSimilarity:
    def test_recovers_known_transform(self, rng):
        src = rng.uniform(10, 200, size=(17, 2))
        angle = 0.3
        R_true = np.array([[np.cos(angle), -np.sin(angle)],
                           [np.sin(angle), np.cos(angle)]])
        dst = 1.7 * src @ R_true.T + np.array([5.0, -12.0])
        scale, R, t = similarity_from_points(src, dst)
        assert scale == pytest.approx(1.7, rel=1e-9)
        assert np.allclose(R, R_true, atol=1e-9)
        assert np.allclose(t, [5.0, -12.0], atol=1e-7)

    def test_degenerate_rank_rejected(self):
        line = np.stack([np.linspace(0, 10, 17), np.linspace(0, 20, 17)], axis=1)
        with pytest.raises(DegenerateGeometry):
            similarity_from_points(line, line)


class TestAlignmentSpec:
    def test_requires_17_landmarks(self):
        with pytest.raises(ShapeMismatch):
            AlignmentSpec(landmarks=np.zeros((5, 2)))

    def test_requires_finite(self):
        lm = np.zeros((17, 2))
        lm[3] = np.nan
        with pytest.raises(DegenerateGeometry):
            AlignmentSpec(landmarks=lm)

    def test_canonical_template_shape(self):
        pts = canonical_landmarks(256, 256)
        assert pts.shape == (17, 2)
        assert pts.min() >= 0 and pts.max() <= 256


class TestIngest:
    def test_canonical_landmarks_identity(self, rng):
        size = 64
        image = rng.integers(0, 256, size=(size, size, 3)).astype(np.uint8)
        labels = LabelImage(rng.integers(0, 4, size=(size, size)))
        lm = canonical_landmarks(size, size)
        out_img, out_labels = ingest(image, labels, AlignmentSpec(landmarks=lm),
                                     size=size)
        assert np.array_equal(out_img, image)
        assert np.array_equal(out_labels.labels, labels.labels)

    def test_translation_equivariance(self, rng):
        size, pad = 48, 12
        base = rng.integers(0, 256, size=(size, size, 3)).astype(np.uint8)
        big = np.zeros((size + 2 * pad, size + 2 * pad, 3), dtype=np.uint8)
        big[pad:pad + size, pad:pad + size] = base
        labels_base = rng.integers(0, 4, size=(size, size))
        big_labels = np.zeros((size + 2 * pad, size + 2 * pad), dtype=int)
        big_labels[pad:pad + size, pad:pad + size] = labels_base

        lm = canonical_landmarks(size, size)
        out0, lab0 = ingest(big, LabelImage(big_labels),
                            AlignmentSpec(landmarks=lm + pad), size=size)
        shifted = np.roll(big, shift=(3, 5), axis=(0, 1))
        shifted_labels = np.roll(big_labels, shift=(3, 5), axis=(0, 1))
        out1, lab1 = ingest(shifted, LabelImage(shifted_labels),
                            AlignmentSpec(landmarks=lm + pad + np.array([3, 5])),
                            size=size)
        assert np.array_equal(out0, out1)
        assert np.array_equal(lab0.labels, lab1.labels)

    def test_default_output_size_is_256(self, rng):
        image = rng.integers(0, 256, size=(300, 300, 3)).astype(np.uint8)
        labels = LabelImage(rng.integers(0, 4, size=(300, 300)))
        lm = canonical_landmarks(256, 256) + 20
        out_img, out_labels = ingest(image, labels, AlignmentSpec(landmarks=lm))
        assert out_img.shape == (256, 256, 3)
        assert out_labels.labels.shape == (256, 256)
        assert PipelineConfig().image_size == 256

    def test_out_of_bounds_landmarks_rejected(self, rng):
        image = rng.integers(0, 256, size=(64, 64, 3)).astype(np.uint8)
        labels = LabelImage(rng.integers(0, 4, size=(64, 64)))
        lm = canonical_landmarks(64, 64)
        lm[0] = (200.0, 10.0)
        with pytest.raises(DegenerateGeometry):
            ingest(image, labels, AlignmentSpec(landmarks=lm), size=64)


class TestTransformPhoto:
    def test_identity_init_is_bit_exact(self, rng):
        torch.manual_seed(0)
        model = ShapeTransformer(SPEC32)
        image, photo_labels, cari_labels = toy_photo()
        out_img, fake, field = transform_photo(image, photo_labels, cari_labels, model)
        assert np.array_equal(out_img, image)
        assert out_img.dtype == image.dtype
        pred = fake.data.numpy().argmax(axis=0)
        assert np.array_equal(pred, photo_labels.labels)

    def test_checkpoint_size_mismatch(self, rng):
        model = ShapeTransformer(SPEC32)
        image, photo_labels, cari_labels = toy_photo(size=64)
        with pytest.raises(ShapeMismatch):
            transform_photo(image, photo_labels, cari_labels, model)

    def test_category_overflow_rejected(self, rng):
        spec = ModelSpec(in_channels=3, height=32, width=32, code_dim=16,
                         block_widths=(8, 8, 8, 8))
        model = ShapeTransformer(spec)
        image, photo_labels, cari_labels = toy_photo()
        with pytest.raises(ConfigError):
            transform_photo(image, photo_labels, cari_labels, model)


class TestStyleStub:
    def test_style_equals_content_is_identity(self, rng):
        img = rng.integers(0, 256, size=(16, 16, 3)).astype(np.uint8)
        assert np.array_equal(style_stub(img, img), img)

    def test_constant_gray_style_flattens(self, rng):
        content = rng.integers(0, 256, size=(16, 16, 3)).astype(np.uint8)
        style = np.full((16, 16, 3), 128, dtype=np.uint8)
        out = style_stub(content, style)
        assert out.astype(np.float64).std(axis=(0, 1)).max() <= 0.5

    def test_output_means_match_style(self, rng):
        content = rng.integers(0, 256, size=(32, 32, 3)).astype(np.uint8)
        style = rng.integers(30, 220, size=(32, 32, 3)).astype(np.uint8)
        out = style_stub(content, style)
        got = out.astype(np.float64).mean(axis=(0, 1))
        want = style.astype(np.float64).mean(axis=(0, 1))
        assert np.abs(got - want).max() <= 1.0

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeMismatch):
            style_stub(np.zeros((4, 4, 3)), np.zeros((5, 5, 3)))


class TestPipelineRuntime:
    def test_edit_zero_displacement_returns_input(self):
        torch.manual_seed(0)
        runtime = PipelineRuntime(PipelineConfig(), transformer=ShapeTransformer(SPEC32))
        _, photo_labels, _ = toy_photo()
        controls = [((2, 2), (0.0, 0.0)), ((2, 29), (0.0, 0.0)),
                    ((29, 2), (0.0, 0.0)), ((29, 29), (0.0, 0.0))]
        out = runtime.edit(photo_labels, controls)
        assert np.array_equal(out["labels"].labels, photo_labels.labels)
        assert set(out["component_counts"]) == set(DEFAULT_CATEGORIES)

    def test_transform_reports_counts(self):
        torch.manual_seed(0)
        runtime = PipelineRuntime(PipelineConfig(), transformer=ShapeTransformer(SPEC32))
        image, photo_labels, cari_labels = toy_photo()
        out = runtime.transform(image, photo_labels, cari_labels)
        counts = out["component_counts"]
        assert counts["background"] > 0
        assert sum(counts.values()) == pytest.approx(32 * 32, rel=1e-5)

    def test_interpolate_t0_equals_transform_with_first_reference(self):
        torch.manual_seed(0)
        model = ShapeTransformer(SPEC32)
        torch.nn.init.normal_(model.dec_forward.head_fine.weight, std=0.05)
        runtime = PipelineRuntime(PipelineConfig(), transformer=model)
        image, photo_labels, cari_labels = toy_photo()
        direct = runtime.transform(image, photo_labels, cari_labels)
        interp = runtime.interpolate(image, photo_labels, cari_labels,
                                     photo_labels, t=0.0)
        assert np.array_equal(direct["image"], interp["image"])
        assert np.array_equal(direct["fake_labels"].labels,
                              interp["fake_labels"].labels)

    def test_missing_component_is_reported(self):
        runtime = PipelineRuntime(PipelineConfig())
        _, photo_labels, _ = toy_photo()
        with pytest.raises(ConfigError):
            runtime.retrieve(photo_labels)
