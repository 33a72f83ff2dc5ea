import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridrep.datamodel import Box, ImageRecord
from hybridrep.extractors import (
    ExtractorSpec,
    StoreExtractor,
    SyntheticExtractor,
    grid_side,
    make_extractor,
)
from hybridrep.datamodel import write_feature_store, FeatureTensor


def record(pixels, rid="img0"):
    return ImageRecord(id=rid, label=0, pixels=pixels)


@pytest.fixture
def noisy_image():
    rng = np.random.default_rng(7)
    return record(rng.integers(0, 256, size=(256, 256, 3), dtype=np.uint8))


@pytest.fixture
def extractor():
    return SyntheticExtractor(ExtractorSpec(kind="synthetic", d=16, seed=3))


class TestSynthetic:
    def test_region_deterministic(self, extractor, noisy_image):
        box = Box(10, 10, 100, 100)
        a = extractor.extract_region(noisy_image, box)
        b = extractor.extract_region(noisy_image, box)
        np.testing.assert_array_equal(a, b)

    def test_black_patch_is_zero(self, extractor):
        img = record(np.zeros((256, 256, 3), dtype=np.uint8))
        out = extractor.extract_region(img, Box(0, 0, 64, 64))
        np.testing.assert_array_equal(out, np.zeros(16, dtype=np.float32))

    def test_identical_pixels_identical_features(self, extractor, noisy_image):
        twin = record(noisy_image.pixels.copy(), rid="img1")
        box = Box(5, 5, 80, 80)
        np.testing.assert_array_equal(
            extractor.extract_region(noisy_image, box),
            extractor.extract_region(twin, box),
        )

    def test_region_clamped_nonnegative(self, extractor, noisy_image):
        out = extractor.extract_region(noisy_image, Box(0, 0, 128, 128))
        assert np.all(out >= 0)

    def test_out_of_bounds_rejected(self, extractor, noisy_image):
        with pytest.raises(ValueError):
            extractor.extract_region(noisy_image, Box(200, 200, 300, 300))

    @pytest.mark.parametrize("square,expected", [(128, 5), (92, 6), (64, 7)])
    def test_grid_shape(self, extractor, noisy_image, square, expected):
        t = extractor.extract_dense_grid(noisy_image, square, 32)
        assert t.h == t.w == expected
        assert t.d == 16

    def test_grid_positions_match_regions(self, extractor, noisy_image):
        t = extractor.extract_dense_grid(noisy_image, 128, 32)
        direct = extractor.extract_region(noisy_image, Box(32, 64, 160, 192))
        np.testing.assert_array_equal(t.data[:, 2, 1], direct)

    def test_conv_deterministic(self, extractor, noisy_image):
        a = extractor.extract_conv(noisy_image, 1.0)
        b = extractor.extract_conv(noisy_image, 1.0)
        np.testing.assert_array_equal(a.data, b.data)

    def test_conv_monotone_scale(self, extractor, noisy_image):
        sizes = [
            extractor.extract_conv(noisy_image, s).h
            for s in (1.0, np.sqrt(2), 2.0, 2 * np.sqrt(2), 4.0)
        ]
        assert sizes == sorted(sizes) and len(set(sizes)) == len(sizes)

    def test_conv_not_clamped(self, extractor, noisy_image):
        out = extractor.extract_conv(noisy_image, 1.0)
        assert np.any(out.data < 0)  # no ReLU on the conv pathway

    def test_fcr_whole_repeatable(self, extractor, noisy_image):
        np.testing.assert_array_equal(
            extractor.extract_fcr(noisy_image, "whole"),
            extractor.extract_fcr(noisy_image, "whole"),
        )

    def test_fcr_central_uniform_equals_whole(self, extractor):
        img = record(np.full((256, 256, 3), 90, dtype=np.uint8))
        np.testing.assert_allclose(
            extractor.extract_fcr(img, "central"),
            extractor.extract_fcr(img, "whole"),
            atol=1e-6,
        )

    def test_fcr_layers_differ(self, extractor, noisy_image):
        a = extractor.extract_fcr(noisy_image, "whole", layer=1)
        b = extractor.extract_fcr(noisy_image, "whole", layer=2)
        assert not np.array_equal(a, b)

    @settings(max_examples=50, deadline=None)
    @given(square=st.integers(8, 256), stride=st.integers(1, 64))
    def test_grid_shape_law(self, square, stride):
        assert grid_side(256, square, stride) == (256 - square) // stride + 1

    def test_square_too_large(self, extractor, noisy_image):
        with pytest.raises(ValueError):
            extractor.extract_dense_grid(noisy_image, 300, 32)


class TestStoreBacked:
    def test_lookup_roundtrip(self, tmp_path, noisy_image):
        synth = SyntheticExtractor(ExtractorSpec(kind="synthetic", d=8, seed=1))
        box = Box(0, 0, 64, 64)
        conv = synth.extract_conv(noisy_image, 1.0, scale_index=0)
        fcr = synth.extract_fcr(noisy_image, "whole", layer=1)
        store = tmp_path / "dump.hfrs"
        write_feature_store(
            store,
            [
                ("img0#box:0,0,64,64", synth.extract_region(noisy_image, box)),
                ("img0#conv:s0", conv),
                ("img0#fcr1:w", fcr),
            ],
        )
        backed = StoreExtractor(
            ExtractorSpec(kind="store", d=8, store_paths=(str(store),))
        )
        np.testing.assert_array_equal(
            backed.extract_region(noisy_image, box),
            synth.extract_region(noisy_image, box),
        )
        np.testing.assert_array_equal(
            backed.extract_conv(noisy_image, 1.0, scale_index=0).data, conv.data
        )
        np.testing.assert_array_equal(
            backed.extract_fcr(noisy_image, "whole", layer=1), fcr
        )

    def test_missing_key_reported(self, tmp_path):
        store = tmp_path / "empty.hfrs"
        write_feature_store(store, [])
        backed = StoreExtractor(
            ExtractorSpec(kind="store", d=8, store_paths=(str(store),))
        )
        img = record(np.zeros((256, 256, 3), dtype=np.uint8))
        with pytest.raises(KeyError):
            backed.extract_region(img, Box(0, 0, 10, 10))

    def test_factory(self, tmp_path):
        assert isinstance(
            make_extractor(ExtractorSpec(kind="synthetic", d=4)), SyntheticExtractor
        )
        store = tmp_path / "s.hfrs"
        write_feature_store(store, [])
        assert isinstance(
            make_extractor(ExtractorSpec(kind="store", d=4, store_paths=(str(store),))),
            StoreExtractor,
        )
