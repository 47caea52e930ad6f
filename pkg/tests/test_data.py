"""Synthetic corpus generators and PPM round trips."""

import numpy as np
import pytest

from parastream import data
from parastream.rng import make_rng


class TestGenerators:
    @pytest.mark.parametrize(
        "maker", [data.gradient_image, data.checkerboard_image, data.blob_image]
    )
    def test_shape_and_range(self, maker):
        img = maker(make_rng(4), 32)
        assert img.shape == (32, 32, 3)
        assert img.dtype == np.float64
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_gradient_varies_smoothly(self):
        img = data.gradient_image(make_rng(4), 64)
        dx = np.abs(np.diff(img, axis=1)).max()
        dy = np.abs(np.diff(img, axis=0)).max()
        assert max(dx, dy) < 0.1

    def test_checkerboard_is_two_valued_per_channel(self):
        img = data.checkerboard_image(make_rng(4), 32)
        for c in range(3):
            assert len(np.unique(img[:, :, c])) <= 2

    def test_blob_not_constant(self):
        img = data.blob_image(make_rng(4), 32)
        assert img.std() > 0.01

    def test_same_seed_same_image(self):
        a = data.blob_image(make_rng(9), 32)
        b = data.blob_image(make_rng(9), 32)
        np.testing.assert_array_equal(a, b)

    def test_corpus_cycles_kinds_deterministically(self):
        corpus = data.make_corpus(6, 16, 123)
        again = data.make_corpus(6, 16, 123)
        assert len(corpus) == 6
        for a, b in zip(corpus, again):
            np.testing.assert_array_equal(a, b)
        # different kinds should not all be identical
        assert not np.array_equal(corpus[0], corpus[1])


class TestPpm:
    def test_round_trip(self, tmp_path):
        img = data.blob_image(make_rng(8), 24)
        path = tmp_path / "img.ppm"
        data.write_ppm(path, img)
        back = data.read_ppm(path)
        # write quantizes to 8 bits, so agree to half a step
        assert np.max(np.abs(back - np.round(img * 255) / 255)) < 1e-12

    def test_read_rejects_ascii_variant(self, tmp_path):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P3\n1 1\n255\n0 0 0\n")
        with pytest.raises(ValueError, match="P6"):
            data.read_ppm(path)

    def test_read_tolerates_comments(self, tmp_path):
        path = tmp_path / "c.ppm"
        path.write_bytes(b"P6\n# a comment\n2 1\n255\n" + bytes(6))
        img = data.read_ppm(path)
        assert img.shape == (1, 2, 3)
        np.testing.assert_array_equal(img, 0.0)
