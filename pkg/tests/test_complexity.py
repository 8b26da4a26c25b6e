import numpy as np
import pytest

from oodkit.complexity import best_length, compressed_length_bits, decode_png, _encode_png
from oodkit.errors import ValidationError
from oodkit.imaging import ImageTensor


def noise_image(shape=(32, 32, 1), seed=0):
    rng = np.random.default_rng(seed)
    return ImageTensor(rng.integers(0, 256, size=shape, dtype=np.int64).astype(np.uint8))


def constant_image(value, shape=(32, 32, 1)):
    return ImageTensor(np.full(shape, value, dtype=np.uint8))


class TestCompressedLength:
    def test_noise_exceeds_constant(self):
        n = compressed_length_bits(noise_image(), "png").bits
        c = compressed_length_bits(constant_image(90), "png").bits
        assert n > c
        n2 = compressed_length_bits(noise_image(), "deflate-raw").bits
        c2 = compressed_length_bits(constant_image(90), "deflate-raw").bits
        assert n2 > c2

    def test_deterministic(self):
        img = noise_image(seed=5)
        for codec in ("png", "deflate-raw"):
            a = compressed_length_bits(img, codec)
            b = compressed_length_bits(img, codec)
            assert a == b

    def test_png_lossless(self):
        for img in (noise_image(), noise_image((16, 16, 3), seed=2), constant_image(7)):
            decoded = decode_png(_encode_png(img))
            assert np.array_equal(decoded, img.pixels)

    def test_normalized_bpd(self):
        img = noise_image((16, 16, 3))
        est = compressed_length_bits(img, "deflate-raw")
        assert est.normalized_bpd == pytest.approx(est.bits / (16 * 16 * 3))

    def test_unknown_codec(self):
        with pytest.raises(ValidationError):
            compressed_length_bits(noise_image(), "flif")


class TestBestLength:
    def test_single_codec_identical(self):
        img = noise_image(seed=1)
        assert best_length(img, ("png",)) == compressed_length_bits(img, "png")

    def test_best_is_minimum(self):
        for seed in range(4):
            img = noise_image(seed=seed)
            best = best_length(img)
            for codec in ("png", "deflate-raw"):
                assert best.bits <= compressed_length_bits(img, codec).bits

    def test_deflate_beats_png_container_on_synthetic_suite(self):
        rng = np.random.default_rng(3)
        for _ in range(6):
            arr = rng.integers(0, 256, size=(32, 32, 1), dtype=np.int64).astype(np.uint8)
            img = ImageTensor(arr)
            assert best_length(img, ("png", "deflate-raw")).bits <= \
                compressed_length_bits(img, "png").bits

    def test_empty_codec_set(self):
        with pytest.raises(ValidationError):
            best_length(noise_image(), ())


def test_tiling_overhead_bound():
    # duplicating content 2x2 should cost at most ~4.1x the bits
    rng = np.random.default_rng(8)
    tile = rng.integers(0, 256, size=(16, 16, 1), dtype=np.int64).astype(np.uint8)
    big = np.tile(tile, (2, 2, 1))
    for codec in ("png", "deflate-raw"):
        small_bits = compressed_length_bits(ImageTensor(tile), codec).bits
        big_bits = compressed_length_bits(ImageTensor(big), codec).bits
        assert big_bits <= 4.1 * small_bits
