import struct

import numpy as np
import pytest

from oodkit.errors import ConfigError, IdxFormatError, IdxLengthError, IdxTypeError
from oodkit.imaging import (
    Dataset,
    ImageTensor,
    SyntheticSpec,
    generate_synthetic,
    parse_idx,
    parse_idx_labels,
    split,
    write_idx,
)


def idx_bytes(dims, payload):
    header = struct.pack(f">BBBB{len(dims)}I", 0, 0, 0x08, len(dims), *dims)
    return header + payload


class TestParseIdx:
    def test_minimal_stream(self):
        ds = parse_idx(idx_bytes((1, 2, 2), bytes([0, 1, 2, 3])))
        assert len(ds) == 1
        img = ds.images[0]
        assert (img.height, img.width, img.channels) == (2, 2, 1)
        assert list(img.data) == [0, 1, 2, 3]

    def test_truncated_payload(self):
        with pytest.raises(IdxLengthError):
            parse_idx(idx_bytes((2, 2, 2), bytes(4)))

    def test_bad_magic(self):
        data = b"\x01\x00\x08\x03" + struct.pack(">3I", 1, 2, 2) + bytes(4)
        with pytest.raises(IdxFormatError):
            parse_idx(data)

    def test_unsupported_type_byte(self):
        data = b"\x00\x00\x0d\x03" + struct.pack(">3I", 1, 2, 2) + bytes(4)
        with pytest.raises(IdxTypeError):
            parse_idx(data)

    def test_mnist_sized_stream(self):
        # published train-images layout: 16-byte header + 60000*784 bytes
        payload = bytes(60000 * 28 * 28)
        stream = idx_bytes((60000, 28, 28), payload)
        assert len(stream) == 47040016
        ds = parse_idx(stream)
        assert len(ds) == 60000
        assert ds.shape == (28, 28, 1)

    def test_four_dimensional_color(self):
        arr = np.arange(2 * 2 * 2 * 3, dtype=np.uint8).reshape(2, 2, 2, 3)
        ds = parse_idx(idx_bytes((2, 2, 2, 3), arr.tobytes()))
        assert ds.shape == (2, 2, 3)
        assert np.array_equal(ds.stack(), arr)

    def test_roundtrip_byte_exact(self):
        rng = np.random.default_rng(0)
        arr = rng.integers(0, 256, size=(5, 4, 6, 1), dtype=np.uint8)
        ds = Dataset.from_array("x", arr)
        again = parse_idx(write_idx(ds))
        assert np.array_equal(again.stack(), arr)
        assert write_idx(again) == write_idx(ds)

    def test_labels_parsed_separately(self):
        data = b"\x00\x00\x08\x01" + struct.pack(">I", 3) + bytes([7, 8, 9])
        assert list(parse_idx_labels(data)) == [7, 8, 9]


class TestGenerators:
    def test_constant_zero_variance_per_channel(self):
        ds = generate_synthetic(SyntheticSpec("constant", count=4, seed=3, shape=(8, 8, 3)))
        for img in ds.images:
            for ch in range(3):
                assert img.pixels[:, :, ch].std() == 0.0

    def test_constant_enumeration_mode(self):
        spec = SyntheticSpec("constant", count=256, seed=0, shape=(4, 4, 1),
                             enumerate_levels=True)
        ds = generate_synthetic(spec)
        values = [int(img.pixels[0, 0, 0]) for img in ds.images]
        assert values == list(range(256))

    def test_colorseq_palette_scan(self):
        k = 5
        spec = SyntheticSpec("colorseq", count=2, seed=9, shape=(6, 7, 3), seq_len=k)
        ds = generate_synthetic(spec)
        for img in ds.images:
            flatpix = img.pixels.reshape(-1, 3)
            palette = flatpix[:k]
            for i in range(flatpix.shape[0]):
                assert np.array_equal(flatpix[i], palette[i % k])

    def test_colorseq_k2_alternates(self):
        ds = generate_synthetic(SyntheticSpec("colorseq", count=1, seed=2,
                                              shape=(4, 5, 1), seq_len=2))
        flat = ds.images[0].pixels.reshape(-1)
        assert np.array_equal(flat[::2], np.full((len(flat) + 1) // 2, flat[0]))
        assert np.array_equal(flat[1::2], np.full(len(flat) // 2, flat[1]))

    def test_noise_determinism(self):
        spec = SyntheticSpec("noise", count=3, seed=11, shape=(8, 8, 1))
        a = generate_synthetic(spec)
        b = generate_synthetic(spec)
        assert all(x == y for x, y in zip(a.images, b.images))

    def test_oriented_gradient_structure(self):
        spec = SyntheticSpec("oriented-gradient", count=3, seed=5, shape=(32, 32, 1),
                             orientation="vertical")
        ds = generate_synthetic(spec)
        ramp = np.round(32 + (224 - 32) * np.arange(32) / 31.0)
        for img in ds.images:
            dev = img.pixels[:, :, 0].astype(float) - ramp[:, None]
            assert dev.min() >= -16 and dev.max() <= 16
        # horizontal variant ramps along columns
        hz = generate_synthetic(SyntheticSpec("oriented-gradient", count=1, seed=5,
                                              shape=(32, 32, 1), orientation="horizontal"))
        dev = hz.images[0].pixels[:, :, 0].astype(float) - ramp[None, :]
        assert dev.min() >= -16 and dev.max() <= 16

    def test_sprite_grid_block_in_top_half(self):
        ds = generate_synthetic(SyntheticSpec("sprite-grid", count=6, seed=8, shape=(32, 32, 1)))
        for img in ds.images:
            bright = np.argwhere(img.pixels[:, :, 0] > 128)
            assert bright.size
            assert bright[:, 0].max() < 16 + 3  # block starts in the top half

    def test_all_generators_respect_range(self):
        specs = [
            SyntheticSpec("noise", 2, 0, (8, 8, 3)),
            SyntheticSpec("constant", 2, 0, (8, 8, 3)),
            SyntheticSpec("colorseq", 2, 0, (8, 8, 3), seq_len=3),
            SyntheticSpec("oriented-gradient", 2, 0, (8, 8, 1), orientation="vertical"),
            SyntheticSpec("sprite-grid", 2, 0, (16, 16, 1)),
        ]
        for spec in specs:
            arr = generate_synthetic(spec).stack()
            assert arr.dtype == np.uint8


class TestSplit:
    def test_ninety_ten(self):
        ds = generate_synthetic(SyntheticSpec("noise", 100, 1, (4, 4, 1)))
        tr, va = split(ds, 0.1, seed=0)
        assert (len(tr), len(va)) == (90, 10)
        assert tr.split == "train" and va.split == "val"

    def test_partition_is_disjoint_and_exhaustive(self):
        ds = generate_synthetic(SyntheticSpec("noise", 20, 1, (4, 4, 1)))
        tr, va = split(ds, 0.25, seed=7)
        originals = {img.data for img in ds.images}
        got = [img.data for img in tr.images] + [img.data for img in va.images]
        assert len(got) == 20
        assert set(got) == originals

    def test_single_image_errors(self):
        ds = generate_synthetic(SyntheticSpec("noise", 1, 1, (4, 4, 1)))
        with pytest.raises(ConfigError):
            split(ds, 0.5, seed=0)

    def test_deterministic(self):
        ds = generate_synthetic(SyntheticSpec("noise", 30, 1, (4, 4, 1)))
        a = split(ds, 0.3, seed=5)
        b = split(ds, 0.3, seed=5)
        for x, y in zip(a[0].images + a[1].images, b[0].images + b[1].images):
            assert x == y


def test_image_tensor_validates():
    with pytest.raises(Exception):
        ImageTensor(np.zeros((4, 4, 2), dtype=np.uint8))  # 2 channels
    img = ImageTensor(np.zeros((2, 3, 1), dtype=np.uint8))
    assert len(img.data) == 6
