"""Container writer/reader round trips and header validation."""

import numpy as np
import pytest

from axq_exporter import formats


@pytest.fixture
def sample():
    manifest = {
        "input": {"scale": 0.0625, "zero_point": 0, "shape": [1, 8, 8]},
        "layers": [{"type": "argmax"}],
        "tensors": {"w": {"scale": 0.5, "zero_point": 3}},
        "metadata": {"note": "sample"},
    }
    tensors = {
        "w": np.arange(12, dtype=np.uint8).reshape(3, 4),
        "b": np.array([-5, 1 << 20], dtype=np.int32),
    }
    return manifest, tensors


def test_model_round_trip(tmp_path, sample):
    manifest, tensors = sample
    path = tmp_path / "m.axq"
    formats.write_model(path, manifest, tensors)
    got_manifest, got_tensors = formats.read_model(path)
    assert got_manifest["input"] == manifest["input"]
    assert got_manifest["tensors"]["w"]["scale"] == 0.5
    assert got_manifest["metadata"] == {"note": "sample"}
    assert sorted(got_tensors) == ["b", "w"]
    np.testing.assert_array_equal(got_tensors["w"], tensors["w"])
    np.testing.assert_array_equal(got_tensors["b"], tensors["b"])
    assert got_tensors["b"].dtype == np.dtype("<i4")


def test_rewrite_is_byte_identical(tmp_path, sample):
    manifest, tensors = sample
    first = tmp_path / "a.axq"
    second = tmp_path / "b.axq"
    formats.write_model(first, manifest, tensors)
    formats.write_model(second, *formats.read_model(first))
    assert first.read_bytes() == second.read_bytes()


def test_write_order_does_not_matter(tmp_path, sample):
    manifest, tensors = sample
    first = tmp_path / "a.axq"
    second = tmp_path / "b.axq"
    formats.write_model(first, manifest, tensors)
    reordered = {name: tensors[name] for name in reversed(sorted(tensors))}
    formats.write_model(second, manifest, reordered)
    assert first.read_bytes() == second.read_bytes()


def test_bad_magic_rejected(tmp_path, sample):
    path = tmp_path / "m.axq"
    formats.write_model(path, *sample)
    blob = bytearray(path.read_bytes())
    blob[0] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(formats.FormatError, match="magic"):
        formats.read_model(path)


def test_corrupt_data_rejected(tmp_path, sample):
    path = tmp_path / "m.axq"
    formats.write_model(path, *sample)
    blob = bytearray(path.read_bytes())
    blob[-1] ^= 0x01
    path.write_bytes(bytes(blob))
    with pytest.raises(formats.FormatError, match="checksum"):
        formats.read_model(path)


def test_unsupported_dtype_rejected(tmp_path):
    with pytest.raises(ValueError, match="dtype"):
        formats.write_model(
            tmp_path / "m.axq", {}, {"w": np.zeros(3, dtype=np.float32)}
        )


def test_images_round_trip(tmp_path):
    images = np.arange(2 * 1 * 8 * 8, dtype=np.uint8).reshape(2, 1, 8, 8)
    path = tmp_path / "imgs.bin"
    formats.write_images(path, images)
    np.testing.assert_array_equal(formats.read_images(path), images)


def test_labels_round_trip(tmp_path):
    labels = np.array([0, 9, 3], dtype=np.uint8)
    path = tmp_path / "labels.bin"
    formats.write_labels(path, labels)
    np.testing.assert_array_equal(formats.read_labels(path), labels)


def test_truncated_images_rejected(tmp_path):
    images = np.zeros((2, 1, 8, 8), dtype=np.uint8)
    path = tmp_path / "imgs.bin"
    formats.write_images(path, images)
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(formats.FormatError, match="dimensions"):
        formats.read_images(path)
