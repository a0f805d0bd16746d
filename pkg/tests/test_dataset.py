import numpy as np
import pytest

from builders import synthetic_set, write_idx

from evodag.dataset import ImageSet, batches, fingerprint, load_idx, pad_images, split, subset
from evodag.errors import DatasetError


@pytest.fixture
def raw():
    rng = np.random.default_rng(0)
    return rng.integers(0, 256, size=(12, 5, 4), dtype=np.uint8), np.arange(12, dtype=np.uint8) % 3


@pytest.mark.parametrize("suffix", ["", ".gz"])
def test_load_idx(tmp_path, raw, suffix):
    images, labels = raw
    images_path, labels_path = tmp_path / f"img{suffix}", tmp_path / f"lbl{suffix}"
    write_idx(images_path, labels_path, images, labels)

    image_set = load_idx(str(images_path), str(labels_path), num_classes=3)

    assert image_set.images.dtype == np.float32
    assert image_set.image_dims == (5, 4)
    np.testing.assert_allclose(image_set.images, images / 255.0, rtol=1e-6)
    np.testing.assert_array_equal(image_set.labels, labels)


def test_load_idx_pads_to_32(tmp_path, raw):
    images, labels = raw
    write_idx(tmp_path / "img", tmp_path / "lbl", images, labels)
    image_set = load_idx(str(tmp_path / "img"), str(tmp_path / "lbl"), num_classes=3, pad=True)
    assert image_set.image_dims == (32, 32)


def test_load_idx_rejects_bad_magic(tmp_path, raw):
    images, labels = raw
    write_idx(tmp_path / "img", tmp_path / "lbl", images, labels)
    with pytest.raises(DatasetError, match="magic"):
        load_idx(str(tmp_path / "lbl"), str(tmp_path / "img"))


def test_load_idx_rejects_truncated_file(tmp_path, raw):
    images, labels = raw
    write_idx(tmp_path / "img", tmp_path / "lbl", images, labels)
    data = (tmp_path / "img").read_bytes()
    (tmp_path / "img").write_bytes(data[:-7])
    with pytest.raises(DatasetError):
        load_idx(str(tmp_path / "img"), str(tmp_path / "lbl"), num_classes=3)


def test_load_idx_rejects_count_mismatch(tmp_path, raw):
    images, labels = raw
    write_idx(tmp_path / "img", tmp_path / "lbl", images, labels[:-1])
    with pytest.raises(DatasetError, match="labels"):
        load_idx(str(tmp_path / "img"), str(tmp_path / "lbl"), num_classes=3)


def test_load_idx_rejects_out_of_range_labels(tmp_path, raw):
    images, labels = raw
    write_idx(tmp_path / "img", tmp_path / "lbl", images, labels)
    with pytest.raises(DatasetError, match="out of range"):
        load_idx(str(tmp_path / "img"), str(tmp_path / "lbl"), num_classes=2)


def test_load_idx_missing_file(tmp_path):
    with pytest.raises(DatasetError):
        load_idx(str(tmp_path / "nope"), str(tmp_path / "nope-either"))


def test_pad_images_centers():
    padded = pad_images(np.ones((1, 28, 28), dtype=np.uint8))
    assert padded.shape == (1, 32, 32)
    assert padded[0, 2:30, 2:30].all()
    assert padded.sum() == 28 * 28
    with pytest.raises(DatasetError):
        pad_images(np.ones((1, 33, 3)))


def test_image_set_validation():
    with pytest.raises(DatasetError):
        ImageSet(np.zeros((3, 4), dtype=np.float32), np.zeros(3, dtype=np.int64))
    with pytest.raises(DatasetError):
        ImageSet(np.zeros((3, 4, 4), dtype=np.float32), np.zeros(2, dtype=np.int64))
    with pytest.raises(DatasetError):
        ImageSet(np.zeros((2, 4, 4), dtype=np.float32), np.array([0, 5]), num_classes=3)


def test_split_is_a_seeded_partition():
    image_set = synthetic_set(count=40)
    train, validation = split(image_set, 30, seed=3)
    again, _ = split(image_set, 30, seed=3)
    other, _ = split(image_set, 30, seed=4)

    assert (len(train), len(validation)) == (30, 10)
    np.testing.assert_array_equal(train.images, again.images)
    assert not np.array_equal(train.images, other.images)
    # disjoint and exhaustive: every image shows up exactly once
    rows = {row.tobytes() for row in np.concatenate([train.images, validation.images])}
    assert len(rows) == 40
    with pytest.raises(DatasetError):
        split(image_set, 40)


def test_subset():
    image_set = synthetic_set(count=40)
    assert len(subset(image_set, 15, seed=1)) == 15
    assert subset(image_set, 100) is image_set


def test_batches_drop_ragged_tail():
    image_set = synthetic_set(count=25)
    epoch = list(batches(image_set, 10, epoch_seed=5))

    assert [len(labels) for _, labels in epoch] == [10, 10]
    again = list(batches(image_set, 10, epoch_seed=5))
    np.testing.assert_array_equal(epoch[0][0], again[0][0])
    reshuffled = list(batches(image_set, 10, epoch_seed=6))
    assert not np.array_equal(epoch[0][1], reshuffled[0][1]) or not np.array_equal(epoch[0][0], reshuffled[0][0])
    with pytest.raises(DatasetError):
        list(batches(image_set, 30, epoch_seed=0))


def test_fingerprint_tracks_content():
    a, b = synthetic_set(seed=0), synthetic_set(seed=0)
    assert fingerprint(a) == fingerprint(b)
    assert fingerprint(a) != fingerprint(synthetic_set(seed=1))
    assert fingerprint(a, b) != fingerprint(a)
