import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lutpoint.data import (FAMILIES, Dataset, _sample_family, dataset_from_bytes, dataset_to_bytes,
                           generate_synthetic, normalize, read_dataset, write_dataset)
from lutpoint.errors import (BadMagicError, DegenerateCloudWarning, FormatError, LengthMismatchError,
                             TruncatedError, VersionError)

clouds = arrays(np.float64, st.tuples(st.integers(2, 40), st.just(3)),
                elements=st.floats(-50, 50, allow_nan=False)).filter(lambda a: np.ptp(a, axis=0).max() > 1e-3)


def test_normalize_cube_corners():
    corners = np.array([[x, y, z] for x in (-2, 2) for y in (-2, 2) for z in (-2, 2)], float)
    np.testing.assert_array_equal(normalize(corners), corners / 2)


def test_normalize_segment():
    out = normalize([[0, 0, 0], [4, 0, 0]])
    np.testing.assert_array_equal(out, [[-1, 0, 0], [1, 0, 0]])


def test_normalize_single_point_is_degenerate():
    with pytest.warns(DegenerateCloudWarning):
        out = normalize([[5, 5, 5]])
    np.testing.assert_array_equal(out, [[0, 0, 0]])


def test_normalize_rejects_empty_and_nan():
    with pytest.raises(ValueError):
        normalize(np.empty((0, 3)))
    with pytest.raises(ValueError):
        normalize([[0, np.nan, 0], [1, 1, 1]])


@given(clouds)
def test_normalize_fills_volume(pts):
    out = normalize(pts)
    assert np.all(np.abs(out) <= 1.0)
    assert abs(np.abs(out).max() - 1.0) <= 1e-6


@given(clouds)
def test_normalize_idempotent(pts):
    once = normalize(pts)
    np.testing.assert_allclose(normalize(once), once, atol=1e-6, rtol=0)


@given(clouds, st.randoms(use_true_random=False))
def test_normalize_commutes_with_permutation(pts, rnd):
    perm = list(range(len(pts)))
    rnd.shuffle(perm)
    np.testing.assert_array_equal(normalize(pts[perm]), normalize(pts)[perm])


def test_generate_counts_and_labels():
    ds = generate_synthetic(FAMILIES, per_class=25, n_points=64, seed=3)
    assert len(ds) == 200
    assert ds.num_classes == 8
    assert np.bincount(ds.labels).tolist() == [25] * 8
    assert all(c.shape == (64, 3) for c in ds.clouds)
    assert all(np.abs(c).max() <= 1.0 for c in ds.clouds)


def test_generate_is_deterministic():
    a = generate_synthetic(per_class=3, n_points=50, seed=11)
    b = generate_synthetic(per_class=3, n_points=50, seed=11)
    assert dataset_to_bytes(a) == dataset_to_bytes(b)
    c = generate_synthetic(per_class=3, n_points=50, seed=12)
    assert dataset_to_bytes(a) != dataset_to_bytes(c)


def test_splits_differ():
    a = generate_synthetic(per_class=2, n_points=50, seed=1, split="train")
    b = generate_synthetic(per_class=2, n_points=50, seed=1, split="test")
    assert not np.array_equal(a.stacked(), b.stacked())


def test_sphere_family_is_on_sphere():
    pts = _sample_family("sphere", 2000, np.random.default_rng(0))
    radius = np.linalg.norm(pts, axis=1)
    assert np.ptp(radius) <= 1e-5


@pytest.mark.parametrize("family", FAMILIES)
def test_every_family_samples(family):
    pts = _sample_family(family, 500, np.random.default_rng(1))
    assert pts.shape == (500, 3) and np.isfinite(pts).all()


def test_unknown_family():
    with pytest.raises(ValueError, match="unknown shape family"):
        generate_synthetic(["sphere", "blob"], per_class=1)


def test_dataset_rejects_bad_label():
    with pytest.raises(ValueError):
        Dataset([np.zeros((2, 3))], [2], ["a", "b"])


def test_dataset_round_trip(tmp_path):
    ds = generate_synthetic(per_class=25, n_points=32, seed=5)
    p1, p2 = tmp_path / "a.pcld", tmp_path / "b.pcld"
    write_dataset(ds, p1)
    back = read_dataset(p1)
    write_dataset(back, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert back.class_names == ds.class_names
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.stacked(), ds.stacked().astype(np.float32))


def test_dataset_unicode_names_and_ragged_items():
    ds = Dataset([np.zeros((1, 3)), np.ones((4, 3))], [0, 1], ["chaise", "tabouret-été"])
    back = dataset_from_bytes(dataset_to_bytes(ds))
    assert back.class_names == ("chaise", "tabouret-été")
    assert [len(c) for c in back.clouds] == [1, 4]


def test_dataset_bad_magic():
    raw = dataset_to_bytes(generate_synthetic(per_class=1, n_points=8))
    with pytest.raises(BadMagicError):
        dataset_from_bytes(b"XXXX0001" + raw[8:])


def test_dataset_bad_version():
    raw = bytearray(dataset_to_bytes(generate_synthetic(per_class=1, n_points=8)))
    raw[8] = 2
    with pytest.raises(VersionError):
        dataset_from_bytes(bytes(raw))


def test_dataset_truncated():
    raw = dataset_to_bytes(generate_synthetic(per_class=1, n_points=8))
    with pytest.raises(TruncatedError):
        dataset_from_bytes(raw[:-5])


def test_dataset_trailing_bytes():
    raw = dataset_to_bytes(generate_synthetic(per_class=1, n_points=8))
    with pytest.raises(LengthMismatchError):
        dataset_from_bytes(raw + b"\0")


def test_dataset_label_beyond_classes():
    ds = Dataset([np.zeros((1, 3))], [0], ["only"])
    raw = bytearray(dataset_to_bytes(ds))
    label_at = 8 + 12 + 4 + len("only")
    raw[label_at] = 3
    with pytest.raises(FormatError):
        dataset_from_bytes(bytes(raw))
