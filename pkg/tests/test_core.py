import numpy as np
import pytest

from viewsynth.core import PatchAddress, PatchGridConfig, ShapeCollection, ViewSet, patch_matrix, slice_patch
from viewsynth.errors import AddressingError, ArgumentError
from viewsynth.io import read_mvft, write_mvft

from conftest import make_collection


def test_slice_patch_reads_fill():
    data = np.zeros((2, 2, 4, 3), np.float32)
    data[0, 0, 0] = [1, 2, 3]
    c = make_collection(data=data)
    np.testing.assert_array_equal(slice_patch(c, 0, PatchAddress(0, 0)), [1, 2, 3])


def test_slice_patch_out_of_range_names_axis(small_collection):
    with pytest.raises(AddressingError) as exc:
        slice_patch(small_collection, 0, PatchAddress(small_collection.V, 0))
    assert exc.value.axis == "view"
    with pytest.raises(AddressingError) as exc:
        slice_patch(small_collection, 0, PatchAddress(0, -1))
    assert exc.value.axis == "patch"
    with pytest.raises(AddressingError) as exc:
        slice_patch(small_collection, 99, PatchAddress(0, 0))
    assert exc.value.axis == "shape"


def test_slice_survives_mvft_round_trip(tmp_path, small_collection):
    write_mvft(tmp_path / "c.mvft", small_collection.data)
    back = read_mvft(tmp_path / "c.mvft")
    addr = PatchAddress(2, 3)
    assert slice_patch(small_collection, 1, addr).tobytes() == back[1, 2, 3].tobytes()


def test_patch_matrix_columns(small_collection):
    addr = PatchAddress(1, 2)
    single = patch_matrix(small_collection, [2], addr)
    assert single.shape == (3, 1)
    np.testing.assert_array_equal(single[:, 0], slice_patch(small_collection, 2, addr))
    m01 = patch_matrix(small_collection, [0, 1], addr)
    m10 = patch_matrix(small_collection, [1, 0], addr)
    np.testing.assert_array_equal(m01[:, 0], slice_patch(small_collection, 0, addr))
    np.testing.assert_array_equal(m01, m10[:, ::-1])


def test_patch_matrix_rejects_empty_subset(small_collection):
    with pytest.raises(ArgumentError):
        patch_matrix(small_collection, [], PatchAddress(0, 0))


def test_addressing_is_bijective():
    N, V, G, d = 3, 2, 4, 2
    base = make_collection(N, V, G, d, data=np.zeros((N, V, G, d), np.float32))
    for n in range(N):
        for v in range(V):
            for g in range(G):
                data = np.zeros((N, V, G, d), np.float32)
                data.reshape(-1, d)[(n * V + v) * G + g] = 7.0  # row-major position
                c = make_collection(data=data)
                changed = [(a, b, e) for a in range(N) for b in range(V) for e in range(G)
                           if not np.array_equal(slice_patch(c, a, PatchAddress(b, e)),
                                                 slice_patch(base, a, PatchAddress(b, e)))]
                assert changed == [(n, v, g)]


def test_collection_is_read_only(small_collection):
    with pytest.raises(ValueError):
        small_collection.data[0, 0, 0, 0] = 1.0


def test_collection_invariants():
    with pytest.raises(ArgumentError):
        make_collection(data=np.zeros((1, 2, 4, 3), np.float32))
    with pytest.raises(ArgumentError):
        ShapeCollection(np.zeros((2, 2, 4, 3), np.float32), ("a", "a"), ViewSet.uniform(2),
                        PatchGridConfig(3, 2, 1))
    bad = np.zeros((2, 2, 4, 3), np.float32)
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(ArgumentError):
        make_collection(data=bad)


def test_default_grid_has_36_patches():
    g = PatchGridConfig()
    assert (g.rows, g.cols, g.G) == (6, 6, 36)
    assert g.offset(0) == (0, 0)
    assert g.offset(35) == (80, 80)
    with pytest.raises(ArgumentError):
        PatchGridConfig(112, 32, 15)


def test_view_set_validation():
    assert ViewSet.uniform(16).azimuths[1] == 22.5
    with pytest.raises(ArgumentError):
        ViewSet((0.0,))
    with pytest.raises(ArgumentError):
        ViewSet((0.0, 0.0))
    with pytest.raises(ArgumentError):
        ViewSet((0.0, 360.0))


def test_subset_and_without(small_collection):
    sub = small_collection.subset([3, 1])
    assert sub.ids == ("s3", "s1")
    np.testing.assert_array_equal(sub.data[0], small_collection.data[3])
    assert small_collection.without(0).ids == ("s1", "s2", "s3")
