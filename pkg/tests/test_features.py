import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from viewsynth.core import PatchGridConfig
from viewsynth.errors import ArgumentError, FormatError
from viewsynth.features import (HogConfig, extract_patches, extract_view_features, hog_patch,
                                import_features, read_pgm, resize_bilinear, to_gray, write_pgm)
from viewsynth.io import write_mvft


def bilinear_oracle(img, side):
    """Loop-based corner-aligned bilinear resize."""
    h, w = img.shape
    out = np.empty((side, side))
    for i in range(side):
        for j in range(side):
            y = i * (h - 1) / (side - 1)
            x = j * (w - 1) / (side - 1)
            y0, x0 = int(np.floor(y)), int(np.floor(x))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = y - y0, x - x0
            out[i, j] = ((1 - fy) * (1 - fx) * img[y0, x0] + (1 - fy) * fx * img[y0, x1]
                         + fy * (1 - fx) * img[y1, x0] + fy * fx * img[y1, x1])
    return out


def test_resize_constant():
    np.testing.assert_allclose(resize_bilinear(np.full((7, 5), 0.5), 13), 0.5)


def test_resize_identity_is_bit_equal():
    img = np.random.default_rng(0).random((9, 9))
    assert resize_bilinear(img, 9).tobytes() == img.tobytes()


def test_resize_checkerboard_center():
    out = resize_bilinear(np.array([[0.0, 1.0], [1.0, 0.0]]), 3)
    assert out[1, 1] == pytest.approx(0.5)
    np.testing.assert_allclose(out[[0, 0, 2, 2], [0, 2, 0, 2]], [0, 1, 1, 0])


def test_resize_matches_loop_oracle():
    img = np.random.default_rng(1).random((11, 7))
    np.testing.assert_allclose(resize_bilinear(img, 16), bilinear_oracle(img, 16), atol=1e-12)


def test_resize_rejects_zero_side():
    with pytest.raises(ArgumentError):
        resize_bilinear(np.zeros((4, 4)), 0)


def test_patch_tiling_defaults():
    grid = PatchGridConfig()
    img = np.random.default_rng(2).random((112, 112))
    patches = extract_patches(img, grid)
    assert patches.shape == (36, 32, 32)
    np.testing.assert_array_equal(patches[0], img[:32, :32])
    np.testing.assert_array_equal(patches[35], img[80:, 80:])
    # 16-pixel shared band between horizontal neighbours
    np.testing.assert_array_equal(patches[0][:, 16:], patches[1][:, :16])
    covered = np.zeros((112, 112), bool)
    for g in range(grid.G):
        r, c = grid.offset(g)
        np.testing.assert_array_equal(patches[g], img[r:r + 32, c:c + 32])
        covered[r:r + 32, c:c + 32] = True
    assert covered.all()


def test_single_patch_when_image_equals_patch():
    grid = PatchGridConfig(image_side=32, patch_side=32, stride=7)
    assert extract_patches(np.zeros((32, 32)), grid).shape == (1, 32, 32)


def test_extract_patches_size_mismatch():
    with pytest.raises(ArgumentError):
        extract_patches(np.zeros((100, 100)), PatchGridConfig())


def test_hog_constant_patch_is_zero():
    h = hog_patch(np.full((32, 32), 0.3))
    assert h.shape == (144,)
    assert HogConfig().feature_dim(32) == 144
    np.testing.assert_array_equal(h, 0.0)


def test_hog_vertical_step_edge_votes_bin_zero():
    patch = np.zeros((32, 32))
    patch[:, 16:] = 1.0
    h = hog_patch(patch).reshape(16, 9)
    assert h.sum() > 0
    np.testing.assert_array_equal(h[:, 1:], 0.0)


def test_hog_horizontal_edge_votes_ninety_degrees():
    patch = np.zeros((32, 32))
    patch[16:, :] = 1.0
    h = hog_patch(patch).reshape(16, 9)
    # 90 degrees sits halfway between the centres at 80 and 100
    np.testing.assert_allclose(h[:, 4], h[:, 5])
    assert h[:, [0, 1, 2, 3, 6, 7, 8]].sum() == 0


def test_hog_config_validation():
    with pytest.raises(ArgumentError):
        HogConfig(bins=1)
    with pytest.raises(ArgumentError):
        HogConfig().feature_dim(30)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (32, 32), elements=st.floats(0, 1)))
def test_hog_nonnegative_and_bounded(patch):
    h = hog_patch(patch)
    assert (h >= 0).all() and (h <= 1).all()
    assert np.linalg.norm(h) <= 1 + 1e-9


def test_view_features_constant_and_deterministic():
    blk = extract_view_features(np.full((112, 112), 0.7))
    assert blk.shape == (36, 144) and blk.dtype == np.float32
    np.testing.assert_array_equal(blk, 0)
    img = np.random.default_rng(3).random((112, 112))
    assert extract_view_features(img).tobytes() == extract_view_features(img.copy()).tobytes()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-0.1, 0.1))
def test_view_features_shift_invariant(seed, shift):
    img = 0.2 + 0.6 * np.random.default_rng(seed).random((112, 112))
    np.testing.assert_allclose(extract_view_features(img + shift), extract_view_features(img),
                               atol=1e-5)


def test_color_conversion():
    rgb = np.zeros((2, 2, 3))
    rgb[..., 0] = 1.0
    np.testing.assert_allclose(to_gray(rgb), 0.299)


def test_pgm_round_trip(tmp_path):
    img = np.arange(64, dtype=np.float64).reshape(8, 8) / 63.0
    write_pgm(tmp_path / "a.pgm", img)
    assert (tmp_path / "a.pgm").read_bytes()[:2] == b"P5"
    np.testing.assert_allclose(read_pgm(tmp_path / "a.pgm"), img, atol=0.5 / 255 + 1e-12)


def test_read_pgm_garbage(tmp_path):
    (tmp_path / "x.pgm").write_bytes(b"not an image")
    with pytest.raises(FormatError):
        read_pgm(tmp_path / "x.pgm")


def test_import_features(tmp_path):
    blk = np.random.default_rng(4).random((1, 1, 36, 10)).astype(np.float32)
    write_mvft(tmp_path / "f.mvft", blk)
    assert import_features(tmp_path / "f.mvft").tobytes() == blk[0, 0].tobytes()
    write_mvft(tmp_path / "g.mvft", np.zeros((2, 1, 36, 10), np.float32))
    with pytest.raises(FormatError):
        import_features(tmp_path / "g.mvft")
    (tmp_path / "h.mvft").write_bytes(b"VOCB" + bytes(20))
    with pytest.raises(FormatError):
        import_features(tmp_path / "h.mvft")
