"""Per-view patch features: resizing, patch tiling and a fixed HoG variant.

Images are 2-D float arrays (height, width) with intensities in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .core import FEATURE_DTYPE, PatchGridConfig
from .errors import ArgumentError, FormatError


@dataclass(frozen=True)
class HogConfig:
    cell_side: int = 8
    bins: int = 9
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.bins < 2:
            raise ArgumentError("HoG needs at least 2 orientation bins")
        if self.cell_side < 1:
            raise ArgumentError("cell_side must be positive")

    def feature_dim(self, patch_side: int) -> int:
        if patch_side % self.cell_side:
            raise ArgumentError("patch_side must be divisible by cell_side")
        return (patch_side // self.cell_side) ** 2 * self.bins


def to_gray(rgb: np.ndarray) -> np.ndarray:
    """Luminance conversion 0.299 R + 0.587 G + 0.114 B."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim == 2:
        return rgb
    if rgb.ndim != 3 or rgb.shape[2] < 3:
        raise ArgumentError(f"expected an (H, W, 3) color image, got {rgb.shape}")
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


def read_pgm(path) -> np.ndarray:
    """Load an image file as grayscale in [0, 1].  8-bit PGM (P5) is the primary input."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "P", "1"):
                arr = np.asarray(im.convert("L"), dtype=np.float64)
            else:
                arr = to_gray(np.asarray(im.convert("RGB"), dtype=np.float64))
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"cannot read image {path}: {exc}") from exc
    return arr / 255.0


def write_pgm(path, img: np.ndarray) -> None:
    arr = np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PPM")


def resize_bilinear(img: np.ndarray, side: int) -> np.ndarray:
    """Resize to ``side`` x ``side`` with corner-aligned bilinear sampling."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ArgumentError("expected a non-empty 2-D image")
    if side <= 0:
        raise ArgumentError("side must be positive")
    h, w = img.shape
    if h == side and w == side:
        return img.copy()

    def coords(n_in, n_out):
        if n_out == 1:
            pos = np.array([(n_in - 1) / 2.0])
        else:
            pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
        i0 = np.clip(np.floor(pos).astype(np.intp), 0, n_in - 1)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, pos - i0

    r0, r1, fr = coords(h, side)
    c0, c1, fc = coords(w, side)
    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bottom = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    return top * (1 - fr)[:, None] + bottom * fr[:, None]


def extract_patches(img: np.ndarray, grid: PatchGridConfig) -> np.ndarray:
    """Array of shape (G, patch_side, patch_side), row-major over the grid."""
    img = np.asarray(img)
    if img.shape != (grid.image_side, grid.image_side):
        raise ArgumentError(f"image is {img.shape}, grid expects "
                            f"{grid.image_side}x{grid.image_side}")
    p, s = grid.patch_side, grid.stride
    return np.stack([img[r * s:r * s + p, c * s:c * s + p]
                     for r in range(grid.rows) for c in range(grid.cols)])


def _cell_histograms(gx: np.ndarray, gy: np.ndarray, cfg: HogConfig) -> np.ndarray:
    """Orientation histograms, shape (..., cells_y, cells_x, bins).

    Bin b is centred on b * 180/bins degrees; votes are split linearly between
    the two nearest centres, wrapping at 180.
    """
    mag = np.hypot(gx, gy)
    theta = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    width = 180.0 / cfg.bins
    pos = theta / width
    lo = np.floor(pos).astype(np.intp)
    frac = pos - lo
    lo %= cfg.bins
    hi = (lo + 1) % cfg.bins
    *lead, h, w = gx.shape
    cs = cfg.cell_side
    ny, nx = h // cs, w // cs
    votes = np.zeros(tuple(lead) + (h, w, cfg.bins))
    np.put_along_axis(votes, lo[..., None], (mag * (1 - frac))[..., None], axis=-1)
    hi_votes = np.zeros_like(votes)
    np.put_along_axis(hi_votes, hi[..., None], (mag * frac)[..., None], axis=-1)
    votes += hi_votes
    votes = votes.reshape(tuple(lead) + (ny, cs, nx, cs, cfg.bins))
    return votes.sum(axis=(-4, -2))


def hog_patch(patch: np.ndarray, cfg: HogConfig = HogConfig()) -> np.ndarray:
    """HoG vector of one square patch, L2-normalised as a whole."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 2 or patch.shape[0] != patch.shape[1]:
        raise ArgumentError("patch must be square")
    return _hog_batch(patch[None], cfg)[0]


def _hog_batch(patches: np.ndarray, cfg: HogConfig) -> np.ndarray:
    side = patches.shape[-1]
    cfg.feature_dim(side)
    gx, gy = _gradients_batch(patches)
    hist = _cell_histograms(gx, gy, cfg).reshape(len(patches), -1)
    norm = np.sqrt(np.einsum("ij,ij->i", hist, hist))
    return hist / np.maximum(norm, cfg.epsilon)[:, None]


def _gradients_batch(patches: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # [-1, 0, 1] differences, edges replicated
    padded = np.pad(patches, ((0, 0), (1, 1), (1, 1)), mode="edge")
    gx = padded[:, 1:-1, 2:] - padded[:, 1:-1, :-2]
    gy = padded[:, 2:, 1:-1] - padded[:, :-2, 1:-1]
    return gx, gy


def extract_view_features(img: np.ndarray, grid: PatchGridConfig = PatchGridConfig(),
                          cfg: HogConfig = HogConfig()) -> np.ndarray:
    """G x d float32 feature block of one image (resized to the grid first)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = to_gray(img)
    img = resize_bilinear(img, grid.image_side)
    patches = extract_patches(img, grid)
    return _hog_batch(patches, cfg).astype(FEATURE_DTYPE)


def import_features(path) -> np.ndarray:
    """Read an externally computed G x d block stored as a one-shape, one-view MVFT file."""
    from .io import read_mvft

    data = read_mvft(Path(path))
    if data.shape[0] != 1 or data.shape[1] != 1:
        raise FormatError(f"expected a single-view MVFT block, got dims {data.shape}")
    return data[0, 0]
