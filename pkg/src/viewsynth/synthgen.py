"""Parametric voxel furniture and an orthographic depth-shaded renderer.

Grid axes are (x, y, z): x runs left to right, y is up, z runs back to front.
A camera at azimuth 0 looks at the front of the object (from +z).  Azimuth
increases counter-clockwise seen from above.

Each shape is driven by a few uniform latent factors u_i in [0, 1).  Every
parameter is a rounded affine function of one factor, so a collection lies
near a low-dimensional family in which neighbouring shapes differ smoothly.
Ranges for a 32^3 grid (voxel units, integers):

chairlike   u0: half_width 5..11, depth 10..20
            u1: leg_height 5..13
            u2: back_height 3..14 (capped at 28 - leg_height - seat_thick)
            u3: leg_thick 1..4, seat_thick 1..3, back_thick 1..3
            leg_inset 1
tablelike   u0: half_width 7..13, depth 8..22
            u1: leg_height 6..18
            u2: leg_thick 1..4, top_thick 1..3
            leg_inset 1

Every shape stands on the plane y = 3 and is centred in x and z, so all
shapes of a collection are aligned.  Chairs and tables are mirror-symmetric
in x by construction.

Fine-grained labels bucket the parameters: chairs by back height (tall if
>= 9) and leg thickness (thick if >= 3); tables by leg height (tall if >= 12)
and top width (wide if half_width >= 10).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import PatchGridConfig, ShapeCollection, ViewSet
from .errors import ArgumentError
from .features import HogConfig, extract_view_features

FAMILIES = ("chairlike", "tablelike", "mixed")
GROUND = 3
_SUBSAMPLES = 3


@dataclass(frozen=True, eq=False)
class VoxelShape:
    occupancy: np.ndarray
    family: str
    params: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.ndim != 3 or len(set(occ.shape)) != 1:
            raise ArgumentError("occupancy must be a cubic boolean grid")
        if not occ.any():
            raise ArgumentError("occupancy is empty")
        object.__setattr__(self, "occupancy", occ)

    @property
    def R(self) -> int:
        return self.occupancy.shape[0]

    @property
    def label(self) -> str:
        p = self.params
        if self.family == "chairlike":
            back = "tall-back" if p["back_height"] >= 9 else "short-back"
            legs = "thick-leg" if p["leg_thick"] >= 3 else "thin-leg"
            return f"chair:{back}:{legs}"
        legs = "tall-leg" if p["leg_height"] >= 12 else "short-leg"
        top = "wide-top" if p["half_width"] >= 10 else "narrow-top"
        return f"table:{legs}:{top}"


@dataclass(frozen=True)
class RenderSpec:
    view_set: ViewSet = field(default_factory=ViewSet.uniform)
    image_side: int = 112

    def __post_init__(self):
        az = np.asarray(self.view_set.azimuths)
        steps = np.diff(np.append(az, az[0] + 360.0))
        if not np.allclose(steps, steps[0]):
            raise ArgumentError("render views must be uniformly spaced in azimuth")


def _box(occ, x0, x1, y0, y1, z0, z1):
    occ[x0:x1, y0:y1, z0:z1] = True


def _legs(occ, c, hw, z0, depth, inset, thick, y1):
    xl = c - hw + inset
    xr = c + hw - inset - thick
    zb = z0 + inset
    zf = z0 + depth - inset - thick
    for x in (xl, xr):
        for z in (zb, zf):
            _box(occ, x, x + thick, GROUND, y1, z, z + thick)


def _affine(u, lo, hi) -> int:
    return int(round(lo + (hi - lo) * u))


def _chair(rng, R) -> tuple[np.ndarray, dict]:
    u = rng.random(4)
    p = {
        "half_width": _affine(u[0], 5, 11),
        "depth": _affine(u[0], 10, 20),
        "leg_height": _affine(u[1], 5, 13),
        "seat_thick": _affine(u[3], 1, 3),
        "leg_thick": _affine(u[3], 1, 4),
        "leg_inset": 1,
        "back_thick": _affine(u[3], 1, 3),
    }
    p["back_height"] = min(_affine(u[2], 3, 14), 28 - p["leg_height"] - p["seat_thick"])
    occ = np.zeros((R, R, R), dtype=bool)
    c = R // 2
    z0 = c - p["depth"] // 2
    seat_y = GROUND + p["leg_height"]
    top_y = seat_y + p["seat_thick"]
    _legs(occ, c, p["half_width"], z0, p["depth"], p["leg_inset"], p["leg_thick"], seat_y)
    _box(occ, c - p["half_width"], c + p["half_width"], seat_y, top_y, z0, z0 + p["depth"])
    _box(occ, c - p["half_width"], c + p["half_width"], top_y, top_y + p["back_height"],
         z0, z0 + p["back_thick"])
    return occ, p


def _table(rng, R) -> tuple[np.ndarray, dict]:
    u = rng.random(3)
    p = {
        "half_width": _affine(u[0], 7, 13),
        "depth": _affine(u[0], 8, 22),
        "leg_height": _affine(u[1], 6, 18),
        "top_thick": _affine(u[2], 1, 3),
        "leg_thick": _affine(u[2], 1, 4),
        "leg_inset": 1,
    }
    occ = np.zeros((R, R, R), dtype=bool)
    c = R // 2
    z0 = c - p["depth"] // 2
    top_y = GROUND + p["leg_height"]
    _legs(occ, c, p["half_width"], z0, p["depth"], p["leg_inset"], p["leg_thick"], top_y)
    _box(occ, c - p["half_width"], c + p["half_width"], top_y, top_y + p["top_thick"],
         z0, z0 + p["depth"])
    return occ, p


def sample_shape(family: str, seed: int, R: int = 32) -> VoxelShape:
    """Deterministic parametric shape for ``(family, seed)``."""
    if family not in FAMILIES:
        raise ArgumentError(f"unknown family {family!r}; choose from {FAMILIES}")
    if R != 32:
        raise ArgumentError("parameter ranges are defined for a 32^3 grid")
    rng = np.random.default_rng(seed)
    kind = family
    if family == "mixed":
        kind = "chairlike" if rng.random() < 0.5 else "tablelike"
    occ, params = _chair(rng, R) if kind == "chairlike" else _table(rng, R)
    return VoxelShape(occ, kind, params, seed)


def rotate_shape(shape: VoxelShape, degrees: float) -> VoxelShape:
    """Rotate about the vertical axis through the grid centre (nearest-neighbor resampling).

    The direction matches the camera ring: rendering the rotated shape at view
    v shows it as the original looks from azimuth(v) + degrees.  Multiples of
    90 degrees are exact.
    """
    occ = shape.occupancy
    quarter = degrees / 90.0
    if quarter == round(quarter):
        out = np.rot90(occ, k=-int(round(quarter)) % 4, axes=(2, 0))
    else:
        R = shape.R
        a = np.radians(-degrees)
        ca, sa = np.cos(a), np.sin(a)
        x, y, z = np.meshgrid(np.arange(R), np.arange(R), np.arange(R), indexing="ij")
        cx = x + 0.5 - R / 2
        cz = z + 0.5 - R / 2
        # inverse map of the rotation applied in _camera_basis convention
        sx = ca * cx - sa * cz + R / 2
        sz = sa * cx + ca * cz + R / 2
        ix, iz = np.floor(sx).astype(int), np.floor(sz).astype(int)
        ok = (ix >= 0) & (ix < R) & (iz >= 0) & (iz < R)
        out = np.zeros_like(occ)
        out[ok] = occ[ix[ok], y[ok], iz[ok]]
    return VoxelShape(np.ascontiguousarray(out), shape.family, dict(shape.params), shape.seed)


def _camera_basis(azimuth: float, elevation: float):
    a, e = np.radians(azimuth), np.radians(elevation)
    to_camera = np.array([np.sin(a) * np.cos(e), np.sin(e), np.cos(a) * np.cos(e)])
    forward = -to_camera
    right = np.array([np.cos(a), 0.0, -np.sin(a)])
    up = np.cross(right, forward)
    basis = np.stack([right, up, forward])
    basis[np.abs(basis) < 1e-12] = 0.0
    return basis


def _pixel_scale(R: int, side: int) -> float:
    # the vertical-axis cylinder around the grid always fits in the frame
    half_extent = R * np.sqrt(2.0) / 2.0 + 0.5
    return side / (2.0 * half_extent)


def project_point(point, R: int, spec: RenderSpec, view: int) -> tuple[float, float]:
    """(row, col) image coordinates of a grid-space point."""
    basis = _camera_basis(spec.view_set.azimuths[view], spec.view_set.elevation)
    rel = np.asarray(point, dtype=np.float64) - R / 2.0
    u, v, _ = basis @ rel
    s = _pixel_scale(R, spec.image_side)
    return spec.image_side / 2.0 - v * s, spec.image_side / 2.0 + u * s


def render(shape: VoxelShape, spec: RenderSpec, view: int) -> np.ndarray:
    """Orthographic render with front-most-surface shading, background 0.

    Each occupied voxel is supersampled into 3^3 points that are splatted into
    a depth buffer; a pixel shows 1 - depth / diameter of the grid's bounding
    sphere, so nearer surfaces are brighter.
    """
    if not 0 <= view < spec.view_set.count:
        raise ArgumentError(f"view {view} out of range")
    R = shape.R
    side = spec.image_side
    basis = _camera_basis(spec.view_set.azimuths[view], spec.view_set.elevation)
    vox = np.argwhere(shape.occupancy).astype(np.float64)
    offs = (np.arange(_SUBSAMPLES) + 0.5) / _SUBSAMPLES
    sub = np.stack(np.meshgrid(offs, offs, offs, indexing="ij"), axis=-1).reshape(-1, 3)
    pts = (vox[:, None, :] + sub[None, :, :]).reshape(-1, 3) - R / 2.0
    u, v, depth = (pts @ basis.T).T
    s = _pixel_scale(R, side)
    col = np.floor(side / 2.0 + u * s).astype(np.int64)
    row = np.floor(side / 2.0 - v * s).astype(np.int64)
    ok = (row >= 0) & (row < side) & (col >= 0) & (col < side)
    pix = row[ok] * side + col[ok]
    radius = R * np.sqrt(3.0) / 2.0
    dnorm = (depth[ok] + radius) / (2.0 * radius)
    zbuf = np.full(side * side, np.inf)
    np.minimum.at(zbuf, pix, dnorm)
    img = np.where(np.isfinite(zbuf), 1.0 - zbuf, 0.0)
    return img.reshape(side, side)


@dataclass
class SyntheticSet:
    collection: ShapeCollection
    shapes: list[VoxelShape]
    labels: dict[str, frozenset[str]]


def shape_seeds(n: int, seed: int) -> list[int]:
    return [int(s) for s in np.random.default_rng(seed).integers(0, 2**31 - 1, size=n)]


def sample_shapes(n_shapes: int, family: str, seed: int) -> list[VoxelShape]:
    """``n_shapes`` pairwise-distinct shapes; duplicates are resampled."""
    shapes: list[VoxelShape] = []
    seen: set[bytes] = set()
    seeds = iter(shape_seeds(4 * n_shapes + 16, seed))
    while len(shapes) < n_shapes:
        try:
            s = next(seeds)
        except StopIteration:
            raise ArgumentError("could not draw enough distinct shapes") from None
        shape = sample_shape(family, s)
        key = np.packbits(shape.occupancy).tobytes()
        if key not in seen:
            seen.add(key)
            shapes.append(shape)
    return shapes


def render_features(shape: VoxelShape, spec: RenderSpec, grid: PatchGridConfig,
                    hog: HogConfig) -> np.ndarray:
    """(V, G, d) features of all views of one shape."""
    return np.stack([extract_view_features(render(shape, spec, v), grid, hog)
                     for v in range(spec.view_set.count)])


def build_synthetic_collection(n_shapes: int, family: str = "chairlike",
                               spec: RenderSpec = RenderSpec(), seed: int = 0,
                               grid: PatchGridConfig = PatchGridConfig(),
                               hog: HogConfig = HogConfig(), prefix: str | None = None
                               ) -> SyntheticSet:
    """Render every shape at every view and extract its features."""
    if n_shapes < 2:
        raise ArgumentError("a collection needs at least 2 shapes")
    if grid.image_side != spec.image_side:
        raise ArgumentError("render size and patch grid image size differ")
    shapes = sample_shapes(n_shapes, family, seed)
    data = np.stack([render_features(s, spec, grid, hog) for s in shapes])
    prefix = prefix or f"{family}-s{seed}"
    ids = tuple(f"{prefix}-{i:04d}" for i in range(n_shapes))
    collection = ShapeCollection(data, ids, spec.view_set, grid)
    labels = {i: frozenset([s.label]) for i, s in zip(ids, shapes)}
    return SyntheticSet(collection, shapes, labels)
