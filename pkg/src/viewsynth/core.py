"""Shared tensor vocabulary: view sets, patch grids and shape collections.

A collection stores all features in one float32 array laid out row-major as
(shape, view, patch, dim).  Patches are numbered row-major over the grid,
``patch = row * cols + col``.

Note on naming: ``d`` always means the per-patch feature dimension and ``W``
the visual vocabulary size.  The two are distinct quantities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import AddressingError, ArgumentError

FEATURE_DTYPE = np.float32


@dataclass(frozen=True)
class ViewSet:
    """Predefined ring of camera azimuths (degrees)."""

    azimuths: tuple[float, ...]
    elevation: float = 20.0

    def __post_init__(self):
        az = tuple(float(a) for a in self.azimuths)
        object.__setattr__(self, "azimuths", az)
        if len(az) < 2:
            raise ArgumentError("a view set needs at least 2 views")
        if any(a < 0.0 or a >= 360.0 for a in az):
            raise ArgumentError("azimuths must lie in [0, 360)")
        if any(b <= a for a, b in zip(az, az[1:])):
            raise ArgumentError("azimuths must be strictly increasing")

    @classmethod
    def uniform(cls, count: int = 16, elevation: float = 20.0) -> "ViewSet":
        if count < 2:
            raise ArgumentError("a view set needs at least 2 views")
        return cls(tuple(360.0 * i / count for i in range(count)), elevation)

    @property
    def count(self) -> int:
        return len(self.azimuths)


@dataclass(frozen=True)
class PatchGridConfig:
    image_side: int = 112
    patch_side: int = 32
    stride: int = 16

    def __post_init__(self):
        if self.patch_side <= 0 or self.stride <= 0:
            raise ArgumentError("patch_side and stride must be positive")
        if self.image_side < self.patch_side:
            raise ArgumentError("image_side must be at least patch_side")
        if (self.image_side - self.patch_side) % self.stride:
            raise ArgumentError("(image_side - patch_side) must be divisible by stride")

    @property
    def rows(self) -> int:
        return (self.image_side - self.patch_side) // self.stride + 1

    @property
    def cols(self) -> int:
        return self.rows

    @property
    def G(self) -> int:
        return self.rows * self.cols

    def offset(self, patch: int) -> tuple[int, int]:
        """Top-left pixel (row, col) of a patch."""
        if not 0 <= patch < self.G:
            raise AddressingError("patch", patch, self.G)
        r, c = divmod(patch, self.cols)
        return r * self.stride, c * self.stride


class PatchAddress(NamedTuple):
    view: int
    patch: int


@dataclass(frozen=True, eq=False)
class ShapeCollection:
    """N aligned multi-view descriptors sharing one view set and grid.

    ``data`` has shape (N, V, G, d) and is made read-only on construction.
    """

    data: np.ndarray
    ids: tuple[str, ...]
    view_set: ViewSet
    grid: PatchGridConfig = field(default_factory=PatchGridConfig)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=FEATURE_DTYPE)
        if data.ndim != 4:
            raise ArgumentError(f"collection data must be 4-D (N, V, G, d), got {data.shape}")
        n, v, g, d = data.shape
        ids = tuple(str(i) for i in self.ids)
        if n < 2:
            raise ArgumentError("a collection needs at least 2 shapes")
        if len(ids) != n:
            raise ArgumentError(f"{len(ids)} ids for {n} shapes")
        if len(set(ids)) != n:
            raise ArgumentError("shape ids must be unique")
        if v != self.view_set.count:
            raise ArgumentError(f"data has {v} views, view set has {self.view_set.count}")
        if g != self.grid.G:
            raise ArgumentError(f"data has {g} patches, grid has {self.grid.G}")
        if d < 1:
            raise ArgumentError("feature dimension must be positive")
        if not np.all(np.isfinite(data)):
            raise ArgumentError("collection features must be finite")
        if data is self.data:
            data = data.copy()
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "ids", ids)

    @property
    def N(self) -> int:
        return self.data.shape[0]

    @property
    def V(self) -> int:
        return self.data.shape[1]

    @property
    def G(self) -> int:
        return self.data.shape[2]

    @property
    def feature_dim(self) -> int:
        return self.data.shape[3]

    def check_address(self, addr: PatchAddress) -> None:
        if not 0 <= addr.view < self.V:
            raise AddressingError("view", addr.view, self.V)
        if not 0 <= addr.patch < self.G:
            raise AddressingError("patch", addr.patch, self.G)

    def check_shape(self, shape: int) -> None:
        if not 0 <= shape < self.N:
            raise AddressingError("shape", shape, self.N)

    def subset(self, indices: Sequence[int]) -> "ShapeCollection":
        """New collection holding only ``indices`` (in the given order)."""
        idx = [int(i) for i in indices]
        for i in idx:
            self.check_shape(i)
        return ShapeCollection(self.data[idx], tuple(self.ids[i] for i in idx),
                               self.view_set, self.grid)

    def without(self, shape: int) -> "ShapeCollection":
        self.check_shape(shape)
        return self.subset([i for i in range(self.N) if i != shape])

    def equals(self, other: "ShapeCollection") -> bool:
        return (self.ids == other.ids and self.view_set == other.view_set
                and self.grid == other.grid and self.data.shape == other.data.shape
                and self.data.tobytes() == other.data.tobytes())


def slice_patch(collection: ShapeCollection, shape: int, addr: PatchAddress) -> np.ndarray:
    """Feature vector of one patch of one view of one shape (read-only view)."""
    collection.check_shape(shape)
    collection.check_address(addr)
    return collection.data[shape, addr.view, addr.patch]


def patch_matrix(collection: ShapeCollection, subset: Sequence[int],
                 addr: PatchAddress) -> np.ndarray:
    """d x len(subset) matrix whose j-th column is patch ``addr`` of shape ``subset[j]``."""
    if len(subset) == 0:
        raise ArgumentError("subset must be non-empty")
    for s in subset:
        collection.check_shape(int(s))
    collection.check_address(addr)
    return collection.data[np.asarray(subset, dtype=np.intp), addr.view, addr.patch].T
