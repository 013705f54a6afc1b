"""Visual-word quantization with a single codebook shared by all views and patches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ShapeCollection
from .errors import ArgumentError

MAX_ITER = 100
SAMPLE_CAP = 100_000
_CHUNK = 8192


@dataclass(frozen=True, eq=False)
class Codebook:
    centers: np.ndarray
    seed: int = 0

    def __post_init__(self):
        c = np.ascontiguousarray(self.centers, dtype=np.float32)
        if c.ndim != 2 or len(c) < 2:
            raise ArgumentError("a codebook needs a (W >= 2, d) centre matrix")
        if not np.all(np.isfinite(c)):
            raise ArgumentError("codebook centres must be finite")
        c.flags.writeable = False
        object.__setattr__(self, "centers", c)

    @property
    def W(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True, eq=False)
class QuantizedCollection:
    codes: np.ndarray  # (N, V, G) integer words in [0, W)
    W: int

    @property
    def N(self) -> int:
        return self.codes.shape[0]


def _nearest(x: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of and squared distance to the nearest centre for each row of ``x``.

    Uses the expanded form for speed, then re-evaluates near-ties with exact
    differences so that ties always go to the lowest index.
    """
    x = np.asarray(x, dtype=np.float64)
    c = np.asarray(centers, dtype=np.float64)
    c_sq = np.einsum("ij,ij->i", c, c)
    idx = np.empty(len(x), dtype=np.int64)
    dist = np.empty(len(x))
    for start in range(0, len(x), _CHUNK):
        xb = x[start:start + _CHUNK]
        d2 = np.einsum("ij,ij->i", xb, xb)[:, None] - 2.0 * xb @ c.T + c_sq[None, :]
        best = d2.min(axis=1)
        slack = 1e-9 * (np.abs(best) + np.einsum("ij,ij->i", xb, xb) + 1e-300) + 1e-12
        near = d2 <= (best + slack)[:, None]
        bi = np.argmax(near, axis=1)
        bd = np.maximum(best, 0.0)
        for r in np.flatnonzero(near.sum(axis=1) > 1):
            cand = np.flatnonzero(near[r])
            exact = ((c[cand] - xb[r]) ** 2).sum(axis=1)
            j = int(np.argmin(exact))
            bi[r], bd[r] = cand[j], exact[j]
        idx[start:start + len(xb)] = bi
        dist[start:start + len(xb)] = bd
    return idx, dist


def _kmeanspp(x: np.ndarray, W: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, W):
        total = d2.sum()
        if total <= 0:
            raise ArgumentError(f"fewer than W={W} distinct samples")
        j = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
        j = min(j, n - 1)
        while d2[j] <= 0:  # guard against landing on a zero-mass point via rounding
            j = (j + 1) % n
        chosen.append(j)
        d2 = np.minimum(d2, ((x - x[j]) ** 2).sum(axis=1))
    return x[chosen].copy()


def train_codebook(samples: np.ndarray, W: int = 256, seed: int = 0,
                   max_iter: int = MAX_ITER, history: list | None = None) -> Codebook:
    """Lloyd's k-means with k-means++ seeding.

    Stops when no assignment changes or after ``max_iter`` iterations.  An
    empty cluster is re-seeded to the sample farthest from its own centre.
    The objective is asserted non-increasing; pass a list as ``history`` to
    receive the per-iteration objective values.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ArgumentError("samples must be an (M, d) matrix")
    if W < 2:
        raise ArgumentError("W must be at least 2")
    if len(x) < W:
        raise ArgumentError(f"need at least W={W} samples, got {len(x)}")
    if not np.all(np.isfinite(x)):
        raise ArgumentError("samples must be finite")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(x, W, rng)
    labels = None
    prev = np.inf
    for _ in range(max_iter):
        new_labels, d2 = _nearest(x, centers)
        objective = float(d2.sum())
        assert objective <= prev * (1 + 1e-9) + 1e-9, "k-means objective increased"
        prev = objective
        if history is not None:
            history.append(objective)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=W)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not nonempty.all():
            d2 = d2.copy()
            for w in np.flatnonzero(~nonempty):
                far = int(np.argmax(d2))
                centers[w] = x[far]
                d2[far] = 0.0
    return Codebook(centers.astype(np.float32), seed)


def assign(code_book: Codebook, x: np.ndarray) -> int:
    """Nearest centre by squared L2; ties go to the lowest index."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (code_book.dim,):
        raise ArgumentError(f"feature has shape {x.shape}, codebook expects ({code_book.dim},)")
    return int(_nearest(x[None], code_book.centers)[0][0])


def assign_many(code_book: Codebook, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != code_book.dim:
        raise ArgumentError("feature matrix does not match codebook dimension")
    return _nearest(x, code_book.centers)[0]


def sample_features(collection: ShapeCollection, cap: int = SAMPLE_CAP,
                    seed: int = 0) -> np.ndarray:
    """Uniform subsample (without replacement) of all patch features."""
    flat = collection.data.reshape(-1, collection.feature_dim)
    if len(flat) <= cap:
        return flat.astype(np.float64)
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(flat), size=cap, replace=False))
    return flat[pick].astype(np.float64)


def quantize_collection(collection: ShapeCollection, code_book: Codebook) -> QuantizedCollection:
    if collection.feature_dim != code_book.dim:
        raise ArgumentError("collection and codebook feature dimensions differ")
    flat = collection.data.reshape(-1, collection.feature_dim)
    codes = assign_many(code_book, flat).reshape(collection.N, collection.V, collection.G)
    return QuantizedCollection(codes.astype(np.int32), code_book.W)
