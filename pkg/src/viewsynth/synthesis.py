"""Reconstruction weights on the observed view and their transfer to novel views.

For a surrogate region R on the observed view v0 the weights solve

    minimize    sum_{g0 in R} || x_{v0,g0} - S_{nbrs,v0,g0} w ||^2
    subject to  w >= 0,  sum(w) = 1

and a novel patch g1 of view v1 is synthesized as S_{nbrs,v1,g1} w.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import FEATURE_DTYPE, ShapeCollection
from .errors import ArgumentError, NumericError
from .surrogate import Selection, SuitabilityTable, SurrogateRegion, TopK, select_region

DEFAULT_K = 200
MAX_ITER = 10_000
REL_TOL = 1e-10
POWER_ITERS = 50


@dataclass(frozen=True)
class Neighborhood:
    shape_indices: tuple[int, ...]
    distances: tuple[float, ...]

    def __post_init__(self):
        if not self.shape_indices:
            raise ArgumentError("a neighborhood needs at least one shape")
        if len(set(self.shape_indices)) != len(self.shape_indices):
            raise ArgumentError("neighborhood indices must be unique")
        if any(b < a for a, b in zip(self.distances, self.distances[1:])):
            raise ArgumentError("neighborhood distances must be ascending")

    @property
    def k(self) -> int:
        return len(self.shape_indices)


@dataclass(frozen=True, eq=False)
class SimplexWeights:
    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ArgumentError("weights must be a non-empty vector")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ArgumentError("weights are not on the probability simplex")
        object.__setattr__(self, "w", w)


@dataclass(eq=False)
class SynthesizedDescriptor:
    """Full V x G x d descriptor of a latent object.

    ``observed_view`` is None for descriptors loaded from disk, where the
    provenance is not stored.
    """

    data: np.ndarray
    observed_view: int | None = None
    neighborhood: Neighborhood | None = None
    regions: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=FEATURE_DTYPE)
        if self.data.ndim != 3:
            raise ArgumentError(f"descriptor must be (V, G, d), got {self.data.shape}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


# --------------------------------------------------------------------------
# simplex projection


def project_simplex(y: Sequence[float]) -> SimplexWeights:
    """Euclidean projection onto {w >= 0, sum w = 1} (sort and threshold)."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise ArgumentError("project_simplex needs a non-empty vector")
    return SimplexWeights(_project_rows(y[None])[0])


def _project_rows(Y: np.ndarray) -> np.ndarray:
    k = Y.shape[1]
    U = -np.sort(-Y, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    ind = np.arange(1, k + 1)
    rho = np.count_nonzero(U - css / ind > 0, axis=1)
    theta = css[np.arange(len(Y)), rho - 1] / rho
    W = np.maximum(Y - theta[:, None], 0.0)
    # renormalize away the rounding left by the threshold
    return W / W.sum(axis=1, keepdims=True)


# --------------------------------------------------------------------------
# neighborhoods


def find_neighborhood(collection: ShapeCollection, observed_features: np.ndarray, v0: int,
                      k: int = DEFAULT_K) -> Neighborhood:
    """The k shapes closest to the input on view v0 (L2 over the whole G x d slab)."""
    if k < 1:
        raise ArgumentError("k must be at least 1")
    x = np.asarray(observed_features, dtype=np.float64)
    if x.shape != collection.data.shape[2:]:
        raise ArgumentError(f"observed features have shape {x.shape}, expected "
                            f"{collection.data.shape[2:]}")
    if not 0 <= v0 < collection.V:
        raise ArgumentError(f"observed view {v0} out of range")
    if k > collection.N:
        warnings.warn(f"k={k} exceeds collection size {collection.N}; clamping", stacklevel=2)
        k = collection.N
    slabs = collection.data[:, v0].reshape(collection.N, -1).astype(np.float64)
    dist = np.sqrt(((slabs - x.reshape(1, -1)) ** 2).sum(axis=1))
    order = np.argsort(dist, kind="stable")[:k]
    return Neighborhood(tuple(int(i) for i in order), tuple(float(dist[i]) for i in order))


# --------------------------------------------------------------------------
# quadratic program


class PatchSystems:
    """Per-patch normal equations of one observed view, centred on the neighbor mean.

    On the simplex, ||x - A w||^2 == ||(x - m) - (A - m 1^T) w||^2 for any m, so
    centring leaves the objective unchanged while removing the large common
    direction from the Gram matrix, which keeps the step size 1/L usable.
    """

    def __init__(self, neighbor_feats: np.ndarray, observed: np.ndarray):
        # neighbor_feats: (k, G, d), observed: (G, d)
        A = np.asarray(neighbor_feats, dtype=np.float64)
        x = np.asarray(observed, dtype=np.float64)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(x))):
            raise NumericError("non-finite features in weight estimation")
        mean = A.mean(axis=0)
        A = A - mean
        x = x - mean
        self.k = A.shape[0]
        self.gram = np.einsum("kgd,lgd->gkl", A, A)
        self.lin = np.einsum("kgd,gd->gk", A, x)
        self.const = np.einsum("gd,gd->g", x, x)

    def system(self, patches: Sequence[int]):
        p = sorted(patches)
        return self.gram[p].sum(axis=0), self.lin[p].sum(axis=0), float(self.const[p].sum())


def _objective(Q, c, e, w):
    return np.einsum("bi,bi->b", w, np.einsum("bij,bj->bi", Q, w)) - 2 * np.einsum("bi,bi->b", c, w) + e


def _lipschitz(Q: np.ndarray) -> np.ndarray:
    # not the all-ones vector: centred systems have Q @ 1 == 0
    v = np.random.default_rng(0).standard_normal(Q.shape[:2])
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(POWER_ITERS):
        u = np.einsum("bij,bj->bi", Q, v)
        n = np.linalg.norm(u, axis=1, keepdims=True)
        v = np.where(n > 0, u / np.where(n > 0, n, 1.0), v)
    lam = np.einsum("bi,bi->b", v, np.einsum("bij,bj->bi", Q, v))
    return 2.0 * np.maximum(lam, 0.0)


def solve_qp_batch(Q: np.ndarray, c: np.ndarray, e: np.ndarray, max_iter: int = MAX_ITER,
                   rel_tol: float = REL_TOL, trace: list | None = None) -> np.ndarray:
    """Minimize w'Qw - 2c'w + e over the simplex for a batch of problems.

    Accelerated projected gradient from the uniform point with step 1/L,
    L = 2 * lambda_max(Q) by power iteration.  A momentum step that would raise
    the objective is discarded and replaced by a plain projected-gradient step
    from the current iterate (momentum restarted), and L is doubled if even that
    fails, so accepted objectives never increase.  A problem stops when the
    relative decrease drops below ``rel_tol`` or after ``max_iter`` iterations.
    ``trace``, if given, receives one objective history list per problem.
    """
    Q = np.asarray(Q, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    B, k = c.shape
    if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(c)) and np.all(np.isfinite(e))):
        raise NumericError("non-finite quadratic program data")
    out = np.full((B, k), 1.0 / k)
    histories = [[] for _ in range(B)]
    if k == 1:
        if trace is not None:
            trace.extend([[float(v)] for v in _objective(Q, c, e, out)])
        return out
    L = _lipschitz(Q)
    idx = np.flatnonzero(L > 0)
    x = out[idx].copy()
    y = x.copy()
    t = np.ones(len(idx))
    Qa, ca, ea, La = Q[idx], c[idx], e[idx], L[idx]
    L0 = La.copy()
    fx = _objective(Qa, ca, ea, x)
    if trace is not None:
        for j, i in enumerate(idx):
            histories[i].append(float(fx[j]))
    it = 0
    while len(idx) and it < max_iter:
        it += 1
        grad = 2.0 * (np.einsum("bij,bj->bi", Qa, y) - ca)
        z = _project_rows(y - grad / La[:, None])
        fz = _objective(Qa, ca, ea, z)
        bad = fz > fx
        if bad.any():
            xb = x[bad]
            gb = 2.0 * (np.einsum("bij,bj->bi", Qa[bad], xb) - ca[bad])
            zb = _project_rows(xb - gb / La[bad, None])
            z[bad] = zb
            fz[bad] = _objective(Qa[bad], ca[bad], ea[bad], zb)
            t[bad] = 1.0
            y[bad] = xb
        scale = np.maximum(np.abs(fx), 1e-300)
        stuck = fz > fx
        # objective values carry rounding noise relative to e, not to f itself;
        # a rise within that noise, or a step already far below 1/L, means optimal
        noise = stuck & ((fz - fx <= 1e-11 * (np.abs(ea) + np.abs(fx)) + 1e-300)
                         | (La > 1e8 * L0))
        grow = stuck & ~noise
        La[grow] *= 2.0
        accept = ~stuck
        t_new = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        mom = ((t - 1.0) / t_new)[:, None]
        y = np.where(accept[:, None], z + mom * (z - x), y)
        t = np.where(accept, t_new, t)
        dec = fx - fz
        x = np.where(accept[:, None], z, x)
        fx = np.where(accept, fz, fx)
        if trace is not None:
            for j in np.flatnonzero(accept):
                histories[idx[j]].append(float(fx[j]))
        done = noise | (accept & ((dec <= rel_tol * scale) | (fx <= 1e-300)))
        if done.any():
            out[idx[done]] = x[done]
            keep = ~done
            idx, x, y, t, fx = idx[keep], x[keep], y[keep], t[keep], fx[keep]
            Qa, ca, ea, La, L0 = Qa[keep], ca[keep], ea[keep], La[keep], L0[keep]
    if len(idx):
        out[idx] = x
    if trace is not None:
        trace.extend(histories)
    return out


def solve_weights(observed_features: np.ndarray, collection: ShapeCollection,
                  neighborhood: Neighborhood, v0: int, region: SurrogateRegion,
                  trace: list | None = None) -> SimplexWeights:
    """Simplex-constrained least-squares weights fitted on the region's patches of v0."""
    if not region.patches:
        raise ArgumentError("region must be non-empty")
    feats = collection.data[list(neighborhood.shape_indices), v0]
    systems = PatchSystems(feats, observed_features)
    Q, c, e = systems.system(region.patches)
    hist: list = []
    w = solve_qp_batch(Q[None], c[None], np.array([e]), trace=hist)[0]
    if trace is not None:
        trace.extend(hist[0])
    return SimplexWeights(w)


def qp_objective(observed_features, collection, neighborhood, v0, region, w) -> float:
    """Objective value evaluated directly on the stacked (uncentred) features."""
    nb = list(neighborhood.shape_indices)
    total = 0.0
    for g in region.patches:
        A = collection.data[nb, v0, g].astype(np.float64).T
        r = np.asarray(observed_features[g], dtype=np.float64) - A @ np.asarray(w)
        total += float(r @ r)
    return total


# --------------------------------------------------------------------------
# transfer


def synthesize_patch(collection: ShapeCollection, neighborhood: Neighborhood,
                     weights: SimplexWeights | np.ndarray, v1: int, g1: int) -> np.ndarray:
    w = weights.w if isinstance(weights, SimplexWeights) else np.asarray(weights, np.float64)
    feats = collection.data[list(neighborhood.shape_indices), v1, g1].astype(np.float64)
    if len(w) != len(feats):
        raise ArgumentError("weights and neighborhood differ in length")
    return (w @ feats).astype(FEATURE_DTYPE)


@functools.lru_cache(maxsize=256)
def region_map(table: SuitabilityTable, v0: int, selection: Selection
               ) -> tuple[tuple[tuple[int, ...], ...], np.ndarray]:
    """Distinct surrogate regions seen from v0 and, per (v1, g1), the index of its region.

    The observed view itself is marked -1.
    """
    V, G = table.V, table.G
    regions: dict[tuple[int, ...], int] = {}
    index = np.full((V, G), -1, dtype=np.int64)
    for v1 in range(V):
        if v1 == v0:
            continue
        for g1 in range(G):
            key = tuple(sorted(select_region(table, v0, v1, g1, selection).patches))
            index[v1, g1] = regions.setdefault(key, len(regions))
    return tuple(regions), index


def synthesize_descriptor(collection: ShapeCollection, table: SuitabilityTable,
                          observed_features: np.ndarray, v0: int,
                          selection: Selection = TopK(), k: int = DEFAULT_K
                          ) -> SynthesizedDescriptor:
    """Synthesize all novel views patch by patch from a single observed view.

    One neighborhood is found on v0 and shared by every novel view.  Regions
    that coincide are solved once and their weights reused.
    """
    x = np.asarray(observed_features, dtype=FEATURE_DTYPE)
    if table.V != collection.V or table.G != collection.G:
        raise ArgumentError("suitability table does not match the collection")
    nbh = find_neighborhood(collection, x, v0, k)
    nb = list(nbh.shape_indices)
    regions, index = region_map(table, v0, selection)
    systems = PatchSystems(collection.data[nb, v0], x)
    Qs, cs, es = zip(*(systems.system(r) for r in regions))
    weights = solve_qp_batch(np.stack(Qs), np.stack(cs), np.array(es))

    out = np.empty(collection.data.shape[1:], dtype=np.float64)
    feats = collection.data[nb].astype(np.float64)  # (k, V, G, d)
    for v1 in range(collection.V):
        if v1 == v0:
            continue
        w = weights[index[v1]]  # (G, k)
        out[v1] = np.einsum("gk,kgd->gd", w, feats[:, v1])
    out = out.astype(FEATURE_DTYPE)
    out[v0] = x
    provenance = {"regions": regions, "region_index": index, "weights": weights}
    return SynthesizedDescriptor(out, v0, nbh, provenance)
