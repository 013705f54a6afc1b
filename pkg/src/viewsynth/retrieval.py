"""View-agnostic distance, retrieval experiments and their evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import PatchAddress, ShapeCollection
from .errors import ArgumentError
from .surrogate import Selection, SuitabilityTable, TopK, select_region
from .synthesis import (DEFAULT_K, PatchSystems, SynthesizedDescriptor, find_neighborhood,
                        solve_qp_batch)


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, SynthesizedDescriptor) else np.asarray(x)


def vad(a, b) -> float:
    """L2 distance between two full multi-view descriptors (views aligned by index)."""
    da, db = _data(a), _data(b)
    if da.shape != db.shape:
        raise ArgumentError(f"descriptor shapes differ: {da.shape} vs {db.shape}")
    diff = (da.astype(np.float64) - db.astype(np.float64)).ravel()
    return float(np.sqrt(diff @ diff))


def baseline_l2(a: SynthesizedDescriptor, b: SynthesizedDescriptor) -> float:
    """L2 between the observed-view features only (the plain HoG baseline)."""
    if a.observed_view is None or b.observed_view is None:
        raise ArgumentError("baseline distance needs descriptors with a known observed view")
    fa = a.data[a.observed_view].astype(np.float64)
    fb = b.data[b.observed_view].astype(np.float64)
    if fa.shape != fb.shape:
        raise ArgumentError("observed-view blocks differ in shape")
    return float(np.linalg.norm(fa - fb))


def part_related_patches(table: SuitabilityTable, v0: int, user_region: Iterable[int],
                         selection: Selection = TopK()) -> frozenset[PatchAddress]:
    """Addresses whose surrogate region on v0 overlaps the user's patches.

    The user's own patches on v0 are always included.
    """
    region = set(int(g) for g in user_region)
    if not region:
        raise ArgumentError("the user region must contain at least one patch")
    if any(not 0 <= g < table.G for g in region):
        raise ArgumentError(f"user region patches must lie in [0, {table.G})")
    related = {PatchAddress(v0, g) for g in region}
    for v1 in range(table.V):
        if v1 == v0:
            continue
        for g1 in range(table.G):
            if region.intersection(select_region(table, v0, v1, g1, selection).patches):
                related.add(PatchAddress(v1, g1))
    return frozenset(related)


def part_vad(a, b, related: Iterable[PatchAddress]) -> float:
    """L2 restricted to the given (view, patch) addresses."""
    da, db = _data(a), _data(b)
    if da.shape != db.shape:
        raise ArgumentError("descriptor shapes differ")
    addrs = sorted(set(related))
    if not addrs:
        raise ArgumentError("no addresses selected")
    v = [p.view for p in addrs]
    g = [p.patch for p in addrs]
    diff = da[v, g].astype(np.float64) - db[v, g].astype(np.float64)
    return float(np.sqrt(np.einsum("ij,ij->", diff, diff)))


# --------------------------------------------------------------------------
# retrieval harness


@dataclass
class LabeledItem:
    id: str
    descriptor: SynthesizedDescriptor
    labels: frozenset[str]

    def __post_init__(self):
        self.labels = frozenset(self.labels)
        if not self.labels:
            raise ArgumentError(f"item {self.id!r} has no labels")


@dataclass
class LabeledImageSet:
    items: list[LabeledItem]

    def __post_init__(self):
        if len(self.items) < 2:
            raise ArgumentError("retrieval needs at least two items")
        shapes = {it.descriptor.shape for it in self.items}
        if len(shapes) != 1:
            raise ArgumentError("descriptors must share V, G and d")
        if len({it.id for it in self.items}) != len(self.items):
            raise ArgumentError("item ids must be unique")


@dataclass
class PRCurve:
    """Precision/recall points with non-decreasing recall and trapezoidal AUC."""

    recall: np.ndarray
    precision: np.ndarray
    auc: float = field(init=False)

    def __post_init__(self):
        self.recall = np.asarray(self.recall, dtype=np.float64)
        self.precision = np.asarray(self.precision, dtype=np.float64)
        if np.any(np.diff(self.recall) < 0):
            raise ArgumentError("recall must be non-decreasing")
        self.auc = float(np.sum(np.diff(self.recall)
                                * (self.precision[1:] + self.precision[:-1]) / 2.0))

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))


def pr_curve(distances: np.ndarray, correct: np.ndarray) -> PRCurve:
    """Pooled precision-recall curve over (query, candidate) pairs.

    Pairs are sorted by distance; pairs at equal distance enter together, so
    the curve does not depend on input order.  The curve starts at recall 0
    with the precision of the first pool.
    """
    d = np.asarray(distances, dtype=np.float64).ravel()
    y = np.asarray(correct, dtype=bool).ravel()
    if d.shape != y.shape or d.size == 0:
        raise ArgumentError("distances and correctness flags must match and be non-empty")
    positives = int(y.sum())
    if positives == 0:
        raise ArgumentError("no correct pairs; recall is undefined")
    order = np.argsort(d, kind="stable")
    d, y = d[order], y[order]
    tp = np.cumsum(y)
    last = np.append(np.flatnonzero(d[1:] != d[:-1]), d.size - 1)
    tp = tp[last].astype(np.float64)
    n = last + 1.0
    recall = tp / positives
    precision = tp / n
    return PRCurve(np.concatenate([[0.0], recall]), np.concatenate([[precision[0]], precision]))


DistanceFn = Callable[[SynthesizedDescriptor, SynthesizedDescriptor], float]


@dataclass
class RetrievalResult:
    rankings: list[tuple[str, int, str, float]]  # (query id, rank, candidate id, distance)
    curve: PRCurve | None  # None when no pair is correct
    distances: np.ndarray
    correct: np.ndarray


def competition_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks where ties share the lowest rank."""
    values = np.asarray(values)
    sorted_vals = np.sort(values, kind="stable")
    return np.searchsorted(sorted_vals, values, side="left") + 1


def distance_matrix(items: Sequence[LabeledItem], distance: str | DistanceFn = "vad",
                    related=None) -> np.ndarray:
    n = len(items)
    if distance == "vad":
        X = np.stack([it.descriptor.data.reshape(-1) for it in items])
        return _pairwise_l2(X)
    if distance == "baseline":
        X = []
        for it in items:
            d = it.descriptor
            if d.observed_view is None:
                raise ArgumentError("baseline distance needs the observed view of every item")
            X.append(d.data[d.observed_view].reshape(-1))
        return _pairwise_l2(np.stack(X))
    if distance == "part":
        if related is None:
            raise ArgumentError("part distance needs related addresses per query")
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                if i != j:
                    out[i, j] = part_vad(items[i].descriptor, items[j].descriptor, related(i))
        return out
    if callable(distance):
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                out[i, j] = out[j, i] = distance(items[i].descriptor, items[j].descriptor)
        return out
    raise ArgumentError(f"unknown distance {distance!r}")


_BLOCK = 512


def _pairwise_l2(X: np.ndarray) -> np.ndarray:
    """All-pairs L2 distances, accumulated in float64 over row blocks."""
    n = len(X)
    sq = np.concatenate([np.einsum("ij,ij->i", b, b)
                         for b in (X[i:i + _BLOCK].astype(np.float64)
                                   for i in range(0, n, _BLOCK))])
    gram = np.empty((n, n))
    for i in range(0, n, _BLOCK):
        bi = X[i:i + _BLOCK].astype(np.float64)
        for j in range(i, n, _BLOCK):
            bj = bi if j == i else X[j:j + _BLOCK].astype(np.float64)
            blk = bi @ bj.T
            gram[i:i + _BLOCK, j:j + _BLOCK] = blk
            gram[j:j + _BLOCK, i:i + _BLOCK] = blk.T
    d2 = sq[:, None] + sq[None, :] - 2.0 * gram
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(np.maximum(d2, 0.0))


def _shares_label(items: Sequence[LabeledItem]) -> np.ndarray:
    """Boolean matrix: items i and j have at least one label in common."""
    names = sorted(set().union(*(it.labels for it in items)))
    pos = {name: c for c, name in enumerate(names)}
    M = np.zeros((len(items), len(names)), dtype=np.float64)
    for i, it in enumerate(items):
        M[i, [pos[x] for x in it.labels]] = 1.0
    return (M @ M.T) > 0


def run_retrieval(image_set: LabeledImageSet, distance: str | DistanceFn = "vad",
                  related=None, keep_rankings: bool = True) -> RetrievalResult:
    """Leave-query-out retrieval over every item of the set.

    ``distance`` is "vad", "baseline", "part" (with ``related(i)`` giving the
    addresses used for query i) or a callable.  A candidate is correct when it
    shares any label with the query.  With ``keep_rankings=False`` the
    per-pair ranking list is left empty (useful for large sets).
    """
    items = image_set.items
    n = len(items)
    D = distance_matrix(items, distance, related)
    same = _shares_label(items)
    off = ~np.eye(n, dtype=bool)
    rankings = []
    if keep_rankings:
        for q in range(n):
            cand = np.flatnonzero(off[q])
            dq = D[q, cand]
            ranks = competition_ranks(dq)
            for j in np.lexsort((cand, dq)):
                rankings.append((items[q].id, int(ranks[j]), items[cand[j]].id, float(dq[j])))
    dists = D[off]
    flags = same[off]
    curve = pr_curve(dists, flags) if flags.any() else None
    return RetrievalResult(rankings, curve, dists, flags)


def evaluate_rankings(rankings: Iterable[tuple[str, int, str, float]],
                      labels: dict[str, frozenset[str]]) -> PRCurve:
    """PR curve of stored rankings against a label map."""
    d, y = [], []
    for q, _, c, dist in rankings:
        if q not in labels or c not in labels:
            raise ArgumentError(f"missing labels for {q!r} or {c!r}")
        d.append(dist)
        y.append(bool(labels[q] & labels[c]))
    return pr_curve(np.array(d), np.array(y))


# --------------------------------------------------------------------------
# weight transferability


@dataclass
class TransferMatrix:
    avg_rank: np.ndarray  # (V, V), entry (i, j): weights fitted on view i, applied to j

    @property
    def mean(self) -> float:
        return float(self.avg_rank.mean())

    @property
    def diagonal_mean(self) -> float:
        return float(np.diag(self.avg_rank).mean())


def transferability_matrix(collection: ShapeCollection, k: int = DEFAULT_K,
                           shapes: Sequence[int] | None = None) -> TransferMatrix:
    """Mean rank of weight-transferred reconstructions, per (source view, target view).

    For each held-out shape s and view i, image-wide simplex weights over the
    k nearest other shapes reconstruct s on view i; the same weights applied
    on view j give a reconstruction whose distance to the true view-j features
    is ranked among the distances of every other shape (rank 1 is best).
    """
    N, V = collection.N, collection.V
    subjects = range(N) if shapes is None else [int(s) for s in shapes]
    k = min(k, N - 1)
    if k < 1:
        raise ArgumentError("transferability needs at least two shapes")
    data = collection.data
    total = np.zeros((V, V))
    count = 0
    all_patches = list(range(collection.G))
    for s in subjects:
        rest = collection.without(s)
        target = data[s].astype(np.float64)  # (V, G, d)
        other = rest.data.astype(np.float64)
        d_true = np.sqrt(((other - target[None]) ** 2).sum(axis=(2, 3)))  # (N-1, V)
        Qs, cs, es, nbs = [], [], [], []
        for i in range(V):
            nbh = find_neighborhood(rest, target[i], i, k)
            nb = list(nbh.shape_indices)
            Q, c, e = PatchSystems(rest.data[nb, i], target[i]).system(all_patches)
            Qs.append(Q)
            cs.append(c)
            es.append(e)
            nbs.append(nb)
        W = solve_qp_batch(np.stack(Qs), np.stack(cs), np.array(es))
        for i in range(V):
            recon = np.einsum("k,kvgd->vgd", W[i], other[nbs[i]])
            d_hat = np.sqrt(((recon - target) ** 2).sum(axis=(1, 2)))  # (V,)
            total[i] += 1 + (d_true < d_hat[None, :]).sum(axis=0)
        count += 1
    return TransferMatrix(total / count)
