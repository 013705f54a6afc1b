"""Discrete viewpoint estimation by nearest-render voting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ShapeCollection
from .errors import ArgumentError
from .features import HogConfig, extract_view_features
from .surrogate import Selection, SuitabilityTable, TopK
from .synthesis import DEFAULT_K, SynthesizedDescriptor, synthesize_descriptor

DEFAULT_VOTES = 15
_EPS = 1e-12


@dataclass(frozen=True)
class PoseEstimate:
    view: int
    score: float  # mean-distance margin of the runner-up view over the winner, >= 0


def estimate_pose(collection: ShapeCollection, features: np.ndarray,
                  m: int = DEFAULT_VOTES) -> PoseEstimate:
    """Vote over the view labels of the m rendered slabs nearest to ``features``.

    Each vote is weighted by 1 / distance, so an exact render (distance 0)
    decides the vote on its own.  Ties go to the view with the smaller mean
    distance among its votes, then to the lower view index.
    """
    if m < 1:
        raise ArgumentError("m must be at least 1")
    if collection is None or collection.N == 0:
        raise ArgumentError("pose estimation needs a non-empty collection")
    x = np.asarray(features, dtype=np.float64).reshape(-1)
    N, V = collection.N, collection.V
    slabs = collection.data.reshape(N * V, -1).astype(np.float64)
    if x.size != slabs.shape[1]:
        raise ArgumentError("feature block does not match the collection")
    dist = np.sqrt(((slabs - x) ** 2).sum(axis=1)).reshape(N, V)
    m = min(m, N * V)
    # order by (distance, view), so shape order cannot affect which slabs vote
    flat_d = dist.ravel()
    flat_v = np.tile(np.arange(V), N)
    top = np.lexsort((flat_v, flat_d))[:m]
    counts = np.bincount(flat_v[top], minlength=V)
    votes = np.bincount(flat_v[top], weights=1.0 / (flat_d[top] + _EPS), minlength=V)
    sums = np.bincount(flat_v[top], weights=flat_d[top], minlength=V)
    means = np.where(counts > 0, sums / np.maximum(counts, 1), np.inf)
    ranking = np.lexsort((np.arange(V), means, -votes))
    winner = int(ranking[0])
    if counts[ranking[1]] > 0:
        runner_mean = means[ranking[1]]
    else:
        runner_mean = np.delete(dist, winner, axis=1).min()
    return PoseEstimate(winner, float(max(0.0, runner_mean - means[winner])))


def synthesize_with_pose(collection: ShapeCollection, table: SuitabilityTable,
                         image: np.ndarray, selection: Selection = TopK(),
                         k: int = DEFAULT_K, m: int = DEFAULT_VOTES,
                         view: int | None = None, hog: HogConfig = HogConfig()
                         ) -> tuple[SynthesizedDescriptor, PoseEstimate | None]:
    """Extract features, pick the observed view, synthesize the full descriptor.

    Passing ``view`` skips pose estimation and uses that view as ground truth.
    """
    feats = extract_view_features(image, collection.grid, hog)
    pose = None
    if view is None:
        pose = estimate_pose(collection, feats, m)
        view = pose.view
    elif not 0 <= view < collection.V:
        raise ArgumentError(f"view {view} out of range")
    return synthesize_descriptor(collection, table, feats, view, selection, k), pose
