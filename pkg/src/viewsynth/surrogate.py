"""Surrogate suitability between patches of different views.

gamma(g0@v0 ; g1@v1) is the log probability that two shapes share the visual
word at g1@v1 given that they share the word at g0@v0.  It is estimated from
collision counts:

    gamma_hat = log sum_(x,y) N_xy (N_xy - 1) / N^2  -  log sum_x N_x (N_x - 1) / N^2

where the marginal counts are taken over the conditioning patch g0@v0.  The
plug-in N^2 denominator is biased (the unbiased one is N(N - 1)); the bias
cancels in the ratio because both terms share it.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

import numpy as np

from .errors import AddressingError, ArgumentError, EstimationError
from .vocabulary import QuantizedCollection


def collision_sum(counts: Union[Mapping, Iterable[int]], N: int) -> float:
    """Plug-in collision probability sum_x N_x (N_x - 1) / N^2."""
    values = list(counts.values()) if isinstance(counts, Mapping) else list(counts)
    if N < 2:
        raise ArgumentError("collision estimates need N >= 2 samples")
    if sum(values) != N:
        raise ArgumentError(f"counts sum to {sum(values)}, expected N={N}")
    pairs = sum(int(c) * (int(c) - 1) for c in values)
    return pairs / (N * N)


def _pair_counts(keys: np.ndarray) -> np.ndarray:
    """sum_x n_x (n_x - 1) for every column of an (N, P) integer key matrix."""
    s = np.sort(keys, axis=0, kind="stable")
    n = s.shape[0]
    pos = np.arange(n)[:, None]
    new_run = np.ones(s.shape, dtype=bool)
    new_run[1:] = s[1:] != s[:-1]
    start = np.maximum.accumulate(np.where(new_run, pos, 0), axis=0)
    # element at offset r within its run has r equal predecessors
    return 2 * (pos - start).sum(axis=0, dtype=np.int64)


def collision_terms(qc: QuantizedCollection, v0: int, g0: int, v1: int, g1: int
                    ) -> tuple[float, float]:
    """(joint collision sum, marginal collision sum over g0@v0)."""
    codes = qc.codes
    N, V, G = codes.shape
    for axis, val, size in (("v0", v0, V), ("g0", g0, G), ("v1", v1, V), ("g1", g1, G)):
        if not 0 <= val < size:
            raise AddressingError(axis, val, size)
    if N < 2:
        raise ArgumentError("estimating gamma needs at least 2 shapes")
    a = codes[:, v0, g0].astype(np.int64)
    b = codes[:, v1, g1].astype(np.int64)
    joint = Counter(zip(a.tolist(), b.tolist()))
    marginal = Counter(a.tolist())
    return collision_sum(joint, N), collision_sum(marginal, N)


def estimate_gamma(qc: QuantizedCollection, v0: int, g0: int, v1: int, g1: int
                   ) -> float | None:
    """Estimated suitability of g0@v0 as a surrogate for g1@v1.

    Returns None when undefined (no collisions at g0@v0) and -inf when g0@v0
    collides but the pair never does.
    """
    joint, marginal = collision_terms(qc, v0, g0, v1, g1)
    if marginal == 0:
        return None
    if joint == 0:
        return -math.inf
    return math.log(joint) - math.log(marginal)


@dataclass(frozen=True, eq=False)
class SuitabilityTable:
    """gamma[v0, v1, g0, g1]; undefined entries hold -inf."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.ascontiguousarray(self.gamma, dtype=np.float32)
        if g.ndim != 4 or g.shape[0] != g.shape[1] or g.shape[2] != g.shape[3]:
            raise ArgumentError(f"table must have shape (V, V, G, G), got {g.shape}")
        if np.any(np.isnan(g)) or np.any(g > 0):
            raise ArgumentError("suitability entries must be <= 0 or -inf")
        g.flags.writeable = False
        object.__setattr__(self, "gamma", g)

    @property
    def V(self) -> int:
        return self.gamma.shape[0]

    @property
    def G(self) -> int:
        return self.gamma.shape[2]


def _logs(x: np.ndarray) -> np.ndarray:
    # math.log per distinct value: np.log may differ by an ulp, and table
    # entries must equal estimate_gamma bit for bit
    uniq, inv = np.unique(x, return_inverse=True)
    return np.array([math.log(u) for u in uniq])[inv]


def build_table(qc: QuantizedCollection) -> SuitabilityTable:
    """Estimate gamma for every ordered (view, patch) pair of the collection.

    Same estimator as :func:`estimate_gamma`, vectorized over the novel patch.
    """
    codes = qc.codes.astype(np.int64)
    N, V, G = codes.shape
    if N < 2:
        raise ArgumentError("estimating gamma needs at least 2 shapes")
    flat = codes.reshape(N, V * G)
    W = max(int(qc.W), int(flat.max()) + 1)
    marginal = _pair_counts(flat)
    gamma = np.full((V * G, V * G), -np.inf)
    nn = float(N * N)
    for p0 in range(V * G):
        if marginal[p0] == 0:
            continue
        joint = _pair_counts(flat[:, p0:p0 + 1] * W + flat)
        row = np.full(V * G, -np.inf)
        hit = joint > 0
        row[hit] = _logs(joint[hit] / nn) - math.log(marginal[p0] / nn)
        gamma[p0] = row
    gamma = np.minimum(gamma, 0.0)  # guard against -0.0 / rounding above zero
    table = gamma.reshape(V, G, V, G).transpose(0, 2, 1, 3)
    return SuitabilityTable(table)


@dataclass(frozen=True)
class TopK:
    k: int = 9

    def __post_init__(self):
        if self.k < 1:
            raise ArgumentError("k_p must be at least 1")


@dataclass(frozen=True)
class Threshold:
    """Keep patches whose conditional collision probability exp(gamma) exceeds tau.

    tau = 0 keeps every defined patch; the region falls back to the single best
    patch when nothing passes.
    """

    tau: float

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ArgumentError("tau must lie in [0, 1]")


Selection = Union[TopK, Threshold]


@dataclass(frozen=True)
class SurrogateRegion:
    observed_view: int
    patches: tuple[int, ...]
    selection: Selection

    def __post_init__(self):
        if not self.patches:
            raise ArgumentError("a surrogate region cannot be empty")
        if len(set(self.patches)) != len(self.patches):
            raise ArgumentError("duplicate patches in surrogate region")


def select_region(table: SuitabilityTable, v0: int, v1: int, g1: int,
                  selection: Selection = TopK()) -> SurrogateRegion:
    """Surrogate patches on view v0 for patch g1 on view v1, best first."""
    for axis, val, size in (("v0", v0, table.V), ("v1", v1, table.V), ("g1", g1, table.G)):
        if not 0 <= val < size:
            raise AddressingError(axis, val, size)
    column = table.gamma[v0, v1, :, g1].astype(np.float64)
    defined = np.flatnonzero(np.isfinite(column))
    if defined.size == 0:
        raise EstimationError(
            f"no defined suitability for patch {g1} of view {v1} from view {v0}; "
            "use more shapes or a smaller vocabulary")
    # descending gamma, ties to the lower patch index
    ranked = defined[np.lexsort((defined, -column[defined]))]
    if isinstance(selection, TopK):
        chosen = ranked[:selection.k]
    else:
        cut = -math.inf if selection.tau == 0 else math.log(selection.tau)
        chosen = ranked[column[ranked] > cut]
        if chosen.size == 0:
            chosen = ranked[:1]
    return SurrogateRegion(v0, tuple(int(g) for g in chosen), selection)
