"""Slow reference implementations used to check the vectorized code."""

import itertools
import math

import numpy as np


def pairwise_collision_gamma(a, b):
    """(joint, marginal, gamma) by enumerating all unordered shape pairs.

    Returns gamma None when the marginal has no collisions and -inf when only
    the joint has none.
    """
    N = len(a)
    joint_pairs = marg_pairs = 0
    for i, j in itertools.combinations(range(N), 2):
        if a[i] == a[j]:
            marg_pairs += 1
            if b[i] == b[j]:
                joint_pairs += 1
    joint = 2 * joint_pairs / (N * N)
    marginal = 2 * marg_pairs / (N * N)
    if marginal == 0:
        return joint, marginal, None
    if joint == 0:
        return joint, marginal, -math.inf
    return joint, marginal, math.log(joint) - math.log(marginal)


def simplex_grid(k, step=1e-3):
    """All points of the k-simplex on a regular grid (k <= 3)."""
    m = int(round(1 / step))
    if k == 1:
        return np.ones((1, 1))
    if k == 2:
        t = np.arange(m + 1) / m
        return np.stack([t, 1 - t], axis=1)
    i, j = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
    keep = i + j <= m
    i, j = i[keep], j[keep]
    return np.stack([i, j, m - i - j], axis=1) / m


def grid_qp_minimum(A, b, step=1e-3):
    """Minimum of ||A w - b||^2 over a simplex grid; A is (d, k)."""
    pts = simplex_grid(A.shape[1], step)
    r = pts @ A.T - b
    return float(np.min(np.einsum("ij,ij->i", r, r)))
