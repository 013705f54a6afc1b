import numpy as np
import pytest

from viewsynth.errors import ArgumentError
from viewsynth.pose import estimate_pose, synthesize_with_pose
from viewsynth.surrogate import TopK, build_table
from viewsynth.synthgen import RenderSpec, render
from viewsynth.vocabulary import quantize_collection, sample_features, train_codebook

from conftest import make_collection


def test_exact_slab_returns_its_view(chair_set):
    c = chair_set.collection
    for s, v in [(0, 0), (3, 5), (10, 15)]:
        est = estimate_pose(c, c.data[s, v])
        assert est.view == v and est.score >= 0


def test_m1_is_nearest_render():
    c = make_collection(N=5, V=4, G=4, d=3, seed=6)
    x = c.data[2, 3] + 0.001
    assert estimate_pose(c, x, m=1).view == 3


def test_shape_order_does_not_matter(chair_set):
    c = chair_set.collection
    x = c.data[7, 9] * 0.9 + c.data[8, 9] * 0.1
    perm = c.subset(np.random.default_rng(0).permutation(c.N))
    assert estimate_pose(c, x).view == estimate_pose(perm, x).view


def test_symmetric_tie_goes_to_lower_view():
    data = np.full((2, 3, 4, 1), 10.0, np.float32)
    data[0, 2] = 1.0
    data[1, 1] = -1.0   # same distance from the origin as data[0, 2]
    c = make_collection(data=data)
    assert estimate_pose(c, np.zeros((4, 1)), m=2).view == 1


def test_close_vote_outweighs_two_far_votes():
    data = np.full((3, 2, 4, 1), 50.0, np.float32)
    data[0, 0] = 0.1
    data[1, 1] = 1.0
    data[2, 1] = 1.0
    c = make_collection(data=data)
    assert estimate_pose(c, np.zeros((4, 1)), m=3).view == 0


def test_errors():
    c = make_collection()
    with pytest.raises(ArgumentError):
        estimate_pose(c, c.data[0, 0], m=0)
    with pytest.raises(ArgumentError):
        estimate_pose(c, np.zeros(5))


def test_synthesize_with_pose(chair_set):
    c = chair_set.collection
    cb = train_codebook(sample_features(c, cap=5000), W=8, seed=0)
    table = build_table(quantize_collection(c, cb))
    img = render(chair_set.shapes[4], RenderSpec(), 6)
    desc, pose = synthesize_with_pose(c, table, img, TopK(9), k=5)
    assert pose.view == 6 and desc.observed_view == 6
    forced, none = synthesize_with_pose(c, table, img, TopK(9), k=5, view=2)
    assert none is None and forced.observed_view == 2
    with pytest.raises(ArgumentError):
        synthesize_with_pose(c, table, img, view=16)
