import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from viewsynth.errors import ArgumentError
from viewsynth.vocabulary import (Codebook, assign, assign_many, quantize_collection,
                                  sample_features, train_codebook)

from conftest import make_collection


def test_w_equals_m_reproduces_samples():
    x = np.random.default_rng(0).random((12, 3))
    cb = train_codebook(x, W=12, seed=1)
    assert sorted(map(tuple, cb.centers)) == sorted(map(tuple, x.astype(np.float32)))
    np.testing.assert_array_equal(cb.centers[assign_many(cb, x)], x.astype(np.float32))


def test_two_blobs_converge_to_means():
    rng = np.random.default_rng(5)
    a = rng.normal(0.0, 0.1, (50, 2))
    b = rng.normal(10.0, 0.1, (50, 2))
    cb = train_codebook(np.vstack([a, b]), W=2, seed=0)
    got = cb.centers[np.argsort(cb.centers[:, 0])].astype(np.float64)
    np.testing.assert_allclose(got, [a.mean(0), b.mean(0)], atol=1e-6)


def test_training_is_deterministic():
    x = np.random.default_rng(2).random((200, 4))
    a = train_codebook(x, W=8, seed=3)
    b = train_codebook(x, W=8, seed=3)
    assert a.centers.tobytes() == b.centers.tobytes()


def test_objective_non_increasing():
    hist = []
    train_codebook(np.random.default_rng(4).random((300, 5)), W=10, seed=0, history=hist)
    assert len(hist) >= 2
    assert all(b <= a * (1 + 1e-9) for a, b in zip(hist, hist[1:]))


def test_too_few_samples():
    with pytest.raises(ArgumentError):
        train_codebook(np.zeros((3, 2)), W=4)


def test_assign_rules():
    cb = Codebook(np.array([[0.0], [10.0]]))
    assert assign(cb, np.array([4.0])) == 0
    tie = Codebook(np.array([[5.0, 0.0], [1.0, 0.0], [9.0, 9.0], [3.0, 0.0]]))
    assert assign(tie, np.array([2.0, 0.0])) == 1
    with pytest.raises(ArgumentError):
        assign(cb, np.array([1.0, 2.0]))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12))
def test_centres_map_to_themselves(seed, W):
    x = np.random.default_rng(seed).random((60, 3))
    cb = train_codebook(x, W=W, seed=seed)
    for w in range(cb.W):
        assert assign(cb, cb.centers[w]) == w


def test_quantize_collection_and_requantize():
    c = make_collection(N=6, V=2, G=4, d=3, seed=7)
    cb = train_codebook(sample_features(c), W=5, seed=0)
    qc = quantize_collection(c, cb)
    assert qc.codes.shape == (6, 2, 4)
    flat = c.data.reshape(-1, 3)
    np.testing.assert_array_equal(qc.codes.ravel(), [assign(cb, f) for f in flat])
    recon = make_collection(data=cb.centers[qc.codes])
    np.testing.assert_array_equal(quantize_collection(recon, cb).codes, qc.codes)


def test_sample_cap_is_seeded():
    c = make_collection(N=10, V=3, G=4, d=2)
    a = sample_features(c, cap=20, seed=1)
    assert a.shape == (20, 2)
    np.testing.assert_array_equal(a, sample_features(c, cap=20, seed=1))
