import struct

import numpy as np
import pytest

from viewsynth.errors import FormatError
from viewsynth.io import (Manifest, load_collection, read_labels, read_mvft, read_sstb, read_vocb,
                          save_collection, write_labels, write_mvft, write_sstb, write_vocb)

from conftest import make_collection


def test_mvft_layout(tmp_path):
    data = np.arange(2 * 3 * 4 * 5, dtype=np.float32).reshape(2, 3, 4, 5)
    write_mvft(tmp_path / "a.mvft", data)
    raw = (tmp_path / "a.mvft").read_bytes()
    assert raw[:4] == b"MVFT"
    assert struct.unpack_from("<5I", raw, 4) == (1, 2, 3, 4, 5)
    assert raw[24:] == data.astype("<f4").tobytes()
    np.testing.assert_array_equal(read_mvft(tmp_path / "a.mvft"), data)


def test_mvft_truncated_and_wrong_magic(tmp_path):
    write_mvft(tmp_path / "a.mvft", np.zeros((1, 1, 2, 2), np.float32))
    raw = (tmp_path / "a.mvft").read_bytes()
    (tmp_path / "b.mvft").write_bytes(raw[:-4])
    with pytest.raises(FormatError):
        read_mvft(tmp_path / "b.mvft")
    (tmp_path / "c.mvft").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        read_mvft(tmp_path / "c.mvft")
    with pytest.raises(FormatError):
        read_mvft(tmp_path / "missing.mvft")


def test_vocb_and_sstb_round_trip(tmp_path):
    c = np.random.default_rng(0).random((4, 3)).astype(np.float32)
    write_vocb(tmp_path / "v.vocb", c)
    np.testing.assert_array_equal(read_vocb(tmp_path / "v.vocb"), c)
    g = -np.random.default_rng(1).random((2, 2, 3, 3)).astype(np.float32)
    g[0, 1, 2, 0] = -np.inf
    write_sstb(tmp_path / "t.sstb", g)
    back = read_sstb(tmp_path / "t.sstb")
    assert back.tobytes() == g.tobytes()


def test_sstb_rejects_positive(tmp_path):
    write_sstb(tmp_path / "t.sstb", np.full((1, 1, 2, 2), 0.5, np.float32))
    with pytest.raises(FormatError):
        read_sstb(tmp_path / "t.sstb")


def test_labels_round_trip(tmp_path):
    labels = {"b": {"y", "x"}, "a": set()}
    write_labels(tmp_path / "l.csv", labels)
    assert read_labels(tmp_path / "l.csv") == {"a": frozenset(), "b": frozenset({"x", "y"})}


def test_collection_directory_round_trip(tmp_path):
    c = make_collection(N=3, V=2, G=4, d=5)
    save_collection(tmp_path, c, {"s0": {"p"}}, name="toy", seeds={"gen": 3})
    back, m, labels = load_collection(tmp_path)
    assert back.equals(c)
    assert m.name == "toy" and m.seeds == {"gen": 3}
    assert labels == {"s0": frozenset({"p"})}


def test_manifest_dimension_mismatch(tmp_path):
    c = make_collection(N=3, V=2, G=4, d=5)
    save_collection(tmp_path, c)
    m = Manifest.load(tmp_path)
    m.d = 6
    m.save(tmp_path)
    with pytest.raises(FormatError):
        load_collection(tmp_path)
