"""Binary tensor formats and the collection manifest.

Every binary file starts with a 4-byte magic, a little-endian u32 version and
u32 dimensions, followed by a little-endian float32 payload in row-major order:

    MVFT  dims N, V, G, d   payload N*V*G*d   multi-view feature tensor
    VOCB  dims W, d         payload W*d       codebook centres
    SSTB  dims V, V, G, G   payload V*V*G*G   suitability table (-inf allowed)

Headers are validated against the payload length before anything is returned.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError

VERSION = 1
_LE_F32 = np.dtype("<f4")

_MAGIC_DIMS = {b"MVFT": 4, b"VOCB": 2, b"SSTB": 4}


def _write(path, magic: bytes, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype=_LE_F32)
    header = magic + struct.pack("<I", VERSION) + struct.pack(f"<{array.ndim}I", *array.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(array.tobytes(order="C"))


def _read(path, magic: bytes) -> np.ndarray:
    ndim = _MAGIC_DIMS[magic]
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    head = 8 + 4 * ndim
    if len(raw) < head:
        raise FormatError(f"{path}: truncated header")
    if raw[:4] != magic:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {magic!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    dims = struct.unpack_from(f"<{ndim}I", raw, 8)
    expected = int(np.prod(dims, dtype=np.int64)) * 4
    if len(raw) - head != expected:
        raise FormatError(f"{path}: payload is {len(raw) - head} bytes, header {dims} "
                          f"implies {expected}")
    arr = np.frombuffer(raw, dtype=_LE_F32, offset=head).reshape(dims)
    return arr.astype(np.float32)


def write_mvft(path, data: np.ndarray) -> None:
    data = np.asarray(data)
    if data.ndim != 4:
        raise FormatError(f"MVFT payload must be 4-D (N, V, G, d), got {data.shape}")
    _write(path, b"MVFT", data)


def read_mvft(path) -> np.ndarray:
    data = _read(path, b"MVFT")
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite features")
    return data


def write_vocb(path, centers: np.ndarray) -> None:
    _write(path, b"VOCB", np.asarray(centers).reshape(len(centers), -1))


def read_vocb(path) -> np.ndarray:
    return _read(path, b"VOCB")


def write_sstb(path, gamma: np.ndarray) -> None:
    gamma = np.asarray(gamma)
    if gamma.ndim != 4:
        raise FormatError("SSTB payload must be 4-D (V, V, G, G)")
    _write(path, b"SSTB", gamma)


def read_sstb(path) -> np.ndarray:
    gamma = _read(path, b"SSTB")
    v0, v1, g0, g1 = gamma.shape
    if v0 != v1 or g0 != g1:
        raise FormatError(f"{path}: SSTB dims must be (V, V, G, G), got {gamma.shape}")
    if np.any(np.isnan(gamma)) or np.any(gamma > 0):
        raise FormatError(f"{path}: suitability entries must be <= 0 or -inf")
    return gamma


@dataclass
class Manifest:
    """Collection directory index (``manifest.json``)."""

    name: str
    V: int
    rows: int
    cols: int
    d: int
    azimuths: list[float]
    shape_ids: list[str]
    image_side: int = 112
    patch_side: int = 32
    stride: int = 16
    elevation: float = 20.0
    features: str = "features.mvft"
    labels: str | None = "labels.csv"
    vocabulary: str | None = None
    table: str | None = None
    W: int | None = None
    defaults: dict = field(default_factory=lambda: {"k": 200, "kp": 9, "W": 256, "seed": 0})
    seeds: dict = field(default_factory=dict)

    FILENAME = "manifest.json"

    def save(self, directory) -> Path:
        path = Path(directory) / self.FILENAME
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, directory) -> "Manifest":
        path = Path(directory) / cls.FILENAME
        try:
            raw = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise FormatError(f"cannot read manifest {path}: {exc}") from exc
        try:
            return cls(**raw)
        except TypeError as exc:
            raise FormatError(f"{path}: {exc}") from exc


# --------------------------------------------------------------------------
# collection directories


def write_labels(path, labels: dict) -> None:
    """CSV ``id,labels`` with labels joined by ';' (sorted for stable output)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "labels"])
        for key in sorted(labels):
            w.writerow([key, ";".join(sorted(labels[key]))])


def read_labels(path) -> dict[str, frozenset[str]]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise FormatError(f"cannot read labels {path}: {exc}") from exc
    try:
        return {r["id"]: frozenset(x for x in r["labels"].split(";") if x) for r in rows}
    except (KeyError, AttributeError) as exc:
        raise FormatError(f"{path}: expected columns id,labels") from exc


def save_collection(directory, collection, labels: dict | None = None,
                    name: str = "collection", seeds: dict | None = None) -> Manifest:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(
        name=name, V=collection.V, rows=collection.grid.rows, cols=collection.grid.cols,
        d=collection.feature_dim, azimuths=list(collection.view_set.azimuths),
        shape_ids=list(collection.ids), image_side=collection.grid.image_side,
        patch_side=collection.grid.patch_side, stride=collection.grid.stride,
        elevation=collection.view_set.elevation, labels="labels.csv" if labels else None,
        seeds=dict(seeds or {}))
    write_mvft(directory / manifest.features, collection.data)
    if labels:
        write_labels(directory / manifest.labels, labels)
    manifest.save(directory)
    return manifest


def load_collection(directory):
    """(collection, manifest, labels or None); every header is checked against the manifest."""
    from .core import PatchGridConfig, ShapeCollection, ViewSet
    from .errors import ArgumentError

    directory = Path(directory)
    m = Manifest.load(directory)
    data = read_mvft(directory / m.features)
    expect = (len(m.shape_ids), m.V, m.rows * m.cols, m.d)
    if data.shape != expect:
        raise FormatError(f"{m.features}: dims {data.shape} do not match manifest {expect}")
    try:
        grid = PatchGridConfig(m.image_side, m.patch_side, m.stride)
        if (grid.rows, grid.cols) != (m.rows, m.cols):
            raise FormatError("manifest grid rows/cols disagree with image/patch/stride")
        collection = ShapeCollection(data, tuple(m.shape_ids), ViewSet(tuple(m.azimuths),
                                                                       m.elevation), grid)
    except ArgumentError as exc:
        raise FormatError(f"{directory}: {exc}") from exc
    labels = read_labels(directory / m.labels) if m.labels else None
    return collection, m, labels


def load_codebook(directory, manifest: Manifest):
    from .vocabulary import Codebook

    if not manifest.vocabulary:
        raise FormatError("collection has no vocabulary; run build-vocab first")
    centers = read_vocb(Path(directory) / manifest.vocabulary)
    if centers.shape != (manifest.W, manifest.d):
        raise FormatError(f"codebook dims {centers.shape} do not match manifest "
                          f"({manifest.W}, {manifest.d})")
    return Codebook(centers, int(manifest.seeds.get("vocab", 0)))


def load_table(directory, manifest: Manifest):
    from .surrogate import SuitabilityTable

    if not manifest.table:
        raise FormatError("collection has no suitability table; run build-suitability first")
    gamma = read_sstb(Path(directory) / manifest.table)
    G = manifest.rows * manifest.cols
    if gamma.shape != (manifest.V, manifest.V, G, G):
        raise FormatError(f"table dims {gamma.shape} do not match manifest")
    return SuitabilityTable(gamma)
