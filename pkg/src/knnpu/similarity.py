"""Jaccard similarity over binary feature supports, plus a memoized pairwise matrix."""

from __future__ import annotations

import hashlib
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import PUDataset, SparseBinaryMatrix
from .errors import SubsetOutOfRange


class FeatureSubset:
    """Sorted set of feature columns, or every column when ``indices`` is None."""

    def __init__(self, indices=None):
        if indices is None:
            self.indices = None
        else:
            idx = np.unique(np.asarray(indices, dtype=np.int64))
            if idx.size == 0:
                raise SubsetOutOfRange("feature subset must be non-empty")
            if idx[0] < 0:
                raise SubsetOutOfRange("negative feature index in subset")
            idx.setflags(write=False)
            self.indices = idx

    @classmethod
    def all(cls) -> "FeatureSubset":
        return cls(None)

    @property
    def is_all(self) -> bool:
        return self.indices is None

    def validate(self, n_cols: int) -> None:
        if self.indices is not None and self.indices[-1] >= n_cols:
            raise SubsetOutOfRange(
                f"subset index {int(self.indices[-1])} >= n_cols={n_cols}")

    def mask(self, n_cols: int) -> np.ndarray:
        self.validate(n_cols)
        if self.indices is None:
            return np.ones(n_cols, dtype=bool)
        m = np.zeros(n_cols, dtype=bool)
        m[self.indices] = True
        return m

    @property
    def tag(self) -> str:
        if self.indices is None:
            return "all"
        return "sha256:" + hashlib.sha256(self.indices.tobytes()).hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, FeatureSubset):
            return NotImplemented
        if self.indices is None or other.indices is None:
            return self.indices is None and other.indices is None
        return np.array_equal(self.indices, other.indices)

    def __hash__(self):
        return hash(self.tag)

    def __repr__(self):
        if self.indices is None:
            return "FeatureSubset(all)"
        return f"FeatureSubset({self.indices.tolist()})"


def _as_support(v, mask) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim != 1:
        raise ValueError("expected a 1-D binary vector")
    if mask is not None:
        if mask.size != v.size:
            raise SubsetOutOfRange("subset does not match vector length")
        v = v[mask]
    return v != 0


def jaccard(a, b, subset: FeatureSubset | None = None) -> float:
    """|a & b| / |a | b| over the subset; J(0, 0) is 1.0, J(0, x) is 0.0."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("vectors differ in length")
    mask = None if subset is None or subset.is_all else subset.mask(a.size)
    sa, sb = _as_support(a, mask), _as_support(b, mask)
    inter = int(np.count_nonzero(sa & sb))
    union = int(np.count_nonzero(sa | sb))
    if union == 0:
        return 1.0
    return inter / union


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    values: np.ndarray
    subset_tag: str

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def submatrix(self, rows) -> "SimilarityMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        sub = self.values[np.ix_(rows, rows)]
        sub.setflags(write=False)
        return SimilarityMatrix(sub, self.subset_tag)


def jaccard_matrix(X: SparseBinaryMatrix, subset: FeatureSubset | None = None) -> np.ndarray:
    """Dense n x n Jaccard matrix from integer intersection/union counts."""
    if subset is not None and not subset.is_all:
        subset.validate(X.n_cols)
        X = X.select_columns(subset.indices)
    A = X.to_scipy()
    inter = (A @ A.T).toarray().astype(np.int64)
    sizes = X.row_counts().astype(np.int64)
    union = sizes[:, None] + sizes[None, :] - inter
    out = np.ones(inter.shape, dtype=np.float64)
    nz = union > 0
    # one integer/integer division per entry keeps equal fractions bit-equal
    out[nz] = inter[nz] / union[nz]
    out.setflags(write=False)
    return out


_CACHE_MAGIC = b"KNNPUSIM"
_CACHE_VERSION = 1


class SimilarityCache:
    """Memo of pairwise matrices keyed by (dataset content hash, subset tag).

    With ``directory`` set, matrices are also persisted as
    ``<key>.sim``: 8-byte magic, u32 version, u64 n, then n*n float64 row-major.
    """

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else None
        self._mem: dict[tuple[str, str], np.ndarray] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def _path(self, key):
        return self.directory / f"{key[0][:24]}_{key[1].replace(':', '-')}.sim"

    def _read(self, path, n):
        raw = path.read_bytes()
        head = struct.calcsize("<8sIQ")
        magic, version, stored_n = struct.unpack_from("<8sIQ", raw)
        if magic != _CACHE_MAGIC or version != _CACHE_VERSION or stored_n != n:
            return None
        vals = np.frombuffer(raw, dtype="<f8", offset=head).reshape(n, n).copy()
        vals.setflags(write=False)
        return vals

    def _write(self, path, vals):
        self.directory.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            fh.write(struct.pack("<8sIQ", _CACHE_MAGIC, _CACHE_VERSION, vals.shape[0]))
            fh.write(np.ascontiguousarray(vals, dtype="<f8").tobytes())
        tmp.replace(path)

    def get(self, ds: PUDataset, subset: FeatureSubset) -> np.ndarray:
        key = (ds.content_hash(), subset.tag)
        with self._lock:
            if key in self._mem:
                self.hits += 1
                return self._mem[key]
        vals = None
        if self.directory is not None and self._path(key).exists():
            vals = self._read(self._path(key), ds.n_entities)
        if vals is None:
            vals = jaccard_matrix(ds.features, subset)
            if self.directory is not None:
                self._write(self._path(key), vals)
        with self._lock:
            self.misses += 1
            self._mem.setdefault(key, vals)
            return self._mem[key]


def pairwise_matrix(ds: PUDataset, subset: FeatureSubset | None = None,
                    cache: SimilarityCache | None = None) -> SimilarityMatrix:
    subset = subset if subset is not None else FeatureSubset.all()
    subset.validate(ds.n_features)
    if cache is None:
        vals = jaccard_matrix(ds.features, subset)
    else:
        vals = cache.get(ds, subset)
    return SimilarityMatrix(vals, subset.tag)
