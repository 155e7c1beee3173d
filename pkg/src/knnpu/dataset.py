"""Sparse binary PU datasets: storage, file formats and summary statistics."""

from __future__ import annotations

import csv
import enum
import hashlib
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DuplicateId, EmptyDataset, MalformedRow, UnknownLabelToken

SPARSE_MAGIC = "#sparse"
FEATURES_MAGIC = "#features"


class PULabel(enum.Enum):
    POSITIVE = "P"
    UNLABELLED = "U"


LABEL_TOKENS = {
    "P": PULabel.POSITIVE,
    "1": PULabel.POSITIVE,
    "U": PULabel.UNLABELLED,
    "0": PULabel.UNLABELLED,
}


class Format(str, enum.Enum):
    DENSE_CSV = "dense"
    SPARSE_LIST = "sparse"


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SparseBinaryMatrix:
    """Row-compressed binary matrix; row ``i`` is ``indices[indptr[i]:indptr[i+1]]``."""

    indptr: np.ndarray
    indices: np.ndarray
    n_cols: int

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int32)
        if indptr.ndim != 1 or indptr.size == 0 or indptr[0] != 0:
            raise ValueError("indptr must be a 1-D array starting at 0")
        if np.any(np.diff(indptr) < 0) or indptr[-1] != indices.size:
            raise ValueError("indptr is inconsistent with indices")
        if indices.size:
            if indices.min() < 0 or indices.max() >= self.n_cols:
                raise ValueError("feature index out of range")
            steps = np.diff(indices.astype(np.int64))
            row_starts = indptr[1:-1]
            # a non-increasing step is only allowed where a new row begins
            bad = np.flatnonzero(steps <= 0) + 1
            if bad.size and not np.isin(bad, row_starts).all():
                raise ValueError("row indices must be strictly increasing")
        object.__setattr__(self, "indptr", _frozen(indptr))
        object.__setattr__(self, "indices", _frozen(indices))

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence[int]], n_cols: int) -> "SparseBinaryMatrix":
        rows = [np.asarray(r, dtype=np.int32) for r in rows]
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([r.size for r in rows])
        indices = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int32)
        return cls(indptr, indices, n_cols)

    @classmethod
    def from_dense(cls, dense) -> "SparseBinaryMatrix":
        dense = np.asarray(dense)
        if dense.ndim != 2:
            raise ValueError("expected a 2-D array")
        if not np.isin(dense, (0, 1)).all():
            raise ValueError("matrix is not binary")
        return cls.from_rows([np.flatnonzero(r) for r in dense], dense.shape[1])

    @property
    def n_rows(self) -> int:
        return self.indptr.size - 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, self.n_cols

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    @property
    def density(self) -> float:
        cells = self.n_rows * self.n_cols
        return self.nnz / cells if cells else 0.0

    @property
    def rows(self) -> list[np.ndarray]:
        return [self.row(i) for i in range(self.n_rows)]

    def row(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def row_counts(self) -> np.ndarray:
        return np.diff(self.indptr)

    def to_dense(self, dtype=np.uint8) -> np.ndarray:
        out = np.zeros(self.shape, dtype=dtype)
        rows = np.repeat(np.arange(self.n_rows), self.row_counts())
        out[rows, self.indices] = 1
        return out

    def to_scipy(self) -> sp.csr_matrix:
        data = np.ones(self.nnz, dtype=np.int32)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)

    def take(self, rows) -> "SparseBinaryMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        return SparseBinaryMatrix.from_rows([self.row(i) for i in rows], self.n_cols)

    def select_columns(self, cols) -> "SparseBinaryMatrix":
        """Restrict to ``cols`` (sorted), renumbering them 0..len(cols)-1."""
        cols = np.asarray(cols, dtype=np.int64)
        remap = np.full(self.n_cols, -1, dtype=np.int64)
        remap[cols] = np.arange(cols.size)
        mapped = remap[self.indices]
        keep = mapped >= 0
        row_of = np.repeat(np.arange(self.n_rows), self.row_counts())
        indptr = np.zeros(self.n_rows + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(np.bincount(row_of[keep], minlength=self.n_rows))
        return SparseBinaryMatrix(indptr, mapped[keep], int(cols.size))

    def __eq__(self, other):
        if not isinstance(other, SparseBinaryMatrix):
            return NotImplemented
        return (self.n_cols == other.n_cols
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PUDataset:
    ids: tuple[str, ...]
    labels: np.ndarray  # bool, True = Positive
    features: SparseBinaryMatrix
    feature_names: tuple[str, ...]

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=bool).copy()
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "labels", _frozen(labels))
        if not (len(self.ids) == labels.size == self.features.n_rows):
            raise ValueError("ids, labels and feature rows differ in length")
        if len(self.feature_names) != self.features.n_cols:
            raise ValueError("feature_names does not match the column count")
        if len(set(self.ids)) != len(self.ids):
            raise DuplicateId("entity ids are not unique")

    @property
    def n_entities(self) -> int:
        return len(self.ids)

    @property
    def n_features(self) -> int:
        return self.features.n_cols

    def label_of(self, i: int) -> PULabel:
        return PULabel.POSITIVE if self.labels[i] else PULabel.UNLABELLED

    def subset(self, rows) -> "PUDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return PUDataset(
            ids=[self.ids[i] for i in rows],
            labels=self.labels[rows],
            features=self.features.take(rows),
            feature_names=self.feature_names,
        )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update("\x1f".join(self.ids).encode())
        h.update(self.labels.astype(np.uint8).tobytes())
        h.update(np.int64(self.features.n_cols).tobytes())
        h.update(self.features.indptr.tobytes())
        h.update(self.features.indices.tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, PUDataset):
            return NotImplemented
        return (self.ids == other.ids
                and np.array_equal(self.labels, other.labels)
                and self.features == other.features
                and self.feature_names == other.feature_names)

    __hash__ = None


@dataclass(frozen=True)
class DatasetStats:
    n_features: int
    n_entities: int
    n_positives: int
    sparsity_percent: float

    def as_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "n_entities": self.n_entities,
            "n_positives": self.n_positives,
            "sparsity_percent": self.sparsity_percent,
        }


def _parse_label(token: str, lineno: int) -> bool:
    try:
        return LABEL_TOKENS[token.strip()] is PULabel.POSITIVE
    except KeyError:
        raise UnknownLabelToken(f"line {lineno}: unknown label token {token!r}") from None


def detect_format(path) -> Format:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    return Format.SPARSE_LIST if first.startswith(SPARSE_MAGIC) else Format.DENSE_CSV


def _check_unique(ids: list[str]) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise DuplicateId(f"duplicate entity id {i!r}")
        seen.add(i)


def _read_dense(fh) -> PUDataset:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None:
        raise EmptyDataset("file is empty")
    if len(header) < 2 or header[0].strip() != "id" or header[1].strip() != "label":
        raise MalformedRow("header must start with 'id,label'")
    names = [h.strip() for h in header[2:]]
    ids, labels, rows = [], [], []
    for lineno, rec in enumerate(reader, start=2):
        if not rec or (len(rec) == 1 and not rec[0].strip()):
            continue
        if len(rec) != len(header):
            raise MalformedRow(
                f"line {lineno}: expected {len(header)} columns, got {len(rec)}")
        cells = [c.strip() for c in rec[2:]]
        active = []
        for j, c in enumerate(cells):
            if c == "1":
                active.append(j)
            elif c != "0":
                raise MalformedRow(f"line {lineno}: non-binary feature value {c!r}")
        ids.append(rec[0].strip())
        labels.append(_parse_label(rec[1], lineno))
        rows.append(active)
    return _assemble(ids, labels, rows, names)


def _read_sparse(fh) -> PUDataset:
    first = fh.readline().strip()
    parts = first.split()
    if not parts or parts[0] != SPARSE_MAGIC or len(parts) != 2 or not parts[1].startswith("n_cols="):
        raise MalformedRow("sparse header must be '#sparse n_cols=<N>'")
    try:
        n_cols = int(parts[1][len("n_cols="):])
    except ValueError:
        raise MalformedRow("n_cols is not an integer") from None
    if n_cols < 0:
        raise MalformedRow("n_cols must be non-negative")
    names = [f"f{j}" for j in range(n_cols)]
    ids, labels, rows = [], [], []
    for lineno, line in enumerate(fh, start=2):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        if line.startswith(FEATURES_MAGIC) and lineno == 2:
            names = next(csv.reader([line[len(FEATURES_MAGIC):].lstrip()]))
            if len(names) != n_cols:
                raise MalformedRow("#features line does not list n_cols names")
            continue
        rec = line.split(",")
        if len(rec) not in (2, 3):
            raise MalformedRow(f"line {lineno}: expected 'id,label,i1;i2;...'")
        field = rec[2].strip() if len(rec) == 3 else ""
        active = []
        if field:
            try:
                active = [int(tok) for tok in field.split(";")]
            except ValueError:
                raise MalformedRow(f"line {lineno}: bad feature index list") from None
        for a, b in zip(active, active[1:]):
            if b <= a:
                raise MalformedRow(f"line {lineno}: indices must be strictly ascending")
        if active and (active[0] < 0 or active[-1] >= n_cols):
            raise MalformedRow(f"line {lineno}: feature index out of range")
        ids.append(rec[0].strip())
        labels.append(_parse_label(rec[1], lineno))
        rows.append(active)
    return _assemble(ids, labels, rows, names)


def _assemble(ids, labels, rows, names) -> PUDataset:
    if not ids:
        raise EmptyDataset("dataset has no entity rows")
    _check_unique(ids)
    return PUDataset(ids, np.array(labels, dtype=bool),
                     SparseBinaryMatrix.from_rows(rows, len(names)), names)


def load_dataset(path, format: Format | str | None = None) -> PUDataset:
    """Read a dataset; ``format=None`` sniffs the ``#sparse`` header."""
    fmt = detect_format(path) if format is None else Format(format)
    with open(path, encoding="utf-8", newline="") as fh:
        if fmt is Format.SPARSE_LIST:
            return _read_sparse(fh)
        return _read_dense(fh)


def loads_dataset(text: str, format: Format | str = Format.DENSE_CSV) -> PUDataset:
    fh = io.StringIO(text)
    return _read_sparse(fh) if Format(format) is Format.SPARSE_LIST else _read_dense(fh)


def dumps_dataset(ds: PUDataset, format: Format | str = Format.DENSE_CSV) -> str:
    out = io.StringIO()
    tokens = np.where(ds.labels, "P", "U")
    if Format(format) is Format.SPARSE_LIST:
        out.write(f"{SPARSE_MAGIC} n_cols={ds.n_features}\n")
        out.write(FEATURES_MAGIC + " ")
        csv.writer(out, lineterminator="\n").writerow(ds.feature_names)
        for i, (eid, tok) in enumerate(zip(ds.ids, tokens)):
            out.write(f"{eid},{tok},{';'.join(map(str, ds.features.row(i)))}\n")
    else:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["id", "label", *ds.feature_names])
        dense = ds.features.to_dense()
        for eid, tok, row in zip(ds.ids, tokens, dense):
            w.writerow([eid, tok, *row.tolist()])
    return out.getvalue()


def write_dataset(ds: PUDataset, path, format: Format | str = Format.DENSE_CSV) -> None:
    Path(path).write_text(dumps_dataset(ds, format), encoding="utf-8")


def compute_stats(ds: PUDataset) -> DatasetStats:
    cells = ds.n_entities * ds.n_features
    sparsity = 100.0 * (1.0 - ds.features.nnz / cells) if cells else 100.0
    return DatasetStats(
        n_features=ds.n_features,
        n_entities=ds.n_entities,
        n_positives=int(ds.labels.sum()),
        sparsity_percent=sparsity,
    )


def partition_pu(ds: PUDataset) -> tuple[np.ndarray, np.ndarray]:
    """Row indices of known positives and of unlabelled entities."""
    return np.flatnonzero(ds.labels), np.flatnonzero(~ds.labels)
