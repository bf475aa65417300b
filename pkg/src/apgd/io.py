"""Readers and writers for observation, factor, ratings and report files.

All float output uses the shortest round-trip representation, so a write
followed by a read reproduces every value exactly.  Readers raise
:class:`~apgd.exceptions.ParseError` carrying the 1-based line number of the
first malformed line.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ParseError
from .observe import ObservationKind, ObservationSet
from .spectral import LowRankFactors

__all__ = [
    "Triplets",
    "RatingsTable",
    "read_matrix_market",
    "write_matrix_market",
    "read_triplets",
    "write_triplets",
    "read_observations",
    "write_observations",
    "read_dense",
    "write_dense",
    "read_ratings",
    "write_ratings",
    "write_factors",
    "read_factors",
    "write_sparse_part",
    "read_json",
    "write_json",
    "config_hash",
    "fmt",
]

MM_HEADER = "%%MatrixMarket matrix coordinate real general"


def fmt(x):
    """Shortest text that parses back to the same float."""
    x = float(x)
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x)) if x != 0 or np.copysign(1.0, x) > 0 else "-0.0"
    return repr(x)


def _float(tok, path, line):
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"not a number: {tok!r}", path, line) from None


def _int(tok, path, line):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"not an integer: {tok!r}", path, line) from None


@dataclass
class Triplets:
    """Coordinate entries with 0-based indices and an optional known shape."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    shape: tuple | None = None

    def infer_shape(self):
        if self.shape is not None:
            return self.shape
        if len(self.rows) == 0:
            return (0, 0)
        return (int(self.rows.max()) + 1, int(self.cols.max()) + 1)

    def to_observations(self, shape=None, kind=ObservationKind.EntrySampling):
        shape = shape or self.infer_shape()
        return ObservationSet(self.rows, self.cols, self.vals, shape, kind=kind)


def _check_entries(rows, cols, shape, path, lines):
    if shape is None:
        return
    for k, (i, j) in enumerate(zip(rows, cols)):
        if not (0 <= i < shape[0] and 0 <= j < shape[1]):
            raise ParseError(f"index ({i}, {j}) outside shape {shape}", path, lines[k])
    keys = np.asarray(rows, dtype=np.int64) * shape[1] + np.asarray(cols, dtype=np.int64)
    _, first, counts = np.unique(keys, return_index=True, return_counts=True)
    if np.any(counts > 1):
        dup = int(np.min(np.nonzero(np.isin(keys, keys[first[counts > 1]]))[0][1:]))
        raise ParseError("duplicate entry", path, lines[dup])


def read_matrix_market(path):
    """Read a real general coordinate MatrixMarket file (1-based indices)."""
    path = str(path)
    rows, cols, vals, lines = [], [], [], []
    shape = None
    nnz = None
    with open(path) as fh:
        first = fh.readline()
        tokens = first.lower().split()
        if tokens[:3] != ["%%matrixmarket", "matrix", "coordinate"] or "real" not in tokens[3:4]:
            raise ParseError("expected a real coordinate MatrixMarket header", path, 1)
        if tokens[4:5] != ["general"]:
            raise ParseError("only 'general' symmetry is supported", path, 1)
        for lineno, raw in enumerate(fh, start=2):
            text = raw.strip()
            if not text or text.startswith("%"):
                continue
            parts = text.split()
            if shape is None:
                if len(parts) != 3:
                    raise ParseError("size line needs 'rows cols nnz'", path, lineno)
                d1, d2, nnz = (_int(t, path, lineno) for t in parts)
                shape = (d1, d2)
                continue
            if len(parts) != 3:
                raise ParseError("entry needs 'row col value'", path, lineno)
            rows.append(_int(parts[0], path, lineno) - 1)
            cols.append(_int(parts[1], path, lineno) - 1)
            vals.append(_float(parts[2], path, lineno))
            lines.append(lineno)
    if shape is None:
        raise ParseError("missing size line", path, None)
    if len(vals) != nnz:
        raise ParseError(f"expected {nnz} entries, found {len(vals)}", path, None)
    _check_entries(rows, cols, shape, path, lines)
    return Triplets(np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
                    np.array(vals, dtype=float), shape)


def write_matrix_market(path, rows, cols, vals, shape):
    with open(path, "w") as fh:
        fh.write(MM_HEADER + "\n")
        fh.write(f"{shape[0]} {shape[1]} {len(vals)}\n")
        for i, j, v in zip(rows, cols, vals):
            fh.write(f"{int(i) + 1} {int(j) + 1} {fmt(v)}\n")


def read_triplets(path, shape=None):
    """Read ``i,j,value`` lines with 0-based indices. A non-numeric first line is a header."""
    path = str(path)
    rows, cols, vals, lines = [], [], [], []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            if rec[0].lstrip().startswith("#"):
                continue
            if lineno == 1 and [c.strip() for c in rec] == ["i", "j", "value"]:
                continue
            if len(rec) != 3:
                raise ParseError(f"expected 3 fields, found {len(rec)}", path, lineno)
            rows.append(_int(rec[0].strip(), path, lineno))
            cols.append(_int(rec[1].strip(), path, lineno))
            vals.append(_float(rec[2].strip(), path, lineno))
            lines.append(lineno)
    if any(i < 0 for i in rows) or any(j < 0 for j in cols):
        k = next(k for k in range(len(rows)) if rows[k] < 0 or cols[k] < 0)
        raise ParseError("negative index", path, lines[k])
    trip = Triplets(np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
                    np.array(vals, dtype=float), shape)
    _check_entries(rows, cols, trip.infer_shape(), path, lines)
    return trip


def write_triplets(path, rows, cols, vals, header=True):
    with open(path, "w", newline="") as fh:
        if header:
            fh.write("i,j,value\n")
        for i, j, v in zip(rows, cols, vals):
            fh.write(f"{int(i)},{int(j)},{fmt(v)}\n")


def read_observations(path, shape=None, kind=ObservationKind.EntrySampling):
    """Dispatch on the file contents: MatrixMarket if the header says so, else triplet CSV."""
    with open(path) as fh:
        head = fh.readline()
    if head.lower().startswith("%%matrixmarket"):
        trip = read_matrix_market(path)
        if shape is not None and tuple(shape) != trip.shape:
            raise ParseError(f"file shape {trip.shape} disagrees with configured {tuple(shape)}", str(path), 2)
    else:
        trip = read_triplets(path, shape)
    return trip.to_observations(shape, ObservationKind.parse(kind))


def write_observations(path, obs, fmt_name="mtx"):
    if fmt_name == "mtx":
        write_matrix_market(path, obs.rows, obs.cols, obs.b, obs.shape)
    elif fmt_name == "csv":
        write_triplets(path, obs.rows, obs.cols, obs.b)
    else:
        raise ValueError(f"unknown observation format {fmt_name!r}")


def read_dense(path):
    """Read a dense comma-separated matrix with one row per line."""
    path = str(path)
    out = []
    width = None
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec:
                continue
            row = [_float(t.strip(), path, lineno) for t in rec]
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"expected {width} columns, found {len(row)}", path, lineno)
            out.append(row)
    if not out:
        raise ParseError("empty matrix file", path, None)
    return np.array(out, dtype=float)


def write_dense(path, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    with open(path, "w") as fh:
        for row in X:
            fh.write(",".join(fmt(v) for v in row) + "\n")


@dataclass
class RatingsTable:
    """``user::item::rating[::timestamp]`` records with their original ids."""

    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    timestamps: np.ndarray | None = None

    def __len__(self):
        return len(self.ratings)

    def index(self):
        """Map ids to dense 0-based indices. Returns ``(rows, cols, user_ids, item_ids)``."""
        user_ids, rows = np.unique(self.users, return_inverse=True)
        item_ids, cols = np.unique(self.items, return_inverse=True)
        return rows, cols, user_ids, item_ids

    def to_observations(self):
        rows, cols, user_ids, item_ids = self.index()
        return ObservationSet(rows, cols, self.ratings, (len(user_ids), len(item_ids)))


def read_ratings(path, sep="::"):
    path = str(path)
    users, items, ratings, stamps = [], [], [], []
    ncols = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.rstrip("\r\n")
            if not text.strip():
                continue
            parts = text.split(sep)
            if len(parts) not in (3, 4):
                raise ParseError(f"expected user{sep}item{sep}rating[{sep}timestamp]", path, lineno)
            if ncols is None:
                ncols = len(parts)
            elif len(parts) != ncols:
                raise ParseError("inconsistent field count", path, lineno)
            users.append(_int(parts[0], path, lineno))
            items.append(_int(parts[1], path, lineno))
            ratings.append(_float(parts[2], path, lineno))
            if ncols == 4:
                stamps.append(_int(parts[3], path, lineno))
    return RatingsTable(
        np.array(users, dtype=np.int64),
        np.array(items, dtype=np.int64),
        np.array(ratings, dtype=float),
        np.array(stamps, dtype=np.int64) if ncols == 4 else None,
    )


def write_ratings(path, table, sep="::"):
    with open(path, "w") as fh:
        for k in range(len(table)):
            fields = [str(int(table.users[k])), str(int(table.items[k])), fmt(table.ratings[k])]
            if table.timestamps is not None:
                fields.append(str(int(table.timestamps[k])))
            fh.write(sep.join(fields) + "\n")


def config_hash(config_dict):
    blob = json.dumps(config_dict, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_factors(out_dir, lr, config_dict=None):
    """Write ``U.csv``, ``S.csv``, ``V.csv`` and ``factors.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_dense(out / "U.csv", lr.U if lr.rank else np.zeros((lr.shape[0], 0)))
    write_dense(out / "V.csv", lr.V if lr.rank else np.zeros((lr.shape[1], 0)))
    with open(out / "S.csv", "w") as fh:
        for v in lr.S:
            fh.write(fmt(v) + "\n")
    manifest = {
        "shape": list(lr.shape),
        "rank": lr.rank,
        "files": {"U": "U.csv", "S": "S.csv", "V": "V.csv"},
        "config_hash": config_hash(config_dict) if config_dict is not None else None,
    }
    write_json(out / "factors.json", manifest)
    return manifest


def read_factors(in_dir):
    src = Path(in_dir)
    manifest = read_json(src / "factors.json")
    d1, d2 = manifest["shape"]
    r = manifest["rank"]
    if r == 0:
        return LowRankFactors.zeros((d1, d2))
    U = read_dense(src / manifest["files"]["U"]).reshape(d1, r)
    V = read_dense(src / manifest["files"]["V"]).reshape(d2, r)
    S = read_dense(src / manifest["files"]["S"]).reshape(-1)
    return LowRankFactors(U, S, V)


def write_sparse_part(path, obs, s):
    """Write the nonzero entries of a sparse part indexed like ``obs`` as ``i,j,value``."""
    s = np.asarray(s, dtype=float)
    if s.shape != (obs.n,):
        raise ValueError(f"sparse part has shape {s.shape}, expected ({obs.n},)")
    nz = np.flatnonzero(s)
    write_triplets(path, obs.rows[nz], obs.cols[nz], s[nz])


def read_json(path):
    path = str(path)
    with open(path) as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno) from None


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
