"""Right-censored survival data and its CSV format.

The CSV has a header with columns ``time`` and ``status`` (1 event,
0 censored), optional covariates ``x1 .. xd`` and an optional ``cluster``
column of group labels.
"""

import csv
from dataclasses import dataclass
import re

import numpy as np

from ._errors import DataError

__all__ = ["Dataset", "read_csv", "write_csv"]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observations ``(y, delta, x, cluster)``.

    Parameters
    ----------
    y : array_like, shape (n,)
        Observed times, strictly positive.
    delta : array_like, shape (n,)
        Event indicators in {0, 1}.
    x : array_like, shape (n, d), optional
    cluster : array_like, shape (n,), optional
        Group labels; any hashable values, mapped to integer codes.
    """

    y: np.ndarray
    delta: np.ndarray
    x: np.ndarray = None
    cluster: np.ndarray = None

    def __post_init__(self):
        y = np.array(self.y, dtype=float).ravel()
        delta = np.array(self.delta).ravel()
        n = y.size
        if n == 0:
            raise DataError("dataset is empty")
        if delta.size != n:
            raise DataError("time and status columns differ in length")
        if not np.all(np.isin(delta, (0, 1))):
            raise DataError("status must be 0 or 1")
        if not np.all(np.isfinite(y)) or np.any(y <= 0):
            raise DataError("times must be positive and finite")
        x = np.zeros((n, 0)) if self.x is None else np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] != n or not np.all(np.isfinite(x)):
            raise DataError("covariates must be a finite (n, d) array")
        cluster = self.cluster
        if cluster is not None:
            cluster = np.unique(np.asarray(cluster).ravel(), return_inverse=True)[1].ravel()
            if cluster.size != n:
                raise DataError("cluster column has the wrong length")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "delta", delta.astype(int))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "cluster", cluster)

    def __len__(self):
        return self.y.size

    @property
    def n_covariates(self):
        return self.x.shape[1]

    @property
    def n_events(self):
        return int(self.delta.sum())

    def subset(self, mask):
        return Dataset(
            self.y[mask], self.delta[mask], self.x[mask],
            None if self.cluster is None else self.cluster[mask],
        )


def read_csv(path):
    """Load a :class:`Dataset`; raises :class:`DataError` on malformed input."""
    try:
        with open(path, newline="") as fh:
            header, *rows = list(csv.reader(fh)) or [[]]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    header = [c.strip() for c in header]
    if "time" not in header or "status" not in header:
        raise DataError("CSV needs 'time' and 'status' columns")
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path} has no data rows")
    for i, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise DataError(f"line {i} of {path} has {len(r)} fields, expected {len(header)}")
    col = {c: j for j, c in enumerate(header)}
    xcols = sorted((c for c in header if re.fullmatch(r"x\d+", c)), key=lambda c: int(c[1:]))
    try:
        y = [float(r[col["time"]]) for r in rows]
        delta = [float(r[col["status"]]) for r in rows]
        x = [[float(r[col[c]]) for c in xcols] for r in rows]
    except ValueError as exc:
        raise DataError(f"non-numeric entry in {path}: {exc}") from exc
    cluster = [r[col["cluster"]] for r in rows] if "cluster" in col else None
    return Dataset(y, delta, np.array(x).reshape(len(rows), len(xcols)), cluster)


def write_csv(data, path_or_file, precision=17):
    """Write ``data`` in the CSV format read by :func:`read_csv`."""
    fmt = f"{{:.{precision}g}}"
    header = ["time", "status"] + [f"x{j + 1}" for j in range(data.n_covariates)]
    if data.cluster is not None:
        header.append("cluster")

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(data)):
            row = [fmt.format(data.y[i]), int(data.delta[i])]
            row += [fmt.format(v) for v in data.x[i]]
            if data.cluster is not None:
                row.append(int(data.cluster[i]))
            w.writerow(row)

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            emit(fh)
