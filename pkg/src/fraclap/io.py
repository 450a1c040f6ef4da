"""CSV serializers for grid functions, sine coefficients and extension fields.

Every float is written with 17 significant digits so that a read-back is
exact and identical inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .domain import BoxDomain, GridFunction, UniformGrid
from .errors import PreconditionError
from .navier import SineBasis, SpectralCoeffs


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return "%.17g" % v


def write_rows(path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise PreconditionError(f"row has {len(row)} entries, expected {len(columns)}")
            w.writerow([fmt(v) for v in row])
    return path


def read_rows(path) -> tuple:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_text(path, text: str) -> None:
    """Write to a sibling temp file and rename over the target."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# grid functions: columns x1..xn, value


def write_grid_function(path, u: GridFunction) -> Path:
    n = u.grid.n
    X = u.grid.mesh()
    cols = [f"x{a + 1}" for a in range(n)] + ["value"]
    data = np.column_stack([Xa.ravel() for Xa in X] + [u.values.ravel()])
    return write_rows(path, cols, data.tolist())


def read_grid_function(path, domain: BoxDomain, support_radius=None) -> GridFunction:
    header, rows = read_rows(path)
    n = len(header) - 1
    if n != domain.n or header[-1] != "value":
        raise PreconditionError(f"unexpected columns {header}")
    data = np.array(rows, dtype=float)
    shape = tuple(np.unique(data[:, a]).size for a in range(n))
    g = UniformGrid(domain, shape)
    return GridFunction(g, data[:, -1].reshape(shape), support_radius)


# sine coefficients: columns j1..jn, coeff (indices start at 1)


def write_coeffs(path, c: SpectralCoeffs) -> Path:
    coeffs = np.asarray(c.coeffs)
    idx = np.indices(coeffs.shape).reshape(coeffs.ndim, -1).T + 1
    cols = [f"j{a + 1}" for a in range(coeffs.ndim)] + ["coeff"]
    rows = [[*map(int, j), float(v)] for j, v in zip(idx, coeffs.ravel())]
    return write_rows(path, cols, rows)


def read_coeffs(path, domain: BoxDomain) -> SpectralCoeffs:
    header, rows = read_rows(path)
    n = len(header) - 1
    if n != domain.n or header[-1] != "coeff":
        raise PreconditionError(f"unexpected columns {header}")
    idx = np.array([[int(v) for v in row[:n]] for row in rows])
    vals = np.array([float(row[n]) for row in rows])
    shape = tuple(int(k) for k in idx.max(axis=0))
    c = np.zeros(shape)
    c[tuple((idx - 1).T)] = vals
    return SpectralCoeffs(SineBasis(domain, shape), c)


# extension fields: columns x, y, value


def write_extension_field(path, w) -> Path:
    from .extension import field_to_table

    return write_rows(path, ("x", "y", "value"), field_to_table(w).tolist())
