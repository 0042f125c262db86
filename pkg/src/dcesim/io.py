"""File formats for exported data.

Columnar tables go to CSV or JSON, the n(theta, t) matrix to text or raw
little-endian float64 with a JSON shape sidecar, and complex matrices to
JSON with ``[re, im]`` pairs.  Every writer replaces its target atomically
and returns the written path(s).
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

MATRIX_FORMAT = "dcesim.matrix/1"


def atomic_write(path, data):
    """Write bytes or text to ``path`` through a temp file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(x):
    # repr of a float round-trips exactly
    if isinstance(x, (float, np.floating)):
        return "nan" if np.isnan(x) else repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def dumps_json(doc, *, compact=False):
    if compact:
        return json.dumps(doc, separators=(",", ":"), allow_nan=False) + "\n"
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def write_columns(path, columns, fmt="csv"):
    """Write equal-length 1-D columns; ``path`` gets the format's suffix."""
    names = list(columns)
    data = [np.asarray(columns[k]) for k in names]
    n = {len(c) for c in data}
    if len(n) > 1:
        raise ValueError("columns differ in length")
    path = Path(path).with_suffix("." + fmt)
    if fmt == "csv":
        lines = [",".join(names)]
        lines += [",".join(_fmt(c[i]) for c in data) for i in range(n.pop() if n else 0)]
        return atomic_write(path, "\n".join(lines) + "\n")
    if fmt == "json":
        doc = {"columns": names, "data": {k: [None if _isnan(v) else v.item() for v in c] for k, c in zip(names, data)}}
        return atomic_write(path, dumps_json(doc))
    raise ValueError(f"unknown columnar format {fmt!r}")


def _isnan(v):
    return isinstance(v.item(), float) and np.isnan(v)


def read_columns(path):
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        return {k: np.array([np.nan if v is None else v for v in doc["data"][k]]) for k in doc["columns"]}
    lines = path.read_text().strip().split("\n")
    names = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    out = {}
    for j, name in enumerate(names):
        col = [r[j] for r in rows]
        # zero-padded occupation labels such as "01" stay strings
        if any(len(v) > 1 and v[0] == "0" and v[1].isdigit() for v in col):
            out[name] = np.array(col)
            continue
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def write_real_matrix(path, matrix, fmt="text", *, row_label="t_s", rows=None):
    """Write a 2-D real array as round-trip decimal text or little-endian float64 binary.

    The binary form writes ``<path>.f64`` plus ``<path>.shape.json``.
    """
    matrix = np.ascontiguousarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise ValueError("expected a 2-D array")
    path = Path(path)
    if fmt == "text":
        lines = [" ".join(repr(float(v)) for v in row) for row in matrix]
        return [atomic_write(path.with_suffix(".txt"), "\n".join(lines) + "\n")]
    if fmt == "binary":
        raw = matrix.astype("<f8").tobytes()
        meta = {"dtype": "<f8", "shape": list(matrix.shape), "order": "C"}
        if rows is not None:
            meta[row_label] = [float(r) for r in rows]
        return [
            atomic_write(path.with_suffix(".f64"), raw),
            atomic_write(path.with_suffix(".shape.json"), dumps_json(meta)),
        ]
    raise ValueError(f"unknown matrix format {fmt!r}")


def read_real_matrix(path):
    path = Path(path)
    if path.suffix == ".txt":
        return np.loadtxt(path, ndmin=2)
    meta = json.loads(path.with_suffix(".shape.json").read_text())
    return np.frombuffer(path.read_bytes(), dtype=meta["dtype"]).reshape(meta["shape"])


def complex_matrix_doc(matrix, *, labels=None, **extra):
    m = np.asarray(matrix, dtype=complex)
    doc = {"format": MATRIX_FORMAT, "shape": list(m.shape)}
    doc.update(extra)
    if labels is not None:
        doc["labels"] = [list(l) for l in labels]
    doc["data"] = [[[float(z.real), float(z.imag)] for z in row] for row in m]
    return doc


def matrix_from_doc(doc):
    arr = np.asarray(doc["data"], dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def write_complex_matrix(path, matrix, *, labels=None, **extra):
    doc = complex_matrix_doc(matrix, labels=labels, **extra)
    return atomic_write(Path(path).with_suffix(".json"), dumps_json(doc, compact=True))


def read_complex_matrix(path):
    doc = json.loads(Path(path).read_text())
    return matrix_from_doc(doc), doc


def tomography_rows(subset):
    """Flatten a tomography block into (row label, column label, re, im) columns."""
    labels = ["".join(str(n) for n in lab) for lab in subset.labels]
    d = len(labels)
    i, j = np.divmod(np.arange(d * d), d)
    m = subset.matrix.ravel()
    return {
        "row": np.array(labels)[i],
        "col": np.array(labels)[j],
        "re": m.real,
        "im": m.imag,
    }


def write_json(path, doc):
    return atomic_write(Path(path), dumps_json(doc))
