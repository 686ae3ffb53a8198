"""CSV ingestion and emission for observation streams.

Formats (all indices 1-based on disk, converted here and only here):

* matrix stream:  header ``t,index,value``; rows sorted by ``(t, index)``;
  sidecar JSON descriptor ``{"kind": "matrix", "P": <int>}``.
* tensor stream:  header ``t,m,n,value``; descriptor
  ``{"kind": "tensor", "M": <int>, "N": <int>}``.
* ground truth:   ``t,value_1,...,value_P`` dense rows for matrix streams,
  ``t,m,n,value`` dense rows for tensor streams.

Time gaps yield explicit empty observations so trackers see every t.
Floats are written with 17 significant digits (value-preserving round trip).
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import MaskedSlice, MaskedVector
from .exceptions import StreamFormatError

_FLT = "{:.17g}"


def default_descriptor_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def read_descriptor(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        desc = json.load(fh)
    kind = desc.get("kind")
    if kind == "matrix":
        if "P" not in desc:
            raise StreamFormatError("matrix descriptor missing 'P'")
    elif kind == "tensor":
        if "M" not in desc or "N" not in desc:
            raise StreamFormatError("tensor descriptor missing 'M'/'N'")
    else:
        raise StreamFormatError(f"unknown stream kind {kind!r}")
    return desc


def _parse_int(token, what, line_no):
    try:
        return int(token)
    except ValueError:
        raise StreamFormatError(f"bad {what} {token!r}", line_no) from None


def _parse_float(token, line_no):
    try:
        return float(token)
    except ValueError:
        raise StreamFormatError(f"bad value {token!r}", line_no) from None


def read_triplet_stream(csv_path, descriptor_path=None):
    """Parse a stream file into MaskedVector or MaskedSlice records.

    Records are grouped by ascending ``t`` starting at 1; missing time
    steps become empty observations.  Raises :class:`StreamFormatError`
    naming the offending line for malformed rows, non-monotone ``t`` or
    out-of-range indices.
    """
    if descriptor_path is None:
        descriptor_path = default_descriptor_path(csv_path)
    desc = read_descriptor(descriptor_path)
    if desc["kind"] == "matrix":
        return _read_matrix_stream(csv_path, int(desc["P"]))
    return _read_tensor_stream(csv_path, int(desc["M"]), int(desc["N"]))


def _read_rows(csv_path, header, n_fields):
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        return []
    if lines[0].strip() != header:
        raise StreamFormatError(
            f"expected header {header!r}, got {lines[0]!r}", 1
        )
    rows = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != n_fields:
            raise StreamFormatError(
                f"expected {n_fields} fields, got {len(parts)}", line_no
            )
        rows.append((line_no, parts))
    return rows


def _read_matrix_stream(csv_path, ambient_dim):
    rows = _read_rows(csv_path, "t,index,value", 3)
    out = []
    cur_t, cur_idx, cur_val = 1, [], []

    def flush_through(t_next):
        nonlocal cur_t, cur_idx, cur_val
        while cur_t < t_next:
            out.append(
                MaskedVector(cur_t, np.array(cur_idx, dtype=np.int64),
                             np.array(cur_val), ambient_dim)
            )
            cur_t, cur_idx, cur_val = cur_t + 1, [], []

    for line_no, (t_s, i_s, v_s) in rows:
        t = _parse_int(t_s, "time index", line_no)
        i = _parse_int(i_s, "index", line_no)
        v = _parse_float(v_s, line_no)
        if t < 1:
            raise StreamFormatError(f"time index {t} < 1", line_no)
        if t < cur_t:
            raise StreamFormatError(
                f"non-monotone time index {t} after {cur_t}", line_no
            )
        if not (1 <= i <= ambient_dim):
            raise StreamFormatError(
                f"index {i} out of range [1, {ambient_dim}]", line_no
            )
        flush_through(t)
        if cur_idx and i - 1 <= cur_idx[-1]:
            raise StreamFormatError(
                f"index {i} not strictly increasing within t={t}", line_no
            )
        cur_idx.append(i - 1)
        cur_val.append(v)
    if rows:
        flush_through(cur_t + 1)
    return out


def _read_tensor_stream(csv_path, M, N):
    rows = _read_rows(csv_path, "t,m,n,value", 4)
    out = []
    cur_t, cur = 1, []

    def flush_through(t_next):
        nonlocal cur_t, cur
        while cur_t < t_next:
            if cur:
                r, c, v = map(np.array, zip(*cur))
            else:
                r = c = np.empty(0, dtype=np.int64)
                v = np.empty(0)
            out.append(MaskedSlice(cur_t, r, c, v, (M, N)))
            cur_t, cur = cur_t + 1, []

    for line_no, (t_s, m_s, n_s, v_s) in rows:
        t = _parse_int(t_s, "time index", line_no)
        m = _parse_int(m_s, "row index", line_no)
        n = _parse_int(n_s, "col index", line_no)
        v = _parse_float(v_s, line_no)
        if t < 1:
            raise StreamFormatError(f"time index {t} < 1", line_no)
        if t < cur_t:
            raise StreamFormatError(
                f"non-monotone time index {t} after {cur_t}", line_no
            )
        if not (1 <= m <= M) or not (1 <= n <= N):
            raise StreamFormatError(
                f"cell ({m}, {n}) outside {M}x{N}", line_no
            )
        flush_through(t)
        if cur and (m - 1, n - 1) <= (cur[-1][0], cur[-1][1]):
            raise StreamFormatError(
                f"cells not strictly increasing within t={t}", line_no
            )
        cur.append((m - 1, n - 1, v))
    if rows:
        flush_through(cur_t + 1)
    return out


def write_triplet_stream(observations, csv_path, descriptor_path=None):
    """Write observations plus the sidecar descriptor; inverse of the reader."""
    observations = list(observations)
    if descriptor_path is None:
        descriptor_path = default_descriptor_path(csv_path)
    if observations and isinstance(observations[0], MaskedSlice):
        desc = {"kind": "tensor", "M": observations[0].dims[0],
                "N": observations[0].dims[1]}
        lines = ["t,m,n,value"]
        for obs in observations:
            for m, n, v in zip(obs.rows, obs.cols, obs.values):
                lines.append(f"{obs.t},{m + 1},{n + 1}," + _FLT.format(v))
    else:
        if not observations:
            raise ValueError("cannot infer descriptor from an empty stream")
        desc = {"kind": "matrix", "P": observations[0].ambient_dim}
        lines = ["t,index,value"]
        for obs in observations:
            for i, v in zip(obs.indices, obs.values):
                lines.append(f"{obs.t},{i + 1}," + _FLT.format(v))
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(descriptor_path, "w", encoding="utf-8") as fh:
        json.dump(desc, fh)
        fh.write("\n")


def write_matrix_truth(truth_rows, csv_path):
    """Write dense ground-truth rows ``t,value_1,...,value_P``."""
    lines = []
    for t, x in truth_rows:
        lines.append(str(t) + "," + ",".join(_FLT.format(v) for v in x))
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_matrix_truth(csv_path):
    """Read dense ground-truth rows; returns dict t -> vector."""
    out = {}
    with open(csv_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            t = _parse_int(parts[0], "time index", line_no)
            out[t] = np.array([_parse_float(p, line_no) for p in parts[1:]])
    return out


def write_tensor_truth(truth_slices, csv_path):
    """Write dense ground-truth slices as ``t,m,n,value`` rows."""
    lines = []
    for t, X in truth_slices:
        M, N = X.shape
        for m in range(M):
            for n in range(N):
                lines.append(f"{t},{m + 1},{n + 1}," + _FLT.format(X[m, n]))
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_tensor_truth(csv_path, dims):
    """Read dense ground-truth slices; returns dict t -> (M, N) array."""
    M, N = dims
    out = {}
    with open(csv_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != 4:
                raise StreamFormatError("expected t,m,n,value", line_no)
            t = _parse_int(parts[0], "time index", line_no)
            m = _parse_int(parts[1], "row index", line_no)
            n = _parse_int(parts[2], "col index", line_no)
            v = _parse_float(parts[3], line_no)
            out.setdefault(t, np.zeros((M, N)))[m - 1, n - 1] = v
    return out


def write_dense_matrix(X, csv_path):
    np.savetxt(csv_path, np.asarray(X), delimiter=",", fmt="%.17g")


def read_dense_matrix(csv_path):
    return np.atleast_2d(np.loadtxt(csv_path, delimiter=","))
