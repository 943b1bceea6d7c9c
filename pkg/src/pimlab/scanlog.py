"""Scan-log serialization for elevation-map replay.

A log is a sequence of records, each:
    timestamp, odometry pose [x y z qw qx qy qz], N, then N point triples
    in the sensor frame.
Two encodings share that field order: a CSV variant (one record per row)
and a binary variant where every field, including N, is a little-endian
64-bit float.
"""

from __future__ import annotations

import csv
import os

import numpy as np


class ScanLogError(ValueError):
    """Malformed scan-log record; message names the record index/offset."""


def _is_binary(path: str) -> bool:
    return os.path.splitext(path)[1].lower() in (".bin", ".dat")


def write_scan_log(path: str, records: list) -> None:
    """records: iterable of (timestamp, pose(7,), points(N, 3))."""
    if _is_binary(path):
        parts = []
        for timestamp, pose, points in records:
            points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
            row = np.concatenate([[timestamp], np.asarray(pose, dtype=np.float64), [points.shape[0]], points.ravel()])
            parts.append(row.astype("<f8").tobytes())
        with open(path, "wb") as f:
            f.write(b"".join(parts))
        return
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for timestamp, pose, points in records:
            points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
            row = [timestamp, *np.asarray(pose, dtype=np.float64), points.shape[0], *points.ravel()]
            writer.writerow(row)


def read_scan_log(path: str) -> list:
    """Returns a list of (timestamp, pose(7,), points(N, 3)) tuples."""
    if _is_binary(path):
        return _read_binary(path)
    return _read_csv(path)


def _read_binary(path: str) -> list:
    with open(path, "rb") as f:
        data = np.frombuffer(f.read(), dtype="<f8")
    out = []
    off = 0
    index = 0
    while off < data.size:
        if data.size - off < 9:
            raise ScanLogError(f"truncated record {index} at float offset {off}")
        timestamp = float(data[off])
        pose = np.asarray(data[off + 1 : off + 8])
        n_f = float(data[off + 8])
        n = int(round(n_f))
        if n < 0 or abs(n_f - n) > 1e-9:
            raise ScanLogError(f"bad point count {n_f} in record {index} at float offset {off + 8}")
        need = 9 + 3 * n
        if data.size - off < need:
            raise ScanLogError(f"truncated record {index} at float offset {off}")
        points = np.asarray(data[off + 9 : off + need]).reshape(n, 3)
        out.append((timestamp, pose.copy(), points.copy()))
        off += need
        index += 1
    return out


def _read_csv(path: str) -> list:
    out = []
    with open(path, newline="") as f:
        for index, row in enumerate(csv.reader(f)):
            if not row:
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise ScanLogError(f"non-numeric field in record {index}: {exc}") from exc
            if len(vals) < 9:
                raise ScanLogError(f"truncated record {index}: {len(vals)} fields")
            n = int(round(vals[8]))
            if len(vals) != 9 + 3 * n:
                raise ScanLogError(f"record {index} declares {n} points but has {len(vals) - 9} values")
            out.append((vals[0], np.array(vals[1:8]), np.array(vals[9:]).reshape(n, 3)))
    return out


__all__ = ["read_scan_log", "write_scan_log", "ScanLogError"]
