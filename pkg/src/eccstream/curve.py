"""
Euler characteristic curves: prefix sums of the VCEC, zero crossings and
CSV/JSON serialization.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np
import polars as pl

CSV_HEADER = ("threshold", "euler_characteristic")
JSON_FIELDS = ("t", "chi")
VCEC_HEADER = ("threshold", "change")


@dataclass(frozen=True, eq=False)
class EccCurve:
    """Thresholds (strictly increasing) with the Euler characteristic at each."""

    thresholds: np.ndarray
    chi: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.thresholds)
        chi = np.asarray(self.chi, dtype=np.int64)
        if t.shape != chi.shape or t.ndim != 1:
            raise ValueError("thresholds and chi must be 1D arrays of equal length")
        if t.size > 1 and not np.all(t[1:] > t[:-1]):
            raise ValueError("thresholds must be strictly increasing")
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "chi", chi)

    @classmethod
    def from_points(cls, points, dtype=None) -> "EccCurve":
        points = list(points)
        t = np.array([p[0] for p in points], dtype=dtype)
        return cls(t, np.array([p[1] for p in points], dtype=np.int64))

    @property
    def points(self) -> list:
        return list(zip(self.thresholds.tolist(), self.chi.tolist()))

    def __len__(self):
        return int(self.thresholds.size)

    def __iter__(self):
        return iter(self.points)

    def __eq__(self, other):
        if not isinstance(other, EccCurve):
            return NotImplemented
        return (np.array_equal(self.thresholds, other.thresholds)
                and np.array_equal(self.chi, other.chi))

    def __repr__(self):
        if len(self) <= 8:
            return f"EccCurve({self.points})"
        return f"EccCurve(<{len(self)} points>, final chi={int(self.chi[-1])})"

    def changes(self) -> np.ndarray:
        """Consecutive differences of chi, the first entry being chi itself."""
        return np.diff(self.chi, prepend=0)


def vcec_to_ecc(vcec) -> EccCurve:
    """Prefix-sum a VCEC into an ECC.

    ``vcec`` is a :class:`~eccstream.engine.GlobalVcec` or a mapping from
    threshold to change.
    """
    if isinstance(vcec, Mapping):
        if not vcec:
            raise ValueError("cannot build a curve from an empty VCEC")
        keys = sorted(vcec)
        values = np.array(keys)
        counts = np.array([vcec[k] for k in keys], dtype=np.int64)
    else:
        values, counts = vcec.values, vcec.counts
        if len(values) == 0:
            raise ValueError("cannot build a curve from an empty VCEC")
    return EccCurve(values, np.cumsum(counts, dtype=np.int64))


def zero_crossings(curve: EccCurve) -> list:
    """Thresholds where chi is zero or has the opposite sign of the previous point.

    For a sign change the right endpoint threshold is reported.
    """
    sign = np.sign(curve.chi)
    hit = sign == 0
    hit[1:] |= sign[1:] * sign[:-1] < 0
    return curve.thresholds[hit].tolist()


# -- serialization -----------------------------------------------------------


def _frame(thresholds: np.ndarray, values: np.ndarray, names) -> pl.DataFrame:
    return pl.DataFrame({names[0]: thresholds, names[1]: values})


def _write(df: pl.DataFrame, fmt: str, destination) -> None:
    fmt = fmt.lower()
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown curve format {fmt!r}; expected 'csv' or 'json'")
    if isinstance(destination, io.TextIOBase):
        buf = io.BytesIO()
        _write(df, fmt, buf)
        destination.write(buf.getvalue().decode())
        return
    if fmt == "csv":
        df.write_csv(destination)
    else:
        df.write_json(destination)


def write_curve(curve: EccCurve, fmt: str, destination) -> None:
    """Write ``curve`` as CSV (``threshold,euler_characteristic``) or as a JSON
    array of ``{"t": ..., "chi": ...}`` objects.

    Float thresholds are written in the shortest decimal form that parses
    back to the same float32. ``destination`` is a path or a file object.
    """
    names = CSV_HEADER if fmt.lower() == "csv" else JSON_FIELDS
    _write(_frame(curve.thresholds, curve.chi, names), fmt, destination)


def write_vcec(vcec, fmt: str, destination) -> None:
    """Write a VCEC with columns ``threshold,change``."""
    _write(_frame(vcec.values, vcec.counts, VCEC_HEADER), fmt, destination)


def curve_to_string(curve: EccCurve, fmt: str = "csv") -> str:
    buf = io.BytesIO()
    write_curve(curve, fmt, buf)
    return buf.getvalue().decode()


def read_curve(source: Union[str, os.PathLike, io.IOBase], fmt: str = "csv",
               dtype=np.float32) -> EccCurve:
    """Parse a curve written by :func:`write_curve`.

    ``dtype`` is the threshold dtype; float thresholds are parsed directly as
    float32 so that the written bit patterns are recovered exactly.
    """
    fmt = fmt.lower()
    t_type = pl.Float32 if np.dtype(dtype) == np.float32 else (
        pl.Float64 if np.dtype(dtype).kind == "f" else pl.Int64)
    if fmt == "csv":
        names = CSV_HEADER
        df = pl.read_csv(source, schema={names[0]: t_type, names[1]: pl.Int64})
    elif fmt == "json":
        names = JSON_FIELDS
        df = pl.read_json(source, schema={names[0]: t_type, names[1]: pl.Int64})
    else:
        raise ValueError(f"unknown curve format {fmt!r}; expected 'csv' or 'json'")
    return EccCurve(df[names[0]].to_numpy().astype(dtype, copy=False),
                    df[names[1]].to_numpy())


def curve_from_string(text: str, fmt: str = "csv", dtype=np.float32) -> EccCurve:
    return read_curve(io.BytesIO(text.encode()), fmt, dtype)
