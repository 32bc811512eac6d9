"""Dense float64 tensors and NPY v1.0 file I/O.

A tensor here is simply a C-contiguous ``numpy.ndarray`` of dtype float64
whose values are all finite. :func:`as_tensor` is the one public
constructor that enforces this.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from numpy.lib import format as npy_format

from .errors import (
    CorruptionError,
    DegenerateInputError,
    FormatError,
    ShapeError,
    UnsupportedDtypeError,
)

Tensor = np.ndarray

_FLOAT_DESCRS = {"<f8": np.dtype("<f8"), "<f4": np.dtype("<f4")}
NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class Dims:
    """Extents of one relation-module batch: B samples, N mask tokens, P positions, D channels."""

    B: int
    N: int
    P: int
    D: int

    def __post_init__(self):
        for name in ("B", "N", "P", "D"):
            if getattr(self, name) < 1:
                raise ShapeError(f"{name} must be >= 1, got {getattr(self, name)}")


def as_tensor(x) -> Tensor:
    """Copy ``x`` into a contiguous float64 array, rejecting NaN/Inf."""
    arr = np.ascontiguousarray(np.array(x, dtype=np.float64))
    if not np.all(np.isfinite(arr)):
        raise DegenerateInputError("tensor contains non-finite values")
    return arr


def save_tensor(t: Tensor, path: str | os.PathLike) -> None:
    t = as_tensor(t)
    header = {"descr": "<f8", "fortran_order": False, "shape": tuple(int(s) for s in t.shape)}
    with open(path, "wb") as fh:
        npy_format.write_array_header_1_0(fh, header)
        fh.write(t.astype("<f8", copy=False).tobytes(order="C"))


def load_tensor(path: str | os.PathLike) -> Tensor:
    """Read an NPY v1.0 file holding little-endian f8 or f4 data; f4 is widened."""
    with open(path, "rb") as fh:
        try:
            major, minor = npy_format.read_magic(fh)
        except ValueError as exc:
            raise FormatError(f"{path}: bad NPY magic ({exc})") from exc
        if (major, minor) != (1, 0):
            raise FormatError(f"{path}: unsupported NPY version {major}.{minor}")
        try:
            shape, fortran_order, dtype = npy_format.read_array_header_1_0(fh)
        except ValueError as exc:
            raise FormatError(f"{path}: malformed NPY header ({exc})") from exc
        payload = fh.read()

    if fortran_order:
        raise FormatError(f"{path}: fortran_order=True is not supported")
    descr = dtype.str
    if descr not in _FLOAT_DESCRS:
        raise UnsupportedDtypeError(f"{path}: dtype {descr!r} is not '<f8' or '<f4'")
    count = int(np.prod(shape, dtype=np.int64))
    expected = count * dtype.itemsize
    if len(payload) != expected:
        raise CorruptionError(
            f"{path}: header declares shape {shape} ({expected} bytes) but payload has {len(payload)} bytes"
        )
    arr = np.frombuffer(payload, dtype=_FLOAT_DESCRS[descr]).reshape(shape)
    return as_tensor(arr)


def flatten_batch(t: Tensor) -> Tensor:
    """[B, ...] -> [B, M], rows in row-major order."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim < 2:
        raise ShapeError(f"flatten_batch needs rank >= 2, got shape {t.shape}")
    return t.reshape(t.shape[0], -1)


def l2_normalize_rows(m: Tensor) -> Tensor:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    bad = np.flatnonzero(norms <= NORM_FLOOR)
    if bad.size:
        raise DegenerateInputError(f"rows {bad.tolist()} have (near) zero Euclidean norm")
    return m / norms[:, None]
