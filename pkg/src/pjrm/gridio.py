"""File formats: PJRM grid container, PGM renders, parameter checkpoints, CSV."""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PJRM"
VERSION = 1
HEADER_SIZE = 16
MAX_DIM = 65535
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class GridFormatError(ValueError):
    code = 10


class BadMagicError(GridFormatError):
    code = 11


class TruncatedPayloadError(GridFormatError):
    code = 12


class DimensionOverflowError(GridFormatError):
    code = 13


class UnsupportedHeaderError(GridFormatError):
    code = 14


def encode_grid(grid: np.ndarray) -> bytes:
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ValueError("only 2-D grids can be stored")
    if grid.dtype not in _DTYPE_CODES:
        raise ValueError(f"unsupported dtype {grid.dtype}; use float32 or float64")
    rows, cols = grid.shape
    if not (1 <= rows <= MAX_DIM and 1 <= cols <= MAX_DIM):
        raise DimensionOverflowError(f"dim overflow: {rows}x{cols} outside [1, {MAX_DIM}]")
    code = _DTYPE_CODES[grid.dtype]
    header = MAGIC + bytes([VERSION, code, 0, 0]) + struct.pack("<II", rows, cols)
    return header + np.ascontiguousarray(grid, dtype=_CODE_DTYPES[code]).tobytes()


def decode_grid(buf: bytes) -> np.ndarray:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagicError("bad magic")
    if len(buf) < HEADER_SIZE:
        raise TruncatedPayloadError("truncated header")
    version, code, r0, r1 = buf[4], buf[5], buf[6], buf[7]
    if version != VERSION or code not in _CODE_DTYPES or r0 or r1:
        raise UnsupportedHeaderError(f"unsupported header (version {version}, dtype {code})")
    rows, cols = struct.unpack("<II", buf[8:16])
    if not (1 <= rows <= MAX_DIM and 1 <= cols <= MAX_DIM):
        raise DimensionOverflowError(f"dim overflow: {rows}x{cols}")
    dt = _CODE_DTYPES[code]
    need = rows * cols * dt.itemsize
    if len(buf) - HEADER_SIZE < need:
        raise TruncatedPayloadError(f"truncated payload: {len(buf) - HEADER_SIZE} of {need} bytes")
    if len(buf) - HEADER_SIZE > need:
        raise GridFormatError("trailing bytes after payload")
    out = np.frombuffer(buf, dtype=dt, count=rows * cols, offset=HEADER_SIZE).reshape(rows, cols)
    return out.astype(dt.newbyteorder("="))


def write_grid(path, grid):
    Path(path).write_bytes(encode_grid(grid))


def read_grid(path) -> np.ndarray:
    return decode_grid(Path(path).read_bytes())


def write_stack(path, stack):
    """Store an ``(S, nz, nx)`` stack as one ``(S*nz, nx)`` grid."""
    stack = np.asarray(stack)
    write_grid(path, stack.reshape(-1, stack.shape[-1]))


def read_stack(path, nz: int) -> np.ndarray:
    g = read_grid(path)
    if g.shape[0] % nz:
        raise GridFormatError(f"stack rows {g.shape[0]} not a multiple of nz={nz}")
    return g.reshape(-1, nz, g.shape[1])


def write_pgm(path, grid, clip_lo: float, clip_hi: float):
    """Binary 8-bit PGM; ``[clip_lo, clip_hi]`` maps linearly to ``[0, 255]``, half-up rounding."""
    if not clip_lo < clip_hi:
        raise ValueError("clip_lo must be below clip_hi")
    g = np.asarray(grid, dtype=np.float64)
    scaled = (np.clip(g, clip_lo, clip_hi) - clip_lo) / (clip_hi - clip_lo) * 255.0
    pix = np.floor(scaled + 0.5).clip(0, 255).astype(np.uint8)
    nz, nx = pix.shape
    Path(path).write_bytes(f"P5\n{nx} {nz}\n255\n".encode("ascii") + pix.tobytes())


def _as_2d(a: np.ndarray) -> np.ndarray:
    if a.ndim == 1:
        return a.reshape(1, -1)
    return a.reshape(-1, a.shape[-1])


def save_blocks(directory, blocks: dict):
    """One container file per named parameter block; ``/`` in names becomes ``__``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, arr in blocks.items():
        write_grid(directory / (name.replace("/", "__") + ".pjrm"), _as_2d(np.asarray(arr)))


def load_blocks(directory, template: dict) -> dict:
    """Read blocks saved by ``save_blocks``, reshaping to the template's shapes."""
    directory = Path(directory)
    out = {}
    for name, ref in template.items():
        g = read_grid(directory / (name.replace("/", "__") + ".pjrm"))
        if g.size != ref.size:
            raise GridFormatError(f"block {name} has {g.size} values, expected {ref.size}")
        out[name] = g.reshape(ref.shape)
    return out


def fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_csv_row(path, row: dict):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(row))
        w.writerow([fmt(v) for v in row.values()])


def read_csv_row(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return dict(zip(rows[0], rows[1]))


def write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["outer_iter", "inner_iter", "survey", "term", "value"])
        for outer, inner, survey, term, value in trace:
            w.writerow([outer, inner, survey, term, repr(float(value))])
