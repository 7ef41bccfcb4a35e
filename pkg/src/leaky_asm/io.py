"""CSV, JSON and PPM output.

CSV files use a header row, '.' decimals, '\\n' line endings and UTF-8.
Floats are written with ``repr`` so they round-trip exactly; exact rationals
are written as ``p/q`` strings.
"""
from __future__ import annotations

import csv
import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np

from .sandpile import FLOAT, RATIONAL, HeightField, StabilizationResult

BACKGROUND = (255, 255, 255)
PALETTE = (
    (20, 20, 90),
    (40, 90, 180),
    (60, 160, 200),
    (110, 200, 120),
    (230, 210, 60),
    (240, 140, 40),
    (200, 50, 40),
    (110, 20, 30),
)


def fmt(v) -> str:
    """Text form of a scalar: exact for ints and Fractions, ``repr`` for floats."""
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def parse_scalar(text: str, scalar_mode: str = FLOAT):
    return Fraction(text) if scalar_mode == RATIONAL else float(text)


def _writer(path):
    f = open(path, "w", newline="", encoding="utf-8")
    return f, csv.writer(f, lineterminator="\n")


def _support(result: StabilizationResult) -> np.ndarray:
    cells = result.final.cells
    return (cells != 0) | result.visited


def write_heights_csv(result: StabilizationResult | HeightField, path) -> Path:
    """``x,y,height`` for every site that holds chips or has toppled."""
    path = Path(path)
    if isinstance(result, HeightField):
        field, mask = result, result.cells != 0
    else:
        field, mask = result.final, _support(result)
    R = field.radius
    f, w = _writer(path)
    with f:
        w.writerow(["x", "y", "height"])
        for i, j in zip(*np.nonzero(mask)):
            w.writerow([int(i) - R, int(j) - R, fmt(field.cells[i, j])])
    return path


def write_odometer_csv(result: StabilizationResult, path) -> Path:
    """``x,y,u,topples`` for every visited site."""
    path = Path(path)
    od = result.odometer
    R = od.radius
    u = od.u
    f, w = _writer(path)
    with f:
        w.writerow(["x", "y", "u", "topples"])
        for i, j in zip(*np.nonzero(result.visited)):
            t = od.topples[i, j]
            w.writerow([int(i) - R, int(j) - R, fmt(u[i, j]), fmt(t)])
    return path


def read_heights_csv(path, scalar_mode: str = FLOAT) -> HeightField:
    """Rebuild a :class:`HeightField` from :func:`write_heights_csv` output."""
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    pts = [(int(r["x"]), int(r["y"]), parse_scalar(r["height"], scalar_mode)) for r in rows]
    R = max((max(abs(x), abs(y)) for x, y, _ in pts), default=0)
    field = HeightField.zeros(R, scalar_mode)
    for x, y, h in pts:
        field[x, y] = h
    return field


def write_logp_csv(fld, path) -> Path:
    """``x,y,log_p`` for every site with positive probability."""
    path = Path(path)
    R = fld.radius
    f, w = _writer(path)
    with f:
        w.writerow(["x", "y", "log_p"])
        for i, j in zip(*np.nonzero(np.isfinite(fld.log_p))):
            w.writerow([int(i) - R, int(j) - R, repr(float(fld.log_p[i, j]))])
    return path


def write_rows_csv(path, header, rows) -> Path:
    path = Path(path)
    f, w = _writer(path)
    with f:
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return path


def _default(o):
    if isinstance(o, Fraction):
        return fmt(o)
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_json(obj, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, indent=2, sort_keys=True, default=_default, allow_nan=True)
        f.write("\n")
    return path


def render_ppm(field, path, palette=PALETTE, *, threshold=None, visited=None,
               background=BACKGROUND) -> Path:
    """Write a binary PPM (P6) with one pixel per site.

    Heights in ``[0, threshold)`` fall into ``min(len(palette), ceil(threshold))``
    equal buckets.  Sites that never toppled and hold no chips get the
    background color.  The top image row is the largest ``y``.

    Parameters
    ----------
    field : StabilizationResult or HeightField
        A result supplies its own threshold and visited set.
    """
    if isinstance(field, StabilizationResult):
        threshold = field.threshold if threshold is None else threshold
        visited = field.visited if visited is None else visited
        field = field.final
    cells = field.cells
    if cells.size == 0:
        raise ValueError("cannot render an empty field")
    h = np.asarray(cells, dtype=float)
    if not np.all(np.isfinite(h)):
        raise ValueError("heights must be finite")
    if threshold is None:
        threshold = max(float(h.max()), 1.0) * (1 + 1e-12)
    threshold = float(threshold)
    nb = max(1, min(len(palette), math.ceil(threshold)))
    bucket = np.clip(np.floor(h / threshold * nb).astype(int), 0, nb - 1)
    pal = np.asarray(palette[:nb], dtype=np.uint8)
    img = pal[bucket]
    shown = h != 0
    if visited is not None:
        shown |= np.asarray(visited, bool)
    img[~shown] = background
    # array axis 0 is x; the image wants rows of y from the top
    img = np.transpose(img, (1, 0, 2))[::-1]
    rows, cols = img.shape[:2]
    path = Path(path)
    with open(path, "wb") as f:
        f.write(f"P6\n{cols} {rows}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())
    return path


def read_ppm(path) -> np.ndarray:
    """Read a P6 file written by :func:`render_ppm` into a ``(rows, cols, 3)`` array."""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    cols, rows = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(rows, cols, 3)
