"""Plain-text point-set files and flat key=value config files.

Point-set format: a header line ``d=<dim> n=<count>`` followed by one point
per line with space-separated decimal coordinates; ``#`` starts a comment.
Momenta files use the identical layout.  Writes emit 17 significant digits,
so a write/read round trip reproduces float64 values exactly and identical
data always produces identical bytes.
"""

from __future__ import annotations

import re

import numpy as np

__all__ = [
    "PointFormatError",
    "read_point_set",
    "write_point_set",
    "format_float",
    "read_config",
    "write_config",
]

_HEADER_RE = re.compile(r"^d=(\d+)\s+n=(\d+)$")


class PointFormatError(ValueError):
    """Malformed point-set file; the message carries the offending line number."""


def format_float(x: float) -> str:
    """Render a float with 17 significant digits (lossless for float64)."""
    return format(float(x), ".17g")


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def read_point_set(path) -> np.ndarray:
    """Parse a point-set file into an (n, d) float array."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    header = None
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        text = _strip(raw)
        if not text:
            continue
        if header is None:
            m = _HEADER_RE.match(text)
            if not m:
                raise PointFormatError(
                    f"{path}:{lineno}: expected header 'd=<dim> n=<count>', got {text!r}"
                )
            header = (int(m.group(1)), int(m.group(2)))
            if header[0] < 1:
                raise PointFormatError(f"{path}:{lineno}: dimension must be >= 1, got {header[0]}")
            if header[1] < 1:
                raise PointFormatError(f"{path}:{lineno}: point count must be >= 1, got {header[1]}")
            continue
        d, n = header
        tokens = text.split()
        if len(tokens) != d:
            raise PointFormatError(
                f"{path}:{lineno}: expected {d} coordinates, got {len(tokens)}"
            )
        try:
            rows.append([float(tok) for tok in tokens])
        except ValueError as exc:
            raise PointFormatError(f"{path}:{lineno}: non-numeric coordinate: {exc}") from exc
        if len(rows) > n:
            raise PointFormatError(f"{path}:{lineno}: more than the declared {n} points")
    if header is None:
        raise PointFormatError(f"{path}:1: missing header 'd=<dim> n=<count>'")
    d, n = header
    if len(rows) != n:
        raise PointFormatError(
            f"{path}:{len(lines)}: declared {n} points but found {len(rows)}"
        )
    return np.array(rows, dtype=float)


def write_point_set(path, points) -> None:
    """Write an (n, d) array in the point-set format, deterministically."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
        raise ValueError(f"points must be a non-empty (n, d) array, got shape {pts.shape}")
    n, d = pts.shape
    lines = [f"d={d} n={n}"]
    for row in pts:
        lines.append(" ".join(format_float(x) for x in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_config(path) -> dict:
    """Parse a flat key=value config file; '#' comments and blank lines ignored."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = _strip(raw)
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {text!r}")
            key, value = text.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def write_config(path, mapping) -> None:
    """Write a flat key=value config file with sorted keys."""
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(mapping):
            fh.write(f"{key}={mapping[key]}\n")
