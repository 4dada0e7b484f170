"""Sampled radial profiles and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

COORDINATES = ("radial_r", "log_t")
CSV_HEADER = ("coord", "t_or_r", "value", "derivative")


def fmt(x: float) -> str:
    """Format a float with 17 significant digits (round-trips exactly)."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class ProfileTable:
    """A radial profile sampled on a grid.

    Parameters
    ----------
    coordinate : {"radial_r", "log_t"}
        Whether ``grid`` holds radii r or log-coordinates
        t = ln(1 + r^2 / (4 mu^2)).
    grid : array, strictly increasing with grid[0] == 0
    value, derivative : arrays of the same length as ``grid``
        Profile values and the derivative with respect to the grid variable.
    """

    coordinate: str
    grid: np.ndarray
    value: np.ndarray
    derivative: np.ndarray

    def __post_init__(self):
        if self.coordinate not in COORDINATES:
            raise ValueError(f"unknown coordinate {self.coordinate!r}")
        grid = np.asarray(self.grid, dtype=float)
        value = np.asarray(self.value, dtype=float)
        derivative = np.asarray(self.derivative, dtype=float)
        if not (grid.ndim == value.ndim == derivative.ndim == 1):
            raise ValueError("grid, value and derivative must be 1-D")
        if not (len(grid) == len(value) == len(derivative)):
            raise ValueError("grid, value and derivative must have equal length")
        if len(grid) == 0 or grid[0] != 0.0:
            raise ValueError("grid must start at 0")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "derivative", derivative)

    def __len__(self):
        return len(self.grid)

    def to_csv(self, target=None):
        """Write the table as CSV. Returns the text when ``target`` is None."""
        buf = io.StringIO(newline="")
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(CSV_HEADER)
        for g, v, d in zip(self.grid, self.value, self.derivative):
            writer.writerow((self.coordinate, fmt(g), fmt(v), fmt(d)))
        text = buf.getvalue()
        if target is None:
            return text
        Path(target).write_bytes(text.encode("ascii"))
        return None

    @classmethod
    def from_csv(cls, source) -> "ProfileTable":
        if isinstance(source, str) and "\n" in source:
            text = source
        else:
            text = Path(source).read_text()
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != CSV_HEADER:
            raise ValueError(f"expected header {','.join(CSV_HEADER)}")
        body = rows[1:]
        coords = {r[0] for r in body}
        if len(coords) != 1:
            raise ValueError("mixed coordinates in profile CSV")
        data = np.array([[float(x) for x in r[1:]] for r in body])
        return cls(coords.pop(), data[:, 0], data[:, 1], data[:, 2])
