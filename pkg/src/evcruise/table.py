"""Disturbance-indexed PID gain table with trilinear interpolation."""

from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pid import Gains

TABLE_HEADER = ("v_ref", "theta_rad", "v_w", "kp", "ki", "kd")


@dataclass
class GainTable:
    v_ref: np.ndarray
    theta: np.ndarray
    v_w: np.ndarray
    cells: np.ndarray  # (len(v_ref), len(theta), len(v_w), 3)
    failures: list[tuple[int, int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.v_ref = np.asarray(self.v_ref, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        self.v_w = np.asarray(self.v_w, dtype=float)
        self.cells = np.asarray(self.cells, dtype=float)
        for name in ("v_ref", "theta", "v_w"):
            axis = getattr(self, name)
            if axis.ndim != 1 or axis.size == 0:
                raise ValueError(f"axis {name} must be a non-empty 1-D grid")
            if np.any(np.diff(axis) <= 0):
                raise ValueError(f"axis {name} must be strictly increasing")
        if self.cells.shape != (self.v_ref.size, self.theta.size, self.v_w.size, 3):
            raise ValueError(f"cells shape {self.cells.shape} does not match the axes")
        self._axes = (self.v_ref.tolist(), self.theta.tolist(), self.v_w.tolist())

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.v_ref, self.theta, self.v_w

    @classmethod
    def single(cls, gains: Gains, v_ref=0.0, theta=0.0, v_w=0.0) -> "GainTable":
        return cls([v_ref], [theta], [v_w], np.reshape(gains.as_array(), (1, 1, 1, 3)))


def _locate(axis: list[float], q: float) -> tuple[int, float]:
    """Lower cell index and fractional position of ``q`` (clamped into range)."""
    if len(axis) == 1:
        return 0, 0.0
    q = min(max(q, axis[0]), axis[-1])
    i = min(bisect_right(axis, q) - 1, len(axis) - 2)
    return i, (q - axis[i]) / (axis[i + 1] - axis[i])


def interpolate_in_cell(t: GainTable, cell: tuple[int, int, int], query) -> np.ndarray:
    """Trilinear blend of the 8 nodes of ``cell`` at ``query`` (no clamping)."""
    fracs = []
    for axis, i, q in zip(t._axes, cell, query):
        fracs.append(0.0 if len(axis) == 1 else (q - axis[i]) / (axis[i + 1] - axis[i]))
    i, j, k = cell
    fi, fj, fk = fracs
    c = t.cells
    ii = min(i + 1, c.shape[0] - 1)
    jj = min(j + 1, c.shape[1] - 1)
    kk = min(k + 1, c.shape[2] - 1)
    # collapse v_w, then theta, then v_ref
    c00 = c[i, j, k] * (1 - fk) + c[i, j, kk] * fk
    c01 = c[i, jj, k] * (1 - fk) + c[i, jj, kk] * fk
    c10 = c[ii, j, k] * (1 - fk) + c[ii, j, kk] * fk
    c11 = c[ii, jj, k] * (1 - fk) + c[ii, jj, kk] * fk
    c0 = c00 * (1 - fj) + c01 * fj
    c1 = c10 * (1 - fj) + c11 * fj
    return c0 * (1 - fi) + c1 * fi


def lookup_gains(t: GainTable, v_ref: float, theta: float, v_w: float) -> Gains:
    """Gains for the operating point, clamped into the table's range."""
    if t.cells.size == 0:
        raise ValueError("empty gain table")
    cell, query = [], []
    for axis, q in zip(t._axes, (v_ref, theta, v_w)):
        i, _ = _locate(axis, q)
        cell.append(i)
        query.append(min(max(q, axis[0]), axis[-1]))
    return Gains.from_array(interpolate_in_cell(t, tuple(cell), query))


def write_gain_table(t: GainTable, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABLE_HEADER)
        for i, v in enumerate(t.v_ref):
            for j, th in enumerate(t.theta):
                for k, w in enumerate(t.v_w):
                    writer.writerow([repr(float(x)) for x in (v, th, w, *t.cells[i, j, k])])


def read_gain_table(path) -> GainTable:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != TABLE_HEADER:
            raise ValueError(f"unexpected gain table header {header!r}")
        rows = [[float(x) for x in row] for row in reader if row]
    if not rows:
        raise ValueError("empty gain table")
    data = np.array(rows)
    axes = [np.unique(data[:, c]) for c in range(3)]
    shape = tuple(a.size for a in axes)
    if len(rows) != shape[0] * shape[1] * shape[2]:
        raise ValueError("gain table rows do not form a full grid")
    order = np.lexsort((data[:, 2], data[:, 1], data[:, 0]))
    cells = data[order, 3:].reshape(*shape, 3)
    return GainTable(axes[0], axes[1], axes[2], cells)
