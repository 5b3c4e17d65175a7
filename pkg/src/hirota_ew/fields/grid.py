"""Uniform-grid sampled fields and second-order finite differences."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .expr import Chart, Expr, eval_grid


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridField:
    """Node values on a uniform tensor grid.

    ``values[i0, i1, ...]`` is the field at ``origin + i * spacing``.  Axes
    flagged periodic wrap around; the last node is then *not* a copy of the
    first.
    """

    chart: Chart
    origin: tuple[float, ...]
    spacing: tuple[float, ...]
    values: np.ndarray
    periodic: tuple[bool, ...] = field(default=())

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        if not self.periodic:
            object.__setattr__(self, "periodic", (False,) * self.chart.dim)
        if vals.ndim != self.chart.dim:
            raise GridError(f"value array is {vals.ndim}-d, chart is {self.chart.dim}-d")
        if len(self.origin) != vals.ndim or len(self.spacing) != vals.ndim \
                or len(self.periodic) != vals.ndim:
            raise GridError("origin/spacing/periodic length must match the chart")
        if any(s <= 0 for s in self.spacing):
            raise GridError("grid spacing must be positive")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def axes(self) -> list[np.ndarray]:
        return [o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.shape)]

    def with_values(self, values) -> "GridField":
        return replace(self, values=np.asarray(values, dtype=float))

    @classmethod
    def sample(cls, f: Expr, chart: Chart, origin, spacing, shape, periodic=(), params=None):
        axes = [o + h * np.arange(n) for o, h, n in zip(origin, spacing, shape)]
        return cls(chart, tuple(origin), tuple(spacing), eval_grid(f, chart, axes, params),
                   tuple(periodic))

    def interior(self, width: int = 1) -> tuple[slice, ...]:
        """Index window excluding ``width`` nodes on non-periodic edges."""
        return tuple(slice(None) if per else slice(width, n - width)
                     for per, n in zip(self.periodic, self.shape))


def _d1(v: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(v, -1, axis) - np.roll(v, 1, axis)) / (2 * h)
    v = np.moveaxis(v, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
    out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    return np.moveaxis(out, 0, axis)


def _d2(v: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(v, -1, axis) - 2 * v + np.roll(v, 1, axis)) / h ** 2
    v = np.moveaxis(v, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h ** 2
    out[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h ** 2
    out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h ** 2
    return np.moveaxis(out, 0, axis)


def fd_array(values: np.ndarray, spacing: Sequence[float], periodic: Sequence[bool],
             alpha: Sequence[int]) -> np.ndarray:
    """Second-order difference approximation of d^alpha on a raw array."""
    alpha = tuple(alpha)
    if sum(alpha) > 2:
        raise GridError("finite differences are provided up to second order")
    for ax, k in enumerate(alpha):
        if k and values.shape[ax] < 5:
            raise GridError(f"axis {ax} has {values.shape[ax]} nodes; at least 5 are required")
    out = np.asarray(values, dtype=float)
    for ax, k in enumerate(alpha):
        if k == 2:
            out = _d2(out, spacing[ax], ax, periodic[ax])
        elif k == 1:
            out = _d1(out, spacing[ax], ax, periodic[ax])
    return out


def fd_derivative(g: GridField, alpha: Sequence[int]) -> GridField:
    if len(alpha) != g.chart.dim:
        raise GridError("multi-index length must equal the grid dimension")
    return g.with_values(fd_array(g.values, g.spacing, g.periodic, alpha))


def fd_partial(g: GridField, *names: str) -> GridField:
    alpha = [0] * g.chart.dim
    for n in names:
        alpha[g.chart.index(n)] += 1
    return fd_derivative(g, alpha)


# -- CSV exchange --------------------------------------------------------------------

def to_csv(g: GridField, path: str | Path | None = None) -> str:
    """Row-major CSV with one column per axis followed by ``value``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(g.chart.names) + ["value"])
    mesh = np.meshgrid(*g.axes(), indexing="ij")
    cols = [m.ravel() for m in mesh] + [g.values.ravel()]
    for row in zip(*cols):
        writer.writerow([f"{v:.17g}" for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def from_csv(source: str | Path, periodic: Sequence[bool] = ()) -> GridField:
    """Read a grid written by :func:`to_csv` (text or file path)."""
    text = source
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], [r for r in rows[1:] if r]
    if len(header) < 2 or header[-1] != "value":
        raise GridError("CSV header must list the axes followed by 'value'")
    data = np.array(body, dtype=float)
    ndim = len(header) - 1
    axes = [np.unique(data[:, k]) for k in range(ndim)]
    shape = tuple(len(a) for a in axes)
    if np.prod(shape) != len(data):
        raise GridError("CSV rows do not form a complete tensor grid")
    spacing = []
    for a in axes:
        if len(a) < 2:
            raise GridError("each axis needs at least two nodes")
        spacing.append(float((a[-1] - a[0]) / (len(a) - 1)))
    return GridField(Chart(tuple(header[:-1])), tuple(float(a[0]) for a in axes),
                     tuple(spacing), data[:, -1].reshape(shape), tuple(periodic))
