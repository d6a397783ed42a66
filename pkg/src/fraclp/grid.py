"""Uniform interior grids, lumped quadrature and the L^p pseudonorm.

Grid functions are plain ``numpy`` vectors holding interior nodal values;
values outside the domain are implicitly zero.  Two-dimensional grids are
tensor products of two 1-D grids and are stored flattened in C order
(index ``i * ny + j`` for node ``(x_i, y_j)``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Grid",
    "make_interval_grid",
    "make_rect_grid",
    "check_function",
    "integrate",
    "lp_pseudonorm",
    "write_function_csv",
    "read_function_csv",
]


@dataclass(frozen=True)
class Grid:
    """Uniform grid of interior nodes on ``(0, length)`` or a rectangle.

    Quadrature is mass lumped: every node carries the weight of one cell,
    ``h`` in 1-D and ``h * hy`` in 2-D.  The boundary half-cells are not
    covered, so the weights sum to ``n * h`` rather than ``length``.
    """

    n: int
    length: float
    dim: int = 1
    ny: int | None = None
    length_y: float | None = None

    def __post_init__(self):
        errors = []
        if self.dim not in (1, 2):
            errors.append("dim must be 1 or 2")
        if int(self.n) != self.n or self.n < 2:
            errors.append("n must be an integer >= 2")
        if not np.isfinite(self.length) or self.length <= 0:
            errors.append("length must be positive")
        if self.dim == 2:
            if self.ny is None:
                object.__setattr__(self, "ny", self.n)
            if self.length_y is None:
                object.__setattr__(self, "length_y", self.length)
            if int(self.ny) != self.ny or self.ny < 2:
                errors.append("ny must be an integer >= 2")
            if not np.isfinite(self.length_y) or self.length_y <= 0:
                errors.append("length_y must be positive")
        elif self.ny is not None or self.length_y is not None:
            errors.append("ny/length_y are only meaningful for dim = 2")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def h(self) -> float:
        return self.length / (self.n + 1)

    @property
    def hy(self) -> float:
        if self.dim == 1:
            raise AttributeError("1-D grid has no hy")
        return self.length_y / (self.ny + 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) if self.dim == 1 else (self.n, self.ny)

    @property
    def size(self) -> int:
        return self.n if self.dim == 1 else self.n * self.ny

    @property
    def cell(self) -> float:
        """Lumped quadrature weight of a single node."""
        return self.h if self.dim == 1 else self.h * self.hy

    @property
    def x(self) -> np.ndarray:
        return self.h * np.arange(1, self.n + 1)

    @property
    def y(self) -> np.ndarray:
        return self.hy * np.arange(1, self.ny + 1)

    def nodes(self) -> np.ndarray:
        """Node coordinates: shape ``(n,)`` in 1-D, ``(n*ny, 2)`` in 2-D."""
        if self.dim == 1:
            return self.x
        xx, yy = np.meshgrid(self.x, self.y, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.size, self.cell)

    @property
    def measure(self) -> float:
        """Quadrature measure of the domain (sum of the weights)."""
        return self.size * self.cell

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant of ``func(x)`` (1-D) or ``func(x, y)`` (2-D)."""
        if self.dim == 1:
            return np.asarray(func(self.x), dtype=float) * np.ones(self.n)
        pts = self.nodes()
        return np.asarray(func(pts[:, 0], pts[:, 1]), dtype=float) * np.ones(self.size)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.size)


def make_interval_grid(n: int, length: float = 1.0) -> Grid:
    return Grid(n=n, length=float(length))


def make_rect_grid(n: int, length: float = 1.0, ny: int | None = None,
                   length_y: float | None = None) -> Grid:
    return Grid(n=n, length=float(length), dim=2,
                ny=n if ny is None else ny,
                length_y=float(length) if length_y is None else float(length_y))


def check_function(grid: Grid, f, name: str = "grid function") -> np.ndarray:
    """Return ``f`` as a flat float array, raising if it does not fit ``grid``."""
    arr = np.asarray(f, dtype=float)
    if arr.shape == grid.shape and grid.dim == 2:
        arr = arr.ravel()
    if arr.shape != (grid.size,):
        raise ValueError(f"{name} has shape {np.shape(f)}, grid expects ({grid.size},)")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def integrate(grid: Grid, f) -> float:
    f = check_function(grid, f)
    return float(grid.cell * np.sum(f))


def lp_pseudonorm(grid: Grid, u, p: float) -> float:
    """Lumped quadrature of ``|u|^p`` for ``0 < p < 1``."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0,1)")
    u = check_function(grid, u)
    a = np.abs(u)
    vals = np.zeros_like(a)
    nz = a > 0
    vals[nz] = np.exp(p * np.log(a[nz]))
    return float(grid.cell * np.sum(vals))


def write_function_csv(path, grid: Grid, values) -> None:
    """Write nodal values as ``x,value`` (1-D) or ``x,y,value`` (2-D) rows."""
    values = check_function(grid, values)
    pts = grid.nodes()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if grid.dim == 1:
            w.writerow(["x", "value"])
            for xi, vi in zip(pts, values):
                w.writerow([_fmt(xi), _fmt(vi)])
        else:
            w.writerow(["x", "y", "value"])
            for (xi, yi), vi in zip(pts, values):
                w.writerow([_fmt(xi), _fmt(yi), _fmt(vi)])


def read_function_csv(path, grid: Grid) -> np.ndarray:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "value" not in rows[0]:
        raise ValueError(f"{path}: expected a header with a 'value' column")
    values = np.array([float(r["value"]) for r in rows])
    if values.size != grid.size:
        raise ValueError(f"{path}: {values.size} rows, grid has {grid.size} nodes")
    return check_function(grid, values, name=str(path))


def _fmt(v: float) -> str:
    return format(float(v), ".17g")
