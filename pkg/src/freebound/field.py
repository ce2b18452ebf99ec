"""Discrete scalar fields on uniform dyadic lattices, balls, and rescaling.

Grids have spacing h = 2^-m over a box whose side lengths are integer
multiples of h; all radii and zoom factors in the experiments are dyadic so
that field rescaling maps nodes onto nodes exactly, never interpolating.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Uniform lattice over a box in dimension 1 or 2 with spacing 2^-m."""

    dim: int
    m: int
    box: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("grids support dimensions 1 and 2 only")
        if len(self.box) != self.dim:
            raise ValueError("box must list one interval per axis")
        if self.m < 0:
            raise ValueError("refinement level m must be nonnegative")
        h = self.h
        for lo, hi in self.box:
            if hi <= lo:
                raise ValueError("box intervals must be nonempty")
            n = (hi - lo) / h
            if abs(n - round(n)) > 1e-9:
                raise ValueError("box side lengths must be integer multiples of h")

    @property
    def h(self) -> float:
        return 2.0 ** (-self.m)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(round((hi - lo) / self.h)) + 1 for lo, hi in self.box)

    def axis_coords(self, axis: int) -> np.ndarray:
        lo, _ = self.box[axis]
        return lo + self.h * np.arange(self.shape[axis])

    def node_point(self, index: Sequence[int]) -> np.ndarray:
        return np.array([self.box[a][0] + self.h * index[a] for a in range(self.dim)])

    def nearest_node(self, point: Sequence[float]) -> tuple[int, ...]:
        point = np.atleast_1d(np.asarray(point, dtype=float))
        idx = []
        for a in range(self.dim):
            i = int(round((point[a] - self.box[a][0]) / self.h))
            idx.append(min(max(i, 0), self.shape[a] - 1))
        return tuple(idx)

    def node_points(self) -> np.ndarray:
        """All node coordinates, shape (*shape, dim)."""
        axes = [self.axis_coords(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def cell_centers(self) -> np.ndarray:
        """Cell-center coordinates, shape (*shape-1, dim)."""
        axes = [self.axis_coords(a)[:-1] + 0.5 * self.h for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)


def perimeter_mask(grid: GridSpec) -> np.ndarray:
    """Dirichlet mask marking the box perimeter."""
    mask = np.zeros(grid.shape, dtype=bool)
    if grid.dim == 1:
        mask[0] = mask[-1] = True
    else:
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
    return mask


@dataclass
class ScalarField:
    """Node values on a grid plus the Dirichlet mask; value semantics."""

    grid: GridSpec
    values: np.ndarray
    boundary_mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        if self.boundary_mask is None:
            self.boundary_mask = perimeter_mask(self.grid)
        else:
            self.boundary_mask = np.asarray(self.boundary_mask, dtype=bool)
            if self.boundary_mask.shape != self.grid.shape:
                raise ValueError("boundary mask shape mismatch")

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.boundary_mask.copy())


def field_from_function(grid: GridSpec, fn, boundary_mask: np.ndarray | None = None) -> ScalarField:
    """Sample fn over the nodes; fn receives coordinate arrays, one per axis."""
    pts = grid.node_points()
    vals = fn(*(pts[..., a] for a in range(grid.dim)))
    return ScalarField(grid, np.broadcast_to(np.asarray(vals, float), grid.shape).copy(), boundary_mask)


@dataclass(frozen=True)
class BallSpec:
    """Euclidean ball: center node index + radius (a multiple of h)."""

    center: tuple[int, ...]
    radius: float

    def validate(self, grid: GridSpec) -> None:
        if len(self.center) != grid.dim:
            raise ValueError("ball center dimension mismatch")
        c = grid.node_point(self.center)
        for a in range(grid.dim):
            lo, hi = grid.box[a]
            if c[a] - self.radius < lo - 1e-12 or c[a] + self.radius > hi + 1e-12:
                raise ValueError(f"ball of radius {self.radius} at {tuple(c)} leaves the grid box")


def ball_at_point(grid: GridSpec, point: Sequence[float], radius: float) -> BallSpec:
    return BallSpec(grid.nearest_node(point), radius)


def node_mask(grid: GridSpec, ball: BallSpec) -> np.ndarray:
    """Nodes with |x - center| <= radius (exact for dyadic radii: no ties)."""
    ball.validate(grid)
    c = grid.node_point(ball.center)
    if grid.dim == 1:
        d2 = (grid.axis_coords(0) - c[0]) ** 2
    else:
        dx = grid.axis_coords(0) - c[0]
        dy = grid.axis_coords(1) - c[1]
        d2 = dx[:, None] ** 2 + dy[None, :] ** 2
    return d2 <= ball.radius**2


def cell_mask(grid: GridSpec, ball: BallSpec) -> np.ndarray:
    """Cells whose center lies in the ball; exact under dyadic alignment."""
    ball.validate(grid)
    c = grid.node_point(ball.center)
    if grid.dim == 1:
        mid = grid.axis_coords(0)[:-1] + 0.5 * grid.h
        d2 = (mid - c[0]) ** 2
    else:
        mx = grid.axis_coords(0)[:-1] + 0.5 * grid.h
        my = grid.axis_coords(1)[:-1] + 0.5 * grid.h
        d2 = (mx - c[0])[:, None] ** 2 + (my - c[1])[None, :] ** 2
    return d2 <= ball.radius**2


def sup_norm_on_ball(u: ScalarField, ball: BallSpec) -> float:
    """max |u| over ball nodes."""
    mask = node_mask(u.grid, ball)
    return float(np.max(np.abs(u.values[mask])))


def l2_norm_on_ball(u: ScalarField, ball: BallSpec) -> float:
    """Discrete L2 norm with quadrature weight h^n over ball nodes."""
    mask = node_mask(u.grid, ball)
    hn = u.grid.h ** u.grid.dim
    return float(np.sqrt(hn * np.sum(u.values[mask] ** 2)))


def discrete_gradient(u: ScalarField) -> np.ndarray:
    """Forward-difference gradient on cells: shape (*shape-1, dim); exact on affines.

    Component a on a cell is the difference along axis a from the cell's
    anchor node, divided by h.
    """
    h = u.grid.h
    v = u.values
    if u.grid.dim == 1:
        return ((v[1:] - v[:-1]) / h)[:, None]
    gx = (v[1:, :-1] - v[:-1, :-1]) / h
    gy = (v[:-1, 1:] - v[:-1, :-1]) / h
    return np.stack([gx, gy], axis=-1)


def cell_averages(u: ScalarField) -> np.ndarray:
    """Mean of the 2^n corner values per cell."""
    v = u.values
    if u.grid.dim == 1:
        return 0.5 * (v[1:] + v[:-1])
    return 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[:-1, 1:] + v[1:, 1:])


def restrict_rescale_field(
    u: ScalarField,
    x0: Sequence[float],
    a: float,
    b: float,
    target: GridSpec,
) -> ScalarField:
    """w(x) = u(x0 + a x) / b, exact at every target node.

    Requires a * h_target to be an integer multiple of the source spacing and
    x0 + a * (target nodes) to land exactly on source nodes; misalignment is
    rejected rather than interpolated.
    """
    if a <= 0.0 or b <= 0.0:
        raise ValueError("rescale factors a, b must be positive")
    if target.dim != u.grid.dim:
        raise ValueError("source and target dimensions differ")
    src = u.grid
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    index_maps = []
    for axis in range(src.dim):
        ys = target.axis_coords(axis)
        xs = x0[axis] + a * ys
        ratio = (xs - src.box[axis][0]) / src.h
        idx = np.round(ratio).astype(int)
        if np.max(np.abs(ratio - idx)) > 1e-9:
            raise ValueError("rescale misaligned: source points fall between nodes")
        if idx.min() < 0 or idx.max() >= src.shape[axis]:
            raise ValueError("rescaled window leaves the source box")
        index_maps.append(idx)
    if src.dim == 1:
        w = u.values[index_maps[0]] / b
    else:
        w = u.values[np.ix_(index_maps[0], index_maps[1])] / b
    return ScalarField(target, w)


# ---------------------------------------------------------------------------
# CSV interchange

def field_to_csv(u: ScalarField) -> str:
    """Serialize: header row dim,m,lo,hi[,lo2,hi2]; then row-major values."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = [u.grid.dim, u.grid.m]
    for lo, hi in u.grid.box:
        header.extend([repr(lo), repr(hi)])
    w.writerow(header)
    if u.grid.dim == 1:
        for v in u.values:
            w.writerow([repr(float(v))])
    else:
        for row in u.values:
            w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def field_from_csv(text: str) -> ScalarField:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty field CSV")
    head = rows[0]
    dim = int(head[0])
    m = int(head[1])
    box = tuple((float(head[2 + 2 * a]), float(head[3 + 2 * a])) for a in range(dim))
    grid = GridSpec(dim, m, box)
    data = [[float(v) for v in row] for row in rows[1:] if row]
    values = np.asarray(data, dtype=float)
    if dim == 1:
        values = values.reshape(-1)
    return ScalarField(grid, values.reshape(grid.shape))
