"""Uniform-grid scalar/vector fields with finite-difference and trapezoid calculus."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Literal, Sequence, Union

import numpy as np

from .errors import GridError, NonFiniteFieldError

logger = logging.getLogger(__name__)

BoundaryMode = Literal["periodic", "one_sided"]
MaskLike = Union[np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray], None]

MIN_POINTS = 5
# Fourth-order residuals compose four first-order stencils.
MIN_POINTS_FOURTH_ORDER = 17


class EmptyMaskWarning(UserWarning):
    """Raised through `warnings` when an integral is taken over no points."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid with spacing h in both axes.

    Field arrays have shape (ny, nx): ``values[j, i]`` is the sample at
    ``(x0 + i*h, y0 + j*h)``.
    """

    nx: int
    ny: int
    h: float
    x0: float = 0.0
    y0: float = 0.0
    boundary_mode: BoundaryMode = "one_sided"

    def __post_init__(self) -> None:
        if self.nx < MIN_POINTS or self.ny < MIN_POINTS:
            raise GridError(f"grid too small: nx={self.nx}, ny={self.ny} (minimum {MIN_POINTS})")
        if not (math.isfinite(self.h) and self.h > 0):
            raise GridError(f"grid spacing must be positive and finite, got h={self.h}")
        if self.boundary_mode not in ("periodic", "one_sided"):
            raise GridError(f"unknown boundary_mode '{self.boundary_mode}'")

    @classmethod
    def centered(
        cls,
        n: int,
        half_width: float,
        boundary_mode: BoundaryMode = "one_sided",
    ) -> Grid:
        """Square n×n grid covering [-half_width, half_width]²."""
        h = 2.0 * half_width / (n - 1)
        return cls(nx=n, ny=n, h=h, x0=-half_width, y0=-half_width, boundary_mode=boundary_mode)

    @classmethod
    def periodic_square(cls, n: int, period: float = 2.0 * math.pi) -> Grid:
        """n×n periodic grid on [0, period)²."""
        return cls(nx=n, ny=n, h=period / n, x0=0.0, y0=0.0, boundary_mode="periodic")

    @property
    def is_periodic(self) -> bool:
        return self.boundary_mode == "periodic"

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.h * np.arange(self.ny)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        return (
            self.x0,
            self.x0 + (self.nx - 1) * self.h,
            self.y0,
            self.y0 + (self.ny - 1) * self.h,
        )

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y)

    def refine(self) -> Grid:
        if self.is_periodic:
            return Grid(2 * self.nx, 2 * self.ny, self.h / 2, self.x0, self.y0, "periodic")
        return Grid(
            2 * self.nx - 1, 2 * self.ny - 1, self.h / 2, self.x0, self.y0, self.boundary_mode
        )

    def contains_disk(
        self, radius: float, center: tuple[float, float] = (0.0, 0.0), margin: int = 0
    ) -> bool:
        """True when the closed disk lies inside the window shrunk by `margin` cells."""
        xmin, xmax, ymin, ymax = self.extent
        pad = margin * self.h
        cx, cy = center
        return (
            cx - radius >= xmin + pad
            and cx + radius <= xmax - pad
            and cy - radius >= ymin + pad
            and cy + radius <= ymax - pad
        )

    def resolve_mask(self, mask: MaskLike) -> np.ndarray | None:
        if mask is None:
            return None
        if callable(mask):
            X, Y = self.coords()
            mask = mask(X, Y)
        resolved = np.asarray(mask, dtype=bool)
        if resolved.shape != self.shape:
            raise GridError(f"mask shape {resolved.shape} does not match grid {self.shape}")
        return resolved


def require_same_grid(a: Grid, b: Grid) -> None:
    if a != b:
        raise GridError(f"mismatched grids: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Immutable sampled function; values are always finite."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64)
        if arr.shape != self.grid.shape:
            raise GridError(f"values shape {arr.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(arr)):
            bad = np.argwhere(~np.isfinite(arr))[0]
            raise NonFiniteFieldError(f"non-finite value at index (j={bad[0]}, i={bad[1]})")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_function(
        cls, grid: Grid, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    ) -> ScalarField:
        X, Y = grid.coords()
        return cls(grid, np.broadcast_to(fn(X, Y), grid.shape))

    @classmethod
    def constant(cls, grid: Grid, value: float = 0.0) -> ScalarField:
        return cls(grid, np.full(grid.shape, float(value)))

    def _combine(self, other: ScalarField | float, op: Callable) -> ScalarField:
        if isinstance(other, ScalarField):
            require_same_grid(self.grid, other.grid)
            return ScalarField(self.grid, op(self.values, other.values))
        return ScalarField(self.grid, op(self.values, other))

    def __add__(self, other: ScalarField | float) -> ScalarField:
        return self._combine(other, np.add)

    def __radd__(self, other: float) -> ScalarField:
        return self._combine(other, np.add)

    def __sub__(self, other: ScalarField | float) -> ScalarField:
        return self._combine(other, np.subtract)

    def __rsub__(self, other: float) -> ScalarField:
        return ScalarField(self.grid, other - self.values)

    def __mul__(self, other: ScalarField | float) -> ScalarField:
        return self._combine(other, np.multiply)

    def __rmul__(self, other: float) -> ScalarField:
        return self._combine(other, np.multiply)

    def __truediv__(self, other: ScalarField | float) -> ScalarField:
        return self._combine(other, np.divide)

    def __rtruediv__(self, other: float) -> ScalarField:
        return ScalarField(self.grid, other / self.values)

    def __neg__(self) -> ScalarField:
        return ScalarField(self.grid, -self.values)

    def __pow__(self, exponent: float) -> ScalarField:
        return ScalarField(self.grid, self.values**exponent)

    def __abs__(self) -> ScalarField:
        return ScalarField(self.grid, np.abs(self.values))

    def masked(self, mask: MaskLike) -> ScalarField:
        resolved = self.grid.resolve_mask(mask)
        if resolved is None:
            return self
        return ScalarField(self.grid, np.where(resolved, self.values, 0.0))

    def sup(self, mask: MaskLike = None) -> float:
        """max |f| over the mask (0 for an empty mask)."""
        resolved = self.grid.resolve_mask(mask)
        data = np.abs(self.values if resolved is None else self.values[resolved])
        return float(data.max()) if data.size else 0.0

    def min(self) -> float:
        return float(self.values.min())


@dataclass(frozen=True, eq=False)
class VectorField:
    x: ScalarField
    y: ScalarField

    def __post_init__(self) -> None:
        require_same_grid(self.x.grid, self.y.grid)

    @property
    def grid(self) -> Grid:
        return self.x.grid

    def dot(self, other: VectorField) -> ScalarField:
        return self.x * other.x + self.y * other.y

    def norm_sq(self) -> ScalarField:
        return self.dot(self)

    def scale(self, factor: ScalarField | float) -> VectorField:
        return VectorField(self.x * factor, self.y * factor)

    def __add__(self, other: VectorField) -> VectorField:
        return VectorField(self.x + other.x, self.y + other.y)

    def __sub__(self, other: VectorField) -> VectorField:
        return VectorField(self.x - other.x, self.y - other.y)


# x varies along axis 1, y along axis 0
_AXIS_X = 1
_AXIS_Y = 0


def _first_derivative(values: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(values, -1, axis) - np.roll(values, 1, axis)) / (2.0 * h)
    return np.gradient(values, h, axis=axis, edge_order=2)


def _second_derivative(values: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(values, -1, axis) - 2.0 * values + np.roll(values, 1, axis)) / h**2
    out = np.empty_like(values)
    v = np.moveaxis(values, axis, 0)
    o = np.moveaxis(out, axis, 0)
    o[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2
    o[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h**2
    o[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h**2
    return out


def partial_x(f: ScalarField) -> ScalarField:
    g = f.grid
    return ScalarField(g, _first_derivative(f.values, g.h, _AXIS_X, g.is_periodic))


def partial_y(f: ScalarField) -> ScalarField:
    g = f.grid
    return ScalarField(g, _first_derivative(f.values, g.h, _AXIS_Y, g.is_periodic))


def gradient(f: ScalarField) -> VectorField:
    """Second-order central differences; periodic wrap or second-order one-sided edges."""
    return VectorField(partial_x(f), partial_y(f))


def hessian(f: ScalarField) -> tuple[ScalarField, ScalarField, ScalarField]:
    """(f_xx, f_xy, f_yy). The mixed term is computed once and serves as both xy and yx."""
    g = f.grid
    fxx = ScalarField(g, _second_derivative(f.values, g.h, _AXIS_X, g.is_periodic))
    fyy = ScalarField(g, _second_derivative(f.values, g.h, _AXIS_Y, g.is_periodic))
    fxy = partial_y(partial_x(f))
    return fxx, fxy, fyy


def divergence(V: VectorField) -> ScalarField:
    return partial_x(V.x) + partial_y(V.y)


def laplacian_wide(f: ScalarField) -> ScalarField:
    """5-point Laplacian at spacing 2h on periodic grids; div(grad f) otherwise."""
    g = f.grid
    if not g.is_periodic:
        return divergence(gradient(f))
    v = f.values
    total = (
        np.roll(v, -2, _AXIS_X)
        + np.roll(v, 2, _AXIS_X)
        + np.roll(v, -2, _AXIS_Y)
        + np.roll(v, 2, _AXIS_Y)
        - 4.0 * v
    )
    return ScalarField(g, total / (4.0 * g.h**2))


def trapezoid_weights(grid: Grid) -> np.ndarray:
    wx = np.full(grid.nx, grid.h)
    wy = np.full(grid.ny, grid.h)
    if not grid.is_periodic:
        wx[[0, -1]] *= 0.5
        wy[[0, -1]] *= 0.5
    return np.outer(wy, wx)


def integrate(f: ScalarField, mask: MaskLike = None) -> float:
    """Trapezoid integral of f over the masked points.

    numpy.sum reduces pairwise in a fixed order, so the result is bit-stable
    for a given grid.
    """
    resolved = f.grid.resolve_mask(mask)
    integrand = trapezoid_weights(f.grid) * f.values
    if resolved is not None:
        if not resolved.any():
            logger.warning("integrate called with an empty mask; returning 0")
            warnings.warn("empty integration mask", EmptyMaskWarning, stacklevel=2)
            return 0.0
        integrand = np.where(resolved, integrand, 0.0)
    return float(np.sum(integrand))


def interior_mask(grid: Grid, margin: int) -> np.ndarray:
    """Points at least `margin` cells from every edge; everything on periodic grids."""
    mask = np.zeros(grid.shape, dtype=bool)
    if grid.is_periodic or margin <= 0:
        mask[:] = True
        return mask
    if 2 * margin >= min(grid.nx, grid.ny):
        raise GridError(f"trim margin {margin} leaves no interior on a {grid.nx}x{grid.ny} grid")
    mask[margin:-margin, margin:-margin] = True
    return mask


def core_mask(grid: Grid, fraction: float = 0.6) -> np.ndarray:
    """Fixed physical sub-window around the window center covering `fraction` of each side.

    Unlike `interior_mask`, the region does not move when h is refined.
    """
    xmin, xmax, ymin, ymax = grid.extent
    cx, cy = 0.5 * (xmin + xmax), 0.5 * (ymin + ymax)
    hx, hy = 0.5 * fraction * (xmax - xmin), 0.5 * fraction * (ymax - ymin)
    X, Y = grid.coords()
    tol = 1e-9 * grid.h
    return (np.abs(X - cx) <= hx + tol) & (np.abs(Y - cy) <= hy + tol)


def disk_mask(grid: Grid, radius: float, center: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    X, Y = grid.coords()
    return (X - center[0]) ** 2 + (Y - center[1]) ** 2 <= radius**2


def convergence_order(errors: Sequence[float]) -> list[float]:
    """log2 ratios of successive errors under h -> h/2.

    An exact-zero fine error gives inf (nan when both are zero).
    """
    orders: list[float] = []
    for coarse, fine in zip(errors[:-1], errors[1:]):
        if fine == 0.0:
            orders.append(math.nan if coarse == 0.0 else math.inf)
        else:
            orders.append(math.log2(coarse / fine) if coarse > 0 else -math.inf)
    return orders
