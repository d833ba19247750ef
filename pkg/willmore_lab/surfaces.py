"""Catalog of analytic graph surfaces with hand-coded derivatives up to order four.

The closed forms here never touch the stencils in `field`; they are the oracle the
grid computations are checked against.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from typing import Any, ClassVar

import numpy as np
import sympy as sp

from .errors import ConfigError, DomainError, UnknownSurfaceError
from .field import Grid, ScalarField

logger = logging.getLogger(__name__)

Array = np.ndarray


class SurfaceSpec(ABC):
    """A graph z = u(x, y) with closed-form derivatives.

    Derivative tuples are ordered by the number of y-derivatives:
    d2u -> (u_xx, u_xy, u_yy), d3u -> (u_xxx, u_xxy, u_xyy, u_yyy), and so on.
    """

    name: ClassVar[str]
    defaults: ClassVar[dict[str, float]] = {}
    # limit of ∫K dμ over the whole plane when the surface is entire
    expected_total_curvature: ClassVar[float | None] = None

    def __init__(self, **params: float) -> None:
        unknown = sorted(set(params) - set(self.defaults))
        if unknown:
            raise ConfigError(f"{self.name}: unknown parameter(s) {unknown}")
        self.params: dict[str, float] = {
            key: float(params.get(key, value)) for key, value in self.defaults.items()
        }

    def __getattr__(self, key: str) -> float:
        params = self.__dict__.get("params", {})
        if key in params:
            return params[key]
        raise AttributeError(key)

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"{type(self).__name__}({args})"

    @abstractmethod
    def u(self, x: Array, y: Array) -> Array: ...

    @abstractmethod
    def du(self, x: Array, y: Array) -> tuple[Array, Array]: ...

    @abstractmethod
    def d2u(self, x: Array, y: Array) -> tuple[Array, Array, Array]: ...

    @abstractmethod
    def d3u(self, x: Array, y: Array) -> tuple[Array, Array, Array, Array]: ...

    @abstractmethod
    def d4u(self, x: Array, y: Array) -> tuple[Array, Array, Array, Array, Array]: ...

    @abstractmethod
    def symbolic(self, x: sp.Symbol, y: sp.Symbol) -> sp.Expr:
        """u as a sympy expression, for the symbolic oracle."""

    def valid(self, x: Array, y: Array) -> Array:
        return np.ones(np.broadcast(x, y).shape, dtype=bool)

    def sample_box(self) -> tuple[float, float, float, float]:
        """Box used to draw random points for self-tests."""
        return (-1.5, 1.5, -1.5, 1.5)

    def random_points(self, rng: np.random.Generator, n: int) -> tuple[Array, Array]:
        xmin, xmax, ymin, ymax = self.sample_box()
        xs: list[float] = []
        ys: list[float] = []
        while len(xs) < n:
            x = rng.uniform(xmin, xmax, size=4 * n)
            y = rng.uniform(ymin, ymax, size=4 * n)
            keep = self.valid(x, y)
            xs.extend(x[keep].tolist())
            ys.extend(y[keep].tolist())
        return np.array(xs[:n]), np.array(ys[:n])


class Plane(SurfaceSpec):
    name = "plane"
    defaults = {"a": 0.0, "b": 0.0, "c": 0.0}
    expected_total_curvature = 0.0

    def u(self, x, y):
        return self.a * x + self.b * y + self.c + 0.0 * x * y

    def du(self, x, y):
        zero = np.zeros(np.broadcast(x, y).shape)
        return zero + self.a, zero + self.b

    def d2u(self, x, y):
        zero = np.zeros(np.broadcast(x, y).shape)
        return zero, zero, zero

    def d3u(self, x, y):
        zero = np.zeros(np.broadcast(x, y).shape)
        return zero, zero, zero, zero

    def d4u(self, x, y):
        zero = np.zeros(np.broadcast(x, y).shape)
        return zero, zero, zero, zero, zero

    def symbolic(self, x, y):
        return sp.Float(self.a) * x + sp.Float(self.b) * y + sp.Float(self.c)


class RadialSurface(SurfaceSpec):
    """u = F(q) with q = (x-cx)² + (y-cy)²; derivatives by the chain rule in q."""

    @abstractmethod
    def profile(self, q: Array) -> tuple[Array, Array, Array, Array, Array]:
        """(F, F', F'', F''', F'''') as functions of q."""

    @abstractmethod
    def profile_symbolic(self, q: sp.Expr) -> sp.Expr: ...

    def _local(self, x, y):
        dx = np.asarray(x, dtype=float) - self.params.get("cx", 0.0)
        dy = np.asarray(y, dtype=float) - self.params.get("cy", 0.0)
        return dx, dy, dx * dx + dy * dy

    def u(self, x, y):
        _, _, q = self._local(x, y)
        return self.profile(q)[0]

    def du(self, x, y):
        dx, dy, q = self._local(x, y)
        F1 = self.profile(q)[1]
        return 2 * dx * F1, 2 * dy * F1

    def d2u(self, x, y):
        dx, dy, q = self._local(x, y)
        _, F1, F2, _, _ = self.profile(q)
        return (
            2 * F1 + 4 * dx**2 * F2,
            4 * dx * dy * F2,
            2 * F1 + 4 * dy**2 * F2,
        )

    def d3u(self, x, y):
        dx, dy, q = self._local(x, y)
        _, _, F2, F3, _ = self.profile(q)
        return (
            12 * dx * F2 + 8 * dx**3 * F3,
            4 * dy * F2 + 8 * dx**2 * dy * F3,
            4 * dx * F2 + 8 * dx * dy**2 * F3,
            12 * dy * F2 + 8 * dy**3 * F3,
        )

    def d4u(self, x, y):
        dx, dy, q = self._local(x, y)
        _, _, F2, F3, F4 = self.profile(q)
        return (
            12 * F2 + 48 * dx**2 * F3 + 16 * dx**4 * F4,
            24 * dx * dy * F3 + 16 * dx**3 * dy * F4,
            4 * F2 + 8 * (dx**2 + dy**2) * F3 + 16 * dx**2 * dy**2 * F4,
            24 * dx * dy * F3 + 16 * dx * dy**3 * F4,
            12 * F2 + 48 * dy**2 * F3 + 16 * dy**4 * F4,
        )

    def symbolic(self, x, y):
        cx = sp.Float(self.params.get("cx", 0.0))
        cy = sp.Float(self.params.get("cy", 0.0))
        return self.profile_symbolic((x - cx) ** 2 + (y - cy) ** 2)

    def disk_total_curvature(self, radius: float) -> float:
        """∫K dμ over the projected disk r <= radius: the signed area 2π(1 - n_z) of its Gauss image."""
        slope = 2.0 * radius * float(self.profile(np.asarray(radius**2))[1])
        return 2.0 * math.pi * (1.0 - 1.0 / math.sqrt(1.0 + slope**2))


class Paraboloid(RadialSurface):
    name = "paraboloid"
    defaults = {"k": 1.0, "cx": 0.0, "cy": 0.0}
    expected_total_curvature = 2.0 * math.pi

    def profile(self, q):
        q = np.asarray(q, dtype=float)
        zero = np.zeros_like(q)
        return 0.5 * self.k * q, zero + 0.5 * self.k, zero, zero, zero

    def profile_symbolic(self, q):
        return sp.Float(self.k) * q / 2

    def sample_box(self):
        return (-3.0, 3.0, -3.0, 3.0)


class SphereCap(RadialSurface):
    """Upper hemisphere of radius R, restricted to r < 0.95 R."""

    name = "sphere_cap"
    defaults = {"R": 1.0, "cx": 0.0, "cy": 0.0}
    safety = 0.95

    def valid(self, x, y):
        _, _, q = self._local(x, y)
        return q < (self.safety * self.R) ** 2

    def profile(self, q):
        q = np.asarray(q, dtype=float)
        w = np.sqrt(self.R**2 - q)
        return w, -0.5 / w, -0.25 / w**3, -0.375 / w**5, -0.9375 / w**7

    def profile_symbolic(self, q):
        return sp.sqrt(sp.Float(self.R) ** 2 - q)

    def sample_box(self):
        half = 0.9 * self.R / math.sqrt(2.0)
        return (self.cx - half, self.cx + half, self.cy - half, self.cy + half)


class CatenoidPiece(RadialSurface):
    """u = arccosh(r) on r > 1.05: the upper half of the unit catenoid, a minimal graph."""

    name = "catenoid"
    defaults = {"cx": 0.0, "cy": 0.0}
    inner = 1.05

    def valid(self, x, y):
        _, _, q = self._local(x, y)
        return q > self.inner**2

    def profile(self, q):
        q = np.asarray(q, dtype=float)
        p = q * q - q
        s = 2 * q - 1
        F = np.arccosh(np.sqrt(q))
        F1 = 0.5 / np.sqrt(p)
        F2 = -s / (4 * p**1.5)
        F3 = -0.5 / p**1.5 + 0.375 * s**2 / p**2.5
        F4 = 2.25 * s / p**2.5 - 0.9375 * s**3 / p**3.5
        return F, F1, F2, F3, F4

    def profile_symbolic(self, q):
        return sp.acosh(sp.sqrt(q))

    def sample_box(self):
        return (-3.0, 3.0, -3.0, 3.0)

    def disk_total_curvature(self, radius: float) -> float:
        raise DomainError(self.name, (self.cx, self.cy))


class GaussianBump(RadialSurface):
    """u = A exp(-r² / width²)."""

    name = "gaussian_bump"
    defaults = {"A": 1.0, "width": 1.0, "cx": 0.0, "cy": 0.0}
    expected_total_curvature = 0.0

    def profile(self, q):
        q = np.asarray(q, dtype=float)
        s = -1.0 / self.width**2
        e = self.A * np.exp(s * q)
        return e, s * e, s**2 * e, s**3 * e, s**4 * e

    def profile_symbolic(self, q):
        return sp.Float(self.A) * sp.exp(-q / sp.Float(self.width) ** 2)

    def sample_box(self):
        w = 2.0 * self.width
        return (self.cx - w, self.cx + w, self.cy - w, self.cy + w)


class TiltedBump(SurfaceSpec):
    """Gaussian bump plus the linear tilt a·x + b·y; breaks the radial symmetry."""

    name = "tilted_bump"
    defaults = {"A": 1.0, "width": 1.0, "a": 0.3, "b": -0.2, "cx": 0.0, "cy": 0.0}
    expected_total_curvature = 0.0

    def __init__(self, **params: float) -> None:
        super().__init__(**params)
        self.bump = GaussianBump(
            A=self.A, width=self.width, cx=self.params["cx"], cy=self.params["cy"]
        )

    def u(self, x, y):
        return self.bump.u(x, y) + self.a * x + self.b * y

    def du(self, x, y):
        ux, uy = self.bump.du(x, y)
        return ux + self.a, uy + self.b

    def d2u(self, x, y):
        return self.bump.d2u(x, y)

    def d3u(self, x, y):
        return self.bump.d3u(x, y)

    def d4u(self, x, y):
        return self.bump.d4u(x, y)

    def symbolic(self, x, y):
        return self.bump.symbolic(x, y) + sp.Float(self.a) * x + sp.Float(self.b) * y

    def sample_box(self):
        return self.bump.sample_box()


class TrigSurface(SurfaceSpec):
    """u = A sin(p x + phase_x) sin(q y + phase_y); 2π-periodic for integer p, q."""

    name = "trig"
    defaults = {"A": 0.1, "p": 1.0, "q": 1.0, "phase_x": 0.0, "phase_y": 0.0}

    def _parts(self, x, y):
        ax = self.p * np.asarray(x, dtype=float) + self.phase_x
        ay = self.q * np.asarray(y, dtype=float) + self.phase_y
        return np.sin(ax), np.cos(ax), np.sin(ay), np.cos(ay)

    def u(self, x, y):
        sx, _, sy, _ = self._parts(x, y)
        return self.A * sx * sy

    def du(self, x, y):
        sx, cx, sy, cy = self._parts(x, y)
        A, p, q = self.A, self.p, self.q
        return A * p * cx * sy, A * q * sx * cy

    def d2u(self, x, y):
        sx, cx, sy, cy = self._parts(x, y)
        A, p, q = self.A, self.p, self.q
        return -A * p**2 * sx * sy, A * p * q * cx * cy, -A * q**2 * sx * sy

    def d3u(self, x, y):
        sx, cx, sy, cy = self._parts(x, y)
        A, p, q = self.A, self.p, self.q
        return (
            -A * p**3 * cx * sy,
            -A * p**2 * q * sx * cy,
            -A * p * q**2 * cx * sy,
            -A * q**3 * sx * cy,
        )

    def d4u(self, x, y):
        sx, cx, sy, cy = self._parts(x, y)
        A, p, q = self.A, self.p, self.q
        return (
            A * p**4 * sx * sy,
            -A * p**3 * q * cx * cy,
            A * p**2 * q**2 * sx * sy,
            -A * p * q**3 * cx * cy,
            A * q**4 * sx * sy,
        )

    def symbolic(self, x, y):
        return (
            sp.Float(self.A)
            * sp.sin(sp.Float(self.p) * x + sp.Float(self.phase_x))
            * sp.sin(sp.Float(self.q) * y + sp.Float(self.phase_y))
        )

    def sample_box(self):
        return (0.0, 2 * math.pi, 0.0, 2 * math.pi)


CATALOG: dict[str, type[SurfaceSpec]] = {
    cls.name: cls
    for cls in (Plane, Paraboloid, SphereCap, CatenoidPiece, GaussianBump, TiltedBump, TrigSurface)
}


def catalog_names() -> list[str]:
    return sorted(CATALOG)


def make_surface(name: str, params: dict[str, Any] | None = None) -> SurfaceSpec:
    """Look up a catalog entry by name and instantiate it with JSON-style params."""
    cls = CATALOG.get(name)
    if cls is None:
        raise UnknownSurfaceError(name, catalog_names())
    return cls(**{key: float(value) for key, value in (params or {}).items()})


def random_trig_surfaces(n: int, seed: int = 0, amplitude: float = 0.1) -> list[TrigSurface]:
    """Small-amplitude periodic trig surfaces with random modes and phases."""
    rng = np.random.default_rng(seed)
    surfaces = []
    for _ in range(n):
        surfaces.append(
            TrigSurface(
                A=float(rng.uniform(0.5, 1.0) * amplitude),
                p=float(rng.integers(1, 3)),
                q=float(rng.integers(1, 3)),
                phase_x=float(rng.uniform(0, 2 * math.pi)),
                phase_y=float(rng.uniform(0, 2 * math.pi)),
            )
        )
    return surfaces


def _check_domain(s: SurfaceSpec, x: Array, y: Array) -> None:
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    ok = s.valid(x, y)
    if not np.all(ok):
        idx = np.argwhere(~np.atleast_1d(ok))[0]
        bad_x = np.atleast_1d(x)[tuple(idx)]
        bad_y = np.atleast_1d(y)[tuple(idx)]
        raise DomainError(s.name, (float(bad_x), float(bad_y)))


def sample(s: SurfaceSpec, g: Grid) -> ScalarField:
    """values[j, i] = u(x_i, y_j) straight from the closed form."""
    X, Y = g.coords()
    _check_domain(s, X, Y)
    return ScalarField(g, s.u(X, Y))


def _slope(s: SurfaceSpec, x: Array, y: Array) -> Array:
    ux, uy = s.du(x, y)
    return np.sqrt(1.0 + ux**2 + uy**2)


def exact_curvatures(s: SurfaceSpec, x: Array, y: Array) -> tuple[Array, Array]:
    """(H, K) with H = div(Du/v) and K = det D²u / v⁴, upward normal."""
    _check_domain(s, x, y)
    p, q = s.du(x, y)
    r, m, t = s.d2u(x, y)
    w = 1.0 + p**2 + q**2
    H = ((1 + q**2) * r - 2 * p * q * m + (1 + p**2) * t) / w**1.5
    K = (r * t - m**2) / w**2
    return H, K


def exact_willmore_density(s: SurfaceSpec, x: Array, y: Array) -> Array:
    """¼H²·v, the dxdy density of the Willmore energy."""
    H, _ = exact_curvatures(s, x, y)
    return 0.25 * H**2 * _slope(s, x, y)


def _mean_curvature_jets(s: SurfaceSpec, x: Array, y: Array):
    """H, its gradient and its Hessian from D¹u..D⁴u by the product rule."""
    p, q = s.du(x, y)
    r, m, t = s.d2u(x, y)
    uxxx, uxxy, uxyy, uyyy = s.d3u(x, y)
    uxxxx, uxxxy, uxxyy, uxyyy, uyyyy = s.d4u(x, y)

    dp = (r, m)
    dq = (m, t)
    ddp = ((uxxx, uxxy), (uxxy, uxyy))
    ddq = ((uxxy, uxyy), (uxyy, uyyy))
    dr = (uxxx, uxxy)
    dm = (uxxy, uxyy)
    dt = (uxyy, uyyy)
    ddr = ((uxxxx, uxxxy), (uxxxy, uxxyy))
    ddm = ((uxxxy, uxxyy), (uxxyy, uxyyy))
    ddt = ((uxxyy, uxyyy), (uxyyy, uyyyy))

    # N = a·u_xx + 2b·u_xy + c·u_yy, H = N / w^{3/2}
    a = 1 + q**2
    b = -p * q
    c = 1 + p**2
    da = [2 * q * dq[i] for i in range(2)]
    db = [-(dp[i] * q + p * dq[i]) for i in range(2)]
    dc = [2 * p * dp[i] for i in range(2)]
    N = a * r + 2 * b * m + c * t
    dN = [
        da[i] * r + a * dr[i] + 2 * (db[i] * m + b * dm[i]) + dc[i] * t + c * dt[i]
        for i in range(2)
    ]
    ddN = [[None, None], [None, None]]
    for i in range(2):
        for j in range(2):
            dda = 2 * (dq[i] * dq[j] + q * ddq[i][j])
            ddb = -(ddp[i][j] * q + dp[i] * dq[j] + dp[j] * dq[i] + p * ddq[i][j])
            ddc = 2 * (dp[i] * dp[j] + p * ddp[i][j])
            ddN[i][j] = (
                dda * r + da[i] * dr[j] + da[j] * dr[i] + a * ddr[i][j]
                + 2 * (ddb * m + db[i] * dm[j] + db[j] * dm[i] + b * ddm[i][j])
                + ddc * t + dc[i] * dt[j] + dc[j] * dt[i] + c * ddt[i][j]
            )

    w = 1 + p**2 + q**2
    dw = [2 * (p * dp[i] + q * dq[i]) for i in range(2)]
    H = N * w**-1.5
    dH = [dN[i] * w**-1.5 - 1.5 * N * w**-2.5 * dw[i] for i in range(2)]
    ddH = [[None, None], [None, None]]
    for i in range(2):
        for j in range(2):
            ddw = 2 * (dp[i] * dp[j] + p * ddp[i][j] + dq[i] * dq[j] + q * ddq[i][j])
            ddH[i][j] = (
                ddN[i][j] * w**-1.5
                - 1.5 * w**-2.5 * (dN[i] * dw[j] + dN[j] * dw[i] + N * ddw)
                + 3.75 * N * w**-3.5 * dw[i] * dw[j]
            )
    return (p, q, w), H, dH, ddH


def exact_laplace_beltrami_H(s: SurfaceSpec, x: Array, y: Array) -> Array:
    """Δ_g H = g^{ij} H_ij − H (Du·∇H) / v for the graph metric g = I + Du⊗Du."""
    _check_domain(s, x, y)
    (p, q, w), H, dH, ddH = _mean_curvature_jets(s, x, y)
    trace = (
        (1 - p * p / w) * ddH[0][0]
        - 2 * (p * q / w) * ddH[0][1]
        + (1 - q * q / w) * ddH[1][1]
    )
    return trace - H * (p * dH[0] + q * dH[1]) / np.sqrt(w)


def exact_el_residual(s: SurfaceSpec, x: Array, y: Array) -> Array:
    """Δ_g H + ½H³ − 2HK from the closed forms."""
    H, K = exact_curvatures(s, x, y)
    return exact_laplace_beltrami_H(s, x, y) + 0.5 * H**3 - 2.0 * H * K


def consistency_check(
    s: SurfaceSpec, n: int = 100, seed: int = 0, step: float = 1e-4
) -> dict[int, float]:
    """Central differences of each derivative order against the next one.

    Returns, per order k = 1..4, the largest discrepancy between the FD of the
    order-(k-1) evaluators and the order-k evaluators, scaled by 1 + |exact|.
    """
    rng = np.random.default_rng(seed)
    x, y = s.random_points(rng, n)
    orders = [
        lambda x, y: (s.u(x, y),),
        s.du,
        s.d2u,
        s.d3u,
        s.d4u,
    ]
    report: dict[int, float] = {}
    for k in range(1, 5):
        lower = orders[k - 1]
        upper = orders[k](x, y)
        fd_x = [(a - b) / (2 * step) for a, b in zip(lower(x + step, y), lower(x - step, y))]
        fd_y = [(a - b) / (2 * step) for a, b in zip(lower(x, y + step), lower(x, y - step))]
        # component i of order k-1 has i y-derivatives: ∂x keeps i, ∂y moves to i+1
        worst = 0.0
        for i in range(k):
            worst = max(worst, float(np.max(np.abs(fd_x[i] - upper[i]) / (1 + np.abs(upper[i])))))
            worst = max(
                worst, float(np.max(np.abs(fd_y[i] - upper[i + 1]) / (1 + np.abs(upper[i + 1]))))
            )
        report[k] = worst
    logger.debug("consistency check %s: %s", s, report)
    return report
