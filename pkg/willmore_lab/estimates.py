"""Computable versions of the area-growth, cutoff, Gauss-map and total-curvature estimates."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, TypeVar

import numpy as np
from pydantic import BaseModel, Field

from .errors import GridError, SupportError
from .field import (
    Grid,
    ScalarField,
    VectorField,
    disk_mask,
    gradient,
    integrate,
    interior_mask,
    partial_x,
    partial_y,
)
from .geometry import (
    GeometryBundle,
    cometric_norm_sq,
    surface_integral,
    tangential_gradient_sq,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

# Default untrusted margin for estimate integrals.
TRIM = 2
CHAIN_RTOL = 1e-12


def sweep(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    """Map `fn` over `items`, in input order, on up to `workers` threads."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class ReportRow:
    parameter: float
    measured: float
    paper_bound: float
    satisfied: bool
    trusted: bool = True

    @classmethod
    def evaluate(
        cls, parameter: float, measured: float, bound: float, tol: float = 1e-9, trusted: bool = True
    ) -> ReportRow:
        return cls(
            parameter=float(parameter),
            measured=float(measured),
            paper_bound=float(bound),
            satisfied=bool(measured <= bound * (1.0 + tol) + 1e-300),
            trusted=trusted,
        )

    def as_record(self) -> dict[str, float | bool]:
        return {
            "param": self.parameter,
            "measured": self.measured,
            "bound": self.paper_bound,
            "satisfied": self.satisfied,
        }


class ConstantLedger(BaseModel):
    """Named estimate constants with the formula each one came from."""

    C1: float = Field(ge=0)
    C2: float = Field(ge=0)
    C_alpha: float = Field(ge=0)
    C3: float = Field(ge=0)
    C4: float = Field(ge=0)
    C5: float = Field(ge=0)
    C_alpha_measured: float | None = Field(default=None, ge=0)
    formulas: dict[str, str] = Field(default_factory=dict)


def build_ledger(b: GeometryBundle, trim: int = TRIM, c_alpha: float = 1.0) -> ConstantLedger:
    h2_total = max(0.0, surface_integral(b, b.H * b.H, trim=trim))
    c1 = 2.0 * math.sqrt(math.pi) * math.sqrt(h2_total)
    c2 = 2.0 * math.pi + c1
    c4 = c2
    c5 = 4.0 * math.e**2 * c4
    ledger = ConstantLedger(
        C1=c1,
        C2=c2,
        C_alpha=c_alpha,
        C3=h2_total,
        C4=c4,
        C5=c5,
        C_alpha_measured=alpha_certificate(b, trim),
        formulas={
            "C1": "2*sqrt(pi)*sqrt(int_window H^2 dmu)",
            "C2": "2*pi + C1",
            "C_alpha": "sup of tan(theta/2) over the closed upper hemisphere",
            "C3": "int_window H^2 dmu",
            "C4": "C2 (area of Sigma within B(R) <= C4*R^2)",
            "C5": "4*e^2*C4",
        },
    )
    logger.info("ledger: C1=%.6g C2=%.6g C3=%.6g C5=%.6g", c1, c2, h2_total, c5)
    return ledger


def area_growth(
    b: GeometryBundle,
    radii: list[float],
    ledger: ConstantLedger | None = None,
    trim: int = TRIM,
    workers: int = 1,
) -> list[ReportRow]:
    """|Σ ∩ B(R)| for each R against C2·R²; the ball is the ambient one in R³."""
    ledger = ledger or build_ledger(b, trim)
    X, Y = b.grid.coords()
    rho_sq = X**2 + Y**2 + b.u.values**2
    ones = ScalarField.constant(b.grid, 1.0)

    def row(radius: float) -> ReportRow:
        trusted = b.grid.contains_disk(radius, margin=trim)
        if not trusted:
            logger.warning("B(%g) is not inside the trimmed window; row is untrusted", radius)
        area = surface_integral(b, ones, rho_sq <= radius**2, trim)
        return ReportRow.evaluate(radius, area, ledger.C2 * radius**2, trusted=trusted)

    return sweep(row, radii, workers)


@dataclass
class ChainReport:
    radius: float
    terms: list[float]
    disk_area: float
    disk_area_exact: float
    area: float
    area_bound: float
    links_hold: list[bool]
    area_holds: bool
    trusted: bool

    @property
    def failing_link(self) -> int | None:
        """1-based index of the first violated link (the area check is link len(terms))."""
        for i, ok in enumerate(self.links_hold, start=1):
            if not ok:
                return i
        return None if self.area_holds else len(self.terms)

    @property
    def ok(self) -> bool:
        return self.failing_link is None

    def as_dict(self) -> dict:
        return {
            "radius": self.radius,
            "terms": self.terms,
            "disk_area": self.disk_area,
            "disk_area_exact": self.disk_area_exact,
            "area": self.area,
            "area_bound": self.area_bound,
            "links_hold": self.links_hold,
            "area_holds": self.area_holds,
            "failing_link": self.failing_link,
            "trusted": self.trusted,
        }


def calibration_chain(b: GeometryBundle, radius: float, trim: int = TRIM) -> ChainReport:
    """Every intermediate of the calibration/Hölder chain on the projected disk r ≤ R.

    The discrete disk area stands in for πR² inside the links so each one is an exact
    inequality of the same quadrature; πR² is reported next to it.
    """
    g = b.grid
    trusted = g.contains_disk(radius, margin=trim)
    disk = disk_mask(g, radius) & interior_mask(g, trim)
    ones = ScalarField.constant(g, 1.0)
    H2 = b.H * b.H

    disk_area = integrate(ones, disk)
    t1 = 2.0 * radius * integrate(abs(b.H), disk)
    t2 = 2.0 * radius * math.sqrt(max(0.0, integrate(H2, disk)) * disk_area)
    t3 = 2.0 * radius * math.sqrt(max(0.0, surface_integral(b, H2, disk)) * disk_area)
    t4 = 2.0 * radius * math.sqrt(max(0.0, surface_integral(b, H2, trim=trim)) * disk_area)
    terms = [t1, t2, t3, t4]
    links = [lo <= hi * (1.0 + CHAIN_RTOL) + 1e-300 for lo, hi in zip(terms[:-1], terms[1:])]

    X, Y = g.coords()
    ball = X**2 + Y**2 + b.u.values**2 <= radius**2
    area = surface_integral(b, ones, ball, trim)
    area_bound = 2.0 * math.pi * radius**2 + t1
    report = ChainReport(
        radius=radius,
        terms=terms,
        disk_area=disk_area,
        disk_area_exact=math.pi * radius**2,
        area=area,
        area_bound=area_bound,
        links_hold=links,
        area_holds=area <= area_bound * (1.0 + CHAIN_RTOL),
        trusted=trusted,
    )
    if not report.ok:
        logger.warning("calibration chain at R=%g fails at link %s", radius, report.failing_link)
    return report


def eta_profile(rho: np.ndarray, sigma: float) -> np.ndarray:
    """η_σ(ρ): 1 for ρ ≤ √σ, 2 − 2 log ρ / log σ up to σ, then 0."""
    if not sigma > 1.0:
        raise ValueError(f"sigma must exceed 1, got {sigma}")
    rho = np.asarray(rho, dtype=float)
    log_sigma = math.log(sigma)
    ramp = 2.0 - 2.0 * np.log(np.maximum(rho, 1e-300)) / log_sigma
    return np.where(rho <= math.sqrt(sigma), 1.0, np.where(rho > sigma, 0.0, np.clip(ramp, 0.0, 1.0)))


@dataclass
class CutoffSpec:
    sigma: float
    eta: ScalarField
    grad_eta_tangential_sq: ScalarField
    # 2/(|x| log σ) on the annulus √σ < |x| ≤ σ, 0 elsewhere
    grad_bound: ScalarField
    truncated: bool


def ambient_radius(b: GeometryBundle) -> np.ndarray:
    X, Y = b.grid.coords()
    return np.sqrt(X**2 + Y**2 + b.u.values**2)


def eta_sigma(b: GeometryBundle, sigma: float, trim: int = TRIM) -> CutoffSpec:
    rho = ambient_radius(b)
    eta = ScalarField(b.grid, eta_profile(rho, sigma))
    annulus = (rho > math.sqrt(sigma)) & (rho <= sigma)
    bound = np.where(annulus, 2.0 / (np.maximum(rho, 1e-300) * math.log(sigma)), 0.0)
    truncated = not b.grid.contains_disk(sigma, margin=trim)
    if truncated:
        logger.warning("cutoff support |x| <= %g leaves the trimmed window", sigma)
    return CutoffSpec(
        sigma=sigma,
        eta=eta,
        grad_eta_tangential_sq=tangential_gradient_sq(b, eta),
        grad_bound=ScalarField(b.grid, bound),
        truncated=truncated,
    )


def cutoff_energy(
    b: GeometryBundle, spec: CutoffSpec, ledger: ConstantLedger, trim: int = TRIM
) -> ReportRow:
    """∫|∇η_σ|² dμ against C5 / log σ."""
    measured = surface_integral(b, spec.grad_eta_tangential_sq, trim=trim)
    return ReportRow.evaluate(
        spec.sigma, measured, ledger.C5 / math.log(spec.sigma), trusted=not spec.truncated
    )


def gauss_map_differential(b: GeometryBundle) -> list[VectorField]:
    return [gradient(component) for component in b.n]


def alpha_pullback(b: GeometryBundle) -> VectorField:
    """n*α for α = (x dy − y dx)/(1 + z), a primitive of the sphere's area form on z > −1."""
    nx, ny, nz = b.n
    dnx, dny = gradient(nx), gradient(ny)
    weight = 1.0 / (1.0 + nz)
    return VectorField(
        (nx * dny.x - ny * dnx.x) * weight,
        (nx * dny.y - ny * dnx.y) * weight,
    )


def exterior_derivative(form: VectorField) -> ScalarField:
    """d(ω_x dx + ω_y dy) as the dx∧dy coefficient ∂x ω_y − ∂y ω_x."""
    return partial_x(form.y) - partial_y(form.x)


def alpha_ratio(b: GeometryBundle, rel_threshold: float = 1e-6) -> ScalarField:
    """|n*α|_g / |dn|_g where |dn|_g is non-negligible, 0 elsewhere."""
    pulled = cometric_norm_sq(b, alpha_pullback(b))
    dn_sq = sum(cometric_norm_sq(b, d).values for d in gauss_map_differential(b))
    dn = np.sqrt(np.maximum(dn_sq, 0.0))
    keep = dn > rel_threshold * dn.max() if dn.max() > 0 else np.zeros_like(dn, dtype=bool)
    ratio = np.where(keep, np.sqrt(np.maximum(pulled.values, 0.0)) / np.where(keep, dn, 1.0), 0.0)
    return ScalarField(b.grid, ratio)


def alpha_certificate(b: GeometryBundle, trim: int = TRIM) -> float:
    """sup |n*α| / |dn| on the trimmed interior; C_α = 1 is certified when this is ≤ 1 + O(h)."""
    return alpha_ratio(b).sup(interior_mask(b.grid, trim))


def smooth_cutoff(grid: Grid, radius: float, center: tuple[float, float] = (0.0, 0.0)) -> ScalarField:
    """C∞ radial test function exp(1 − 1/(1 − (r/radius)²)), zero for r ≥ radius."""
    X, Y = grid.coords()
    s = ((X - center[0]) ** 2 + (Y - center[1]) ** 2) / radius**2
    inside = s < 1.0
    values = np.zeros(grid.shape)
    values[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    return ScalarField(grid, values)


@dataclass
class StokesReport:
    lhs: float
    rhs: float
    discrepancy: float
    a2_mass: float
    grad_energy: float
    bound: float
    satisfied: bool

    @property
    def slack(self) -> float:
        return self.bound - abs(self.lhs)

    def as_dict(self) -> dict[str, float | bool]:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "discrepancy": self.discrepancy,
            "a2_mass": self.a2_mass,
            "grad_energy": self.grad_energy,
            "bound": self.bound,
            "slack": self.slack,
            "satisfied": self.satisfied,
        }


def stokes_form(b: GeometryBundle, eta: ScalarField) -> float:
    """−∫ 2η dη ∧ n*α over the grid."""
    form = alpha_pullback(b)
    d_eta = gradient(eta)
    wedge = d_eta.x * form.y - d_eta.y * form.x
    return -integrate(2.0 * eta * wedge)


def stokes_check(
    b: GeometryBundle, eta: ScalarField, trim: int = TRIM, c_alpha: float = 1.0
) -> StokesReport:
    """∫η²K dμ against its integrated-by-parts form, plus the C_α bound on |∫η²K dμ|."""
    margin = ~interior_mask(eta.grid, trim)
    if margin.any() and eta.sup(margin) > 0:
        raise SupportError(f"η must vanish within {trim} cells of the window edge")
    eta_sq = eta * eta
    lhs = surface_integral(b, eta_sq * b.K)
    rhs = stokes_form(b, eta)
    a2_mass = max(0.0, surface_integral(b, eta_sq * b.A2))
    grad_energy = max(0.0, surface_integral(b, tangential_gradient_sq(b, eta)))
    bound = 4.0 * c_alpha * math.sqrt(a2_mass) * math.sqrt(grad_energy)
    return StokesReport(
        lhs=lhs,
        rhs=rhs,
        discrepancy=abs(lhs - rhs),
        a2_mass=a2_mass,
        grad_energy=grad_energy,
        bound=bound,
        satisfied=abs(lhs) <= bound * (1.0 + 1e-9) + 1e-14,
    )


def solve_quadratic_bound(linear: float, constant: float) -> float:
    """Largest x with x² ≤ linear·x + constant (linear, constant ≥ 0)."""
    if linear < 0 or constant < 0:
        raise ValueError("coefficients must be nonnegative")
    return 0.5 * (linear + math.sqrt(linear**2 + 4.0 * constant))


@dataclass
class BoundChainReport:
    sigma: float
    grad_energy: float
    a2_mass: float
    k_mass: float
    sqrt_a2_bound: float
    sqrt_a2_bound_sharp: float
    k_bound: float
    a2_holds: bool
    k_holds: bool
    row: ReportRow

    def as_dict(self) -> dict[str, float | bool]:
        return {
            "sigma": self.sigma,
            "grad_energy": self.grad_energy,
            "a2_mass": self.a2_mass,
            "k_mass": self.k_mass,
            "sqrt_a2_bound": self.sqrt_a2_bound,
            "sqrt_a2_bound_sharp": self.sqrt_a2_bound_sharp,
            "k_bound": self.k_bound,
            "a2_holds": self.a2_holds,
            "k_holds": self.k_holds,
        }


def bound_chain(
    b: GeometryBundle, spec: CutoffSpec, ledger: ConstantLedger, trim: int = TRIM
) -> BoundChainReport:
    """Self-improved bound on (∫η²|A|²)^{1/2}, then the final bound on |∫η²K dμ|.

    With X = ∫η²|A|²dμ and G = ∫|∇η|²dμ, X ≤ C3 + 8C_α√X√G, so
    √X ≤ 4C_α√G + √(16C_α²G + C3) ≤ 8C_α√G + √C3.
    """
    c_alpha = ledger.C_alpha
    eta_sq = spec.eta * spec.eta
    G = max(0.0, surface_integral(b, spec.grad_eta_tangential_sq, trim=trim))
    X = max(0.0, surface_integral(b, eta_sq * b.A2, trim=trim))
    k_mass = surface_integral(b, eta_sq * b.K, trim=trim)

    sqrt_G = math.sqrt(G)
    displayed = 8.0 * c_alpha * sqrt_G + math.sqrt(ledger.C3)
    sharp = solve_quadratic_bound(8.0 * c_alpha * sqrt_G, ledger.C3)
    k_bound = 4.0 * c_alpha * displayed * sqrt_G
    slack = 1.0 + 1e-9
    report = BoundChainReport(
        sigma=spec.sigma,
        grad_energy=G,
        a2_mass=X,
        k_mass=k_mass,
        sqrt_a2_bound=displayed,
        sqrt_a2_bound_sharp=sharp,
        k_bound=k_bound,
        a2_holds=math.sqrt(X) <= sharp * slack + 1e-14,
        k_holds=abs(k_mass) <= k_bound * slack + 1e-14,
        row=ReportRow.evaluate(spec.sigma, abs(k_mass), k_bound, trusted=not spec.truncated),
    )
    return report


@dataclass
class TotalCurvatureReport:
    rows: list[ReportRow]
    values: list[float]
    stokes_values: list[float]
    limit: float
    limit_slope: float
    direct: float
    expected: float | None = None
    warnings: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "sigmas": [row.parameter for row in self.rows],
            "values": self.values,
            "stokes_values": self.stokes_values,
            "limit": self.limit,
            "limit_slope": self.limit_slope,
            "direct": self.direct,
            "expected": self.expected,
            "warnings": self.warnings,
        }


def fit_inverse_sqrt_log(sigmas: list[float], values: list[float]) -> tuple[float, float]:
    """Fit values ≈ L + c/√(log σ); returns (L, c)."""
    if len(sigmas) < 2:
        return (values[0] if values else 0.0), 0.0
    s = 1.0 / np.sqrt(np.log(np.asarray(sigmas, dtype=float)))
    design = np.column_stack([np.ones_like(s), s])
    (limit, slope), *_ = np.linalg.lstsq(design, np.asarray(values, dtype=float), rcond=None)
    return float(limit), float(slope)


def total_curvature(
    b: GeometryBundle,
    sigmas: list[float],
    ledger: ConstantLedger | None = None,
    trim: int = TRIM,
    workers: int = 1,
    expected: float | None = None,
    strict: bool = False,
) -> TotalCurvatureReport:
    """∫η_σ²K dμ over a σ sweep, its limit under the 1/√(log σ) model, and ∫K dμ over the window.

    σ values whose plateau |x| ≤ √σ leaves the window stay in the report as untrusted rows
    with a warning; the limit is fitted on the remaining ones when any remain. `strict`
    turns that condition into a `GridError` instead.
    """
    if not sigmas:
        raise ValueError("total_curvature needs at least one sigma")
    largest = max(sigmas)
    if strict and not b.grid.contains_disk(math.sqrt(largest), margin=trim):
        raise GridError(f"window too small for sigma={largest}: |x| <= sqrt(sigma) leaves it")
    ledger = ledger or build_ledger(b, trim)

    def one(sigma: float) -> tuple[BoundChainReport, float]:
        spec = eta_sigma(b, sigma, trim)
        return bound_chain(b, spec, ledger, trim), stokes_form(b, spec.eta)

    results = sweep(one, sorted(sigmas), workers)
    chains = [chain for chain, _ in results]
    values = [chain.k_mass for chain in chains]
    plateau_inside = [b.grid.contains_disk(math.sqrt(c.sigma), margin=trim) for c in chains]

    warnings = []
    for chain, inside in zip(chains, plateau_inside):
        if not inside:
            warnings.append(f"sigma={chain.sigma:g}: plateau |x| <= sqrt(sigma) leaves the window")
        elif not chain.row.trusted:
            warnings.append(f"sigma={chain.sigma:g}: cutoff truncated by the window")
    for message in warnings:
        logger.warning(message)

    fitted = [(c.sigma, v) for c, v, inside in zip(chains, values, plateau_inside) if inside]
    if not fitted:
        fitted = [(c.sigma, v) for c, v in zip(chains, values)]
    limit, slope = fit_inverse_sqrt_log([s for s, _ in fitted], [v for _, v in fitted])
    direct = surface_integral(b, b.K, trim=trim)
    logger.info("total curvature: limit %.6g, direct %.6g over %d sigmas", limit, direct, len(sigmas))
    return TotalCurvatureReport(
        rows=[c.row for c in chains],
        values=values,
        stokes_values=[value for _, value in results],
        limit=limit,
        limit_slope=slope,
        direct=direct,
        expected=expected,
        warnings=warnings,
    )


@dataclass
class GrowthRow:
    radius: float
    total_curvature: float
    h2_mass: float
    trusted: bool


@dataclass
class GrowthFit:
    log_slope: float
    log_r2: float
    linear_slope: float
    linear_r2: float


def _r_squared(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    residual = y - design @ coef
    total = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(residual**2)) / total if total > 0 else 1.0
    return float(coef[1]), r2


def growth_fit(radii: list[float], values: list[float]) -> GrowthFit:
    """Fit values against log R and against R; both slopes and R² are reported."""
    r = np.asarray(radii, dtype=float)
    y = np.asarray(values, dtype=float)
    log_slope, log_r2 = _r_squared(np.log(r), y)
    linear_slope, linear_r2 = _r_squared(r, y)
    return GrowthFit(log_slope, log_r2, linear_slope, linear_r2)


def curvature_growth(
    b: GeometryBundle, radii: list[float], trim: int = TRIM, workers: int = 1
) -> tuple[list[GrowthRow], GrowthFit]:
    """∫K dμ and ∫H² dμ over projected disks r ≤ R."""
    H2 = b.H * b.H
    interior = interior_mask(b.grid, trim)

    def one(radius: float) -> GrowthRow:
        disk = disk_mask(b.grid, radius) & interior
        return GrowthRow(
            radius=radius,
            total_curvature=surface_integral(b, b.K, disk),
            h2_mass=surface_integral(b, H2, disk),
            trusted=b.grid.contains_disk(radius, margin=trim),
        )

    rows = sweep(one, radii, workers)
    fit = growth_fit([row.radius for row in rows], [row.h2_mass for row in rows])
    return rows, fit
