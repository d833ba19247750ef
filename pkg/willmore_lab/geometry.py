"""First-order geometry of a sampled graph: slope factor, curvatures, Gauss map, Δ_g."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .field import (
    Grid,
    MaskLike,
    ScalarField,
    VectorField,
    divergence,
    gradient,
    hessian,
    integrate,
    interior_mask,
    require_same_grid,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GeometryBundle:
    """Derived fields of one surface on one grid.

    `tol_disc` records how far the discrete |A|² = H² − 2K dips below zero;
    the field itself is never clipped.
    """

    u: ScalarField
    Du: VectorField
    v: ScalarField
    area_density: ScalarField
    H: ScalarField
    K: ScalarField
    A2: ScalarField
    n: tuple[ScalarField, ScalarField, ScalarField]
    tol_disc: float

    @property
    def grid(self) -> Grid:
        return self.u.grid


def build_bundle(u: ScalarField) -> GeometryBundle:
    Du = gradient(u)
    v = (1.0 + Du.norm_sq()) ** 0.5
    H = divergence(Du.scale(1.0 / v))
    uxx, uxy, uyy = hessian(u)
    K = (uxx * uyy - uxy * uxy) / v**4
    A2 = H * H - 2.0 * K
    n = (-Du.x / v, -Du.y / v, 1.0 / v)
    tol_disc = max(0.0, -A2.min())
    if tol_disc > 0:
        logger.debug("discrete |A|^2 dips to %.3e below zero", -tol_disc)
    return GeometryBundle(
        u=u, Du=Du, v=v, area_density=v, H=H, K=K, A2=A2, n=n, tol_disc=tol_disc
    )


def cometric_norm_sq(b: GeometryBundle, form: VectorField) -> ScalarField:
    """|ω|²_g = g^{ij} ω_i ω_j with g^{-1} = I − Du⊗Du / v²."""
    require_same_grid(b.grid, form.grid)
    along = b.Du.dot(form)
    return form.norm_sq() - along * along / (b.v * b.v)


def tangential_gradient_sq(b: GeometryBundle, f: ScalarField) -> ScalarField:
    return cometric_norm_sq(b, gradient(f))


def laplace_beltrami(b: GeometryBundle, f: ScalarField) -> ScalarField:
    """(1/v)·div((vI − Du⊗Du/v)·∇f)."""
    require_same_grid(b.grid, f.grid)
    df = gradient(f)
    along = b.Du.dot(df) / b.v
    flux = df.scale(b.v) - b.Du.scale(along)
    return divergence(flux) / b.v


def surface_integral(
    b: GeometryBundle, f: ScalarField, mask: MaskLike = None, trim: int = 0
) -> float:
    """∫ f dμ_g = trapezoid integral of f·v over the mask minus a `trim`-cell margin."""
    require_same_grid(b.grid, f.grid)
    resolved = b.grid.resolve_mask(mask)
    region = interior_mask(b.grid, trim)
    if resolved is not None:
        region = region & resolved
    return integrate(f * b.v, region)


def gauss_equation_violation(b: GeometryBundle) -> float:
    """sup of K − H²/2 over the grid, clipped at zero (the Gauss equation says ≤ 0)."""
    return max(0.0, float(np.max(b.K.values - 0.5 * b.H.values**2)))
