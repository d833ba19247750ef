"""Symbolic oracle: Willmore quantities of a catalog surface derived with sympy."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import sympy as sp

from .surfaces import (
    GaussianBump,
    SurfaceSpec,
    TiltedBump,
    make_surface,
    random_trig_surfaces,
)

logger = logging.getLogger(__name__)

X, Y = sp.symbols("x y", real=True)

QUANTITIES = ("H", "K", "v", "laplace_beltrami_H", "el", "div_form")


@dataclass(frozen=True)
class SymbolicWillmore:
    H: sp.Expr
    K: sp.Expr
    v: sp.Expr
    laplace_beltrami_H: sp.Expr
    el: sp.Expr
    div_form: sp.Expr


@dataclass(frozen=True)
class ConversionFactor:
    """div_form ≈ prefactor · v**v_exponent · el_form."""

    prefactor: float
    v_exponent: float
    max_rel_residual: float
    n_points: int

    def field_values(self, v: np.ndarray) -> np.ndarray:
        return self.prefactor * v**self.v_exponent

    def as_dict(self) -> dict[str, float]:
        return {
            "prefactor": self.prefactor,
            "v_exponent": self.v_exponent,
            "max_rel_residual": self.max_rel_residual,
            "n_points": self.n_points,
        }


def derive(u: sp.Expr) -> SymbolicWillmore:
    """Differentiate u symbolically into H, K, Δ_gH, the Euler–Lagrange form and the divergence form."""
    ux, uy = sp.diff(u, X), sp.diff(u, Y)
    uxx, uxy, uyy = sp.diff(ux, X), sp.diff(ux, Y), sp.diff(uy, Y)
    v = sp.sqrt(1 + ux**2 + uy**2)
    H = sp.diff(ux / v, X) + sp.diff(uy / v, Y)
    K = (uxx * uyy - uxy**2) / v**4

    Hx, Hy = sp.diff(H, X), sp.diff(H, Y)
    # (vI − Du⊗Du/v)∇H
    mx = (v - ux * ux / v) * Hx - (ux * uy / v) * Hy
    my = -(ux * uy / v) * Hx + (v - uy * uy / v) * Hy
    lbH = (sp.diff(mx, X) + sp.diff(my, Y)) / v
    el = lbH + H**3 / 2 - 2 * H * K

    vH = v * H
    gx, gy = sp.diff(vH, X), sp.diff(vH, Y)
    fx = ((1 - ux * ux / v**2) * gx - (ux * uy / v**2) * gy - H**2 * ux / 2) / v
    fy = (-(ux * uy / v**2) * gx + (1 - uy * uy / v**2) * gy - H**2 * uy / 2) / v
    div_form = sp.diff(fx, X) + sp.diff(fy, Y)
    return SymbolicWillmore(H=H, K=K, v=v, laplace_beltrami_H=lbH, el=el, div_form=div_form)


@lru_cache(maxsize=32)
def _derived(name: str, params: tuple[tuple[str, float], ...]) -> SymbolicWillmore:
    return derive(make_surface(name, dict(params)).symbolic(X, Y))


@lru_cache(maxsize=128)
def _lambdified(name: str, params: tuple[tuple[str, float], ...], quantity: str) -> Callable:
    expr = getattr(_derived(name, params), quantity)
    return sp.lambdify((X, Y), expr, modules="numpy", cse=True)


def evaluate(surface: SurfaceSpec, quantity: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Evaluate one symbolic quantity of a catalog surface at points (x, y)."""
    if quantity not in QUANTITIES:
        raise ValueError(f"unknown quantity '{quantity}'. Use one of: {', '.join(QUANTITIES)}")
    key = tuple(sorted(surface.params.items()))
    fn = _lambdified(surface.name, key, quantity)
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return np.broadcast_to(np.asarray(fn(x, y), dtype=float), x.shape)


def fit_conversion_factor(
    surfaces: list[SurfaceSpec],
    n_points: int = 200,
    seed: int = 0,
    threshold: float = 1e-6,
) -> ConversionFactor:
    """Fit div_form / el_form = C·v^k by least squares in log space at random points."""
    rng = np.random.default_rng(seed)
    ratios: list[np.ndarray] = []
    slopes: list[np.ndarray] = []
    for surface in surfaces:
        x, y = surface.random_points(rng, n_points)
        el = evaluate(surface, "el", x, y)
        div_form = evaluate(surface, "div_form", x, y)
        v = evaluate(surface, "v", x, y)
        keep = np.abs(el) > threshold
        ratios.append(div_form[keep] / el[keep])
        slopes.append(v[keep])
    factor = fit_power_law(np.concatenate(ratios), np.concatenate(slopes))
    logger.info(
        "conversion factor fit: C=%.12g, k=%.3e over %d points (max rel residual %.2e)",
        factor.prefactor, factor.v_exponent, factor.n_points, factor.max_rel_residual,
    )
    return factor


def fit_power_law(ratio: np.ndarray, v: np.ndarray) -> ConversionFactor:
    """Least-squares fit of ratio ≈ C·v^k in log space; the sign of C is the median sign."""
    ratio = np.asarray(ratio, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if ratio.size == 0:
        return ConversionFactor(prefactor=1.0, v_exponent=0.0, max_rel_residual=0.0, n_points=0)

    sign = 1.0 if np.median(ratio) >= 0 else -1.0
    log_ratio = np.log(np.abs(ratio))
    log_v = np.log(v)
    if np.ptp(log_v) < 1e-8:
        log_c, k = float(np.mean(log_ratio)), 0.0
    else:
        design = np.column_stack([np.ones_like(log_v), log_v])
        (log_c, k), *_ = np.linalg.lstsq(design, log_ratio, rcond=None)
    prefactor = sign * float(np.exp(log_c))
    predicted = prefactor * v**k
    residual = float(np.max(np.abs(ratio - predicted) / np.abs(predicted)))
    return ConversionFactor(
        prefactor=prefactor, v_exponent=float(k), max_rel_residual=residual, n_points=int(ratio.size)
    )


@lru_cache(maxsize=1)
def oracle_conversion_factor() -> ConversionFactor:
    """The factor between the two residual forms, as determined on a fixed reference family."""
    surfaces: list[SurfaceSpec] = list(random_trig_surfaces(5, seed=7))
    surfaces += [GaussianBump(A=1.0), TiltedBump(A=0.8, a=0.5, b=-0.4)]
    return fit_conversion_factor(surfaces, n_points=60, seed=11)
