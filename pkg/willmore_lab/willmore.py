"""Willmore energy, the two Euler–Lagrange residual forms, and an explicit descent flow."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal

import numpy as np

from .errors import FlowUnstableError, GridError, SupportError
from .field import (
    MIN_POINTS_FOURTH_ORDER,
    MaskLike,
    ScalarField,
    divergence,
    gradient,
    integrate,
    interior_mask,
)
from .geometry import GeometryBundle, build_bundle, laplace_beltrami, surface_integral
from .symbolic import ConversionFactor, fit_power_law, oracle_conversion_factor

logger = logging.getLogger(__name__)

BoundaryCondition = Literal["dirichlet_clamp", "periodic"]

# Fourth-order quantities are untrusted within this many cells of an open edge.
TRIM_FOURTH_ORDER = 4

# δW(u)[φ] = FIRST_VARIATION_SCALE · DESCENT_SIGN · ∫ div_residual(u)·φ dxdy.
# The sign is the unanimous result of vote_gradient_sign and is not re-derived at run time.
FIRST_VARIATION_SCALE = 0.5
DESCENT_SIGN = 1

DEFAULT_C_CFL = 0.05
ENERGY_INCREASE_RTOL = 1e-12


def energy(b: GeometryBundle, mask: MaskLike = None, trim: int = 0) -> float:
    """W = ¼ ∫ H² dμ over the mask."""
    return 0.25 * surface_integral(b, b.H * b.H, mask, trim)


def _require_fourth_order_grid(b: GeometryBundle) -> None:
    g = b.grid
    if g.nx < MIN_POINTS_FOURTH_ORDER or g.ny < MIN_POINTS_FOURTH_ORDER:
        raise GridError(
            f"grid {g.nx}x{g.ny} is below the {MIN_POINTS_FOURTH_ORDER}-point minimum "
            "for fourth-order residuals"
        )


def _trim(f: ScalarField) -> ScalarField:
    return f.masked(interior_mask(f.grid, TRIM_FOURTH_ORDER))


def el_residual(b: GeometryBundle) -> ScalarField:
    """Δ_g H + ½H³ − 2HK, zero outside the 4-cell-trimmed interior."""
    _require_fourth_order_grid(b)
    H = b.H
    return _trim(laplace_beltrami(b, H) + 0.5 * H**3 - 2.0 * H * b.K)


def div_residual(b: GeometryBundle) -> ScalarField:
    """div( (1/v)·((I − Du⊗Du/v²)∇(vH) − ½H²Du) ), same trim as `el_residual`."""
    _require_fourth_order_grid(b)
    grad_vH = gradient(b.v * b.H)
    along = b.Du.dot(grad_vH) / (b.v * b.v)
    projected = grad_vH - b.Du.scale(along)
    flux = (projected - b.Du.scale(0.5 * b.H * b.H)).scale(1.0 / b.v)
    return _trim(divergence(flux))


@dataclass
class ResidualReport:
    el: ScalarField
    div_form: ScalarField
    ratio_field: ScalarField
    sup_norm_el: float
    sup_norm_div: float


def residual_report(b: GeometryBundle, threshold: float = 1e-8) -> ResidualReport:
    """Both residual forms plus div_form/el where |el| exceeds the threshold (0 elsewhere)."""
    el = el_residual(b)
    div_form = div_residual(b)
    big = np.abs(el.values) > threshold
    ratio = np.where(big, div_form.values / np.where(big, el.values, 1.0), 0.0)
    return ResidualReport(
        el=el,
        div_form=div_form,
        ratio_field=ScalarField(b.grid, ratio),
        sup_norm_el=el.sup(),
        sup_norm_div=div_form.sup(),
    )


@dataclass
class EquivalenceReport:
    factor: ConversionFactor
    fitted: ConversionFactor
    sup_deviation: float
    sup_norm_el: float
    sup_norm_div: float
    sign_agreement: float
    zero_set_agreement: float

    def as_dict(self) -> dict:
        return {
            "factor": self.factor.as_dict(),
            "fitted": self.fitted.as_dict(),
            "sup_deviation": self.sup_deviation,
            "sup_norm_el": self.sup_norm_el,
            "sup_norm_div": self.sup_norm_div,
            "sign_agreement": self.sign_agreement,
            "zero_set_agreement": self.zero_set_agreement,
        }


def residual_equivalence(
    b: GeometryBundle,
    factor: ConversionFactor | None = None,
    relative_threshold: float = 1e-2,
    report: ResidualReport | None = None,
) -> EquivalenceReport:
    """Compare div_residual with c(u)·el_residual on the trimmed interior.

    `factor` defaults to the symbolic oracle's determination; the factor fitted to
    this grid's own data is reported next to it.
    """
    factor = factor or oracle_conversion_factor()
    report = report or residual_report(b)
    el, div_form = report.el.values, report.div_form.values
    interior = interior_mask(b.grid, TRIM_FOURTH_ORDER)
    c = factor.field_values(b.v.values)
    deviation = float(np.max(np.abs(div_form - c * el)[interior]))

    scale_el = report.sup_norm_el
    scale_div = report.sup_norm_div
    strong = interior & (np.abs(el) > relative_threshold * scale_el) if scale_el > 0 else None
    if strong is not None and strong.any():
        fitted = fit_power_law(div_form[strong] / el[strong], b.v.values[strong])
        sign_agreement = float(np.mean(np.sign(div_form[strong]) == np.sign(el[strong])))
    else:
        fitted = ConversionFactor(prefactor=1.0, v_exponent=0.0, max_rel_residual=0.0, n_points=0)
        sign_agreement = 1.0

    small_el = np.abs(el) <= 1e-3 * scale_el
    small_div = np.abs(div_form) <= 1e-3 * scale_div
    zero_set_agreement = float(np.mean((small_el == small_div)[interior]))
    return EquivalenceReport(
        factor=factor,
        fitted=fitted,
        sup_deviation=deviation,
        sup_norm_el=scale_el,
        sup_norm_div=scale_div,
        sign_agreement=sign_agreement,
        zero_set_agreement=zero_set_agreement,
    )


@dataclass
class GradientCheckReport:
    eps: float
    directional: float
    paired: float
    mismatch: float
    sign: int
    mismatch_other_sign: float
    mismatch_coarse_eps: float
    rounding_dominated: bool


def _relative_mismatch(a: float, b: float, atol: float = 1e-14) -> float:
    scale = max(abs(a), abs(b))
    if scale <= atol:
        return 0.0
    return abs(a - b) / scale


def _directional_derivative(u: ScalarField, phi: ScalarField, eps: float) -> float:
    plus = energy(build_bundle(u + eps * phi))
    minus = energy(build_bundle(u - eps * phi))
    return (plus - minus) / (2.0 * eps)


def gradient_check(u: ScalarField, phi: ScalarField, eps: float = 1e-4) -> GradientCheckReport:
    """Central difference of W along φ against ½·sign·∫ div_residual(u)·φ dxdy.

    The mismatch is relative to the larger side. At a critical surface both sides are
    discretization noise, so check a perturbed u there.
    """
    if phi.sup(~interior_mask(phi.grid, TRIM_FOURTH_ORDER)) > 0:
        raise SupportError("test direction φ must vanish on the trim margin")
    pairing = integrate(div_residual(build_bundle(u)) * phi)
    directional = _directional_derivative(u, phi, eps)
    candidates = {
        sign: _relative_mismatch(directional, FIRST_VARIATION_SCALE * sign * pairing)
        for sign in (DESCENT_SIGN, -DESCENT_SIGN)
    }
    sign = min(candidates, key=lambda s: (candidates[s], s != DESCENT_SIGN))
    mismatch = candidates[sign]

    coarse = _relative_mismatch(
        _directional_derivative(u, phi, 10.0 * eps), FIRST_VARIATION_SCALE * sign * pairing
    )
    rounding_dominated = mismatch > 2.0 * coarse + 1e-12
    if rounding_dominated:
        logger.warning(
            "gradient check at eps=%.1e looks rounding-dominated (%.3e vs %.3e at 10*eps)",
            eps, mismatch, coarse,
        )
    return GradientCheckReport(
        eps=eps,
        directional=directional,
        paired=FIRST_VARIATION_SCALE * sign * pairing,
        mismatch=mismatch,
        sign=int(sign),
        mismatch_other_sign=candidates[-sign],
        mismatch_coarse_eps=coarse,
        rounding_dominated=rounding_dominated,
    )


def vote_gradient_sign(
    pairs: list[tuple[ScalarField, ScalarField]], eps: float = 1e-4
) -> tuple[int, bool, list[GradientCheckReport]]:
    """Run gradient_check on each (u, φ) pair; returns (majority sign, unanimous, reports)."""
    reports = [gradient_check(u, phi, eps) for u, phi in pairs]
    votes = [r.sign for r in reports]
    sign = 1 if votes.count(1) >= votes.count(-1) else -1
    return sign, all(v == sign for v in votes), reports


@dataclass
class FlowState:
    u: ScalarField
    time: float
    step_count: int
    energy_history: list[tuple[float, float]]
    tau: float
    sup_residual_history: list[float] = field(default_factory=list)
    residual: ScalarField | None = None
    halvings: int = 0


@dataclass
class StopCriteria:
    max_steps: int = 1000
    grad_tol: float = 1e-6


@dataclass
class FlowSummary:
    steps: int
    final_time: float
    initial_energy: float
    final_energy: float
    initial_sup_u: float
    final_sup_u: float
    final_sup_residual: float
    converged: bool
    tau_initial: float
    tau_final: float
    halvings: int
    energy_monotone: bool


def cfl_timestep(h: float, c_cfl: float = DEFAULT_C_CFL) -> float:
    return c_cfl * h**4


def initial_state(
    u0: ScalarField, tau: float | None = None, c_cfl: float = DEFAULT_C_CFL
) -> FlowState:
    h = u0.grid.h
    limit = cfl_timestep(h, c_cfl)
    if tau is None:
        tau = limit
    elif tau > limit:
        logger.warning("tau=%.3e exceeds the CFL bound %.3e (c_cfl=%g)", tau, limit, c_cfl)
    b = build_bundle(u0)
    residual = div_residual(b)
    return FlowState(
        u=u0,
        time=0.0,
        step_count=0,
        energy_history=[(0.0, energy(b))],
        tau=tau,
        sup_residual_history=[residual.sup()],
        residual=residual,
    )


def _check_bc(state: FlowState, bc: BoundaryCondition) -> None:
    periodic = state.u.grid.is_periodic
    if bc == "periodic" and not periodic:
        raise GridError("periodic flow needs a periodic grid")
    if bc == "dirichlet_clamp" and periodic:
        raise GridError("dirichlet_clamp flow needs a one_sided grid")
    if bc not in ("periodic", "dirichlet_clamp"):
        raise GridError(f"unknown boundary condition '{bc}'")


def _advance(
    state: FlowState, bc: BoundaryCondition, max_halvings: int, copy_history: bool
) -> FlowState:
    _check_bc(state, bc)
    residual = state.residual if state.residual is not None else div_residual(build_bundle(state.u))
    w_old = state.energy_history[-1][1]
    # div_residual already vanishes on the 4-cell margin, which keeps the clamp.
    clamp = interior_mask(state.u.grid, TRIM_FOURTH_ORDER)
    step = residual.masked(clamp) * float(DESCENT_SIGN)

    tau = state.tau
    halvings = state.halvings
    for _ in range(max_halvings + 1):
        u_new = state.u - tau * step
        b_new = build_bundle(u_new)
        w_new = energy(b_new)
        if w_new <= w_old + ENERGY_INCREASE_RTOL * max(abs(w_old), 1e-300):
            break
        tau *= 0.5
        halvings += 1
        logger.warning(
            "energy rose %.3e -> %.3e at step %d; halving tau to %.3e",
            w_old, w_new, state.step_count + 1, tau,
        )
    else:
        raise FlowUnstableError(
            f"flow unstable: energy still increasing after {max_halvings} tau halvings "
            f"at step {state.step_count + 1}"
        )

    new_residual = div_residual(b_new)
    time = state.time + tau
    energies = list(state.energy_history) if copy_history else state.energy_history
    sups = list(state.sup_residual_history) if copy_history else state.sup_residual_history
    energies.append((time, w_new))
    sups.append(new_residual.sup())
    return replace(
        state,
        u=u_new,
        time=time,
        step_count=state.step_count + 1,
        energy_history=energies,
        tau=tau,
        sup_residual_history=sups,
        residual=new_residual,
        halvings=halvings,
    )


def flow_step(
    state: FlowState, bc: BoundaryCondition = "dirichlet_clamp", max_halvings: int = 20
) -> FlowState:
    """One explicit Euler step u ← u − τ·sign·div_residual(u); the input state is left untouched."""
    return _advance(state, bc, max_halvings, copy_history=True)


def run_flow(
    u0: ScalarField,
    bc: BoundaryCondition = "dirichlet_clamp",
    stop: StopCriteria | None = None,
    tau: float | None = None,
    c_cfl: float = DEFAULT_C_CFL,
    checkpoint_every: int = 0,
    on_checkpoint: Callable[[FlowState], None] | None = None,
) -> tuple[FlowState, FlowSummary]:
    """Iterate flow_step until sup|div_residual| < grad_tol or max_steps."""
    stop = stop or StopCriteria()
    state = initial_state(u0, tau, c_cfl)
    tau_initial = state.tau
    initial_energy = state.energy_history[0][1]
    initial_sup_u = u0.sup()

    while state.sup_residual_history[-1] >= stop.grad_tol and state.step_count < stop.max_steps:
        state = _advance(state, bc, max_halvings=20, copy_history=False)
        if on_checkpoint and checkpoint_every > 0 and state.step_count % checkpoint_every == 0:
            on_checkpoint(state)
        if state.step_count % 1000 == 0:
            logger.info(
                "flow step %d: t=%.4e W=%.10e sup|residual|=%.3e",
                state.step_count, state.time, state.energy_history[-1][1],
                state.sup_residual_history[-1],
            )

    energies = [w for _, w in state.energy_history]
    monotone = all(
        later <= earlier + ENERGY_INCREASE_RTOL * max(abs(earlier), 1e-300)
        for earlier, later in zip(energies[:-1], energies[1:])
    )
    summary = FlowSummary(
        steps=state.step_count,
        final_time=state.time,
        initial_energy=initial_energy,
        final_energy=energies[-1],
        initial_sup_u=initial_sup_u,
        final_sup_u=state.u.sup(),
        final_sup_residual=state.sup_residual_history[-1],
        converged=state.sup_residual_history[-1] < stop.grad_tol,
        tau_initial=tau_initial,
        tau_final=state.tau,
        halvings=state.halvings,
        energy_monotone=monotone,
    )
    logger.info(
        "flow finished after %d steps (converged=%s, W %.6e -> %.6e)",
        summary.steps, summary.converged, summary.initial_energy, summary.final_energy,
    )
    if not math.isfinite(summary.final_energy):
        raise FlowUnstableError("flow unstable: non-finite energy")
    return state, summary
