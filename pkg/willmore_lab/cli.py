"""Command-line experiments: analyze, verify, area-growth, total-curvature and flow."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable

import numpy as np
from pydantic import ValidationError

from . import __version__
from .artifacts import ArtifactMeta, write_field_csv, write_json, write_rows_csv, write_wgl
from .config import RunConfig, config_hash, env_settings, load_config
from .errors import ConfigError, DomainError, FlowUnstableError, GridError, UnknownSurfaceError
from .estimates import (
    alpha_certificate,
    area_growth,
    build_ledger,
    calibration_chain,
    curvature_growth,
    cutoff_energy,
    eta_sigma,
    smooth_cutoff,
    stokes_check,
    sweep,
    total_curvature,
)
from .field import Grid, ScalarField, convergence_order, core_mask, interior_mask
from .geometry import GeometryBundle, build_bundle, gauss_equation_violation, surface_integral
from .surfaces import (
    RadialSurface,
    SurfaceSpec,
    exact_curvatures,
    exact_el_residual,
    make_surface,
    sample,
)
from .symbolic import oracle_conversion_factor
from .willmore import (
    DESCENT_SIGN,
    TRIM_FOURTH_ORDER,
    FlowState,
    StopCriteria,
    energy,
    residual_equivalence,
    residual_report,
    run_flow,
    vote_gradient_sign,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

# height of the gradient-check bump relative to its radius
GRADIENT_LIFT = 0.2

# margin over eps·|u|/h^k before a refinement pair counts as rate information
ROUNDING_SAFETY = 10.0
# highest derivative each verified quantity composes
DERIVATIVE_ORDER = {"H": 2, "K": 2, "el": 4, "div": 4, "equivalence": 4, "stokes": 2}


class RunContext:
    """Everything a subcommand needs besides the config itself."""

    def __init__(self, config: RunConfig, out: Path, threads: int) -> None:
        self.config = config
        self.out = out
        self.threads = threads
        self.meta = ArtifactMeta(config_hash=config_hash(config))

    def surface(self) -> SurfaceSpec:
        return make_surface(self.config.surface, self.config.params)

    def grid(self) -> Grid:
        return self.config.grid.build()

    def bundle(self) -> tuple[SurfaceSpec, GeometryBundle]:
        surface = self.surface()
        b = build_bundle(sample(surface, self.grid()))
        logger.info("built bundle for %r on %dx%d (h=%g)", surface, b.grid.nx, b.grid.ny, b.grid.h)
        return surface, b

    def json(self, name: str, payload: dict[str, Any]) -> Path:
        return write_json(self.out / name, payload, self.meta)


def _status(ok: bool) -> str:
    return "ok" if ok else "failed"


def _oracle_errors(surface: SurfaceSpec, b: GeometryBundle, mask: np.ndarray) -> dict[str, float]:
    X, Y = b.grid.coords()
    H_exact, K_exact = exact_curvatures(surface, X, Y)
    return {
        "H": float(np.max(np.abs(b.H.values - H_exact)[mask])),
        "K": float(np.max(np.abs(b.K.values - K_exact)[mask])),
    }


def cmd_analyze(ctx: RunContext) -> int:
    surface, b = ctx.bundle()
    fields = {"H": b.H, "K": b.K, "A2": b.A2, "v": b.v}
    for name, f in fields.items():
        write_wgl(ctx.out / f"{name}.wgl", f, ctx.meta)
        write_field_csv(ctx.out / f"{name}.csv", f, ctx.meta)

    trim = ctx.config.trim
    interior = interior_mask(b.grid, trim)
    h2 = surface_integral(b, b.H * b.H, trim=trim)
    k_total = surface_integral(b, b.K, trim=trim)
    a2 = surface_integral(b, b.A2, trim=trim)
    identity_gap = abs(a2 - (h2 - 2.0 * k_total)) / max(abs(a2), abs(h2), 1e-300)
    ctx.json(
        "summary.json",
        {
            "status": "ok",
            "command": "analyze",
            "surface": surface.name,
            "params": surface.params,
            "energy": energy(b, trim=trim),
            "sup": {name: f.sup(interior) for name, f in fields.items()},
            "oracle_max_error": _oracle_errors(surface, b, interior),
            "identity_relative_gap": identity_gap,
            "tol_disc": b.tol_disc,
            "gauss_equation_violation": gauss_equation_violation(b),
            "min_normal_z": b.n[2].min(),
        },
    )
    return EXIT_OK


def rounding_floor(sup_u: float, h: float, derivative_order: int) -> float:
    """Error level below which a stencil composition of this order is rounding, not truncation."""
    return ROUNDING_SAFETY * np.finfo(float).eps * max(1.0, sup_u) / h**derivative_order


def _verdict(
    errors: list[float],
    min_order: float,
    zero_tol: float,
    floors: list[float] | None = None,
) -> dict[str, Any]:
    orders = convergence_order(errors)
    if all(e <= zero_tol for e in errors):
        return {"errors": errors, "orders": orders, "passed": True, "exact_zero": True}
    floors = floors or [0.0] * len(errors)
    # a pair whose fine error sits at the zero or rounding floor carries no rate information
    usable = [
        o
        for o, fine, floor in zip(orders, errors[1:], floors[1:])
        if fine > zero_tol and fine > floor
    ]
    rounding_limited = [fine <= floor for fine, floor in zip(errors[1:], floors[1:])]
    if usable:
        passed = min(usable) >= min_order
    else:
        passed = any(rounding_limited)
    return {
        "errors": errors,
        "orders": orders,
        "passed": bool(passed),
        "exact_zero": False,
        "rounding_floor": floors,
        "rounding_limited": rounding_limited,
    }


def _level_metrics(surface: SurfaceSpec, grid: Grid, trim: int) -> dict[str, Any]:
    b = build_bundle(sample(surface, grid))
    factor = oracle_conversion_factor()
    report = residual_report(b)
    core = core_mask(grid) & interior_mask(grid, TRIM_FOURTH_ORDER)
    X, Y = grid.coords()
    el_exact = exact_el_residual(surface, X, Y)
    c = factor.field_values(b.v.values)
    errors = _oracle_errors(surface, b, core)
    errors["el"] = float(np.max(np.abs(report.el.values - el_exact)[core]))
    errors["div"] = float(np.max(np.abs(report.div_form.values - c * el_exact)[core]))
    errors["equivalence"] = float(
        np.max(np.abs(report.div_form.values - c * report.el.values)[core])
    )
    equivalence = residual_equivalence(b, factor, report=report)

    xmin, xmax, ymin, ymax = grid.extent
    center = (0.5 * (xmin + xmax), 0.5 * (ymin + ymax))
    eta = smooth_cutoff(grid, 0.3 * min(xmax - xmin, ymax - ymin), center)
    stokes = stokes_check(b, eta, trim)
    return {
        "h": grid.h,
        "sup_u": b.u.sup(),
        "errors": errors,
        "equivalence": equivalence.as_dict(),
        "stokes": stokes.as_dict(),
        "alpha_certificate": alpha_certificate(b, trim),
    }


def _gradient_pairs(
    surface: SurfaceSpec, grid: Grid, count: int, seed: int
) -> list[tuple[ScalarField, ScalarField]]:
    rng = np.random.default_rng(seed)
    xmin, xmax, ymin, ymax = grid.extent
    width = min(xmax - xmin, ymax - ymin)
    pad = TRIM_FOURTH_ORDER * grid.h
    # lifted off the critical set (sphere caps, catenoids)
    center = (0.5 * (xmin + xmax), 0.5 * (ymin + ymax))
    lift = min(0.3 * width, 0.5 * width - pad)
    u = sample(surface, grid) + GRADIENT_LIFT * lift * smooth_cutoff(grid, lift, center)
    pairs = []
    for _ in range(count):
        cx = xmin + rng.uniform(0.4, 0.6) * (xmax - xmin)
        cy = ymin + rng.uniform(0.4, 0.6) * (ymax - ymin)
        # φ must vanish on the fourth-order margin
        room = min(cx - xmin, xmax - cx, cy - ymin, ymax - cy) - pad
        radius = min(rng.uniform(0.15, 0.25) * width, room)
        pairs.append((u, smooth_cutoff(grid, radius, (cx, cy))))
    return pairs


def cmd_verify(ctx: RunContext) -> int:
    options = ctx.config.verify
    surface = ctx.surface()
    grids = [ctx.grid()]
    for _ in range(options.levels - 1):
        grids.append(grids[-1].refine())

    levels = sweep(lambda g: _level_metrics(surface, g, ctx.config.trim), grids, ctx.threads)

    def floors(key: str) -> list[float]:
        return [rounding_floor(level["sup_u"], level["h"], DERIVATIVE_ORDER[key]) for level in levels]

    verdicts: dict[str, Any] = {}
    for key in ("H", "K", "el", "div", "equivalence"):
        verdicts[key] = _verdict(
            [level["errors"][key] for level in levels],
            options.min_order,
            options.zero_tol,
            floors(key),
        )
    stokes_errors = [level["stokes"]["discrepancy"] for level in levels]
    stokes = _verdict(stokes_errors, options.min_order, options.zero_tol, floors("stokes"))
    stokes["passed"] = bool(
        stokes["passed"]
        and stokes_errors[-1] < options.stokes_tol
        and all(level["stokes"]["satisfied"] for level in levels)
    )
    verdicts["stokes"] = stokes

    finest = grids[-1]
    alpha = levels[-1]["alpha_certificate"]
    verdicts["alpha_certificate"] = {
        "measured": alpha,
        "limit": 1.0 + 5.0 * finest.h,
        "passed": alpha <= 1.0 + 5.0 * finest.h,
    }

    pairs = _gradient_pairs(surface, grids[0], options.gradient_pairs, ctx.config.seed)
    sign, unanimous, reports = vote_gradient_sign(pairs, options.eps)
    worst = max(r.mismatch for r in reports)
    verdicts["gradient"] = {
        "sign": sign,
        "unanimous": unanimous,
        "mismatches": [r.mismatch for r in reports],
        "rounding_dominated": [r.rounding_dominated for r in reports],
        "passed": unanimous and sign == DESCENT_SIGN and worst < options.gradient_tol,
    }

    ok = all(v["passed"] for v in verdicts.values())
    for name, verdict in verdicts.items():
        if not verdict["passed"]:
            logger.error(f"verification '{name}' failed: {verdict}")
    ctx.json(
        "verify.json",
        {
            "status": _status(ok),
            "command": "verify",
            "surface": surface.name,
            "params": surface.params,
            "conversion_factor": oracle_conversion_factor().as_dict(),
            "levels": levels,
            "verdicts": verdicts,
        },
    )
    return EXIT_OK if ok else EXIT_FAILED


def cmd_area_growth(ctx: RunContext) -> int:
    _, b = ctx.bundle()
    trim = ctx.config.trim
    ledger = build_ledger(b, trim)
    rows = area_growth(b, ctx.config.radii, ledger, trim, ctx.threads)
    chains = sweep(lambda r: calibration_chain(b, r, trim), ctx.config.radii, ctx.threads)

    warnings = [
        f"R={row.parameter:g}: ball leaves the trimmed window" for row in rows if not row.trusted
    ]
    ok = all(row.satisfied for row in rows if row.trusted) and all(
        chain.ok for chain in chains if chain.trusted
    )
    write_rows_csv(
        ctx.out / "area_growth.csv",
        (row.as_record() for row in rows),
        ["param", "measured", "bound", "satisfied"],
        ctx.meta,
    )
    ctx.json(
        "chain.json",
        {
            "status": _status(ok),
            "command": "area-growth",
            "chains": [chain.as_dict() for chain in chains],
            "rows": [asdict(row) for row in rows],
            "warnings": warnings,
        },
    )
    ctx.json("ledger.json", ledger.model_dump())
    return EXIT_OK if ok else EXIT_FAILED


def _closed_form_curvature(surface: SurfaceSpec, radius: float) -> float | None:
    if not isinstance(surface, RadialSurface):
        return None
    try:
        return surface.disk_total_curvature(radius)
    except DomainError:
        return None


def cmd_total_curvature(ctx: RunContext) -> int:
    surface, b = ctx.bundle()
    trim = ctx.config.trim
    ledger = build_ledger(b, trim)
    report = total_curvature(
        b,
        ctx.config.sigmas,
        ledger,
        trim,
        ctx.threads,
        expected=surface.expected_total_curvature,
    )
    cutoffs = sweep(
        lambda s: cutoff_energy(b, eta_sigma(b, s, trim), ledger, trim),
        sorted(ctx.config.sigmas),
        ctx.threads,
    )
    growth_rows, fit = curvature_growth(b, ctx.config.radii, trim, ctx.threads)

    write_rows_csv(
        ctx.out / "total_curvature.csv",
        (row.as_record() for row in report.rows),
        ["param", "measured", "bound", "satisfied"],
        ctx.meta,
    )
    write_rows_csv(
        ctx.out / "curvature_growth.csv",
        (
            {**asdict(row), "closed_form": _closed_form_curvature(surface, row.radius)}
            for row in growth_rows
        ),
        ["radius", "total_curvature", "h2_mass", "trusted", "closed_form"],
        ctx.meta,
    )
    warnings = list(report.warnings)
    warnings += [
        f"R={row.radius:g}: disk leaves the trimmed window" for row in growth_rows if not row.trusted
    ]
    ok = all(row.satisfied for row in report.rows if row.trusted) and all(
        row.satisfied for row in cutoffs if row.trusted
    )
    ctx.json(
        "summary.json",
        {
            "status": _status(ok),
            "command": "total-curvature",
            "surface": surface.name,
            "params": surface.params,
            "total_curvature": report.as_dict(),
            "cutoff_energy": [asdict(row) for row in cutoffs],
            "growth_fit": asdict(fit),
            "warnings": warnings,
        },
    )
    ctx.json("ledger.json", ledger.model_dump())
    return EXIT_OK if ok else EXIT_FAILED


def cmd_flow(ctx: RunContext) -> int:
    options = ctx.config.flow
    surface = ctx.surface()
    u0 = sample(surface, ctx.grid())

    def checkpoint(state: FlowState) -> None:
        write_wgl(ctx.out / f"checkpoint_{state.step_count:06d}.wgl", state.u, ctx.meta)

    try:
        state, summary = run_flow(
            u0,
            bc=options.bc,
            stop=StopCriteria(max_steps=options.max_steps, grad_tol=options.grad_tol),
            tau=options.tau,
            c_cfl=options.c_cfl,
            checkpoint_every=options.checkpoint_every,
            on_checkpoint=checkpoint,
        )
    except FlowUnstableError as exc:
        logger.error(f"flow failed: {exc}")
        ctx.json("summary.json", {"status": "error", "command": "flow", "message": str(exc)})
        return EXIT_FAILED

    write_rows_csv(
        ctx.out / "energy_history.csv",
        (
            {"time": t, "W": w, "sup_residual": r}
            for (t, w), r in zip(state.energy_history, state.sup_residual_history)
        ),
        ["time", "W", "sup_residual"],
        ctx.meta,
    )
    write_wgl(ctx.out / "final.wgl", state.u, ctx.meta)
    ctx.json(
        "summary.json",
        {
            "status": _status(summary.energy_monotone),
            "command": "flow",
            "surface": surface.name,
            "params": surface.params,
            "bc": options.bc,
            "summary": asdict(summary),
        },
    )
    return EXIT_OK if summary.energy_monotone else EXIT_FAILED


COMMANDS: dict[str, tuple[Callable[[RunContext], int], str]] = {
    "analyze": (cmd_analyze, "summary.json"),
    "verify": (cmd_verify, "verify.json"),
    "area-growth": (cmd_area_growth, "chain.json"),
    "total-curvature": (cmd_total_curvature, "summary.json"),
    "flow": (cmd_flow, "summary.json"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="willmore_lab",
        description="Numerical experiments on graph surfaces z = u(x, y)",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", type=Path, help="run config (.json, .yaml)")
        cmd.add_argument("--out", type=Path, help="output directory (default: config 'out' or ./out)")
        cmd.add_argument("--threads", type=int, help="worker threads (default: $WGL_THREADS or 1)")
    return parser


def _write_error(out: Path | None, name: str, command: str, message: str) -> None:
    if out is None:
        return
    try:
        write_json(out / name, {"status": "error", "command": command, "message": message})
    except OSError as exc:
        logger.error(f"could not write {out / name}: {exc}")


def main(argv: list[str] | None = None) -> int:
    settings = env_settings()
    logging.basicConfig(
        level=getattr(logging, settings.log_level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    handler, summary_name = COMMANDS[args.command]
    out: Path | None = args.out

    try:
        config = load_config(args.config) if args.config else RunConfig()
    except ConfigError as exc:
        logger.error(f"{args.command}: {exc}")
        _write_error(out, summary_name, args.command, str(exc))
        return EXIT_CONFIG

    out = out or Path(config.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    threads = args.threads if args.threads else settings.threads
    ctx = RunContext(config, out, max(1, threads))

    try:
        return handler(ctx)
    # every grid a subcommand touches is built from the config
    except (UnknownSurfaceError, ConfigError, DomainError, GridError, ValidationError) as exc:
        logger.error(f"{args.command}: {exc}")
        _write_error(out, summary_name, args.command, str(exc))
        return EXIT_CONFIG
    except Exception as exc:
        logger.exception("%s failed", args.command)
        _write_error(out, summary_name, args.command, f"{type(exc).__name__}: {exc}")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
