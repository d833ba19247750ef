"""Exception hierarchy shared by every willmore_lab module."""

from __future__ import annotations


class WillmoreLabError(Exception):
    """Base class for all library errors."""


class GridError(WillmoreLabError, ValueError):
    """Grid too small, mismatched grids, or malformed grid parameters."""


class NonFiniteFieldError(WillmoreLabError, ValueError):
    """A field operation produced NaN or Inf."""


class DomainError(WillmoreLabError, ValueError):
    """A surface was evaluated outside its valid domain."""

    def __init__(self, surface: str, point: tuple[float, float]) -> None:
        self.surface = surface
        self.point = point
        super().__init__(
            f"{surface}: point (x={point[0]:.6g}, y={point[1]:.6g}) is outside the valid domain"
        )


class UnknownSurfaceError(WillmoreLabError, ValueError):
    """Catalog lookup failed."""

    def __init__(self, name: str, available: list[str]) -> None:
        self.name = name
        super().__init__(f"unknown surface '{name}'. Available: {', '.join(available)}")


class SupportError(WillmoreLabError, ValueError):
    """A test function touches the untrusted boundary margin."""


class ConfigError(WillmoreLabError, ValueError):
    """Run configuration could not be loaded or validated."""


class FlowUnstableError(WillmoreLabError, RuntimeError):
    """Energy kept increasing after the maximum number of time-step halvings."""
