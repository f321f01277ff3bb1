"""Game parameters, coordinate frames and the reduced-order relative kinematics.

Conventions (used consistently across the package):

* Pursuer speed and minimum turn radius are both normalized to 1, so the
  evader speed ``mu`` and the capture radius ``l`` are dimensionless and time
  is measured in turn-radius transits.
* All headings are measured clockwise from the +Y axis, so a heading ``th``
  moves along ``(sin th, cos th)``.  Most libraries assume counterclockwise
  from +X; the rotation matrices below are written for this convention and
  should not be "fixed".
* The relative frame puts the pursuer at the origin with the +Y axis along
  its heading.  The evader's relative position is ``(x, y)`` and its relative
  heading is ``psi = theta_E - theta_P``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi]."""
    a = math.fmod(a + math.pi, TWO_PI)
    if a < 0.0:
        a += TWO_PI
    return a - math.pi


@dataclass(frozen=True)
class GameParams:
    """Evader/pursuer speed ratio ``mu`` and capture radius ``l``.

    Only parameter pairs with ``0 < mu < 1``, ``l > 0`` and ``mu^2 + l^2 < 1``
    are legal; use :func:`validate_params` to construct a checked instance.
    """

    mu: float
    l: float


def validate_params(mu: float, l: float) -> GameParams:
    """Return a :class:`GameParams` iff all parameter invariants hold."""
    if not (0.0 < mu < 1.0):
        raise ValueError(
            f"speed ratio mu={mu!r} must lie strictly inside (0, 1): "
            "the pursuer needs a strict speed advantage"
        )
    if not l > 0.0:
        raise ValueError(f"capture radius l={l!r} must be positive")
    if not mu * mu + l * l < 1.0:
        raise ValueError(
            f"mu^2 + l^2 = {mu * mu + l * l:.6g} must be < 1 "
            "(capture-from-everywhere parameter regime)"
        )
    return GameParams(mu=mu, l=l)


@dataclass(frozen=True)
class GlobalState:
    """World-frame poses: pursuer position/heading and evader position."""

    pursuer_pos: tuple[float, float]
    pursuer_heading: float
    evader_pos: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "pursuer_heading", wrap_angle(self.pursuer_heading))


@dataclass(frozen=True)
class RelState:
    """Evader position in the pursuer-fixed rotating frame."""

    x: float
    y: float

    def captured(self, l: float) -> bool:
        return self.x * self.x + self.y * self.y <= l * l


@dataclass(frozen=True)
class Controls:
    """Pursuer turn rate, evader relative heading and commanded speed."""

    u: float
    psi: float
    mu_cmd: float

    def __post_init__(self):
        if abs(self.u) > 1.0 + 1e-12:
            raise ValueError(f"turn rate u={self.u!r} outside [-1, 1]")
        if self.mu_cmd < 0.0:
            raise ValueError(f"commanded speed mu_cmd={self.mu_cmd!r} negative")
        object.__setattr__(self, "psi", wrap_angle(self.psi))


def rel_rhs(x: float, y: float, u: float, psi: float, mu: float) -> tuple[float, float]:
    """Relative-frame velocity (xdot, ydot); bare-float hot path."""
    return (-y * u + mu * math.sin(psi), x * u - 1.0 + mu * math.cos(psi))


def rel_dynamics(s: RelState, c: Controls) -> tuple[float, float]:
    """Time derivative of the relative state under controls ``c``."""
    return rel_rhs(s.x, s.y, c.u, c.psi, c.mu_cmd)


def to_relative(g: GlobalState) -> RelState:
    """Rotate/translate the evader's world position into the pursuer frame."""
    dx = g.evader_pos[0] - g.pursuer_pos[0]
    dy = g.evader_pos[1] - g.pursuer_pos[1]
    c = math.cos(g.pursuer_heading)
    s = math.sin(g.pursuer_heading)
    # Clockwise-from-+Y convention: this is the inverse of the pursuer's
    # heading rotation, not the usual CCW-from-+X matrix.
    return RelState(x=dx * c - dy * s, y=dx * s + dy * c)


def to_global(
    s: RelState, pursuer_pos: tuple[float, float], pursuer_heading: float
) -> tuple[float, float]:
    """Evader world position for a relative state and pursuer pose."""
    c = math.cos(pursuer_heading)
    si = math.sin(pursuer_heading)
    return (
        pursuer_pos[0] + s.x * c + s.y * si,
        pursuer_pos[1] - s.x * si + s.y * c,
    )
