"""Feedback equilibrium strategies, the pursuer's speed estimator, and the
evader's deceptive speed policy.

Strategies are stateless given an immutable :class:`SolutionGeometry`; the
only mutable pieces are :class:`SpeedEstimate` (running supremum of observed
evader speeds) and the one-shot switch latch on :class:`EvaderPolicy`, both
confined to a single simulation run.

Measurement model: the pursuer estimates the evader's speed bound as the
largest speed observed so far (position differencing over one integrator
step, which for a straight-within-step evader recovers the commanded speed
exactly).  The estimate therefore starts at the first observation and is
non-decreasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import RelState, wrap_angle
from .solution import (
    CAPTURED,
    DISPERSAL,
    EQUIVOCAL,
    PRIMARY,
    SIDE_DEADBAND,
    TRIBUTARY,
    UNIVERSAL_NEGATIVE,
    UNIVERSAL_POSITIVE,
    SolutionGeometry,
    turn_alignment,
)


@dataclass(frozen=True)
class SpeedEstimate:
    """Running supremum of observed evader speeds; mu_hat == history_max."""

    mu_hat: float
    history_max: float

    @staticmethod
    def from_observation(observed_speed: float) -> "SpeedEstimate":
        _check_speed(observed_speed)
        return SpeedEstimate(mu_hat=observed_speed, history_max=observed_speed)


def _check_speed(observed_speed: float) -> None:
    if not (0.0 <= observed_speed < 1.0):
        raise ValueError(f"observed speed {observed_speed!r} outside [0, 1)")


def estimator_update(e: SpeedEstimate, observed_speed: float) -> SpeedEstimate:
    """Sup-update; idempotent for repeated observations."""
    _check_speed(observed_speed)
    m = max(e.mu_hat, observed_speed)
    return SpeedEstimate(mu_hat=m, history_max=m)


def _feedback_halfplane(
    geom: SolutionGeometry, x: float, y: float, axis_band: float, wall_band: float
):
    """(u, psi) for a query already mirrored into x >= 0."""
    s = RelState(x, y)
    region = geom.classify(s, axis_band=axis_band, wall_band=wall_band)
    tag = region.tag
    if tag == CAPTURED:
        return 0.0, 0.0, tag
    if tag == UNIVERSAL_POSITIVE or tag == UNIVERSAL_NEGATIVE:
        return 0.0, 0.0, tag
    if tag == TRIBUTARY or tag == DISPERSAL:
        # Dispersal tie-break: deterministically take the x > 0 turn.
        res = turn_alignment(x, y)
        if res is None:
            # Numerical sliver inside the turn disc next to a region edge;
            # fall back to the merge heading.
            return 1.0, 0.0, tag
        return 1.0, wrap_angle(res[0]), tag
    if tag == PRIMARY:
        phi, tau = geom.primary_data(x, y)
        return 1.0, wrap_angle(phi + tau), tag
    if tag == EQUIVOCAL:
        _, u_eq = geom.equivocal_data(x, y)
        return u_eq, math.atan2(-x, -y), tag
    # Secondary: toward the junction recorded on the nearest characteristic.
    ch, tau = geom.secondary_data(x, y)
    if ch.terminal == "equivocal":
        ax, ay = ch.anchor
        psi = wrap_angle(math.pi - tau - math.atan(ay / ax))
    else:
        psi = wrap_angle(-tau)
    return -1.0, psi, tag


def pursuer_feedback(
    geom: SolutionGeometry,
    s: RelState,
    axis_band: float = SIDE_DEADBAND,
    wall_band: float = 0.0,
) -> float:
    """Equilibrium turn rate: +1 primary/tributary, -1 secondary, 0 on the
    universal lines, interior control on the equivocal curve; mirror-negated
    for x < 0 queries."""
    mirrored = s.x < 0.0
    u, _, _ = _feedback_halfplane(geom, abs(s.x), s.y, axis_band, wall_band)
    return -u if mirrored else u


def evader_feedback(
    geom: SolutionGeometry,
    s: RelState,
    axis_band: float = SIDE_DEADBAND,
    wall_band: float = 0.0,
) -> float:
    """Equilibrium relative heading; mirror-negated for x < 0 queries."""
    mirrored = s.x < 0.0
    _, psi, _ = _feedback_halfplane(geom, abs(s.x), s.y, axis_band, wall_band)
    return wrap_angle(-psi) if mirrored else psi


def feedback_pair(
    geom: SolutionGeometry,
    s: RelState,
    axis_band: float = SIDE_DEADBAND,
    wall_band: float = 0.0,
) -> tuple[float, float, str]:
    """(u, psi, region tag) in one classification pass; used by the simulator."""
    mirrored = s.x < 0.0
    u, psi, tag = _feedback_halfplane(geom, abs(s.x), s.y, axis_band, wall_band)
    if mirrored:
        return -u, wrap_angle(-psi), tag
    return u, psi, tag


@dataclass
class EvaderPolicy:
    """Truthful play, or slow-then-fast deception with a single upward switch.

    ``switch_time``, when set, forces the switch at that time; otherwise the
    switch fires at the first crossing of the fast-parameter pocket wall
    (barrier plus equivocal curve), detected by the simulator.  The latch is
    one-shot: the commanded speed changes at most once and only upward.
    """

    kind: str = "truthful"  # "truthful" | "deceptive"
    mu_low: float | None = None
    mu_high: float | None = None
    switch_time: float | None = None
    switched: bool = field(default=False)
    switch_point: tuple[float, float] | None = field(default=None)
    switch_t: float | None = field(default=None)

    def __post_init__(self):
        if self.kind not in ("truthful", "deceptive"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "deceptive":
            if self.mu_low is None or self.mu_high is None:
                raise ValueError("deceptive policy needs mu_low and mu_high")
            if self.mu_low > self.mu_high:
                raise ValueError("deceptive policy requires mu_low <= mu_high")

    def latch_switch(self, t: float, point: tuple[float, float]) -> None:
        if not self.switched:
            self.switched = True
            self.switch_t = t
            self.switch_point = point


def deceptive_policy(
    policy: EvaderPolicy,
    geom_high: SolutionGeometry,
    geom_low: SolutionGeometry,
    s: RelState,
    t: float,
    axis_band: float = SIDE_DEADBAND,
    wall_band: float = 0.0,
) -> tuple[float, float, bool]:
    """(psi, mu_cmd, switched) for the deceptive evader at state ``s``.

    Before the switch the evader mimics the slow game's equilibrium heading at
    the low speed; afterwards it plays the fast game's equilibrium at full
    speed.  Time-triggered switches latch here; wall-triggered switches are
    latched by the simulator's event detection.
    """
    if policy.kind == "truthful":
        return evader_feedback(geom_high, s, axis_band, wall_band), geom_high.params.mu, False
    if not policy.switched and policy.switch_time is not None and t >= policy.switch_time:
        policy.latch_switch(t, (s.x, s.y))
    if policy.switched:
        return evader_feedback(geom_high, s, axis_band, wall_band), policy.mu_high, True
    return evader_feedback(geom_low, s, axis_band, wall_band), policy.mu_low, False
