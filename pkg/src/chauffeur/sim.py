"""Deterministic closed-loop simulation of the relative game.

Fixed-step RK4 with controls held constant across each step, so control
discontinuities (region changes, estimator jumps, the deceptive switch) land
on sample or event boundaries: a step containing a pocket-wall crossing is
split at the crossing.  Events are located by interpolation within the
offending step: capture (the radius crossing ``l``), barrier contacts (the
deceptive switch trigger), and y-axis crossings.

Near the universal lines the feedback is evaluated with an axis band a few
steps wide; inside it the line strategies (u = 0, psi = 0) hold the
cross-track coordinate exactly, which suppresses feedback chatter without
touching the geometric classifier.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field

from .core import Controls, GameParams, RelState, rel_rhs
from .solution import SIDE_DEADBAND, SolutionGeometry, get_geometry
from .strategy import EvaderPolicy, SpeedEstimate, deceptive_policy, estimator_update, feedback_pair

TRAJECTORY_CSV_HEADER = "t,x,y,u,psi,mu_cmd,mu_hat,region,event"

CAPTURE = "capture"
BARRIER_CROSS = "barrier_cross"
SWITCH = "switch"
AXIS_CROSS = "axis_cross"

# The pursuer's speed observations release after one default integrator step
# rather than one actual step, so closed-loop outcomes converge under step
# refinement instead of baking the reaction latency into dt.  At the default
# dt the two readings coincide.
ESTIMATOR_LATENCY = 1e-3


@dataclass(frozen=True)
class Scenario:
    """One closed-loop run configuration."""

    params_truth: GameParams
    params_low: GameParams
    initial_rel: RelState
    evader_policy: EvaderPolicy
    pursuer_mode: str = "informed"  # "informed" | "estimating"
    dt: float = 1e-3
    t_max: float = 60.0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.t_max <= 0.0:
            raise ValueError("t_max must be positive")
        if self.pursuer_mode not in ("informed", "estimating"):
            raise ValueError(f"unknown pursuer mode {self.pursuer_mode!r}")
        if self.initial_rel.captured(self.params_truth.l):
            raise ValueError("initial point lies inside the capture circle")
        if self.params_truth.l != self.params_low.l:
            raise ValueError("both parameter sets must share the capture radius")
        pol = self.evader_policy
        if pol.kind == "deceptive" and pol.mu_high is not None:
            if pol.mu_high > self.params_truth.mu + 1e-12:
                raise ValueError(
                    f"policy mu_high={pol.mu_high} exceeds the true speed bound "
                    f"{self.params_truth.mu}"
                )


@dataclass
class Event:
    t: float
    kind: str
    location: tuple[float, float]


@dataclass
class Trajectory:
    """Sampled closed-loop run: parallel arrays plus an event log."""

    t: list[float]
    x: list[float]
    y: list[float]
    u: list[float]
    psi: list[float]
    mu_cmd: list[float]
    mu_hat: list[float]
    region: list[str]
    events: list[Event] = field(default_factory=list)
    capture_time: float | None = None
    capture_point: tuple[float, float] | None = None

    def samples(self):
        """Typed view: (t, RelState, Controls, mu_hat, region tag) per sample."""
        for k in range(len(self.t)):
            yield (
                self.t[k],
                RelState(self.x[k], self.y[k]),
                Controls(u=self.u[k], psi=self.psi[k], mu_cmd=self.mu_cmd[k]),
                self.mu_hat[k],
                self.region[k],
            )

    def to_csv(self, path: str) -> None:
        ev_at = {}
        for e in self.events:
            ev_at.setdefault(_nearest_index(self.t, e.t), []).append(e.kind)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRAJECTORY_CSV_HEADER.split(","))
            for k in range(len(self.t)):
                w.writerow(
                    [
                        f"{self.t[k]:.9g}",
                        f"{self.x[k]:.9g}",
                        f"{self.y[k]:.9g}",
                        f"{self.u[k]:.9g}",
                        f"{self.psi[k]:.9g}",
                        f"{self.mu_cmd[k]:.9g}",
                        f"{self.mu_hat[k]:.9g}",
                        self.region[k],
                        "+".join(ev_at.get(k, [])),
                    ]
                )


def _nearest_index(ts: list[float], t: float) -> int:
    k = bisect.bisect_left(ts, t)
    if k <= 0:
        return 0
    if k >= len(ts):
        return len(ts) - 1
    return k if ts[k] - t < t - ts[k - 1] else k - 1


def step(s: RelState, c: Controls, dt: float) -> RelState:
    """One fixed-step RK4 update of the relative kinematics."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    x, y = _step_raw(s.x, s.y, c.u, c.psi, c.mu_cmd, dt)
    return RelState(x, y)


def _step_raw(x: float, y: float, u: float, psi: float, mu: float, dt: float):
    k1 = rel_rhs(x, y, u, psi, mu)
    k2 = rel_rhs(x + 0.5 * dt * k1[0], y + 0.5 * dt * k1[1], u, psi, mu)
    k3 = rel_rhs(x + 0.5 * dt * k2[0], y + 0.5 * dt * k2[1], u, psi, mu)
    k4 = rel_rhs(x + dt * k3[0], y + dt * k3[1], u, psi, mu)
    return (
        x + dt / 6.0 * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0]),
        y + dt / 6.0 * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1]),
    )


def _pocket_flip(
    prev: tuple[float, float, float],
    nxt: tuple[float, float, float],
    geometry: SolutionGeometry,
    in_prev: bool,
    in_next: bool,
) -> tuple[float, tuple[float, float], str] | None:
    """Bisected wall-crossing (time, location, wall section) within a step."""
    if in_prev == in_next:
        return None
    t0, x0, y0 = prev
    t1, x1, y1 = nxt
    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        xm = x0 + mid * (x1 - x0)
        ym = y0 + mid * (y1 - y0)
        if geometry.pocket_contains(xm, ym) == in_prev:
            lo = mid
        else:
            hi = mid
    w = 0.5 * (lo + hi)
    loc = (x0 + w * (x1 - x0), y0 + w * (y1 - y0))
    return t0 + w * (t1 - t0), loc, geometry.wall_section(*loc)


def detect_events(
    prev: tuple[float, float, float],
    nxt: tuple[float, float, float],
    geometry: SolutionGeometry,
    in_prev: bool | None = None,
    in_next: bool | None = None,
) -> list[Event]:
    """Sign-change events between consecutive samples ``(t, x, y)``.

    Capture interpolates the radius crossing of ``l``; barrier crossings
    bisect the linearly interpolated segment against the pocket membership
    test and are reported only on the barrier section of the wall (crossing
    the equivocal section is an ordinary region change, not a barrier
    contact); axis crossings interpolate the zero of x.  Capture, when
    present, sorts last.  ``in_prev``/``in_next`` let a caller reuse pocket
    membership tests it already performed.
    """
    t0, x0, y0 = prev
    t1, x1, y1 = nxt
    events: list[Event] = []
    l = geometry.params.l

    g0 = x0 * x0 + y0 * y0 - l * l
    g1 = x1 * x1 + y1 * y1 - l * l
    captured = g0 > 0.0 >= g1

    if (x0 > 0.0) != (x1 > 0.0) and x0 != x1:
        w = x0 / (x0 - x1)
        events.append(Event(t0 + w * (t1 - t0), AXIS_CROSS, (0.0, y0 + w * (y1 - y0))))

    in0 = geometry.pocket_contains(x0, y0) if in_prev is None else in_prev
    in1 = geometry.pocket_contains(x1, y1) if in_next is None else in_next
    flip = _pocket_flip(prev, nxt, geometry, in0, in1)
    if flip is not None and flip[2] == "barrier":
        events.append(Event(flip[0], BARRIER_CROSS, flip[1]))

    events.sort(key=lambda e: e.t)
    if captured:
        # Linear interpolation of the radius itself (not its square), which
        # is exact for straight-line closing motion.
        r0 = math.sqrt(g0 + l * l)
        r1 = math.sqrt(max(g1 + l * l, 0.0))
        w = (r0 - l) / (r0 - r1)
        events.append(
            Event(t0 + w * (t1 - t0), CAPTURE, (x0 + w * (x1 - x0), y0 + w * (y1 - y0)))
        )
    return events


def run_closed_loop(
    sc: Scenario,
    geom_truth: SolutionGeometry | None = None,
    geom_low: SolutionGeometry | None = None,
) -> Trajectory:
    """Integrate a scenario to capture or ``t_max``.

    Loop order per step: estimator update (the estimating pursuer observes
    realized evader speeds one latency interval after the fact), pursuer
    feedback on the geometry matching its current knowledge, evader policy,
    RK4 step, event detection.  Steps containing a pocket-wall crossing are
    split at the crossing so control handoffs (and the deceptive switch)
    take effect at the event.  Deterministic for a fixed scenario.
    """
    if geom_truth is None:
        geom_truth = get_geometry(sc.params_truth)
    if geom_low is None:
        geom_low = (
            geom_truth
            if sc.params_low == sc.params_truth
            else get_geometry(sc.params_low)
        )
    policy = sc.evader_policy
    dt = sc.dt
    mu_truth = sc.params_truth.mu
    # Equal speeds degenerate deception to truthful play: the switch is a
    # no-op and must not perturb the trajectory.
    deceptive = policy.kind == "deceptive" and policy.mu_low != policy.mu_high

    x, y = sc.initial_rel.x, sc.initial_rel.y
    t = 0.0
    traj = Trajectory(t=[], x=[], y=[], u=[], psi=[], mu_cmd=[], mu_hat=[], region=[])

    # First observation: the speed the evader is about to command.  Later
    # observations queue until one latency interval has elapsed.
    if deceptive and not policy.switched:
        first_speed = policy.mu_low
    else:
        first_speed = mu_truth
    estimate = SpeedEstimate.from_observation(first_speed)
    pending: list[tuple[float, float]] = []
    released = 0
    wall_hold = False
    last_barrier_t = -math.inf

    n_max = int(math.ceil(sc.t_max / dt))
    in_pocket = geom_truth.pocket_contains(x, y)

    def controls_at(x_, y_, t_):
        """(u, psi, mu_cmd, region tag) under the current knowledge state."""
        band = max(SIDE_DEADBAND, 3.0 * dt * max(1.0, abs(y_)))
        # Between a deceptive switch on the pocket wall and the dive settling
        # inside, hold the trajectory on the pocket side across the feedback
        # and estimator lags.  The floor keeps the strip above the wall
        # sampling resolution; the hold releases once the trajectory is
        # solidly interior so the eventual exit through the equal-cost wall
        # is as crisp as truthful play's.
        if wall_hold:
            wband = max(2.0 * dt * (1.0 + math.hypot(x_, y_)), 3e-3)
        else:
            wband = 0.0
        if sc.pursuer_mode == "informed":
            geom_p = geom_truth
        else:
            # Two-speed world: the estimate only ever equals one of the two
            # candidate bounds, so two cached geometries suffice.
            near_truth = abs(estimate.mu_hat - mu_truth) <= abs(
                estimate.mu_hat - sc.params_low.mu
            )
            geom_p = geom_truth if near_truth else geom_low
        state = RelState(x_, y_)
        u_, psi_t, tag_ = feedback_pair(geom_p, state, axis_band=band, wall_band=wband)
        if deceptive:
            psi_, mu_cmd_, _ = deceptive_policy(
                policy, geom_truth, geom_low, state, t_, axis_band=band, wall_band=wband
            )
        elif geom_p is geom_truth:
            psi_ = psi_t
            mu_cmd_ = mu_truth
        else:
            _, psi_, _ = feedback_pair(geom_truth, state, axis_band=band, wall_band=wband)
            mu_cmd_ = mu_truth
        if geom_p is not geom_truth:
            # Log the region of the true game, not the pursuer's belief.
            tag_ = geom_truth.classify(state, axis_band=band, wall_band=wband).tag
        return u_, psi_, mu_cmd_, tag_

    for _ in range(n_max + 1):
        while released < len(pending) and pending[released][0] + ESTIMATOR_LATENCY <= t + 1e-12:
            estimate = estimator_update(estimate, pending[released][1])
            released += 1
        u, psi, mu_cmd, tag = controls_at(x, y, t)
        if deceptive and policy.switched and policy.switch_t == t and (
            not traj.events or traj.events[-1].kind != SWITCH
        ):
            traj.events.append(Event(t, SWITCH, (x, y)))

        traj.t.append(t)
        traj.x.append(x)
        traj.y.append(y)
        traj.u.append(u)
        traj.psi.append(psi)
        traj.mu_cmd.append(mu_cmd)
        traj.mu_hat.append(estimate.mu_hat)
        traj.region.append(tag)

        if t >= sc.t_max:
            break

        xn, yn = _step_raw(x, y, u, psi, mu_cmd, dt)
        tn = t + dt
        observed_speed = mu_cmd

        in_next = geom_truth.pocket_contains(xn, yn)
        flip = _pocket_flip((t, x, y), (tn, xn, yn), geom_truth, in_pocket, in_next)
        if flip is None:
            evs = detect_events(
                (t, x, y), (tn, xn, yn), geom_truth, in_prev=in_pocket, in_next=in_next
            )
        else:
            # Split the step at the wall so the control handoff (and a
            # deceptive switch) happens at the crossing, not a sample late;
            # capture times otherwise carry a first-order step error.  The
            # substep event scans pass equal memberships to suppress the wall
            # re-detection already handled here.
            tw, loc, section = flip
            w = (tw - t) / dt
            xm, ym = _step_raw(x, y, u, psi, mu_cmd, w * dt)
            evs = detect_events(
                (t, x, y), (tw, xm, ym), geom_truth, in_prev=False, in_next=False
            )
            if section == "barrier" and tw - last_barrier_t > 0.1:
                last_barrier_t = tw
                evs.append(Event(tw, BARRIER_CROSS, loc))
                if deceptive and not policy.switched and policy.switch_time is None:
                    policy.latch_switch(tw, loc)
                    evs.append(Event(tw, SWITCH, loc))
                    wall_hold = True
            u2, psi2, mu_cmd2, _ = controls_at(xm, ym, tw)
            xn, yn = _step_raw(xm, ym, u2, psi2, mu_cmd2, (1.0 - w) * dt)
            observed_speed = w * mu_cmd + (1.0 - w) * mu_cmd2
            in_next = geom_truth.pocket_contains(xn, yn)
            evs.extend(
                detect_events(
                    (tw, xm, ym), (tn, xn, yn), geom_truth, in_prev=False, in_next=False
                )
            )
        in_pocket = in_next

        captured = False
        evs.sort(key=lambda e: (e.t, e.kind == CAPTURE))
        for e in evs:
            if e.kind == CAPTURE:
                traj.events.append(e)
                traj.capture_time = e.t
                traj.capture_point = e.location
                traj.t.append(e.t)
                traj.x.append(e.location[0])
                traj.y.append(e.location[1])
                traj.u.append(u)
                traj.psi.append(psi)
                traj.mu_cmd.append(mu_cmd)
                traj.mu_hat.append(estimate.mu_hat)
                traj.region.append("Captured")
                captured = True
                break
            traj.events.append(e)
        if captured:
            break

        if wall_hold and in_pocket:
            wb = max(2.0 * dt * (1.0 + math.hypot(xn, yn)), 3e-3)
            if geom_truth.wall_distance(xn, yn) > 2.0 * wb:
                wall_hold = False

        # Queue the realized evader speed of this step (the step average when
        # a wall crossing split it) for latency-delayed observation.
        pending.append((t, observed_speed))
        x, y, t = xn, yn, tn

    return traj
