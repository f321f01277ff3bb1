"""Solution geometry of the chauffeur game for one parameter pair.

Everything is built in the x >= 0 half plane and mirrored on query (the game
is symmetric about the y axis).  The construction, in build order:

* usable part: the capture-circle arc at polar angles ``phi`` in
  ``[0, acos(mu))`` measured clockwise off +y; its boundary point (BUP)
  ``(l sin(phi_bar), l cos(phi_bar))`` with ``phi_bar = acos(mu)`` anchors
  the barrier.
* barrier: retrograde arc from the BUP under ``(u, psi) = (+1, phi_bar+tau)``.
  Integration stops where the retrograde tangent turns back toward the
  capture circle (the local x-extremum of the arc).  Two interior times
  matter along the way: the arc exits the unit turn disc centred at (1, 0)
  at tau = l/mu, which is the focal time where the whole primary family
  converges (the primary region closes there), and the recorded endpoint
  anchors the equivocal curve.
* primary fan: the same retrograde family for ``phi`` in ``(0, phi_bar)``;
  every member is integrated to the shared focal time.
* equivocal curve: marched retrograde from the barrier endpoint with the
  evader in pure pursuit of the origin and the pursuer control solved per
  step so that the tributary departure cost grows at unit rate (the two
  escape options stay equal in cost).  Its y-axis contact ``(0, y_es)``
  closes the pocket and bounds the negative universal line.
* secondary fan: ``u = -1`` arcs integrated retrograde from equivocal-curve
  anchors and from the negative universal line; they fill the pocket
  enclosed by barrier, equivocal curve, axis segment and capture circle.

Values: tributary points, both universal lines and the dispersal line are
closed form (turn alignment plus straight chase); pocket and petal points
interpolate time-to-go along the nearest characteristic.  The tributary
formula is also the departure cost on the pocket wall, which makes the
value continuous across the equivocal curve while it jumps across the
barrier (the pocket is worth more to the evader than the wrapped tributary
field just outside).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import GameParams, RelState, to_relative

# Region tags.
CAPTURED = "Captured"
PRIMARY = "Primary"
TRIBUTARY = "Tributary"
SECONDARY = "Secondary"
UNIVERSAL_POSITIVE = "UniversalPositive"
UNIVERSAL_NEGATIVE = "UniversalNegative"
EQUIVOCAL = "Equivocal"
DISPERSAL = "Dispersal"

# Signed-distance dead band for classification side tests.
SIDE_DEADBAND = 1e-6

TWO_PI_ = 2.0 * math.pi

GEOMETRY_CSV_HEADER = "family,branch_id,tau,x,y"


class EqualCostBracketError(RuntimeError):
    """Equal-cost locus could not be bracketed while marching the equivocal curve."""


@dataclass(frozen=True)
class Region:
    tag: str
    mirrored: bool = False


@dataclass(frozen=True)
class SampledCurve:
    """Polyline with a time-to-go value per sample."""

    kind: str  # "barrier" | "equivocal"
    points: np.ndarray  # (n, 2)
    tau: np.ndarray  # (n,)
    u: np.ndarray | None = None  # pursuer control along an equivocal curve


@dataclass(frozen=True)
class Characteristic:
    """One retrograde characteristic; tau is local time to its terminal manifold."""

    points: np.ndarray  # (n, 2)
    tau: np.ndarray  # (n,)
    terminal: str  # "usable_part" | "equivocal" | "negative_universal"
    anchor_value: float  # game value at the tau = 0 sample
    phi: float | None = None  # usable-part angle (primary family)
    anchor: tuple[float, float] | None = None  # junction (x_ES, y_ES) or (0, y0)


@dataclass(frozen=True)
class CharacteristicField:
    family: str  # "primary" | "tributary" | "secondary"
    terminal_label: str
    trajectories: list[Characteristic]


# ---------------------------------------------------------------------------
# closed-form pieces: usable part, turn alignment, tributary value
# ---------------------------------------------------------------------------


def bup_angle(p: GameParams) -> float:
    """Half-width of the usable part: phi_bar = acos(mu)."""
    return math.acos(p.mu)


def bup_point(p: GameParams) -> tuple[float, float]:
    phi = bup_angle(p)
    return (p.l * math.sin(phi), p.l * math.cos(phi))


def turn_alignment(x: float, y: float) -> tuple[float, float] | None:
    """Duration of the u=+1 turn that aims the heading ray at a frozen target.

    Returns ``(t_align, s0)`` where ``s0 = sqrt(R^2 - 1)`` is the separation
    along the heading ray at alignment, or ``None`` when the target lies
    strictly inside the unit turn disc centred at (1, 0) and no alignment
    exists.  The root solves ``(x-1) cos t - y sin t = -1`` with the target
    ahead, i.e. ``(x-1) sin t + y cos t > 0``.
    """
    cx = x - 1.0
    r2 = cx * cx + y * y
    if r2 < 1.0:
        return None
    r = math.sqrt(r2)
    s0 = math.sqrt(max(r2 - 1.0, 0.0))
    delta = math.atan2(y, cx)
    half = math.acos(max(-1.0, min(1.0, -1.0 / r)))
    best = None
    for t in ((-delta + half) % TWO_PI_, (-delta - half) % TWO_PI_):
        ahead = cx * math.sin(t) + y * math.cos(t)
        if ahead >= -1e-9:
            # Exact alignments at t ~ 2*pi are t ~ 0 cases hit from below.
            if t > TWO_PI_ - 1e-9:
                t = 0.0
            if best is None or t < best:
                best = t
    if best is None:  # not reachable: one root is always ahead
        return None
    return best, s0


def dubins_cs_turn_time(
    pursuer_pos: tuple[float, float], pursuer_heading: float, target: tuple[float, float]
) -> float:
    """C-segment duration of the turn-then-straight path through ``target``.

    The pursuer turns toward the target (u = +1 for targets on its right,
    mirrored otherwise) until its heading ray passes through the target in
    the forward direction.  Independent of the evader speed by construction.
    """
    from .core import GlobalState  # local import to keep module load light

    rel = to_relative(
        GlobalState(pursuer_pos=pursuer_pos, pursuer_heading=pursuer_heading, evader_pos=target)
    )
    res = turn_alignment(abs(rel.x), rel.y)
    if res is None:
        raise ValueError(
            "target lies strictly inside the unit turn circle on the turning "
            "side; no turn-then-straight alignment exists"
        )
    return res[0]


def _tributary_value_raw(p: GameParams, x: float, y: float) -> float | None:
    """Turn-then-chase cost; valid as the game value inside the tributary region."""
    res = turn_alignment(x, y)
    if res is None:
        return None
    t, s0 = res
    # Capture closes at separation l, hence the -l in the chase leg.
    return t + (s0 + p.mu * t - p.l) / (1.0 - p.mu)


# ---------------------------------------------------------------------------
# retrograde integration
# ---------------------------------------------------------------------------


def _retro_rhs(x: float, y: float, u: float, psi: float, mu: float) -> tuple[float, float]:
    # Retrograde form of the relative kinematics: d/dtau = -d/dt.
    return (y * u - mu * math.sin(psi), -x * u + 1.0 - mu * math.cos(psi))


def _rk4_fixed(x: float, y: float, u: float, psi: float, mu: float, h: float):
    """One forward RK4 step with frozen controls."""

    def f(x_, y_):
        return (-y_ * u + mu * math.sin(psi), x_ * u - 1.0 + mu * math.cos(psi))

    k1 = f(x, y)
    k2 = f(x + 0.5 * h * k1[0], y + 0.5 * h * k1[1])
    k3 = f(x + 0.5 * h * k2[0], y + 0.5 * h * k2[1])
    k4 = f(x + h * k3[0], y + h * k3[1])
    return (
        x + h / 6.0 * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0]),
        y + h / 6.0 * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1]),
    )


def primary_retro_rhs(
    p: GameParams, x: float, y: float, tau: float, phi: float
) -> tuple[float, float]:
    """Retrograde field of the (u, psi) = (+1, phi + tau) family."""
    return _retro_rhs(x, y, 1.0, phi + tau, p.mu)


def _rk4_primary(p: GameParams, x: float, y: float, tau: float, phi: float, h: float):
    k1 = primary_retro_rhs(p, x, y, tau, phi)
    k2 = primary_retro_rhs(p, x + 0.5 * h * k1[0], y + 0.5 * h * k1[1], tau + 0.5 * h, phi)
    k3 = primary_retro_rhs(p, x + 0.5 * h * k2[0], y + 0.5 * h * k2[1], tau + 0.5 * h, phi)
    k4 = primary_retro_rhs(p, x + h * k3[0], y + h * k3[1], tau + h, phi)
    return (
        x + h / 6.0 * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0]),
        y + h / 6.0 * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1]),
    )


def compute_barrier(
    p: GameParams, d_tau: float = 1e-3, tau_max: float | None = None
) -> SampledCurve:
    """Retrograde-integrate the barrier from the BUP to its endpoint.

    The endpoint is where the retrograde tangent turns back toward the
    capture circle: the first local x-maximum reached after the arc has left
    the unit turn disc centred at (1, 0).  (For small mu the arc wiggles
    through interior x-extrema while still inside the disc; those are not
    endpoints, and the equivocal curve could not anchor there because the
    departure cost only exists outside the disc.)  ``tau_max``, when given,
    caps the arc early.
    """
    if d_tau >= 0.01:
        raise ValueError(f"d_tau={d_tau!r} too coarse; the barrier march requires d_tau < 0.01")
    if d_tau <= 0.0:
        raise ValueError("d_tau must be positive")
    phi = bup_angle(p)
    x, y = bup_point(p)
    pts = [(x, y)]
    taus = [0.0]
    tau = 0.0
    cap = tau_max if tau_max is not None else math.inf
    armed = False

    while tau < cap:
        h = min(d_tau, cap - tau)
        xn, yn = _rk4_primary(p, x, y, tau, phi, h)
        dx_n = primary_retro_rhs(p, xn, yn, tau + h, phi)[0]
        outside = (xn - 1.0) ** 2 + yn ** 2 >= 1.0
        if armed and dx_n <= 0.0:
            # Bisect the tangent-vertical time inside this step.
            lo, hi = 0.0, h
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                xm, ym = _rk4_primary(p, x, y, tau, phi, mid)
                if primary_retro_rhs(p, xm, ym, tau + mid, phi)[0] <= 0.0:
                    hi = mid
                else:
                    lo = mid
            xe, ye = _rk4_primary(p, x, y, tau, phi, hi)
            pts.append((xe, ye))
            taus.append(tau + hi)
            break
        if not armed and outside and dx_n > 0.0:
            armed = True
        x, y = xn, yn
        tau += h
        pts.append((x, y))
        taus.append(tau)
        if tau > 100.0:
            raise RuntimeError("barrier march failed to terminate")
    return SampledCurve(kind="barrier", points=np.asarray(pts), tau=np.asarray(taus))


def focal_time(p: GameParams, barrier: SampledCurve) -> float:
    """Time at which the barrier exits the unit turn disc centred at (1, 0).

    The whole primary family converges to the barrier point at this time, so
    it bounds the primary region; detected by scanning the sampled arc.
    """
    r2 = (barrier.points[:, 0] - 1.0) ** 2 + barrier.points[:, 1] ** 2 - 1.0
    idx = np.nonzero(r2 >= 0.0)[0]
    idx = idx[idx > 0]
    if len(idx) == 0:
        return float(barrier.tau[-1])
    k = int(idx[0])
    w = r2[k - 1] / (r2[k - 1] - r2[k])
    return float(barrier.tau[k - 1] + w * (barrier.tau[k] - barrier.tau[k - 1]))


def compute_primary_fan(
    p: GameParams,
    n_phi: int = 200,
    d_tau: float = 1e-3,
    tau_end: float | None = None,
) -> CharacteristicField:
    """Retrograde characteristics from usable-part angles phi in (0, phi_bar).

    All members share the focal time at which the family converges onto one
    point of the barrier; vectorized RK4 over the whole fan.
    """
    if n_phi < 2:
        raise ValueError("n_phi must be at least 2")
    if d_tau >= 0.01 or d_tau <= 0.0:
        raise ValueError(f"d_tau={d_tau!r} outside (0, 0.01)")
    phi_bar = bup_angle(p)
    if tau_end is None:
        barrier = compute_barrier(p, d_tau=d_tau)
        tau_end = focal_time(p, barrier)
    phis = np.linspace(phi_bar / n_phi, phi_bar, n_phi)
    n_steps = max(2, int(round(tau_end / d_tau)))
    h = tau_end / n_steps
    mu = p.mu
    x = p.l * np.sin(phis)
    y = p.l * np.cos(phis)
    pts = np.empty((n_phi, n_steps + 1, 2))
    pts[:, 0, 0] = x
    pts[:, 0, 1] = y
    taus = np.linspace(0.0, tau_end, n_steps + 1)

    def rhs(xv, yv, tau):
        ang = phis + tau
        return yv - mu * np.sin(ang), -xv + 1.0 - mu * np.cos(ang)

    tau = 0.0
    for k in range(n_steps):
        k1x, k1y = rhs(x, y, tau)
        k2x, k2y = rhs(x + 0.5 * h * k1x, y + 0.5 * h * k1y, tau + 0.5 * h)
        k3x, k3y = rhs(x + 0.5 * h * k2x, y + 0.5 * h * k2y, tau + 0.5 * h)
        k4x, k4y = rhs(x + h * k3x, y + h * k3y, tau + h)
        x = x + h / 6.0 * (k1x + 2.0 * (k2x + k3x) + k4x)
        y = y + h / 6.0 * (k1y + 2.0 * (k2y + k3y) + k4y)
        tau += h
        pts[:, k + 1, 0] = x
        pts[:, k + 1, 1] = y

    chars = [
        Characteristic(
            points=pts[i],
            tau=taus.copy(),
            terminal="usable_part",
            anchor_value=0.0,
            phi=float(phis[i]),
        )
        for i in range(n_phi)
    ]
    return CharacteristicField(family="primary", terminal_label="usable part", trajectories=chars)


# ---------------------------------------------------------------------------
# equivocal curve and secondary fan
# ---------------------------------------------------------------------------


def _pp_heading(x: float, y: float) -> float:
    # Pure pursuit of the origin: relative velocity direction from E toward P.
    return math.atan2(-x, -y)


def _rk4_equivocal(p: GameParams, x: float, y: float, u: float, h: float):
    # psi is pure-pursuit feedback, re-evaluated at every RK4 stage.
    mu = p.mu

    def rhs(x_, y_):
        return _retro_rhs(x_, y_, u, _pp_heading(x_, y_), mu)

    k1 = rhs(x, y)
    k2 = rhs(x + 0.5 * h * k1[0], y + 0.5 * h * k1[1])
    k3 = rhs(x + 0.5 * h * k2[0], y + 0.5 * h * k2[1])
    k4 = rhs(x + h * k3[0], y + h * k3[1])
    return (
        x + h / 6.0 * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0]),
        y + h / 6.0 * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1]),
    )


def _march_equivocal(
    p: GameParams, start: tuple[float, float], v_start: float, d_tau: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """March the equal-cost locus from the barrier endpoint to the y axis.

    Per step the pursuer control is solved so the tributary departure cost at
    the stepped point equals the running cost plus the step; the evader
    control is pure pursuit of the origin.  The control root is followed by
    continuity (narrow bracket around the previous step's control, widened on
    demand) because a second, spurious root branch exists near the barrier.
    Returns (points, value, u) arrays ending at the interpolated axis contact.
    """
    x, y = start
    v = v_start
    pts = [(x, y)]
    vals = [v]
    u_prev = 0.7
    ucs: list[float] = []

    def residual(u, x_, y_, v_, h_):
        xn, yn = _rk4_equivocal(p, x_, y_, u, h_)
        dep = _tributary_value_raw(p, xn, yn)
        if dep is None:
            return None
        return dep - (v_ + h_)

    def solve_u(x_, y_, v_, h_, seed):
        for half in (0.1, 0.25, 0.5, 1.0):
            lo = max(-1.0, seed - half)
            hi = min(1.0, seed + half)
            r_lo = residual(lo, x_, y_, v_, h_)
            r_hi = residual(hi, x_, y_, v_, h_)
            if r_lo is None or r_hi is None:
                continue
            if r_lo == 0.0:
                return lo
            if r_hi == 0.0:
                return hi
            if (r_lo < 0.0) == (r_hi < 0.0):
                continue
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                r_mid = residual(mid, x_, y_, v_, h_)
                if r_mid is None:
                    break
                if (r_mid < 0.0) == (r_lo < 0.0):
                    lo = mid
                    r_lo = r_mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)
        raise EqualCostBracketError(
            "equal-cost locus lost at "
            f"({x_:.6f}, {y_:.6f}), v={v_:.6f}: residuals "
            f"u=-1 -> {residual(-1.0, x_, y_, v_, h_)!r}, "
            f"u=+1 -> {residual(1.0, x_, y_, v_, h_)!r}"
        )

    guard = int(40.0 / d_tau)
    for _ in range(guard):
        h = d_tau
        u = solve_u(x, y, v, h, u_prev)
        if not ucs:
            ucs.append(u)  # endpoint sample reuses the first interior control
        xn, yn = _rk4_equivocal(p, x, y, u, h)
        u_prev = u
        x, y = xn, yn
        v += h
        pts.append((x, y))
        vals.append(v)
        ucs.append(u)
        if x <= 0.0:
            # Interpolate the exact axis contact on the last segment.
            x0, y0 = pts[-2]
            w = x0 / (x0 - x)
            pts[-1] = (0.0, y0 + w * (y - y0))
            vals[-1] = vals[-2] + w * h
            break
    else:
        raise EqualCostBracketError("equivocal march failed to reach the y axis")
    return np.asarray(pts), np.asarray(vals), np.asarray(ucs)


def compute_secondary_fan_and_equivocal(
    p: GameParams,
    barrier: SampledCurve | None = None,
    d_tau: float = 1e-3,
    n_equivocal_anchors: int = 160,
    n_universal_anchors: int = 60,
    tau_max: float = 8.0,
) -> tuple[CharacteristicField, SampledCurve]:
    """Equivocal curve plus the u = -1 fan that fills the pocket behind it.

    Characteristics are anchored on the equivocal curve (junction strategy)
    and on the negative universal line; each sample carries local time to its
    anchor, and anchors carry the game value there.  The curve's anchor value
    at the barrier endpoint is the tributary departure cost, which exceeds
    the barrier's own ride time: the barrier carries a value jump, and the
    jump is what the slow-then-fast evader exploits.
    """
    if barrier is None:
        barrier = compute_barrier(p, d_tau=d_tau)
    jx, jy = barrier.points[-1]
    v_j = _tributary_value_raw(p, jx, jy)
    if v_j is None:
        raise EqualCostBracketError(
            f"barrier endpoint ({jx:.6f}, {jy:.6f}) has no tributary departure "
            "cost; cannot anchor the equivocal curve"
        )
    e_pts, e_val, e_u = _march_equivocal(p, (jx, jy), v_j, d_tau)
    equivocal = SampledCurve(kind="equivocal", points=e_pts, tau=e_val, u=e_u)
    y_es = float(e_pts[-1, 1])
    v_contact = float(e_val[-1])
    mu = p.mu

    # --- anchors on the equivocal curve ------------------------------------
    # The junction heading pi - tau - atan(y_ES/x_ES) degenerates as the
    # junction direction turns axis-parallel, so the corner of the curve near
    # its axis contact anchors nothing; the negative-universal family owns
    # that territory (its merge-then-slide chain is the consistent play).
    angles = np.arctan2(np.abs(e_pts[:, 1]), np.maximum(e_pts[:, 0], 0.0))
    usable = np.nonzero(angles < 1.35)[0]
    n_e = int(usable[-1]) + 1 if len(usable) else len(e_pts) - 1
    idx = np.unique(np.linspace(0, n_e - 1, n_equivocal_anchors).round().astype(int))
    anchors_e = e_pts[idx]
    values_e = e_val[idx]
    a_e = np.arctan(anchors_e[:, 1] / np.maximum(anchors_e[:, 0], 1e-12))

    # --- anchors on the negative universal line ----------------------------
    y0s = np.linspace(y_es + 1e-6, -p.l - 1e-6, n_universal_anchors)
    values_u = v_contact + (y0s - y_es) / (1.0 - mu)

    chars: list[Characteristic] = []

    # Barrier polyline (thinned) for characteristic termination: retrograde
    # arcs must stop at the pocket's inner wall or they would shadow
    # primary/tributary territory in nearest-characteristic queries.
    bseg = barrier.points[:: max(1, len(barrier.points) // 80)]
    if not np.array_equal(bseg[-1], barrier.points[-1]):
        bseg = np.vstack([bseg, barrier.points[-1]])
    b0 = bseg[:-1]
    b1 = bseg[1:]

    def crosses_barrier(px, py, qx, qy):
        """Vectorized segment-vs-barrier intersection test per characteristic."""
        rx = qx - px
        ry = qy - py
        sx = (b1[:, 0] - b0[:, 0])[None, :]
        sy = (b1[:, 1] - b0[:, 1])[None, :]
        dx = b0[None, :, 0] - px[:, None]
        dy = b0[None, :, 1] - py[:, None]
        denom = rx[:, None] * sy - ry[:, None] * sx
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (dx * sy - dy * sx) / denom
            u = (dx * ry[:, None] - dy * rx[:, None]) / denom
        hit = (np.abs(denom) > 1e-14) & (t >= 0.0) & (t <= 1.0) & (u >= 0.0) & (u <= 1.0)
        return hit.any(axis=1)

    def integrate_family(x0, y0, psi_of_tau, values, anchors, terminal):
        n = len(x0)
        n_steps = int(round(tau_max / d_tau))
        x = x0.copy()
        y = y0.copy()
        alive = np.ones(n, dtype=bool)
        traj = [np.stack([x, y], axis=1)]
        tau = 0.0
        h = d_tau
        for _ in range(n_steps):
            psi1 = psi_of_tau(tau)
            psi2 = psi_of_tau(tau + 0.5 * h)
            psi3 = psi_of_tau(tau + h)

            def rhs(xv, yv, psi):
                return yv * -1.0 - mu * np.sin(psi), xv + 1.0 - mu * np.cos(psi)

            k1x, k1y = rhs(x, y, psi1)
            k2x, k2y = rhs(x + 0.5 * h * k1x, y + 0.5 * h * k1y, psi2)
            k3x, k3y = rhs(x + 0.5 * h * k2x, y + 0.5 * h * k2y, psi2)
            k4x, k4y = rhs(x + h * k3x, y + h * k3y, psi3)
            xn = x + h / 6.0 * (k1x + 2.0 * (k2x + k3x) + k4x)
            yn = y + h / 6.0 * (k1y + 2.0 * (k2y + k3y) + k4y)
            stop = (xn < 0.0) | (xn * xn + yn * yn < p.l * p.l)
            if alive.any():
                live_hit = crosses_barrier(x[alive], y[alive], xn[alive], yn[alive])
                hit = np.zeros(n, dtype=bool)
                hit[np.nonzero(alive)[0]] = live_hit
                stop = stop | hit
            xn = np.where(alive & ~stop, xn, x)
            yn = np.where(alive & ~stop, yn, y)
            alive = alive & ~stop
            x, y = xn, yn
            tau += h
            traj.append(np.stack([x, y], axis=1))
            if not alive.any():
                break
        cube = np.stack(traj, axis=1)  # (n, steps+1, 2)
        taus = np.arange(cube.shape[1]) * h
        for i in range(n):
            # Trim the frozen tail left by the termination mask.
            d = np.linalg.norm(np.diff(cube[i], axis=0), axis=1)
            live = int(np.searchsorted(np.cumsum(d[::-1]) > 0.0, True))
            end = cube.shape[1] - live if live else cube.shape[1]
            end = max(end, 2)
            chars.append(
                Characteristic(
                    points=cube[i, :end],
                    tau=taus[:end].copy(),
                    terminal=terminal,
                    anchor_value=float(values[i]),
                    anchor=(float(anchors[i][0]), float(anchors[i][1])),
                )
            )

    # Junction-strategy family: psi = pi - tau - atan(y_ES / x_ES).
    integrate_family(
        anchors_e[:, 0].astype(float),
        anchors_e[:, 1].astype(float),
        lambda tau: math.pi - tau - a_e,
        values_e,
        anchors_e,
        "equivocal",
    )
    # Rear-line family: psi = -tau from (0, y0).
    zeros = np.zeros_like(y0s)
    integrate_family(
        zeros,
        y0s.astype(float),
        lambda tau: np.full_like(y0s, -tau),
        values_u,
        np.stack([zeros, y0s], axis=1),
        "negative_universal",
    )
    fan = CharacteristicField(
        family="secondary",
        terminal_label="equivocal curve / negative universal line",
        trajectories=chars,
    )
    return fan, equivocal


# ---------------------------------------------------------------------------
# nearest-characteristic lookup
# ---------------------------------------------------------------------------


class _CurveIndex:
    """Bucketed nearest-sample lookup over a set of polylines."""

    def __init__(self, curves: list[np.ndarray], cell: float = 0.08):
        self.curves = curves
        pts = np.concatenate(curves, axis=0)
        owner = np.concatenate(
            [np.full(len(c), i, dtype=np.int32) for i, c in enumerate(curves)]
        )
        local = np.concatenate([np.arange(len(c), dtype=np.int32) for c in curves])
        self.pts = pts
        self.owner = owner
        self.local = local
        self.cell = cell
        key = np.floor(pts / cell).astype(np.int64)
        self.buckets: dict[tuple[int, int], np.ndarray] = {}
        order = np.lexsort((key[:, 1], key[:, 0]))
        sk = key[order]
        splits = np.nonzero((np.diff(sk[:, 0]) != 0) | (np.diff(sk[:, 1]) != 0))[0] + 1
        for chunk in np.split(order, splits):
            k = (int(key[chunk[0], 0]), int(key[chunk[0], 1]))
            self.buckets[k] = chunk

    def nearest(self, x: float, y: float) -> tuple[int, int]:
        """(curve id, local sample id) of the nearest stored sample."""
        ci = int(math.floor(x / self.cell))
        cj = int(math.floor(y / self.cell))
        for ring in range(1, 40):
            cand = []
            for i in range(ci - ring + 1, ci + ring):
                for j in range(cj - ring + 1, cj + ring):
                    got = self.buckets.get((i, j))
                    if got is not None:
                        cand.append(got)
            if cand:
                ids = np.concatenate(cand)
                d = self.pts[ids]
                k = int(ids[np.argmin((d[:, 0] - x) ** 2 + (d[:, 1] - y) ** 2)])
                # A sample one ring farther out can still be closer; accept
                # once the ring radius exceeds the best distance found.
                best = math.hypot(self.pts[k, 0] - x, self.pts[k, 1] - y)
                if best <= (ring - 0.5) * self.cell or ring >= 39:
                    return int(self.owner[k]), int(self.local[k])
        raise RuntimeError("nearest-curve query failed")

    def nearest_two(self, x: float, y: float) -> list[tuple[int, int, float]]:
        """Up to two (curve id, sample id, distance) entries from distinct curves."""
        ci = int(math.floor(x / self.cell))
        cj = int(math.floor(y / self.cell))
        for ring in range(1, 40):
            cand = []
            for i in range(ci - ring + 1, ci + ring):
                for j in range(cj - ring + 1, cj + ring):
                    got = self.buckets.get((i, j))
                    if got is not None:
                        cand.append(got)
            if not cand:
                continue
            ids = np.concatenate(cand)
            d = self.pts[ids]
            d2 = (d[:, 0] - x) ** 2 + (d[:, 1] - y) ** 2
            order = np.argsort(d2)
            best = float(math.sqrt(d2[order[0]]))
            if best > (ring - 0.5) * self.cell and ring < 39:
                continue
            out = []
            seen = set()
            for k in order:
                o = int(self.owner[ids[k]])
                if o in seen:
                    continue
                seen.add(o)
                out.append((o, int(self.local[ids[k]]), float(math.sqrt(d2[k]))))
                if len(out) == 2:
                    return out
            return out
        raise RuntimeError("nearest-curve query failed")

    def distance_within(self, x: float, y: float, radius: float) -> float | None:
        """Distance to the nearest sample if within ~radius, else None.

        Only inspects the 3x3 bucket neighbourhood, so ``radius`` must not
        exceed the bucket cell size.
        """
        ci = int(math.floor(x / self.cell))
        cj = int(math.floor(y / self.cell))
        best = None
        for i in (ci - 1, ci, ci + 1):
            for j in (cj - 1, cj, cj + 1):
                got = self.buckets.get((i, j))
                if got is None:
                    continue
                d = self.pts[got]
                m = float(((d[:, 0] - x) ** 2 + (d[:, 1] - y) ** 2).min())
                if best is None or m < best:
                    best = m
        if best is None:
            return None
        best = math.sqrt(best)
        return best if best <= radius else None


def _project_tau(points: np.ndarray, tau: np.ndarray, j: int, x: float, y: float) -> float:
    """Arc-length projection of (x, y) onto the polyline around sample j."""
    best_tau = float(tau[j])
    best_d2 = (points[j, 0] - x) ** 2 + (points[j, 1] - y) ** 2
    for a in (j - 1, j):
        if a < 0 or a + 1 >= len(points):
            continue
        px, py = points[a]
        qx, qy = points[a + 1]
        vx, vy = qx - px, qy - py
        vv = vx * vx + vy * vy
        if vv <= 0.0:
            continue
        t = ((x - px) * vx + (y - py) * vy) / vv
        t = min(max(t, 0.0), 1.0)
        cx, cy = px + t * vx, py + t * vy
        d2 = (cx - x) ** 2 + (cy - y) ** 2
        if d2 < best_d2:
            best_d2 = d2
            best_tau = float(tau[a] + t * (tau[a + 1] - tau[a]))
    return best_tau


def _project_point(points: np.ndarray, j: int, x: float, y: float) -> tuple[float, float, float]:
    """Foot of (x, y) on the polyline around sample j, with its distance."""
    bx, by = float(points[j, 0]), float(points[j, 1])
    best_d2 = (bx - x) ** 2 + (by - y) ** 2
    for a in (j - 1, j):
        if a < 0 or a + 1 >= len(points):
            continue
        px, py = points[a]
        qx, qy = points[a + 1]
        vx, vy = qx - px, qy - py
        vv = vx * vx + vy * vy
        if vv <= 0.0:
            continue
        t = ((x - px) * vx + (y - py) * vy) / vv
        t = min(max(t, 0.0), 1.0)
        cx, cy = px + t * vx, py + t * vy
        d2 = (cx - x) ** 2 + (cy - y) ** 2
        if d2 < best_d2:
            best_d2 = d2
            bx, by = cx, cy
    return bx, by, math.sqrt(best_d2)


def _point_in_polygon(px: np.ndarray, py: np.ndarray, x: float, y: float) -> bool:
    """Even-odd ray cast; polygon arrays are closed implicitly."""
    x1 = px
    y1 = py
    x2 = np.roll(px, -1)
    y2 = np.roll(py, -1)
    cond = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xs = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    hits = cond & (xs > x)
    return bool(np.count_nonzero(hits) % 2)


# ---------------------------------------------------------------------------
# the assembled geometry
# ---------------------------------------------------------------------------


@dataclass
class SolutionGeometry:
    """Immutable solution geometry for one parameter pair (x >= 0, mirrored on query)."""

    params: GameParams
    phi_bar: float
    barrier: SampledCurve
    equivocal: SampledCurve
    primary_fan: CharacteristicField
    secondary_fan: CharacteristicField
    y_es: float
    value_at_contact: float
    tau_focal: float
    _pocket_x: np.ndarray = field(repr=False, default=None)
    _pocket_y: np.ndarray = field(repr=False, default=None)
    _petal_x: np.ndarray = field(repr=False, default=None)
    _petal_y: np.ndarray = field(repr=False, default=None)
    _pocket_bbox: tuple = field(repr=False, default=None)
    _petal_bbox: tuple = field(repr=False, default=None)
    _wall_x: np.ndarray = field(repr=False, default=None)
    _wall_y: np.ndarray = field(repr=False, default=None)
    _primary_index: _CurveIndex = field(repr=False, default=None)
    _secondary_index: _CurveIndex = field(repr=False, default=None)
    _equivocal_index: _CurveIndex = field(repr=False, default=None)
    _wall_index: _CurveIndex = field(repr=False, default=None)

    # -- region tests --------------------------------------------------------

    def pocket_contains(self, x: float, y: float) -> bool:
        """True inside the pocket bounded by barrier, equivocal curve, axis and circle."""
        if x < 0.0:
            x = -x
        bx = self._pocket_bbox
        if not (bx[0] <= x <= bx[1] and bx[2] <= y <= bx[3]):
            return False
        return _point_in_polygon(self._pocket_x, self._pocket_y, x, y)

    def petal_contains(self, x: float, y: float) -> bool:
        if x < 0.0:
            x = -x
        bx = self._petal_bbox
        if not (bx[0] <= x <= bx[1] and bx[2] <= y <= bx[3]):
            return False
        return _point_in_polygon(self._petal_x, self._petal_y, x, y)

    def classify(
        self, s: RelState, axis_band: float = SIDE_DEADBAND, wall_band: float = 0.0
    ) -> Region:
        """Region tag of a relative state (x < 0 queries are mirrored).

        ``axis_band`` widens the universal-line tests and ``wall_band``
        widens the pocket to include a strip just outside its wall; the
        simulator passes step-scaled bands so feedback chatter cannot flip a
        trajectory off a line or off the pocket wall it is committed to.
        Geometric queries use the defaults (dead band 1e-6).
        """
        p = self.params
        x, y = s.x, s.y
        mirrored = x < 0.0
        if mirrored:
            x = -x
        if x * x + y * y <= p.l * p.l:
            return Region(CAPTURED, mirrored)
        if x <= axis_band:
            if y > p.l:
                return Region(UNIVERSAL_POSITIVE, mirrored)
            if y <= self.y_es:
                return Region(DISPERSAL, mirrored)
            return Region(UNIVERSAL_NEGATIVE, mirrored)
        bx = self._pocket_bbox
        near_box = (
            bx[0] - wall_band <= x <= bx[1] + wall_band
            and bx[2] - wall_band <= y <= bx[3] + wall_band
        )
        if near_box:
            d_eq = self._equivocal_index.distance_within(x, y, 0.05)
            if d_eq is not None and d_eq < SIDE_DEADBAND:
                return Region(EQUIVOCAL, mirrored)
            if self.pocket_contains(x, y):
                return Region(SECONDARY, mirrored)
            if wall_band > 0.0:
                d_wall = self._wall_index.distance_within(x, y, min(wall_band, 0.06))
                if d_wall is not None:
                    # On-wall states belong to the pocket's closure.
                    return Region(SECONDARY, mirrored)
        if self.petal_contains(x, y):
            return Region(PRIMARY, mirrored)
        return Region(TRIBUTARY, mirrored)

    def _distance_to_equivocal(self, x: float, y: float) -> float:
        pts = self.equivocal.points
        step = max(1, len(pts) // 400)
        sub = pts[::step]
        d2 = (sub[:, 0] - x) ** 2 + (sub[:, 1] - y) ** 2
        j = int(np.argmin(d2)) * step
        lo = max(0, j - step)
        hi = min(len(pts), j + step + 1)
        seg = pts[lo:hi]
        d2 = (seg[:, 0] - x) ** 2 + (seg[:, 1] - y) ** 2
        return float(math.sqrt(d2.min()))

    def wall_distance(self, x: float, y: float) -> float:
        """Distance to the pocket wall (barrier plus equivocal chain).

        Uses the full-resolution wall samples, so the result is accurate to
        the construction step (about 1e-3), not to the thinned polygon used
        by the membership tests.
        """
        if x < 0.0:
            x = -x
        d = self._wall_index.distance_within(x, y, 0.08)
        if d is not None:
            return d
        d2 = (self._wall_x - x) ** 2 + (self._wall_y - y) ** 2
        return float(math.sqrt(d2.min()))

    def wall_section(self, x: float, y: float) -> str:
        """Which wall section a near-wall point belongs to: barrier or equivocal."""
        if x < 0.0:
            x = -x
        db2 = ((self.barrier.points[:, 0] - x) ** 2 + (self.barrier.points[:, 1] - y) ** 2).min()
        de2 = ((self.equivocal.points[:, 0] - x) ** 2 + (self.equivocal.points[:, 1] - y) ** 2).min()
        return "barrier" if db2 <= de2 else "equivocal"

    # -- characteristic queries ----------------------------------------------

    def primary_data(self, x: float, y: float) -> tuple[float, float]:
        """(phi, tau) of the primary characteristic sample nearest to (x, y)."""
        ci, j = self._primary_index.nearest(x, y)
        ch = self.primary_fan.trajectories[ci]
        tau = _project_tau(ch.points, ch.tau, j, x, y)
        return ch.phi, tau

    def secondary_data(self, x: float, y: float) -> tuple[Characteristic, float]:
        """(characteristic, local tau) for the nearest secondary sample."""
        ci, j = self._secondary_index.nearest(x, y)
        ch = self.secondary_fan.trajectories[ci]
        tau = _project_tau(ch.points, ch.tau, j, x, y)
        return ch, tau

    def equivocal_data(self, x: float, y: float) -> tuple[float, float]:
        """(value, pursuer control) interpolated at the nearest equivocal point."""
        pts = self.equivocal.points
        d2 = (pts[:, 0] - x) ** 2 + (pts[:, 1] - y) ** 2
        j = int(np.argmin(d2))
        v = _project_tau(pts, self.equivocal.tau, j, x, y)
        u = _project_tau(pts, self.equivocal.u, j, x, y)
        return v, u

    # -- value ----------------------------------------------------------------

    def value(self, s: RelState) -> float:
        """Equilibrium time to capture from a relative state."""
        p = self.params
        region = self.classify(s)
        x, y = abs(s.x), s.y
        tag = region.tag
        if tag == CAPTURED:
            return 0.0
        if tag == UNIVERSAL_POSITIVE:
            return (y - p.l) / (1.0 - p.mu)
        if tag == UNIVERSAL_NEGATIVE:
            return self.value_at_contact + (y - self.y_es) / (1.0 - p.mu)
        if tag in (TRIBUTARY, DISPERSAL):
            v = _tributary_value_raw(p, x, y)
            if v is None:
                raise RuntimeError(f"turn alignment unexpectedly missing at ({x}, {y})")
            return v
        if tag == PRIMARY:
            _, tau = self.primary_data(x, y)
            return tau
        if tag == EQUIVOCAL:
            v, _ = self.equivocal_data(x, y)
            return v
        return self._secondary_value(x, y)

    def _secondary_chain_value(self, x: float, y: float) -> float:
        """Inverse-distance blend of the two nearest characteristics' chains."""
        pairs = self._secondary_index.nearest_two(x, y)
        num = 0.0
        den = 0.0
        for ci, j, _ in pairs:
            ch = self.secondary_fan.trajectories[ci]
            tau = _project_tau(ch.points, ch.tau, j, x, y)
            _, _, d = _project_point(ch.points, j, x, y)
            w = 1.0 / max(d, 1e-12)
            num += w * (ch.anchor_value + tau)
            den += w
        return num / den

    def _secondary_value(self, x: float, y: float, h: float = 4e-3) -> float:
        """Pocket value: ride the hard-left field to the wall, then price the
        departure in closed form.

        Between sampled characteristics the chain interpolation carries a
        first-order cross-characteristic gap (worst where the dive field
        spreads, near the curve's descent), so the value integrates the dive
        itself: evader headings from the nearest characteristic, u = -1,
        until the trajectory leaves the pocket or merges on the rear line.
        """
        p = self.params
        mu = p.mu
        t = 0.0
        guard = int(10.0 / h)
        for _ in range(guard):
            if x <= 1e-9:
                break
            ch, tau = self.secondary_data(x, y)
            if ch.terminal == "equivocal":
                ax, ay = ch.anchor
                psi = math.pi - tau - math.atan(ay / ax)
            else:
                psi = -tau
            xn, yn = _rk4_fixed(x, y, -1.0, psi, mu, h)
            if not self.pocket_contains(xn, yn):
                # Bisect the wall crossing and price the tributary departure.
                lo, hi = 0.0, 1.0
                for _ in range(40):
                    mid = 0.5 * (lo + hi)
                    if self.pocket_contains(x + mid * (xn - x), y + mid * (yn - y)):
                        lo = mid
                    else:
                        hi = mid
                w = 0.5 * (lo + hi)
                cx = x + w * (xn - x)
                cy = y + w * (yn - y)
                dep = _tributary_value_raw(p, max(cx, 0.0), cy)
                if dep is None:
                    return self._secondary_chain_value(x, y)
                return t + w * h + dep
            x, y = xn, yn
            t += h
        # Reached the rear line (or the guard): continue along the rear
        # chain; x <= 0 with y above the contact merges the negative
        # universal line, below it the mirror turn takes over.
        if y > self.y_es:
            return t + self.value_at_contact + (y - self.y_es) / (1.0 - mu)
        dep = _tributary_value_raw(p, 0.0, y)
        return t + dep if dep is not None else self._secondary_chain_value(x, y)

    # -- export ----------------------------------------------------------------

    def curve_rows(self):
        """Rows for the documented geometry CSV layout."""
        for name, curve in (("barrier", self.barrier), ("equivocal", self.equivocal)):
            for (x, y), tau in zip(curve.points, curve.tau):
                yield name, 0, tau, x, y
        for fan in (self.primary_fan, self.secondary_fan):
            for bid, ch in enumerate(fan.trajectories):
                for (x, y), tau in zip(ch.points, ch.tau):
                    yield fan.family, bid, tau, x, y

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(GEOMETRY_CSV_HEADER.split(","))
            for family, bid, tau, x, y in self.curve_rows():
                w.writerow([family, bid, f"{tau:.9g}", f"{x:.9g}", f"{y:.9g}"])


def classify_region(geometry: SolutionGeometry, s: RelState) -> Region:
    """Module-level alias matching the geometry method."""
    return geometry.classify(s)


def value(geometry: SolutionGeometry, s: RelState) -> float:
    return geometry.value(s)


def tributary_value(geometry: SolutionGeometry, s: RelState) -> float:
    """Closed-form capture time for a tributary-region state.

    Raises if the state does not classify as tributary (or dispersal, whose
    mirror-tied play is tributary on either branch).
    """
    region = geometry.classify(s)
    if region.tag not in (TRIBUTARY, DISPERSAL):
        raise ValueError(f"state {s} classifies as {region.tag}, not tributary")
    v = _tributary_value_raw(geometry.params, abs(s.x), s.y)
    if v is None:
        raise ValueError(f"state {s} has no turn alignment")
    return v


def _build_polygons(geom_args: dict) -> dict:
    p: GameParams = geom_args["params"]
    barrier: SampledCurve = geom_args["barrier"]
    equivocal: SampledCurve = geom_args["equivocal"]
    y_es = geom_args["y_es"]
    phi_bar = geom_args["phi_bar"]
    tau_focal = geom_args["tau_focal"]

    def thin(a: np.ndarray, n: int) -> np.ndarray:
        if len(a) <= n:
            return a
        idx = np.unique(np.linspace(0, len(a) - 1, n).round().astype(int))
        return a[idx]

    bar = thin(barrier.points, 400)
    eq = thin(equivocal.points, 500)
    arc_angles = np.linspace(math.pi, phi_bar, 120)
    arc = np.stack([p.l * np.sin(arc_angles), p.l * np.cos(arc_angles)], axis=1)
    pocket = np.concatenate(
        [bar, eq, np.array([[0.0, y_es], [0.0, -p.l]]), arc], axis=0
    )
    wall = np.concatenate([bar, eq], axis=0)
    # Petal: pre-focal barrier sub-arc, innermost fan member reversed,
    # usable-part arc.  The primary family closes onto the barrier at the
    # focal time, so only that sub-arc bounds the petal.
    fan: CharacteristicField = geom_args["primary_fan"]
    k_focal = int(np.searchsorted(barrier.tau, tau_focal))
    bar_focal = thin(barrier.points[: max(k_focal, 2)], 300)
    inner = thin(fan.trajectories[0].points, 300)
    up_angles = np.linspace(phi_bar, 0.0, 60)
    up_arc = np.stack([p.l * np.sin(up_angles), p.l * np.cos(up_angles)], axis=1)
    petal = np.concatenate([bar_focal, inner[::-1], up_arc[1:]], axis=0)
    pad = 1e-9
    return {
        "_pocket_x": pocket[:, 0],
        "_pocket_y": pocket[:, 1],
        "_petal_x": petal[:, 0],
        "_petal_y": petal[:, 1],
        "_wall_x": wall[:, 0],
        "_wall_y": wall[:, 1],
        "_pocket_bbox": (
            float(pocket[:, 0].min()) - pad,
            float(pocket[:, 0].max()) + pad,
            float(pocket[:, 1].min()) - pad,
            float(pocket[:, 1].max()) + pad,
        ),
        "_petal_bbox": (
            float(petal[:, 0].min()) - pad,
            float(petal[:, 0].max()) + pad,
            float(petal[:, 1].min()) - pad,
            float(petal[:, 1].max()) + pad,
        ),
    }


def solve(
    p: GameParams,
    n_phi: int = 200,
    d_tau: float = 1e-3,
    n_equivocal_anchors: int = 160,
    n_universal_anchors: int = 60,
) -> SolutionGeometry:
    """Construct the full solution geometry for ``p``."""
    barrier = compute_barrier(p, d_tau=d_tau)
    tau_focal = focal_time(p, barrier)
    fan = compute_primary_fan(p, n_phi=n_phi, d_tau=d_tau, tau_end=tau_focal)
    secondary, equivocal = compute_secondary_fan_and_equivocal(
        p,
        barrier=barrier,
        d_tau=d_tau,
        n_equivocal_anchors=n_equivocal_anchors,
        n_universal_anchors=n_universal_anchors,
    )
    args = {
        "params": p,
        "phi_bar": bup_angle(p),
        "barrier": barrier,
        "equivocal": equivocal,
        "primary_fan": fan,
        "secondary_fan": secondary,
        "y_es": float(equivocal.points[-1, 1]),
        "value_at_contact": float(equivocal.tau[-1]),
        "tau_focal": tau_focal,
    }
    args.update(_build_polygons(args))
    args["_primary_index"] = _CurveIndex([ch.points for ch in fan.trajectories])
    args["_secondary_index"] = _CurveIndex([ch.points for ch in secondary.trajectories])
    args["_equivocal_index"] = _CurveIndex([equivocal.points])
    # Full-resolution wall index: band tests and wall distances must resolve
    # below the simulator's step-scaled bands, which the thinned polygon
    # points cannot.
    args["_wall_index"] = _CurveIndex([barrier.points, equivocal.points])
    return SolutionGeometry(**args)


_GEOMETRY_CACHE: dict[tuple, SolutionGeometry] = {}


def get_geometry(p: GameParams, n_phi: int = 200, d_tau: float = 1e-3) -> SolutionGeometry:
    """Memoized :func:`solve`; geometries are immutable and safe to share."""
    key = (round(p.mu, 12), round(p.l, 12), n_phi, round(d_tau, 12))
    geom = _GEOMETRY_CACHE.get(key)
    if geom is None:
        geom = solve(p, n_phi=n_phi, d_tau=d_tau)
        _GEOMETRY_CACHE[key] = geom
    return geom
