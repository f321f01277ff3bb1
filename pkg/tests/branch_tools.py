"""Shared test helpers: explicit branch simulations at the equivocal curve.

These re-simulate the two escape options from a curve point with their
controls forced, independently of the region-dispatched feedback, so the
equal-cost property is checked against trajectories rather than against the
construction's own bookkeeping.
"""

import math

from chauffeur.core import rel_rhs
from chauffeur.solution import turn_alignment


def _rk4(x, y, u, psi, mu, h):
    k1 = rel_rhs(x, y, u, psi, mu)
    k2 = rel_rhs(x + 0.5 * h * k1[0], y + 0.5 * h * k1[1], u, psi, mu)
    k3 = rel_rhs(x + 0.5 * h * k2[0], y + 0.5 * h * k2[1], u, psi, mu)
    k4 = rel_rhs(x + h * k3[0], y + h * k3[1], u, psi, mu)
    return (
        x + h / 6.0 * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0]),
        y + h / 6.0 * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1]),
    )


def depart_capture_time(p, x, y, dt, t_max=30.0):
    """Capture time of the turn-then-chase pair played from (x, y)."""
    t = 0.0
    mu = p.mu
    l2 = p.l * p.l
    while t < t_max:
        band = 3.0 * dt * max(1.0, abs(y))
        if abs(x) <= band and y > p.l:
            u, psi = 0.0, 0.0
        else:
            res = turn_alignment(abs(x), y)
            if res is None:
                u, psi = 1.0, 0.0
            else:
                u, psi = 1.0, res[0]
            if x < 0.0:
                u, psi = -u, -psi
        xn, yn = _rk4(x, y, u, psi, mu, dt)
        g0 = x * x + y * y - l2
        g1 = xn * xn + yn * yn - l2
        if g0 > 0.0 >= g1:
            return t + dt * g0 / (g0 - g1)
        x, y = xn, yn
        t += dt
    return None


def ride_equivocal(p, geom, k_start, ride, dt):
    """Follow the on-curve pair for ``ride`` time units from sample k_start.

    The curve is ridden toward the barrier endpoint (decreasing value);
    controls are the stored pursuer control interpolated at the nearest curve
    sample and pure pursuit for the evader.  Returns the end point.
    """
    pts = geom.equivocal.points
    ucs = geom.equivocal.u
    x, y = float(pts[k_start, 0]), float(pts[k_start, 1])
    steps = int(round(ride / dt))
    j = k_start
    for _ in range(steps):
        lo = max(0, j - 200)
        hi = min(len(pts), j + 200)
        d2 = (pts[lo:hi, 0] - x) ** 2 + (pts[lo:hi, 1] - y) ** 2
        j = lo + int(d2.argmin())
        u = float(ucs[j])
        psi = math.atan2(-x, -y)
        x, y = _rk4(x, y, u, psi, p.mu, dt)
    return x, y


def branch_costs(p, geom, k, dt=1e-4, ride=0.4):
    """(stay, depart) capture times from equivocal sample k.

    depart: turn-then-chase immediately.  stay: ride the curve toward the
    barrier endpoint for ``ride`` time units, then depart from there.
    """
    x, y = geom.equivocal.points[k]
    depart = depart_capture_time(p, float(x), float(y), dt)
    rx, ry = ride_equivocal(p, geom, k, ride, dt)
    tail = depart_capture_time(p, rx, ry, dt)
    stay = None if tail is None else ride + tail
    assert stay is not None and depart is not None
    return stay, depart
