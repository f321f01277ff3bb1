import math

import pytest

from chauffeur.core import Controls, RelState
from chauffeur.sim import (
    TRAJECTORY_CSV_HEADER,
    Event,
    Scenario,
    detect_events,
    run_closed_loop,
    step,
)
from chauffeur.strategy import EvaderPolicy


class TestStep:
    def test_zero_speed_evader_straight_pursuer(self):
        # ydot = -1 exactly, so one step moves y down by exactly dt.
        s = step(RelState(0.0, 2.0), Controls(u=0.0, psi=0.0, mu_cmd=0.0), 1e-3)
        assert s.x == 0.0
        assert abs(s.y - (2.0 - 1e-3)) < 1e-15

    def test_richardson_quartic_convergence(self):
        # Fixed controls over a 10-unit horizon: halving dt shrinks the
        # endpoint change by roughly 2^4.
        def endpoint(dt):
            s = RelState(0.5, 1.5)
            c = Controls(u=1.0, psi=1.0, mu_cmd=0.3)
            for _ in range(int(round(10.0 / dt))):
                s = step(s, c, dt)
            return s

        a = endpoint(4e-3)
        b = endpoint(2e-3)
        c = endpoint(1e-3)
        d1 = math.hypot(a.x - b.x, a.y - b.y)
        d2 = math.hypot(b.x - c.x, b.y - c.y)
        assert d1 < 16.0 * d2 * 2.0
        assert d1 > 16.0 * d2 / 4.0

    def test_rotation_conserves_radius(self):
        # A resting evader under u = 1 traces a circle about (1, 0) in the
        # relative frame; the radius is conserved to 1e-8 over a period.
        s = RelState(0.0, 1.0)
        c = Controls(u=1.0, psi=0.0, mu_cmd=0.0)
        r0 = math.hypot(s.x - 1.0, s.y)
        n = int(round(2.0 * math.pi / 1e-3))
        worst = 0.0
        for _ in range(n):
            s = step(s, c, 1e-3)
            worst = max(worst, abs(math.hypot(s.x - 1.0, s.y) - r0))
        assert worst < 1e-8

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ValueError):
            step(RelState(0.0, 2.0), Controls(u=0.0, psi=0.0, mu_cmd=0.0), 0.0)


class TestDetectEvents:
    def test_capture_interpolation_on_monotone_radius(self, geom_03):
        evs = detect_events((0.0, 0.0, 0.5005), (1e-3, 0.0, 0.4995), geom_03)
        kinds = [e.kind for e in evs]
        assert kinds[-1] == "capture"
        e = evs[-1]
        r = math.hypot(*e.location)
        assert abs(r - 0.5) < 1e-6
        assert 0.0 < e.t < 1e-3

    def test_no_events_inside_one_region(self, geom_03):
        assert detect_events((0.0, 2.0, 1.0), (1e-3, 2.0005, 1.0005), geom_03) == []

    def test_axis_cross_interpolated(self, geom_03):
        evs = detect_events((0.0, 0.001, 2.0), (1e-3, -0.001, 2.0), geom_03)
        assert [e.kind for e in evs] == ["axis_cross"]
        assert abs(evs[0].t - 5e-4) < 1e-12

    def test_wall_cross_located_on_wall(self, geom_03):
        # Straddle the pocket wall horizontally near the reference start point.
        y = -0.214
        evs = detect_events((0.0, 2.3, y), (1e-3, 2.6, y), geom_03)
        wall = [e for e in evs if e.kind == "barrier_cross"]
        assert len(wall) == 1
        wx, wy = wall[0].location
        assert geom_03.wall_distance(wx, wy) < 5e-3


class TestRunClosedLoop:
    def test_line_chase_capture_time_exact(self, params_03, geom_03):
        # From the positive universal line the chase is linear: capture at
        # (y0 - l) / (1 - mu) exactly (integration and interpolation are both
        # exact on linear motion).
        sc = Scenario(
            params_truth=params_03,
            params_low=params_03,
            initial_rel=RelState(0.0, 2.0),
            evader_policy=EvaderPolicy(kind="truthful"),
            pursuer_mode="informed",
            dt=1e-3,
            t_max=10.0,
        )
        tr = run_closed_loop(sc, geom_03, geom_03)
        assert tr.capture_time is not None
        assert abs(tr.capture_time - 1.5 / 0.7) < 1e-9

    def test_reference_truthful_and_deceptive_runs(self, params_03, params_02, geom_03, geom_02):
        s0 = RelState(2.152, -0.214)
        sc1 = Scenario(
            params_truth=params_03,
            params_low=params_02,
            initial_rel=s0,
            evader_policy=EvaderPolicy(kind="truthful"),
            pursuer_mode="informed",
            dt=1e-3,
            t_max=40.0,
        )
        tr1 = run_closed_loop(sc1, geom_03, geom_02)
        sc2 = Scenario(
            params_truth=params_03,
            params_low=params_02,
            initial_rel=s0,
            evader_policy=EvaderPolicy(kind="deceptive", mu_low=0.2, mu_high=0.3),
            pursuer_mode="estimating",
            dt=1e-3,
            t_max=40.0,
        )
        tr2 = run_closed_loop(sc2, geom_03, geom_02)
        assert tr1.capture_time is not None and tr2.capture_time is not None
        # The deceptive run strictly prolongs capture; quantitative bands are
        # exercised by the acceptance suite.
        assert tr2.capture_time > tr1.capture_time
        assert sum(1 for e in tr2.events if e.kind == "switch") == 1
        # The deceptive run contacts the barrier arc exactly once (the
        # equivocal exit is a region change, not a barrier contact).
        assert sum(1 for e in tr2.events if e.kind == "barrier_cross") == 1

    def test_determinism_bitwise(self, params_03, params_02, geom_03, geom_02):
        def run():
            sc = Scenario(
                params_truth=params_03,
                params_low=params_02,
                initial_rel=RelState(2.152, -0.214),
                evader_policy=EvaderPolicy(kind="deceptive", mu_low=0.2, mu_high=0.3),
                pursuer_mode="estimating",
                dt=1e-3,
                t_max=40.0,
            )
            return run_closed_loop(sc, geom_03, geom_02)

        a = run()
        b = run()
        assert a.capture_time == b.capture_time
        assert a.x == b.x and a.y == b.y and a.psi == b.psi and a.u == b.u

    def test_capture_location_on_circle(self, params_03, geom_03, rng):
        for _ in range(5):
            x = rng.uniform(0.8, 2.5)
            y = rng.uniform(-1.5, 1.5)
            sc = Scenario(
                params_truth=params_03,
                params_low=params_03,
                initial_rel=RelState(x, y),
                evader_policy=EvaderPolicy(kind="truthful"),
                pursuer_mode="informed",
                dt=1e-3,
                t_max=120.0,
            )
            tr = run_closed_loop(sc, geom_03, geom_03)
            assert tr.capture_time is not None
            r = math.hypot(*tr.capture_point)
            assert abs(r - params_03.l) < 1e-6
            assert tr.events[-1].kind == "capture"
            assert tr.t[-1] == tr.capture_time

    def test_terminal_angle_in_usable_part(self, params_03, geom_03, rng):
        phi_bar = math.acos(params_03.mu)
        for _ in range(8):
            x = rng.uniform(-2.5, 2.5)
            y = rng.uniform(-2.0, 2.0)
            if x * x + y * y <= 0.3:
                continue
            sc = Scenario(
                params_truth=params_03,
                params_low=params_03,
                initial_rel=RelState(x, y),
                evader_policy=EvaderPolicy(kind="truthful"),
                pursuer_mode="informed",
                dt=1e-3,
                t_max=120.0,
            )
            tr = run_closed_loop(sc, geom_03, geom_03)
            assert tr.capture_time is not None
            cx, cy = tr.capture_point
            phi = math.atan2(abs(cx), cy)
            assert -0.02 <= phi <= phi_bar + 0.02

    def test_deceptive_run_mirror_symmetric(self, params_03, params_02, geom_03, geom_02):
        def run(sign):
            sc = Scenario(
                params_truth=params_03,
                params_low=params_02,
                initial_rel=RelState(sign * 2.152, -0.214),
                evader_policy=EvaderPolicy(kind="deceptive", mu_low=0.2, mu_high=0.3),
                pursuer_mode="estimating",
                dt=1e-3,
                t_max=60.0,
            )
            return run_closed_loop(sc, geom_03, geom_02).capture_time

        assert run(+1) == run(-1)

    def test_petal_capture_lands_on_characteristic_angle(self, params_03, geom_03):
        # From a point on a primary characteristic, equilibrium play captures
        # at that characteristic's usable-part angle in its stored time.
        phi_bar = math.acos(params_03.mu)
        for ch_i in (40, 120, 180):
            ch = geom_03.primary_fan.trajectories[ch_i]
            k = len(ch.points) // 2
            s = RelState(*ch.points[k])
            sc = Scenario(
                params_truth=params_03,
                params_low=params_03,
                initial_rel=s,
                evader_policy=EvaderPolicy(kind="truthful"),
                pursuer_mode="informed",
                dt=1e-3,
                t_max=10.0,
            )
            tr = run_closed_loop(sc, geom_03, geom_03)
            assert abs(tr.capture_time - ch.tau[k]) < 1e-3
            cx, cy = tr.capture_point
            phi = math.atan2(abs(cx), cy)
            assert abs(phi - ch.phi) < 5e-3
            assert 0.0 <= phi <= phi_bar

    def test_estimating_truthful_matches_informed(self, params_03, params_02, geom_03, geom_02):
        # The estimator converges on its first observation, so the two
        # baselines coincide.
        def run(mode):
            sc = Scenario(
                params_truth=params_03,
                params_low=params_02,
                initial_rel=RelState(1.8, 1.2),
                evader_policy=EvaderPolicy(kind="truthful"),
                pursuer_mode=mode,
                dt=1e-3,
                t_max=40.0,
            )
            return run_closed_loop(sc, geom_03, geom_02).capture_time

        assert run("informed") == run("estimating")

    def test_scenario_validation(self, params_03, params_02):
        with pytest.raises(ValueError, match="capture circle"):
            Scenario(
                params_truth=params_03,
                params_low=params_02,
                initial_rel=RelState(0.1, 0.1),
                evader_policy=EvaderPolicy(kind="truthful"),
            )
        with pytest.raises(ValueError, match="dt"):
            Scenario(
                params_truth=params_03,
                params_low=params_02,
                initial_rel=RelState(2.0, 0.0),
                evader_policy=EvaderPolicy(kind="truthful"),
                dt=0.0,
            )

    def test_samples_view_and_csv(self, params_03, geom_03, tmp_path):
        sc = Scenario(
            params_truth=params_03,
            params_low=params_03,
            initial_rel=RelState(0.0, 1.2),
            evader_policy=EvaderPolicy(kind="truthful"),
            pursuer_mode="informed",
            dt=1e-3,
            t_max=5.0,
        )
        tr = run_closed_loop(sc, geom_03, geom_03)
        t0, s0, c0, mu_hat0, tag0 = next(iter(tr.samples()))
        assert t0 == 0.0 and isinstance(s0, RelState) and isinstance(c0, Controls)
        path = tmp_path / "traj.csv"
        tr.to_csv(str(path))
        with open(path) as fh:
            assert fh.readline().strip() == TRAJECTORY_CSV_HEADER
            line = fh.readline().strip().split(",")
        assert len(line) == 9

    def test_dt_halving_shifts_capture_below_tolerance(self, params_03, geom_03):
        def run(dt):
            sc = Scenario(
                params_truth=params_03,
                params_low=params_03,
                initial_rel=RelState(1.2, 0.9),
                evader_policy=EvaderPolicy(kind="truthful"),
                pursuer_mode="informed",
                dt=dt,
                t_max=60.0,
            )
            return run_closed_loop(sc, geom_03, geom_03).capture_time

        assert abs(run(1e-3) - run(5e-4)) < 1e-3
