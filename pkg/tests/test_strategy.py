import math

import pytest

from chauffeur.core import RelState
from chauffeur.solution import SECONDARY, TRIBUTARY, turn_alignment
from chauffeur.strategy import (
    EvaderPolicy,
    SpeedEstimate,
    deceptive_policy,
    estimator_update,
    evader_feedback,
    pursuer_feedback,
)


class TestPursuerFeedback:
    def test_zero_on_positive_universal_line(self, params_03, geom_03):
        assert pursuer_feedback(geom_03, RelState(0.0, params_03.l + 1.0)) == 0.0

    def test_hard_left_in_pocket(self, geom_03):
        assert pursuer_feedback(geom_03, RelState(2.152, -0.214)) == -1.0

    def test_mirror_antisymmetry(self, geom_03, rng):
        for _ in range(40):
            x = rng.uniform(0.2, 3.0)
            y = rng.uniform(-2.5, 2.5)
            if x * x + y * y <= 0.26:
                continue
            u = pursuer_feedback(geom_03, RelState(x, y))
            assert pursuer_feedback(geom_03, RelState(-x, y)) == -u

    def test_sign_agrees_with_region(self, geom_03, rng):
        for _ in range(60):
            x = rng.uniform(0.05, 3.0)
            y = rng.uniform(-2.5, 2.5)
            s = RelState(x, y)
            tag = geom_03.classify(s).tag
            u = pursuer_feedback(geom_03, s)
            if tag in (TRIBUTARY, "Primary"):
                assert u == 1.0
            elif tag == SECONDARY:
                assert u == -1.0


class TestEvaderFeedback:
    def test_flees_straight_on_universal_line(self, params_03, geom_03):
        assert evader_feedback(geom_03, RelState(0.0, params_03.l + 1.0)) == 0.0

    def test_constant_world_heading_in_tributary(self, params_03, geom_03):
        # Along the equilibrium pair the evader's world heading
        # theta_P0 + t + psi stays constant, so t plus the remaining turn
        # alignment does too.  Integrate the pair with stage-level feedback
        # (continuous controls) so the check is not polluted by the
        # simulator's sample-and-hold discretization.
        from chauffeur.core import rel_rhs

        x, y = 2.0, 1.5
        dt = 1e-3
        heads = []
        t = 0.0
        for _ in range(2000):
            res = turn_alignment(x, y)
            if res is None or res[0] < 0.05:
                break
            heads.append(t + res[0])

            def f(x_, y_):
                a = turn_alignment(x_, y_)
                return rel_rhs(x_, y_, 1.0, a[0], params_03.mu)

            k1 = f(x, y)
            k2 = f(x + 0.5 * dt * k1[0], y + 0.5 * dt * k1[1])
            k3 = f(x + 0.5 * dt * k2[0], y + 0.5 * dt * k2[1])
            k4 = f(x + dt * k3[0], y + dt * k3[1])
            x += dt / 6.0 * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0])
            y += dt / 6.0 * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1])
            t += dt
        assert len(heads) > 1000
        assert max(heads) - min(heads) < 1e-6

    def test_pure_pursuit_on_equivocal_curve(self, geom_03):
        x, y = geom_03.equivocal.points[len(geom_03.equivocal.points) // 2]
        psi = evader_feedback(geom_03, RelState(x, y))
        want = math.atan2(-x, -y)
        assert abs((psi - want + math.pi) % (2 * math.pi) - math.pi) < 1e-4

    def test_mirror_negates_heading(self, geom_03, rng):
        for _ in range(40):
            x = rng.uniform(0.2, 3.0)
            y = rng.uniform(-2.5, 2.5)
            if x * x + y * y <= 0.26:
                continue
            a = evader_feedback(geom_03, RelState(x, y))
            b = evader_feedback(geom_03, RelState(-x, y))
            assert abs(a + b) < 1e-12 or abs(abs(a) - math.pi) < 1e-9


class TestEstimator:
    def test_running_supremum(self):
        e = SpeedEstimate.from_observation(0.2)
        e = estimator_update(e, 0.2)
        e = estimator_update(e, 0.3)
        assert e.mu_hat == 0.3 and e.history_max == 0.3

    def test_never_decreases(self):
        e = SpeedEstimate.from_observation(0.3)
        e = estimator_update(e, 0.2)
        assert e.mu_hat == 0.3

    def test_exact_supremum_over_random_history(self, rng):
        obs = rng.uniform(0.0, 0.99, 200)
        e = SpeedEstimate.from_observation(float(obs[0]))
        running = float(obs[0])
        for o in obs[1:]:
            e = estimator_update(e, float(o))
            running = max(running, float(o))
            assert e.mu_hat == running

    def test_out_of_range_rejected(self):
        e = SpeedEstimate.from_observation(0.5)
        with pytest.raises(ValueError):
            estimator_update(e, 1.0)
        with pytest.raises(ValueError):
            estimator_update(e, -0.1)

    def test_idempotent(self):
        e = SpeedEstimate.from_observation(0.4)
        assert estimator_update(e, 0.4) == e


class TestDeceptivePolicy:
    def test_degenerates_when_speeds_equal(self, params_03, geom_03):
        pol = EvaderPolicy(kind="deceptive", mu_low=0.3, mu_high=0.3)
        psi, mu_cmd, switched = deceptive_policy(pol, geom_03, geom_03, RelState(2.0, 1.0), 0.0)
        assert mu_cmd == 0.3 and not switched
        assert psi == evader_feedback(geom_03, RelState(2.0, 1.0))

    def test_switch_point_lies_on_the_wall(self, params_03, params_02, geom_03, geom_02):
        from chauffeur.sim import Scenario, run_closed_loop

        sc = Scenario(
            params_truth=params_03,
            params_low=params_02,
            initial_rel=RelState(2.152, -0.214),
            evader_policy=EvaderPolicy(kind="deceptive", mu_low=0.2, mu_high=0.3),
            pursuer_mode="estimating",
            dt=1e-3,
            t_max=40.0,
        )
        tr = run_closed_loop(sc, geom_03, geom_02)
        switches = [e for e in tr.events if e.kind == "switch"]
        assert len(switches) == 1
        sx, sy = switches[0].location
        assert geom_03.wall_distance(sx, sy) < 5e-3
        # Commanded speed steps from the low to the high bound exactly once.
        ks = [k for k in range(1, len(tr.t)) if tr.mu_cmd[k] != tr.mu_cmd[k - 1]]
        assert len(ks) == 1
        assert tr.mu_cmd[ks[0] - 1] == 0.2 and tr.mu_cmd[ks[0]] == 0.3

    def test_one_switch_only_upward(self, params_03, params_02, geom_03, geom_02):
        from chauffeur.sim import Scenario, run_closed_loop

        sc = Scenario(
            params_truth=params_03,
            params_low=params_02,
            initial_rel=RelState(1.5, -0.8),
            evader_policy=EvaderPolicy(kind="deceptive", mu_low=0.2, mu_high=0.3),
            pursuer_mode="estimating",
            dt=1e-3,
            t_max=40.0,
        )
        tr = run_closed_loop(sc, geom_03, geom_02)
        changes = [
            (tr.mu_cmd[k - 1], tr.mu_cmd[k])
            for k in range(1, len(tr.t))
            if tr.mu_cmd[k] != tr.mu_cmd[k - 1]
        ]
        assert len(changes) <= 1
        for before, after in changes:
            assert after > before

    def test_time_triggered_switch(self, params_03, params_02, geom_03, geom_02):
        pol = EvaderPolicy(kind="deceptive", mu_low=0.2, mu_high=0.3, switch_time=0.5)
        s = RelState(2.5, 2.0)
        psi0, mu0, sw0 = deceptive_policy(pol, geom_03, geom_02, s, 0.0)
        assert mu0 == 0.2 and not sw0
        psi1, mu1, sw1 = deceptive_policy(pol, geom_03, geom_02, s, 0.6)
        assert mu1 == 0.3 and sw1
        assert pol.switch_t == 0.6

    def test_validation(self):
        with pytest.raises(ValueError, match="mu_low"):
            EvaderPolicy(kind="deceptive")
        with pytest.raises(ValueError, match="mu_low <= mu_high"):
            EvaderPolicy(kind="deceptive", mu_low=0.4, mu_high=0.2)
        with pytest.raises(ValueError, match="kind"):
            EvaderPolicy(kind="sneaky")


class TestSpeedBoundViolation:
    def test_estimate_initialization_validated(self):
        with pytest.raises(ValueError):
            SpeedEstimate.from_observation(1.2)
