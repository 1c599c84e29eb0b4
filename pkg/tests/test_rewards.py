import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cotransport import rewards as rw
from cotransport.config import RewardConfig


P = RewardConfig()


class TestTrackingTerms:
    def test_perfect_tracking_gives_one(self):
        f = np.array([[20.0, -12.0]])
        v = f / 40.0
        assert rw.r_force(f, v, P)[0] == pytest.approx(1.0)
        assert rw.r_torque(np.array([5.0]), np.array([0.5]), P)[0] == pytest.approx(1.0)

    def test_force_oracle_value(self):
        # unit velocity error: exp(-1/0.25) = exp(-4)
        f = np.zeros((1, 2))
        v = np.array([[1.0, 0.0]])
        assert rw.r_force(f, v, P)[0] == pytest.approx(np.exp(-4.0), abs=1e-12)

    def test_torque_oracle_value(self):
        r = rw.r_torque(np.array([10.0]), np.array([0.5]), P)
        assert r[0] == pytest.approx(np.exp(-0.25 / 0.25), abs=1e-12)

    @given(st.floats(-40, 40), st.floats(-40, 40), st.floats(-1.5, 1.5),
           st.floats(-1.5, 1.5))
    @settings(max_examples=100, deadline=None)
    def test_force_brute_force_oracle(self, fx, fy, vx, vy):
        expected = np.exp(-(((fx / 40 - vx) ** 2) + ((fy / 40 - vy) ** 2)) / 0.25)
        got = rw.r_force(np.array([[fx, fy]]), np.array([[vx, vy]]), P)[0]
        assert got == pytest.approx(expected, abs=1e-12)

    def test_rotation_invariance(self):
        # the tracking error norm must not depend on the shared frame
        from cotransport.world import rotate_planar
        rng = np.random.default_rng(0)
        f = rng.uniform(-40, 40, (20, 2))
        v = rng.uniform(-1, 1, (20, 2))
        base = rw.r_force(f, v, P)
        for yaw in (0.3, -1.2, 2.9):
            a = np.full(20, yaw)
            rot = rw.r_force(rotate_planar(f, a), rotate_planar(v, a), P)
            np.testing.assert_allclose(rot, base, atol=1e-12)


class TestHeightTerm:
    def test_zero_inside_band(self):
        h = np.array([0.05, 0.12, 0.25])
        np.testing.assert_allclose(rw.r_height(h, P), 0.0)

    def test_quadratic_outside(self):
        assert rw.r_height(np.array([0.30]), P)[0] == pytest.approx(0.0025, abs=1e-15)
        assert rw.r_height(np.array([0.0]), P)[0] == pytest.approx(0.0025, abs=1e-15)
        assert rw.r_height(np.array([-0.15]), P)[0] == pytest.approx(0.04, abs=1e-15)


class TestRegularizers:
    def test_action_term_oracle(self):
        # sum((a - a_prev)^2 + 0.5 a^2): a = (0.1, 0, 0), prev = 0
        regs = rw.regularizer_terms(
            joint_positions=np.zeros((1, 1, 3)),
            joint_velocities=np.zeros((1, 1, 3)),
            joint_accelerations=np.zeros((1, 1, 3)),
            joint_torques=np.zeros((1, 1, 3)),
            action_t=np.array([[[0.1, 0.0, 0.0]]]),
            action_prev=np.zeros((1, 1, 3)),
            terminated=np.zeros(1, dtype=bool),
            default_posture=np.zeros(3), params=P)
        assert regs["action"][0, 0] == pytest.approx(0.015, abs=1e-15)

    def test_dof_term_includes_acceleration(self):
        regs = rw.regularizer_terms(
            joint_positions=np.zeros((1, 1, 3)),
            joint_velocities=np.array([[[1.0, 0.0, 0.0]]]),
            joint_accelerations=np.array([[[0.0, 100.0, 0.0]]]),
            joint_torques=np.zeros((1, 1, 3)),
            action_t=np.zeros((1, 1, 3)), action_prev=np.zeros((1, 1, 3)),
            terminated=np.zeros(1, dtype=bool),
            default_posture=np.zeros(3), params=P)
        assert regs["joint_dof"][0, 0] == pytest.approx(1.0 + 0.00025 * 1e4)

    def test_posture_is_euclidean_distance(self):
        regs = rw.regularizer_terms(
            joint_positions=np.array([[[0.3, 0.0, 0.4]]]),
            joint_velocities=np.zeros((1, 1, 3)),
            joint_accelerations=np.zeros((1, 1, 3)),
            joint_torques=np.zeros((1, 1, 3)),
            action_t=np.zeros((1, 1, 3)), action_prev=np.zeros((1, 1, 3)),
            terminated=np.zeros(1, dtype=bool),
            default_posture=np.zeros(3), params=P)
        assert regs["arm_posture"][0, 0] == pytest.approx(0.5, abs=1e-12)


class TestTotalReward:
    def _call(self, terminated=False, f=(0.0, 0.0)):
        return rw.total_reward(
            force_xy=np.array([list(f)]), torque=np.zeros(1),
            base_velocity_xy=np.zeros((1, 1, 2)), base_yaw_rate=np.zeros((1, 1)),
            height=np.full((1, 1), 0.1),
            joint_positions=np.zeros((1, 1, 3)),
            joint_velocities=np.zeros((1, 1, 3)),
            joint_accelerations=np.zeros((1, 1, 3)),
            joint_torques=np.zeros((1, 1, 3)),
            action_t=np.zeros((1, 1, 3)), action_prev=np.zeros((1, 1, 3)),
            terminated=np.array([terminated]),
            default_posture=np.zeros(3), params=P)

    def test_termination_is_flat_penalty(self):
        alive = self._call(False)
        dead = self._call(True)
        assert dead.total[0, 0] - alive.total[0, 0] == pytest.approx(-50.0)

    def test_total_matches_manual_weighting(self):
        b = self._call(False, f=(20.0, 0.0))
        dt = P.control_dt
        w_f, w_t = P.tracking_weights()
        manual = dt * (w_f * b.force_tracking + w_t * b.torque_tracking
                       + P.w_height * b.payload_height
                       + P.w_joint_torque * b.joint_torque
                       + P.w_joint_dof * b.joint_dof
                       + P.w_action * b.action
                       + P.w_posture * b.arm_posture) \
            + P.w_termination_flat * b.termination
        assert b.total[0, 0] == pytest.approx(manual[0, 0], abs=1e-15)

    def test_sign_convention_flag(self):
        flipped = RewardConfig(tracking_sign="as_printed")
        w_f, w_t = flipped.tracking_weights()
        assert w_f < 0 and w_t < 0
        w_f, w_t = P.tracking_weights()
        assert w_f > 0 and w_t > 0

    def test_wrench_broadcast_across_followers(self):
        b = rw.total_reward(
            force_xy=np.array([[20.0, 0.0]]), torque=np.array([2.0]),
            base_velocity_xy=np.zeros((1, 3, 2)), base_yaw_rate=np.zeros((1, 3)),
            height=np.full((1, 3), 0.1),
            joint_positions=np.zeros((1, 3, 3)),
            joint_velocities=np.zeros((1, 3, 3)),
            joint_accelerations=np.zeros((1, 3, 3)),
            joint_torques=np.zeros((1, 3, 3)),
            action_t=np.zeros((1, 3, 3)), action_prev=np.zeros((1, 3, 3)),
            terminated=np.zeros(1, dtype=bool),
            default_posture=np.zeros(3), params=P)
        assert b.total.shape == (1, 3)
        np.testing.assert_allclose(b.force_tracking[0], b.force_tracking[0, 0])
