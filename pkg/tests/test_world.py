import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cotransport import world as wd
from cotransport.config import WorldConfig


CFG = WorldConfig()


def fk_single(q, base_xy=(0.0, 0.0), yaw=0.0, cfg=CFG):
    q = np.asarray(q, dtype=float)[None, None, :]
    xy, z, gyaw = wd.forward_kinematics(q, np.asarray(base_xy, dtype=float)[None, None, :],
                                        np.array([[yaw]]), cfg)
    return xy[0, 0], z[0, 0], gyaw[0, 0]


class TestWrapAngle:
    def test_identity_in_range(self):
        assert wd.wrap_angle(0.3) == pytest.approx(0.3)

    def test_wraps_past_pi(self):
        assert wd.wrap_angle(np.pi + 0.1) == pytest.approx(-np.pi + 0.1)

    @given(st.floats(-50, 50))
    @settings(max_examples=100, deadline=None)
    def test_always_in_half_open_interval(self, a):
        w = wd.wrap_angle(a)
        assert -np.pi < w <= np.pi
        # wrapping preserves the angle modulo 2*pi
        assert np.cos(w) == pytest.approx(np.cos(a), abs=1e-9)
        assert np.sin(w) == pytest.approx(np.sin(a), abs=1e-9)


class TestForwardKinematics:
    def test_default_posture_oracle(self):
        # hand-computed: q = (0, pi/6, -pi/3), links 0.25 each, mount (0.1, 0, 0.55)
        # reach = 0.25*cos(pi/6) + 0.25*cos(-pi/6) = 0.5*cos(pi/6)
        # z = 0.55 - 0.25*sin(pi/6) - 0.25*sin(-pi/6) = 0.55
        xy, z, gyaw = fk_single(CFG.default_posture)
        reach = 0.1 + 0.5 * np.cos(np.pi / 6)
        assert xy[0] == pytest.approx(reach, abs=1e-12)
        assert xy[1] == pytest.approx(0.0, abs=1e-12)
        assert z == pytest.approx(0.55, abs=1e-12)
        assert gyaw == pytest.approx(0.0, abs=1e-12)

    def test_straight_arm(self):
        xy, z, _ = fk_single((0.0, 0.0, 0.0))
        assert xy[0] == pytest.approx(0.1 + 0.5, abs=1e-12)
        assert z == pytest.approx(0.55, abs=1e-12)

    def test_yaw_rotates_reach_and_offsets_grip_yaw(self):
        yaw = 0.7
        xy0, z0, _ = fk_single(CFG.default_posture)
        xy, z, gyaw = fk_single(CFG.default_posture, yaw=yaw)
        r = np.hypot(*xy0)
        assert xy[0] == pytest.approx(r * np.cos(yaw), abs=1e-12)
        assert xy[1] == pytest.approx(r * np.sin(yaw), abs=1e-12)
        assert z == pytest.approx(z0, abs=1e-12)
        assert gyaw == pytest.approx(yaw, abs=1e-12)

    def test_shoulder_yaw_adds_to_grip_yaw(self):
        _, _, gyaw = fk_single((0.25, np.pi / 6, -np.pi / 3), yaw=0.5)
        assert gyaw == pytest.approx(0.75, abs=1e-12)

    def test_base_translation_carries_end_effector(self):
        xy, _, _ = fk_single(CFG.default_posture, base_xy=(1.0, -2.0))
        xy0, _, _ = fk_single(CFG.default_posture)
        np.testing.assert_allclose(xy, xy0 + np.array([1.0, -2.0]), atol=1e-12)

    @given(st.tuples(st.floats(-1.5, 1.5), st.floats(-1.2, 1.2), st.floats(-2.0, 0.0)))
    @settings(max_examples=60, deadline=None)
    def test_reachable_envelope(self, q):
        xy, z, _ = fk_single(q)
        # both links fully extended give a 0.5 m sphere about the mount
        d = np.hypot(xy[0] - 0.1, z - 0.55)
        assert d <= 0.5 + 1e-9


class TestJacobian:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            q = rng.uniform(-1.0, 1.0, 3)
            yaw = rng.uniform(-np.pi, np.pi)
            J = wd.arm_jacobian(q[None, None, :], np.array([[yaw]]), CFG)[0, 0]
            eps = 1e-6
            for j in range(3):
                qp, qm = q.copy(), q.copy()
                qp[j] += eps
                qm[j] -= eps
                xp, zp, _ = fk_single(qp, yaw=yaw)
                xm, zm, _ = fk_single(qm, yaw=yaw)
                fd = np.array([*(xp - xm), zp - zm]) / (2 * eps)
                np.testing.assert_allclose(J[:, j], fd, atol=1e-6)

    def test_ee_velocity_consistent_with_fk_difference(self):
        cfg = WorldConfig(follower_count=1)
        w = wd.zeros_state(cfg, 1)
        w.arm.joint_positions[:] = np.array([0.1, 0.4, -0.9])
        w.arm.joint_velocities[:] = np.array([0.3, -0.2, 0.5])
        w.base.yaw[:] = 0.2
        w.base.linear_velocity[:] = np.array([0.1, -0.3])
        w.base.yaw_rate[:] = 0.4
        vel = wd.ee_velocity(w, cfg)
        h = 1e-7
        xy0, z0, _ = fk_single(w.arm.joint_positions[0, 0], yaw=0.2, cfg=cfg)
        xy1, z1, _ = fk_single(
            w.arm.joint_positions[0, 0] + h * w.arm.joint_velocities[0, 0],
            base_xy=h * w.base.linear_velocity[0, 0],
            yaw=0.2 + h * 0.4, cfg=cfg)
        fd = np.array([*(xy1 - xy0), z1 - z0]) / h
        np.testing.assert_allclose(vel[0, 0], fd, atol=1e-5)


class TestFrames:
    def test_rotate_round_trip(self):
        rng = np.random.default_rng(0)
        v = rng.normal(size=(50, 2))
        a = rng.uniform(-np.pi, np.pi, 50)
        back = wd.rotate_planar(wd.rotate_planar(v, a), -a)
        np.testing.assert_allclose(back, v, atol=1e-12)

    def test_rotation_preserves_norm(self):
        v = np.array([[3.0, 4.0]])
        out = wd.rotate_planar(v, np.array([1.234]))
        assert np.linalg.norm(out) == pytest.approx(5.0, abs=1e-12)


class TestObservationWindow:
    def test_layout_blocks_time_ascending(self):
        # layout: [q over H steps, dq over H steps, a over H steps]
        win = wd.ObservationWindow.empty(2, 1, 4)
        for i in range(1, 5):
            win.push(np.full((2, 1, 3), i * 1.0), np.full((2, 1, 3), i * 10.0),
                     np.full((2, 1, 3), i * 100.0))
        obs = wd.build_observation_trans(win)
        assert obs.shape == (2, 1, 36)
        row = obs[0, 0]
        for step in range(4):
            t = step + 1
            np.testing.assert_allclose(row[step * 3: step * 3 + 3], t)
            np.testing.assert_allclose(row[12 + step * 3: 12 + step * 3 + 3], t * 10)
            np.testing.assert_allclose(row[24 + step * 3: 24 + step * 3 + 3], t * 100)

    def test_ring_keeps_most_recent(self):
        win = wd.ObservationWindow.empty(2, 1, 2)
        for i in range(5):
            win.push(np.full((2, 1, 3), float(i)), np.zeros((2, 1, 3)),
                     np.zeros((2, 1, 3)))
        obs = wd.build_observation_trans(win)
        assert obs[0, 0, 0] == 3.0 and obs[0, 0, 3] == 4.0

    def test_reset_zero_pads_single_env(self):
        win = wd.ObservationWindow.empty(2, 1, 4)
        win.push(np.ones((2, 1, 3)), np.ones((2, 1, 3)), np.ones((2, 1, 3)))
        win.reset_envs(np.array([True, False]))
        obs = wd.build_observation_trans(win)
        np.testing.assert_allclose(obs[0], 0.0)
        assert obs[1, 0, 11] == 1.0

    def test_history_mismatch_raises(self):
        win = wd.ObservationWindow.empty(1, 1, 4)
        with pytest.raises(ValueError):
            wd.build_observation_trans(win, history_len=8)

    def test_channel_labels_align_with_layout(self):
        labels = wd.obs_channel_labels(4)
        assert len(labels) == 36
        assert labels[0] == ("joint_position", "shoulder_yaw", 0)
        assert labels[11] == ("joint_position", "elbow_pitch", 3)
        assert labels[12][0] == "joint_velocity"
        assert labels[-1] == ("prev_action", "elbow_pitch", 3)


class TestPrivilegedObservation:
    def _state(self, yaw, wrench):
        cfg = WorldConfig(follower_count=1)
        w = wd.zeros_state(cfg, 1)
        w.base.yaw[:] = yaw
        w.leader_wrench[:] = wrench
        return w, cfg

    def test_wrench_rotated_into_base_frame(self):
        w, cfg = self._state(np.pi / 2, [10.0, 0.0, 2.0])
        obs = wd.build_observation_privileged(w, cfg)
        np.testing.assert_allclose(obs[0, 0], [0.0, -10.0, 2.0], atol=1e-12)

    def test_torque_is_frame_invariant(self):
        for yaw in (0.0, 0.9, -2.0):
            w, cfg = self._state(yaw, [3.0, -4.0, 7.0])
            obs = wd.build_observation_privileged(w, cfg)
            assert obs[0, 0, 2] == pytest.approx(7.0)
            assert np.linalg.norm(obs[0, 0, :2]) == pytest.approx(5.0, abs=1e-12)


class TestCriticObservation:
    def test_dimension(self):
        assert wd.critic_obs_dim(4) == 9 * 4 + 3 + 9 + 14
        assert wd.critic_obs_dim(1) == 9 + 3 + 9 + 14
        assert len(wd.PAYLOAD_BLOCK_FIELDS) == 14

    def test_assembly_shapes_and_broadcast(self):
        n, k, H = 3, 2, 4
        o_trans = np.zeros((n, k, 9 * H))
        obs = wd.build_observation_critic(
            o_trans, np.zeros((n, k, 3)), np.zeros((n, k, 3)),
            np.zeros((n, k, 3)), np.zeros((n, k, 3)), np.zeros((n, 14)))
        assert obs.shape == (n, k, wd.critic_obs_dim(H))


class TestBoxInertia:
    def test_matches_uniform_box_formula(self):
        # 0.6 x 0.4 footprint at 2 kg: m (w^2 + l^2) / 12
        assert wd.box_yaw_inertia(2.0, (0.6, 0.4)) == pytest.approx(
            2.0 * (0.36 + 0.16) / 12.0)
