import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from lidarcalib import geometry as geo


def random_transform(rng) -> geo.RigidTransform:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-np.pi + 1e-3, np.pi - 1e-3)
    return geo.RigidTransform(geo.so3_exp(axis * angle), rng.uniform(-10, 10, size=3))


angles = st.floats(-3.0, 3.0, allow_nan=False)


class TestCompose:
    def test_identity_left(self):
        rng = np.random.default_rng(0)
        t = random_transform(rng)
        out = geo.compose(geo.RigidTransform.identity(), t)
        np.testing.assert_allclose(out.to_matrix(), t.to_matrix(), atol=1e-12)

    def test_inverse_gives_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            t = random_transform(rng)
            out = geo.compose(t, geo.invert(t))
            np.testing.assert_allclose(out.to_matrix(), np.eye(4), atol=1e-9)

    def test_hand_evaluated_yaw_90(self):
        # (yaw 90deg, t=(1,0,0)) o (yaw 0, t=(1,0,0)): second translation rotates onto y
        a = geo.RigidTransform(
            geo.euler_zyx_to_rotation(geo.EulerZYX(0, 0, np.pi / 2)), [1, 0, 0]
        )
        b = geo.RigidTransform(np.eye(3), [1, 0, 0])
        out = geo.compose(a, b)
        np.testing.assert_allclose(out.translation, [1, 1, 0], atol=1e-12)
        e = geo.rotation_to_euler_zyx(out.rotation)
        assert abs(e.yaw - np.pi / 2) < 1e-12

    def test_associative(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            a, b, c = (random_transform(rng) for _ in range(3))
            left = geo.compose(geo.compose(a, b), c)
            right = geo.compose(a, geo.compose(b, c))
            np.testing.assert_allclose(left.to_matrix(), right.to_matrix(), atol=1e-9)

    def test_reorthonormalizes_drifted_input(self):
        r = geo.so3_exp(np.array([0.3, -0.2, 0.9]))
        r = r + 1e-7 * np.ones((3, 3))
        t = geo.RigidTransform(r, np.zeros(3))
        out = geo.compose(t, geo.RigidTransform.identity())
        assert geo.rotation_drift(out.rotation) <= 1e-9


class TestInvert:
    def test_identity(self):
        out = geo.invert(geo.RigidTransform.identity())
        np.testing.assert_allclose(out.to_matrix(), np.eye(4), atol=0)

    def test_pure_translation(self):
        out = geo.invert(geo.RigidTransform(np.eye(3), [0, 0, 2]))
        np.testing.assert_allclose(out.translation, [0, 0, -2], atol=0)


class TestEulerZYX:
    def test_zero_is_identity(self):
        np.testing.assert_allclose(
            geo.euler_zyx_to_rotation(geo.EulerZYX(0, 0, 0)), np.eye(3), atol=0
        )

    def test_yaw_90_maps_x_to_y(self):
        r = geo.euler_zyx_to_rotation(geo.EulerZYX(0, 0, np.pi / 2))
        np.testing.assert_allclose(r @ [1, 0, 0], [0, 1, 0], atol=1e-15)

    @given(angles, st.floats(-1.4, 1.4), angles)
    @settings(max_examples=200)
    def test_round_trip(self, roll, pitch, yaw):
        r = geo.euler_zyx_to_rotation(geo.EulerZYX(roll, pitch, yaw))
        e = geo.rotation_to_euler_zyx(r)
        r2 = geo.euler_zyx_to_rotation(e)
        np.testing.assert_allclose(r2, r, atol=1e-9)

    def test_matches_scipy(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            rpy = rng.uniform([-3, -1.4, -3], [3, 1.4, 3])
            ours = geo.euler_zyx_to_rotation(geo.EulerZYX(*rpy))
            ref = Rotation.from_euler("ZYX", rpy[::-1]).as_matrix()
            np.testing.assert_allclose(ours, ref, atol=1e-12)
            e = geo.rotation_to_euler_zyx(ref)
            np.testing.assert_allclose([e.roll, e.pitch, e.yaw], rpy, atol=1e-9)

    @pytest.mark.parametrize("sign", [1.0, -1.0])
    def test_gimbal_lock_convention(self, sign):
        r = geo.euler_zyx_to_rotation(geo.EulerZYX(0.4, sign * np.pi / 2, 0.9))
        e = geo.rotation_to_euler_zyx(r)
        assert e.gimbal_lock
        assert e.roll == 0.0
        r2 = geo.euler_zyx_to_rotation(e)
        np.testing.assert_allclose(r2, r, atol=1e-9)


class TestExpLog:
    def test_zero_vector(self):
        t = geo.exp(geo.TangentVector(np.zeros(3), np.zeros(3)))
        np.testing.assert_allclose(t.to_matrix(), np.eye(4), atol=0)

    def test_tiny_angle_no_nan(self):
        t = geo.exp(geo.TangentVector([0, 0, 1e-12], [0, 0, 0]))
        assert np.isfinite(t.rotation).all()
        np.testing.assert_allclose(t.rotation, np.eye(3), atol=1e-11)

    @given(
        st.lists(st.floats(-1.7, 1.7), min_size=3, max_size=3),
        st.lists(st.floats(-10, 10), min_size=3, max_size=3),
    )
    @settings(max_examples=200)
    def test_round_trip(self, rot, trans):
        v = geo.TangentVector(rot, trans)
        if np.linalg.norm(v.rotation) >= np.pi - 1e-3:
            return
        t = geo.exp(v)
        v2 = geo.log(t)
        np.testing.assert_allclose(v2.as_array(), v.as_array(), atol=1e-9)

    def test_matches_scipy_rotvec(self):
        rng = np.random.default_rng(4)
        for _ in range(300):
            w = rng.uniform(-1.5, 1.5, size=3)
            ours = geo.so3_exp(w)
            np.testing.assert_allclose(ours, Rotation.from_rotvec(w).as_matrix(), atol=1e-12)
            np.testing.assert_allclose(geo.so3_log(ours), w, atol=1e-9)

    def test_near_pi_raises(self):
        r = geo.so3_exp(np.array([0, 0, np.pi - 1e-9]))
        with pytest.raises(geo.NearPiRotation):
            geo.log(geo.RigidTransform(r, np.zeros(3)))


class TestBatchedSO3:
    def test_exp_batch_matches_scalar(self):
        rng = np.random.default_rng(5)
        ws = rng.uniform(-2, 2, size=(50, 3))
        ws[0] = 0.0
        batch = geo.so3_exp_batch(ws)
        for i, w in enumerate(ws):
            np.testing.assert_allclose(batch[i], geo.so3_exp(w), atol=1e-14)

    def test_log_batch_matches_scalar(self):
        rng = np.random.default_rng(6)
        ws = rng.uniform(-1.5, 1.5, size=(50, 3))
        rs = geo.so3_exp_batch(ws)
        np.testing.assert_allclose(geo.so3_log_batch(rs), ws, atol=1e-9)

    def test_log_batch_near_pi(self):
        w = np.array([[0.6, -0.8, 0.0]]) * (np.pi - 1e-8)
        r = geo.so3_exp_batch(w)
        out = geo.so3_log_batch(r)
        np.testing.assert_allclose(np.abs(out), np.abs(w), atol=1e-6)


class TestTrajectory:
    def make(self):
        r0 = np.eye(3)
        r1 = geo.euler_zyx_to_rotation(geo.EulerZYX(0, 0, np.pi / 2))
        return geo.Trajectory([10.0, 11.0], [r0, r1], [[0, 0, 0], [2, 0, 0]])

    def test_strictly_increasing_enforced(self):
        with pytest.raises(ValueError):
            geo.Trajectory([0.0, 0.0], [np.eye(3)] * 2, [[0, 0, 0]] * 2)

    def test_exact_sample_is_bit_exact(self):
        tr = self.make()
        p = geo.interpolate_pose(tr, 11.0)
        assert np.array_equal(p.rotation, tr.rotations[1])
        assert np.array_equal(p.translation, tr.translations[1])
        p0 = geo.interpolate_pose(tr, 10.0)
        assert np.array_equal(p0.rotation, tr.rotations[0])

    def test_translation_midpoint(self):
        p = geo.interpolate_pose(self.make(), 10.5)
        np.testing.assert_allclose(p.translation, [1, 0, 0], atol=0)

    def test_rotation_geodesic_midpoint(self):
        p = geo.interpolate_pose(self.make(), 10.5)
        e = geo.rotation_to_euler_zyx(p.rotation)
        assert abs(e.yaw - np.pi / 4) < 1e-12

    def test_out_of_range(self):
        with pytest.raises(geo.OutOfRange):
            geo.interpolate_pose(self.make(), 9.0)
        with pytest.raises(geo.OutOfRange):
            geo.interpolate_pose(self.make(), 11.5)

    def test_continuity(self):
        tr = self.make()
        rng = np.random.default_rng(7)
        for q in rng.uniform(10.0 + 1e-6, 11.0 - 1e-6, size=50):
            a = geo.interpolate_pose(tr, q - 1e-9)
            b = geo.interpolate_pose(tr, q + 1e-9)
            assert np.abs(a.to_matrix() - b.to_matrix()).max() < 1e-6

    def test_batch_matches_scalar(self):
        tr = self.make()
        times = np.linspace(10.0, 11.0, 17)
        rots, trans = tr.poses_at(times)
        for i, q in enumerate(times):
            p = geo.interpolate_pose(tr, float(q))
            np.testing.assert_allclose(rots[i], p.rotation, atol=1e-14)
            np.testing.assert_allclose(trans[i], p.translation, atol=1e-14)
