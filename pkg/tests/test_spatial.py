import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multicontact.spatial import (
    Pose,
    Wrench,
    exp_axis_angle,
    interpolate_pose,
    log_rotation,
    shift_wrench,
    skew,
)


def random_axis_angle(rng, max_angle=np.pi - 0.01):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return axis * rng.uniform(0.0, max_angle)


class TestExpAxisAngle:
    def test_zero_gives_identity(self):
        assert np.array_equal(exp_axis_angle(np.zeros(3)), np.eye(3))

    def test_half_turn_about_z(self):
        R = exp_axis_angle([0.0, 0.0, np.pi])
        assert np.allclose(R, np.diag([-1.0, -1.0, 1.0]), atol=1e-12)

    def test_orthonormal(self):
        R = exp_axis_angle([0.1, 0.2, 0.3])
        assert np.max(np.abs(R.T @ R - np.eye(3))) < 1e-12
        assert abs(np.linalg.det(R) - 1.0) < 1e-12

    def test_inverse_is_negated_vector(self):
        a = np.array([0.4, -0.2, 0.9])
        assert np.max(np.abs(exp_axis_angle(a) @ exp_axis_angle(-a) - np.eye(3))) < 1e-12

    def test_small_angle_branch_smooth(self):
        a = np.array([1e-10, -2e-10, 5e-11])
        R = exp_axis_angle(a)
        assert np.allclose(R - np.eye(3), skew(a), atol=1e-18)

    def test_batched_matches_loop(self):
        rng = np.random.default_rng(3)
        vecs = rng.normal(size=(17, 3))
        batched = exp_axis_angle(vecs)
        for i in range(17):
            assert np.allclose(batched[i], exp_axis_angle(vecs[i]), atol=1e-15)


class TestLogRotation:
    def test_identity(self):
        assert np.array_equal(log_rotation(np.eye(3)), np.zeros(3))

    def test_principal_axis(self):
        R = exp_axis_angle([0.0, 0.0, np.pi / 2])
        assert np.allclose(log_rotation(R), [0.0, 0.0, np.pi / 2], atol=1e-12)

    def test_round_trip_large_angle(self):
        # Independent round-trip oracle through the Rodrigues formula.
        rng = np.random.default_rng(0)
        for _ in range(50):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            a = 2.5 * axis
            assert np.linalg.norm(log_rotation(exp_axis_angle(a)) - a) < 1e-9

    def test_near_antipodal_raises(self):
        R = exp_axis_angle([np.pi - 1e-8, 0.0, 0.0])
        with pytest.raises(ValueError, match="near-antipodal"):
            log_rotation(R)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_round_trip_property(self, seed):
        a = random_axis_angle(np.random.default_rng(seed))
        R = exp_axis_angle(a)
        assert np.linalg.norm(log_rotation(R) - a) < 1e-9


class TestShiftWrench:
    def test_zero_wrench(self):
        w = shift_wrench(Wrench(), [0, 0, 0], [1.0, 2.0, 3.0])
        assert np.array_equal(w.as_array(), np.zeros(6))

    def test_hand_cross_product(self):
        # force (0,0,10) acting about the origin, re-expressed about (1,0,0):
        # moment picks up (0-1,0,0) x (0,0,10) = (0,10,0).
        w = shift_wrench(Wrench([0, 0, 10.0]), [0, 0, 0], [1.0, 0, 0])
        assert np.allclose(w.force, [0, 0, 10.0])
        assert np.allclose(w.moment, np.cross(np.array([-1.0, 0, 0]), np.array([0, 0, 10.0])))
        assert np.allclose(w.moment, [0, 10.0, 0])

    def test_involution(self):
        rng = np.random.default_rng(1)
        w = Wrench(rng.normal(size=3), rng.normal(size=3))
        a, b = rng.normal(size=3), rng.normal(size=3)
        back = shift_wrench(shift_wrench(w, a, b), b, a)
        assert np.max(np.abs(back.as_array() - w.as_array())) < 1e-12

    def test_force_preserved_and_additive(self):
        rng = np.random.default_rng(2)
        w = Wrench(rng.normal(size=3), rng.normal(size=3))
        a, b, c = rng.normal(size=(3, 3))
        direct = shift_wrench(w, a, c)
        stepwise = shift_wrench(shift_wrench(w, a, b), b, c)
        assert np.array_equal(direct.force, w.force)
        assert np.max(np.abs(direct.as_array() - stepwise.as_array())) < 1e-12


class TestPose:
    def test_compose_inverse(self):
        rng = np.random.default_rng(4)
        p = Pose(rng.normal(size=3), exp_axis_angle(random_axis_angle(rng)))
        q = p.compose(p.inverse())
        assert np.allclose(q.position, 0.0, atol=1e-12)
        assert np.allclose(q.rotation, np.eye(3), atol=1e-12)

    def test_interpolation_endpoints(self):
        rng = np.random.default_rng(5)
        a = Pose(rng.normal(size=3), exp_axis_angle(random_axis_angle(rng)))
        b = Pose(rng.normal(size=3), exp_axis_angle(random_axis_angle(rng)))
        for s, ref in [(0.0, a), (1.0, b)]:
            m = interpolate_pose(a, b, s)
            assert np.allclose(m.position, ref.position, atol=1e-12)
            assert np.allclose(m.rotation, ref.rotation, atol=1e-9)
