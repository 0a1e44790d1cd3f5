import numpy as np
import pytest

from multicontact.contact import (
    ContactPatch,
    ContactPhase,
    ContactSequence,
    ContactSet,
    generate_ridges,
    resultant_wrench,
    update_polygon,
)
from multicontact.spatial import Pose


def rect_patch(center=(0.0, 0.0, 0.0), size=(0.2, 0.1), friction=0.5, patch_id="foot",
               rotation=None, ridges=4):
    center = np.asarray(center, dtype=float)
    R = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
    hx, hy = size[0] / 2.0, size[1] / 2.0
    local = np.array([[-hx, -hy, 0.0], [hx, -hy, 0.0], [hx, hy, 0.0], [-hx, hy, 0.0]])
    frame = Pose(center, R)
    return ContactPatch(
        patch_id=patch_id,
        vertices=frame.transform(local),
        surface_normal=R[:, 2],
        friction_coeff=friction,
        frame=frame,
        ridges_per_vertex=ridges,
    )


class TestGenerateRidges:
    def test_frictionless_collapses_to_normal(self):
        rs = generate_ridges(rect_patch(friction=0.0))
        assert np.allclose(rs.ridges, np.array([0.0, 0.0, 1.0]), atol=1e-15)

    def test_unit_friction_45_degrees(self):
        rs = generate_ridges(rect_patch(friction=1.0))
        expected = np.array([1.0, 0.0, 1.0]) / np.sqrt(2.0)
        assert np.allclose(rs.ridges[0, 0], expected, atol=1e-12)

    def test_half_angle_matches_atan_mu(self):
        # Oracle: every ridge makes angle atan(mu) with the surface normal.
        rng = np.random.default_rng(0)
        for _ in range(20):
            mu = rng.uniform(1e-3, 2.0)
            patch = rect_patch(friction=mu)
            rs = generate_ridges(patch)
            cosangles = rs.ridges @ patch.surface_normal
            angles = np.arccos(np.clip(cosangles, -1, 1))
            assert np.max(np.abs(angles - np.arctan(mu))) < 1e-12
            assert np.max(np.abs(np.linalg.norm(rs.ridges, axis=2) - 1.0)) < 1e-12

    def test_positive_normal_component(self):
        patch = rect_patch(friction=1.8)
        rs = generate_ridges(patch)
        assert np.all(rs.ridges @ patch.surface_normal > 0.0)

    def test_degenerate_pyramid_rejected(self):
        with pytest.raises(ValueError, match="degenerate pyramid"):
            generate_ridges(rect_patch(friction=0.5, ridges=2))


class TestResultantWrench:
    def test_zero_scales(self):
        contacts = ContactSet([rect_patch()])
        w = resultant_wrench(contacts, np.zeros(contacts.size), np.array([0.0, 0.0, 1.0]))
        assert np.array_equal(w.as_array(), np.zeros(6))

    def test_zero_moment_arm(self):
        # One vertex at the CoM with a single vertical ridge.
        com = np.array([0.3, -0.2, 0.5])
        patch = ContactPatch("pt", [com], np.array([0.0, 0.0, 1.0]), 0.0,
                             Pose(com, np.eye(3)), ridges_per_vertex=1)
        contacts = ContactSet([patch])
        w = resultant_wrench(contacts, [1.0], com)
        assert np.allclose(w.force, [0, 0, 1.0], atol=1e-15)
        assert np.allclose(w.moment, 0.0, atol=1e-15)

    def test_componentwise_cross_product(self):
        com = np.zeros(3)
        p = np.array([1.0, 0.0, 0.0])
        patch = ContactPatch("pt", [p], np.array([0.0, 0.0, 1.0]), 0.0,
                             Pose(p, np.eye(3)), ridges_per_vertex=1)
        contacts = ContactSet([patch])
        w = resultant_wrench(contacts, [10.0], com)
        assert np.allclose(w.force, [0, 0, 10.0], atol=1e-12)
        assert np.allclose(w.moment, [0.0, -10.0, 0.0], atol=1e-12)

    def test_index_mismatch_rejected(self):
        contacts = ContactSet([rect_patch()])
        with pytest.raises(ValueError, match="entries"):
            resultant_wrench(contacts, np.zeros(contacts.size + 1), np.zeros(3))

    def test_linearity(self):
        rng = np.random.default_rng(1)
        contacts = ContactSet([rect_patch(), rect_patch(center=(0.4, 0.1, 0.2), patch_id="hand")])
        com = np.array([0.1, 0.0, 0.9])
        for _ in range(30):
            l1 = rng.normal(size=contacts.size)
            l2 = rng.normal(size=contacts.size)
            a, b = rng.normal(size=2)
            lhs = resultant_wrench(contacts, a * l1 + b * l2, com).as_array()
            rhs = a * resultant_wrench(contacts, l1, com).as_array() + b * resultant_wrench(contacts, l2, com).as_array()
            assert np.max(np.abs(lhs - rhs)) < 1e-12 * max(1.0, np.max(np.abs(lhs)))

    def test_com_shift_changes_only_moment(self):
        rng = np.random.default_rng(2)
        contacts = ContactSet([rect_patch()])
        lam = rng.uniform(0, 10, size=contacts.size)
        c1, c2 = rng.normal(size=(2, 3))
        w1 = resultant_wrench(contacts, lam, c1)
        w2 = resultant_wrench(contacts, lam, c2)
        assert np.max(np.abs(w1.force - w2.force)) < 1e-12
        expected = w1.moment + np.cross(c2 - c1, -w1.force)
        assert np.max(np.abs(w2.moment - expected)) < 1e-11

    def test_friction_cone_membership(self):
        # Any nonnegative combination stays inside the Coulomb cone because
        # the pyramid is an inner approximation.
        rng = np.random.default_rng(3)
        for mu in (0.2, 0.7, 1.5):
            patch = rect_patch(friction=mu)
            contacts = ContactSet([patch])
            for _ in range(50):
                lam = rng.uniform(0, 5, size=contacts.size)
                force, _ = contacts.force_and_moment(lam, np.zeros(3))
                normal = force @ patch.surface_normal
                tangential = np.linalg.norm(force - normal * patch.surface_normal)
                assert normal >= 0.0
                assert tangential <= mu * normal + 1e-9


class TestUpdatePolygon:
    def test_identical_measurement_is_noop(self):
        patch = rect_patch()
        updated = update_polygon(patch, patch.vertices)
        assert updated is patch

    def test_half_area_triggers_update(self):
        patch = rect_patch(size=(0.2, 0.1))
        hx, hy = 0.05, 0.05
        measured = np.array([[-hx, -hy, 0.0], [hx, -hy, 0.0], [hx, hy, 0.0], [-hx, hy, 0.0]])
        updated = update_polygon(patch, measured)
        assert updated is not patch
        assert np.allclose(updated.vertices, measured, atol=1e-12)

    def test_millimetre_jitter_ignored(self):
        patch = rect_patch(size=(0.2, 0.1))
        jitter = np.array([[1e-3, 0, 0], [0, -1e-3, 0], [-1e-3, 0, 0], [0, 1e-3, 0]])
        updated = update_polygon(patch, patch.vertices + jitter)
        assert updated is patch

    def test_vertices_snapped_to_plane(self):
        patch = rect_patch(size=(0.2, 0.1))
        measured = np.array([[-0.05, -0.05, 0.002], [0.05, -0.05, -0.001],
                             [0.05, 0.05, 0.003], [-0.05, 0.05, 0.0]])
        updated = update_polygon(patch, measured)
        assert np.max(np.abs(updated.vertices[:, 2])) < 1e-12

    def test_vanishing_region_rejected(self):
        patch = rect_patch()
        tiny = np.array([[0, 0, 0], [1e-4, 0, 0], [1e-4, 1e-6, 0], [0, 1e-6, 0.0]])
        with pytest.raises(ValueError, match="vanishing contact region"):
            update_polygon(patch, tiny)

    def test_outlying_vertex_triggers_update(self):
        patch = rect_patch(size=(0.2, 0.1))
        # Same area, one corner dragged 3 cm out: vertex rule fires.
        measured = patch.vertices.copy()
        measured[2] += np.array([0.03, 0.03, 0.0])
        measured[0] += np.array([0.012, 0.006, 0.0])
        updated = update_polygon(patch, measured)
        assert updated is not patch


class TestContactSequence:
    def feet_phase(self, start, end):
        return ContactPhase(start, end, {"lf": Pose.identity()})

    def test_overlap_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            ContactSequence([self.feet_phase(0.0, 1.0), self.feet_phase(0.5, 2.0)])

    def test_empty_phase_rejected(self):
        with pytest.raises(ValueError, match="at least one active patch"):
            ContactSequence([ContactPhase(0.0, 1.0, {})])

    def test_lookup(self):
        seq = ContactSequence([self.feet_phase(0.0, 1.0), self.feet_phase(1.0, 2.0)])
        assert seq.phase_index_at(0.5) == 0
        assert seq.phase_index_at(1.0) == 1
        assert seq.phase_index_at(5.0) == 1
        assert seq.active_ids(0.2) == ["lf"]
