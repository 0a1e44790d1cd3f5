"""Contact areas, friction-pyramid ridges, and the resultant contact wrench.

A contact area is a planar convex polygon. Each polygon vertex carries a
small set of unit *ridge vectors* spanning an inner pyramid approximation of
the Coulomb friction cone; any nonnegative combination of ridge forces is a
feasible contact force. The net effect of all contacts on the body is the
resultant wrench about the centre of mass, which is linear in the flat
vector of ridge force scales.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from shapely.geometry import Point, Polygon

from .spatial import Pose, Wrench

PLANE_TOL = 1e-6        # m, coplanarity tolerance for polygon vertices
MIN_RECT_AREA = 1e-6    # m^2, below this a measured contact region is rejected


@dataclass(frozen=True)
class ContactPatch:
    """One contact area: a planar polygon with friction and a local frame.

    ``vertices`` are world coordinates, coplanar with the plane through
    ``frame.position`` orthogonal to ``surface_normal``. The local frame has
    its z axis along the surface normal (the direction of contact force on
    the robot) and is the reference for damping control and tactile
    aggregation.
    """

    patch_id: str
    vertices: np.ndarray          # (n, 3) world
    surface_normal: np.ndarray    # (3,) unit
    friction_coeff: float
    frame: Pose
    ridges_per_vertex: int = 4

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        normal = np.asarray(self.surface_normal, dtype=float).reshape(3)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "surface_normal", normal)
        if verts.shape[0] < 1:
            raise ValueError(f"patch '{self.patch_id}': needs at least one vertex")
        if abs(np.linalg.norm(normal) - 1.0) > 1e-9:
            raise ValueError(f"patch '{self.patch_id}': surface normal must be unit length")
        if self.friction_coeff < 0.0:
            raise ValueError(f"patch '{self.patch_id}': friction coefficient must be >= 0")
        offsets = (verts - self.frame.position) @ normal
        if np.any(np.abs(offsets) > PLANE_TOL):
            raise ValueError(f"patch '{self.patch_id}': vertices not coplanar with the contact plane")

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    def local_polygon(self) -> np.ndarray:
        """Vertices expressed in the patch local frame, dropping z."""
        local = (self.vertices - self.frame.position) @ self.frame.rotation
        return local[:, :2]

    def with_vertices(self, vertices: np.ndarray) -> "ContactPatch":
        return replace(self, vertices=np.asarray(vertices, dtype=float))


@dataclass(frozen=True)
class RidgeSet:
    """Per-vertex unit ridge vectors of a patch's friction pyramid."""

    ridges: np.ndarray  # (n_vertices, n_ridges, 3), world, unit norm

    @property
    def num_vertices(self) -> int:
        return self.ridges.shape[0]

    @property
    def ridges_per_vertex(self) -> int:
        return self.ridges.shape[1]


def generate_ridges(patch: ContactPatch) -> RidgeSet:
    """Build the friction pyramid at every polygon vertex.

    Ridges are ``normalize(n + mu * t_k)`` for tangents ``t_k`` at 0/90/180/270
    degrees in the patch plane (patch-local x and y axes), so every ridge makes
    the friction angle ``atan(mu)`` with the normal. ``mu == 0`` collapses all
    ridges onto the normal.
    """
    k = patch.ridges_per_vertex
    mu = patch.friction_coeff
    if k < 3 and mu > 0.0:
        raise ValueError(f"patch '{patch.patch_id}': degenerate pyramid (needs >= 3 ridges for mu > 0)")
    angles = 2.0 * np.pi * np.arange(k) / k
    tx = patch.frame.rotation[:, 0]
    ty = patch.frame.rotation[:, 1]
    tangents = np.outer(np.cos(angles), tx) + np.outer(np.sin(angles), ty)  # (k, 3)
    dirs = patch.surface_normal[None, :] + mu * tangents
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return RidgeSet(np.broadcast_to(dirs, (patch.num_vertices, k, 3)).copy())


class ContactSet:
    """Active patches with their ridge sets and the flat ridge-scale indexing.

    The flat scale vector stacks entries in (patch, vertex, ridge) order; the
    resultant wrench is linear in it, with one 6-D basis column per entry.
    """

    def __init__(self, patches: Sequence[ContactPatch], ridge_sets: Optional[Sequence[RidgeSet]] = None):
        if ridge_sets is None:
            ridge_sets = [generate_ridges(p) for p in patches]
        if len(patches) != len(ridge_sets):
            raise ValueError("patch/ridge-set count mismatch")
        self.patches = list(patches)
        self.ridge_sets = list(ridge_sets)
        points = []
        directions = []
        slices = {}
        start = 0
        for patch, rs in zip(self.patches, self.ridge_sets):
            if rs.num_vertices != patch.num_vertices:
                raise ValueError(f"patch '{patch.patch_id}': ridge set does not match vertex count")
            n = patch.num_vertices * rs.ridges_per_vertex
            points.append(np.repeat(patch.vertices, rs.ridges_per_vertex, axis=0))
            directions.append(rs.ridges.reshape(n, 3))
            slices[patch.patch_id] = slice(start, start + n)
            start += n
        self.points = np.concatenate(points) if points else np.zeros((0, 3))
        self.directions = np.concatenate(directions) if directions else np.zeros((0, 3))
        self.slices = slices
        self.size = start

    def check_scales(self, scales: np.ndarray) -> np.ndarray:
        scales = np.asarray(scales, dtype=float).reshape(-1)
        if scales.shape[0] != self.size:
            raise ValueError(f"ridge scale vector has {scales.shape[0]} entries, contact set has {self.size}")
        return scales

    def patch_scales(self, scales: np.ndarray, patch_id: str) -> np.ndarray:
        return self.check_scales(scales)[self.slices[patch_id]]

    def patch_totals(self, scales: np.ndarray) -> dict[str, float]:
        scales = self.check_scales(scales)
        return {pid: float(scales[s].sum()) for pid, s in self.slices.items()}

    def wrench_basis(self, com: np.ndarray) -> np.ndarray:
        """6 x n matrix whose column j is the wrench of a unit scale on ridge j."""
        com = np.asarray(com, dtype=float).reshape(3)
        moments = np.cross(self.points - com, self.directions)
        return np.vstack([self.directions.T, moments.T])

    def force_and_moment(self, scales: np.ndarray, com: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        scales = self.check_scales(scales)
        com = np.asarray(com, dtype=float).reshape(3)
        forces = scales[:, None] * self.directions
        force = forces.sum(axis=0)
        moment = np.cross(self.points - com, forces).sum(axis=0)
        return force, moment


def resultant_wrench(contacts: ContactSet, scales: np.ndarray, com: np.ndarray) -> Wrench:
    """Net contact wrench about ``com``: sum of ``scale * ridge`` forces applied
    at their polygon vertices."""
    force, moment = contacts.force_and_moment(scales, com)
    return Wrench(force, moment)


def polygon_area(vertices_2d: np.ndarray) -> float:
    x = vertices_2d[:, 0]
    y = vertices_2d[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def update_polygon(
    patch: ContactPatch,
    measured_rect: np.ndarray,
    area_ratio_threshold: float = 0.2,
    vertex_distance_threshold: float = 0.02,
) -> ContactPatch:
    """Replace the patch polygon with a measured contact rectangle if the
    difference is significant.

    The significance test passes when the symmetric-difference area between
    the measured rectangle and the current polygon exceeds
    ``area_ratio_threshold`` of the current area, or when any measured vertex
    lies more than ``vertex_distance_threshold`` outside the current polygon.
    The hysteresis-style threshold keeps small sensing jitter from churning
    the polygon. Measured vertices are snapped onto the patch plane.
    """
    measured = np.asarray(measured_rect, dtype=float).reshape(-1, 3)
    if measured.shape[0] != 4:
        raise ValueError("measured contact region must have 4 vertices")
    normal = patch.surface_normal
    offsets = (measured - patch.frame.position) @ normal
    snapped = measured - offsets[:, None] * normal[None, :]

    to_local = patch.frame.rotation.T
    meas_2d = ((snapped - patch.frame.position) @ to_local.T)[:, :2]
    cur_2d = patch.local_polygon()

    meas_area = polygon_area(meas_2d)
    if meas_area < MIN_RECT_AREA:
        raise ValueError(f"patch '{patch.patch_id}': vanishing contact region (area {meas_area:.2e} m^2)")

    cur_poly = Polygon(cur_2d)
    meas_poly = Polygon(meas_2d)
    sym_diff = cur_poly.symmetric_difference(meas_poly).area
    max_outside = max(cur_poly.exterior.distance(Point(p)) if not cur_poly.contains(Point(p)) else 0.0
                      for p in meas_2d)
    significant = sym_diff > area_ratio_threshold * cur_poly.area or max_outside > vertex_distance_threshold
    if not significant:
        return patch
    return patch.with_vertices(snapped)


@dataclass(frozen=True)
class ContactPhase:
    """One interval of the contact plan: which patches are active, and where."""

    start: float
    end: float
    poses: dict[str, Pose]                 # patch id -> target contact pose
    com_waypoint: Optional[np.ndarray] = None
    base_rpy_waypoint: Optional[np.ndarray] = None


class ContactSequence:
    """Timed, non-overlapping contact phases; at least one patch is always active."""

    def __init__(self, phases: Sequence[ContactPhase]):
        phases = sorted(phases, key=lambda p: p.start)
        for a, b in zip(phases, phases[1:]):
            if b.start < a.end - 1e-9:
                raise ValueError("contact phases overlap")
        for p in phases:
            if p.end <= p.start:
                raise ValueError("contact phase must have positive duration")
            if not p.poses:
                raise ValueError("every contact phase needs at least one active patch")
        self.phases = list(phases)

    @property
    def end_time(self) -> float:
        return self.phases[-1].end

    def phase_at(self, t: float) -> ContactPhase:
        for p in self.phases:
            if p.start - 1e-9 <= t < p.end:
                return p
        return self.phases[-1] if t >= self.phases[-1].start else self.phases[0]

    def phase_index_at(self, t: float) -> int:
        for i, p in enumerate(self.phases):
            if p.start - 1e-9 <= t < p.end:
                return i
        return len(self.phases) - 1 if t >= self.phases[-1].start else 0

    def active_ids(self, t: float) -> list[str]:
        return list(self.phase_at(t).poses.keys())
