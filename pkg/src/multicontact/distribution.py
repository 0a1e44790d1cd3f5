"""Distribute a desired resultant wrench over contact ridges.

The distribution problem is nonnegative least squares: minimize the residual
between the resultant wrench generated by ridge force scales and the desired
resultant, subject to all scales >= 0. Nonnegativity alone guarantees the
unilateral and friction-pyramid feasibility of every per-patch wrench. The
solver is the classic Lawson-Hanson active-set method, which terminates
finitely and needs no tuning.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .contact import ContactSet
from .spatial import Pose, Wrench, shift_wrench


@dataclass
class NnlsResult:
    x: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int


def _lstsq_on(A: np.ndarray, b: np.ndarray, passive: np.ndarray) -> np.ndarray:
    """Unconstrained least squares restricted to the passive columns."""
    z = np.zeros(A.shape[1])
    idx = np.flatnonzero(passive)
    if idx.size:
        z[idx] = np.linalg.lstsq(A[:, idx], b, rcond=None)[0]
    return z


def nnls_solve(
    A: np.ndarray,
    b: np.ndarray,
    weights: Optional[np.ndarray] = None,
    x0: Optional[np.ndarray] = None,
    max_iterations: Optional[int] = None,
    tol: Optional[float] = None,
) -> NnlsResult:
    """Solve ``min ||W (A x - b)||^2  s.t.  x >= 0`` by Lawson-Hanson.

    ``weights`` scales the residual rows (the objective, not the solution).
    ``x0`` seeds the passive set from a previous solution; the problem is
    convex, so the warm start affects only the path, not the result. If the
    iteration cap (default ``10 n``) is exceeded, the best iterate so far is
    returned with ``converged=False``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.ndim != 2 or A.shape[0] != b.shape[0]:
        raise ValueError("A and b dimensions do not match")
    n = A.shape[1]
    if weights is not None:
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.shape[0] != A.shape[0]:
            raise ValueError("weights length does not match the residual dimension")
        if np.any(w <= 0.0):
            raise ValueError("weights must be positive")
        A = A * w[:, None]
        b = b * w
    if max_iterations is None:
        max_iterations = max(10 * n, 30)
    if tol is None:
        tol = 10.0 * np.finfo(float).eps * max(A.shape) * max(1.0, float(np.abs(A).max(initial=0.0))) \
            * max(1.0, float(np.abs(b).max(initial=0.0)))

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    iterations = 0

    def restore_feasibility(x, passive):
        """Drive x to the least-squares solution on the passive set, stepping
        along segments and pruning entries that hit the bound."""
        nonlocal iterations
        while True:
            iterations += 1
            z = _lstsq_on(A, b, passive)
            if np.all(z[passive] > tol):
                return z, passive, True
            blocking = passive & (z <= tol)
            denom = x[blocking] - z[blocking]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(denom > 0.0, x[blocking] / denom, 0.0)
            step = float(np.min(ratios, initial=1.0))
            x = x + step * (z - x)
            passive = passive & (x > tol)
            x = np.where(passive, x, 0.0)
            if iterations >= max_iterations:
                return x, passive, False

    if x0 is not None:
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        if x0.shape[0] == n and np.any(x0 > 0.0):
            x, passive, _ = restore_feasibility(x, x0 > 0.0)

    best_x = x.copy()
    best_obj = float(np.sum((A @ x - b) ** 2))
    converged = False
    while True:
        grad = A.T @ (b - A @ x)  # negative objective gradient / 2
        candidates = ~passive & (grad > tol)
        if not np.any(candidates):
            converged = True
            break
        if iterations >= max_iterations:
            break
        j = int(np.flatnonzero(candidates)[np.argmax(grad[candidates])])
        passive = passive.copy()
        passive[j] = True
        x, passive, ok = restore_feasibility(x, passive)
        obj = float(np.sum((A @ x - b) ** 2))
        if obj < best_obj - 1e-15:
            best_obj = obj
            best_x = x.copy()
        if not ok:
            break

    obj = float(np.sum((A @ x - b) ** 2))
    if obj <= best_obj:
        best_obj = obj
        best_x = x
    return NnlsResult(np.maximum(best_x, 0.0), float(np.sqrt(best_obj)), converged, iterations)


def distribute(
    contacts: ContactSet,
    desired: Wrench,
    com: np.ndarray,
    weights: Optional[np.ndarray] = None,
    ridge_regularization: float = 1e-8,
    x0: Optional[np.ndarray] = None,
) -> NnlsResult:
    """Solve the wrench-distribution problem for the given contact set.

    Builds the 6 x n wrench basis about ``com`` and solves NNLS for the ridge
    scales. A tiny ridge term (``ridge_regularization * ||x||^2``) breaks ties
    when coplanar contacts over-parameterize the wrench cone, keeping the
    scales unique and bounded.
    """
    A = contacts.wrench_basis(com)
    b = desired.as_array()
    if weights is not None:
        w = np.asarray(weights, dtype=float).reshape(6)
        A = A * w[:, None]
        b = b * w
    if ridge_regularization > 0.0 and contacts.size > 0:
        A = np.vstack([A, np.sqrt(ridge_regularization) * np.eye(contacts.size)])
        b = np.concatenate([b, np.zeros(contacts.size)])
    return nnls_solve(A, b, x0=x0)


def patch_wrench(contacts: ContactSet, scales: np.ndarray, patch_id: str, com: np.ndarray) -> Wrench:
    """Wrench contributed by one patch, about ``com`` in world axes."""
    scales = contacts.check_scales(scales)
    sl = contacts.slices[patch_id]
    com = np.asarray(com, dtype=float).reshape(3)
    forces = scales[sl, None] * contacts.directions[sl]
    force = forces.sum(axis=0)
    moment = np.cross(contacts.points[sl] - com, forces).sum(axis=0)
    return Wrench(force, moment)


def wrench_in_patch_frame(w: Wrench, com: np.ndarray, frame: Pose) -> Wrench:
    """Re-express a wrench about ``com`` as a patch-local wrench about the
    patch origin; the damping controller works in that frame."""
    return shift_wrench(w, com, frame.position).rotated(frame.rotation.T)


def patch_wrench_local(contacts: ContactSet, scales: np.ndarray, patch_id: str, com: np.ndarray) -> Wrench:
    """Per-patch wrench in the patch local frame about the patch origin."""
    patch = next(p for p in contacts.patches if p.patch_id == patch_id)
    return wrench_in_patch_frame(patch_wrench(contacts, scales, patch_id, com), com, patch.frame)
