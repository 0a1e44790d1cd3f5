"""Whole-body multi-contact balance control and simulation.

Library layers, bottom up:

* :mod:`multicontact.spatial` -- rotations, axis-angle maps, wrenches
* :mod:`multicontact.contact` -- contact patches, friction-pyramid ridges,
  resultant wrench, online polygon updates
* :mod:`multicontact.dynamics` -- discrete centroidal dynamics
* :mod:`multicontact.mpc` -- receding-horizon planner (control-limited DDP)
* :mod:`multicontact.stabilizer` -- PD feedback on the centroidal state
* :mod:`multicontact.estimator` -- anchor-point centroidal estimation
* :mod:`multicontact.distribution` -- NNLS wrench distribution
* :mod:`multicontact.damping` -- per-contact admittance (damping control)
* :mod:`multicontact.tactile` -- tactile sheets: wrench and contact region
* :mod:`multicontact.simulator` -- rigid-body plant with penalty contact
* :mod:`multicontact.loop` -- the fixed-period control pipeline
* :mod:`multicontact.config` / :mod:`multicontact.harness` /
  :mod:`multicontact.cli` -- scenario configs, runner, sweeps, CLI
"""

from .contact import (
    ContactPatch,
    ContactPhase,
    ContactSequence,
    ContactSet,
    RidgeSet,
    generate_ridges,
    resultant_wrench,
    update_polygon,
)
from .damping import (
    CompliancePose,
    DampingParams,
    PatchDampingController,
    commanded_pose,
    damping_step,
    select_params,
)
from .distribution import distribute, nnls_solve, patch_wrench, patch_wrench_local
from .dynamics import CentroidalState, RobotInertialModel, step_dynamics
from .estimator import AnchorContact, AnchorFrameInput, CentroidalEstimator, anchor_point
from .mpc import CentroidalMpc, MpcProblem, solve_mpc
from .spatial import Pose, Wrench, exp_axis_angle, log_rotation, shift_wrench
from .stabilizer import StabilizerGains, desired_resultant_wrench, feedback_delta
from .tactile import (
    AffineCalibration,
    TactilePatch,
    calibrate_f_tau,
    estimate_contact_rectangle,
    tactile_wrench,
)

__version__ = "0.1.0"
