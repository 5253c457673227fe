"""Analytic joint-muscle geometry for a serial tendon-driven arm.

Muscle paths use constant moment arms, so muscle length is affine in the
joint angles: ``l = rest - 1000 * R @ theta`` (lengths in mm, arms in m).
The link chain is a serial chain of revolute joints; every link hangs
along the local -z axis at zero angle, so ``theta = 0`` is the arm hanging
straight down.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

GRAVITY = 9.81
M_TO_MM = 1000.0

# joint order (S-r, S-p, S-y, E-p, E-y); axis codes 0=x, 1=y, 2=z
DEFAULT_JOINT_NAMES = ("S-r", "S-p", "S-y", "E-p", "E-y")
DEFAULT_JOINT_AXES = (0, 1, 2, 1, 2)

# rows: muscles #1..#10, columns: joints; each joint has a +/- pair and
# muscles 6/7 are biarticular over shoulder pitch and elbow pitch
DEFAULT_MOMENT_ARMS = np.array([
    [0.025, 0.000, 0.000, 0.000, 0.000],
    [-0.025, 0.000, 0.000, 0.000, 0.000],
    [0.000, 0.030, 0.000, 0.000, 0.000],
    [0.000, -0.030, 0.000, 0.000, 0.000],
    [0.000, 0.000, 0.020, 0.000, 0.000],
    [0.000, 0.000, -0.020, 0.000, 0.000],
    [0.000, 0.015, 0.000, 0.025, 0.000],
    [0.000, -0.015, 0.000, -0.025, 0.000],
    [0.000, 0.000, 0.000, 0.000, 0.015],
    [0.000, 0.000, 0.000, 0.000, -0.015],
])
DEFAULT_REST_LENGTHS = np.array(
    [240.0, 240.0, 300.0, 300.0, 220.0, 220.0, 420.0, 420.0, 180.0, 180.0])
DEFAULT_LINK_LENGTHS = np.array([0.0, 0.0, 0.28, 0.0, 0.22])
DEFAULT_LINK_MASSES = np.array([0.0, 0.0, 0.6, 0.0, 0.4])
DEFAULT_LINK_COM = np.array([0.0, 0.0, 0.14, 0.0, 0.12])
DEFAULT_END_EFFECTOR_OFFSET = 0.05
DEFAULT_JOINT_LIMIT = 2.0


class ModelError(ValueError):
    """Raised for malformed robot models or mismatched vector sizes."""


@dataclass(frozen=True, eq=False)
class RobotModel:
    """Muscle routing plus link geometry of the arm.

    ``moment_arms[i, j]`` is the signed moment arm (m) of muscle ``i`` about
    joint ``j``; a positive arm means tension drives the joint positively.
    """

    moment_arms: np.ndarray
    rest_lengths: np.ndarray
    link_lengths: np.ndarray
    link_masses: np.ndarray
    link_com: np.ndarray
    joint_limits: np.ndarray
    joint_axes: tuple = DEFAULT_JOINT_AXES
    end_effector_offset: float = DEFAULT_END_EFFECTOR_OFFSET
    joint_names: tuple = field(default=DEFAULT_JOINT_NAMES)

    def __post_init__(self):
        for name in ("moment_arms", "rest_lengths", "link_lengths",
                     "link_masses", "link_com", "joint_limits"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "joint_axes", tuple(int(a) for a in self.joint_axes))
        object.__setattr__(self, "end_effector_offset", float(self.end_effector_offset))
        if len(self.joint_names) != self.n_joints:
            object.__setattr__(self, "joint_names",
                               tuple(f"j{i}" for i in range(self.n_joints)))
        self.validate()

    @property
    def n_muscles(self) -> int:
        return self.moment_arms.shape[0]

    @property
    def n_joints(self) -> int:
        return self.moment_arms.shape[1]

    def validate(self):
        R = self.moment_arms
        if R.ndim != 2:
            raise ModelError("moment_arms must be an M x N matrix")
        M, N = R.shape
        if M < N:
            raise ModelError(f"need at least as many muscles as joints ({M} < {N})")
        for name in ("link_lengths", "link_masses", "link_com"):
            if getattr(self, name).shape != (N,):
                raise ModelError(f"{name} must have {N} entries")
        if self.rest_lengths.shape != (M,):
            raise ModelError(f"rest_lengths must have {M} entries")
        if self.joint_limits.shape != (N, 2):
            raise ModelError("joint_limits must be N x 2")
        if len(self.joint_axes) != N or any(a not in (0, 1, 2) for a in self.joint_axes):
            raise ModelError("joint_axes must hold one of 0, 1, 2 per joint")
        if not np.all(np.isfinite(R)):
            raise ModelError("moment_arms must be finite")
        for j in range(N):
            if not (R[:, j].min() < 0.0 < R[:, j].max()):
                raise ModelError(
                    f"joint {j} ({self.joint_names[j]}) lacks an antagonistic muscle pair")
        if np.any(self.rest_lengths <= 0.0):
            raise ModelError("rest_lengths must be strictly positive")
        if np.any(self.link_masses < 0.0) or np.any(self.link_lengths < 0.0):
            raise ModelError("link lengths and masses must be non-negative")
        if np.any(self.joint_limits[:, 0] >= self.joint_limits[:, 1]):
            raise ModelError("joint_limits need min < max")
        if self.end_effector_offset < 0.0:
            raise ModelError("end_effector_offset must be non-negative")

    def clamp(self, theta) -> np.ndarray:
        return np.clip(theta, self.joint_limits[:, 0], self.joint_limits[:, 1])

    def within_limits(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.joint_limits[:, 0])
                    and np.all(theta <= self.joint_limits[:, 1]))

    def with_rest_lengths(self, rest_lengths) -> "RobotModel":
        return RobotModel(self.moment_arms, rest_lengths, self.link_lengths,
                          self.link_masses, self.link_com, self.joint_limits,
                          self.joint_axes, self.end_effector_offset, self.joint_names)

    def axes_array(self) -> np.ndarray:
        return np.array(self.joint_axes, dtype=np.int64)


def default_model() -> RobotModel:
    limits = np.tile([-DEFAULT_JOINT_LIMIT, DEFAULT_JOINT_LIMIT], (5, 1))
    return RobotModel(DEFAULT_MOMENT_ARMS, DEFAULT_REST_LENGTHS, DEFAULT_LINK_LENGTHS,
                      DEFAULT_LINK_MASSES, DEFAULT_LINK_COM, limits)


def _joint_vector(model: RobotModel, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.n_joints,):
        raise ModelError(f"expected {model.n_joints} joint values, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise ModelError("joint angles must be finite")
    return theta


# --- numba kernels, shared with the plant integrator -----------------------

@njit(cache=True)
def _rot(axis, angle):
    c = np.cos(angle)
    s = np.sin(angle)
    R = np.eye(3)
    if axis == 0:
        R[1, 1] = c
        R[1, 2] = -s
        R[2, 1] = s
        R[2, 2] = c
    elif axis == 1:
        R[0, 0] = c
        R[0, 2] = s
        R[2, 0] = -s
        R[2, 2] = c
    else:
        R[0, 0] = c
        R[0, 1] = -s
        R[1, 0] = s
        R[1, 1] = c
    return R


@njit(cache=True)
def chain_kernel(theta, axes, link_lengths, link_com, ee_offset):
    """Joint origins, world joint axes, link COMs and end-effector position."""
    n = theta.shape[0]
    origins = np.zeros((n, 3))
    world_axes = np.zeros((n, 3))
    coms = np.zeros((n, 3))
    R = np.eye(3)
    p = np.zeros(3)
    d = np.zeros(3)
    for j in range(n):
        R = R @ _rot(axes[j], theta[j])
        origins[j] = p
        world_axes[j] = R[:, axes[j]]
        d = -R[:, 2]
        coms[j] = p + link_com[j] * d
        p = p + link_lengths[j] * d
    ee = p + ee_offset * d
    return origins, world_axes, coms, ee


@njit(cache=True)
def point_jacobian_kernel(origins, world_axes, point, upto):
    """Positional Jacobian (3 x N) of a point moved by joints ``0..upto``."""
    n = origins.shape[0]
    J = np.zeros((3, n))
    for j in range(upto + 1):
        J[:, j] = np.cross(world_axes[j], point - origins[j])
    return J


@njit(cache=True)
def gravity_kernel(theta, axes, link_lengths, link_masses, link_com, ee_offset,
                   payload, g):
    origins, world_axes, coms, ee = chain_kernel(theta, axes, link_lengths,
                                                 link_com, ee_offset)
    n = theta.shape[0]
    tau = np.zeros(n)
    for k in range(n):
        if link_masses[k] == 0.0:
            continue
        f = np.array([0.0, 0.0, -link_masses[k] * g])
        tau += point_jacobian_kernel(origins, world_axes, coms[k], k).T @ f
    if payload > 0.0:
        f = np.array([0.0, 0.0, -payload * g])
        tau += point_jacobian_kernel(origins, world_axes, ee, n - 1).T @ f
    return tau


# --- public API -------------------------------------------------------------

def muscle_lengths(model: RobotModel, theta) -> np.ndarray:
    """Geometric muscle lengths in mm."""
    theta = _joint_vector(model, theta)
    return model.rest_lengths - M_TO_MM * (model.moment_arms @ theta)


def muscle_jacobian(model: RobotModel, theta) -> np.ndarray:
    """Muscle Jacobian ``G = dl/dtheta`` in metres per radian.

    Constant under the fixed-moment-arm model; ``-G.T @ T`` is the joint
    torque produced by tensions ``T``.
    """
    _joint_vector(model, theta)
    return -model.moment_arms.copy()


def forward_kinematics(model: RobotModel, theta):
    theta = _joint_vector(model, theta)
    return chain_kernel(theta, model.axes_array(), model.link_lengths,
                        model.link_com, model.end_effector_offset)


def end_effector_position(model: RobotModel, theta) -> np.ndarray:
    return forward_kinematics(model, theta)[3]


def end_effector_jacobian(model: RobotModel, theta) -> np.ndarray:
    origins, world_axes, _, ee = forward_kinematics(model, theta)
    return point_jacobian_kernel(origins, world_axes, ee, model.n_joints - 1)


def potential_energy(model: RobotModel, theta, payload_mass: float = 0.0) -> float:
    _, _, coms, ee = forward_kinematics(model, theta)
    return float(GRAVITY * (model.link_masses @ coms[:, 2] + payload_mass * ee[2]))


def gravity_torque(model: RobotModel, theta, payload_mass: float = 0.0) -> np.ndarray:
    """Joint torques exerted by gravity on the links and an end-effector payload.

    This is the negative gradient of the potential energy, so an arm left
    alone accelerates along it.
    """
    theta = _joint_vector(model, theta)
    if payload_mass < 0.0:
        raise ModelError("payload_mass must be non-negative")
    return gravity_kernel(theta, model.axes_array(), model.link_lengths,
                          model.link_masses, model.link_com,
                          model.end_effector_offset, float(payload_mass), GRAVITY)


def necessary_torque(model: RobotModel, theta, external_force=None,
                     payload_mass: float = 0.0) -> np.ndarray:
    """Torque the muscles must supply to hold ``theta``.

    Compensates gravity (links plus payload) and exerts ``external_force``
    (N, world frame) with the end effector. Muscles supply ``-G.T @ T``, so
    the tension QP drives ``G.T @ T + tau_necessary`` towards zero.
    """
    tau = -gravity_torque(model, theta, payload_mass)
    if external_force is not None:
        force = np.asarray(external_force, dtype=float)
        if force.shape != (3,):
            raise ModelError("external_force must be a 3-vector")
        tau = tau + end_effector_jacobian(model, theta).T @ force
    return tau
