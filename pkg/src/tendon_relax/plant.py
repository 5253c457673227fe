"""Simulated musculoskeletal arm used as the closed-loop plant.

Tensions track their targets through a Coulomb stick band, joints follow
heavily damped second-order dynamics, the desk and the handle are penalty
contacts on the end effector, and each muscle carries a first-order
thermal state.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .kinematics import (GRAVITY, M_TO_MM, RobotModel, chain_kernel,
                         gravity_kernel, point_jacobian_kernel)

log = logging.getLogger(__name__)

# plant-minus-model rest length error (mm); the controller never sees it
DEFAULT_REST_LENGTH_ERROR = np.array(
    [2.4, 1.8, 0.6, 0.4, 1.9, 2.3, 0.5, 0.5, 2.0, 2.2])


class SimulationDiverged(RuntimeError):
    def __init__(self, quantity: str, time: float):
        super().__init__(f"non-finite {quantity} at t={time:.6f} s")
        self.quantity = quantity
        self.time = time


@dataclass(frozen=True, eq=False)
class PlantConfig:
    joint_inertia: float = 0.05
    joint_damping: float = 2.0
    friction_band: float = 8.0
    heating_coeff: float = 1.2
    reference_tension: float = 100.0
    cooling_time_constant: float = 120.0
    ambient: float = 25.0
    dt: float = 0.001
    temperature_threshold: float = 60.0
    rest_length_error: np.ndarray = field(
        default_factory=lambda: DEFAULT_REST_LENGTH_ERROR.copy())

    def __post_init__(self):
        err = np.array(self.rest_length_error, dtype=float)
        err.setflags(write=False)
        object.__setattr__(self, "rest_length_error", err)
        self.validate()

    def validate(self):
        if not self.dt > 0.0:
            raise ValueError("plant.dt must be positive")
        if self.friction_band < 0.0:
            raise ValueError("plant.friction_band must be non-negative")
        if not self.cooling_time_constant > 0.0:
            raise ValueError("plant.cooling_time_constant must be positive")
        if not (self.joint_inertia > 0.0 and self.joint_damping > 0.0):
            raise ValueError("plant.joint_inertia and plant.joint_damping must be positive")
        if not (self.reference_tension > 0.0 and self.heating_coeff >= 0.0):
            raise ValueError("plant.reference_tension must be positive, "
                             "plant.heating_coeff non-negative")
        if not np.all(np.isfinite(self.rest_length_error)):
            raise ValueError("plant.rest_length_error must be finite")


@dataclass(frozen=True)
class Desk:
    height: float
    stiffness: float = 2.0e4
    damping: float = 50.0

    def __post_init__(self):
        if not (self.stiffness > 0.0 and self.damping > 0.0):
            raise ValueError("desk stiffness and damping must be positive")


@dataclass(frozen=True, eq=False)
class Handle:
    """Circular handle rim the end effector is bound to."""

    center: np.ndarray
    radius: float = 0.15
    stiffness: float = 2.0e4
    damping: float = 50.0
    normal: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        n = np.asarray(self.normal, dtype=float)
        object.__setattr__(self, "normal", n / np.linalg.norm(n))
        if not (self.stiffness > 0.0 and self.damping > 0.0 and self.radius > 0.0):
            raise ValueError("handle radius, stiffness and damping must be positive")

    def point(self, angle: float) -> np.ndarray:
        """Rim point at ``angle`` rad; 0 is the bottom of the rim."""
        n = self.normal
        down = np.array([0.0, 0.0, -1.0])
        down = down - (down @ n) * n
        down /= np.linalg.norm(down)
        side = np.cross(n, down)
        return self.center + self.radius * (np.cos(angle) * down - np.sin(angle) * side)

    def distance(self, p) -> float:
        d = np.asarray(p, dtype=float) - self.center
        dn = d @ self.normal
        rho = np.linalg.norm(d - dn * self.normal)
        return float(np.hypot(rho - self.radius, dn))


@dataclass(frozen=True)
class ContactSet:
    desk: Desk | None = None
    handle: Handle | None = None


@dataclass(frozen=True, eq=False)
class PlantState:
    theta: np.ndarray
    theta_dot: np.ndarray
    tension: np.ndarray
    temperature: np.ndarray
    time: float = 0.0
    contact_force: float = 0.0

    @property
    def hysteresis_memory(self) -> np.ndarray:
        # the stuck tension is whatever was realized last
        return self.tension


def initial_state(model: RobotModel, cfg: PlantConfig, theta0=None,
                  tension0=0.0) -> PlantState:
    theta = np.zeros(model.n_joints) if theta0 is None else np.array(theta0, dtype=float)
    M = model.n_muscles
    return PlantState(theta, np.zeros(model.n_joints),
                      np.broadcast_to(np.asarray(tension0, dtype=float), (M,)).copy(),
                      np.full(M, cfg.ambient), 0.0, 0.0)


def sensor_lengths(model: RobotModel, cfg: PlantConfig, theta) -> np.ndarray:
    """Measured muscle lengths (mm): the true geometry, including the
    rest-length error the controller's model does not know about."""
    return (model.rest_lengths + cfg.rest_length_error
            - M_TO_MM * (model.moment_arms @ np.asarray(theta, dtype=float)))


# --- kernels -----------------------------------------------------------------

@njit(cache=True)
def _realize(T_target, memory, fc):
    out = np.empty_like(T_target)
    for i in range(T_target.shape[0]):
        d = T_target[i] - memory[i]
        if abs(d) <= fc:
            v = memory[i]
        elif d > 0.0:
            v = T_target[i] - fc
        else:
            v = T_target[i] + fc
        out[i] = v if v > 0.0 else 0.0
    return out


@njit(cache=True)
def _contact(theta, theta_dot, axes, link_lengths, link_com, ee_offset,
             desk_on, desk_h, desk_k, desk_c,
             handle_on, h_center, h_normal, h_radius, h_k, h_c):
    origins, world_axes, coms, ee = chain_kernel(theta, axes, link_lengths,
                                                 link_com, ee_offset)
    n = theta.shape[0]
    J = point_jacobian_kernel(origins, world_axes, ee, n - 1)
    v = J @ theta_dot
    F = np.zeros(3)
    magnitude = 0.0
    if desk_on:
        pen = desk_h - ee[2]
        if pen > 0.0:
            fn = desk_k * pen - desk_c * v[2]
            if fn > 0.0:
                F[2] += fn
                magnitude += fn
    if handle_on:
        d = ee - h_center
        dn = d @ h_normal
        dp = d - dn * h_normal
        rho = np.sqrt(dp @ dp)
        if rho > 1e-12:
            u = dp / rho
        else:
            u = np.zeros(3)
        err = d - h_radius * u
        t = np.cross(h_normal, u)
        v_perp = v - (v @ t) * t
        Fh = -h_k * err - h_c * v_perp
        F += Fh
        magnitude += np.sqrt(Fh @ Fh)
    return J.T @ F, magnitude


@njit(cache=True)
def _advance(n_steps, theta, theta_dot, tension, temp, T_target,
             R, axes, link_lengths, link_masses, link_com, ee_offset, payload,
             lim_lo, lim_hi, inertia, damping, fc,
             heating, ref_T, tau_cool, ambient, dt,
             desk_on, desk_h, desk_k, desk_c,
             handle_on, h_center, h_normal, h_radius, h_k, h_c, g):
    theta = theta.copy()
    theta_dot = theta_dot.copy()
    tension = tension.copy()
    temp = temp.copy()
    fmag = 0.0
    for _ in range(n_steps):
        tension = _realize(T_target, tension, fc)
        tau = R.T @ tension
        tau += gravity_kernel(theta, axes, link_lengths, link_masses, link_com,
                              ee_offset, payload, g)
        tc, fmag = _contact(theta, theta_dot, axes, link_lengths, link_com, ee_offset,
                            desk_on, desk_h, desk_k, desk_c,
                            handle_on, h_center, h_normal, h_radius, h_k, h_c)
        tau += tc
        theta_dot = theta_dot + dt * (tau - damping * theta_dot) / inertia
        theta = theta + dt * theta_dot
        for j in range(theta.shape[0]):
            if theta[j] < lim_lo[j]:
                theta[j] = lim_lo[j]
                theta_dot[j] = 0.0
            elif theta[j] > lim_hi[j]:
                theta[j] = lim_hi[j]
                theta_dot[j] = 0.0
        ratio = tension / ref_T
        temp = temp + dt * (heating * ratio * ratio - (temp - ambient) / tau_cool)
    return theta, theta_dot, tension, temp, fmag


def _contact_args(contacts: ContactSet):
    desk, handle = contacts.desk, contacts.handle
    dargs = ((True, desk.height, desk.stiffness, desk.damping) if desk is not None
             else (False, 0.0, 1.0, 1.0))
    if handle is not None:
        hargs = (True, handle.center, handle.normal, handle.radius,
                 handle.stiffness, handle.damping)
    else:
        hargs = (False, np.zeros(3), np.array([1.0, 0.0, 0.0]), 1.0, 1.0, 1.0)
    return dargs + hargs


# --- public API ----------------------------------------------------------------

def realize_tension(T_target, state: PlantState, cfg: PlantConfig) -> np.ndarray:
    """Stick-slip tension tracking.

    Inside the band ``|target - memory| <= friction_band`` the tension stays
    stuck at the memory; outside it slides to ``target -/+ band``.
    """
    T_target = np.asarray(T_target, dtype=float)
    if np.any(T_target < 0.0):
        raise ValueError("target tensions must be non-negative")
    return _realize(T_target, state.hysteresis_memory, float(cfg.friction_band))


def thermal_step(C, T_realized, cfg: PlantConfig, dt: float) -> np.ndarray:
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    ratio = np.asarray(T_realized, dtype=float) / cfg.reference_tension
    C = np.asarray(C, dtype=float)
    return C + dt * (cfg.heating_coeff * ratio ** 2 - (C - cfg.ambient) / cfg.cooling_time_constant)


def contact_torque(model: RobotModel, state: PlantState, contacts: ContactSet) -> np.ndarray:
    return contact_wrench(model, state, contacts)[0]


def contact_wrench(model: RobotModel, state: PlantState, contacts: ContactSet):
    """Joint torque of the contact forces and the total contact force magnitude."""
    tau, mag = _contact(np.asarray(state.theta, dtype=float),
                        np.asarray(state.theta_dot, dtype=float),
                        model.axes_array(), model.link_lengths, model.link_com,
                        model.end_effector_offset, *_contact_args(contacts))
    return tau, float(mag)


def advance(state: PlantState, T_target, contacts: ContactSet, model: RobotModel,
            cfg: PlantConfig, n_steps: int = 1, payload_mass: float = 0.0) -> PlantState:
    """Integrate ``n_steps`` plant steps holding ``T_target`` constant."""
    T_target = np.asarray(T_target, dtype=float)
    if np.any(T_target < 0.0):
        raise ValueError("target tensions must be non-negative")
    damping = np.broadcast_to(np.asarray(cfg.joint_damping, dtype=float),
                              (model.n_joints,)).copy()
    theta, theta_dot, tension, temp, fmag = _advance(
        int(n_steps), state.theta, state.theta_dot, state.tension, state.temperature,
        T_target, model.moment_arms, model.axes_array(), model.link_lengths,
        model.link_masses, model.link_com, model.end_effector_offset,
        float(payload_mass), model.joint_limits[:, 0].copy(),
        model.joint_limits[:, 1].copy(), float(cfg.joint_inertia), damping,
        float(cfg.friction_band), float(cfg.heating_coeff),
        float(cfg.reference_tension), float(cfg.cooling_time_constant),
        float(cfg.ambient), float(cfg.dt), *_contact_args(contacts), GRAVITY)
    t = state.time
    for _ in range(n_steps):
        t += cfg.dt
    for name, arr in (("theta", theta), ("theta_dot", theta_dot),
                      ("tension", tension), ("temperature", temp)):
        if not np.all(np.isfinite(arr)):
            raise SimulationDiverged(name, t)
    return PlantState(theta, theta_dot, tension, temp, t, float(fmag))


def step(state: PlantState, T_target, contacts: ContactSet, model: RobotModel,
         cfg: PlantConfig, payload_mass: float = 0.0) -> PlantState:
    return advance(state, T_target, contacts, model, cfg, 1, payload_mass)

