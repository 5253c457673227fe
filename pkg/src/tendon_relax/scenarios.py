"""Experiment scenarios and the closed-loop runner.

Four experiments are reproduced at desk scale: random basic movements, a
held dumbbell, resting a loaded arm on a desk at five postures, and
turning a handle. Each runs with and without relaxation on identical
target streams.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.optimize import minimize

from . import kinematics as kin
from .control import ControlConfig, Controller, Mode, SensorSnapshot
from .plant import (ContactSet, Desk, Handle, PlantConfig, SimulationDiverged,
                    advance, contact_wrench, initial_state, sensor_lengths)
from .qp import QpError

log = logging.getLogger(__name__)

DESK_STATES_DEG = {1: (-45.0, -80.0), 2: (-45.0, -85.0), 3: (-45.0, -90.0),
                   4: (-50.0, -90.0), 5: (-50.0, -95.0)}
S_P, E_P = 1, 3
SETTLE_TIME = 0.5


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    basic_waypoints: int = 8
    basic_move: float = 3.0
    basic_hold: float = 3.0
    basic_range: float = 0.7
    dumbbell_payload: float = 3.6
    dumbbell_posture: np.ndarray = field(
        default_factory=lambda: np.array([0.0, -0.09, 0.0, -0.18, 0.0]))
    dumbbell_move: float = 3.0
    dumbbell_hold: float = 120.0
    desk_payload: float = 5.0
    desk_approach: np.ndarray = field(
        default_factory=lambda: np.array([0.0, -0.785398163, 0.0, -1.9, 0.0]))
    desk_move: float = 3.0
    desk_hold: float = 10.0
    desk_stiffness: float = 2.0e4
    desk_damping: float = 50.0
    desk_height_offset: float = 0.03
    handle_center: np.ndarray = field(
        default_factory=lambda: np.array([0.35, 0.0, -0.10]))
    handle_radius: float = 0.15
    handle_angle: float = 45.0
    handle_cycles: int = 5
    handle_move: float = 5.0
    handle_hold_center: float = 5.0
    handle_hold_side: float = 3.0
    handle_stiffness: float = 2.0e4
    handle_damping: float = 50.0

    def __post_init__(self):
        for name in ("dumbbell_posture", "desk_approach", "handle_center"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        self.validate()

    def validate(self):
        for name in ("basic_move", "basic_hold", "dumbbell_move", "dumbbell_hold",
                     "desk_move", "desk_hold", "handle_move", "handle_hold_center",
                     "handle_hold_side", "handle_radius", "desk_stiffness",
                     "desk_damping", "handle_stiffness", "handle_damping"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"scenario.{name} must be positive")
        if not 0.0 < self.basic_range <= 1.0:
            raise ValueError("scenario.basic_range must be in (0, 1]")
        if self.basic_waypoints < 1 or self.handle_cycles < 1:
            raise ValueError("scenario waypoint and cycle counts must be >= 1")
        if self.dumbbell_payload < 0.0 or self.desk_payload < 0.0:
            raise ValueError("scenario payloads must be non-negative")


@dataclass(frozen=True, eq=False)
class Waypoint:
    theta: np.ndarray
    move_duration: float
    hold_duration: float


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    payload_mass: float
    contacts: ContactSet
    waypoints: tuple
    seed: int
    initial_theta: np.ndarray
    external_force: np.ndarray | None = None

    def __post_init__(self):
        for w in self.waypoints:
            if not (w.move_duration > 0.0 and w.hold_duration > 0.0):
                raise ValueError("waypoint durations must be positive")

    @property
    def total_time(self) -> float:
        return float(sum(w.move_duration + w.hold_duration for w in self.waypoints))

    def segments(self):
        """``(start, move_end, hold_end, from_theta, to_theta)`` per waypoint."""
        t = 0.0
        prev = np.asarray(self.initial_theta, dtype=float)
        out = []
        for w in self.waypoints:
            out.append((t, t + w.move_duration, t + w.move_duration + w.hold_duration,
                        prev, w.theta))
            t += w.move_duration + w.hold_duration
            prev = w.theta
        return out

    def hold_windows(self, settle: float = SETTLE_TIME):
        return [(move_end + settle, hold_end)
                for _, move_end, hold_end, _, _ in self.segments()]

    def target(self, t: float) -> np.ndarray:
        """Joint target at time ``t``.

        Moves follow the straight joint-space segment with a quintic time
        scaling, so the commanded velocity is zero at both ends.
        """
        for start, move_end, hold_end, a, b in self.segments():
            if t < hold_end:
                if t >= move_end:
                    return np.array(b, dtype=float)
                s = max(0.0, (t - start) / (move_end - start))
                s = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
                return a + s * (b - a)
        return np.array(self.waypoints[-1].theta, dtype=float)


def scenario_names():
    return ["basic", "dumbbell"] + [f"desk_rest_{k}" for k in range(1, 6)] + ["handle"]


def desk_state_theta(k: int, n_joints: int = 5) -> np.ndarray:
    sp, ep = DESK_STATES_DEG[k]
    theta = np.zeros(n_joints)
    theta[S_P] = np.deg2rad(sp)
    theta[E_P] = np.deg2rad(ep)
    return theta


def solve_ik(model: kin.RobotModel, point, theta_ref) -> np.ndarray:
    """Posture closest to ``theta_ref`` that puts the end effector on ``point``."""
    point = np.asarray(point, dtype=float)
    theta_ref = np.asarray(theta_ref, dtype=float)
    lo, hi = model.joint_limits[:, 0], model.joint_limits[:, 1]
    res = minimize(
        lambda th: 0.5 * np.sum((th - theta_ref) ** 2), theta_ref,
        jac=lambda th: th - theta_ref,
        constraints=[{"type": "eq",
                      "fun": lambda th: kin.end_effector_position(model, th) - point,
                      "jac": lambda th: kin.end_effector_jacobian(model, th)}],
        bounds=list(zip(lo, hi)), method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 500})
    err = np.linalg.norm(kin.end_effector_position(model, res.x) - point)
    if err > 1e-6:
        raise ValueError(f"IK failed to reach {point} (residual {err:.2e} m)")
    return res.x


HANDLE_REFERENCE = np.array([0.0, -0.6, 0.0, -1.2, 0.0])


def build_scenario(name: str, seed: int = 0, model: kin.RobotModel | None = None,
                   cfg: ScenarioConfig | None = None) -> Scenario:
    model = kin.default_model() if model is None else model
    cfg = ScenarioConfig() if cfg is None else cfg
    N = model.n_joints
    zero = np.zeros(N)

    if name == "basic":
        rng = np.random.default_rng(seed)
        lo = cfg.basic_range * model.joint_limits[:, 0]
        hi = cfg.basic_range * model.joint_limits[:, 1]
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("the basic scenario needs finite joint limits")
        wps = tuple(Waypoint(rng.uniform(lo, hi), cfg.basic_move, cfg.basic_hold)
                    for _ in range(cfg.basic_waypoints))
        return Scenario(name, 0.0, ContactSet(), wps, seed, zero)

    if name == "dumbbell":
        wp = Waypoint(model.clamp(cfg.dumbbell_posture), cfg.dumbbell_move, cfg.dumbbell_hold)
        return Scenario(name, cfg.dumbbell_payload, ContactSet(), (wp,), seed, zero)

    if name.startswith("desk_rest_"):
        try:
            k = int(name.rsplit("_", 1)[1])
        except ValueError:
            k = -1
        if k not in DESK_STATES_DEG:
            raise KeyError(f"unknown scenario {name!r}")
        # desk top sits where the nominal model puts the hand in state 2
        height = (kin.end_effector_position(model, desk_state_theta(2, N))[2]
                  + cfg.desk_height_offset)
        desk = Desk(float(height), cfg.desk_stiffness, cfg.desk_damping)
        wp = Waypoint(desk_state_theta(k, N), cfg.desk_move, cfg.desk_hold)
        return Scenario(name, cfg.desk_payload, ContactSet(desk=desk), (wp,), seed,
                        model.clamp(cfg.desk_approach))

    if name == "handle":
        handle = Handle(cfg.handle_center, cfg.handle_radius, cfg.handle_stiffness,
                        cfg.handle_damping)
        center = solve_ik(model, handle.point(0.0), HANDLE_REFERENCE)
        a = np.deg2rad(cfg.handle_angle)
        plus = solve_ik(model, handle.point(a), center)
        minus = solve_ik(model, handle.point(-a), center)
        wps = [Waypoint(center, 1.0, cfg.handle_hold_center)]
        for _ in range(cfg.handle_cycles):
            wps += [Waypoint(plus, cfg.handle_move, cfg.handle_hold_side),
                    Waypoint(center, cfg.handle_move, cfg.handle_hold_center),
                    Waypoint(minus, cfg.handle_move, cfg.handle_hold_side),
                    Waypoint(center, cfg.handle_move, cfg.handle_hold_center)]
        return Scenario(name, 0.0, ContactSet(handle=handle), tuple(wps), seed, center)

    raise KeyError(f"unknown scenario {name!r}")


@dataclass(frozen=True, eq=False)
class TraceRecord:
    time: float
    theta: np.ndarray
    theta_target: np.ndarray
    T: np.ndarray
    T_target: np.ndarray
    T_necessary: np.ndarray
    C: np.ndarray
    delta_l: np.ndarray
    mode: str
    contact_fn: float


class Trace:
    """Columnar store of one record per control tick."""

    def __init__(self, scenario: Scenario, mrc_enabled: bool, n_ticks: int,
                 n_joints: int, n_muscles: int, control_rate: float):
        self.scenario = scenario
        self.mrc_enabled = mrc_enabled
        self.control_rate = control_rate
        self.time = np.zeros(n_ticks)
        self.theta = np.zeros((n_ticks, n_joints))
        self.theta_target = np.zeros((n_ticks, n_joints))
        self.T = np.zeros((n_ticks, n_muscles))
        self.T_target = np.zeros((n_ticks, n_muscles))
        self.T_necessary = np.zeros((n_ticks, n_muscles))
        self.C = np.zeros((n_ticks, n_muscles))
        self.delta_l = np.zeros((n_ticks, n_muscles))
        self.mode = [""] * n_ticks
        self.contact_fn = np.zeros(n_ticks)
        self.ee_position = np.zeros((n_ticks, 3))
        self.delta_l_max = float("inf")
        self.length = 0
        self.error: str | None = None

    def __len__(self):
        return self.length

    def __getitem__(self, k) -> TraceRecord:
        if not -self.length <= k < self.length:
            raise IndexError(k)
        k %= self.length
        return TraceRecord(self.time[k], self.theta[k], self.theta_target[k], self.T[k],
                           self.T_target[k], self.T_necessary[k], self.C[k],
                           self.delta_l[k], self.mode[k], self.contact_fn[k])

    def __iter__(self) -> Iterator[TraceRecord]:
        for k in range(self.length):
            yield self[k]

    def truncate(self):
        n = self.length
        for name in ("time", "theta", "theta_target", "T", "T_target", "T_necessary",
                     "C", "delta_l", "contact_fn", "ee_position"):
            setattr(self, name, getattr(self, name)[:n])
        self.mode = self.mode[:n]

    def tension_norm(self) -> np.ndarray:
        return np.linalg.norm(self.T, axis=1)

    def window_mask(self, settle: float = SETTLE_TIME) -> np.ndarray:
        mask = np.zeros(self.length, dtype=bool)
        for a, b in self.scenario.hold_windows(settle):
            mask |= (self.time >= a - 1e-9) & (self.time < b - 1e-9)
        return mask

    def moving_mask(self) -> np.ndarray:
        return np.array([m == Mode.MOVING.value for m in self.mode], dtype=bool)


def run_scenario(scenario: Scenario, mrc_enabled: bool, model: kin.RobotModel | None = None,
                 plant_cfg: PlantConfig | None = None,
                 control_cfg: ControlConfig | None = None) -> Trace:
    """Closed-loop run: plant at ``1/dt``, controller at the control rate.

    A divergence stops the run; the partial trace is returned with
    ``trace.error`` set.
    """
    model = kin.default_model() if model is None else model
    plant_cfg = PlantConfig() if plant_cfg is None else plant_cfg
    control_cfg = ControlConfig() if control_cfg is None else control_cfg

    rate = control_cfg.control_rate
    substeps = int(round(1.0 / (plant_cfg.dt * rate)))
    if substeps < 1 or abs(substeps * plant_cfg.dt * rate - 1.0) > 1e-9:
        raise ValueError("control period must be an integer number of plant steps")
    n_ticks = int(round(scenario.total_time * rate))

    bias = control_cfg.bias(model.n_muscles)
    state = initial_state(model, plant_cfg, scenario.initial_theta, bias)
    _, fn0 = contact_wrench(model, state, scenario.contacts)
    controller = Controller(model, control_cfg, scenario.initial_theta, mrc_enabled,
                            scenario.payload_mass, scenario.external_force)
    trace = Trace(scenario, mrc_enabled, n_ticks, model.n_joints, model.n_muscles, rate)
    trace.delta_l_max = control_cfg.delta_l_max
    contact_fn = fn0
    hot = False
    T_target = bias
    outputs = None
    for k in range(n_ticks):
        t = k / rate
        theta_target = scenario.target(t)
        snap = SensorSnapshot(sensor_lengths(model, plant_cfg, state.theta),
                              state.tension, state.theta)
        try:
            outputs = controller.tick(theta_target, snap)
            T_target = outputs.T_target
        except QpError as exc:
            log.warning("t=%.3f s: controller tick aborted (%s); keeping previous command",
                        t, exc)
        trace.time[k] = t
        trace.theta[k] = state.theta
        trace.theta_target[k] = model.clamp(theta_target)
        trace.T[k] = state.tension
        trace.T_target[k] = T_target
        trace.T_necessary[k] = controller.T_necessary
        trace.C[k] = state.temperature
        trace.delta_l[k] = controller.relax.delta_l
        trace.mode[k] = controller.relax.mode.value
        trace.contact_fn[k] = contact_fn
        trace.ee_position[k] = kin.end_effector_position(model, state.theta)
        trace.length = k + 1
        if not hot and state.temperature.max() > plant_cfg.temperature_threshold:
            hot = True
            log.warning("%s (mrc=%s): muscle %d exceeded %.0f degC at t=%.2f s",
                        scenario.name, mrc_enabled, int(np.argmax(state.temperature)),
                        plant_cfg.temperature_threshold, t)
        try:
            state = advance(state, T_target, scenario.contacts, model, plant_cfg,
                            substeps, scenario.payload_mass)
        except SimulationDiverged as exc:
            trace.error = str(exc)
            log.error("%s: simulation diverged: %s", scenario.name, exc)
            break
        contact_fn = state.contact_force
    trace.truncate()
    return trace


@dataclass(frozen=True)
class ComparisonSummary:
    scenario: str
    seed: int
    mean_static_tension_with: float
    mean_static_tension_without: float
    peak_temperature_with: float
    peak_temperature_without: float
    final_hold_error_with: float
    final_hold_error_without: float
    saturation_fraction: float
    temperature_rise_with: float
    temperature_rise_without: float

    @property
    def tension_reduction(self) -> float:
        """Relative drop of the mean hold-window tension norm."""
        if self.mean_static_tension_without == 0.0:
            return 0.0
        return 1.0 - self.mean_static_tension_with / self.mean_static_tension_without

    def rows(self):
        return [
            ("mean_static_tension_norm", self.mean_static_tension_with,
             self.mean_static_tension_without),
            ("peak_temperature", self.peak_temperature_with, self.peak_temperature_without),
            ("final_hold_joint_error", self.final_hold_error_with,
             self.final_hold_error_without),
            ("cumulative_temperature_rise", self.temperature_rise_with,
             self.temperature_rise_without),
        ]


def summarize(with_trace: Trace, without_trace: Trace) -> ComparisonSummary:
    a, b = with_trace, without_trace
    if (a.scenario.name != b.scenario.name or a.scenario.seed != b.scenario.seed
            or len(a) != len(b)):
        raise ValueError("traces come from different scenarios or runs")
    mask = a.window_mask()
    if not mask.any():
        raise ValueError("no hold window samples in trace")

    def final_error(tr):
        return float(np.linalg.norm(tr.theta[-1] - tr.theta_target[-1]))

    def rise(tr):
        return float(np.sum(tr.C[-1] - tr.C[0]))

    sat = float(np.mean(a.delta_l[mask] >= a.delta_l_max - 1e-12))
    return ComparisonSummary(
        a.scenario.name, a.scenario.seed,
        float(a.tension_norm()[mask].mean()), float(b.tension_norm()[mask].mean()),
        float(a.C.max()), float(b.C.max()),
        final_error(a), final_error(b), sat, rise(a), rise(b))
