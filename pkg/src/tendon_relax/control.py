"""Muscle stiffness control plus the muscle relaxation state machine.

Per control tick the commanded muscle length is the geometric target
length plus the accumulated relaxation ``delta_l``; the one-sided spring law
turns the measured length error into a target tension. The relaxation
vector is edited by at most one muscle per tick.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kinematics as kin
from .qp import QpProblem, QpWeights, solve_necessary_tension

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    STATIC = "STATIC"
    MOVING = "MOVING"
    STOPPED = "STOPPED"


@dataclass(frozen=True, eq=False)
class ControlConfig:
    t_min: float = 30.0
    delta_l_plus: float = 0.03
    delta_l_minus: float = 0.03
    delta_l_max: float = 2.0
    delta_theta_max: float = 0.1
    k_stiff: float = 20.0
    t_bias: np.ndarray = field(default_factory=lambda: np.full(10, 10.0))
    estimator_rate: float = 40.0
    control_rate: float = 125.0
    w1_scale: float = 1.0e-5
    w2_scale: float = 1.0
    qp_tol: float = 1e-9
    # subtract the self-weight tension stretch from the target lengths
    self_weight_compensation: bool = True
    moving_eps: float = 1e-9

    def __post_init__(self):
        bias = np.array(self.t_bias, dtype=float).reshape(-1)
        bias.setflags(write=False)
        object.__setattr__(self, "t_bias", bias)
        self.validate()

    def validate(self):
        for name in ("t_min", "delta_l_plus", "delta_l_minus", "delta_l_max",
                     "delta_theta_max", "k_stiff", "estimator_rate", "control_rate",
                     "w1_scale", "w2_scale", "qp_tol"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"control.{name} must be positive")
        if self.delta_l_plus > self.delta_l_max:
            raise ValueError("control.delta_l_plus must not exceed control.delta_l_max")
        if np.any(self.t_bias < 0.0):
            raise ValueError("control.t_bias must be non-negative")

    @property
    def weights(self) -> QpWeights:
        return QpWeights(self.w1_scale, self.w2_scale)

    def bias(self, n_muscles: int) -> np.ndarray:
        if self.t_bias.size == 1:
            return np.full(n_muscles, float(self.t_bias[0]))
        if self.t_bias.size != n_muscles:
            raise ValueError(f"t_bias has {self.t_bias.size} entries, model has "
                             f"{n_muscles} muscles")
        return self.t_bias.copy()


@dataclass(frozen=True, eq=False)
class RelaxationState:
    delta_l: np.ndarray
    theta_previous: np.ndarray
    mode: Mode = Mode.STATIC

    @classmethod
    def initial(cls, n_muscles: int, theta) -> "RelaxationState":
        return cls(np.zeros(n_muscles), np.array(theta, dtype=float), Mode.STATIC)


class SensorSnapshot(NamedTuple):
    lengths: np.ndarray
    tensions: np.ndarray
    theta: np.ndarray


@dataclass(frozen=True, eq=False)
class ControllerOutputs:
    l_command: np.ndarray
    T_target: np.ndarray
    T_necessary: np.ndarray
    mode: Mode
    active_set: frozenset
    drift: float
    moving: bool


def stiffness_control(l, l_command, cfg: ControlConfig) -> np.ndarray:
    """``T_target = T_bias + max(0, K (l - l_command))``."""
    l = np.asarray(l, dtype=float)
    stretch = l - np.asarray(l_command, dtype=float)
    return cfg.bias(l.size) + np.maximum(0.0, cfg.k_stiff * stretch)


def compose_command(l_base, relax: RelaxationState) -> np.ndarray:
    return np.asarray(l_base, dtype=float) + relax.delta_l


def mrc_step(T_current, T_necessary, relax: RelaxationState, moving: bool,
             theta_current, cfg: ControlConfig) -> RelaxationState:
    """One tick of the relaxation state machine.

    While moving, the most necessary muscle that still carries relaxation is
    tightened by ``delta_l_minus``. While static, the least necessary muscle
    above ``t_min`` that is not saturated is relaxed by ``delta_l_plus``.
    A joint drift of ``delta_theta_max`` away from the posture captured when
    the motion ended latches the machine in STOPPED until the next motion.
    Ordering ties go to the lowest muscle index.
    """
    T_current = np.asarray(T_current, dtype=float)
    T_necessary = np.asarray(T_necessary, dtype=float)
    theta_current = np.asarray(theta_current, dtype=float)
    dl = relax.delta_l.copy()

    if moving:
        for i in np.argsort(-T_necessary, kind="stable"):
            if dl[i] > 0.0:
                dl[i] = max(dl[i] - cfg.delta_l_minus, 0.0)
                break
        return RelaxationState(dl, theta_current.copy(), Mode.MOVING)

    if relax.mode is Mode.STOPPED:
        return relax
    theta_prev = theta_current.copy() if relax.mode is Mode.MOVING else relax.theta_previous
    if np.linalg.norm(theta_current - theta_prev) >= cfg.delta_theta_max:
        return RelaxationState(dl, theta_prev, Mode.STOPPED)
    for i in np.argsort(T_necessary, kind="stable"):
        if T_current[i] <= cfg.t_min or dl[i] >= cfg.delta_l_max:
            continue
        dl[i] = min(dl[i] + cfg.delta_l_plus, cfg.delta_l_max)
        break
    return RelaxationState(dl, theta_prev, Mode.STATIC)


def estimator_due(tick: int, cfg: ControlConfig) -> bool:
    """Whether the 40 Hz estimator fires on this 125 Hz control tick."""
    if tick == 0:
        return True
    ratio = cfg.estimator_rate / cfg.control_rate
    return math.floor(tick * ratio + 1e-9) != math.floor((tick - 1) * ratio + 1e-9)


class Controller:
    """Rate-separated controller: estimator refresh plus relaxation and
    stiffness control, all keyed to the control tick counter."""

    def __init__(self, model: kin.RobotModel, cfg: ControlConfig, theta0,
                 mrc_enabled: bool = True, payload_mass: float = 0.0,
                 external_force=None):
        self.model = model
        self.cfg = cfg
        self.mrc_enabled = mrc_enabled
        self.payload_mass = float(payload_mass)
        self.external_force = (None if external_force is None
                               else np.asarray(external_force, dtype=float))
        self.G = kin.muscle_jacobian(model, np.zeros(model.n_joints))
        self.relax = RelaxationState.initial(model.n_muscles, theta0)
        self.tick_count = 0
        self.T_necessary = np.full(model.n_muscles, cfg.t_min)
        self.active_set = frozenset()
        self._last_target = None
        self._base_cache = (None, None)
        self._clamp_warned = False

    def base_lengths(self, theta_target) -> np.ndarray:
        """Target muscle lengths for ``theta_target``.

        With self-weight compensation the lengths are shortened by the
        spring stretch that makes the arm's own weight balance at the target.
        """
        key, cached = self._base_cache
        if key is not None and np.array_equal(key, theta_target):
            return cached
        lengths = kin.muscle_lengths(self.model, theta_target)
        if self.cfg.self_weight_compensation:
            bias = self.cfg.bias(self.model.n_muscles)
            tau = kin.necessary_torque(self.model, theta_target)
            sol = solve_necessary_tension(
                QpProblem(self.G, tau, self.cfg.weights, float(bias.min())),
                self.cfg.qp_tol)
            lengths = lengths - np.maximum(0.0, sol.x - bias) / self.cfg.k_stiff
        self._base_cache = (np.array(theta_target, dtype=float), lengths)
        return lengths

    def necessary_tension(self, theta) -> np.ndarray:
        tau = kin.necessary_torque(self.model, theta, self.external_force,
                                   self.payload_mass)
        sol = solve_necessary_tension(
            QpProblem(self.G, tau, self.cfg.weights, self.cfg.t_min), self.cfg.qp_tol)
        self.active_set = sol.active_set
        return sol.x

    def tick(self, theta_target, snapshot: SensorSnapshot) -> ControllerOutputs:
        """One control tick; state is committed only if every stage succeeds."""
        raw = np.asarray(theta_target, dtype=float)
        theta_target = self.model.clamp(raw)
        if not self._clamp_warned and not np.array_equal(raw, theta_target):
            log.warning("joint target %s outside limits; clamped", np.round(raw, 4).tolist())
            self._clamp_warned = True
        l_base = self.base_lengths(theta_target)
        moving = (self._last_target is not None and
                  float(np.max(np.abs(theta_target - self._last_target))) > self.cfg.moving_eps)
        T_nec = self.T_necessary
        if estimator_due(self.tick_count, self.cfg):
            T_nec = self.necessary_tension(snapshot.theta)

        if self.mrc_enabled:
            relax = mrc_step(snapshot.tensions, T_nec, self.relax, moving,
                             snapshot.theta, self.cfg)
        else:
            relax = RelaxationState(self.relax.delta_l,
                                    np.array(snapshot.theta, dtype=float),
                                    Mode.MOVING if moving else Mode.STATIC)
        l_command = compose_command(l_base, relax)
        T_target = stiffness_control(snapshot.lengths, l_command, self.cfg)

        self.T_necessary = T_nec
        self.relax = relax
        self._last_target = theta_target
        self.tick_count += 1
        drift = float(np.linalg.norm(np.asarray(snapshot.theta) - relax.theta_previous))
        return ControllerOutputs(l_command, T_target, T_nec, relax.mode,
                                 self.active_set, drift, moving)
