import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tendon_relax import kinematics as kin
from tendon_relax.plant import (ContactSet, Desk, Handle, PlantConfig, PlantState,
                                SimulationDiverged, advance, contact_torque,
                                contact_wrench, initial_state, realize_tension,
                                sensor_lengths, step, thermal_step)

POSE = np.array([0.1, -0.6, 0.2, -1.0, 0.1])


def state_with(model, theta, tension, theta_dot=None, cfg=None):
    cfg = cfg or PlantConfig()
    s = initial_state(model, cfg, theta, tension)
    if theta_dot is not None:
        s = dataclasses.replace(s, theta_dot=np.asarray(theta_dot, dtype=float))
    return s


def balancing_tensions(model, theta, base=60.0):
    """Non-negative tensions whose muscle torque exactly cancels gravity."""
    R = model.moment_arms
    need = -kin.gravity_torque(model, theta)
    T0 = np.full(model.n_muscles, base)
    T = T0 + R @ np.linalg.solve(R.T @ R, need - R.T @ T0)
    assert np.all(T >= 0.0)
    np.testing.assert_allclose(R.T @ T, need, atol=1e-12)
    return T


def test_frictionless_realizes_target(model):
    cfg = PlantConfig(friction_band=0.0)
    s = state_with(model, np.zeros(5), 50.0)
    target = np.linspace(0.0, 90.0, 10)
    np.testing.assert_array_equal(realize_tension(target, s, cfg), target)


def test_stick_inside_band(model):
    cfg = PlantConfig(friction_band=5.0)
    s = state_with(model, np.zeros(5), 50.0)
    out = realize_tension(np.full(10, 52.0), s, cfg)
    np.testing.assert_array_equal(out, np.full(10, 50.0))


def test_slip_outside_band_updates_memory(model):
    cfg = PlantConfig(friction_band=5.0)
    s = state_with(model, np.zeros(5), 50.0)
    out = realize_tension(np.full(10, 80.0), s, cfg)
    np.testing.assert_array_equal(out, np.full(10, 75.0))
    s2 = step(s, np.full(10, 80.0), ContactSet(), model, cfg)
    np.testing.assert_allclose(s2.hysteresis_memory, 75.0)


def test_negative_target_rejected(model):
    s = state_with(model, np.zeros(5), 10.0)
    with pytest.raises(ValueError):
        realize_tension(np.full(10, -1.0), s, PlantConfig())
    with pytest.raises(ValueError):
        step(s, np.full(10, -1.0), ContactSet(), model, PlantConfig())


@given(arrays(np.float64, 10, elements=st.floats(0.0, 200.0)),
       arrays(np.float64, 10, elements=st.floats(0.0, 200.0)),
       st.floats(0.0, 20.0))
def test_stick_band_property(memory, target, fc):
    model = kin.default_model()
    cfg = PlantConfig(friction_band=fc)
    s = state_with(model, np.zeros(5), memory)
    out = realize_tension(target, s, cfg)
    assert np.all(out >= 0.0)
    assert np.all(np.abs(out - target) <= fc + 1e-12)
    moved = out != memory
    np.testing.assert_allclose(np.abs(out - target)[moved], fc, atol=1e-9)


def test_balanced_equilibrium_holds_for_one_step(model):
    T = balancing_tensions(model, POSE)
    s = state_with(model, POSE, T)
    s1 = step(s, T, ContactSet(), model, PlantConfig())
    np.testing.assert_allclose(s1.theta, POSE, atol=1e-9)


def test_free_arm_falls_with_gravity(model):
    th = np.array([0.0, -0.8, 0.0, -0.6, 0.0])
    s = state_with(model, th, 0.0)
    s1 = step(s, np.zeros(10), ContactSet(), model, PlantConfig())
    g = kin.gravity_torque(model, th)
    for j in (1, 3):
        assert np.sign(s1.theta_dot[j]) == np.sign(g[j]) != 0


def test_overdamped_settling(model):
    # hanging posture is the stable equilibrium under equal tensions
    s = state_with(model, np.zeros(5), 40.0, theta_dot=[0.1, -0.1, 0.1, 0.1, -0.1])
    s = advance(s, np.full(10, 40.0), ContactSet(), model, PlantConfig(), 10_000)
    assert np.linalg.norm(s.theta_dot) < 1e-4


def test_zero_tension_arm_stays_bounded(model):
    rng = np.random.default_rng(3)
    s = state_with(model, rng.uniform(-1.5, 1.5, 5), 0.0)
    cfg = PlantConfig()
    for _ in range(60):
        s = advance(s, np.zeros(10), ContactSet(), model, cfg, 1000)
        assert np.all(np.isfinite(s.theta)) and np.linalg.norm(s.theta_dot) < 50.0
    assert np.linalg.norm(s.theta_dot) < 1e-3
    assert np.all(np.abs(kin.gravity_torque(model, s.theta)) < 1e-2)


def test_limits_clamp_position(model):
    s = state_with(model, np.array([1.99, 0, 0, 0, 0]), 0.0, theta_dot=[50, 0, 0, 0, 0])
    s = advance(s, np.zeros(10), ContactSet(), model, PlantConfig(), 50)
    assert model.within_limits(s.theta)


def test_step_is_deterministic(model):
    s = state_with(model, POSE, 35.0, theta_dot=[0.1, 0.2, -0.1, 0.0, 0.3])
    T = np.linspace(20, 80, 10)
    desk = ContactSet(desk=Desk(-0.1))
    a = advance(s, T, desk, model, PlantConfig(), 100)
    b = advance(s, T, desk, model, PlantConfig(), 100)
    for name in ("theta", "theta_dot", "tension", "temperature"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


def test_desk_separated_gives_zero_torque(model):
    s = state_with(model, POSE, 0.0)
    z = kin.end_effector_position(model, POSE)[2]
    tau, fn = contact_wrench(model, s, ContactSet(desk=Desk(z - 0.01)))
    assert fn == 0.0 and np.all(tau == 0.0)


def test_desk_linear_penalty(model):
    s = state_with(model, POSE, 0.0)
    z = kin.end_effector_position(model, POSE)[2]
    desk = Desk(z + 0.001, stiffness=1.0e4, damping=50.0)
    tau, fn = contact_wrench(model, s, ContactSet(desk=desk))
    assert fn == pytest.approx(10.0, rel=1e-9)
    J = kin.end_effector_jacobian(model, POSE)
    np.testing.assert_allclose(tau, J.T @ np.array([0.0, 0.0, 10.0]), atol=1e-9)


def test_desk_never_pulls(model):
    z = kin.end_effector_position(model, POSE)[2]
    desk = ContactSet(desk=Desk(z + 0.001, stiffness=1.0e4, damping=50.0))
    # fast upward motion: damping would pull, the clamp forbids it
    J = kin.end_effector_jacobian(model, POSE)
    qd = np.linalg.pinv(J) @ np.array([0.0, 0.0, 2.0])
    s = state_with(model, POSE, 0.0, theta_dot=qd)
    tau, fn = contact_wrench(model, s, desk)
    assert fn == 0.0 and np.all(tau == 0.0)


def test_handle_on_circle_at_rest_is_free(model):
    z = kin.end_effector_position(model, POSE)
    handle = Handle(center=z + np.array([0.0, 0.0, 0.15]), radius=0.15)
    assert handle.distance(z) == pytest.approx(0.0, abs=1e-12)
    s = state_with(model, POSE, 0.0)
    np.testing.assert_allclose(contact_torque(model, s, ContactSet(handle=handle)), 0.0,
                               atol=1e-12)


def test_handle_pulls_back_toward_rim(model):
    p = kin.end_effector_position(model, POSE)
    handle = Handle(center=p + np.array([0.0, 0.0, 0.16]), radius=0.15)
    s = state_with(model, POSE, 0.0)
    tau, fn = contact_wrench(model, s, ContactSet(handle=handle))
    assert fn == pytest.approx(2.0e4 * 0.01, rel=1e-6)
    force = np.linalg.lstsq(kin.end_effector_jacobian(model, POSE).T, tau, rcond=None)[0]
    assert force[2] > 0.0  # toward the center, which sits above


def test_thermal_equilibrium_at_ambient():
    cfg = PlantConfig()
    C = np.full(10, cfg.ambient)
    np.testing.assert_array_equal(thermal_step(C, np.zeros(10), cfg, 0.001), C)


def test_thermal_fixed_point():
    cfg = PlantConfig()
    c_inf = cfg.ambient + cfg.heating_coeff * cfg.cooling_time_constant
    C = np.full(10, c_inf)
    np.testing.assert_allclose(thermal_step(C, np.full(10, cfg.reference_tension), cfg, 0.001),
                               c_inf, atol=1e-12)


def test_cooling_is_monotone_and_stays_above_ambient():
    cfg = PlantConfig()
    C = np.full(10, 80.0)
    for _ in range(20000):
        nxt = thermal_step(C, np.zeros(10), cfg, 0.01)
        assert np.all(nxt <= C) and np.all(nxt >= cfg.ambient)
        C = nxt


def test_sensor_lengths_include_model_error(model):
    cfg = PlantConfig()
    np.testing.assert_allclose(sensor_lengths(model, cfg, POSE) - kin.muscle_lengths(model, POSE),
                               cfg.rest_length_error, atol=1e-12)


def test_divergence_is_reported(model):
    # explicit damping term with dt * D / J >> 2, and no limits to stop it
    free = kin.RobotModel(model.moment_arms, model.rest_lengths, model.link_lengths,
                          model.link_masses, model.link_com, np.tile([-np.inf, np.inf], (5, 1)))
    cfg = PlantConfig(joint_inertia=1e-9, dt=0.008)
    s = state_with(free, POSE, 0.0, theta_dot=np.full(5, 0.1))
    with pytest.raises(SimulationDiverged) as exc:
        for _ in range(200):
            s = advance(s, np.zeros(10), ContactSet(), free, cfg, 1)
    assert exc.value.quantity in ("theta", "theta_dot", "tension", "temperature")


def test_plant_config_validation():
    with pytest.raises(ValueError):
        PlantConfig(dt=0.0)
    with pytest.raises(ValueError):
        PlantConfig(friction_band=-1.0)
    assert isinstance(PlantState(np.zeros(5), np.zeros(5), np.zeros(10), np.zeros(10)),
                      PlantState)
