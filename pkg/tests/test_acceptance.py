"""Acceptance suite: one test per criterion, each logs a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
"""
import contextlib
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import ACCEPTANCE_LINES  # noqa: E402

from tendon_relax import cli, report  # noqa: E402
from tendon_relax import kinematics as kin  # noqa: E402
from tendon_relax.control import ControlConfig, Mode, RelaxationState, mrc_step  # noqa: E402
from tendon_relax.qp import QpProblem, QpWeights, oracle_solve, solve_necessary_tension, verify_kkt  # noqa: E402,E501
from tendon_relax.scenarios import build_scenario, run_scenario, summarize  # noqa: E402

pytestmark = pytest.mark.acceptance

SEED = 42
_clock = {}


@contextlib.contextmanager
def criterion(n, title):
    """Record a PASS/FAIL line; the body may append detail to the yielded list."""
    detail = []
    try:
        yield detail
    except BaseException:
        ACCEPTANCE_LINES.append(f"criterion {n} FAIL  {title}  {'; '.join(detail)}")
        raise
    ACCEPTANCE_LINES.append(f"criterion {n} PASS  {title}  {'; '.join(detail)}")


@pytest.fixture(scope="module", autouse=True)
def suite_clock():
    _clock["start"] = time.perf_counter()
    yield


def timed_pair(name):
    sc = build_scenario(name, SEED)
    t0 = time.perf_counter()
    on = run_scenario(sc, True)
    off = run_scenario(sc, False)
    return sc, on, off, time.perf_counter() - t0


@pytest.fixture(scope="module")
def basic():
    return timed_pair("basic")


@pytest.fixture(scope="module")
def desk():
    return {k: timed_pair(f"desk_rest_{k}") for k in range(1, 6)}


def test_criterion_1_qp_matches_oracle():
    with criterion(1, "QP active set vs projected-gradient oracle") as d:
        rng = np.random.default_rng(SEED)
        worst_dx = worst_kkt = 0.0
        t0 = time.perf_counter()
        for _ in range(500):
            M = int(rng.integers(1, 11))
            N = int(rng.integers(1, min(M, 5) + 1))
            p = QpProblem(rng.uniform(-0.03, 0.03, (M, N)), rng.uniform(-5.0, 5.0, N),
                          QpWeights(), 30.0)
            sol = solve_necessary_tension(p)
            ok, res = verify_kkt(p, sol.x, 1e-8)
            worst_kkt = max(worst_kkt, res)
            worst_dx = max(worst_dx, float(np.abs(sol.x - oracle_solve(p)).max()))
            assert ok, res
        elapsed = time.perf_counter() - t0
        d.append(f"max |x - oracle| {worst_dx:.2e}, max KKT {worst_kkt:.2e}, {elapsed:.2f} s")
        assert worst_dx <= 1e-6
        assert elapsed < 5.0


def test_criterion_2_jacobian_and_gravity_oracles():
    with criterion(2, "muscle Jacobian and gravity torque vs finite differences") as d:
        model = kin.default_model()
        rng = np.random.default_rng(SEED)
        lim = model.joint_limits
        h = 1e-6
        err_g = err_tau = 0.0
        for th in rng.uniform(lim[:, 0], lim[:, 1], size=(100, 5)):
            G = kin.muscle_jacobian(model, th)
            fd_G = np.zeros_like(G)
            fd_tau = np.zeros(5)
            for j in range(5):
                e = np.zeros(5)
                e[j] = h
                fd_G[:, j] = (kin.muscle_lengths(model, th + e)
                              - kin.muscle_lengths(model, th - e)) / (2 * h) / 1000.0
                fd_tau[j] = -(kin.potential_energy(model, th + e)
                              - kin.potential_energy(model, th - e)) / (2 * h)
            err_g = max(err_g, float(np.abs(G - fd_G).max()))
            err_tau = max(err_tau, float(np.abs(kin.gravity_torque(model, th) - fd_tau).max()))
        d.append(f"max |G - fd| {err_g:.1e}, max |tau_g - fd| {err_tau:.1e}")
        assert err_g <= 1e-8 and err_tau <= 1e-6


def _expected_step(T, Tn, prev, moving, th, cfg):
    """Straight-line restatement of the relaxation contract, used as the oracle."""
    dl = prev.delta_l.copy()
    if moving:
        held = [i for i in range(dl.size) if dl[i] > 0.0]
        if held:
            top = max(held, key=lambda i: (Tn[i], -i))
            dl[top] = max(0.0, dl[top] - cfg.delta_l_minus)
        return dl, Mode.MOVING
    if prev.mode is Mode.STOPPED:
        return dl, Mode.STOPPED
    ref = th if prev.mode is Mode.MOVING else prev.theta_previous
    if np.linalg.norm(th - ref) >= cfg.delta_theta_max:
        return dl, Mode.STOPPED
    ok = [i for i in range(dl.size) if T[i] > cfg.t_min and dl[i] < cfg.delta_l_max]
    if ok:
        low = min(ok, key=lambda i: (Tn[i], i))
        dl[low] = min(cfg.delta_l_max, dl[low] + cfg.delta_l_plus)
    return dl, Mode.STATIC


def test_criterion_3_relaxation_contract():
    with criterion(3, "relaxation state machine over 1e5 random tick streams") as d:
        cfg = ControlConfig()
        rng = np.random.default_rng(SEED)
        modes = (Mode.STATIC, Mode.MOVING, Mode.STOPPED)
        counts = dict.fromkeys(("ticks", "stopped_latched", "unwinds", "relaxes"), 0)
        for _ in range(100_000):
            n = int(rng.integers(8, 13))
            dl0 = np.minimum(rng.integers(0, 80, 10) * 0.03, 2.0) * (rng.random(10) < 0.6)
            state = RelaxationState(dl0, rng.uniform(-0.05, 0.05, 5),
                                    modes[int(rng.integers(0, 3))])
            T = rng.integers(0, 13, (n, 10)) * 10.0
            Tn = rng.integers(0, 8, (n, 10)) * 10.0
            moving = rng.random(n) < 0.3
            th = state.theta_previous + rng.normal(0.0, 0.05, (n, 5))
            for k in range(n):
                prev = state
                state = mrc_step(T[k], Tn[k], prev, bool(moving[k]), th[k], cfg)
                dl, mode = _expected_step(T[k], Tn[k], prev, moving[k], th[k], cfg)
                diff = state.delta_l - prev.delta_l
                assert np.all(state.delta_l >= 0.0) and np.all(state.delta_l <= 2.0)
                assert np.count_nonzero(diff) <= 1
                assert np.all(np.abs(diff) <= 0.03 + 1e-12)
                assert state.mode is mode
                np.testing.assert_array_equal(state.delta_l, dl)
                counts["ticks"] += 1
                counts["stopped_latched"] += prev.mode is Mode.STOPPED and not moving[k]
                counts["unwinds"] += bool(np.any(diff < 0.0))
                counts["relaxes"] += bool(np.any(diff > 0.0))
        d.append(", ".join(f"{k} {v}" for k, v in counts.items()))
        assert min(counts.values()) > 1000


def test_criterion_4_basic(basic):
    with criterion(4, "basic movements: hold tension drop, posture unchanged") as d:
        _, on, off, elapsed = basic
        s = summarize(on, off)
        gap = abs(s.final_hold_error_with - s.final_hold_error_without)
        d.append(f"reduction {100 * s.tension_reduction:.1f}%, error gap {gap:.3f} rad, "
                 f"{elapsed:.1f} s")
        assert s.tension_reduction >= 0.10
        assert gap <= 0.1
        assert elapsed < 30.0


def test_criterion_5_dumbbell():
    with criterion(5, "dumbbell: temperature peak and 60 degC monitor") as d:
        _, on, off, _ = timed_pair("dumbbell")
        hot_on, hot_off = float(on.C.max()), float(off.C.max())
        d.append(f"peak with {hot_on:.1f} degC, without {hot_off:.1f} degC")
        assert hot_on < hot_off
        assert hot_off > 60.0 and hot_on <= 60.0


def test_criterion_6_desk(desk):
    with criterion(6, "desk rest: per-state hold tension") as d:
        w, wo = [], []
        for k in range(1, 6):
            _, on, off, _ = desk[k]
            w.append(float(on.tension_norm()[on.window_mask()].mean()))
            wo.append(float(off.tension_norm()[off.window_mask()].mean()))
        w, wo = np.array(w), np.array(wo)
        gap = wo - w
        d.append("with " + " ".join(f"{v:.1f}" for v in w)
                 + " | without " + " ".join(f"{v:.1f}" for v in wo))
        assert np.all(w <= wo)
        assert min(gap[0], gap[4]) > max(gap[1], gap[2])
        assert int(np.argmin(w)) in (1, 2) and int(np.argmin(wo)) in (1, 2)


def test_criterion_7_handle():
    with criterion(7, "handle: hold tension, agonist relaxation, heating, rim") as d:
        sc, on, off, _ = timed_pair("handle")
        s = summarize(on, off)
        top = np.argsort(-on.T_necessary[on.moving_mask()].mean(axis=0), kind="stable")[:2]
        agonist_dl = on.delta_l[on.window_mask()][:, top].max(axis=0)
        handle = sc.contacts.handle
        rim = max(max(handle.distance(p) for p in tr.ee_position) for tr in (on, off))
        d.append(f"reduction {100 * s.tension_reduction:.1f}%, agonists {top.tolist()} "
                 f"max dl {np.round(agonist_dl, 2).tolist()} mm, temperature rise "
                 f"{s.temperature_rise_with:.0f} vs {s.temperature_rise_without:.0f}, "
                 f"rim {1000 * rim:.2f} mm")
        assert s.tension_reduction >= 0.15
        assert agonist_dl.max() > 0.0
        assert s.temperature_rise_with < s.temperature_rise_without
        assert rim < 0.005


def test_criterion_8_determinism(basic, desk, tmp_path):
    with criterion(8, "determinism: reruns give byte-identical CSVs") as d:
        files = []
        for sub in ("a", "b"):
            assert cli.main(["run", "desk_rest_3", "--mrc", "both", "--seed", str(SEED),
                             "--out", str(tmp_path / sub), "--no-figures"]) == 0
        for label in ("on", "off"):
            name = f"desk_rest_3_{label}_{SEED}.csv"
            a, b = (tmp_path / "a" / name).read_bytes(), (tmp_path / "b" / name).read_bytes()
            assert a == b
            files.append(name)
        _, on, off, _ = desk[3]
        assert report.trace_csv_text(on).encode() == (tmp_path / "a" / files[0]).read_bytes()
        assert report.trace_csv_text(off).encode() == (tmp_path / "a" / files[1]).read_bytes()
        sc, b_on, _, _ = basic
        assert report.trace_csv_text(run_scenario(sc, True)) == report.trace_csv_text(b_on)
        d.append("desk_rest_3 via CLI twice, desk_rest_3 and basic in process")


def test_criterion_9_wall_clock():
    with criterion(9, "full acceptance suite wall clock") as d:
        elapsed = time.perf_counter() - _clock["start"]
        d.append(f"{elapsed:.1f} s")
        assert elapsed < 180.0


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
