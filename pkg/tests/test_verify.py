import dataclasses
import math

import numpy as np
import pytest

from dronebar import Gains, PhysicalParams
from dronebar import dynamics as dyn
from dronebar import simulate as sim
from dronebar import verify


def test_lemma1_determinant_at_rest(p):
    # [[1.62, 1.35, 0], [0.9, 0.9, 0], [0, 0, 1.2]] -> 1.2 * (1.458 - 1.215)
    assert verify.lemma1_closed_form(np.zeros(3), p) == pytest.approx(0.2916, abs=1e-12)
    assert np.linalg.det(verify.lemma1_matrix(np.zeros(3), p)) == pytest.approx(0.2916, abs=1e-12)


def test_lemma1_collinear_rope_degenerates(p):
    # rope 2 in line with the bar: cos(t2 + t3) = 0 and cos(t1 - t3) = 0 together
    th = np.array([0.0, 0.7, math.pi / 2 - 0.7])
    th[0] = th[2] - math.pi / 2
    assert verify.lemma1_closed_form(th, p) == pytest.approx(0.0, abs=1e-15)


def test_lemma1_small_run():
    r = verify.lemma1_check(500, seed=3)
    assert r.passed
    assert r.details["plain_box_nonpositive"] > 0


def test_dynamics_checks_pass_small():
    assert verify.dynamics_cross_checks(300, seed=1).passed


def test_corrupted_inertia_is_caught(p):
    def bad(q):
        M = dyn.inertia_matrix(q, p)
        M[..., 0, 2] += 1e-3 * np.sin(np.asarray(q)[..., 2])
        return M

    r = verify.dynamics_cross_checks(300, p, seed=1, inertia=bad)
    assert not r.passed
    assert r.offending["check"] == "inertia_symmetric"
    assert "q" in r.offending


def test_lemma2_residual_zero_at_hover(p, gains):
    best = verify._min_over_psi(np.array([0.0]), p, gains)
    assert best[0] < 1e-10


def test_lemma2_scan_coarse():
    scan = verify.lemma2_scan(grid_n=401)
    assert scan.report.passed
    assert scan.roots == [0.0]
    assert scan.report.details["min_residual_off_zero"] > 1e-6


def test_lyapunov_step_mismatch_is_fifth_order():
    base = sim.load_scenario("exp1_test1").without_disturbances()
    mis = []
    for dt in (8e-3, 4e-3, 2e-3):
        log = sim.run(dataclasses.replace(base, dt=dt, duration=dt))
        mis.append(abs(log.lyapunov_mismatch[1]))
    ratios = [mis[0] / mis[1], mis[1] / mis[2]]
    assert all(25 < r < 40 for r in ratios), ratios


def test_closed_loop_audit_flags_saturation():
    cfg = dataclasses.replace(sim.load_scenario("exp1_test1").without_disturbances(),
                              duration=3.0, thrust_limit=17.0)
    log = sim.run(cfg)
    assert log.saturated
    r = verify.closed_loop_audit(log, cfg.gains)
    assert not r.passed
    assert any(c.name == "no_saturation" and not c.passed for c in r.children)


def test_closed_loop_audit_short_run_passes():
    cfg = dataclasses.replace(sim.load_scenario("exp1_test1").without_disturbances(), duration=5.0)
    assert verify.closed_loop_audit(sim.run(cfg), cfg.gains).passed


def test_pd_run_skips_lyapunov_claims():
    cfg = dataclasses.replace(sim.load_scenario("exp1_test1").without_disturbances(),
                              duration=2.0).with_controller("pd")
    r = verify.closed_loop_audit(sim.run(cfg), cfg.gains)
    assert [c.name for c in r.children] == ["power_balance"]
    assert r.passed


def test_report_combine_and_dict():
    a = verify.AuditReport("a", 3, 0.5, 1.0, True)
    b = verify.AuditReport("b", 2, 4.0, 2.0, False, {"q": [0, 0, 0, 0, 0]})
    r = verify.AuditReport.combine("ab", [a, b])
    assert not r.passed and r.samples == 5
    assert r.max_residual == pytest.approx(2.0)
    assert r.offending["check"] == "b"
    d = r.to_dict()
    assert [c["name"] for c in d["children"]] == ["a", "b"]
    assert any("FAIL" in line for line in r.summary_lines())


def test_unknown_suite():
    with pytest.raises(ValueError):
        verify.run_suite("nope")


def test_perturbation_grid_shape():
    offs = verify.PerturbationGrid().offsets()
    assert offs.shape == (243, 5)
    assert np.max(np.abs(offs[:, :2])) == 0.5
    assert np.max(np.abs(offs[:, 2:])) == pytest.approx(math.radians(15))


def test_basin_probe_tiny_grid():
    grid = verify.PerturbationGrid(position=(0.2,), angle=(0.1,))
    r = verify.equilibrium_basin_probe(grid=grid, t_max=60.0)
    assert r.passed and r.samples == 1


def test_params_validation():
    with pytest.raises(ValueError):
        PhysicalParams(m3=0.0)
    with pytest.raises(ValueError):
        Gains(sigma=-1.0)
