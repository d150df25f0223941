import math

import numpy as np
import pytest

from dronebar import ActuationFault, BarrierDomainFault, ConfigurationFault, Gains, Setpoint
from dronebar import control as ctl

Q0 = np.array([0.0, 1.5, 0.0, 0.0, 0.0])
SP = Setpoint(0.5, 2.0, 1.7, 2.0)  # every position error is -0.5 m, e_y = 0
QD = np.array([0.1, 0.0, 0.2, 0.0, 0.0])  # ydot1 = 0.1, ydot2 = 0.1 + 0.9 * 0.2 = 0.28


def test_hover_feedforward(p, gains):
    u = ctl.proposed_wrench(Q0, np.zeros(5), Setpoint(0.0, 1.5, 1.2, 1.5), gains, p)
    np.testing.assert_allclose(u, [0, 16.17, 0, 16.17], atol=1e-12)


def test_proposed_wrench_oracle(p, gains):
    u = ctl.proposed_wrench(Q0, QD, SP, gains, p)
    # u1 = 2.6 - 6(0.1) - 0.75(0.04)(0.1); u3 = 2.6 - 6(0.28) - 0.75(0.04)(0.28)
    np.testing.assert_allclose(u, [1.997, 19.17, 0.9116, 19.17], atol=1e-12)


def test_pd_drops_coupling_term(p, gains):
    u = ctl.pd_wrench(Q0, QD, SP, gains, p)
    np.testing.assert_allclose(u, [2.0, 19.17, 0.92, 19.17], atol=1e-12)


def test_pd_is_special_case(p):
    g0 = Gains(ka1=0.0, ka2=0.0, sigma=0.0)
    q = np.array([0.1, 1.3, 0.2, 0.1, -0.05])
    qd = np.array([0.3, 0.1, -0.2, 0.4, 0.1])
    np.testing.assert_array_equal(ctl.proposed_wrench(q, qd, SP, g0, p), ctl.pd_wrench(q, qd, SP, Gains(), p))


def test_barrier_values(gains):
    # sigma rho e / (rho - e^2)^2 = 4 * 2 * 1 / 1 ; sigma e^2 / (2 (rho - e^2)) = 4 / 2
    assert ctl.barrier_force(1.0, gains) == pytest.approx(8.0)
    assert ctl.barrier_potential(1.0, gains) == pytest.approx(2.0)
    assert ctl.barrier_force(-1.0, gains) == pytest.approx(-8.0)


def test_barrier_pole_raises(gains):
    with pytest.raises(BarrierDomainFault):
        ctl.barrier_force(math.sqrt(2.0), gains)


def test_barrier_is_gradient_of_potential(gains):
    e, h = 0.7, 1e-6
    fd = (ctl.barrier_potential(e + h, gains) - ctl.barrier_potential(e - h, gains)) / (2 * h)
    assert fd == pytest.approx(ctl.barrier_force(e, gains), rel=1e-8)


def test_lyapunov_value_oracle(p, gains):
    # kinetic 0.5 * (3.3 * .01 + 2 * 1.62 * .02 + 1.458 * .04) = 0.07806, springs 2.8
    assert ctl.lyapunov_value(Q0, QD, SP, gains, p) == pytest.approx(2.87806, abs=1e-12)


def test_lyapunov_rate_oracle(p, gains):
    # -(ka w2 + kd)(ydot1^2 + ydot2^2) with w2 = 0.04
    assert ctl.lyapunov_rate_expected(Q0, QD, gains, p) == pytest.approx(-6.03 * 0.0884, abs=1e-12)


def test_validate_rho():
    assert ctl.validate_rho(0.5, -0.5, 2.0)
    assert not ctl.validate_rho(1.0, -0.5, 2.0)


def test_actuation_fault(p, gains):
    # a setpoint 6.5 m below asks for negative vertical thrust
    with pytest.raises(ActuationFault):
        ctl.proposed_wrench(Q0, np.zeros(5), Setpoint(0.0, -5.0, 1.2, -5.0), gains, p)


def test_decompose_round_trip():
    u = np.array([1.2, 15.0, -0.7, 16.5])
    np.testing.assert_allclose(ctl.recompose(*ctl.decompose(u)), u, rtol=1e-14)


def test_saturate_keeps_direction():
    u = np.array([3.0, 4.0, 0.0, 1.0])
    out, hit = ctl.saturate(u, 2.5)
    assert hit
    np.testing.assert_allclose(out, [1.5, 2.0, 0.0, 1.0])


def test_setpoint_separation_rule(p):
    Setpoint(0.0, 1.0, 1.2, 1.0).check(p)
    s = Setpoint.level(0.0, 1.0, p, theta2d=0.1)
    s.check(p, theta2d=0.1)
    with pytest.raises(ConfigurationFault):
        s.check(p, theta2d=0.0)


def test_swing_bias_equilibrium(p):
    th = 0.15
    g = Gains(theta2d=th)
    sp = Setpoint.level(0.0, 1.5, p, theta2d=th)
    q = np.array([0.0, 1.5, th, th, 0.0])
    u = ctl.proposed_wrench(q, np.zeros(5), sp, g, p)
    from dronebar import dynamics as dyn

    np.testing.assert_allclose(dyn.forward_dynamics(q, np.zeros(5), u, p), 0.0, atol=1e-12)


@pytest.mark.parametrize("bad", [dict(kp1=0.0), dict(kd3=-1.0), dict(ka1=-0.1), dict(rho=0.0), dict(theta2d=1.6)])
def test_gain_validation(bad):
    with pytest.raises(ValueError):
        Gains(**bad)


def test_lyapunov_with_barrier_term(p, gains):
    # e_y1 = 1 and e_y = 1 at rest: 5.2 / 2 + 4 / (2 (2 - 1))
    sp = Setpoint(-1.0, 1.5, 1.2, 1.5)
    assert ctl.lyapunov_value(Q0, np.zeros(5), sp, gains, p) == pytest.approx(4.6, abs=1e-12)


def test_swing_bias_terms_only(p):
    th = 0.2
    sp = Setpoint(0.0, 1.5, 1.2, 1.5)
    u = ctl.proposed_wrench(Q0, np.zeros(5), sp, Gains(theta2d=th), p)
    bias = 0.5 * p.m3 * p.g * math.tan(th)
    np.testing.assert_allclose(u, [-bias, 16.17, bias, 16.17], atol=1e-12)
