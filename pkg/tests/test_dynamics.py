"""Model oracles: hand-derived values at the straight-hanging configuration."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dronebar import DomainFault, PhysicalParams
from dronebar import dynamics as dyn

Q0 = np.array([0.0, 1.5, 0.0, 0.0, 0.0])

# at q = 0 with m = (1.5, 1.5, 0.3), l = 0.9, a = 1.2:
#   drone 2 jacobian rows [1 0 .9 .9 0], [0 1 0 0 1.2]; bar midpoint [1 0 .9 0 0], [0 1 0 0 .6]
M0 = np.array(
    [
        [3.3, 0.0, 1.62, 1.35, 0.0],
        [0.0, 3.3, 0.0, 0.0, 1.98],
        [1.62, 0.0, 1.458, 1.215, 0.0],
        [1.35, 0.0, 1.215, 1.215, 0.0],
        [0.0, 1.98, 0.0, 0.0, 2.268],
    ]
)

angles = st.floats(-1.5, 1.5)
configs = st.tuples(st.floats(-3, 3), st.floats(-3, 3), angles, angles, angles).map(np.array)
rates = st.tuples(*[st.floats(-2, 2)] * 5).map(np.array)


def test_inertia_matrix_hanging(p):
    np.testing.assert_allclose(dyn.inertia_matrix(Q0, p), M0, atol=1e-12)


def test_gravity_vector_hanging(p):
    # (m1+m2+m3) g = 32.34; (m2 + m3/2) g a = 19.404
    np.testing.assert_allclose(dyn.gravity_vector(Q0, p), [0, 32.34, 0, 0, 19.404], atol=1e-12)


def test_forward_kinematics_hanging(p):
    xi = dyn.forward_kinematics(Q0, p)
    np.testing.assert_allclose(xi.xi1, [0.0, 1.5])
    np.testing.assert_allclose(xi.xi2, [1.2, 1.5])
    np.testing.assert_allclose(xi.xi3, [0.6, 0.6])


def test_bar_force_maps_through_jacobian(p):
    Q = dyn.external_force_to_generalized(Q0, "bar_mid", [1.0, 0.0], p)
    np.testing.assert_allclose(Q, [1, 0, 0.9, 0, 0], atol=1e-12)


def test_swing_potential_sixty_degrees(p):
    q = np.array([0, 0, math.pi / 3, math.pi / 3, 0.0])
    # m3 g / 2 * (l1 + l2)(1 - cos 60deg) = 1.323
    assert dyn.swing_potential(q, p) == pytest.approx(1.3230, abs=1e-12)


def test_thrust_at_rest_balances_gravity(p):
    u = np.array([0.0, (p.m1 + p.m3 / 2) * p.g, 0.0, (p.m2 + p.m3 / 2) * p.g])
    qdd = dyn.forward_dynamics(Q0, np.zeros(5), u, p)
    np.testing.assert_allclose(qdd, 0.0, atol=1e-12)


def test_free_fall_from_rest(p):
    qdd = dyn.forward_dynamics(Q0, np.zeros(5), np.zeros(4), p)
    np.testing.assert_allclose(qdd, [0, -p.g, 0, 0, 0], atol=1e-12)


def test_domain_violation_raises(p):
    with pytest.raises(DomainFault):
        dyn.forward_dynamics(np.array([0, 0, 1.6, 0, 0]), np.zeros(5), np.zeros(4), p)


def test_storage_power_matches_energy_derivative(p):
    q = np.array([0.1, 1.4, 0.2, -0.1, 0.05])
    qd = np.array([0.3, -0.2, 0.4, 0.1, -0.2])
    u = np.array([0.5, 16.0, -0.4, 17.0])
    qdd = dyn.forward_dynamics(q, qd, u, p)
    h = 1e-6

    def E(s):
        return dyn.storage_energy(q + s * qd + 0.5 * s * s * qdd, qd + s * qdd, p)

    dE = (E(h) - E(-h)) / (2 * h)
    assert dE == pytest.approx(dyn.storage_power(q, qd, u, p), rel=1e-6)


@settings(max_examples=60, deadline=None)
@given(configs, rates)
def test_skew_symmetry_property(q, qd):
    p = PhysicalParams()
    N = np.einsum("kij,k->ij", dyn.inertia_partials(q, p), qd) - 2 * dyn.coriolis_matrix(q, qd, p)
    assert np.max(np.abs(N + N.T)) <= 1e-9 * (1 + qd @ qd)


@settings(max_examples=60, deadline=None)
@given(configs)
def test_inertia_symmetric_positive(q):
    M = dyn.inertia_matrix(q, PhysicalParams())
    assert np.allclose(M, M.T, atol=0)
    assert np.linalg.eigvalsh(M).min() > 0


def test_broadcasting_matches_loop(p):
    rng = np.random.default_rng(4)
    qs = rng.uniform(-1, 1, (7, 5))
    batch = dyn.inertia_matrix(qs, p)
    for k in range(7):
        np.testing.assert_array_equal(batch[k], dyn.inertia_matrix(qs[k], p))
