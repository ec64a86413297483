"""Trajectory integration: closed forms, symplecticity, convergence order."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import hkprop as hk
from hkprop.classical_flow import PhasePoint
from hkprop.errors import FlowDivergenceError
from hkprop.hamiltonians import HamiltonianModel


def test_harmonic_flow_matches_rotation():
    model = hk.make_model("harmonic")
    t = np.pi / 3.0
    traj = hk.integrate_flow(model, np.array([1.0, 0.0]), 0.0, t, steps=1000)
    end = traj.final
    c, s = np.cos(t), np.sin(t)
    np.testing.assert_allclose(end.z.q, [c], atol=1e-11)
    np.testing.assert_allclose(end.z.p, [-s], atol=1e-11)
    np.testing.assert_allclose(end.A, [[c]], atol=1e-11)
    np.testing.assert_allclose(end.B, [[s]], atol=1e-11)
    np.testing.assert_allclose(end.C, [[-s]], atol=1e-11)
    np.testing.assert_allclose(end.D, [[c]], atol=1e-11)
    # S(t) = int (p qdot - H) ds = -sin(2t)/4 for the unit circle start.
    assert end.action == pytest.approx(-np.sin(2 * t) / 4.0, abs=1e-11)


def test_free_flow_is_linear_drift():
    model = hk.make_model("free")
    traj = hk.integrate_flow(model, np.array([0.3, -1.1]), 0.0, 2.0, steps=50)
    end = traj.final
    np.testing.assert_allclose(end.z.q, [0.3 - 2.2], atol=1e-12)
    np.testing.assert_allclose(end.z.p, [-1.1], atol=1e-13)
    np.testing.assert_allclose(end.B, [[2.0]], atol=1e-12)
    assert end.action == pytest.approx(0.5 * (-1.1) ** 2 * 2.0, abs=1e-12)


def test_trajectory_record_bookkeeping():
    model = hk.make_model("pendulum")
    traj = hk.integrate_flow(model, np.array([0.4, 0.2]), 0.0, 1.0, steps=10)
    assert len(traj.samples) == 11
    assert traj.step == pytest.approx(0.1)
    np.testing.assert_allclose(traj.times(), np.linspace(0.0, 1.0, 11),
                               atol=1e-12)
    assert traj.final is traj.samples[-1]
    assert traj.initial.dim == 1


def test_symplectic_defect_on_matrices():
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    assert hk.symplectic_defect(J) == pytest.approx(0.0, abs=1e-15)
    assert hk.symplectic_defect(2.0 * np.eye(2)) == pytest.approx(
        3.0 * np.sqrt(2.0))


def test_flow_stays_symplectic_and_conserves_energy():
    model = hk.make_model("pendulum")
    traj = hk.integrate_flow(model, np.array([0.9, 0.7]), 0.0, 2.0, steps=2000)
    H0 = model.value(0.0, np.array([0.9, 0.7]))
    for state in traj.samples[::100]:
        assert hk.symplectic_defect(state) <= 1e-10
        assert abs(model.value(0.0, state.z.as_array()) - H0) <= 1e-10


@settings(max_examples=15, deadline=None)
@given(q=st.floats(-2.0, 2.0), p=st.floats(-2.0, 2.0),
       t=st.floats(0.2, 1.5))
def test_random_pendulum_flows_are_symplectic(q, p, t):
    model = hk.make_model("pendulum")
    traj = hk.integrate_flow(model, np.array([q, p]), 0.0, t, steps=500)
    assert hk.symplectic_defect(traj.final) <= 1e-9
    H = model.value(0.0, np.array([q, p]))
    assert abs(model.value(0.0, traj.final.z.as_array()) - H) <= 1e-9


def test_jacobian_check_agrees_with_finite_differences():
    model = hk.make_model("pendulum")
    assert hk.jacobian_check(model, np.array([0.3, 0.8]), 1.0) <= 1e-5


def test_rk4_convergence_order():
    model = hk.make_model("pendulum")
    z0 = np.array([0.5, 0.5])
    ref = hk.integrate_flow(model, z0, 0.0, 2.0, steps=6400).final.z.as_array()

    def err(steps):
        end = hk.integrate_flow(model, z0, 0.0, 2.0, steps=steps).final
        return np.linalg.norm(end.z.as_array() - ref)

    ratio = err(100) / err(200)
    assert 12.0 <= ratio <= 20.0


def test_ensemble_matches_per_trajectory_runs():
    model = hk.make_model("pendulum")
    Z0 = np.array([[0.1, 0.9], [-0.7, 0.2], [1.1, -0.5]])
    result = hk.integrate_ensemble(model, Z0, 0.0, 1.5, steps=600)
    assert result.Z.shape == (1, 3, 2)
    assert result.A.shape == (1, 3, 1, 1)
    for k, z0 in enumerate(Z0):
        end = hk.integrate_flow(model, z0, 0.0, 1.5, steps=600).final
        np.testing.assert_allclose(result.Z[0, k], end.z.as_array(),
                                   rtol=0, atol=1e-14)
        np.testing.assert_allclose(result.S[0, k], end.action,
                                   rtol=0, atol=1e-14)


def test_ensemble_snapshot_controls():
    model = hk.make_model("free")
    Z0 = np.array([[0.0, 1.0]])
    result = hk.integrate_ensemble(model, Z0, 0.0, 1.0, steps=10,
                                   snapshot_indices=[0, 5, 10])
    np.testing.assert_allclose(result.snapshot_times, [0.0, 0.5, 1.0],
                               atol=1e-12)
    np.testing.assert_allclose(result.Z[:, 0, 0], [0.0, 0.5, 1.0], atol=1e-12)
    with pytest.raises(ValueError):
        hk.integrate_ensemble(model, Z0, 0.0, 1.0, steps=10,
                              snapshot_indices=[11])
    with pytest.raises(ValueError):
        hk.integrate_ensemble(model, np.zeros((2, 3)), 0.0, 1.0, steps=10)
    with pytest.raises(ValueError):
        hk.integrate_ensemble(model, Z0, 0.0, 1.0, steps=0)


def test_divergent_flow_raises():
    def value(t, X):
        X = np.asarray(X, dtype=float)
        return 0.5 * X[..., 1] ** 2 - 0.25 * X[..., 0] ** 4

    def gradient(t, X):
        X = np.asarray(X, dtype=float)
        g = np.empty_like(X)
        g[..., 0] = -X[..., 0] ** 3
        g[..., 1] = X[..., 1]
        return g

    def hessian(t, X):
        X = np.asarray(X, dtype=float)
        H = np.zeros(X.shape + (2,))
        H[..., 0, 0] = -3.0 * X[..., 0] ** 2
        H[..., 1, 1] = 1.0
        return H

    model = HamiltonianModel(kind="custom", dim=1, value=value,
                             gradient=gradient, hessian=hessian,
                             subprincipal=None, split_form=None,
                             time_dependent=False, params={})
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(FlowDivergenceError):
            hk.integrate_flow(model, np.array([3.0, 0.0]), 0.0, 20.0,
                              steps=400)


def test_phase_point_validation():
    with pytest.raises(ValueError):
        PhasePoint(np.array([1.0, 2.0]), np.array([1.0]))
    with pytest.raises(ValueError):
        PhasePoint(np.array([np.inf]), np.array([0.0]))
    z = PhasePoint.from_array(np.array([1.0, 2.0]))
    np.testing.assert_array_equal(z.q, [1.0])
    np.testing.assert_array_equal(z.p, [2.0])


def test_trajectory_csv_layout(tmp_path):
    model = hk.make_model("harmonic")
    traj = hk.integrate_flow(model, np.array([1.0, 0.0]), 0.0, 0.5, steps=5)
    path = tmp_path / "traj.csv"
    hk.trajectory_to_csv(traj, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,q0,p0,S,A00,B00,C00,D00"
    assert len(lines) == 7
    first = lines[1].split(",")
    assert float(first[0]) == 0.0
    assert float(first[1]) == 1.0
    assert float(first[4]) == 1.0  # A(0) = identity
