"""Model construction, derivative consistency, and stability estimates."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import hkprop as hk

phase_points = st.tuples(
    st.floats(-3.0, 3.0, allow_nan=False),
    st.floats(-3.0, 3.0, allow_nan=False),
)


def _finite_diff_gradient(model, X, h=1e-6):
    g = np.zeros_like(X)
    for k in range(X.size):
        e = np.zeros_like(X)
        e[k] = h
        g[k] = (model.value(0.0, X + e) - model.value(0.0, X - e)) / (2 * h)
    return g


def _finite_diff_hessian(model, X, h=1e-5):
    n = X.size
    H = np.zeros((n, n))
    for k in range(n):
        e = np.zeros_like(X)
        e[k] = h
        H[k] = (model.gradient(0.0, X + e) - model.gradient(0.0, X - e)) / (2 * h)
    return 0.5 * (H + H.T)


def test_builtin_kinds_construct():
    for kind in ("harmonic", "free", "pendulum", "relativistic"):
        model = hk.make_model(kind)
        assert model.kind == kind
        assert model.dim == 1
        assert not model.time_dependent
    model = hk.make_model("quadratic_general", G=[[2.0]], L=[[0.5]], K=[[1.0]])
    assert model.kind == "quadratic_general"
    assert model.params["G"] == [[2.0]]


def test_model_values_match_formulas():
    X = np.array([0.7, -0.4])
    q, p = X
    assert hk.make_model("harmonic", omega=2.0).value(0.0, X) == pytest.approx(
        0.5 * (p ** 2 + 4.0 * q ** 2))
    assert hk.make_model("free").value(0.0, X) == pytest.approx(0.5 * p ** 2)
    assert hk.make_model("pendulum").value(0.0, X) == pytest.approx(
        0.5 * p ** 2 - np.cos(q))
    assert hk.make_model("relativistic", omega=1.0).value(0.0, X) == pytest.approx(
        np.sqrt(1.0 + p ** 2) + 0.5 * q ** 2)


def test_vectorized_evaluation_shapes():
    model = hk.make_model("pendulum")
    X = np.random.default_rng(0).normal(size=(5, 3, 2))
    assert model.value(0.0, X).shape == (5, 3)
    assert model.gradient(0.0, X).shape == (5, 3, 2)
    assert model.hessian(0.0, X).shape == (5, 3, 2, 2)


@pytest.mark.parametrize("kind,params", [
    ("harmonic", {"omega": 1.7}),
    ("pendulum", {}),
    ("relativistic", {"omega": 0.8}),
    ("quadratic_general", {"G": [[1.5]], "L": [[-0.3]], "K": [[0.9]]}),
])
@settings(max_examples=25, deadline=None)
@given(z=phase_points)
def test_gradient_hessian_match_finite_differences(kind, params, z):
    model = hk.make_model(kind, **params)
    X = np.array(z)
    g = model.gradient(0.0, X)
    np.testing.assert_allclose(g, _finite_diff_gradient(model, X),
                               rtol=0, atol=5e-8)
    H = model.hessian(0.0, X)
    np.testing.assert_allclose(H, _finite_diff_hessian(model, X),
                               rtol=0, atol=5e-6)


def test_relativistic_hessian_stays_bounded():
    model = hk.make_model("relativistic", omega=1.0)
    P = np.linspace(-50.0, 50.0, 101)
    X = np.stack([np.zeros_like(P), P], axis=-1)
    H = model.hessian(0.0, X)
    assert np.all(np.abs(H) <= 1.0 + 1e-12)


def test_make_model_rejects_bad_input():
    with pytest.raises(ValueError):
        hk.make_model("lorentzian")
    with pytest.raises(ValueError):
        hk.make_model("free", omega=1.0)
    with pytest.raises(ValueError):
        hk.make_model("harmonic", dim=0)
    with pytest.raises(ValueError):
        hk.make_model("quadratic_general", G=[[1.0]])
    with pytest.raises(ValueError):
        hk.make_model("quadratic_general", G=[[1.0, 0.0]], K=[[1.0]])


def test_quadratic_general_value():
    model = hk.make_model("quadratic_general", G=[[2.0]], L=[[0.5]], K=[[3.0]])
    X = np.array([1.0, 2.0])
    expected = 0.5 * (2.0 * 1.0 + 2 * 0.5 * 1.0 * 2.0 + 3.0 * 4.0)
    assert model.value(0.0, X) == pytest.approx(expected)


def test_estimate_delta_known_values():
    box = ((-1.0, 1.0), (-1.0, 1.0))
    assert hk.estimate_delta(hk.make_model("harmonic"), box, 21).delta == \
        pytest.approx(1.0)
    assert hk.estimate_delta(hk.make_model("harmonic", omega=2.0), box, 21).delta == \
        pytest.approx(4.0)
    assert hk.estimate_delta(hk.make_model("free"), box, 21).delta == \
        pytest.approx(1.0)
    bound = hk.estimate_delta(hk.make_model("pendulum"), box, 21)
    assert bound.delta == pytest.approx(1.0)
    assert bound.sample_count == 21 ** 2


def test_estimate_delta_rejects_bad_box():
    model = hk.make_model("pendulum")
    with pytest.raises(ValueError):
        hk.estimate_delta(model, ((-1.0, 1.0),), 5)
    with pytest.raises(ValueError):
        hk.estimate_delta(model, ((1.0, -1.0), (-1.0, 1.0)), 5)
    with pytest.raises(ValueError):
        hk.estimate_delta(model, ((-1.0, 1.0), (-1.0, 1.0)), 1)


def test_subprincipal_passthrough():
    def h1(t, X):
        X = np.asarray(X, dtype=float)
        return np.ones(X.shape[:-1])

    model = hk.make_model("harmonic", subprincipal=h1)
    assert model.subprincipal is not None
    assert model.subprincipal(0.0, np.zeros(2)) == pytest.approx(1.0)
    assert hk.make_model("harmonic").subprincipal is None
