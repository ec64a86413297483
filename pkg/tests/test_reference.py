"""Exact quadratic and split-operator reference solvers."""

import numpy as np
import pytest

import hkprop as hk
from hkprop.errors import SplitStepError


def _state(center, hbar=0.1, lo=-8.0, hi=8.0, n=1024, scale=1.0):
    grid = hk.grid_for_box([lo], [hi], n)
    return hk.coherent_state(np.asarray(center, dtype=float),
                             hk.siegel_iI(1, scale=scale), hbar, grid)


def test_harmonic_ground_state_picks_up_half_phase():
    psi0 = _state([0.0, 0.0])
    model = hk.make_model("harmonic")
    t = 0.7
    out = hk.exact_quadratic_apply(model, psi0, t)
    expected = psi0.with_values(np.exp(-0.5j * t) * psi0.values)
    assert hk.l2_difference(out, expected) <= 1e-9


def test_harmonic_center_follows_rotation():
    psi0 = _state([1.0, 0.0])
    model = hk.make_model("harmonic")
    t = np.pi / 2.0
    out = hk.exact_quadratic_apply(model, psi0, t)
    w = psi0.grid.weights()
    X = psi0.grid.points()[:, 0]
    prob = np.abs(out.flat()) ** 2 * w
    q_mean = float(prob @ X / prob.sum())
    assert q_mean == pytest.approx(0.0, abs=1e-8)
    assert out.l2_norm() == pytest.approx(1.0, abs=1e-9)


def test_full_rotation_flips_sign():
    psi0 = _state([0.6, -0.4])
    model = hk.make_model("harmonic")
    out = hk.exact_quadratic_apply(model, psi0, 2.0 * np.pi)
    flipped = psi0.with_values(-psi0.values)
    assert hk.l2_difference(out, flipped) <= 1e-8


def test_free_packet_spreads_with_mobius_width():
    hbar = 0.1
    psi0 = _state([0.0, 0.0], hbar=hbar)
    model = hk.make_model("free")
    out = hk.exact_quadratic_apply(model, psi0, 1.0)
    # Gamma_t = i/(1+i) has imaginary part 1/2, so <q^2> doubles to hbar.
    w = psi0.grid.weights()
    X = psi0.grid.points()[:, 0]
    prob = np.abs(out.flat()) ** 2 * w
    q_var = float(prob @ X ** 2 / prob.sum())
    assert q_var == pytest.approx(hbar, rel=1e-6)


def test_exact_solver_rejects_nonquadratic_models():
    psi0 = _state([0.0, 0.5])
    with pytest.raises(ValueError):
        hk.exact_quadratic_apply(hk.make_model("pendulum"), psi0, 1.0)
    with pytest.raises(ValueError):
        hk.exact_quadratic_apply(hk.make_model("relativistic"), psi0, 1.0)


def test_split_step_is_unitary_and_second_order():
    psi0 = _state([0.0, 0.5])
    model = hk.make_model("harmonic")
    ref = hk.exact_quadratic_apply(model, psi0, 1.0)

    out = hk.split_step_propagate(model, psi0, 1.0, steps=400)
    assert out.l2_norm() == pytest.approx(1.0, abs=1e-12)

    e_coarse = hk.l2_difference(
        hk.split_step_propagate(model, psi0, 1.0, steps=200), ref)
    e_fine = hk.l2_difference(
        hk.split_step_propagate(model, psi0, 1.0, steps=400), ref)
    assert 3.2 <= e_coarse / e_fine <= 4.8


def test_split_step_cross_checks_exact_solver():
    psi0 = _state([0.3, 0.4])
    model = hk.make_model("harmonic")
    exact = hk.exact_quadratic_apply(model, psi0, 1.0)
    split = hk.split_step_propagate(model, psi0, 1.0, steps=2000)
    assert hk.l2_difference(exact, split) <= 1e-6


def test_split_step_self_convergence_on_pendulum():
    psi0 = _state([0.0, 0.9])
    model = hk.make_model("pendulum")
    coarse = hk.split_step_propagate(model, psi0, 1.0, steps=2000)
    fine = hk.split_step_propagate(model, psi0, 1.0, steps=8000)
    assert hk.l2_difference(coarse, fine) <= 1e-6
    assert coarse.l2_norm() == pytest.approx(1.0, abs=1e-12)


def test_split_step_detects_boundary_hits():
    grid = hk.grid_for_box([-4.0], [4.0], 512)
    psi0 = hk.coherent_state(np.array([0.0, 1.0]), hk.siegel_iI(1), 0.1, grid)
    model = hk.make_model("free")
    with pytest.raises(SplitStepError):
        hk.split_step_propagate(model, psi0, 4.0, steps=800)


def test_split_step_requires_split_form():
    psi0 = _state([0.0, 0.5])
    model = hk.make_model("relativistic")
    assert model.split_form is not None  # T(p) + V(q) separates
    out = hk.split_step_propagate(model, psi0, 0.5, steps=500)
    assert out.l2_norm() == pytest.approx(1.0, abs=1e-12)


def test_squeezed_input_width_evolves():
    hbar = 0.1
    psi0 = _state([0.0, 0.0], hbar=hbar, scale=2.0)
    model = hk.make_model("harmonic")
    out = hk.exact_quadratic_apply(model, psi0, np.pi / 2.0)
    # quarter rotation maps Gamma = 2i to (C + Gamma D)(A + Gamma B)^{-1} = i/2
    w = psi0.grid.weights()
    X = psi0.grid.points()[:, 0]
    prob = np.abs(out.flat()) ** 2 * w
    q_var = float(prob @ X ** 2 / prob.sum())
    assert q_var == pytest.approx(hbar, rel=1e-6)  # hbar / (2 * 1/2)
