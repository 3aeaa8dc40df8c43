import numpy as np
import pytest

from chemoflow.model import (ModelParams, buoyancy_coefficient,
                             chemo_sensitivity, chemo_sensitivity_derivative,
                             reaction, reaction_jacobian, stationary_state)

BOX = ModelParams(10.0, 2.0, 0.4, 0.1, 2.0, 0.01,
                  beta1=20.0, beta2=100.0, kappa1=2.0, kappa2=-0.8)
PATTERN = ModelParams(0.61, 0.4575, 9.5, 0.52, 0.31, 8.2,
                      beta1=20.0, beta2=100.0, kappa1=2.0, kappa2=-0.8,
                      f2_coupling_sign=-1)


def test_reaction_values_hand_computed():
    f1, f2 = reaction(1.0, 2.0, BOX)
    # n1*(a1 - b1*n1 - c1*n2) = 1*(10 - 2 - 0.8)
    assert f1 == pytest.approx(7.2)
    # n2*(a2 - c2*n2 + b2*n1) = 2*(0.1 - 0.02 + 2)
    assert f2 == pytest.approx(4.16)


def test_reaction_coupling_sign():
    minus = ModelParams(10.0, 2.0, 0.4, 0.1, 2.0, 0.01, f2_coupling_sign=-1)
    _, f2 = reaction(1.0, 2.0, minus)
    assert f2 == pytest.approx(2.0 * (0.1 - 0.02 - 2.0))


def test_reaction_clamps_negative_densities():
    f1, f2 = reaction(-0.5, -1.0, BOX)
    assert f1 == 0.0 and f2 == 0.0
    # a negative partner density does not poison a live species
    f1, _ = reaction(1.0, -1.0, BOX)
    assert f1 == pytest.approx(1.0 * (10.0 - 2.0))


def test_reaction_jacobian_matches_finite_differences():
    rng = np.random.default_rng(11)
    n1 = rng.uniform(0.05, 3.0, size=40)
    n2 = rng.uniform(0.05, 3.0, size=40)
    d11, d12, d21, d22 = reaction_jacobian(n1, n2, PATTERN)
    h = 1e-7
    for (dj, arg) in ((d11, 0), (d12, 1), (d21, 2), (d22, 3)):
        which = arg % 2
        fplus = reaction(n1 + (h if which == 0 else 0),
                         n2 + (h if which == 1 else 0), PATTERN)
        fminus = reaction(n1 - (h if which == 0 else 0),
                          n2 - (h if which == 1 else 0), PATTERN)
        row = arg // 2
        fd = (fplus[row] - fminus[row]) / (2 * h)
        assert np.allclose(dj, fd, atol=1e-5)


def test_jacobian_zero_subgradient_at_clamp():
    d11, d12, d21, d22 = reaction_jacobian(-1.0, 2.0, BOX)
    assert d11 == 0.0 and d21 == 0.0
    # partner entries survive where the partner is live
    assert d22 != 0.0


def test_chemo_sensitivity_laws():
    n = np.array([0.0, 0.5, 2.0])
    assert np.allclose(chemo_sensitivity(n, 2.0, "linear"), 2.0 * n)
    assert np.allclose(chemo_sensitivity(n, -0.8, "constant"), -0.8)
    assert np.allclose(chemo_sensitivity_derivative(n, 2.0, "linear"), 2.0)
    assert np.allclose(chemo_sensitivity_derivative(n, 2.0, "constant"), 0.0)
    with pytest.raises(ValueError):
        chemo_sensitivity(n, 1.0, "quadratic")


def test_stationary_state_pattern_parameters():
    n1, n2 = stationary_state(PATTERN)
    # frozen from an independent 2x2 solve of the nullcline system
    assert n1 == pytest.approx(0.07687538747675066, rel=0, abs=1e-16)
    assert n2 == pytest.approx(0.06050836949783019, rel=0, abs=1e-16)
    f1, f2 = reaction(n1, n2, PATTERN)
    assert abs(f1) < 1e-15 and abs(f2) < 1e-15


def test_stationary_state_respects_coupling_sign():
    n1, n2 = stationary_state(BOX)
    f1, f2 = reaction(n1, n2, BOX)
    assert abs(f1) < 1e-12 and abs(f2) < 1e-12


def test_stationary_state_singular_matrix():
    p = ModelParams(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, f2_coupling_sign=-1)
    with pytest.raises(ValueError):
        stationary_state(p)


def test_buoyancy_coefficient_is_total_density():
    assert buoyancy_coefficient(1.5, 2.5) == pytest.approx(4.0)
    out = buoyancy_coefficient(np.array([1.0, 0.0]), np.array([0.5, 0.25]))
    assert np.allclose(out, [1.5, 0.25])


@pytest.mark.parametrize("kwargs", [
    {"chemo_law": "cubic"},
    {"f2_coupling_sign": 0},
    {"d1": 0.0},
    {"d2": -1.0},
])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        ModelParams(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, **kwargs)
