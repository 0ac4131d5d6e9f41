import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mmdflow.energy import DISTANCE, SMOOTH, f_nu, mmd_sq
from mmdflow.measure import Measure1D, dirac, midpoints, sample_quantile_grid, uniform, w2
from mmdflow.numerics import central_gradient, central_hessian, quad_adaptive
from mmdflow.restricted import (UniformParam, f1_potential, f1_subgrad_minnorm, f2_closed_form,
                                f2_energy, f2_gradient, landscape_grid, particle_flow_smooth,
                                particle_velocity, s1_flow, s2_flow)

from conftest import mixed_measures

SQ3 = math.sqrt(3)
LAMBDA = uniform(-1, 1)


def disc_l2_dirac(m, sigma):
    """Quadrature oracle for F(m, sigma) against delta_0 (Q_nu = 0)."""
    def f(s):
        return m + 2 * SQ3 * sigma * (s - 0.5)

    brk = [0.5 - m / (2 * SQ3 * sigma)] if sigma > 0 else []
    return quad_adaptive(lambda s: (1 - 2 * s) * f(s) + abs(f(s)), 0, 1, 1e-13, breakpoints=brk)


# --- S1 ---------------------------------------------------------------------------------

@pytest.mark.parametrize("x,nu,expected", [
    (0.7, dirac(0.2), 0.5),
    (0.0, LAMBDA, 1 / 6),
    (-1.3, dirac(-1.3), 0.0),
])
def test_f1_examples(x, nu, expected):
    assert f1_potential(x, nu) == pytest.approx(expected, abs=1e-14)


def test_f1_uniform_value_against_quadrature():
    half = quad_adaptive(lambda y: 0.5 * abs(y), -1, 1, 1e-13, breakpoints=(0.0,))
    assert abs(f1_potential(0.0, LAMBDA) - (half - 1 / 3)) < 1e-12
    assert abs(f1_potential(0.0, LAMBDA) - mmd_sq(dirac(0), LAMBDA)) < 1e-14


@given(mixed_measures(), st.floats(-6, 6), st.floats(-6, 6))
def test_f1_convex_and_consistent(nu, a, b):
    assert abs(f1_potential(a, nu) - mmd_sq(dirac(a), nu)) < 1e-10
    mid = f1_potential(0.5 * (a + b), nu)
    assert mid <= 0.5 * (f1_potential(a, nu) + f1_potential(b, nu)) + 1e-12


def test_s1_dirac_target_piecewise_linear():
    h = 1e-3
    tr = s1_flow(-1.0, dirac(0.0), 2.0, h)
    t, x = np.array(tr.times), np.array(tr.states)[:, 0]
    np.testing.assert_allclose(x, np.minimum(-1 + t, 0.0), atol=1e-12)
    arrival = t[np.argmax(x >= 0.0)]
    assert abs(arrival - 1.0) <= h
    assert np.all(x[t >= arrival] == 0.0)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_s1_reaches_dirac_within_one_step(x0, q):
    h = 1e-2
    tr = s1_flow(x0, dirac(q), abs(x0 - q) + 0.5, h)
    t, x = np.array(tr.times), np.array(tr.states)[:, 0]
    hit = np.flatnonzero(x == q)
    assert hit.size and abs(t[hit[0]] - abs(x0 - q)) <= h
    assert np.all(x[hit[0]:] == q)


def test_s1_uniform_target_exponential_decay():
    tr = s1_flow(0.5, LAMBDA, 5.0, 1e-3)
    t, x = np.array(tr.times), np.array(tr.states)[:, 0]
    assert np.max(np.abs(x - 0.5 * np.exp(-t))) <= 1e-6


def test_s1_from_outside_interval():
    tr = s1_flow(2.0, LAMBDA, 3.0, 1e-3)
    t, x = np.array(tr.times), np.array(tr.states)[:, 0]
    before = t <= 1.0
    np.testing.assert_allclose(x[before], 2 - t[before], atol=1e-12)
    np.testing.assert_allclose(x[~before], np.exp(-(t[~before] - 1)), atol=1e-6)


def test_s1_stationary_and_validation():
    tr = s1_flow(0.0, dirac(0.0), 1.0, 0.1)
    assert np.all(np.array(tr.states) == 0.0)
    with pytest.raises(ValueError):
        s1_flow(0.0, dirac(0.0), 1.0, 0.0)


def test_s1_smooth_kernel_uses_selection():
    # at the saddle the smooth-kernel derivative vanishes: no error, no motion
    assert f1_subgrad_minnorm(0.0, LAMBDA, SMOOTH) == 0.0
    tr = s1_flow(0.0, LAMBDA, 1.0, 0.1, SMOOTH)
    assert np.all(np.array(tr.states) == 0.0)


@given(mixed_measures(), st.floats(-6, 6), st.floats(1e-3, 0.5))
def test_s1_energy_nonincreasing(nu, x0, h):
    tr = s1_flow(x0, nu, 2.0, h)
    assert np.all(np.diff(tr.energies) <= 1e-10)


# --- S2 ---------------------------------------------------------------------------------

def test_uniform_param_validation():
    with pytest.raises(ValueError):
        UniformParam(0.0, -1.0)
    assert UniformParam(0.3, 0.0).measure() == dirac(0.3)


@given(st.floats(-3, 3), st.floats(0, 2), st.floats(-3, 3), st.floats(0, 2))
def test_frechet_isometry(m1, s1, m2, s2):
    d2 = w2(UniformParam(m1, s1).measure(), UniformParam(m2, s2).measure()) ** 2
    assert abs(d2 - ((m1 - m2) ** 2 + (s1 - s2) ** 2)) < 1e-10


@given(st.floats(-3, 3), st.floats(0, 2), mixed_measures())
def test_f2_consistency(m, s, nu):
    p = UniformParam(m, s)
    e = f2_energy(p, nu)
    assert abs(e - mmd_sq(p.measure(), nu)) < 1e-10
    assert abs(e - f_nu(p.quantile_fn(), nu)) < 1e-10


@pytest.mark.parametrize("m,sigma,q,expected", [
    (0.4, 0.0, 0.4, 0.0),
    (0.0, 1.0, 0.0, 1 / (2 * SQ3)),
])
def test_f2_examples(m, sigma, q, expected):
    assert f2_energy(UniformParam(m, sigma), dirac(q)) == pytest.approx(expected, abs=1e-14)


def test_f2_oracle_value_at_0_1():
    assert abs(disc_l2_dirac(0.0, 1.0) - 1 / (2 * SQ3)) < 1e-12
    assert abs(f2_closed_form(0.0, 1.0) - disc_l2_dirac(0.0, 1.0)) < 1e-8


@given(st.floats(0.01, 2))
def test_f2_closed_form_continuous_at_seam(sigma):
    m = SQ3 * sigma
    inner = (m**2 + 3 * sigma**2) / (2 * SQ3 * sigma)
    assert abs(inner - abs(m)) < 1e-12
    assert abs(f2_closed_form(m - 1e-9, sigma) - f2_closed_form(m + 1e-9, sigma)) < 1e-8


def test_f2_corrected_closed_form_matches_oracle_grid():
    ms = np.linspace(-2, 2, 50)
    ss = np.linspace(2 / 50, 2, 50)
    err = max(abs(f2_closed_form(m, s) - disc_l2_dirac(m, s)) for m in ms for s in ss)
    assert err <= 1e-8


def test_f2_printed_variant_disagrees_with_oracle():
    ms = np.linspace(-2, 2, 50)
    ss = np.linspace(2 / 50, 2, 50)
    err = max(abs(f2_closed_form(m, s, variant="printed") - disc_l2_dirac(m, s))
              for m in ms for s in ss)
    assert err > 1e-2


@pytest.mark.parametrize("m,sigma", [(1.5, 0.3), (-2.0, 1.0), (-0.5, 0.01)])
def test_f2_gradient_outer_case(m, sigma):
    np.testing.assert_allclose(f2_gradient(UniformParam(m, sigma), dirac(0)),
                               [math.copysign(1, m), -1 / SQ3], atol=0)


@given(st.floats(-2, 2), st.floats(1e-3, 2))
def test_f2_gradient_matches_central_differences(m, sigma):
    if abs(abs(m) - SQ3 * sigma) < 1e-4:
        return
    g = f2_gradient(UniformParam(m, sigma), dirac(0))
    # truncation of a step-1e-5 stencil is sqrt3 step^2 / (2 sigma^2) inside the seam,
    # above 1e-5 for sigma < 3e-3; a shorter step keeps the oracle meaningful there
    step = 1e-5 if sigma >= 3e-3 else 1e-6
    fd = central_gradient(lambda v: f2_energy(UniformParam(v[0], abs(v[1])), dirac(0)),
                          [m, sigma], step)
    np.testing.assert_allclose(g, fd, atol=1e-5)


@given(st.floats(0.05, 2))
def test_f2_sigma_derivative_positive_on_axis(sigma):
    assert f2_gradient(UniformParam(0.0, sigma), dirac(0))[1] > 0


def test_f2_gradient_at_minimizer():
    np.testing.assert_array_equal(f2_gradient(UniformParam(0.0, 0.0), dirac(0)), [0.0, 0.0])


def test_s2_stationary_at_minimizer():
    tr = s2_flow(UniformParam(0, 0), dirac(0), DISTANCE, 1.0, 1e-2)
    assert np.all(np.array(tr.states) == 0.0)


def test_s2_from_minus_one_to_delta0():
    tr = s2_flow(UniformParam(-1, 0), dirac(0), DISTANCE, 3.0, 1e-3)
    y = np.array(tr.states)
    t = np.array(tr.times)
    inner = (t > 0) & (t < 1.5)
    assert np.all(y[inner, 1] > 0)
    assert np.linalg.norm(y[-1]) <= 1e-3
    assert np.all(np.diff(tr.energies) <= 1e-10)
    assert tr.meta["seam_events"] >= 1


def test_s2_seam_reached_at_half():
    # outer law moves (m, sigma) along (1, 1/sqrt3) until |m| = sqrt3 sigma
    tr = s2_flow(UniformParam(-1, 0), dirac(0), DISTANCE, 0.5, 1e-3)
    np.testing.assert_allclose(tr.states[-1], [-0.5, 0.5 / SQ3], atol=1e-9)


@pytest.mark.parametrize("x0", [0.8, -0.8])
def test_s2_smooth_converges_to_saddle(x0):
    tr = s2_flow(UniformParam(x0, 0), LAMBDA, SMOOTH, 20.0, 1e-2, record_every=50)
    y = tr.states[-1]
    assert abs(y[0]) <= 1e-3 and y[1] == 0.0
    assert np.all(np.diff(tr.energies) <= 1e-10)


def test_s2_rejects_bad_step():
    with pytest.raises(ValueError):
        s2_flow(UniformParam(0, 1), dirac(0), DISTANCE, 1.0, -1.0)


# --- landscapes and the smooth saddle ---------------------------------------------------

def test_landscape_distance_minimum_at_nu():
    ms, ss, F = landscape_grid(LAMBDA, DISTANCE, (-1, 1), (0, 1), 41)
    assert not np.isnan(F).any()
    j, i = np.unravel_index(np.argmin(F), F.shape)
    assert abs(ms[i]) <= (ms[1] - ms[0]) / 2
    assert abs(ss[j] - 1 / SQ3) <= (ss[1] - ss[0]) / 2
    assert np.sum(F == F.min()) == 1


@pytest.mark.parametrize("k", [DISTANCE, SMOOTH])
def test_landscape_symmetric(k):
    ms, ss, F = landscape_grid(LAMBDA, k, (-1.5, 1.5), (0, 1.5), 21)
    np.testing.assert_allclose(F, F[:, ::-1], atol=1e-12)


@given(mixed_measures(max_atoms=2, max_uniforms=2))
def test_landscape_convexity_distance(nu):
    ms, ss, F = landscape_grid(nu, DISTANCE, (-3, 3), (0, 2), 13)
    for A in (F, F.T):
        assert np.all(A[:, :-2] + A[:, 2:] - 2 * A[:, 1:-1] >= -1e-10)
    n = min(F.shape)
    for off in range(-n + 3, n - 2):
        d = np.diagonal(F, off)
        assert np.all(d[:-2] + d[2:] - 2 * d[1:-1] >= -1e-10)


def test_landscape_thread_count_does_not_change_values(monkeypatch):
    a = landscape_grid(LAMBDA, SMOOTH, (-1, 1), (0, 1), 9, threads=1)[2]
    monkeypatch.setenv("MMDFLOW_THREADS", "4")
    b = landscape_grid(LAMBDA, SMOOTH, (-1, 1), (0, 1), 9)[2]
    np.testing.assert_array_equal(a, b)


def test_landscape_validation():
    with pytest.raises(ValueError):
        landscape_grid(LAMBDA, DISTANCE, (-1, 1), (0, 1), 1)


def test_smooth_saddle_at_origin():
    def fun(v):
        return f2_energy(UniformParam(v[0], abs(v[1])), LAMBDA, SMOOTH)

    assert np.linalg.norm(central_gradient(fun, [0.0, 0.0], 1e-5)) < 1e-8
    eig = np.linalg.eigvalsh(central_hessian(fun, [0.0, 0.0], 1e-3))
    assert eig[0] < 0 < eig[1]
    # analytic: d2F/dm2 = -K''(0) = 3/2 per unit mass squared halves to 3/4 and sigma opposite
    np.testing.assert_allclose(sorted(eig), [-0.75, 0.75], atol=2e-3)


@pytest.mark.parametrize("x0", [0.8, -0.8])
def test_particle_flow_to_saddle(x0):
    tr = particle_flow_smooth([x0], LAMBDA, SMOOTH, 1e-2, 2000, record_every=100)
    assert abs(tr.states[-1][0]) <= 1e-3
    assert np.all(np.diff(tr.energies) <= 1e-10)


def test_particle_at_saddle_is_stationary():
    tr = particle_flow_smooth([0.0], LAMBDA, SMOOTH, 1e-2, 100)
    assert np.all(np.array(tr.states) == 0.0)


def test_particles_at_target_quantiles_nearly_stationary():
    n = 50
    xs = sample_quantile_grid(LAMBDA, n)
    v = particle_velocity(xs, LAMBDA, SMOOTH)
    # midpoint discretization of nu; measured 9.8e-5
    assert np.max(np.abs(v)) <= 1 / n**2 * 0.5


def test_particle_velocity_matches_energy_gradient():
    xs = np.array([-0.4, 0.1, 0.9])
    nu = Measure1D(atoms=((0.2, 0.5),), uniforms=((-1, 1, 0.5),))

    def energy(v):
        from mmdflow.measure import empirical
        return mmd_sq(empirical(v), nu, SMOOTH)

    grad = central_gradient(energy, xs, 1e-6)
    # Wasserstein velocity of equal-weight particles is -n * Euclidean gradient
    np.testing.assert_allclose(particle_velocity(xs, nu, SMOOTH), -xs.size * grad, atol=1e-7)


def test_particle_flow_rejects_distance_kernel():
    with pytest.raises(ValueError):
        particle_flow_smooth([0.0], LAMBDA, DISTANCE, 1e-2, 10)
