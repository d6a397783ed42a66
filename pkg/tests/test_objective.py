import numpy as np
import pytest

from fraclp.grid import make_interval_grid, make_rect_grid
from fraclp.objective import HeatSourceProblem, TrackingProblem, add_noise

from oracles import central_difference, heat_final_linear


def test_tracking_value_and_gradient(rng):
    g = make_interval_grid(20)
    z = rng.standard_normal(g.size)
    K = rng.standard_normal((g.size, g.size)) / g.size
    for prob in (TrackingProblem(g, z), TrackingProblem(g, z, K)):
        u, h = rng.standard_normal((2, g.size))
        fd = central_difference(prob.value, u, h)
        assert g.cell * float(prob.gradient(u) @ h) == pytest.approx(fd, rel=1e-7)
        assert prob.is_quadratic
    assert TrackingProblem(g, z).value(z) == 0.0


def test_tracking_on_2d_grid(rng):
    g = make_rect_grid(4, 1.0, 3, 1.0)
    z = rng.standard_normal(g.shape)
    prob = TrackingProblem(g, z)
    assert prob.value(np.zeros(g.size)) == pytest.approx(0.5 * g.cell * np.sum(z**2))


def test_heat_forward_matches_eigen_solution(rng):
    g = make_interval_grid(31, 2.0)
    y0 = np.sin(np.pi * g.x / 2.0)
    u = rng.standard_normal(g.size)
    prob = HeatSourceProblem(g, np.zeros(g.size), y0=y0, diffusivity=0.7, T=0.3, nt=40)
    ref = heat_final_linear(g.n, g.length, 0.7, 0.3, 40, y0 + u)
    np.testing.assert_allclose(prob.heat_forward(u).final, ref, rtol=1e-10, atol=1e-12)


def test_heat_step_matrix_is_symmetric_tridiagonal():
    g = make_interval_grid(10)
    prob = HeatSourceProblem(g, np.zeros(10), diffusivity=1 + g.x, T=0.1, nt=5)
    S = prob.step_matrix()
    assert np.array_equal(S, S.T)
    assert np.count_nonzero(np.triu(S, 2)) == 0
    assert np.linalg.eigvalsh(S).min() >= 1.0


def test_heat_linearization_is_the_derivative(rng):
    g = make_interval_grid(32)
    prob = HeatSourceProblem(g, np.zeros(g.size), y0=0.3 * np.ones(g.size), reaction="cubic",
                             T=0.05, nt=20)
    u, du = rng.standard_normal((2, g.size))
    traj = prob.heat_forward(u)
    fd = central_difference(lambda v: prob.heat_forward(v).final, u, du, t=1e-6)
    np.testing.assert_allclose(prob.linearized_forward(traj, du), fd, rtol=1e-6, atol=1e-9)
    assert not prob.is_quadratic


def test_heat_value_and_gradient_consistent(rng):
    g = make_interval_grid(16)
    prob = HeatSourceProblem(g, rng.standard_normal(g.size), reaction="cubic", T=0.02, nt=10)
    u = rng.standard_normal(g.size) * 0.3
    v, gr = prob.value_and_gradient(u)
    assert v == prob.value(u)
    np.testing.assert_array_equal(gr, prob.gradient(u))


def test_heat_validation():
    g = make_interval_grid(8)
    z = np.zeros(8)
    with pytest.raises(ValueError):
        HeatSourceProblem(make_rect_grid(3, 1.0, 3, 1.0), np.zeros(9))
    with pytest.raises(ValueError):
        HeatSourceProblem(g, z, reaction="quadratic")
    with pytest.raises(ValueError):
        HeatSourceProblem(g, z, T=0.0)
    with pytest.raises(ValueError):
        HeatSourceProblem(g, z, nt=0)
    with pytest.raises(ValueError):
        HeatSourceProblem(g, z, diffusivity=-1.0)
    other = HeatSourceProblem(g, z, nt=3)
    with pytest.raises(ValueError):
        HeatSourceProblem(g, z, nt=4).heat_adjoint(other.heat_forward(z))


def test_cubic_blowup_is_reported():
    g = make_interval_grid(8)
    prob = HeatSourceProblem(g, np.zeros(8), reaction="cubic", T=1.0, nt=5)
    with pytest.raises(FloatingPointError, match="blew up"):
        prob.heat_forward(np.full(8, 1e30))


def test_noise_is_seeded():
    z = np.zeros(100)
    a, b = add_noise(z, 0.1, 5), add_noise(z, 0.1, 5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, add_noise(z, 0.1, 6))
    assert np.std(a) == pytest.approx(0.1, rel=0.3)
    assert np.array_equal(add_noise(z, 0.0, 1), z)
    with pytest.raises(ValueError):
        add_noise(z, -1.0, 0)
