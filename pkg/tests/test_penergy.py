import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize

from packspec import penergy as pe, space as sp


def pi_p(p):
    """Half-period of the p-sine, including the (p-1)^(1/p) factor."""
    return 2 * math.pi * (p - 1) ** (1 / p) / (p * math.sin(math.pi / p))


def closed_form(p, L):
    # first integral of the 1D p-Laplace equation gives lambda = (pi_p / L)^p
    return (pi_p(p) / L) ** p


def profile_oracle(p, L, cells=400):
    """Minimize the 1D Rayleigh quotient over zero-boundary profiles directly.

    Midpoint quadrature for the mass term, so the discretization differs from
    the one in the library.
    """
    h = L / cells
    x0 = np.sin(np.pi * np.arange(1, cells) / cells)

    def fun(z):
        u = np.concatenate([[0.0], z, [0.0]])
        du = np.diff(u) / h
        mid = (u[1:] + u[:-1]) / 2
        num = np.sum(np.abs(du) ** p)
        den = np.sum(mid ** p)
        g_du = p * np.abs(du) ** (p - 1) * np.sign(du) / h / num
        g_mid = p * mid ** (p - 1) / 2 / den
        grad = (g_du[:-1] - g_du[1:]) - (g_mid[:-1] + g_mid[1:])
        return math.log(num) - math.log(den), grad

    res = optimize.minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=[(0, None)] * (cells - 1),
                            options={"maxiter": 20000, "ftol": 1e-15, "gtol": 1e-12})
    return math.exp(res.fun)


@pytest.mark.parametrize("p", [3, 4, 8])
def test_pi_p_quadrature(p):
    val, _ = integrate.quad(lambda s: (1 - s**p) ** (-1 / p), 0, 1)
    assert pi_p(p) == pytest.approx(2 * (p - 1) ** (1 / p) * val, rel=1e-8)


@pytest.mark.parametrize("p", [4.0, 8.0])
def test_interval_matches_corrected_closed_form_and_profile_oracle(p):
    L = math.pi
    s = sp.interval(L, 201)
    res = pe.dirichlet_eig1(s, range(1, 200), pe.EnergyConfig(p, restarts=2))
    assert res.status == "converged"
    assert res.lambda_ == pytest.approx(closed_form(p, L), rel=0.01)
    assert res.lambda_ == pytest.approx(profile_oracle(p, L), rel=0.01)


def test_p2_crosscheck():
    s = sp.interval(math.pi, 81)
    res = pe.dirichlet_eig1(s, range(1, 80), pe.EnergyConfig(2.0, restarts=2))
    assert res.crosscheck == pytest.approx(res.lambda_, rel=1e-6)
    assert res.lambda_ == pytest.approx(1.0, rel=5e-3)
    assert pe.exact_p2(s, range(1, 80)) == res.crosscheck


def test_random_graph_p2_crosscheck():
    s = sp.random_geometric(15, 0.4, 2)
    A = list(range(0, 15, 2)) + [1]
    res = pe.dirichlet_eig1(s, A, pe.EnergyConfig(2.0))
    assert res.lambda_ == pytest.approx(res.crosscheck, rel=1e-6)


def test_union_of_nonadjacent_sets_is_min():
    s = sp.circle(1.0, 30)
    solver = pe.DirichletSolver(s, pe.EnergyConfig(3.0, restarts=2))
    a, b = [1, 2, 3], [10, 11, 12, 13, 14, 15]
    assert solver.log_lambda(a + b) == min(solver.log_lambda(a), solver.log_lambda(b))


def test_support_errors():
    s = sp.circle(1.0, 8)
    cfg = pe.EnergyConfig(2.0)
    with pytest.raises(pe.SupportError):
        pe.dirichlet_eig1(s, [], cfg)
    with pytest.raises(pe.SupportError):
        pe.dirichlet_eig1(s, range(8), cfg)
    with pytest.raises(ValueError):
        pe.EnergyConfig(300.0)
    with pytest.raises(ValueError):
        pe.EnergyConfig(1.0)


def test_cone_gives_upper_bound_and_is_beaten():
    s = sp.interval(1.0, 51)
    A = list(range(1, 50))
    p = 16.0
    res = pe.dirichlet_eig1(s, A, pe.EnergyConfig(p, restarts=2))
    cone = pe.cone_function(s, 25, 0.5)
    assert res.log_lambda <= pe.log_rayleigh(s, cone, p) + 1e-9
    assert pe.log_rayleigh(s, res.minimizer, p) == pytest.approx(res.log_lambda, abs=1e-9)


def test_high_p_is_finite_in_log_domain():
    s = sp.interval(math.pi, 101)
    res = pe.dirichlet_eig1(s, range(1, 100), pe.EnergyConfig(128.0, restarts=2))
    assert math.isfinite(res.log_lambda)
    # the root stays near 1/inradius = 2/pi
    assert 0.6 < res.lambda_root < 0.75


def test_deterministic_given_seed():
    s = sp.random_geometric(12, 0.45, 5)
    cfg = pe.EnergyConfig(6.0, restarts=3, seed=11)
    a = pe.dirichlet_eig1(s, range(8), cfg)
    b = pe.dirichlet_eig1(s, range(8), cfg)
    assert a.log_lambda == b.log_lambda
    assert np.array_equal(a.minimizer, b.minimizer)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.floats(1.5, 64), c=st.floats(1e-3, 1e3))
def test_rayleigh_scale_invariant(seed, p, c):
    s = sp.random_geometric(9, 0.5, seed % 50)
    f = np.random.default_rng(seed).standard_normal(s.n)
    assert pe.log_rayleigh(s, c * f, p) == pytest.approx(pe.log_rayleigh(s, f, p), abs=1e-9)
    assert pe.log_rayleigh(s, -f, p) == pytest.approx(pe.log_rayleigh(s, f, p), abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.sampled_from([2.0, 3.0, 5.0]))
def test_lambda_decreases_with_domain(seed, p):
    s = sp.random_geometric(9, 0.5, seed % 40)
    rng = np.random.default_rng(seed)
    big = sorted(rng.choice(s.n, 6, replace=False).tolist())
    small = big[:4]
    solver = pe.DirichletSolver(s, pe.EnergyConfig(p, restarts=3))
    assert solver.log_lambda(big) <= solver.log_lambda(small) + 1e-7
