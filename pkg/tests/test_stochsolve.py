"""Moment propagation: cubature, expectation operators, covariance checks."""

import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dorder.bpf import (make_basis, SpectralVector, SpectralMatrix,
                        project_function, white_noise_covariance)
from dorder.opmat import to_dense
from dorder.dosys import (DensityTerm, RandomParameter, DOSystem,
                          assemble_system_operator)
from dorder.stochsolve import (StochasticForcing, MomentResult, CubatureGrid,
                               parameter_quadrature, tensor_cubature,
                               expected_operator, expected_sandwich,
                               propagate_moments, variance_series)
from dorder.detsolve import solve


def simple_sys(lhs_orders, rhs_coeff=1.0, params=()):
    lhs = tuple(DensityTerm("lhs", "derivative", c, "point", order=o)
                for c, o in lhs_orders)
    rhs = (DensityTerm("rhs", "derivative", rhs_coeff, "point", order=0.0),)
    return DOSystem(lhs, rhs, tuple(params))


# ---------------------------------------------------------------------------
# parameter quadrature and cubature grids

def unzip(pairs):
    return (np.array([x for x, _ in pairs]), np.array([w for _, w in pairs]))


def test_uniform_quadrature_moments():
    p = RandomParameter("a", "uniform", lo=1.0, hi=3.0, quad_order=4)
    x, w = unzip(parameter_quadrature(p))
    assert np.isclose(w.sum(), 1.0, rtol=1e-14)
    assert np.all((x > 1.0) & (x < 3.0))
    # exact for polynomial degree up to 2*4-1; check first three moments
    for k in (1, 2, 3):
        exact = (3.0 ** (k + 1) - 1.0) / ((k + 1) * 2.0)
        assert np.isclose(np.sum(w * x ** k), exact, rtol=1e-13)


def test_uniform_two_point_rule():
    p = RandomParameter("a", "uniform", lo=9.5, hi=10.5, quad_order=2)
    x, w = unzip(parameter_quadrature(p))
    assert np.allclose(w, [0.5, 0.5], rtol=1e-15)
    assert np.allclose(np.sort(x), 10.0 + np.array([-0.5, 0.5]) / np.sqrt(3.0),
                       rtol=1e-14)


def test_gaussian_quadrature_moments():
    p = RandomParameter("g", "gaussian", mean=2.0, stddev=0.5, quad_order=6)
    x, w = unzip(parameter_quadrature(p))
    assert np.isclose(w.sum(), 1.0, rtol=1e-13)
    assert np.isclose(np.sum(w * x), 2.0, rtol=1e-13)
    assert np.isclose(np.sum(w * (x - 2.0) ** 2), 0.25, rtol=1e-13)
    assert np.isclose(np.sum(w * (x - 2.0) ** 3), 0.0, atol=1e-13)


def test_tensor_cubature_graded_order():
    params = (RandomParameter("a", "uniform", lo=0.0, hi=1.0, quad_order=2),
              RandomParameter("b", "uniform", lo=0.0, hi=1.0, quad_order=3))
    grid = tensor_cubature(params)
    assert len(grid) == 6
    assert np.isclose(grid.weights.sum(), 1.0, rtol=1e-14)
    assert all(set(node) == {"a", "b"} for node in grid.nodes)
    # node index sums never decrease along the enumeration
    xa, _ = unzip(parameter_quadrature(params[0]))
    xb, _ = unzip(parameter_quadrature(params[1]))
    sums = [int(np.argmin(np.abs(xa - n["a"]))) + int(np.argmin(np.abs(xb - n["b"])))
            for n in grid.nodes]
    assert sums == sorted(sums)


def test_tensor_cubature_rejects_empty():
    with pytest.raises(ValueError):
        tensor_cubature(())


# ---------------------------------------------------------------------------
# expectation operators

def test_expected_operator_linear_in_rhs_param():
    # A_G depends linearly on an RHS coefficient, so E[A_G] = A_G(E[k])
    b = make_basis(32, 1.0)
    sysm = DOSystem(
        (DensityTerm("lhs", "derivative", 1.0, "point", order=1.0),),
        (DensityTerm("rhs", "derivative", "k", "point", order=0.0),),
        (RandomParameter("k", "uniform", lo=0.5, hi=2.5, quad_order=4),))
    grid = tensor_cubature(sysm.random_params)
    ea = expected_operator(sysm, b, grid)
    at_mean = assemble_system_operator(sysm, b, {"k": 1.5})
    assert np.allclose(ea.first_col, at_mean.first_col, atol=1e-14)


def test_expected_operator_order_insensitive():
    b = make_basis(16, 1.0)
    sysm = DOSystem(
        (DensityTerm("lhs", "derivative", "k", "point", order=1.0),
         DensityTerm("lhs", "derivative", 1.0, "point", order=0.0)),
        (DensityTerm("rhs", "derivative", 1.0, "point", order=0.0),),
        (RandomParameter("k", "uniform", lo=0.5, hi=1.5, quad_order=7),))
    grid = tensor_cubature(sysm.random_params)
    rng = np.random.default_rng(0)
    perm = rng.permutation(len(grid))
    shuffled = CubatureGrid(tuple(grid.nodes[i] for i in perm), grid.weights[perm])
    a = expected_operator(sysm, b, grid).first_col
    c = expected_operator(sysm, b, shuffled).first_col
    assert np.max(np.abs(a - c)) <= 1e-13 * max(1.0, np.max(np.abs(a)))


def test_expected_sandwich_deterministic_matches_direct():
    rng = np.random.default_rng(1)
    b = make_basis(24, 1.0)
    sysm = simple_sys([(1.0, 1.0), (0.4, 0.0)])
    g = rng.standard_normal((24, 24))
    m = g @ g.T
    grid = CubatureGrid(({},), np.array([1.0]))
    s = expected_sandwich(sysm, b, grid, m)
    a = to_dense(assemble_system_operator(sysm, b))
    assert np.allclose(s, a @ m @ a.T, atol=1e-12 * np.abs(m).max())


def test_expected_sandwich_node_failure_names_node():
    b = make_basis(8, 1.0)
    sysm = DOSystem(
        (DensityTerm("lhs", "derivative", "k", "point", order=0.0),),
        (DensityTerm("rhs", "derivative", 1.0, "point", order=0.0),),
        (RandomParameter("k", "uniform", lo=-1.0, hi=1.0, quad_order=3),))
    grid = tensor_cubature(sysm.random_params)
    # middle node sits at k=0: singular LHS
    with pytest.raises(ValueError, match="node 1"):
        expected_operator(sysm, b, grid)


# ---------------------------------------------------------------------------
# moment propagation

def zero_mean(b):
    return project_function(lambda t: np.zeros_like(t), b)


def test_white_noise_through_identity():
    b = make_basis(16, 2.0)
    sysm = simple_sys([(1.0, 0.0)])
    f = StochasticForcing(zero_mean(b), white_noise_covariance(b, 0.7))
    r = propagate_moments(sysm, b, f)
    assert np.allclose(r.mean.coeffs, 0.0, atol=1e-15)
    assert np.allclose(r.covariance.coeffs, 0.7 * (16 / 2.0) * np.eye(16), atol=1e-12)


def test_mean_propagation_matches_deterministic_solve():
    b = make_basis(32, 1.0)
    sysm = simple_sys([(1.0, 0.5), (1.0, 1.0)])
    mean = project_function(np.sin, b)
    f = StochasticForcing(mean, SpectralMatrix(b, np.zeros((32, 32))))
    r = propagate_moments(sysm, b, f)
    assert np.allclose(r.mean.coeffs, solve(sysm, mean).coeffs, atol=1e-14)
    assert np.abs(r.covariance.coeffs).max() <= 1e-14


def test_deterministic_forcing_random_system_gives_parameter_variance():
    b = make_basis(16, 1.0)
    sysm = DOSystem(
        (DensityTerm("lhs", "derivative", 1.0, "point", order=1.0),),
        (DensityTerm("rhs", "derivative", "k", "point", order=0.0),),
        (RandomParameter("k", "uniform", lo=0.5, hi=1.5, quad_order=5),))
    mean = project_function(lambda t: np.ones_like(t), b)
    f = StochasticForcing(mean, SpectralMatrix(b, np.zeros((16, 16))))
    r = propagate_moments(sysm, b, f)
    # y = k t; var(y) = var(k) t^2 = (1/12) t^2
    t = b.midpoints()
    pairs = variance_series(r, t)
    assert np.allclose([v for _, v in pairs], t ** 2 / 12.0, rtol=1e-10, atol=1e-13)


def test_basis_mismatch_rejected():
    b = make_basis(8, 1.0)
    other = make_basis(8, 2.0)
    f = StochasticForcing(zero_mean(other), white_noise_covariance(other, 1.0))
    with pytest.raises(ValueError, match="basis"):
        propagate_moments(simple_sys([(1.0, 1.0)]), b, f)


def test_input_covariance_validation():
    b = make_basis(8, 1.0)
    bad = np.eye(8)
    bad[0, 1] = 0.5  # asymmetric
    with pytest.raises(ValueError, match="symmetric"):
        StochasticForcing(zero_mean(b), SpectralMatrix(b, bad))
    indef = np.eye(8)
    indef[0, 1] = indef[1, 0] = 2.0  # symmetric but indefinite
    with pytest.raises(ValueError, match="positive semidefinite"):
        StochasticForcing(zero_mean(b), SpectralMatrix(b, indef))


def test_variance_series_pairs_and_clamping(caplog):
    b = make_basis(4, 1.0)
    cov = np.diag([1.0, -1e-13, 2.0, 0.0])
    r = MomentResult(SpectralVector(b, np.zeros(4)), SpectralMatrix(b, cov))
    with caplog.at_level(logging.WARNING, logger="dorder.stochsolve"):
        pairs = variance_series(r, b.midpoints())
    assert [t for t, _ in pairs] == list(b.midpoints())
    assert [v for _, v in pairs] == [1.0, 0.0, 2.0, 0.0]
    assert any("clamped" in m for m in caplog.messages)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_output_covariance_symmetric_near_psd(seed):
    rng = np.random.default_rng(seed)
    n = 24
    b = make_basis(n, 2.0)
    sysm = DOSystem(
        (DensityTerm("lhs", "derivative", 1.0, "point", order=float(rng.choice([0.5, 1.0]))),
         DensityTerm("lhs", "derivative", "k", "point", order=0.0)),
        (DensityTerm("rhs", "derivative", 1.0, "point", order=0.0),),
        (RandomParameter("k", "uniform", lo=0.2, hi=1.0, quad_order=3),))
    g = rng.standard_normal((n, n)) / np.sqrt(n)
    f = StochasticForcing(SpectralVector(b, rng.standard_normal(n)),
                          SpectralMatrix(b, g @ g.T))
    r = propagate_moments(sysm, b, f)
    c = r.covariance.coeffs
    assert np.array_equal(c, c.T)  # symmetrized on return
    scale = max(np.abs(c).max(), 1e-300)
    assert np.linalg.eigvalsh(c).min() >= -1e-8 * scale
