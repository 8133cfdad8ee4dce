import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from kingldp.numerics import (
    QuadratureError,
    QuadratureWarning,
    RootRangeError,
    integrate_interval,
    integrate_tail,
    log_normal_cdf,
    optimize_unimodal,
    solve_monotone,
)


def test_tail_of_inverse_square():
    res = integrate_tail(lambda y: 1.0 / y**2)
    assert res.value == pytest.approx(1.0, rel=1e-13)
    assert res.converged


@pytest.mark.parametrize("t", [-20.0, -1.0, 0.3, 0.9, 0.999])
def test_log_integrand_against_scipy(t):
    ours = integrate_tail(lambda y: np.log1p(-t / y**2), rel_tol=1e-12).value
    ref, _ = integrate.quad(lambda y: math.log1p(-t / y**2), 1.0, math.inf, epsabs=1e-13, epsrel=1e-12)
    assert ours == pytest.approx(ref, rel=1e-9, abs=1e-11)


def test_interval_polynomial_exact():
    res = integrate_interval(lambda u: 3 * u**2, 0.0, 2.0)
    assert res.value == pytest.approx(8.0, rel=1e-14)


def test_rel_tol_validated():
    with pytest.raises(ValueError):
        integrate_interval(np.cos, 0, 1, rel_tol=0.1)
    with pytest.raises(ValueError):
        integrate_interval(np.cos, 0, 1, rel_tol=0.0)


def test_nan_integrand_raises():
    with pytest.raises(QuadratureError):
        integrate_interval(lambda u: np.full_like(u, np.nan), 0, 1)


def test_budget_exhaustion_warns():
    with pytest.warns(QuadratureWarning):
        res = integrate_interval(lambda u: np.sin(1e5 * u), 0.0, 1.0, rel_tol=1e-13)
    assert not res.converged


def test_solve_monotone_expands_bracket():
    r = solve_monotone(lambda x: x**3, 8.0, (0.0, 0.5))
    assert r.root == pytest.approx(2.0, abs=1e-10)
    assert abs(r.residual) <= 1e-12


def test_solve_monotone_decreasing():
    r = solve_monotone(lambda x: math.exp(-x), 0.25, (0.0, 1.0))
    assert r.root == pytest.approx(math.log(4.0), abs=1e-11)


def test_solve_monotone_out_of_range():
    with pytest.raises(RootRangeError):
        solve_monotone(math.exp, -1.0, (0.0, 1.0), limits=(-50.0, 50.0))


def test_unimodal_min_and_max():
    r = optimize_unimodal(lambda v: (v - 1.3) ** 4 + 2.0, (0.0, 5.0))
    # a quartic is flat to ~1e-16 within 1e-4 of its minimum
    assert r.argopt == pytest.approx(1.3, abs=1e-3)
    assert r.value == pytest.approx(2.0)
    assert not r.at_boundary
    r = optimize_unimodal(lambda v: -abs(v - math.pi / 2), (0.0, 3.0), mode="max")
    assert r.argopt == pytest.approx(math.pi / 2, abs=1e-9)


def test_unimodal_boundary_flag():
    r = optimize_unimodal(lambda v: v, (1.0, 2.0))
    assert r.at_boundary
    assert r.argopt == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("z", [-60.0, -38.5, -10.0, -8.0001, -7.999, -3.0, -0.5, 0.0, 1.0, 4.0, 9.0])
def test_log_normal_cdf_against_mpmath(z):
    mpmath.mp.dps = 40
    ref = float(mpmath.log(mpmath.ncdf(z)))
    assert log_normal_cdf(z) == pytest.approx(ref, rel=1e-13, abs=1e-300)


@settings(max_examples=200, deadline=None)
@given(st.floats(-200, 30), st.floats(0.001, 5))
def test_log_normal_cdf_increasing(z, dz):
    assert log_normal_cdf(z) < log_normal_cdf(z + dz) or log_normal_cdf(z) == 0.0
