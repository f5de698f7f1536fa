import math

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import ndtr

from gardner.capacity import (
    BracketNotMinimizing,
    CorrelationParams,
    Exactness,
    NoSignChange,
    ScalarMinimizeSpec,
    alpha_c_correlated,
    alpha_c_uncorrelated,
    f_gar_cor,
    f_gar_cor_objective,
    kappa_adj,
    kappa_critical,
)
from gardner.gaussian import QuadratureSpec, f_gar, f_gar_quadrature, integrate

TIGHT = QuadratureSpec(abs_tol=1e-13, rel_tol=1e-13, max_subdivisions=2000)


def grid_scan(kappa, m_a, lo=-20.0, hi=20.0, step=1e-4):
    """Brute-force oracle: scipy's ndtr on a dense v grid, no shared code."""
    v = np.arange(lo, hi + step / 2, step)
    s = math.sqrt(1 - m_a**2)

    def fg(a):
        return (1 + a**2) * ndtr(a) + a * np.exp(-a**2 / 2) / math.sqrt(2 * math.pi)

    obj = 0.5 * (1 + m_a) * fg((kappa - v * m_a) / s) + 0.5 * (1 - m_a) * fg((kappa + v * m_a) / s)
    i = int(np.argmin(obj))
    return float(obj[i]), float(v[i])


def analytic_kappa_critical(m_a):
    # at kappa_adj = 0 stationarity reads a Phi(a) + phi(a) = (1+m)/(1-m) phi(0) for a = a_plus,
    # and kappa = v m = s a / 2
    target = (1 + m_a) / (1 - m_a) / math.sqrt(2 * math.pi)
    a = brentq(lambda a: a * ndtr(a) + math.exp(-a * a / 2) / math.sqrt(2 * math.pi) - target, -10, 10, xtol=1e-15)
    return math.sqrt(1 - m_a**2) * a / 2


def test_alpha_c_at_zero():
    r = alpha_c_uncorrelated(0.0)
    assert abs(r.alpha_c - 2.0) <= 1e-10
    assert r.exactness is Exactness.EXACT


def test_alpha_c_half_against_quadrature():
    r = alpha_c_uncorrelated(0.5)
    assert abs(r.alpha_c - 1.0 / f_gar_quadrature(0.5, TIGHT)) <= 1e-9
    assert abs(r.alpha_c * r.f_value - 1.0) <= 1e-12


def test_negative_kappa_is_upper_bound_only():
    r = alpha_c_uncorrelated(-1.0)
    assert r.exactness is Exactness.UPPER_BOUND_ONLY
    assert r.alpha_c > 2.0
    assert f_gar_quadrature(-1.0, TIGHT) < f_gar_quadrature(0.0, TIGHT)


def test_params_validation():
    with pytest.raises(ValueError):
        CorrelationParams(1.0)
    with pytest.raises(ValueError):
        CorrelationParams(-0.1)
    with pytest.raises(ValueError):
        ScalarMinimizeSpec(bracket_lo=1.0, bracket_hi=0.0)


def test_objective_reduces_at_zero_correlation():
    p = CorrelationParams(0.0)
    for v in (-3.0, 0.0, 2.5):
        assert f_gar_cor_objective(0.7, v, p) == pytest.approx(f_gar(0.7), abs=1e-15)


def test_objective_at_v_zero_matches_two_integrals():
    m = 0.5
    s = math.sqrt(1 - m * m)
    a = 0.5 / s
    pdf = lambda g: np.exp(-g * g / 2) / math.sqrt(2 * math.pi)
    first, _ = integrate(lambda g: (g + a) ** 2 * pdf(g), -a, 40.0, TIGHT)
    second, _ = integrate(lambda g: (-g + a) ** 2 * pdf(g), -40.0, a, TIGHT)
    direct = 0.5 * (1 + m) * first + 0.5 * (1 - m) * second
    value = f_gar_cor_objective(0.5, 0.0, CorrelationParams(m))
    assert abs(value - f_gar(a)) <= 1e-14
    assert abs(value - direct) <= 1e-10


@pytest.mark.parametrize("kappa,v,m", [(1.0, 0.3, 0.8), (0.2, -1.1, 0.5), (-0.5, 2.0, 0.3)])
def test_objective_terms_match_both_integral_orientations(kappa, v, m):
    """Both written orientations of the correlated integral agree by quadrature."""
    s = math.sqrt(1 - m * m)
    am, ap = (kappa - v * m) / s, (kappa + v * m) / s
    pdf = lambda g: np.exp(-g * g / 2) / math.sqrt(2 * math.pi)
    L = 40.0
    lb = 0.5 * (1 + m) * integrate(lambda g: (g + am) ** 2 * pdf(g), -am, L, TIGHT)[0] + 0.5 * (1 - m) * integrate(
        lambda g: (-g + ap) ** 2 * pdf(g), -L, ap, TIGHT
    )[0]
    ub = 0.5 * (1 + m) * integrate(lambda g: (g - am) ** 2 * pdf(g), -L, am, TIGHT)[0] + 0.5 * (1 - m) * integrate(
        lambda g: (-g - ap) ** 2 * pdf(g), -ap, L, TIGHT
    )[0]
    obj = f_gar_cor_objective(kappa, v, CorrelationParams(m))
    assert abs(lb - ub) <= 1e-10
    assert abs(obj - lb) <= 1e-10


def test_objective_not_even_in_v():
    p = CorrelationParams(0.8)
    assert f_gar_cor_objective(1.0, 0.3, p) != pytest.approx(f_gar_cor_objective(1.0, -0.3, p), abs=1e-6)


def test_f_gar_cor_degenerate():
    f, v = f_gar_cor(0.5, CorrelationParams(0.0))
    assert f == f_gar(0.5)
    assert v == 0.0


def test_f_gar_cor_against_grid_scan():
    f, v = f_gar_cor(1.0, CorrelationParams(0.5))
    f_ref, v_ref = grid_scan(1.0, 0.5)
    assert abs(f - f_ref) <= 1e-6
    assert abs(v - v_ref) <= 1e-3


def test_f_gar_cor_below_any_evaluation():
    p = CorrelationParams(0.8)
    f, _ = f_gar_cor(1.0, p)
    assert f <= f_gar_cor_objective(1.0, 0.0, p)
    spec = ScalarMinimizeSpec()
    assert f <= f_gar_cor_objective(1.0, spec.bracket_lo, p)
    assert f <= f_gar_cor_objective(1.0, spec.bracket_hi, p)


def test_bracket_not_minimizing():
    with pytest.raises(BracketNotMinimizing):
        f_gar_cor(3.0, CorrelationParams(0.5), ScalarMinimizeSpec(bracket_lo=-2.0, bracket_hi=0.5))


def test_kappa_adj_reduction():
    for k in (-1.0, 0.0, 0.7):
        assert kappa_adj(k, CorrelationParams(0.0)) == k


def test_kappa_adj_against_grid_scan():
    _, v_ref = grid_scan(1.0, 0.5)
    s = math.sqrt(0.75)
    ref = (1.0 - v_ref * 0.5) / s
    # grid step 1e-4 in v moves kappa_adj by at most 0.5e-4 * m / s
    assert abs(kappa_adj(1.0, CorrelationParams(0.5)) - ref) <= 0.5e-4 * 0.5 / s + 1e-12


@pytest.mark.parametrize("m_a", [0.3, 0.5, 0.8])
def test_kappa_critical_matches_stationarity_oracle(m_a):
    kc = kappa_critical(CorrelationParams(m_a))
    assert abs(kc - analytic_kappa_critical(m_a)) <= 1e-8
    assert abs(kappa_adj(kc, CorrelationParams(m_a))) <= 1e-8


def test_kappa_critical_small_correlation():
    kc = kappa_critical(CorrelationParams(0.01))
    assert -0.1 < kc < 0.1


def test_kappa_critical_reproducible():
    p = CorrelationParams(0.5)
    assert abs(kappa_critical(p) - kappa_critical(p)) <= 1e-8
    assert kappa_adj(kappa_critical(p) + 1e-3, p) > 0


def test_kappa_adj_increasing_across_root():
    p = CorrelationParams(0.8)
    kc = kappa_critical(p)
    vals = [kappa_adj(kc + d, p) for d in np.linspace(-0.2, 0.2, 21)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[0] < 0 < vals[-1]


def test_kappa_critical_requires_correlation():
    with pytest.raises(ValueError):
        kappa_critical(CorrelationParams(0.0))


def test_no_sign_change():
    with pytest.raises(NoSignChange):
        kappa_critical(CorrelationParams(0.5), lo=2.0, hi=3.0, max_doublings=0)


def test_correlated_reduces_to_uncorrelated():
    a = alpha_c_correlated(0.5, CorrelationParams(0.0))
    b = alpha_c_uncorrelated(0.5)
    assert a.alpha_c == b.alpha_c
    assert a.exactness is b.exactness


@pytest.mark.parametrize("k", np.linspace(-2, 3, 11))
def test_reduction_grid(k):
    f, v = f_gar_cor(k, CorrelationParams(0.0))
    assert abs(f - f_gar(k)) <= 1e-12 and v == 0.0


def test_exactness_around_critical():
    p = CorrelationParams(0.5)
    kc = kappa_critical(p)
    assert alpha_c_correlated(kc + 0.05, p).exactness is Exactness.EXACT
    assert alpha_c_correlated(kc - 0.05, p).exactness is Exactness.UPPER_BOUND_ONLY


def test_capacity_grows_with_correlation():
    for k in (0.0, 0.5, 1.0):
        vals = [alpha_c_correlated(k, CorrelationParams(m)).alpha_c for m in (0.0, 0.3, 0.5, 0.8)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("m_a", [0.0, 0.5, 0.8])
def test_capacity_decreasing_in_kappa(m_a):
    vals = [alpha_c_correlated(k, CorrelationParams(m_a)).alpha_c for k in np.linspace(-1, 3, 17)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("kappa", [0.0, 0.5, 1.0])
@pytest.mark.parametrize("m_a", [0.3, 0.8])
def test_optimizer_consistency(kappa, m_a):
    f, _ = f_gar_cor(kappa, CorrelationParams(m_a))
    assert abs(f - grid_scan(kappa, m_a)[0]) <= 1e-6


@pytest.mark.parametrize("m_a", [0.5, 0.8])
def test_single_exactness_flip(m_a):
    p = CorrelationParams(m_a)
    kc = kappa_critical(p)
    flags = [alpha_c_correlated(k, p).exactness for k in np.linspace(-1, 3, 81)]
    flips = sum(a is not b for a, b in zip(flags, flags[1:]))
    assert flips == 1
    assert alpha_c_correlated(kc + 1e-7, p).exactness is Exactness.EXACT
    assert alpha_c_correlated(kc - 1e-7, p).exactness is Exactness.UPPER_BOUND_ONLY
