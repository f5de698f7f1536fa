import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import angular_grid_margin
from gardner.margin import (
    Decision,
    IterationLimit,
    MarginCertificate,
    decide,
    is_feasible,
    max_margin,
    max_margin_offsets,
    sphere_heuristic,
    verify_witness,
)


def check_certificate(H, cert, tol):
    H = np.asarray(H, dtype=float)
    assert abs(np.linalg.norm(cert.x) - 1.0) <= 1e-12
    assert np.all(cert.lam >= 0)
    assert abs(cert.lam.sum() - 1.0) <= 1e-12
    assert cert.margin_lower == pytest.approx(float(np.min(H @ cert.x)), abs=1e-12)
    assert cert.margin_upper == pytest.approx(float(np.linalg.norm(H.T @ cert.lam)), abs=1e-12)
    assert cert.margin_lower <= cert.margin_upper + 1e-12
    assert cert.gap >= -1e-12
    assert cert.gap <= tol


def test_single_row():
    cert = max_margin([[3.0, 4.0]])
    assert cert.margin_lower == pytest.approx(5.0, abs=1e-12)
    np.testing.assert_allclose(cert.x, [0.6, 0.8], atol=1e-12)
    np.testing.assert_allclose(cert.lam, [1.0])


def test_two_orthogonal_rows():
    H = [[1.0, 0.0], [0.0, 1.0]]
    cert = max_margin(H)
    r = 1 / math.sqrt(2)
    assert cert.margin_lower == pytest.approx(r, abs=1e-12)
    np.testing.assert_allclose(cert.x, [r, r], atol=1e-12)
    np.testing.assert_allclose(cert.lam, [0.5, 0.5], atol=1e-12)
    assert abs(angular_grid_margin(H) - r) <= 1e-4


def test_opposite_rows_origin_in_hull():
    cert = max_margin([[1.0, 0.0], [-1.0, 0.0]], tol=1e-9)
    assert cert.margin_upper <= 1e-9


@pytest.mark.parametrize("method", ["wolfe", "away_fw"])
def test_random_certificates(rng, method):
    for _ in range(40):
        n = int(rng.integers(2, 12))
        m = int(rng.integers(1, 30))
        H = rng.standard_normal((m, n))
        tol = 1e-9 if method == "wolfe" else 1e-6
        cert = max_margin(H, tol=tol, max_iters=200_000)
        check_certificate(H, cert, tol)


def test_methods_agree(rng):
    for _ in range(20):
        H = rng.standard_normal((int(rng.integers(2, 15)), int(rng.integers(2, 8))))
        a = max_margin(H, method="wolfe")
        b = max_margin(H, tol=1e-7, method="away_fw", max_iters=200_000)
        assert abs(a.margin_upper - b.margin_upper) <= 2e-7


def test_iteration_limit_carries_certificate(rng):
    H = rng.standard_normal((60, 20))
    with pytest.raises(IterationLimit) as info:
        max_margin(H, tol=1e-14, max_iters=3, method="away_fw")
    cert = info.value.certificate
    assert not cert.converged
    assert cert.margin_lower <= cert.margin_upper + 1e-12


def test_bad_input():
    with pytest.raises(ValueError):
        max_margin(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        max_margin([[np.nan, 1.0]])
    with pytest.raises(ValueError):
        max_margin([[1.0]], method="simplex")


@pytest.mark.parametrize("seed", range(12))
def test_brute_force_equivalence_n2(seed):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((int(rng.integers(1, 6)), 2))
    cert = max_margin(H)
    brute = angular_grid_margin(H)
    ball = max(brute, 0.0)
    assert abs(cert.margin_upper - ball) <= 1e-4
    if brute > 0:
        assert abs(cert.margin_lower - brute) <= 1e-4


def test_constraint_monotonicity(rng):
    tol = 1e-9
    for _ in range(10):
        H = rng.standard_normal((40, 15))
        prev = math.inf
        for m in range(1, 41, 3):
            cert = max_margin(H[:m], tol=tol)
            assert cert.margin_upper <= prev + 2 * tol
            prev = cert.margin_upper


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(2, 6)), elements=st.floats(-5, 5)),
    st.floats(0.1, 10.0),
)
def test_scale_covariance(H, c):
    tol = 1e-9
    a = max_margin(H, tol=tol)
    b = max_margin(c * H, tol=tol)
    assert abs(b.margin_upper - c * a.margin_upper) <= 2 * tol * c + 1e-12
    assert abs(b.ball_lower - c * a.ball_lower) <= 2 * tol * c + 1e-12


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 15), st.integers(1, 6)), elements=st.floats(-5, 5)))
def test_weak_duality_property(H):
    cert = max_margin(H)
    assert cert.margin_lower <= cert.margin_upper + 1e-12


def test_is_feasible_examples():
    H = [[1.0, 0.0], [0.0, 1.0]]
    assert is_feasible(H, 0.5) is Decision.FEASIBLE
    assert is_feasible(H, 0.8) is Decision.INFEASIBLE
    with pytest.raises(ValueError):
        is_feasible(H, -0.1)


def test_is_feasible_kappa_zero():
    assert is_feasible([[1.0, 0.0], [-1.0, 0.0]], 0.0) is Decision.INFEASIBLE
    assert is_feasible([[1.0, 0.0], [0.0, 1.0]], 0.0) is Decision.FEASIBLE
    # nearly opposite rows: true margin 1e-7 is below a coarse tolerance, so the
    # sphere question at kappa = 0 is answered from the dual side
    H = [[1.0, 1e-7], [-1.0, 1e-7]]
    assert is_feasible(H, 0.0, tol=1e-3) is Decision.INFEASIBLE
    assert is_feasible(H, 0.0, tol=1e-9) is Decision.FEASIBLE


def test_decide_undecided_inside_gap():
    cert = MarginCertificate(np.array([1.0, 0.0]), np.array([1.0]), 1e-4, 5e-3, 5e-3 - 1e-4)
    assert decide(cert, 0.0, tol=1e-3) is Decision.UNDECIDED
    assert decide(cert, 2e-3, tol=1e-3) is Decision.UNDECIDED
    assert decide(cert, 1e-2, tol=1e-3) is Decision.INFEASIBLE
    assert decide(cert, 1e-5, tol=1e-3) is Decision.FEASIBLE


def test_sphere_heuristic_trivial_negative_kappa(rng):
    H = rng.uniform(-3, 3, size=(8, 3))
    x = sphere_heuristic(H, -10.0, seed=1)
    assert x is not None
    assert verify_witness(H, x, -10.0)


def test_sphere_heuristic_convex_case():
    H = [[1.0, 0.0], [0.0, 1.0]]
    x = sphere_heuristic(H, 0.5, seed=3)
    assert x is not None
    assert np.min(np.asarray(H) @ x) >= 0.5
    assert np.min(np.asarray(H) @ x) <= max_margin(H).margin_upper + 1e-12


def test_sphere_heuristic_no_witness():
    assert sphere_heuristic([[1.0, 0.0], [-1.0, 0.0]], 0.1, seed=0, max_iters=300) is None


def test_sphere_heuristic_finds_negative_margin_points(rng):
    # alpha = 3 is past the kappa = 0 capacity, yet kappa = -1 is comfortably reachable
    H = rng.standard_normal((30, 10))
    assert is_feasible(H, 0.0) is Decision.INFEASIBLE
    x = sphere_heuristic(H, -1.0, seed=5)
    assert x is not None
    assert abs(np.linalg.norm(x) - 1) <= 1e-9
    assert np.all(H @ x >= -1.0)


def test_verify_witness_rejects():
    assert not verify_witness([[1.0, 0.0]], [2.0, 0.0], 0.0)
    assert not verify_witness([[1.0, 0.0]], [0.0, 1.0], 0.5)


def test_offsets_zero_match_homogeneous(rng):
    H = rng.standard_normal((12, 6))
    a = max_margin(H)
    b = max_margin_offsets(H, np.zeros(12), tol=1e-9)
    assert abs(a.margin_upper - b.margin_upper) <= 1e-8
    assert abs(a.margin_lower - b.margin_lower) <= 1e-8


def test_offsets_certificate(rng):
    H = rng.standard_normal((10, 5))
    c = 0.3 * rng.standard_normal(10)
    cert = max_margin_offsets(H, c, tol=1e-9)
    assert np.linalg.norm(cert.x) <= 1 + 1e-12
    assert np.min(H @ cert.x - c) >= cert.margin_lower - 1e-12
    lam = cert.lam
    assert np.all(lam >= 0) and abs(lam.sum() - 1) <= 1e-12
    assert cert.margin_upper >= np.linalg.norm(H.T @ lam) - c @ lam - 1e-12
    assert cert.gap <= 1e-8
    # cross-check with a generic solver
    from scipy.optimize import minimize

    res = minimize(
        lambda z: -z[-1],
        np.r_[np.zeros(5), -1.0],
        constraints=[
            {"type": "ineq", "fun": lambda z: H @ z[:-1] - c - z[-1]},
            {"type": "ineq", "fun": lambda z: 1 - z[:-1] @ z[:-1]},
        ],
        method="SLSQP",
        options={"ftol": 1e-12, "maxiter": 500},
    )
    assert abs(res.x[-1] - cert.margin_lower) <= 1e-6
