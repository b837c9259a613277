"""Tests for planted-minimizer construction."""

import numpy as np
import pytest

from sparseprox.construct import (
    construct_b,
    construct_instance,
    orthonormal_range_basis,
    pocs_sign_vector,
)
from sparseprox.problems import gen_gaussian, gen_sparse_signal, lipschitz_constant
from sparseprox.prox import PenaltySpec, prox_l1_al2
from sparseprox.solvers import SolverConfig, check_stationarity, fbs_solve, gradient


def planted(seed, m=40, n=100, k=6, gamma=0.01, alpha=1.0, lam=None):
    a = gen_gaussian(m, n, seed=seed)
    if lam is None:
        lam = 0.99 / lipschitz_constant(a)
    x, _ = gen_sparse_signal(n, k, seed=seed + 500)
    return construct_instance(a, x, lam, PenaltySpec(alpha=alpha, gamma=gamma)) + (lam,)


def test_range_basis():
    a = gen_gaussian(5, 12, seed=0)
    u = orthonormal_range_basis(a)
    assert u.shape == (12, 5)
    np.testing.assert_allclose(u.T @ u, np.eye(5), atol=1e-12)
    # projector reproduces the row space
    np.testing.assert_allclose(u @ (u.T @ a.T), a.T, atol=1e-10)
    big = orthonormal_range_basis(gen_gaussian(64, 256, seed=1))
    assert big.shape == (256, 64)
    np.testing.assert_allclose(big.T @ big, np.eye(64), atol=1e-10)
    ident = orthonormal_range_basis(np.eye(2))
    np.testing.assert_allclose(ident @ ident.T, np.eye(2), atol=1e-12)
    with pytest.raises(ValueError):
        orthonormal_range_basis(np.vstack([a, a]))  # repeated rows
    with pytest.raises(ValueError):
        orthonormal_range_basis(a.T)  # more rows than columns


def test_pocs_square_invertible_single_sweep():
    # with A invertible the affine set is the whole space, so the start
    # vector sign(x_star) is already feasible
    rng = np.random.default_rng(3)
    a = rng.standard_normal((8, 8)) + 4.0 * np.eye(8)
    x = np.zeros(8)
    x[2], x[5] = 1.5, -0.5
    w, converged, iters, resid = pocs_sign_vector(a, x, np.zeros(8))
    assert converged
    assert iters == 1
    assert resid < 1e-12
    np.testing.assert_allclose(w, np.sign(x), atol=1e-12)


def test_pocs_single_row_aligned_with_one_sparse_target():
    a = np.array([[2.0, 0.0, 0.0]])
    x = np.array([1.5, 0.0, 0.0])
    w, converged, iters, resid = pocs_sign_vector(a, x, x / np.linalg.norm(x))
    assert converged
    np.testing.assert_allclose(w, [1.0, 0.0, 0.0], atol=1e-12)


def test_pocs_steps_nonincreasing():
    # alternating projections between convex sets contract, so the sweep
    # steps cannot grow; replay the iteration with the public pieces
    a = gen_gaussian(12, 30, seed=6)
    x, _ = gen_sparse_signal(30, 4, seed=7)
    x_hat = x / np.linalg.norm(x)
    u = orthonormal_range_basis(a)
    sup = x != 0

    def project_box(v):
        out = np.clip(v, -1.0, 1.0)
        out[sup] = np.sign(x[sup])
        return out

    w = np.sign(x)
    steps = []
    for _ in range(60):
        w_new = project_box(x_hat + u @ (u.T @ (w - x_hat)))
        steps.append(np.linalg.norm(w_new - w))
        w = w_new
    diffs = np.diff(np.array(steps))
    assert np.all(diffs <= 1e-12)


def test_pocs_output_in_sign_box():
    p, res, lam = planted(1)
    x = p.x_true
    assert res.converged
    assert res.range_residual <= 1e-8
    sup = x != 0
    np.testing.assert_array_equal(res.w[sup], np.sign(x[sup]))
    assert np.max(np.abs(res.w[~sup])) <= 1.0 + 1e-12


def test_planted_point_is_prox_gradient_fixed_point():
    for seed in range(4):
        p, res, lam = planted(seed, gamma=0.01)
        assert res.converged
        x = p.x_true
        g = gradient(p.A, p.b, x)
        out = prox_l1_al2(x - lam * g, lam * p.penalty.gamma, p.penalty.alpha)
        np.testing.assert_allclose(out.x, x, atol=1e-8)
        assert out.case_id == 1


def test_planted_point_stationarity_report():
    p, res, lam = planted(2)
    rep = check_stationarity(p, p.x_true)
    assert rep.residual <= 1e-7
    assert rep.is_fixed_point
    assert rep.flags["support_alignment"] is True


def test_planted_point_attracts_nearby_starts():
    p, res, lam = planted(5, gamma=0.01)
    rng = np.random.default_rng(11)
    x0 = p.x_true + 1e-3 * rng.standard_normal(p.x_true.size)
    t = fbs_solve(p, SolverConfig(lam=lam, tol=1e-12, max_iter_factor=40), x0=x0)
    assert t.converged
    assert np.linalg.norm(t.x - p.x_true) / np.linalg.norm(p.x_true) < 1e-8


def test_construct_b_matches_first_order_condition():
    p, res, lam = planted(7, alpha=1.0, gamma=0.05)
    x = p.x_true
    xnorm = np.linalg.norm(x)
    lhs = p.A.T @ (p.b - p.A @ x)
    rhs = p.penalty.gamma * (res.w - p.penalty.alpha * x / xnorm)
    np.testing.assert_allclose(lhs, rhs, atol=1e-7 * p.penalty.gamma)


def test_construct_b_linear_in_gamma():
    a = gen_gaussian(10, 25, seed=8)
    x, _ = gen_sparse_signal(25, 3, seed=9)
    x_hat = x / np.linalg.norm(x)
    w, converged, _, _ = pocs_sign_vector(a, x, x_hat)
    assert converged
    b1 = construct_b(a, x, w, PenaltySpec(alpha=1.0, gamma=0.02))
    b2 = construct_b(a, x, w, PenaltySpec(alpha=1.0, gamma=0.06))
    np.testing.assert_allclose(b2 - a @ x, 3.0 * (b1 - a @ x), atol=1e-12)


def test_construct_validation():
    a = gen_gaussian(4, 10, seed=9)
    with pytest.raises(ValueError):
        construct_b(a, np.zeros(10), np.zeros(10), PenaltySpec())
    x = np.zeros(10)
    x[0] = 1e-4
    with pytest.raises(ValueError, match="below"):
        construct_instance(a, x, 1.0, PenaltySpec(alpha=1.0, gamma=1.0))
    with pytest.raises(ValueError):
        construct_instance(a, np.ones(10), 0.0, PenaltySpec())


def test_construct_deterministic():
    p1, r1, _ = planted(4)
    p2, r2, _ = planted(4)
    np.testing.assert_array_equal(r1.w, r2.w)
    np.testing.assert_array_equal(p1.b, p2.b)
    assert r1.pocs_iterations == r2.pocs_iterations
