"""Construct instances whose global minimizer is known in closed form.

Given a measurement matrix A with full row rank, a target sparse vector
x_star, and a penalty (alpha, gamma), the right-hand side b is chosen so that
x_star satisfies the first-order condition

  A^T (b - A x_star) = gamma * (w - alpha * x_star / ||x_star||)

for some w with w_i = sign(x_star_i) on the support and |w_i| <= 1 off it.
Inverting the closed-form prox shows this makes x_star an exact fixed point
of the forward-backward step at every stepsize lam with
alpha * lam * gamma < ||x_star||, so the planted point can be benchmarked
against directly.

The vector w must lie in the intersection of the sign-consistency box and
the affine set x_hat + range(A^T) with x_hat = alpha * x_star / ||x_star||.
It is found by alternating projections (POCS); when the intersection is
empty the iteration stalls at a positive range residual and the instance is
reported as not converged so callers can discard it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .problems import ProblemInstance
from .prox import PenaltySpec

_RANGE_TOL = 1e-8


@dataclass(frozen=True)
class ConstructionResult:
    """Outcome of planting a known minimizer.

    w                 sign-consistent vector from the alternating projections
    b                 right-hand side giving the planted fixed point
    converged         POCS reached the feasible intersection within tolerance
    pocs_iterations   alternating projection sweeps used
    range_residual    distance of w - x_hat from range(A^T)
    """

    w: np.ndarray
    b: np.ndarray
    converged: bool
    pocs_iterations: int
    range_residual: float


def orthonormal_range_basis(A):
    """Orthonormal basis of range(A^T) for A with full row rank.

    Returns an n x m matrix with orthonormal columns spanning the row space.
    Raises ValueError when the rows are not linearly independent.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    if m > n:
        raise ValueError("matrix must have full row rank (needs rows <= cols)")
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[-1] <= 1e-10 * s[0]:
        raise ValueError("matrix must have full row rank")
    return vt.T


def _project_sign_box(w, x_star):
    """Project onto {w: w_S = sign(x_star_S), |w_i| <= 1 off the support}."""
    out = np.clip(w, -1.0, 1.0)
    sup = x_star != 0
    out[sup] = np.sign(x_star[sup])
    return out


def pocs_sign_vector(A, x_star, x_hat, tol=1e-10, max_iter_factor=10):
    """Alternating projections for the sign-consistency vector w.

    Projects back and forth between the affine set x_hat + range(A^T) and
    the sign box of x_star, starting from sign(x_star).  Stops when the sweep
    step drops below tol or after max_iter_factor * n sweeps.  Returns
    (w, converged, iterations, range_residual); convergence additionally
    requires the final w to sit within 1e-8 of the affine set, which fails
    when the intersection is empty.
    """
    A = np.asarray(A, dtype=float)
    x_star = np.asarray(x_star, dtype=float).ravel()
    x_hat = np.asarray(x_hat, dtype=float).ravel()
    n = A.shape[1]
    if x_star.size != n or x_hat.size != n:
        raise ValueError("x_star and x_hat must have length A.shape[1]")
    U = orthonormal_range_basis(A)

    w = np.sign(x_star)
    max_iter = max_iter_factor * n
    iterations = 0
    step = np.inf
    for iterations in range(1, max_iter + 1):
        affine = x_hat + U @ (U.T @ (w - x_hat))
        w_new = _project_sign_box(affine, x_star)
        step = float(np.linalg.norm(w_new - w))
        w = w_new
        if step < tol:
            break

    d = w - x_hat
    range_residual = float(np.linalg.norm(d - U @ (U.T @ d)))
    converged = step < tol and range_residual <= _RANGE_TOL
    return w, converged, iterations, range_residual


def construct_b(A, x_star, w, penalty):
    """Right-hand side planting x_star as a prox-gradient fixed point.

    Solves A^T v = gamma * (w - alpha * x_star / ||x_star||) through the
    Gram system of the full-row-rank A and returns b = A x_star + v.
    """
    A = np.asarray(A, dtype=float)
    x_star = np.asarray(x_star, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    xnorm = float(np.linalg.norm(x_star))
    if xnorm == 0.0:
        raise ValueError("x_star must be nonzero")
    x_hat = penalty.alpha * x_star / xnorm
    y = scipy.linalg.solve(A @ A.T, A @ (w - x_hat), assume_a="pos")
    return A @ x_star + penalty.gamma * y


def construct_instance(A, x_star, lam, penalty=None, tol=1e-10, max_iter_factor=10):
    """Build a ProblemInstance with x_star planted as a fixed point at lam.

    Runs POCS for the sign vector, assembles b, and returns
    (ProblemInstance, ConstructionResult).  Callers should discard instances
    whose result.converged is False.  Raises ValueError when
    alpha * lam * gamma >= ||x_star||, where the fixed-point inversion
    leaves the shrinkage regime.
    """
    penalty = penalty if penalty is not None else PenaltySpec()
    A = np.asarray(A, dtype=float)
    x_star = np.asarray(x_star, dtype=float).ravel()
    xnorm = float(np.linalg.norm(x_star))
    if xnorm == 0.0:
        raise ValueError("x_star must be nonzero")
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    if penalty.alpha * lam * penalty.gamma >= xnorm:
        raise ValueError(
            "alpha * lam * gamma must stay below ||x_star|| for the planted "
            "fixed point to keep its support"
        )
    x_hat = penalty.alpha * x_star / xnorm
    w, converged, iterations, range_residual = pocs_sign_vector(
        A, x_star, x_hat, tol=tol, max_iter_factor=max_iter_factor
    )
    b = construct_b(A, x_star, w, penalty)
    result = ConstructionResult(
        w=w,
        b=b,
        converged=converged,
        pocs_iterations=iterations,
        range_residual=range_residual,
    )
    p = ProblemInstance(A=A, b=b, x_true=x_star, penalty=penalty)
    return p, result
