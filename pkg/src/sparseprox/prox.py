"""Closed-form proximal operator of the penalty ||x||_1 - alpha*||x||_2.

The scaled proximal problem solved here is

    minimize_x  ||x||_1 - alpha*||x||_2 + ||x - y||_2^2 / (2*lam)

which admits an exact solution split into four cases on ||y||_inf:

    case 1:  ||y||_inf > lam                 dense shrink-then-stretch
    case 2:  ||y||_inf = lam                 mass alpha*lam on a peak entry
    case 3:  (1-alpha)*lam < ||y||_inf < lam 1-sparse solution
    case 4:  ||y||_inf <= (1-alpha)*lam      zero

With alpha = 0 the operator reduces to plain soft shrinkage.  For alpha > 1
the zero vector is never returned (case 4 is unreachable).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# relative slack used to classify ||y||_inf against the case boundaries
BOUNDARY_RTOL = 1e-12

TIE_RULES = ("lowest", "report-all-maxima")


@dataclass(frozen=True)
class PenaltySpec:
    """Weights of the regularizer gamma*(||x||_1 - alpha*||x||_2)."""

    alpha: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise ValueError(f"gamma must be finite and > 0, got {self.gamma}")


@dataclass(frozen=True)
class ProxResult:
    """Output of :func:`prox_l1_al2`.

    x            the selected minimizer
    case_id      which of the four cases classified the input (1..4)
    is_unique    False exactly when the minimizer is not unique (peak ties
                 in cases 2 and 3, or an undetermined sign at y = 0)
    tie_indices  indices attaining ||y||_inf, lowest first
    """

    x: np.ndarray
    case_id: int
    is_unique: bool
    tie_indices: tuple[int, ...]


def soft_shrink(y, lam):
    """Componentwise soft shrinkage sign(y) * max(|y| - lam, 0)."""
    if lam < 0:
        raise ValueError(f"shrinkage threshold must be >= 0, got {lam}")
    y = np.asarray(y, dtype=float)
    return np.sign(y) * np.maximum(np.abs(y) - lam, 0.0)


def _classify(ymax, lam, alpha):
    # boundaries compared with relative slack so near-ties are stable
    tol = BOUNDARY_RTOL * max(lam, ymax)
    if ymax > lam + tol:
        return 1
    if ymax >= lam - tol:
        return 2
    if ymax > (1.0 - alpha) * lam + tol:
        return 3
    return 4


def prox_l1_al2(y, lam, alpha=1.0, tie_rule="lowest"):
    """Exact minimizer of ||x||_1 - alpha*||x||_2 + ||x - y||^2/(2*lam).

    Parameters
    ----------
    y : array_like
        Anchor point of the proximal problem.
    lam : float
        Positive proximal weight.
    alpha : float
        Nonnegative weight of the subtracted euclidean norm.
    tie_rule : str
        Peak-tie handling; both accepted values place the mass on the
        lowest tied index, "report-all-maxima" is a hint for callers that
        display ``tie_indices``.

    Returns
    -------
    ProxResult
    """
    if tie_rule not in TIE_RULES:
        raise ValueError(f"tie_rule must be one of {TIE_RULES}, got {tie_rule!r}")
    if not np.isfinite(lam) or lam <= 0:
        raise ValueError(f"lam must be finite and > 0, got {lam}")
    if not np.isfinite(alpha) or alpha < 0:
        raise ValueError(f"alpha must be finite and >= 0, got {alpha}")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.ndim != 1:
        raise ValueError("y must be a vector")

    ay = np.abs(y)
    ymax = float(ay.max()) if y.size else 0.0
    ties = tuple(np.flatnonzero(ay >= ymax - BOUNDARY_RTOL * max(lam, ymax)).tolist())
    case_id = _classify(ymax, lam, alpha)

    if alpha == 0.0:
        # reduces exactly to soft shrinkage, which is always unique
        return ProxResult(soft_shrink(y, lam), case_id, True, ties)

    if case_id == 1:
        z = soft_shrink(y, lam)
        nz = float(np.linalg.norm(z))
        x = z * ((nz + alpha * lam) / nz)
        return ProxResult(x, 1, True, ties)

    if case_id == 2:
        x = np.zeros_like(y)
        i = ties[0]
        x[i] = np.sign(y[i]) * alpha * lam
        return ProxResult(x, 2, len(ties) == 1, ties)

    if case_id == 3:
        x = np.zeros_like(y)
        i = ties[0]
        sgn = np.sign(y[i]) if y[i] != 0 else 1.0
        x[i] = sgn * (ymax + (alpha - 1.0) * lam)
        return ProxResult(x, 3, len(ties) == 1 and ymax > 0, ties)

    return ProxResult(np.zeros_like(y), 4, True, ties)


def eval_penalty(x, pen):
    """Value of gamma*(||x||_1 - alpha*||x||_2)."""
    x = np.asarray(x, dtype=float)
    return pen.gamma * (np.abs(x).sum() - pen.alpha * np.linalg.norm(x))


def eval_moreau_objective(x, y, lam, alpha):
    """Objective of the proximal problem solved by :func:`prox_l1_al2`."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    fit = float(np.dot(x - y, x - y)) / (2.0 * lam)
    return np.abs(x).sum() - alpha * np.linalg.norm(x) + fit


def prox_descent_coefficient(alpha, lam, x_norm):
    """Coefficient c(alpha, lam, ||x*||) in the prox descent inequality.

    For x* = prox(y) and any x it holds that

        M(x*) - M(x) <= c * ||x* - x||_2^2,      with
        c = min(alpha/(2*||x*||_2) - 1/(2*lam), 0)

    where M is the objective of :func:`eval_moreau_objective` and the ratio
    alpha/0 is read as 0 when alpha = 0 and +inf otherwise.
    """
    if x_norm > 0:
        return min(alpha / (2.0 * x_norm) - 1.0 / (2.0 * lam), 0.0)
    if alpha == 0:
        return -1.0 / (2.0 * lam)
    return 0.0
