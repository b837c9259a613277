"""Problem generators, matrix utilities, and instance assembly.

Matrix families:

  gaussian         i.i.d. standard normal entries, optional normalization
  partial_dct      random distinct rows of the orthonormal DCT-II matrix
  oversampled_dct  columns (1/sqrt(n)) * cos(2*pi*w*j/F), j = 1..n, with a
                   shared uniform [0, 1) frequency sample w per row; larger
                   F packs neighboring columns closer together (coherent)

Instances carry the measurement pair (A, b), the penalty weights, and the
ground truth when it is known.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .prox import PenaltySpec


class ConvergenceError(RuntimeError):
    """An iterative routine hit its iteration cap before converging."""


@dataclass
class ProblemInstance:
    """Least-squares data term 0.5*||A x - b||^2 plus a sparsity penalty."""

    A: np.ndarray
    b: np.ndarray
    penalty: PenaltySpec = field(default_factory=PenaltySpec)
    x_true: np.ndarray | None = None
    sigma: float = 0.0

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.A.ndim != 2:
            raise ValueError("A must be a 2-d array")
        if self.b.shape != (self.A.shape[0],):
            raise ValueError(
                f"b has shape {self.b.shape}, expected ({self.A.shape[0]},)"
            )
        if not (np.isfinite(self.A).all() and np.isfinite(self.b).all()):
            raise ValueError("A and b must be finite")
        if self.x_true is not None:
            self.x_true = np.asarray(self.x_true, dtype=float).ravel()
            if self.x_true.shape != (self.A.shape[1],):
                raise ValueError("x_true length must match the column count of A")

    @property
    def shape(self):
        return self.A.shape


def gen_gaussian(m, n, seed, normalize="spectral"):
    """Gaussian sensing matrix.

    normalize:
      "spectral"      whole matrix scaled to unit spectral norm
      "columns"       each column centered and scaled to unit sample variance
      "unit_columns"  each column centered and scaled to unit euclidean norm
      "none"          raw standard normal entries
    """
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, n))
    if normalize == "spectral":
        return spectral_normalize(a)
    if normalize == "columns":
        a = a - a.mean(axis=0, keepdims=True)
        return a / np.sqrt((a * a).mean(axis=0, keepdims=True))
    if normalize == "unit_columns":
        a = a - a.mean(axis=0, keepdims=True)
        return a / np.linalg.norm(a, axis=0, keepdims=True)
    if normalize == "none":
        return a
    raise ValueError(f"unknown normalize mode {normalize!r}")


def gen_partial_dct(m, n, seed):
    """m distinct rows of the n-point orthonormal DCT-II matrix."""
    if m > n:
        raise ValueError(f"partial DCT needs m <= n, got {m} > {n}")
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(n, size=m, replace=False))
    cols = np.arange(n)
    a = np.cos(np.pi * (2 * cols[None, :] + 1) * rows[:, None] / (2.0 * n))
    scale = np.where(rows == 0, np.sqrt(1.0 / n), np.sqrt(2.0 / n))
    return a * scale[:, None]


def gen_oversampled_dct(m, n, F, seed):
    """Coherent oversampled DCT frame; F controls the oversampling factor."""
    if F <= 0:
        raise ValueError(f"F must be positive, got {F}")
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.0, 1.0, size=m)
    j = np.arange(1, n + 1)
    return np.cos(2.0 * np.pi * np.outer(w, j) / F) / np.sqrt(n)


def gen_sparse_signal(n, k, seed):
    """k-sparse vector with standard normal entries on a uniform support.

    Returns (x, support) with the support indices sorted ascending.
    """
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(n, size=k, replace=False))
    x = np.zeros(n)
    x[support] = rng.standard_normal(k)
    return x, support


def make_instance(A, x_true, sigma, penalty, seed=None):
    """Assemble b = A x_true + sigma * noise into a ProblemInstance."""
    A = np.asarray(A, dtype=float)
    x_true = np.asarray(x_true, dtype=float).ravel()
    b = A @ x_true
    if sigma > 0:
        rng = np.random.default_rng(seed)
        b = b + sigma * rng.standard_normal(A.shape[0])
    return ProblemInstance(A=A, b=b, penalty=penalty, x_true=x_true, sigma=sigma)


def power_iteration(A, tol=1e-10, max_iter=10000):
    """Largest singular value of A by power iteration on the small Gram side.

    Raises ConvergenceError if successive Rayleigh quotients have not
    stabilized to relative tolerance tol within max_iter products.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    gram_small = m <= n

    def apply_gram(v):
        return A @ (A.T @ v) if gram_small else A.T @ (A @ v)

    size = m if gram_small else n
    v = np.ones(size) / np.sqrt(size)
    lam_prev = 0.0
    for _ in range(max_iter):
        w = apply_gram(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        lam = float(v @ w)
        v = w / nw
        if abs(lam - lam_prev) <= tol * abs(lam):
            return float(np.sqrt(lam))
        lam_prev = lam
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations (tol={tol})"
    )


def lipschitz_constant(A):
    """Gradient Lipschitz constant of 0.5*||A x - b||^2, i.e. sigma_max(A)^2."""
    return power_iteration(A) ** 2


def spectral_normalize(A):
    """Scale A to unit spectral norm."""
    A = np.asarray(A, dtype=float)
    smax = power_iteration(A)
    if smax == 0.0:
        raise ValueError("cannot normalize a zero matrix")
    return A / smax


def oracle_mse(A, support, sigma):
    """sigma^2 * trace((A_S^T A_S)^{-1}): least-squares error knowing the support."""
    A = np.asarray(A, dtype=float)
    support = np.asarray(support, dtype=int)
    sub = A[:, support]
    gram = sub.T @ sub
    try:
        inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"support gram matrix is singular: {exc}") from exc
    return float(sigma**2 * np.trace(inv))


def save_matrix_csv(path, a):
    """Write a matrix (or a vector, stored as a single column) to CSV.

    First line holds "rows,cols"; the remaining lines hold the entries in
    row-major order, one matrix row per line.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError("only vectors and matrices are supported")
    with open(path, "w") as fh:
        fh.write(f"{a.shape[0]},{a.shape[1]}\n")
        for row in a:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_matrix_csv(path):
    """Read a matrix written by save_matrix_csv; always returns a 2-d array."""
    with open(path) as fh:
        header = fh.readline().strip()
        try:
            rows, cols = (int(p) for p in header.split(","))
        except ValueError as exc:
            raise ValueError(f"bad matrix header {header!r} in {path}") from exc
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape != (rows, cols):
        raise ValueError(
            f"matrix body {data.shape} does not match header ({rows},{cols}) in {path}"
        )
    if not np.isfinite(data).all():
        raise ValueError(f"non-finite entries in {path}")
    return data


def load_vector_csv(path):
    """Read a single-column (or single-row) CSV as a flat vector."""
    a = load_matrix_csv(path)
    if 1 not in a.shape:
        raise ValueError(f"{path} holds a {a.shape} matrix, expected a vector")
    return a.ravel()
