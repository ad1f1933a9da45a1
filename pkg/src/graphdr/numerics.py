"""Dense linear algebra helpers and the seeded random generator.

Matrices are plain ``float64`` numpy arrays. The functions here add the
contract checks (shapes, symmetry, size caps) and the deterministic
conventions (ascending spectra, sign fixing, clamped distances) that the
rest of the package relies on.
"""
from __future__ import annotations

import numpy as np
from dataclasses import dataclass

from .errors import ContractError, ConvergenceError, ShapeError, SingularityError

__all__ = [
    "EigenDecomposition",
    "make_rng",
    "matmul",
    "symmetric_eig",
    "svd_thin",
    "spd_inverse_sqrt_small",
    "pairwise_sq_distances",
    "solve_linear",
    "fix_column_signs",
]

MAX_EIG_DIM = 5000
MAX_SMALL_DIM = 16


def make_rng(seed: int) -> np.random.Generator:
    """Return the package's pinned generator (PCG64) for ``seed``.

    Every stochastic routine takes a generator produced here, so equal seeds
    give equal streams on every platform numpy supports.
    """
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True)
class EigenDecomposition:
    values: np.ndarray
    vectors: np.ndarray


def _as_matrix(a, name="a") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def matmul(a, b) -> np.ndarray:
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _check_symmetric(a: np.ndarray, rtol: float = 1e-10) -> None:
    if a.shape[0] != a.shape[1]:
        raise ContractError(f"matrix must be square, got {a.shape}")
    scale = max(np.abs(a).max(initial=0.0), 1.0)
    if np.abs(a - a.T).max(initial=0.0) > rtol * scale:
        raise ContractError("matrix is not symmetric")


def symmetric_eig(a) -> EigenDecomposition:
    """Full eigendecomposition of a symmetric matrix, eigenvalues ascending."""
    a = _as_matrix(a)
    _check_symmetric(a)
    if a.shape[0] > MAX_EIG_DIM:
        raise ContractError(f"dimension {a.shape[0]} exceeds {MAX_EIG_DIM}")
    sym = 0.5 * (a + a.T)
    try:
        values, vectors = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(str(exc)) from exc
    return EigenDecomposition(values, vectors)


def fix_column_signs(v: np.ndarray) -> np.ndarray:
    """Flip each column so that its largest-magnitude entry is positive."""
    v = np.array(v, dtype=np.float64, copy=True)
    if v.size == 0:
        return v
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def svd_thin(a, k: int):
    """Top-``k`` singular triples from the eigendecomposition of the smaller Gram matrix.

    Returns ``(u, s, v)`` with ``a ≈ u @ diag(s) @ v.T`` at rank ``k``.
    """
    a = _as_matrix(a)
    n, p = a.shape
    if not 1 <= k <= min(n, p):
        raise ContractError(f"k={k} outside [1, {min(n, p)}]")
    if p <= n:
        eig = symmetric_eig(a.T @ a)
        order = np.argsort(eig.values, kind="stable")[::-1][:k]
        v = eig.vectors[:, order]
        # |A v| instead of sqrt(lambda): exact zeros stay near machine precision
        av = a @ v
        s = np.linalg.norm(av, axis=0)
        u = _complete_singular_vectors(av, s, n)
    else:
        eig = symmetric_eig(a @ a.T)
        order = np.argsort(eig.values, kind="stable")[::-1][:k]
        u = eig.vectors[:, order]
        atu = a.T @ u
        s = np.linalg.norm(atu, axis=0)
        v = _complete_singular_vectors(atu, s, p)
    return u, s, v


def _complete_singular_vectors(w: np.ndarray, s: np.ndarray, dim: int) -> np.ndarray:
    # Columns with (numerically) zero singular value are completed to an
    # orthonormal set by Gram-Schmidt against the standard basis.
    tol = max(s.max(initial=0.0), 1.0) * 1e-12
    out = np.zeros_like(w)
    good = s > tol
    out[:, good] = w[:, good] / s[good]
    for j in np.flatnonzero(~good):
        for e in range(dim):
            cand = np.zeros(dim)
            cand[e] = 1.0
            cand -= out[:, :j] @ (out[:, :j].T @ cand)
            norm = np.linalg.norm(cand)
            if norm > 1e-6:
                out[:, j] = cand / norm
                break
    return out


def spd_inverse_sqrt_small(a, eps: float = 0.0) -> np.ndarray:
    """``(a + eps*I)^(-1/2)`` for a small symmetric positive semidefinite matrix."""
    a = _as_matrix(a)
    _check_symmetric(a, rtol=1e-8)
    d = a.shape[0]
    if d > MAX_SMALL_DIM:
        raise ContractError(f"dimension {d} exceeds {MAX_SMALL_DIM}")
    eig = symmetric_eig(a + eps * np.eye(d))
    if eig.values.min(initial=np.inf) <= 0:
        raise SingularityError("matrix is not positive definite after regularization")
    return (eig.vectors / np.sqrt(eig.values)) @ eig.vectors.T


def spd_sqrt_small(a) -> np.ndarray:
    """Principal square root of a small symmetric PSD matrix (tiny negatives clamped)."""
    a = _as_matrix(a)
    _check_symmetric(a, rtol=1e-8)
    if a.shape[0] > MAX_SMALL_DIM:
        raise ContractError(f"dimension {a.shape[0]} exceeds {MAX_SMALL_DIM}")
    eig = symmetric_eig(a)
    return (eig.vectors * np.sqrt(np.clip(eig.values, 0.0, None))) @ eig.vectors.T


def pairwise_sq_distances(x, y=None) -> np.ndarray:
    """Squared Euclidean distances via the expanded form, negatives clamped to 0."""
    x = _as_matrix(x, "x")
    sx = np.einsum("ij,ij->i", x, x)
    if y is None:
        d = sx[:, None] + sx[None, :] - 2.0 * (x @ x.T)
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
    else:
        y = _as_matrix(y, "y")
        sy = np.einsum("ij,ij->i", y, y)
        d = sx[:, None] + sy[None, :] - 2.0 * (x @ y.T)
    np.maximum(d, 0.0, out=d)
    return d


def solve_linear(a, b) -> np.ndarray:
    a = _as_matrix(a, "a")
    b = np.asarray(b, dtype=np.float64)
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"a must be square, got {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ShapeError(f"b has {b.shape[0]} rows, expected {a.shape[0]}")
    if a.size and np.linalg.cond(a) > 1.0 / np.finfo(np.float64).eps:
        raise SingularityError("matrix is singular to working precision")
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularityError("solution is not finite")
    return x
