"""Dense real-matrix kernels shared by all other modules.

Structure tests (symmetry, skewness, positive semidefiniteness), spectral
quantities, the symmetric PSD square root, orthonormal kernel bases, and the
Cayley transform ``v -> (I - lam*K)(I + lam*K)^{-1} v``.

All functions are pure: they never mutate their arguments and hold no global
state, so they are safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotPSD, SingularCayley


@dataclass(frozen=True)
class Tolerance:
    """Absolute/relative threshold pair for rank and structure decisions.

    ``rel`` is applied relative to the largest singular value (or matrix
    scale) of the operand, ``abs`` as a floor. They must not both be zero.
    """

    abs: float = 1e-14
    rel: float = 1e-10

    def __post_init__(self):
        if self.abs < 0 or self.rel < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.abs == 0 and self.rel == 0:
            raise ValueError("abs and rel tolerance must not both be zero")

    def threshold(self, scale: float) -> float:
        return self.rel * scale + self.abs


DEFAULT_TOL = Tolerance()


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionMismatch(f"expected a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def structure_check(a, kind: str, tol: Tolerance = DEFAULT_TOL, b=None):
    """Test a structural matrix property up to ``tol``.

    Parameters
    ----------
    a : array_like
        Square matrix (first operand for ``"sym-pair"``).
    kind : {"symmetric-psd", "skew", "sym-pair"}
        Property to test. ``"sym-pair"`` checks ``a^T b = b^T a >= 0`` and
        requires ``b``.
    tol : Tolerance
        Entry/eigenvalue threshold, scaled by the matrix magnitude.
    b : array_like, optional
        Second operand for ``"sym-pair"``.

    Returns
    -------
    (bool, str)
        Flag plus a diagnostic naming the first violated entry or the
        offending eigenvalue; "ok" when the property holds.
    """
    a = _as_matrix(a)
    if kind == "sym-pair":
        if b is None:
            raise ValueError("kind 'sym-pair' needs a second matrix")
        b = _as_matrix(b)
        if a.shape != b.shape or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(
                f"sym-pair needs square matrices of equal shape, got {a.shape} and {b.shape}"
            )
        return _check_sym_psd(a.T @ b, tol, label="A^T B")
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"'{kind}' check needs a square matrix, got {a.shape}")
    if kind == "symmetric-psd":
        return _check_sym_psd(a, tol, label="A")
    if kind == "skew":
        scale = max(np.abs(a).max(), 1.0)
        dev = a + a.T
        i, j = np.unravel_index(np.abs(dev).argmax(), dev.shape)
        if abs(dev[i, j]) > tol.threshold(scale):
            return False, f"A[{i},{j}] + A[{j},{i}] = {dev[i, j]:.3e} (not skew)"
        return True, "ok"
    raise ValueError(f"unknown structure kind {kind!r}")


def _check_sym_psd(a: np.ndarray, tol: Tolerance, label: str):
    scale = max(np.abs(a).max(), 1.0)
    dev = a - a.T
    i, j = np.unravel_index(np.abs(dev).argmax(), dev.shape)
    if abs(dev[i, j]) > tol.threshold(scale):
        return False, f"{label}[{i},{j}] - {label}[{j},{i}] = {dev[i, j]:.3e} (not symmetric)"
    eigs = np.linalg.eigvalsh(0.5 * (a + a.T))
    if eigs[0] < -tol.threshold(scale):
        return False, f"{label} has eigenvalue {eigs[0]:.3e} < 0 (not PSD)"
    return True, "ok"


def spectral_norm(a) -> float:
    """Largest singular value (operator 2-norm)."""
    a = _as_matrix(a)
    return float(np.linalg.norm(a, 2))


def sym_sqrt(a, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Symmetric PSD square root ``S`` with ``S @ S = A``.

    The input is symmetrized first and eigenvalues in ``[-thr, 0)`` are
    clamped to zero; an eigenvalue below ``-thr`` raises :class:`NotPSD`.
    """
    a = _as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"sym_sqrt needs a square matrix, got {a.shape}")
    sym = 0.5 * (a + a.T)
    eigs, vecs = np.linalg.eigh(sym)
    thr = tol.threshold(max(abs(eigs[0]), abs(eigs[-1]), 1.0))
    if eigs[0] < -thr:
        raise NotPSD(f"eigenvalue {eigs[0]:.3e} below -{thr:.1e}")
    eigs = np.clip(eigs, 0.0, None)
    return (vecs * np.sqrt(eigs)) @ vecs.T


def kernel_basis(a, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of the numerical kernel of ``a``.

    Returns an ``(n, k)`` matrix whose columns span the right kernel
    (singular values at or below ``tol.rel * sigma_max + tol.abs``);
    ``k = 0`` when the kernel is trivial. The kernel of an intersection
    ``ker A1 cap ker A2`` is obtained by stacking the matrices row-wise
    before the call.
    """
    a = _as_matrix(a)
    n = a.shape[1]
    sv = np.linalg.svd(a, compute_uv=False)
    smax = sv[0] if sv.size else 0.0
    thr = tol.threshold(smax)
    rank = int(np.sum(sv > thr))
    if rank == n:
        return np.zeros((n, 0))
    _, _, vt = np.linalg.svd(a, full_matrices=True)
    return vt[rank:].T.copy()


def numerical_rank(a, tol: Tolerance = DEFAULT_TOL) -> int:
    """Number of singular values above ``tol.rel * sigma_max + tol.abs``."""
    a = _as_matrix(a)
    sv = np.linalg.svd(a, compute_uv=False)
    smax = sv[0] if sv.size else 0.0
    return int(np.sum(sv > tol.threshold(smax)))


def cayley_apply(k, lam: float, v) -> np.ndarray:
    """Apply ``(I - lam*K)(I + lam*K)^{-1}`` to a vector or stacked columns.

    Evaluated with a single linear solve: ``(I + lam*K) w = v`` followed by
    ``v - 2*lam*K w``, which is algebraically identical to the product and
    avoids forming the inverse. Well defined whenever ``K + K^T >= 0``.

    Parameters
    ----------
    k : array_like
        Square matrix.
    lam : float
        Positive shift.
    v : array_like
        Vector of length n, or ``(n, m)`` array treated column-wise.

    Raises
    ------
    SingularCayley
        If ``I + lam*K`` is numerically singular.
    """
    k = _as_matrix(k)
    n = k.shape[0]
    if k.shape[0] != k.shape[1]:
        raise DimensionMismatch(f"cayley_apply needs a square matrix, got {k.shape}")
    if lam <= 0:
        raise ValueError("lam must be positive")
    v = np.asarray(v, dtype=float)
    if v.shape[0] != n:
        raise DimensionMismatch(f"vector length {v.shape[0]} does not match matrix size {n}")
    m = np.eye(n) + lam * k
    try:
        w = np.linalg.solve(m, v)
    except np.linalg.LinAlgError as exc:
        raise SingularCayley(f"I + lam*K is singular (lam={lam})") from exc
    return v - 2.0 * lam * (k @ w)
